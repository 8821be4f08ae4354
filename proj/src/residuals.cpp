#include "egofuse/residuals.h"

namespace egofuse {

std::vector<RotationColumn> rotationColumns(const RigModel& rig, const Kinematics& kin, int joint) {
  std::vector<RotationColumn> out;
  for (int a = 0; a < 3; ++a) {
    out.push_back({kRootRotationCol + a, kin.offsetFrame[0].col(a)});
  }
  for (int i : rig.chain[joint]) {
    if (!rig.joints[i].rotates) {
      continue;
    }
    for (int a = 0; a < 3; ++a) {
      out.push_back({kPoseCol + rig.dofStart[i] + a, kin.dofAxes[i][a]});
    }
  }
  return out;
}

ResidualBlock pointResidual(
    const RigModel& rig,
    const Kinematics& kin,
    int joint,
    const Vec3& localOffset,
    const Vec3& target,
    double sqrtWeight,
    int frame,
    int frameCount,
    bool withIdentity,
    bool withJacobian) {
  ResidualBlock b;
  const Vec3 p = kin.rotation[joint] * localOffset + kin.position[joint];
  b.residual = sqrtWeight * (p - target);
  const auto local = pointColumns(rig, joint, withIdentity);
  b.cols = problemColumns(rig, local, frame, frameCount);
  if (withJacobian) {
    b.jacobian.resize(3, static_cast<Eigen::Index>(local.size()));
    pointJacobian(rig, kin, joint, p, withIdentity, b.jacobian);
    b.jacobian *= sqrtWeight;
  }
  return b;
}

ResidualBlock orientationResidual(
    const RigModel& rig,
    const Kinematics& kin,
    int joint,
    const Quat& targetRotation,
    double sqrtWeight,
    int frame,
    int frameCount,
    bool withJacobian) {
  ResidualBlock b;
  const Quat rj(kin.rotation[joint]);
  const Vec3 r = logMap(targetRotation.conjugate() * rj);
  b.residual = sqrtWeight * r;
  const auto axes = rotationColumns(rig, kin, joint);
  std::vector<int> local;
  local.reserve(axes.size());
  for (const auto& a : axes) {
    local.push_back(a.column);
  }
  b.cols = problemColumns(rig, local, frame, frameCount);
  if (withJacobian) {
    // A world rotation eps*a maps to a left perturbation Rt^T a of the error
    // rotation; Jl^{-1}(r) = Jr^{-1}(r)^T.
    const Mat3 m = rightJacobianInverse(r).transpose() *
        targetRotation.conjugate().toRotationMatrix();
    b.jacobian.resize(3, static_cast<Eigen::Index>(axes.size()));
    for (std::size_t c = 0; c < axes.size(); ++c) {
      b.jacobian.col(static_cast<Eigen::Index>(c)) = sqrtWeight * (m * axes[c].axis);
    }
  }
  return b;
}

void appendLimitResiduals(
    const RigModel& rig,
    const VecX& pose,
    double sqrtWeight,
    int frame,
    int frameCount,
    int term,
    bool withJacobian,
    std::vector<ResidualBlock>& out) {
  if (sqrtWeight == 0.0) {
    return;
  }
  for (int d = 0; d < rig.poseDofCount; ++d) {
    const auto& lim = rig.limits[d];
    double excess = 0.0;
    if (pose[d] > lim.max) {
      excess = pose[d] - lim.max;
    } else if (pose[d] < lim.min) {
      excess = pose[d] - lim.min;
    } else {
      continue;
    }
    ResidualBlock b;
    b.term = term;
    b.residual = Eigen::VectorXd::Constant(1, sqrtWeight * excess);
    b.cols = problemColumns(rig, {kPoseCol + d}, frame, frameCount);
    if (withJacobian) {
      b.jacobian = Eigen::MatrixXd::Constant(1, 1, sqrtWeight);
    }
    out.push_back(std::move(b));
  }
}

} // namespace egofuse
