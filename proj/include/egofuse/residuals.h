#pragma once

#include "egofuse/rig.h"
#include "egofuse/solver.h"

#include <vector>

namespace egofuse {

/// Position of a point rigidly attached to `joint` minus `target`, scaled by
/// `sqrtWeight`. Columns are StructuredProblem columns for `frame`.
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
    bool withJacobian);

/// Log(targetRotation^T * R_joint), scaled by `sqrtWeight`.
ResidualBlock orientationResidual(
    const RigModel& rig,
    const Kinematics& kin,
    int joint,
    const Quat& targetRotation,
    double sqrtWeight,
    int frame,
    int frameCount,
    bool withJacobian);

/// Hinge residuals sqrtWeight * (theta - bound) for every pose DoF outside
/// its limits. DoFs inside their limits contribute nothing.
void appendLimitResiduals(
    const RigModel& rig,
    const VecX& pose,
    double sqrtWeight,
    int frame,
    int frameCount,
    int term,
    bool withJacobian,
    std::vector<ResidualBlock>& out);

/// World axes whose infinitesimal rotations move `joint`, paired with their
/// frame-local column: root rotation columns followed by chain DoFs.
struct RotationColumn {
  int column = 0;
  Vec3 axis = Vec3::Zero();
};
std::vector<RotationColumn> rotationColumns(const RigModel& rig, const Kinematics& kin, int joint);

} // namespace egofuse
