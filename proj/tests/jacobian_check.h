#pragma once

#include "egofuse/rig.h"
#include "egofuse/solver.h"

#include <algorithm>
#include <random>
#include <vector>

namespace egofuse::testing {

// Largest entry-wise gap between the analytic Jacobian of a residual block and
// central differences over the frame parameters it touches, relative to the
// largest finite-difference entry. `eval(frames, withJacobian)` builds the
// block with frameCount = frames.size().
template <class Eval>
double jacobianRelativeError(
    const RigModel& rig, const std::vector<PoseFrame>& frames, Eval eval, double h = 1e-6) {
  const int n = frameParamCount(rig);
  const ResidualBlock analytic = eval(frames, true);
  Eigen::MatrixXd numeric(analytic.residual.size(), static_cast<Eigen::Index>(analytic.cols.size()));
  for (std::size_t c = 0; c < analytic.cols.size(); ++c) {
    const int f = analytic.cols[c] / n;
    const int local = analytic.cols[c] % n;
    VecX step = VecX::Zero(n);
    step[local] = h;
    auto plus = frames;
    auto minus = frames;
    plus[f] = applyFrameIncrement(frames[f], step);
    minus[f] = applyFrameIncrement(frames[f], -step);
    numeric.col(static_cast<Eigen::Index>(c)) =
        (eval(plus, false).residual - eval(minus, false).residual) / (2.0 * h);
  }
  const double scale = std::max(numeric.lpNorm<Eigen::Infinity>(), 1e-8);
  return (analytic.jacobian - numeric).lpNorm<Eigen::Infinity>() / scale;
}

// Random frame: root anywhere within a few meters, pose DoFs spread a little
// beyond the limit box so hinge terms are active for some DoFs.
inline PoseFrame randomFrame(const RigModel& rig, std::mt19937_64& rng, double overshoot = 0.2) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  PoseFrame f = zeroFrame(rig);
  f.root.translation = Vec3(3.0 * n(rng), 3.0 * n(rng), 1.0 + 0.2 * n(rng));
  f.root.rotation = Quat(n(rng), n(rng), n(rng), n(rng)).normalized();
  for (int d = 0; d < rig.poseDofCount; ++d) {
    const auto& lim = rig.limits[static_cast<std::size_t>(d)];
    const double lo = lim.min - overshoot;
    const double hi = lim.max + overshoot;
    f.pose[d] = lo + (hi - lo) * u(rng);
  }
  return f;
}

} // namespace egofuse::testing
