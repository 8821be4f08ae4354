#include "egofuse/align.h"

#include "egofuse/error.h"
#include "egofuse/io.h"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace egofuse {

namespace {

struct MotionPair {
  RigidTransform a; // device relative motion
  RigidTransform b; // head segment relative motion
};

std::vector<MotionPair> relativePairs(
    const Trajectory& device, const Trajectory& head, TimeNs spacing) {
  EGOFUSE_CHECK(spacing > 0, ErrorCode::InvalidArgument, "pair spacing must be positive");
  EGOFUSE_CHECK(
      device.size() >= 2 && head.size() >= 2,
      ErrorCode::InsufficientOverlap,
      "hand-eye needs at least two samples per trajectory");
  const TimeNs start = std::max(device.startTime(), head.startTime());
  const TimeNs end = std::min(device.endTime(), head.endTime());
  EGOFUSE_CHECK(
      end - start >= 2 * spacing,
      ErrorCode::InsufficientOverlap,
      "trajectories overlap for " + std::to_string(std::max<TimeNs>(end - start, 0)) +
          " ns, need at least " + std::to_string(2 * spacing));
  std::vector<MotionPair> pairs;
  RigidTransform d0 = device.interpolate(start);
  RigidTransform h0 = head.interpolate(start);
  for (TimeNs t = start + spacing; t <= end; t += spacing) {
    const RigidTransform d1 = device.interpolate(t);
    const RigidTransform h1 = head.interpolate(t);
    pairs.push_back({d0.inverse() * d1, h0.inverse() * h1});
    d0 = d1;
    h0 = h1;
  }
  return pairs;
}

} // namespace

HandEyeResult estimateHandEye(
    const Trajectory& deviceTraj, const Trajectory& headTraj, const HandEyeOptions& options) {
  const auto pairs = relativePairs(deviceTraj, headTraj, options.pairSpacingNs);

  // Rotation: log(R_A) = R_X log(R_B) for every pair.
  Mat3 cross = Mat3::Zero();
  Eigen::MatrixX3d axes(static_cast<Eigen::Index>(pairs.size()), 3);
  Eigen::Index usable = 0;
  for (const auto& p : pairs) {
    const Vec3 alpha = logMap(p.a.rotation);
    const Vec3 beta = logMap(p.b.rotation);
    if (beta.norm() < options.minPairAngleRad) {
      continue;
    }
    cross += alpha * beta.transpose();
    axes.row(usable++) = beta.normalized().transpose();
  }
  EGOFUSE_CHECK(
      usable >= 2,
      ErrorCode::DegenerateMotion,
      "only " + std::to_string(usable) + " relative motions rotate enough to define an axis");
  const Eigen::JacobiSVD<Eigen::MatrixX3d> axisSvd(axes.topRows(usable));
  const Vec3 sv = axisSvd.singularValues();
  EGOFUSE_CHECK(
      sv[1] > options.degenerateAxisRatio * sv[0],
      ErrorCode::DegenerateMotion,
      "all relative rotation axes are parallel; translation along that axis is unobservable");

  const Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 fix = Mat3::Identity();
  fix(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 rx = svd.matrixU() * fix * svd.matrixV().transpose();

  // Translation: (R_A - I) t_X = R_X t_B - t_A.
  const auto n = static_cast<Eigen::Index>(pairs.size());
  Eigen::MatrixXd lhs(3 * n, 3);
  Eigen::VectorXd rhs(3 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = pairs[static_cast<std::size_t>(i)];
    lhs.block<3, 3>(3 * i, 0) = p.a.rotation.toRotationMatrix() - Mat3::Identity();
    rhs.segment<3>(3 * i) = rx * p.b.translation - p.a.translation;
  }
  const Vec3 tx = lhs.colPivHouseholderQr().solve(rhs);

  HandEyeResult r;
  r.deviceFromHeadSegment.rotation = Quat(rx).normalized();
  r.deviceFromHeadSegment.translation = tx;
  r.pairCount = static_cast<int>(pairs.size());
  double rotSq = 0.0;
  double transSq = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = pairs[static_cast<std::size_t>(i)];
    const Quat left = p.a.rotation * r.deviceFromHeadSegment.rotation;
    const Quat right = r.deviceFromHeadSegment.rotation * p.b.rotation;
    rotSq += std::pow(geodesicAngle(left, right), 2);
    transSq += (lhs.block<3, 3>(3 * i, 0) * tx - rhs.segment<3>(3 * i)).squaredNorm();
  }
  r.rotationRmsRad = std::sqrt(rotSq / static_cast<double>(n));
  r.translationRmsM = std::sqrt(transSq / static_cast<double>(n));
  return r;
}

Trajectory jointTrajectory(
    const RigModel& rig, const MotionSequence& motion, int joint, std::string frameId) {
  EGOFUSE_CHECK(
      joint >= 0 && joint < static_cast<int>(rig.joints.size()),
      ErrorCode::OutOfRange,
      "joint index " + std::to_string(joint) + " out of range");
  std::vector<TrajectorySample> samples;
  samples.reserve(motion.frames.size());
  for (const auto& f : motion.frames) {
    samples.push_back({f.tNs, computeKinematics(rig, motion.identity, f).transform(joint)});
  }
  return Trajectory(std::move(frameId), std::move(samples));
}

MotionSequence rigidAlignSequence(
    const MotionSequence& thetaX,
    const Trajectory& deviceTraj,
    const HandEyeResult& handEye,
    const RigModel& rig) {
  thetaX.validate(rig);
  const int head = rig.named.head;
  MotionSequence out = thetaX;
  for (std::size_t k = 0; k < thetaX.frames.size(); ++k) {
    const PoseFrame& f = thetaX.frames[k];
    EGOFUSE_CHECK(
        deviceTraj.covers(f.tNs),
        ErrorCode::OutOfRange,
        "device trajectory does not cover frame " + std::to_string(k) + " at t=" +
            std::to_string(f.tNs) + " ns");
    const RigidTransform headInSource = computeKinematics(rig, thetaX.identity, f).transform(head);
    const RigidTransform worldmap =
        deviceTraj.interpolate(f.tNs) * handEye.deviceFromHeadSegment * headInSource.inverse();
    out.frames[k].root = worldmap * f.root;
    out.frames[k].root.rotation.normalize();
  }
  return out;
}

std::string handEyeToJson(const HandEyeResult& r) {
  io::Json j;
  j["device_from_headsegment"] = io::poseToJson(r.deviceFromHeadSegment);
  j["rotation_rms_rad"] = r.rotationRmsRad;
  j["translation_rms_m"] = r.translationRmsM;
  j["pair_count"] = r.pairCount;
  return j.dump(1) + "\n";
}

HandEyeResult handEyeFromJson(const std::string& text) {
  io::Json j;
  try {
    j = io::Json::parse(text);
  } catch (const io::Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("hand-eye json: ") + e.what());
  }
  HandEyeResult r;
  try {
    r.deviceFromHeadSegment =
        io::poseFromJson(j.at("device_from_headsegment"), "device_from_headsegment");
    r.rotationRmsRad = j.at("rotation_rms_rad").get<double>();
    r.translationRmsM = j.at("translation_rms_m").get<double>();
    r.pairCount = j.at("pair_count").get<int>();
  } catch (const io::Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("hand-eye json: ") + e.what());
  }
  EGOFUSE_CHECK(
      r.rotationRmsRad >= 0.0 && r.translationRmsM >= 0.0 && r.pairCount >= 2,
      ErrorCode::ParseError,
      "hand-eye json: residuals must be non-negative and pair_count at least 2");
  return r;
}

HandEyeResult readHandEye(const std::filesystem::path& path) {
  try {
    return handEyeFromJson(io::readText(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) {
      throw;
    }
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

} // namespace egofuse
