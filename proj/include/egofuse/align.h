#pragma once

#include "egofuse/geom.h"
#include "egofuse/rig.h"

#include <filesystem>
#include <string>

namespace egofuse {

/// Constant transform between the source head segment and the headset.
struct HandEyeResult {
  RigidTransform deviceFromHeadSegment;
  double rotationRmsRad = 0.0;
  double translationRmsM = 0.0;
  int pairCount = 0;
};

struct HandEyeOptions {
  TimeNs pairSpacingNs = 500'000'000;
  // Relative rotations below this angle carry no usable axis.
  double minPairAngleRad = 1e-3;
  // Ratio of the two largest axis-spread singular values under which all
  // rotation axes count as parallel.
  double degenerateAxisRatio = 1e-3;
};

/// Solves A_i X = X B_i for X = device_from_headsegment from relative motions
/// of world_from_device (A) and sourceframe_from_headsegment (B). Rotation by
/// orthogonal Procrustes on rotation-vector axes, translation by linear least
/// squares. Throws InsufficientOverlap or DegenerateMotion.
HandEyeResult estimateHandEye(
    const Trajectory& deviceTraj, const Trajectory& headTraj, const HandEyeOptions& options = {});

/// World pose stream of one rig joint (e.g. the head) along a motion.
Trajectory jointTrajectory(
    const RigModel& rig, const MotionSequence& motion, int joint, std::string frameId);

/// Re-roots every frame so the head joint lands on
/// world_from_device(t) * device_from_headsegment; local DoFs are unchanged.
MotionSequence rigidAlignSequence(
    const MotionSequence& thetaX,
    const Trajectory& deviceTraj,
    const HandEyeResult& handEye,
    const RigModel& rig);

std::string handEyeToJson(const HandEyeResult& r);
HandEyeResult handEyeFromJson(const std::string& text);
HandEyeResult readHandEye(const std::filesystem::path& path);

} // namespace egofuse
