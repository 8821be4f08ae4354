#pragma once

#include "egofuse/fuse.h"
#include "egofuse/rig.h"

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace egofuse {

/// Indices of the frames nearest to a uniform grid at `targetHz` starting at
/// the first timestamp. Throws InvalidArgument when targetHz exceeds the
/// motion's rate.
std::vector<std::size_t> downsampleIndices(const MotionSequence& motion, double targetHz);
MotionSequence downsample(const MotionSequence& motion, double targetHz);
ContactLabels selectFrames(const ContactLabels& contacts, const std::vector<std::size_t>& indices);

struct SegmentClosest {
  double distance = 0.0;
  double s = 0.0; // parameter on the first segment, [0, 1]
  double t = 0.0; // parameter on the second segment, [0, 1]
};

/// Minimum distance between segments p0-p1 and q0-q1 by the clamped
/// closest-point parametrization; parallel and point-like segments fall back
/// to endpoint clamping.
SegmentClosest segmentDistance(const Vec3& p0, const Vec3& p1, const Vec3& q0, const Vec3& q1);

/// Capsule axis in world coordinates for the given kinematics.
std::pair<Vec3, Vec3> capsuleAxis(const CapsuleSpec& c, const Kinematics& kin);
/// Radius at axis parameter u in [0, 1], linear between the two end radii.
double capsuleRadius(const CapsuleSpec& c, double u);

/// max(0, r1 + r2 - d) with radii taken at the closest axis points.
double capsulePenetration(const CapsuleSpec& a, const Kinematics& ka, const CapsuleSpec& b,
                          const Kinematics& kb);

/// Pairs of primitive indices to skip: same joint, or parent and child joints.
std::vector<std::pair<int, int>> defaultExcludedPairs(
    const RigModel& rig, const std::vector<CapsuleSpec>& primitives);

struct PerFrameMetric {
  std::vector<double> values;
  double mean = 0.0;
  int skippedFrames = 0;
};

/// Per frame, the mean over both wrists of the FK-wrist to wristband distance
/// in cm. Frames outside either trajectory are skipped and counted.
PerFrameMetric wristDistanceError(
    const MotionSequence& motion, const RigModel& rig, const Trajectory& leftBand,
    const Trajectory& rightBand);

/// Summed capsule penetration depth (meters) per frame. Throws EmptyInput for
/// an empty primitive set.
PerFrameMetric selfPenetrationError(
    const MotionSequence& motion, const RigModel& rig, const std::vector<CapsuleSpec>& primitives,
    const std::vector<std::pair<int, int>>& excludedPairs);

struct SlidingResult {
  std::optional<double> percent; // empty when there are no contact frames
  std::vector<std::array<bool, 2>> sliding;
  int contactFrames = 0; // pooled over both feet
  int slidingFrames = 0;
};

/// Heel sliding during contact: speed above `threshold` (m/s).
SlidingResult footSlidingPercent(
    const MotionSequence& motion, const RigModel& rig, const ContactLabels& contacts,
    double threshold = 0.1);

struct MetricReport {
  double wristMeanCm = 0.0;
  double penetrationMean = 0.0;
  std::optional<double> slidingPercent;
  int framesEvaluated = 0;
  double fpsUsed = 0.0;
  int wristFramesSkipped = 0;
};

struct MetricOptions {
  double fps = 30.0;
  double slidingThreshold = 0.1;
};

/// Downsamples, then evaluates all three metrics with the rig's collision
/// primitives and default exclusions.
MetricReport evaluateMetrics(
    const MotionSequence& motion, const RigModel& rig, const Trajectory& leftBand,
    const Trajectory& rightBand, const ContactLabels& contacts, const MetricOptions& options = {});

std::string metricReportToJson(const MetricReport& r);
MetricReport metricReportFromJson(const std::string& text);

} // namespace egofuse
