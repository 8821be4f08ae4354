#pragma once

#include "egofuse/rig.h"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace egofuse {

/// One frame of source-skeleton motion, expressed in the source (MoCap) frame.
struct SourceFrame {
  TimeNs tNs = 0;
  std::vector<RigidTransform> segments; // sourceframe_from_segment
  std::vector<Vec3> landmarks;
};

struct SourceMotion {
  int segmentCount = 0;
  int landmarkCount = 0;
  double rateHz = 0.0;
  std::vector<std::string> segmentNames;
  std::vector<SourceFrame> frames;

  /// Counts, finiteness and timestamp order. Errors name the frame.
  void validate() const;
};

SourceMotion sourceMotionFromJson(const std::string& text);
std::string sourceMotionToJson(const SourceMotion& motion);
SourceMotion readSourceMotion(const std::filesystem::path& path);
void writeSourceMotion(const std::filesystem::path& path, const SourceMotion& motion);

struct LandmarkCorrespondence {
  int source = 0;
  int rig = 0;
  double weight = 1.0;
};

struct SegmentPair {
  int segment = 0;
  int joint = 0;
  double weight = 1.0;
};

struct RetargetMap {
  std::vector<LandmarkCorrespondence> correspondences;
  std::vector<SegmentPair> segmentPairs;

  void validate(const RigModel& rig, int segmentCount, int landmarkCount) const;
};

RetargetMap retargetMapFromJson(const std::string& text);
std::string retargetMapToJson(const RetargetMap& map);
RetargetMap readRetargetMap(const std::filesystem::path& path);

struct IkSettings {
  double identityRegWeight = 1e4;
  double limitWeight = 100.0;
  int maxIterations = 100;
  int coldStartIterations = 400; // frames initialized from the zero pose
  double stepTolerance = 1e-10;
  double initialDamping = 1e-4;
  int identityStride = 60;
  bool useSegmentOrientations = false;

  void validate() const;
};

struct IkResult {
  PoseFrame frame;
  VecX identity;
  bool converged = false;
  int iterations = 0;
  double landmarkRmse = 0.0;
  std::map<std::string, double> termCosts; // landmarks, orientations, identity, limits
};

/// Damped Gauss-Newton IK for one frame. With `optimizeIdentity` false the
/// identity stays at `initIdentity` and the prior term is dropped.
IkResult solveIkFrame(
    const RigModel& rig,
    const RetargetMap& map,
    const SourceFrame& source,
    const VecX& identityPrior,
    const PoseFrame& init,
    const VecX& initIdentity,
    const IkSettings& settings,
    bool optimizeIdentity = true);

struct RetargetResult {
  MotionSequence motion; // Theta^X in the source frame
  std::vector<int> nonConvergedFrames;
  bool identityStageConverged = true;
  double meanLandmarkError = 0.0; // meters, mean over frames and correspondences
};

/// Shared identity on every `identityStride`-th frame, then frozen-identity
/// per-frame pose with warm starts.
RetargetResult retargetSequence(
    const RigModel& rig,
    const RetargetMap& map,
    const SourceMotion& source,
    const VecX& identityPrior,
    const IkSettings& settings);

/// Root transform that best aligns the zero-pose rig landmarks with the
/// source landmarks (unweighted Kabsch).
RigidTransform initialRootGuess(
    const RigModel& rig, const RetargetMap& map, const SourceFrame& source, const VecX& identity);

/// Source layout used by the synthetic scenarios: one source landmark per rig
/// landmark and eight tracked segments.
RetargetMap makeDeskRetargetMap(const RigModel& rig);
std::vector<int> deskSegmentJoints(const RigModel& rig);

} // namespace egofuse
