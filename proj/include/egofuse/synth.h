#pragma once

#include "egofuse/fuse.h"
#include "egofuse/ident.h"
#include "egofuse/retarget.h"
#include "egofuse/rig.h"
#include "egofuse/scene.h"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace egofuse {

/// Counter-based generator: the n-th draw of a stream is
/// splitmix64(key + n * 0x9e3779b97f4a7c15) with key = splitmix64(seed ^ fnv1a(name)).
/// Streams with different names never share state, so adding draws to one
/// stream leaves every other stream unchanged.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream(std::uint64_t seed, std::string_view name);

  static constexpr result_type min() {
    return 0;
  }
  static constexpr result_type max() {
    return ~result_type{0};
  }
  result_type operator()();

  double uniform(double lo = 0.0, double hi = 1.0);
  double normal(double sigma = 1.0);
  Vec3 normal3(double sigma);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::normal_distribution<double> gauss_;
};

struct ScenarioParams {
  double durationS = 60.0;
  double rateHz = 240.0;
  double sigmaT = 0.01;   // source-frame translation drift, m / sqrt(s)
  double sigmaR = 0.005;  // source-frame rotation drift, rad / sqrt(s)
  double sigmaW = 0.002;  // wristband position noise per axis, m
  double driftKnotS = 0.25; // drift random-walk knot spacing, linear in between
  // Amplitude of the joint-angle errors of the captured limb posture
  // (shoulders, elbows, hips, knees), rad: a slow wander plus a 1-2.5 Hz
  // jitter at 30% of this amplitude. Zero gives exact posture.
  double postureErrorRad = 0.06;
  double subjectHeightM = 1.68;
  int populationSize = 40;
  double walkSpeed = 0.6;   // m/s along the loop
  double pathRadius = 3.0;  // m
  double stepPeriodS = 1.0; // one full gait cycle
  double cameraRateHz = 10.0;

  void validate() const;
};

std::string scenarioParamsToJson(const ScenarioParams& p);
/// Missing keys keep their defaults; unknown keys are rejected.
ScenarioParams scenarioParamsFromJson(const std::string& text);

struct SyntheticScenario {
  ScenarioParams params;
  std::uint64_t seed = 0;
  MotionSequence groundTruth;    // world frame
  MotionSequence capturedPosture; // ground truth with posture errors, world frame
  SourceMotion driftedSource;    // source frame
  std::vector<RigidTransform> sourceFromWorld; // per frame drift
  RetargetMap retargetMap;
  RigidTransform deviceFromHeadSegment;
  Trajectory device;             // world_from_device
  Trajectory leftWrist;
  Trajectory rightWrist;
  ContactLabels contacts;
  std::vector<IdentitySample> population;
  SceneAnnotation scene;
  std::vector<Vec3> cloud;
  CameraModel camera;
  RigidTransform deviceFromCamera;
  Trajectory cameraPoses; // world_from_camera
};

/// Authored walking loop: feet planted during stance (heel targets reached by
/// leg IK), swing arcs between footprints, arm swing and head motion.
/// Returns the motion and the stance contacts.
std::pair<MotionSequence, ContactLabels> authorGait(
    const RigModel& rig, const VecX& identity, const ScenarioParams& params);

/// source_from_world at each time: a random gravity-aligned yaw and
/// horizontal offset, then a random walk with per-second standard deviations
/// sigmaR (rad) and sigmaT (m), sampled every driftKnotS and interpolated.
/// Identical to the drift used by generateScenario for the same seed.
std::vector<RigidTransform> sampleSourceDrift(
    const ScenarioParams& params, std::uint64_t seed, const std::vector<TimeNs>& times);

SyntheticScenario generateScenario(
    const RigModel& rig, const ScenarioParams& params, std::uint64_t seed);

/// File names used by writeScenario and the pipeline config it emits.
namespace scenario_files {
inline constexpr const char* kParams = "scenario.json";
inline constexpr const char* kRig = "rig.json";
inline constexpr const char* kPopulation = "identity_table.csv";
inline constexpr const char* kGroundTruth = "ground_truth_motion.json";
inline constexpr const char* kSource = "source_motion.json";
inline constexpr const char* kMap = "retarget_map.json";
inline constexpr const char* kDevice = "device_trajectory.csv";
inline constexpr const char* kLeftWrist = "left_wrist.csv";
inline constexpr const char* kRightWrist = "right_wrist.csv";
inline constexpr const char* kContacts = "contacts.json";
inline constexpr const char* kTrueHandEye = "true_hand_eye.json"; // {"device_from_headsegment": pose}
inline constexpr const char* kBoxes = "boxes.json";
inline constexpr const char* kCloud = "cloud.csv";
inline constexpr const char* kCamera = "camera.json";
inline constexpr const char* kCameraPoses = "camera_trajectory.csv";
inline constexpr const char* kPipeline = "pipeline.json";
} // namespace scenario_files

/// Writes every scenario file plus a pipeline config that references them.
void writeScenario(const SyntheticScenario& s, const RigModel& rig, const std::filesystem::path& dir);

} // namespace egofuse
