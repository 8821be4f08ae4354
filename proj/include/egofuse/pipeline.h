#pragma once

#include "egofuse/align.h"
#include "egofuse/error.h"
#include "egofuse/fuse.h"
#include "egofuse/ident.h"
#include "egofuse/quality.h"
#include "egofuse/retarget.h"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace egofuse {

/// Paths are resolved against the directory of the config file.
struct PipelineConfig {
  std::filesystem::path rig;
  std::filesystem::path identityTable;
  double subjectHeightM = 0.0;
  std::filesystem::path retargetMap;
  std::filesystem::path sourceMotion;
  std::filesystem::path device;
  std::filesystem::path leftWrist;
  std::filesystem::path rightWrist;
  std::optional<std::filesystem::path> contacts; // derived from Theta^X when absent
  std::filesystem::path outputDir;
  bool runFusion = true;
  FusionConfig fusion;
  IkSettings ik;
  HandEyeOptions handEye;
  MetricOptions metrics;

  /// Scalar settings only; input files are checked by the stage that reads them.
  void validate() const;
};

/// Keys: rig, identity_table, subject_height_m, retarget_map, source_motion,
/// device, left_wrist, right_wrist, contacts?, output_dir, run_fusion?,
/// fusion? (object, FusionConfig keys), metrics_fps?, sliding_threshold?.
PipelineConfig pipelineConfigFromJson(const std::string& text, const std::filesystem::path& baseDir);
PipelineConfig readPipelineConfig(const std::filesystem::path& path);

struct PipelineReport {
  IdentityRegressor regressor;
  VecX identityPrior;
  VecX identity;
  double meanLandmarkError = 0.0;
  int nonConvergedFrames = 0;
  HandEyeResult handEye;
  bool fusionConverged = true;
  int descentViolations = 0; // accepted LM steps that raised the batch cost
  MetricReport pre;          // Theta^{W,rigid}
  std::optional<MetricReport> post; // Theta^W
  bool converged = true;
};

std::string pipelineReportToJson(const PipelineReport& r);

/// Names of the artifacts written to the output directory.
namespace pipeline_files {
inline constexpr const char* kRegressor = "identity_regressor.json";
inline constexpr const char* kThetaX = "theta_x.json";
inline constexpr const char* kHandEye = "hand_eye.json";
inline constexpr const char* kThetaRigid = "theta_rigid.json";
inline constexpr const char* kThetaW = "theta_w.json";
inline constexpr const char* kFusionReport = "fusion_report.json";
inline constexpr const char* kContactsUsed = "contacts_used.json";
inline constexpr const char* kMetricsPre = "metrics_pre.json";
inline constexpr const char* kMetricsPost = "metrics_post.json";
inline constexpr const char* kReport = "report.json";
} // namespace pipeline_files

/// Runs `fn`; any Error is rethrown with the stage name prefixed.
template <typename Fn>
auto runStage(const char* name, Fn&& fn) -> decltype(fn());

/// World pose of the head segment implied by the headset and the hand-eye result.
Trajectory headSegmentTrajectory(const Trajectory& device, const HandEyeResult& handEye);

/// Accepted LM steps whose cost exceeds the previous accepted cost.
int countDescentViolations(const FusionReport& report);

/// regress -> retarget -> handeye -> rigid-align -> fuse -> metrics, writing
/// every intermediate artifact and the report to cfg.outputDir.
PipelineReport runPipeline(const PipelineConfig& cfg);

// ---------------------------------------------------------------------------

template <typename Fn>
auto runStage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), std::string("stage ") + name + ": " + e.what());
  }
}

} // namespace egofuse
