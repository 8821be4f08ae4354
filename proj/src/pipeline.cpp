#include "egofuse/pipeline.h"

#include "egofuse/error.h"
#include "egofuse/io.h"

namespace egofuse {

void PipelineConfig::validate() const {
  auto need = [](const std::filesystem::path& p, const char* key) {
    EGOFUSE_CHECK(!p.empty(), ErrorCode::InvalidArgument, std::string("pipeline config: missing ") + key);
  };
  need(rig, "rig");
  need(identityTable, "identity_table");
  need(retargetMap, "retarget_map");
  need(sourceMotion, "source_motion");
  need(device, "device");
  need(leftWrist, "left_wrist");
  need(rightWrist, "right_wrist");
  need(outputDir, "output_dir");
  EGOFUSE_CHECK(
      subjectHeightM > 0.0, ErrorCode::NonPositiveHeight,
      "pipeline config: subject_height_m must be positive");
  EGOFUSE_CHECK(
      metrics.fps > 0.0 && metrics.slidingThreshold >= 0.0, ErrorCode::InvalidArgument,
      "pipeline config: metric settings out of range");
  fusion.validate();
  ik.validate();
}

PipelineConfig pipelineConfigFromJson(const std::string& text, const std::filesystem::path& baseDir) {
  PipelineConfig cfg;
  try {
    const auto j = io::Json::parse(text);
    EGOFUSE_CHECK(j.is_object(), ErrorCode::ParseError, "pipeline config must be a JSON object");
    auto path = [&](const char* key) {
      return baseDir / j.at(key).get<std::string>();
    };
    for (const auto& [key, value] : j.items()) {
      if (key == "rig") {
        cfg.rig = path("rig");
      } else if (key == "identity_table") {
        cfg.identityTable = path("identity_table");
      } else if (key == "subject_height_m") {
        cfg.subjectHeightM = value.get<double>();
      } else if (key == "retarget_map") {
        cfg.retargetMap = path("retarget_map");
      } else if (key == "source_motion") {
        cfg.sourceMotion = path("source_motion");
      } else if (key == "device") {
        cfg.device = path("device");
      } else if (key == "left_wrist") {
        cfg.leftWrist = path("left_wrist");
      } else if (key == "right_wrist") {
        cfg.rightWrist = path("right_wrist");
      } else if (key == "contacts") {
        if (!value.is_null()) {
          cfg.contacts = path("contacts");
        }
      } else if (key == "output_dir") {
        cfg.outputDir = path("output_dir");
      } else if (key == "run_fusion") {
        cfg.runFusion = value.get<bool>();
      } else if (key == "fusion") {
        cfg.fusion = fusionConfigFromJson(value.dump());
      } else if (key == "metrics_fps") {
        cfg.metrics.fps = value.get<double>();
      } else if (key == "sliding_threshold") {
        cfg.metrics.slidingThreshold = value.get<double>();
      } else {
        throw Error(ErrorCode::ParseError, "pipeline config: unknown key '" + key + "'");
      }
    }
  } catch (const io::Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("pipeline config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

PipelineConfig readPipelineConfig(const std::filesystem::path& path) {
  const std::string text = io::readText(path);
  try {
    return pipelineConfigFromJson(text, path.parent_path());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

namespace {

io::Json vecToJson(const VecX& v) {
  io::Json a = io::Json::array();
  for (int i = 0; i < v.size(); ++i) {
    a.push_back(v[i]);
  }
  return a;
}

} // namespace

std::string pipelineReportToJson(const PipelineReport& r) {
  io::Json j;
  j["identity"] = {
      {"lambda", r.regressor.ridgeLambda},
      {"loocv_mse", r.regressor.loocvMse},
      {"prior", vecToJson(r.identityPrior)},
      {"estimated", vecToJson(r.identity)}};
  j["retarget"] = {
      {"mean_landmark_error_m", r.meanLandmarkError},
      {"non_converged_frames", r.nonConvergedFrames}};
  j["hand_eye"] = io::Json::parse(handEyeToJson(r.handEye));
  j["fusion"] = {{"converged", r.fusionConverged}, {"descent_violations", r.descentViolations}};
  j["pre"] = io::Json::parse(metricReportToJson(r.pre));
  j["post"] = r.post ? io::Json::parse(metricReportToJson(*r.post)) : io::Json(nullptr);
  j["converged"] = r.converged;
  return j.dump(1) + "\n";
}

Trajectory headSegmentTrajectory(const Trajectory& device, const HandEyeResult& handEye) {
  return device.transformed(RigidTransform(), handEye.deviceFromHeadSegment);
}

int countDescentViolations(const FusionReport& report) {
  int violations = 0;
  for (const auto& b : report.batches) {
    for (std::size_t i = 1; i < b.acceptedCosts.size(); ++i) {
      if (b.acceptedCosts[i] > b.acceptedCosts[i - 1]) {
        ++violations;
      }
    }
  }
  return violations;
}

PipelineReport runPipeline(const PipelineConfig& cfg) {
  namespace f = pipeline_files;
  cfg.validate();
  std::filesystem::create_directories(cfg.outputDir);
  const auto out = [&](const char* name) {
    return cfg.outputDir / name;
  };
  PipelineReport report;

  const RigModel rig = runStage("load-rig", [&] { return loadRig(cfg.rig); });

  runStage("regress-identity", [&] {
    const auto table = readIdentityTable(cfg.identityTable);
    report.regressor = fitRidgeLoocv(table, defaultLambdaGrid());
    report.identityPrior = predictIdentity(report.regressor, cfg.subjectHeightM);
    EGOFUSE_CHECK(
        report.identityPrior.size() == rig.identityDim, ErrorCode::DimensionMismatch,
        "identity table has " + std::to_string(report.identityPrior.size()) +
            " parameters, rig expects " + std::to_string(rig.identityDim));
    io::writeText(out(f::kRegressor), regressorToJson(report.regressor));
  });

  const MotionSequence thetaX = runStage("retarget", [&] {
    const auto map = readRetargetMap(cfg.retargetMap);
    const auto source = readSourceMotion(cfg.sourceMotion);
    auto r = retargetSequence(rig, map, source, report.identityPrior, cfg.ik);
    report.identity = r.motion.identity;
    report.meanLandmarkError = r.meanLandmarkError;
    report.nonConvergedFrames = static_cast<int>(r.nonConvergedFrames.size());
    report.converged = report.converged && r.nonConvergedFrames.empty() && r.identityStageConverged;
    writeMotion(out(f::kThetaX), r.motion);
    return r.motion;
  });

  const Trajectory device = runStage("handeye", [&] {
    auto dev = readTrajectoryCsv(cfg.device);
    const Trajectory head = jointTrajectory(rig, thetaX, rig.named.head, "source");
    report.handEye = estimateHandEye(dev, head, cfg.handEye);
    io::writeText(out(f::kHandEye), handEyeToJson(report.handEye));
    return dev;
  });

  const MotionSequence thetaRigid = runStage("rigid-align", [&] {
    auto m = rigidAlignSequence(thetaX, device, report.handEye, rig);
    writeMotion(out(f::kThetaRigid), m);
    return m;
  });

  struct Sensors {
    Trajectory left;
    Trajectory right;
    ContactLabels contacts;
  };
  const Sensors sensors = runStage("fuse", [&] {
    Sensors s;
    s.left = readTrajectoryCsv(cfg.leftWrist);
    s.right = readTrajectoryCsv(cfg.rightWrist);
    s.contacts = cfg.contacts ? readContacts(*cfg.contacts)
                              : deriveContacts(thetaX, rig, cfg.fusion.epsV);
    return s;
  });

  std::optional<MotionSequence> thetaW;
  if (cfg.runFusion) {
    thetaW = runStage("fuse", [&] {
      const Trajectory head = headSegmentTrajectory(device, report.handEye);
      FusionInputs in;
      in.thetaRigid = &thetaRigid;
      in.thetaX = &thetaX;
      in.head = &head;
      in.leftWrist = &sensors.left;
      in.rightWrist = &sensors.right;
      in.contacts = &sensors.contacts;
      auto r = fuseSequence(in, rig, cfg.fusion);
      report.fusionConverged = r.report.converged();
      report.descentViolations = countDescentViolations(r.report);
      report.converged = report.converged && report.fusionConverged;
      writeMotion(out(f::kThetaW), r.motion);
      io::writeText(out(f::kFusionReport), fusionReportToJson(r.report));
      writeContacts(out(f::kContactsUsed), r.contactsUsed);
      return r.motion;
    });
  }

  runStage("metrics", [&] {
    report.pre = evaluateMetrics(thetaRigid, rig, sensors.left, sensors.right, sensors.contacts, cfg.metrics);
    io::writeText(out(f::kMetricsPre), metricReportToJson(report.pre));
    if (thetaW) {
      report.post = evaluateMetrics(*thetaW, rig, sensors.left, sensors.right, sensors.contacts, cfg.metrics);
      io::writeText(out(f::kMetricsPost), metricReportToJson(*report.post));
    }
  });

  io::writeText(out(f::kReport), pipelineReportToJson(report));
  return report;
}

} // namespace egofuse
