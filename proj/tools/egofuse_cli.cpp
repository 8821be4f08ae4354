// egofuse command-line front end. Exit codes: 0 success, 1 usage, 2 data
// error, 3 non-convergence (outputs are still written).

#include "egofuse/align.h"
#include "egofuse/error.h"
#include "egofuse/fuse.h"
#include "egofuse/ident.h"
#include "egofuse/io.h"
#include "egofuse/meshxfer.h"
#include "egofuse/pipeline.h"
#include "egofuse/quality.h"
#include "egofuse/retarget.h"
#include "egofuse/rig.h"
#include "egofuse/scene.h"
#include "egofuse/synth.h"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace egofuse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNotConverged = 3;

struct Globals {
  std::uint64_t seed = 1;
  fs::path outDir = ".";
  std::string config;
};

fs::path outPath(const Globals& g, const char* name) {
  fs::create_directories(g.outDir);
  return g.outDir / name;
}

// Writes to `path` when given, stdout otherwise.
void emit(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
  } else {
    io::writeText(path, text);
  }
}

Trajectory headTrajectory(const RigModel& rig, const MotionSequence& motion) {
  return jointTrajectory(rig, motion, rig.named.head, "source");
}

const Obb3& findBox(const std::vector<Obb3>& boxes, std::int64_t id, const std::string& file) {
  for (const auto& b : boxes) {
    if (b.id == id) {
      return b;
    }
  }
  throw Error(ErrorCode::InvalidArgument, file + ": no box with id " + std::to_string(id));
}

RigidTransform readAlignment(const fs::path& path) {
  const auto j = io::readJson(path);
  if (j.is_object()) {
    return io::poseFromJson(j.at("target_from_basemap"), path.string());
  }
  return io::poseFromJson(j, path.string());
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-sensor body motion fusion and scene annotation tools"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--out-dir", g.outDir, "Output directory");
  app.add_option("--config", g.config, "Config file for the subcommand");

  std::function<int()> action;

  // synth ------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Generate a synthetic drift scenario");
  std::optional<double> synthDuration;
  synth->add_option("--duration", synthDuration, "Duration in seconds (overrides the config)");
  synth->callback([&] {
    action = [&] {
      ScenarioParams p = g.config.empty() ? ScenarioParams()
                                          : scenarioParamsFromJson(io::readText(g.config));
      if (synthDuration) {
        p.durationS = *synthDuration;
      }
      const RigModel rig = makeDeskRig();
      writeScenario(generateScenario(rig, p, g.seed), rig, g.outDir);
      std::cout << "scenario written to " << g.outDir.string() << "\n";
      return kExitOk;
    };
  });

  // regress-identity -------------------------------------------------------
  auto* regress = app.add_subcommand("regress-identity", "Fit the height-to-identity regressor");
  std::string table;
  double height = 0.0;
  regress->add_option("--table", table, "Identity table CSV")->required();
  regress->add_option("--height", height, "Subject height in meters");
  regress->callback([&] {
    action = [&] {
      const auto reg = fitRidgeLoocv(readIdentityTable(table), defaultLambdaGrid());
      io::writeText(outPath(g, pipeline_files::kRegressor), regressorToJson(reg));
      std::cout << "lambda " << reg.ridgeLambda << " loocv_mse " << reg.loocvMse << "\n";
      if (height != 0.0) {
        const VecX prior = predictIdentity(reg, height);
        std::cout << "identity";
        for (int i = 0; i < prior.size(); ++i) {
          std::cout << " " << formatDouble(prior[i]);
        }
        std::cout << "\n";
      }
      return kExitOk;
    };
  });

  // retarget ---------------------------------------------------------------
  auto* retarget = app.add_subcommand("retarget", "Retarget source motion onto the rig");
  std::string rigPath;
  std::string mapPath;
  std::string sourcePath;
  std::string regressorPath;
  retarget->add_option("--rig", rigPath)->required();
  retarget->add_option("--map", mapPath)->required();
  retarget->add_option("--source", sourcePath)->required();
  retarget->add_option("--regressor", regressorPath, "Identity regressor JSON")->required();
  retarget->add_option("--height", height, "Subject height in meters")->required();
  retarget->callback([&] {
    action = [&] {
      const RigModel rig = loadRig(rigPath);
      const auto reg = regressorFromJson(io::readText(regressorPath));
      const auto r = retargetSequence(
          rig, readRetargetMap(mapPath), readSourceMotion(sourcePath), predictIdentity(reg, height),
          {});
      writeMotion(outPath(g, pipeline_files::kThetaX), r.motion);
      std::cout << "mean landmark error " << r.meanLandmarkError << " m, "
                << r.nonConvergedFrames.size() << " non-converged frames\n";
      return r.nonConvergedFrames.empty() && r.identityStageConverged ? kExitOk : kExitNotConverged;
    };
  });

  // handeye ----------------------------------------------------------------
  auto* handeye = app.add_subcommand("handeye", "Estimate the headset-to-head transform");
  std::string devicePath;
  std::string motionPath;
  handeye->add_option("--rig", rigPath)->required();
  handeye->add_option("--device", devicePath, "Headset trajectory CSV")->required();
  handeye->add_option("--motion", motionPath, "Retargeted motion (source frame)")->required();
  handeye->callback([&] {
    action = [&] {
      const RigModel rig = loadRig(rigPath);
      const auto he =
          estimateHandEye(readTrajectoryCsv(devicePath), headTrajectory(rig, readMotion(motionPath)));
      io::writeText(outPath(g, pipeline_files::kHandEye), handEyeToJson(he));
      std::cout << "pairs " << he.pairCount << " rotation rms " << he.rotationRmsRad
                << " rad, translation rms " << he.translationRmsM << " m\n";
      return kExitOk;
    };
  });

  // rigid-align ------------------------------------------------------------
  auto* rigid = app.add_subcommand("rigid-align", "Re-root the motion on the headset trajectory");
  std::string handEyePath;
  rigid->add_option("--rig", rigPath)->required();
  rigid->add_option("--motion", motionPath)->required();
  rigid->add_option("--device", devicePath)->required();
  rigid->add_option("--hand-eye", handEyePath)->required();
  rigid->callback([&] {
    action = [&] {
      const RigModel rig = loadRig(rigPath);
      const auto m = rigidAlignSequence(
          readMotion(motionPath), readTrajectoryCsv(devicePath), readHandEye(handEyePath), rig);
      writeMotion(outPath(g, pipeline_files::kThetaRigid), m);
      return kExitOk;
    };
  });

  // fuse -------------------------------------------------------------------
  auto* fuse = app.add_subcommand("fuse", "Jointly refine the aligned motion");
  std::string rigidPath;
  std::string leftPath;
  std::string rightPath;
  std::string contactsPath;
  fuse->add_option("--rig", rigPath)->required();
  fuse->add_option("--rigid", rigidPath, "Rigidly aligned motion")->required();
  fuse->add_option("--motion", motionPath, "Retargeted motion (source frame)")->required();
  fuse->add_option("--device", devicePath)->required();
  fuse->add_option("--hand-eye", handEyePath)->required();
  fuse->add_option("--left-wrist", leftPath)->required();
  fuse->add_option("--right-wrist", rightPath)->required();
  fuse->add_option("--contacts", contactsPath, "Contact labels; derived from velocity when absent");
  fuse->callback([&] {
    action = [&] {
      const RigModel rig = loadRig(rigPath);
      const FusionConfig cfg = g.config.empty() ? FusionConfig() : readFusionConfig(g.config);
      const auto thetaRigid = readMotion(rigidPath);
      const auto thetaX = readMotion(motionPath);
      const auto head = headSegmentTrajectory(readTrajectoryCsv(devicePath), readHandEye(handEyePath));
      const auto left = readTrajectoryCsv(leftPath);
      const auto right = readTrajectoryCsv(rightPath);
      std::optional<ContactLabels> contacts;
      if (!contactsPath.empty()) {
        contacts = readContacts(contactsPath);
      }
      const FusionInputs in{
          &thetaRigid, &thetaX, &head, &left, &right, contacts ? &*contacts : nullptr};
      const auto r = fuseSequence(in, rig, cfg);
      writeMotion(outPath(g, pipeline_files::kThetaW), r.motion);
      io::writeText(outPath(g, pipeline_files::kFusionReport), fusionReportToJson(r.report));
      writeContacts(outPath(g, pipeline_files::kContactsUsed), r.contactsUsed);
      std::cout << r.report.batches.size() << " batches, descent violations "
                << countDescentViolations(r.report) << "\n";
      return r.report.converged() ? kExitOk : kExitNotConverged;
    };
  });

  // metrics ----------------------------------------------------------------
  auto* metrics = app.add_subcommand("metrics", "Wrist, penetration and sliding metrics");
  MetricOptions metricOpts;
  std::string metricsOut;
  metrics->add_option("--rig", rigPath)->required();
  metrics->add_option("--motion", motionPath)->required();
  metrics->add_option("--left-wrist", leftPath)->required();
  metrics->add_option("--right-wrist", rightPath)->required();
  metrics->add_option("--contacts", contactsPath)->required();
  metrics->add_option("--fps", metricOpts.fps, "Evaluation rate");
  metrics->add_option("--sliding-threshold", metricOpts.slidingThreshold, "Heel speed, m/s");
  metrics->add_option("--out", metricsOut, "Output file (stdout when absent)");
  metrics->callback([&] {
    action = [&] {
      const RigModel rig = loadRig(rigPath);
      const auto m = evaluateMetrics(
          readMotion(motionPath), rig, readTrajectoryCsv(leftPath), readTrajectoryCsv(rightPath),
          readContacts(contactsPath), metricOpts);
      emit(metricsOut, metricReportToJson(m));
      return kExitOk;
    };
  });

  // convert-mesh -----------------------------------------------------------
  auto* convert = app.add_subcommand("convert-mesh", "Convert a motion to another rig's topology");
  std::string targetRigPath;
  std::string correspondencePath;
  convert->add_option("--source-rig", rigPath)->required();
  convert->add_option("--target-rig", targetRigPath)->required();
  convert->add_option("--motion", motionPath)->required();
  convert->add_option("--correspondence", correspondencePath, "Precomputed correspondence JSON");
  convert->callback([&] {
    action = [&] {
      const RigModel source = loadRig(rigPath);
      const RigModel target = loadRig(targetRigPath);
      const TriMesh srcMesh = templateMesh(source);
      SurfaceCorrespondence corresp;
      if (!correspondencePath.empty()) {
        corresp = readCorrespondence(correspondencePath, static_cast<int>(srcMesh.triangles.size()));
      } else if (source.poseDofCount == target.poseDofCount) {
        corresp = buildPosedCorrespondence(source, target, deskSpreadPose(source));
      } else {
        corresp = buildCorrespondence(srcMesh, target.templateVertices);
      }
      if (corresp.skippedTriangles > 0) {
        std::cerr << "warning: skipped " << corresp.skippedTriangles
                  << " degenerate source triangles\n";
      }
      writeCorrespondence(outPath(g, "correspondence.json"), corresp);
      const auto r = convertMotion(source, target, corresp, readMotion(motionPath), FitConfig());
      writeMotion(outPath(g, "converted_motion.json"), r.motion);
      std::cout << "vertex loss " << r.finalVertexLoss << " edge loss " << r.finalEdgeLoss << "\n";
      for (bool ok : r.frameConverged) {
        if (!ok) {
          return kExitNotConverged;
        }
      }
      return kExitOk;
    };
  });

  // obb --------------------------------------------------------------------
  auto* obb = app.add_subcommand("obb", "Oriented-box annotation tools");
  obb->require_subcommand(1);
  std::string boxesPath;
  std::string cameraPath;
  std::string posesPath;
  std::string cloudPath;
  std::string obbOut;
  VisibilityOptions visOpts;
  auto addCameraOptions = [&](CLI::App* c) {
    c->add_option("--boxes", boxesPath)->required();
    c->add_option("--camera", cameraPath)->required();
    c->add_option("--poses", posesPath, "world_from_camera trajectory CSV")->required();
    c->add_option("--cloud", cloudPath, "Semi-dense point cloud CSV")->required();
    c->add_option("--n-per-edge", visOpts.nPerEdge);
    c->add_option("--inside-fraction", visOpts.insideFraction);
    c->add_option("--min-points", visOpts.minPoints);
    c->add_option("--out", obbOut, "Output file (stdout when absent)");
  };
  auto observeAll = [&](bool visibleOnly) {
    const auto boxes = readObbs(boxesPath);
    const auto cam = readCameraJson(cameraPath);
    const auto poses = readTrajectoryCsv(posesPath);
    const auto cloud = readPointCloud(cloudPath);
    std::ostringstream out;
    for (const auto& s : poses.samples()) {
      for (const auto& b : boxes) {
        const auto obs = observeBox(s.tNs, b, cam, s.pose, cloud, visOpts);
        if (!visibleOnly || obs.verdict.visible) {
          out << observationToJsonLine(obs) << "\n";
        }
      }
    }
    emit(obbOut, out.str());
    return kExitOk;
  };
  auto* visibility = obb->add_subcommand("visibility", "Per-frame visibility verdicts (JSON lines)");
  addCameraOptions(visibility);
  visibility->callback([&] { action = [&] { return observeAll(false); }; });
  auto* project = obb->add_subcommand("project", "2D boxes of the visible OBBs (JSON lines)");
  addCameraOptions(project);
  project->callback([&] { action = [&] { return observeAll(true); }; });

  auto* iou = obb->add_subcommand("iou", "3D IoU between two boxes");
  std::string otherPath;
  std::int64_t idA = 0;
  std::int64_t idB = 0;
  iou->add_option("--boxes", boxesPath)->required();
  iou->add_option("--other", otherPath, "File holding box b (defaults to --boxes)");
  iou->add_option("--a", idA)->required();
  iou->add_option("--b", idB)->required();
  iou->callback([&] {
    action = [&] {
      const auto boxes = readObbs(boxesPath);
      const std::string bFile = otherPath.empty() ? boxesPath : otherPath;
      const auto others = otherPath.empty() ? boxes : readObbs(otherPath);
      std::cout << formatDouble(
                       iou3d(findBox(boxes, idA, boxesPath), findBox(others, idB, bFile)))
                << "\n";
      return kExitOk;
    };
  });

  auto* transfer = obb->add_subcommand("transfer", "Map basemap boxes into another frame");
  std::string alignmentPath;
  std::string targetFrame = "target";
  transfer->add_option("--boxes", boxesPath)->required();
  transfer->add_option("--alignment", alignmentPath, "Pose JSON, target_from_basemap");
  transfer->add_option("--frame", targetFrame, "Name of the target frame");
  transfer->callback([&] {
    action = [&] {
      SceneAnnotation basemap;
      basemap.venueId = fs::path(boxesPath).stem().string();
      basemap.boxes = readObbs(boxesPath);
      const RigidTransform align =
          alignmentPath.empty() ? RigidTransform() : readAlignment(alignmentPath);
      const auto moved = transferAnnotations(basemap, targetFrame, align);
      writeObbs(outPath(g, "transferred_boxes.json"), moved.boxes);
      return kExitOk;
    };
  });

  auto* gate = obb->add_subcommand("gate", "Match a box to candidates by IoU");
  std::string candidatesPath;
  double threshold = 0.95;
  gate->add_option("--boxes", boxesPath)->required();
  gate->add_option("--id", idA)->required();
  gate->add_option("--candidates", candidatesPath)->required();
  gate->add_option("--threshold", threshold);
  gate->callback([&] {
    action = [&] {
      const auto boxes = readObbs(boxesPath);
      const auto match =
          gateShapeTransfer(findBox(boxes, idA, boxesPath), readObbs(candidatesPath), threshold);
      std::cout << (match ? std::to_string(*match) : std::string("none")) << "\n";
      return kExitOk;
    };
  });

  auto* views = obb->add_subcommand("select-views", "Pick diverse views of one object");
  int viewCount = 16;
  views->add_option("--boxes", boxesPath)->required();
  views->add_option("--id", idA)->required();
  views->add_option("--camera", cameraPath)->required();
  views->add_option("--poses", posesPath)->required();
  views->add_option("--cloud", cloudPath)->required();
  views->add_option("--k", viewCount);
  views->add_option("--out", obbOut);
  views->callback([&] {
    action = [&] {
      const auto boxes = readObbs(boxesPath);
      const Obb3& box = findBox(boxes, idA, boxesPath);
      const auto points = filterInstancePoints(box, readPointCloud(cloudPath));
      const auto sel =
          selectViews(points, readTrajectoryCsv(posesPath), readCameraJson(cameraPath), viewCount);
      io::Json j;
      j["box_id"] = box.id;
      j["timestamps_ns"] = sel.timestamps;
      j["candidate_count"] = sel.candidateCount;
      j["insufficient"] = sel.insufficient;
      j["warnings"] = sel.warnings;
      emit(obbOut, j.dump(1) + "\n");
      for (const auto& w : sel.warnings) {
        std::cerr << "warning: " << w << "\n";
      }
      return kExitOk;
    };
  });

  // pipeline ---------------------------------------------------------------
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage from a pipeline config");
  pipeline->callback([&] {
    action = [&] {
      if (g.config.empty()) {
        throw CLI::RequiredError("--config");
      }
      const auto r = runPipeline(readPipelineConfig(g.config));
      std::cout << "wrist " << r.pre.wristMeanCm << " -> "
                << (r.post ? r.post->wristMeanCm : r.pre.wristMeanCm) << " cm\n";
      return r.converged ? kExitOk : kExitNotConverged;
    };
  });

  // rig export -------------------------------------------------------------
  auto* rigCmd = app.add_subcommand("rig", "Rig utilities");
  rigCmd->require_subcommand(1);
  auto* rigExport = rigCmd->add_subcommand("export", "Write the built-in desk rigs as JSON");
  rigExport->callback([&] {
    action = [&] {
      saveRig(outPath(g, "desk_rig.json"), makeDeskRig());
      saveRig(outPath(g, "desk_rig_target.json"), makeDeskTargetRig());
      return kExitOk;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    return action ? action() : kExitUsage;
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
