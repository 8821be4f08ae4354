#pragma once

#include "egofuse/io.h"
#include "egofuse/pipeline.h"
#include "egofuse/synth.h"

#include <filesystem>
#include <functional>
#include <map>
#include <string>

namespace egofuse::testing {

// write(read(text)) for every artifact kind the pipeline and generator emit.
inline std::map<std::string, std::function<std::string(const std::filesystem::path&)>> rewriters() {
  namespace pf = pipeline_files;
  namespace sf = scenario_files;
  const auto motion = [](const std::filesystem::path& p) { return motionToJson(readMotion(p)); };
  const auto traj = [](const std::filesystem::path& p) { return trajectoryToCsv(readTrajectoryCsv(p)); };
  return {
      {pf::kRegressor, [](const auto& p) { return regressorToJson(regressorFromJson(io::readText(p))); }},
      {pf::kThetaX, motion},
      {pf::kThetaRigid, motion},
      {pf::kThetaW, motion},
      {pf::kHandEye, [](const auto& p) { return handEyeToJson(readHandEye(p)); }},
      {pf::kFusionReport,
       [](const auto& p) { return fusionReportToJson(fusionReportFromJson(io::readText(p))); }},
      {pf::kContactsUsed, [](const auto& p) { return contactsToJson(readContacts(p)); }},
      {pf::kMetricsPre, [](const auto& p) { return metricReportToJson(metricReportFromJson(io::readText(p))); }},
      {pf::kMetricsPost, [](const auto& p) { return metricReportToJson(metricReportFromJson(io::readText(p))); }},
      {sf::kRig, [](const auto& p) { return rigToJson(loadRig(p)); }},
      {sf::kPopulation, [](const auto& p) { return identityTableToCsv(readIdentityTable(p)); }},
      {sf::kGroundTruth, motion},
      {sf::kSource, [](const auto& p) { return sourceMotionToJson(readSourceMotion(p)); }},
      {sf::kMap, [](const auto& p) { return retargetMapToJson(readRetargetMap(p)); }},
      {sf::kDevice, traj},
      {sf::kLeftWrist, traj},
      {sf::kRightWrist, traj},
      {sf::kCameraPoses, traj},
      {sf::kContacts, [](const auto& p) { return contactsToJson(readContacts(p)); }},
      {sf::kTrueHandEye,
       [](const auto& p) {
         const auto pose = io::poseFromJson(io::readJson(p).at("device_from_headsegment"), "truth");
         io::Json j;
         j["device_from_headsegment"] = io::poseToJson(pose);
         return j.dump(1) + "\n";
       }},
      {sf::kBoxes, [](const auto& p) { return obbsToJson(readObbs(p)); }},
      {sf::kCloud, [](const auto& p) { return pointCloudToCsv(readPointCloud(p)); }},
  };
}

} // namespace egofuse::testing
