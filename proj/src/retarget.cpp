#include "egofuse/retarget.h"

#include "egofuse/error.h"
#include "egofuse/io.h"
#include "egofuse/residuals.h"
#include "egofuse/solver.h"

#include <Eigen/Geometry>

#include <cmath>

namespace egofuse {

namespace {

enum IkTerm : int { kLandmarks = 0, kOrientations, kIdentity, kLimits };

const char* ikTermName(int term) {
  switch (term) {
    case kLandmarks:
      return "landmarks";
    case kOrientations:
      return "orientations";
    case kIdentity:
      return "identity";
    default:
      return "limits";
  }
}

struct IkState {
  std::vector<PoseFrame> frames;
  VecX identity;
};

// Landmark IK over one or more frames; identity is either a shared global
// variable or held fixed.
class IkProblem final : public StructuredProblem {
 public:
  IkProblem(
      const RigModel& rig,
      const RetargetMap& map,
      std::vector<const SourceFrame*> sources,
      IkState init,
      const VecX& prior,
      const IkSettings& settings,
      bool optimizeIdentity)
      : rig_(rig),
        map_(map),
        sources_(std::move(sources)),
        state_(std::move(init)),
        prior_(prior),
        settings_(settings),
        optimizeIdentity_(optimizeIdentity) {}

  int frameCount() const override {
    return static_cast<int>(state_.frames.size());
  }
  int frameDim() const override {
    return frameParamCount(rig_);
  }
  int globalDim() const override {
    return optimizeIdentity_ ? rig_.identityDim : 0;
  }

  void evaluate(std::vector<ResidualBlock>& blocks, bool withJacobians) const override {
    blocks.clear();
    const int frames = frameCount();
    const double limitW = std::sqrt(settings_.limitWeight);
    for (int f = 0; f < frames; ++f) {
      const Kinematics kin = computeKinematics(rig_, state_.identity, state_.frames[f]);
      const SourceFrame& src = *sources_[f];
      for (const auto& c : map_.correspondences) {
        if (c.weight == 0.0) {
          continue;
        }
        const auto& lm = rig_.landmarks[c.rig];
        auto b = pointResidual(
            rig_,
            kin,
            lm.joint,
            lm.offset,
            src.landmarks[c.source],
            std::sqrt(c.weight),
            f,
            frames,
            optimizeIdentity_,
            withJacobians);
        b.term = kLandmarks;
        blocks.push_back(std::move(b));
      }
      if (settings_.useSegmentOrientations) {
        for (const auto& s : map_.segmentPairs) {
          if (s.weight == 0.0) {
            continue;
          }
          auto b = orientationResidual(
              rig_,
              kin,
              s.joint,
              src.segments[s.segment].rotation,
              std::sqrt(s.weight),
              f,
              frames,
              withJacobians);
          b.term = kOrientations;
          blocks.push_back(std::move(b));
        }
      }
      appendLimitResiduals(
          rig_, state_.frames[f].pose, limitW, f, frames, kLimits, withJacobians, blocks);
    }
    if (optimizeIdentity_) {
      const double w = std::sqrt(settings_.identityRegWeight);
      ResidualBlock b;
      b.term = kIdentity;
      b.residual = w * (state_.identity - prior_);
      const int n = frameDim();
      for (int g = 0; g < rig_.identityDim; ++g) {
        b.cols.push_back(frames * n + g);
      }
      if (withJacobians) {
        b.jacobian = w * MatX::Identity(rig_.identityDim, rig_.identityDim);
      }
      blocks.push_back(std::move(b));
    }
  }

  void applyIncrement(const VecX& delta) override {
    const int n = frameDim();
    for (int f = 0; f < frameCount(); ++f) {
      state_.frames[f] = applyFrameIncrement(state_.frames[f], delta.segment(f * n, n));
    }
    if (optimizeIdentity_) {
      state_.identity += delta.tail(rig_.identityDim);
    }
  }

  std::any saveState() const override {
    return state_;
  }
  void restoreState(const std::any& s) override {
    state_ = std::any_cast<IkState>(s);
  }

  const IkState& state() const {
    return state_;
  }

  double landmarkRmse(int f) const {
    if (map_.correspondences.empty()) {
      return 0.0;
    }
    const Kinematics kin = computeKinematics(rig_, state_.identity, state_.frames[f]);
    double sum = 0.0;
    for (const auto& c : map_.correspondences) {
      const auto& lm = rig_.landmarks[c.rig];
      const Vec3 p = kin.rotation[lm.joint] * lm.offset + kin.position[lm.joint];
      sum += (p - sources_[f]->landmarks[c.source]).squaredNorm();
    }
    return std::sqrt(sum / static_cast<double>(map_.correspondences.size()));
  }

 private:
  const RigModel& rig_;
  const RetargetMap& map_;
  std::vector<const SourceFrame*> sources_;
  IkState state_;
  VecX prior_;
  const IkSettings& settings_;
  bool optimizeIdentity_;
};

LmOptions lmOptions(const IkSettings& s) {
  LmOptions o;
  o.maxIterations = s.maxIterations;
  o.stepTolerance = s.stepTolerance;
  o.initialDamping = s.initialDamping;
  return o;
}

std::string frameLabel(std::size_t f) {
  return "source frame " + std::to_string(f);
}

} // namespace

void SourceMotion::validate() const {
  EGOFUSE_CHECK(!frames.empty(), ErrorCode::EmptyInput, "source motion has no frames");
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& fr = frames[f];
    EGOFUSE_CHECK(
        static_cast<int>(fr.segments.size()) == segmentCount,
        ErrorCode::DimensionMismatch,
        frameLabel(f) + ": expected " + std::to_string(segmentCount) + " segments");
    EGOFUSE_CHECK(
        static_cast<int>(fr.landmarks.size()) == landmarkCount,
        ErrorCode::DimensionMismatch,
        frameLabel(f) + ": expected " + std::to_string(landmarkCount) + " landmarks");
    for (std::size_t l = 0; l < fr.landmarks.size(); ++l) {
      EGOFUSE_CHECK(
          fr.landmarks[l].allFinite(),
          ErrorCode::InvalidArgument,
          frameLabel(f) + ": landmark " + std::to_string(l) + " is not finite");
    }
    for (std::size_t s = 0; s < fr.segments.size(); ++s) {
      EGOFUSE_CHECK(
          fr.segments[s].translation.allFinite() && fr.segments[s].rotation.coeffs().allFinite(),
          ErrorCode::InvalidArgument,
          frameLabel(f) + ": segment " + std::to_string(s) + " is not finite");
    }
    if (f > 0) {
      EGOFUSE_CHECK(
          fr.tNs > frames[f - 1].tNs,
          ErrorCode::InvariantViolation,
          frameLabel(f) + ": timestamps not strictly increasing");
    }
  }
}

void RetargetMap::validate(const RigModel& rig, int segmentCount, int landmarkCount) const {
  for (std::size_t i = 0; i < correspondences.size(); ++i) {
    const auto& c = correspondences[i];
    const std::string label = "correspondence " + std::to_string(i);
    EGOFUSE_CHECK(
        c.source >= 0 && c.source < landmarkCount,
        ErrorCode::InvariantViolation,
        label + ": source landmark out of range");
    EGOFUSE_CHECK(
        c.rig >= 0 && c.rig < static_cast<int>(rig.landmarks.size()),
        ErrorCode::InvariantViolation,
        label + ": rig landmark out of range");
    EGOFUSE_CHECK(
        std::isfinite(c.weight) && c.weight >= 0.0,
        ErrorCode::InvariantViolation,
        label + ": weight must be finite and >= 0");
  }
  for (std::size_t i = 0; i < segmentPairs.size(); ++i) {
    const auto& s = segmentPairs[i];
    const std::string label = "segment pair " + std::to_string(i);
    EGOFUSE_CHECK(
        s.segment >= 0 && s.segment < segmentCount,
        ErrorCode::InvariantViolation,
        label + ": segment out of range");
    EGOFUSE_CHECK(
        s.joint >= 0 && s.joint < rig.jointCount(),
        ErrorCode::InvariantViolation,
        label + ": joint out of range");
    EGOFUSE_CHECK(
        std::isfinite(s.weight) && s.weight >= 0.0,
        ErrorCode::InvariantViolation,
        label + ": weight must be finite and >= 0");
  }
}

void IkSettings::validate() const {
  EGOFUSE_CHECK(
      identityRegWeight > 0.0 && limitWeight > 0.0 && maxIterations > 0 &&
          coldStartIterations > 0 && stepTolerance > 0.0 &&
          initialDamping > 0.0 && identityStride > 0,
      ErrorCode::InvalidArgument,
      "IK settings must all be positive");
}

RigidTransform initialRootGuess(
    const RigModel& rig, const RetargetMap& map, const SourceFrame& source, const VecX& identity) {
  if (map.correspondences.size() < 3) {
    return {};
  }
  const Kinematics kin = computeKinematics(rig, identity, zeroFrame(rig));
  Eigen::Matrix3Xd from(3, map.correspondences.size());
  Eigen::Matrix3Xd to(3, map.correspondences.size());
  for (std::size_t i = 0; i < map.correspondences.size(); ++i) {
    const auto& c = map.correspondences[i];
    const auto& lm = rig.landmarks[c.rig];
    from.col(static_cast<Eigen::Index>(i)) =
        kin.rotation[lm.joint] * lm.offset + kin.position[lm.joint];
    to.col(static_cast<Eigen::Index>(i)) = source.landmarks[c.source];
  }
  const Eigen::Matrix4d t = Eigen::umeyama(from, to, false);
  if (!t.allFinite()) {
    return {};
  }
  return {Quat(Mat3(t.topLeftCorner<3, 3>())), t.topRightCorner<3, 1>()};
}

IkResult solveIkFrame(
    const RigModel& rig,
    const RetargetMap& map,
    const SourceFrame& source,
    const VecX& identityPrior,
    const PoseFrame& init,
    const VecX& initIdentity,
    const IkSettings& settings,
    bool optimizeIdentity) {
  settings.validate();
  EGOFUSE_CHECK(
      init.pose.size() == rig.poseDofCount,
      ErrorCode::DimensionMismatch,
      "IK init pose has wrong size");
  EGOFUSE_CHECK(
      initIdentity.size() == rig.identityDim && identityPrior.size() == rig.identityDim,
      ErrorCode::DimensionMismatch,
      "IK identity has wrong size");
  map.validate(
      rig, static_cast<int>(source.segments.size()), static_cast<int>(source.landmarks.size()));

  IkProblem problem(
      rig, map, {&source}, {{init}, initIdentity}, identityPrior, settings, optimizeIdentity);
  const auto summary = solveLevenbergMarquardt(problem, lmOptions(settings));
  IkResult r;
  r.frame = problem.state().frames[0];
  r.frame.tNs = source.tNs;
  r.identity = problem.state().identity;
  r.converged = summary.converged;
  r.iterations = summary.iterations;
  r.landmarkRmse = problem.landmarkRmse(0);
  for (int t = kLandmarks; t <= kLimits; ++t) {
    const auto it = summary.termCosts.find(t);
    r.termCosts[ikTermName(t)] = it == summary.termCosts.end() ? 0.0 : it->second;
  }
  return r;
}

RetargetResult retargetSequence(
    const RigModel& rig,
    const RetargetMap& map,
    const SourceMotion& source,
    const VecX& identityPrior,
    const IkSettings& settings) {
  settings.validate();
  source.validate();
  map.validate(rig, source.segmentCount, source.landmarkCount);
  EGOFUSE_CHECK(
      identityPrior.size() == rig.identityDim,
      ErrorCode::DimensionMismatch,
      "identity prior has wrong size");

  RetargetResult result;
  const auto& frames = source.frames;

  // Stage 1: shared identity over a strided subset of frames.
  VecX identity = identityPrior;
  if (!map.correspondences.empty()) {
    std::vector<const SourceFrame*> subset;
    IkState init;
    init.identity = identityPrior;
    for (std::size_t f = 0; f < frames.size(); f += settings.identityStride) {
      subset.push_back(&frames[f]);
      PoseFrame pf = zeroFrame(rig, frames[f].tNs);
      pf.root = initialRootGuess(rig, map, frames[f], identityPrior);
      init.frames.push_back(pf);
    }
    IkProblem stage1(rig, map, subset, init, identityPrior, settings, true);
    LmOptions opts = lmOptions(settings);
    opts.maxIterations = std::max(opts.maxIterations, settings.coldStartIterations);
    const auto summary = solveLevenbergMarquardt(stage1, opts);
    result.identityStageConverged = summary.converged;
    identity = stage1.state().identity;
  }

  // Stage 2: frozen identity, sequential warm-started pose solves.
  result.motion.rigName = rig.name;
  result.motion.identity = identity;
  result.motion.rateHz = source.rateHz;
  result.motion.frames.reserve(frames.size());
  PoseFrame prev = zeroFrame(rig, frames.front().tNs);
  prev.root = initialRootGuess(rig, map, frames.front(), identity);
  double errSum = 0.0;
  IkSettings cold = settings;
  cold.maxIterations = std::max(settings.maxIterations, settings.coldStartIterations);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    IkResult r;
    try {
      r = solveIkFrame(
          rig, map, frames[f], identityPrior, prev, identity, f == 0 ? cold : settings, false);
    } catch (const Error& e) {
      throw Error(e.code(), frameLabel(f) + ": " + e.what());
    }
    if (!r.converged) {
      result.nonConvergedFrames.push_back(static_cast<int>(f));
    }
    errSum += r.landmarkRmse;
    prev = r.frame;
    result.motion.frames.push_back(r.frame);
  }
  result.meanLandmarkError = errSum / static_cast<double>(frames.size());
  return result;
}

std::vector<int> deskSegmentJoints(const RigModel& rig) {
  return {
      rig.named.root,
      rig.named.head,
      rig.jointIndex("l_elbow"),
      rig.named.leftWrist,
      rig.jointIndex("r_elbow"),
      rig.named.rightWrist,
      rig.named.leftHeel,
      rig.named.rightHeel};
}

RetargetMap makeDeskRetargetMap(const RigModel& rig) {
  RetargetMap map;
  for (int l = 0; l < static_cast<int>(rig.landmarks.size()); ++l) {
    map.correspondences.push_back({l, l, 1.0});
  }
  const auto segs = deskSegmentJoints(rig);
  for (int s = 0; s < static_cast<int>(segs.size()); ++s) {
    map.segmentPairs.push_back({s, segs[s], 1.0});
  }
  return map;
}

// ---------------------------------------------------------------------------
// Serialization

std::string sourceMotionToJson(const SourceMotion& motion) {
  io::Json j;
  j["segment_count"] = motion.segmentCount;
  j["landmark_count"] = motion.landmarkCount;
  j["rate_hz"] = motion.rateHz;
  j["segment_names"] = motion.segmentNames;
  io::Json frames = io::Json::array();
  for (const auto& f : motion.frames) {
    io::Json segs = io::Json::array();
    for (const auto& s : f.segments) {
      segs.push_back(io::poseToJson(s));
    }
    io::Json lms = io::Json::array();
    for (const auto& l : f.landmarks) {
      lms.push_back(io::toJson(l));
    }
    frames.push_back({{"t_ns", f.tNs}, {"segments", segs}, {"landmarks", lms}});
  }
  j["frames"] = frames;
  return j.dump() + "\n";
}

SourceMotion sourceMotionFromJson(const std::string& text) {
  SourceMotion m;
  try {
    const auto j = io::Json::parse(text);
    m.segmentCount = j.at("segment_count").get<int>();
    m.landmarkCount = j.at("landmark_count").get<int>();
    m.rateHz = j.value("rate_hz", 0.0);
    m.segmentNames = j.value("segment_names", std::vector<std::string>{});
    const auto& frames = j.at("frames");
    m.frames.reserve(frames.size());
    for (std::size_t f = 0; f < frames.size(); ++f) {
      const auto& e = frames[f];
      SourceFrame sf;
      sf.tNs = e.at("t_ns").get<TimeNs>();
      for (const auto& s : e.at("segments")) {
        sf.segments.push_back(io::poseFromJson(s, frameLabel(f) + " segment"));
      }
      for (const auto& l : e.at("landmarks")) {
        // Non-finite values are written as null by the JSON encoder.
        if (l.is_array() && l.size() == 3 &&
            (l[0].is_null() || l[1].is_null() || l[2].is_null())) {
          sf.landmarks.emplace_back(Vec3::Constant(std::nan("")));
          continue;
        }
        sf.landmarks.push_back(io::vec3FromJson(l, frameLabel(f) + " landmark"));
      }
      m.frames.push_back(std::move(sf));
    }
  } catch (const io::Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("source motion: ") + e.what());
  }
  return m;
}

SourceMotion readSourceMotion(const std::filesystem::path& path) {
  try {
    return sourceMotionFromJson(io::readText(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) {
      throw;
    }
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void writeSourceMotion(const std::filesystem::path& path, const SourceMotion& motion) {
  io::writeText(path, sourceMotionToJson(motion));
}

std::string retargetMapToJson(const RetargetMap& map) {
  io::Json j;
  io::Json corr = io::Json::array();
  for (const auto& c : map.correspondences) {
    corr.push_back({{"source", c.source}, {"rig", c.rig}, {"weight", c.weight}});
  }
  j["correspondences"] = corr;
  io::Json segs = io::Json::array();
  for (const auto& s : map.segmentPairs) {
    segs.push_back({{"segment", s.segment}, {"joint", s.joint}, {"weight", s.weight}});
  }
  j["segment_pairs"] = segs;
  return j.dump(1) + "\n";
}

RetargetMap retargetMapFromJson(const std::string& text) {
  RetargetMap map;
  try {
    const auto j = io::Json::parse(text);
    for (const auto& e : j.at("correspondences")) {
      map.correspondences.push_back(
          {e.at("source").get<int>(), e.at("rig").get<int>(), e.value("weight", 1.0)});
    }
    for (const auto& e : j.value("segment_pairs", io::Json::array())) {
      map.segmentPairs.push_back(
          {e.at("segment").get<int>(), e.at("joint").get<int>(), e.value("weight", 1.0)});
    }
  } catch (const io::Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("retarget map: ") + e.what());
  }
  return map;
}

RetargetMap readRetargetMap(const std::filesystem::path& path) {
  try {
    return retargetMapFromJson(io::readText(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) {
      throw;
    }
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

} // namespace egofuse
