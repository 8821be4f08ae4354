#include "egofuse/fuse.h"

#include "egofuse/error.h"
#include "egofuse/io.h"
#include "egofuse/residuals.h"

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>

namespace egofuse {

namespace {

constexpr std::array<const char*, kFusionTermCount> kTermNames = {
    "tracking", "prior", "limits", "smooth", "gravity", "foot", "seam"};

std::vector<int> concat(std::vector<int> a, const std::vector<int>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::vector<int> rootColumns(const RigModel& rig, int frame, int frameCount) {
  return problemColumns(rig, {0, 1, 2, 3, 4, 5}, frame, frameCount);
}

std::vector<int> poseColumns(const RigModel& rig, int frame, int frameCount) {
  std::vector<int> local(static_cast<std::size_t>(rig.poseDofCount));
  for (int d = 0; d < rig.poseDofCount; ++d) {
    local[static_cast<std::size_t>(d)] = kPoseCol + d;
  }
  return problemColumns(rig, local, frame, frameCount);
}

void checkWeight(double w, const char* name) {
  EGOFUSE_CHECK(
      std::isfinite(w) && w >= 0.0,
      ErrorCode::InvalidArgument,
      std::string(name) + " must be finite and non-negative");
}

} // namespace

void FusionConfig::validate() const {
  checkWeight(lambdaX, "lambda_X");
  checkWeight(lambdaL, "lambda_l");
  checkWeight(lambdaSmooth, "lambda_smooth");
  checkWeight(lambdaG, "lambda_g");
  checkWeight(lambda0, "lambda_0");
  checkWeight(lambdaAlpha, "lambda_alpha");
  checkWeight(seamWeight, "seam_weight");
  checkWeight(epsV, "eps_v");
  EGOFUSE_CHECK(vSigma > 0.0, ErrorCode::InvalidArgument, "v_sigma must be positive");
  EGOFUSE_CHECK(delta > 0.0, ErrorCode::InvalidArgument, "delta must be positive");
  EGOFUSE_CHECK(
      smoothOrder == 1 || smoothOrder == 2, ErrorCode::InvalidArgument, "smooth_order must be 1 or 2");
  EGOFUSE_CHECK(batchSize >= 2, ErrorCode::InvalidArgument, "batch_size must be at least 2");
  EGOFUSE_CHECK(maxIterations >= 0, ErrorCode::InvalidArgument, "max_iterations must be >= 0");
  EGOFUSE_CHECK(tolerance >= 0.0, ErrorCode::InvalidArgument, "tolerance must be >= 0");
  EGOFUSE_CHECK(
      initialDamping > 0.0, ErrorCode::InvalidArgument, "initial_damping must be positive");
}

std::string fusionConfigToJson(const FusionConfig& cfg) {
  io::Json j;
  j["lambda_X"] = cfg.lambdaX;
  j["lambda_l"] = cfg.lambdaL;
  j["lambda_smooth"] = cfg.lambdaSmooth;
  j["smooth_order"] = cfg.smoothOrder;
  j["lambda_g"] = cfg.lambdaG;
  j["lambda_0"] = cfg.lambda0;
  j["lambda_alpha"] = cfg.lambdaAlpha;
  j["v_sigma"] = cfg.vSigma;
  j["delta"] = cfg.delta;
  j["batch_size"] = cfg.batchSize;
  j["eps_v"] = cfg.epsV;
  j["seam_weight"] = cfg.seamWeight;
  j["max_iterations"] = cfg.maxIterations;
  j["tolerance"] = cfg.tolerance;
  j["initial_damping"] = cfg.initialDamping;
  return j.dump(1) + "\n";
}

FusionConfig fusionConfigFromJson(const std::string& text) {
  FusionConfig cfg;
  try {
    const auto j = io::Json::parse(text);
    EGOFUSE_CHECK(j.is_object(), ErrorCode::ParseError, "fusion config must be a JSON object");
    const std::map<std::string, double*> reals = {
        {"lambda_X", &cfg.lambdaX},
        {"lambda_l", &cfg.lambdaL},
        {"lambda_smooth", &cfg.lambdaSmooth},
        {"lambda_g", &cfg.lambdaG},
        {"lambda_0", &cfg.lambda0},
        {"lambda_alpha", &cfg.lambdaAlpha},
        {"v_sigma", &cfg.vSigma},
        {"delta", &cfg.delta},
        {"eps_v", &cfg.epsV},
        {"seam_weight", &cfg.seamWeight},
        {"tolerance", &cfg.tolerance},
        {"initial_damping", &cfg.initialDamping},
    };
    const std::map<std::string, int*> ints = {
        {"batch_size", &cfg.batchSize},
        {"smooth_order", &cfg.smoothOrder},
        {"max_iterations", &cfg.maxIterations},
    };
    for (const auto& [key, value] : j.items()) {
      if (auto r = reals.find(key); r != reals.end()) {
        *r->second = value.get<double>();
      } else if (auto i = ints.find(key); i != ints.end()) {
        *i->second = value.get<int>();
      } else {
        throw Error(ErrorCode::ParseError, "fusion config: unknown key '" + key + "'");
      }
    }
  } catch (const io::Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("fusion config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

FusionConfig readFusionConfig(const std::filesystem::path& path) {
  try {
    return fusionConfigFromJson(io::readText(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) {
      throw;
    }
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::string contactsToJson(const ContactLabels& c) {
  io::Json j;
  j["provenance"] =
      c.provenance == ContactProvenance::Provided ? "provided" : "derived_from_velocity";
  io::Json left = io::Json::array();
  io::Json right = io::Json::array();
  for (const auto& f : c.frames) {
    left.push_back(f[0] ? 1 : 0);
    right.push_back(f[1] ? 1 : 0);
  }
  j["left"] = left;
  j["right"] = right;
  return j.dump() + "\n";
}

ContactLabels contactsFromJson(const std::string& text) {
  ContactLabels c;
  try {
    const auto j = io::Json::parse(text);
    const std::string prov = j.value("provenance", std::string("provided"));
    if (prov == "provided") {
      c.provenance = ContactProvenance::Provided;
    } else if (prov == "derived_from_velocity") {
      c.provenance = ContactProvenance::DerivedFromVelocity;
    } else {
      throw Error(ErrorCode::ParseError, "contacts: unknown provenance '" + prov + "'");
    }
    const auto& left = j.at("left");
    const auto& right = j.at("right");
    EGOFUSE_CHECK(
        left.size() == right.size(),
        ErrorCode::ParseError,
        "contacts: left has " + std::to_string(left.size()) + " frames, right has " +
            std::to_string(right.size()));
    for (std::size_t k = 0; k < left.size(); ++k) {
      c.frames.push_back({left[k].get<int>() != 0, right[k].get<int>() != 0});
    }
  } catch (const io::Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("contacts: ") + e.what());
  }
  return c;
}

ContactLabels readContacts(const std::filesystem::path& path) {
  try {
    return contactsFromJson(io::readText(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) {
      throw;
    }
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void writeContacts(const std::filesystem::path& path, const ContactLabels& c) {
  io::writeText(path, contactsToJson(c));
}

double adaptiveFootWeight(double velX, const FusionConfig& cfg) {
  EGOFUSE_CHECK(
      velX >= 0.0, ErrorCode::NegativeVelocity, "foot velocity must be non-negative");
  return cfg.lambda0 + cfg.lambdaAlpha * std::exp(-velX / cfg.vSigma);
}

std::vector<std::array<double, 2>> heelSpeeds(const MotionSequence& motion, const RigModel& rig) {
  const std::size_t n = motion.frames.size();
  std::vector<std::array<Vec3, 2>> pos(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto kin = computeKinematics(rig, motion.identity, motion.frames[k]);
    pos[k] = {kin.position[rig.named.leftHeel], kin.position[rig.named.rightHeel]};
  }
  std::vector<std::array<double, 2>> speed(n, {0.0, 0.0});
  if (n < 2) {
    return speed;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t a = k == 0 ? 0 : k - 1;
    const std::size_t b = k + 1 == n ? k : k + 1;
    const double dt = static_cast<double>(motion.frames[b].tNs - motion.frames[a].tNs) * 1e-9;
    for (int s = 0; s < 2; ++s) {
      speed[k][s] = (pos[b][s] - pos[a][s]).norm() / dt;
    }
  }
  return speed;
}

ContactLabels deriveContacts(const MotionSequence& thetaX, const RigModel& rig, double epsV) {
  ContactLabels c;
  c.provenance = ContactProvenance::DerivedFromVelocity;
  for (const auto& s : heelSpeeds(thetaX, rig)) {
    c.frames.push_back({s[0] < epsV, s[1] < epsV});
  }
  if (thetaX.frames.size() == 1) {
    c.frames[0] = {true, true};
  }
  return c;
}

const char* fusionTermName(int term) {
  EGOFUSE_CHECK(
      term >= 0 && term < kFusionTermCount, ErrorCode::OutOfRange, "unknown fusion term");
  return kTermNames[static_cast<std::size_t>(term)];
}

Vec3 rootUpAxis(const RigModel&) {
  return Vec3::UnitZ();
}

ResidualBlock trackingResidual(
    const RigModel& rig, const Kinematics& kin, int joint, const Vec3& target, double delta,
    int frame, int frameCount, bool withJacobian) {
  auto b = pointResidual(
      rig, kin, joint, Vec3::Zero(), target, 1.0, frame, frameCount, false, withJacobian);
  b.huberDelta = delta;
  b.term = kTermTracking;
  return b;
}

ResidualBlock priorResidual(
    const RigModel& rig, const VecX& pose, const VecX& poseX, double lambdaX, int frame,
    int frameCount, bool withJacobian) {
  const double w = std::sqrt(lambdaX);
  ResidualBlock b;
  b.term = kTermPrior;
  b.residual = w * (pose - poseX);
  b.cols = poseColumns(rig, frame, frameCount);
  if (withJacobian) {
    b.jacobian = w * Eigen::MatrixXd::Identity(rig.poseDofCount, rig.poseDofCount);
  }
  return b;
}

ResidualBlock limitResidual(
    const RigModel& rig, const VecX& pose, double lambdaL, int frame, int frameCount,
    bool withJacobian) {
  const double w = std::sqrt(lambdaL);
  ResidualBlock b;
  b.term = kTermLimits;
  b.residual = Eigen::VectorXd::Zero(rig.poseDofCount);
  b.cols = poseColumns(rig, frame, frameCount);
  if (withJacobian) {
    b.jacobian = Eigen::MatrixXd::Zero(rig.poseDofCount, rig.poseDofCount);
  }
  for (int d = 0; d < rig.poseDofCount; ++d) {
    const auto& lim = rig.limits[static_cast<std::size_t>(d)];
    double excess = 0.0;
    if (pose[d] > lim.max) {
      excess = pose[d] - lim.max;
    } else if (pose[d] < lim.min) {
      excess = pose[d] - lim.min;
    } else {
      continue;
    }
    b.residual[d] = w * excess;
    if (withJacobian) {
      b.jacobian(d, d) = w;
    }
  }
  return b;
}

ResidualBlock smoothResidual(
    const RigModel& rig, const RigidTransform& rootA, const RigidTransform& rootB,
    double lambdaSmooth, int frame, int frameCount, bool withJacobian) {
  const double w = std::sqrt(lambdaSmooth);
  ResidualBlock b;
  b.term = kTermSmooth;
  const Vec3 r = logMap(rootA.rotation.conjugate() * rootB.rotation);
  b.residual.resize(6);
  b.residual << w * (rootB.translation - rootA.translation), w * r;
  b.cols = concat(rootColumns(rig, frame, frameCount), rootColumns(rig, frame + 1, frameCount));
  if (withJacobian) {
    // Log(Exp(-da) M Exp(db)): db enters through Jr^{-1}(r), da through
    // -Jl^{-1}(r) = -Jr^{-1}(r)^T.
    const Mat3 jri = rightJacobianInverse(r);
    b.jacobian = Eigen::MatrixXd::Zero(6, 12);
    b.jacobian.block<3, 3>(0, 0) = -w * Mat3::Identity();
    b.jacobian.block<3, 3>(0, 6) = w * Mat3::Identity();
    b.jacobian.block<3, 3>(3, 3) = -w * jri.transpose();
    b.jacobian.block<3, 3>(3, 9) = w * jri;
  }
  return b;
}

ResidualBlock smoothSecondResidual(
    const RigModel& rig, const RigidTransform& rootA, const RigidTransform& rootB,
    const RigidTransform& rootC, double lambdaSmooth, int frame, int frameCount,
    bool withJacobian) {
  const double w = std::sqrt(lambdaSmooth);
  ResidualBlock b;
  b.term = kTermSmooth;
  const Vec3 r1 = logMap(rootA.rotation.conjugate() * rootB.rotation);
  const Vec3 r2 = logMap(rootB.rotation.conjugate() * rootC.rotation);
  b.residual.resize(6);
  b.residual << w * (rootC.translation - 2.0 * rootB.translation + rootA.translation),
      w * (r2 - r1);
  b.cols = concat(
      concat(rootColumns(rig, frame, frameCount), rootColumns(rig, frame + 1, frameCount)),
      rootColumns(rig, frame + 2, frameCount));
  if (withJacobian) {
    const Mat3 j1 = rightJacobianInverse(r1);
    const Mat3 j2 = rightJacobianInverse(r2);
    b.jacobian = Eigen::MatrixXd::Zero(6, 18);
    b.jacobian.block<3, 3>(0, 0) = w * Mat3::Identity();
    b.jacobian.block<3, 3>(0, 6) = -2.0 * w * Mat3::Identity();
    b.jacobian.block<3, 3>(0, 12) = w * Mat3::Identity();
    b.jacobian.block<3, 3>(3, 3) = w * j1.transpose();
    b.jacobian.block<3, 3>(3, 9) = -w * (j2.transpose() + j1);
    b.jacobian.block<3, 3>(3, 15) = w * j2;
  }
  return b;
}

ResidualBlock gravityResidual(
    const RigModel& rig, const Quat& root, const Quat& rootX, double lambdaG, int frame,
    int frameCount, bool withJacobian) {
  const double w = std::sqrt(lambdaG);
  const Vec3 up = rootUpAxis(rig);
  const Mat3 rot = root.toRotationMatrix();
  const Vec3 a = rot * up;
  const Vec3 bx = rootX * up;
  const Vec3 c = a.cross(bx);
  const double s = c.norm();
  const double d = a.dot(bx);
  const double theta = std::atan2(s, d);
  ResidualBlock b;
  b.term = kTermGravity;
  b.cols = problemColumns(rig, {3, 4, 5}, frame, frameCount);
  // Below this the axis is numerically undefined and theta / s -> 1 / d.
  const bool tiny = s < 1e-9;
  const double k = tiny ? 1.0 / d : theta / s;
  b.residual = w * k * c;
  if (withJacobian) {
    const Mat3 dcDa = -skew(bx);
    Mat3 drDa = k * dcDa;
    if (!tiny) {
      const Eigen::RowVector3d dsDa = c.transpose() * dcDa / s;
      const Eigen::RowVector3d ddDa = bx.transpose();
      const Eigen::RowVector3d dthDa = (d * dsDa - s * ddDa) / (s * s + d * d);
      const Eigen::RowVector3d dkDa = (dthDa * s - theta * dsDa) / (s * s);
      drDa += c * dkDa;
    }
    // a(delta) = R Exp(delta) up, so da/ddelta = -R [up]x.
    b.jacobian = w * drDa * (-rot * skew(up));
  }
  return b;
}

ResidualBlock footResidual(
    const RigModel& rig, const Kinematics& kinA, const Kinematics& kinB, int joint, double weight,
    double dtSeconds, int frame, int frameCount, bool withJacobian) {
  EGOFUSE_CHECK(dtSeconds > 0.0, ErrorCode::InvalidArgument, "foot residual needs dt > 0");
  const double w = std::sqrt(weight) / dtSeconds;
  const Vec3& pa = kinA.position[joint];
  const Vec3& pb = kinB.position[joint];
  ResidualBlock b;
  b.term = kTermFoot;
  b.residual = w * (pb - pa);
  const auto local = pointColumns(rig, joint, false);
  b.cols = concat(
      problemColumns(rig, local, frame, frameCount),
      problemColumns(rig, local, frame + 1, frameCount));
  if (withJacobian) {
    const auto m = static_cast<Eigen::Index>(local.size());
    Eigen::MatrixXd ja(3, m);
    Eigen::MatrixXd jb(3, m);
    pointJacobian(rig, kinA, joint, pa, false, ja);
    pointJacobian(rig, kinB, joint, pb, false, jb);
    b.jacobian.resize(3, 2 * m);
    b.jacobian << -w * ja, w * jb;
  }
  return b;
}

ResidualBlock seamResidual(
    const RigModel& rig, const PoseFrame& current, const PoseFrame& target, double weight,
    int frame, int frameCount, bool withJacobian) {
  const double w = std::sqrt(weight);
  const int n = frameParamCount(rig);
  const Vec3 r = logMap(target.root.rotation.conjugate() * current.root.rotation);
  ResidualBlock b;
  b.term = kTermSeam;
  b.residual.resize(n);
  b.residual << w * (current.root.translation - target.root.translation), w * r,
      w * (current.pose - target.pose);
  std::vector<int> local(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c) {
    local[static_cast<std::size_t>(c)] = c;
  }
  b.cols = problemColumns(rig, local, frame, frameCount);
  if (withJacobian) {
    b.jacobian = w * Eigen::MatrixXd::Identity(n, n);
    b.jacobian.block<3, 3>(3, 3) = w * rightJacobianInverse(r);
  }
  return b;
}

bool FusionReport::converged() const {
  return std::all_of(
      batches.begin(), batches.end(), [](const BatchReport& b) { return b.converged; });
}

std::string fusionReportToJson(const FusionReport& r) {
  io::Json j;
  j["term_losses"] = r.termLosses;
  io::Json batches = io::Json::array();
  for (const auto& b : r.batches) {
    batches.push_back({
        {"first_frame", b.firstFrame},
        {"frame_count", b.frameCount},
        {"converged", b.converged},
        {"iterations", b.iterations},
        {"initial_cost", b.initialCost},
        {"final_cost", b.finalCost},
        {"accepted_costs", b.acceptedCosts},
    });
  }
  j["batches"] = batches;
  j["converged"] = r.converged();
  return j.dump(1) + "\n";
}

FusionReport fusionReportFromJson(const std::string& text) {
  FusionReport r;
  try {
    const auto j = io::Json::parse(text);
    r.termLosses = j.at("term_losses").get<std::map<std::string, double>>();
    for (const auto& e : j.at("batches")) {
      BatchReport b;
      b.firstFrame = e.at("first_frame").get<int>();
      b.frameCount = e.at("frame_count").get<int>();
      b.converged = e.at("converged").get<bool>();
      b.iterations = e.at("iterations").get<int>();
      b.initialCost = e.at("initial_cost").get<double>();
      b.finalCost = e.at("final_cost").get<double>();
      b.acceptedCosts = e.at("accepted_costs").get<std::vector<double>>();
      r.batches.push_back(std::move(b));
    }
  } catch (const io::Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("fusion report: ") + e.what());
  }
  return r;
}

namespace {

struct FootPair {
  int frame; // batch-local index of the first frame
  int joint;
  double weight;
  double dt;
};

class FusionProblem final : public StructuredProblem {
 public:
  FusionProblem(
      const RigModel& rig,
      const FusionConfig& cfg,
      VecX identity,
      std::vector<PoseFrame> init,
      std::vector<const PoseFrame*> framesX,
      std::vector<std::array<std::optional<Vec3>, 3>> targets,
      std::vector<FootPair> feet,
      std::optional<PoseFrame> seam)
      : rig_(rig),
        cfg_(cfg),
        identity_(std::move(identity)),
        state_(std::move(init)),
        framesX_(std::move(framesX)),
        targets_(std::move(targets)),
        feet_(std::move(feet)),
        seam_(std::move(seam)) {}

  int frameCount() const override {
    return static_cast<int>(state_.size());
  }
  int frameDim() const override {
    return frameParamCount(rig_);
  }

  void evaluate(std::vector<ResidualBlock>& blocks, bool withJacobians) const override {
    blocks.clear();
    const int n = frameCount();
    std::vector<Kinematics> kin;
    kin.reserve(static_cast<std::size_t>(n));
    for (const auto& f : state_) {
      kin.push_back(computeKinematics(rig_, identity_, f));
    }
    const std::array<int, 3> tracked = {
        rig_.named.head, rig_.named.leftWrist, rig_.named.rightWrist};
    for (int f = 0; f < n; ++f) {
      const auto uf = static_cast<std::size_t>(f);
      for (std::size_t t = 0; t < tracked.size(); ++t) {
        if (targets_[uf][t]) {
          blocks.push_back(trackingResidual(
              rig_, kin[uf], tracked[t], *targets_[uf][t], cfg_.delta, f, n, withJacobians));
        }
      }
      if (cfg_.lambdaX > 0.0) {
        blocks.push_back(priorResidual(
            rig_, state_[uf].pose, framesX_[uf]->pose, cfg_.lambdaX, f, n, withJacobians));
      }
      if (cfg_.lambdaL > 0.0) {
        blocks.push_back(limitResidual(rig_, state_[uf].pose, cfg_.lambdaL, f, n, withJacobians));
      }
      if (cfg_.lambdaG > 0.0) {
        blocks.push_back(gravityResidual(
            rig_, state_[uf].root.rotation, framesX_[uf]->root.rotation, cfg_.lambdaG, f, n,
            withJacobians));
      }
      if (cfg_.lambdaSmooth > 0.0 && cfg_.smoothOrder == 1 && f + 1 < n) {
        blocks.push_back(smoothResidual(
            rig_, state_[uf].root, state_[uf + 1].root, cfg_.lambdaSmooth, f, n, withJacobians));
      }
      if (cfg_.lambdaSmooth > 0.0 && cfg_.smoothOrder == 2 && f + 2 < n) {
        blocks.push_back(smoothSecondResidual(
            rig_, state_[uf].root, state_[uf + 1].root, state_[uf + 2].root, cfg_.lambdaSmooth, f,
            n, withJacobians));
      }
    }
    for (const auto& p : feet_) {
      const auto uf = static_cast<std::size_t>(p.frame);
      blocks.push_back(footResidual(
          rig_, kin[uf], kin[uf + 1], p.joint, p.weight, p.dt, p.frame, n, withJacobians));
    }
    if (seam_) {
      blocks.push_back(seamResidual(rig_, state_[0], *seam_, cfg_.seamWeight, 0, n, withJacobians));
    }
  }

  void applyIncrement(const VecX& delta) override {
    const int n = frameDim();
    for (int f = 0; f < frameCount(); ++f) {
      auto& s = state_[static_cast<std::size_t>(f)];
      s = applyFrameIncrement(s, delta.segment(f * n, n));
    }
  }

  std::any saveState() const override {
    return state_;
  }
  void restoreState(const std::any& s) override {
    state_ = std::any_cast<std::vector<PoseFrame>>(s);
  }

  const std::vector<PoseFrame>& state() const {
    return state_;
  }

 private:
  const RigModel& rig_;
  const FusionConfig& cfg_;
  VecX identity_;
  std::vector<PoseFrame> state_;
  std::vector<const PoseFrame*> framesX_;
  std::vector<std::array<std::optional<Vec3>, 3>> targets_;
  std::vector<FootPair> feet_;
  std::optional<PoseFrame> seam_;
};

std::optional<Vec3> trackedPosition(const Trajectory* traj, TimeNs t) {
  if (traj == nullptr || traj->size() == 0 || !traj->covers(t)) {
    return std::nullopt;
  }
  return traj->interpolate(t).translation;
}

} // namespace

FusionResult fuseSequence(const FusionInputs& in, const RigModel& rig, const FusionConfig& cfg) {
  cfg.validate();
  EGOFUSE_CHECK(
      in.thetaRigid != nullptr && in.thetaX != nullptr,
      ErrorCode::InvalidArgument,
      "fusion needs both the rigidly aligned and the retargeted motion");
  const MotionSequence& rigid = *in.thetaRigid;
  const MotionSequence& thetaX = *in.thetaX;
  thetaX.validate(rig);
  rigid.validate(rig);
  const std::size_t total = rigid.frames.size();
  EGOFUSE_CHECK(
      thetaX.frames.size() == total,
      ErrorCode::FrameMisalignment,
      "rigid motion has " + std::to_string(total) + " frames, retargeted motion has " +
          std::to_string(thetaX.frames.size()));
  for (std::size_t k = 0; k < total; ++k) {
    EGOFUSE_CHECK(
        rigid.frames[k].tNs == thetaX.frames[k].tNs,
        ErrorCode::FrameMisalignment,
        "frame " + std::to_string(k) + " timestamps differ between rigid and retargeted motion");
  }
  EGOFUSE_CHECK(total > 0, ErrorCode::EmptyInput, "fusion needs at least one frame");

  FusionResult result;
  result.contactsUsed = in.contacts != nullptr ? *in.contacts
                                               : deriveContacts(thetaX, rig, cfg.epsV);
  EGOFUSE_CHECK(
      result.contactsUsed.size() == total,
      ErrorCode::FrameMisalignment,
      "contact labels have " + std::to_string(result.contactsUsed.size()) +
          " frames, motion has " + std::to_string(total));
  const auto& contacts = result.contactsUsed.frames;
  const auto speedX = heelSpeeds(thetaX, rig);
  const std::array<int, 2> heels = {rig.named.leftHeel, rig.named.rightHeel};

  result.motion = rigid;
  result.motion.identity = thetaX.identity;
  std::vector<double> termTotals(kFusionTermCount, 0.0);

  std::size_t first = 0;
  std::optional<PoseFrame> seam;
  while (true) {
    const std::size_t end = std::min(first + static_cast<std::size_t>(cfg.batchSize), total);
    const int n = static_cast<int>(end - first);
    std::vector<PoseFrame> init(rigid.frames.begin() + static_cast<long>(first),
                                rigid.frames.begin() + static_cast<long>(end));
    if (seam) {
      init[0] = *seam;
    }
    std::vector<const PoseFrame*> framesX;
    std::vector<std::array<std::optional<Vec3>, 3>> targets;
    for (std::size_t k = first; k < end; ++k) {
      framesX.push_back(&thetaX.frames[k]);
      const TimeNs t = rigid.frames[k].tNs;
      targets.push_back(
          {trackedPosition(in.head, t), trackedPosition(in.leftWrist, t),
           trackedPosition(in.rightWrist, t)});
    }
    std::vector<FootPair> feet;
    for (std::size_t k = first; k + 1 < end; ++k) {
      const double dt = static_cast<double>(rigid.frames[k + 1].tNs - rigid.frames[k].tNs) * 1e-9;
      for (int s = 0; s < 2; ++s) {
        const bool ca = contacts[k][s];
        const bool cb = contacts[k + 1][s];
        const bool restA = ca || speedX[k][s] < cfg.epsV;
        const bool restB = cb || speedX[k + 1][s] < cfg.epsV;
        if (!restA || !restB) {
          continue;
        }
        const double vel = (ca && cb) ? 0.0 : std::max(speedX[k][s], speedX[k + 1][s]);
        const double weight = adaptiveFootWeight(vel, cfg);
        if (weight > 0.0) {
          feet.push_back({static_cast<int>(k - first), heels[s], weight, dt});
        }
      }
    }

    FusionProblem problem(
        rig, cfg, thetaX.identity, std::move(init), std::move(framesX), std::move(targets),
        std::move(feet), seam);
    LmOptions opts;
    opts.maxIterations = cfg.maxIterations;
    opts.initialDamping = cfg.initialDamping;
    opts.stepTolerance = cfg.tolerance;
    opts.relativeCostTolerance = cfg.tolerance;
    const LmSummary summary = solveLevenbergMarquardt(problem, opts);

    BatchReport br;
    br.firstFrame = static_cast<int>(first);
    br.frameCount = n;
    br.converged = summary.converged;
    br.iterations = summary.iterations;
    br.initialCost = summary.initialCost;
    br.finalCost = summary.finalCost;
    br.acceptedCosts = summary.acceptedCosts;
    result.report.batches.push_back(std::move(br));
    for (const auto& [term, cost] : summary.termCosts) {
      termTotals[static_cast<std::size_t>(term)] += cost;
    }

    const auto& solved = problem.state();
    for (std::size_t k = first; k < end; ++k) {
      result.motion.frames[k] = solved[k - first];
    }
    if (end == total) {
      break;
    }
    seam = solved.back();
    first = end - 1;
  }
  for (int t = 0; t < kFusionTermCount; ++t) {
    result.report.termLosses[fusionTermName(t)] = termTotals[static_cast<std::size_t>(t)];
  }
  return result;
}

} // namespace egofuse
