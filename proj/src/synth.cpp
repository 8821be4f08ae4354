#include "egofuse/synth.h"

#include "egofuse/align.h"
#include "egofuse/error.h"
#include "egofuse/io.h"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

namespace egofuse {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::uint64_t splitmix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

TimeNs frameTime(int k, double rateHz) {
  return static_cast<TimeNs>(std::llround(static_cast<double>(k) * 1e9 / rateHz));
}

} // namespace

RandomStream::RandomStream(std::uint64_t seed, std::string_view name)
    : key_(splitmix64(seed ^ fnv1a(name))) {}

RandomStream::result_type RandomStream::operator()() {
  return splitmix64(key_ + (counter_++) * kGolden);
}

double RandomStream::uniform(double lo, double hi) {
  const double u = static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

double RandomStream::normal(double sigma) {
  return sigma * gauss_(*this);
}

Vec3 RandomStream::normal3(double sigma) {
  const double x = normal(sigma);
  const double y = normal(sigma);
  const double z = normal(sigma);
  return {x, y, z};
}

// ---------------------------------------------------------------------------

void ScenarioParams::validate() const {
  auto check = [](bool ok, const std::string& what) {
    EGOFUSE_CHECK(ok, ErrorCode::InvalidArgument, "scenario: " + what);
  };
  check(durationS > 0.0, "duration_s must be positive");
  check(rateHz > 0.0, "rate_hz must be positive");
  check(sigmaT >= 0.0 && sigmaR >= 0.0 && sigmaW >= 0.0, "noise levels must be non-negative");
  check(driftKnotS > 0.0, "drift_knot_s must be positive");
  check(postureErrorRad >= 0.0 && postureErrorRad <= 0.3, "posture_error_rad must be in [0, 0.3]");
  check(subjectHeightM > 1.2 && subjectHeightM < 2.3, "subject_height_m must be in (1.2, 2.3)");
  check(populationSize >= 3, "population_size must be at least 3");
  check(walkSpeed > 0.0 && walkSpeed <= 1.2, "walk_speed must be in (0, 1.2]");
  check(pathRadius >= 1.0, "path_radius must be at least 1 m");
  check(stepPeriodS >= 0.5 && stepPeriodS <= 3.0, "step_period_s must be in [0.5, 3]");
  check(cameraRateHz > 0.0 && cameraRateHz <= rateHz, "camera_rate_hz must be in (0, rate_hz]");
}

namespace {

std::vector<std::pair<const char*, double ScenarioParams::*>> realFields() {
  return {
      {"duration_s", &ScenarioParams::durationS},
      {"rate_hz", &ScenarioParams::rateHz},
      {"sigma_t", &ScenarioParams::sigmaT},
      {"sigma_r", &ScenarioParams::sigmaR},
      {"sigma_w", &ScenarioParams::sigmaW},
      {"drift_knot_s", &ScenarioParams::driftKnotS},
      {"posture_error_rad", &ScenarioParams::postureErrorRad},
      {"subject_height_m", &ScenarioParams::subjectHeightM},
      {"walk_speed", &ScenarioParams::walkSpeed},
      {"path_radius", &ScenarioParams::pathRadius},
      {"step_period_s", &ScenarioParams::stepPeriodS},
      {"camera_rate_hz", &ScenarioParams::cameraRateHz},
  };
}

} // namespace

std::string scenarioParamsToJson(const ScenarioParams& p) {
  io::Json j;
  for (const auto& [key, field] : realFields()) {
    j[key] = p.*field;
  }
  j["population_size"] = p.populationSize;
  return j.dump(1) + "\n";
}

ScenarioParams scenarioParamsFromJson(const std::string& text) {
  ScenarioParams p;
  try {
    const auto j = io::Json::parse(text);
    EGOFUSE_CHECK(j.is_object(), ErrorCode::ParseError, "scenario params must be an object");
    const auto fields = realFields();
    for (const auto& [key, value] : j.items()) {
      if (key == "population_size") {
        p.populationSize = value.get<int>();
        continue;
      }
      bool known = false;
      for (const auto& [name, field] : fields) {
        if (key == name) {
          p.*field = value.get<double>();
          known = true;
        }
      }
      EGOFUSE_CHECK(known, ErrorCode::ParseError, "scenario params: unknown key '" + key + "'");
    }
  } catch (const io::Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("scenario params: ") + e.what());
  }
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Gait

namespace {

struct GaitShape {
  double period;
  double omega; // path angular rate
  double radius;
  double pelvisHeight;
  double hipHalfWidth;
};

Vec3 pelvisPosition(const GaitShape& g, double t) {
  const double a = g.omega * t;
  return {g.radius * std::cos(a), g.radius * std::sin(a),
          g.pelvisHeight + 0.012 * std::cos(4.0 * kPi * t / g.period)};
}

double heading(const GaitShape& g, double t) {
  return g.omega * t + kPi / 2.0;
}

// Stance occupies the first 60% of each foot's cycle. Contact labels skip a
// margin at both ends of the stance so touchdown and lift-off frames, whose
// finite-difference speed mixes in the swing, are not labeled.
constexpr double kStanceFraction = 0.6;
constexpr double kSwingLift = 0.06;
constexpr double kContactMarginS = 0.05;

Vec3 footprint(const GaitShape& g, int side, int cycle) {
  const double offset = side == 0 ? 0.0 : 0.5;
  const double t = (cycle + 0.5 * kStanceFraction - offset) * g.period;
  const double h = heading(g, t);
  const Vec3 left(-std::sin(h), std::cos(h), 0.0);
  Vec3 p = pelvisPosition(g, t);
  p.z() = 0.0;
  return p + left * (side == 0 ? g.hipHalfWidth : -g.hipHalfWidth);
}

struct HeelState {
  Vec3 target;
  bool contact;
};

HeelState heelTarget(const GaitShape& g, int side, double t) {
  const double u = t / g.period + (side == 0 ? 0.0 : 0.5);
  const int cycle = static_cast<int>(std::floor(u));
  const double phase = u - cycle;
  if (phase < kStanceFraction) {
    const double margin = kContactMarginS / g.period;
    return {footprint(g, side, cycle), phase >= margin && phase <= kStanceFraction - margin};
  }
  const double s = (phase - kStanceFraction) / (1.0 - kStanceFraction);
  const double w = s * s * s * (10.0 + s * (6.0 * s - 15.0));
  const double lift = std::sin(kPi * s);
  const Vec3 a = footprint(g, side, cycle);
  const Vec3 b = footprint(g, side, cycle + 1);
  return {(1.0 - w) * a + w * b + Vec3(0.0, 0.0, kSwingLift * lift * lift), false};
}

// Newton on hip flexion/abduction and knee flexion so the heel reaches `target`.
void solveLeg(
    const RigModel& rig, const VecX& identity, PoseFrame& frame, int hip, int knee, int heel,
    const Vec3& target) {
  const std::array<int, 3> dofs = {
      rig.dofStart[static_cast<std::size_t>(hip)], rig.dofStart[static_cast<std::size_t>(hip)] + 1,
      rig.dofStart[static_cast<std::size_t>(knee)] + 1};
  auto heelAt = [&](const PoseFrame& f) {
    return computeKinematics(rig, identity, f).position[static_cast<std::size_t>(heel)];
  };
  for (int iter = 0; iter < 60; ++iter) {
    const Vec3 r = heelAt(frame) - target;
    if (r.norm() < 1e-13) {
      return;
    }
    Mat3 jac;
    for (int c = 0; c < 3; ++c) {
      PoseFrame plus = frame;
      PoseFrame minus = frame;
      plus.pose[dofs[c]] += 1e-6;
      minus.pose[dofs[c]] -= 1e-6;
      jac.col(c) = (heelAt(plus) - heelAt(minus)) / 2e-6;
    }
    Vec3 step = jac.colPivHouseholderQr().solve(-r);
    if (step.norm() > 0.3) {
      step *= 0.3 / step.norm();
    }
    for (int c = 0; c < 3; ++c) {
      frame.pose[dofs[c]] += step[c];
    }
  }
  const double residual = (heelAt(frame) - target).norm();
  EGOFUSE_CHECK(
      residual < 1e-9, ErrorCode::InvalidArgument,
      "gait: heel target unreachable at t_ns=" + std::to_string(frame.tNs));
}

} // namespace

std::pair<MotionSequence, ContactLabels> authorGait(
    const RigModel& rig, const VecX& identity, const ScenarioParams& params) {
  params.validate();
  const int lHip = rig.jointIndex("l_hip");
  const int rHip = rig.jointIndex("r_hip");
  const int lKnee = rig.jointIndex("l_knee");
  const int rKnee = rig.jointIndex("r_knee");
  const int lHeel = rig.named.leftHeel;
  const int rHeel = rig.named.rightHeel;
  const double leg = rig.boneLength(lKnee, identity) + rig.boneLength(lHeel, identity);

  GaitShape g;
  g.period = params.stepPeriodS;
  g.radius = params.pathRadius;
  g.omega = params.walkSpeed / params.pathRadius;
  g.pelvisHeight = 0.9 * leg;
  g.hipHalfWidth = rig.boneLength(lHip, identity);

  auto dof = [&](const char* joint, int axis) {
    return rig.dofStart[static_cast<std::size_t>(rig.jointIndex(joint))] + axis;
  };
  const double cycle = 2.0 * kPi / g.period;

  MotionSequence m;
  m.rigName = rig.name;
  m.identity = identity;
  m.rateHz = params.rateHz;
  ContactLabels contacts;
  const int n = static_cast<int>(std::llround(params.durationS * params.rateHz)) + 1;
  PoseFrame prev = zeroFrame(rig);
  prev.pose[dof("l_hip", 1)] = -0.2;
  prev.pose[dof("r_hip", 1)] = -0.2;
  prev.pose[dof("l_knee", 1)] = 0.4;
  prev.pose[dof("r_knee", 1)] = 0.4;
  for (int k = 0; k < n; ++k) {
    const TimeNs tNs = frameTime(k, params.rateHz);
    const double t = static_cast<double>(tNs) * 1e-9;
    PoseFrame f = prev;
    f.tNs = tNs;
    f.root = {Quat(Eigen::AngleAxisd(heading(g, t), Vec3::UnitZ())), pelvisPosition(g, t)};

    const double s = std::sin(cycle * t);
    f.pose[dof("spine1", 2)] = -0.08 * s;
    f.pose[dof("spine2", 0)] = 0.03 * std::sin(0.9 * t);
    // Looking around while walking; the head rotation variety keeps the
    // hand-eye translation observable.
    f.pose[dof("neck", 2)] = 0.45 * std::sin(0.9 * t + 0.5);
    f.pose[dof("head", 1)] = 0.3 * std::sin(1.3 * t);
    f.pose[dof("head", 0)] = 0.2 * std::sin(1.7 * t + 1.0);
    f.pose[dof("l_shoulder", 0)] = 0.22;
    f.pose[dof("r_shoulder", 0)] = -0.22;
    f.pose[dof("l_shoulder", 1)] = 0.3 * s;
    f.pose[dof("r_shoulder", 1)] = -0.3 * s;
    f.pose[dof("l_elbow", 1)] = -0.5 + 0.2 * s;
    f.pose[dof("r_elbow", 1)] = -0.5 - 0.2 * s;

    const HeelState left = heelTarget(g, 0, t);
    const HeelState right = heelTarget(g, 1, t);
    solveLeg(rig, identity, f, lHip, lKnee, lHeel, left.target);
    solveLeg(rig, identity, f, rHip, rKnee, rHeel, right.target);
    // Keep the feet roughly level.
    f.pose[dof("l_heel", 1)] = -(f.pose[dof("l_hip", 1)] + f.pose[dof("l_knee", 1)]);
    f.pose[dof("r_heel", 1)] = -(f.pose[dof("r_hip", 1)] + f.pose[dof("r_knee", 1)]);

    for (int d = 0; d < rig.poseDofCount; ++d) {
      EGOFUSE_CHECK(
          f.pose[d] >= rig.limits[static_cast<std::size_t>(d)].min &&
              f.pose[d] <= rig.limits[static_cast<std::size_t>(d)].max,
          ErrorCode::InvalidArgument,
          "gait: pose DoF " + std::to_string(d) + " leaves its limits at t_ns=" +
              std::to_string(tNs));
    }
    m.frames.push_back(f);
    contacts.frames.push_back({left.contact, right.contact});
    prev = f;
  }
  contacts.provenance = ContactProvenance::Provided;
  return {std::move(m), std::move(contacts)};
}

// ---------------------------------------------------------------------------
// Scenario

namespace {

struct PostureError {
  int dof;
  double amplitude;
  double frequency; // Hz
  double phase;
  double bias;
  double jitterAmplitude;
  double jitterFrequency; // Hz
  double jitterPhase;
};

std::vector<PostureError> drawPostureErrors(
    const RigModel& rig, double scale, RandomStream& rng) {
  struct Entry {
    const char* joint;
    int axis;
    double biasLo;
    double biasHi;
  };
  // Limb errors only: the head segment is measured directly, so its pose
  // chain (spine, neck, head) stays exact. Leg errors stay in the sagittal
  // plane; shoulder abduction errors lean toward the torso.
  const std::vector<Entry> entries = {
      {"l_shoulder", 0, -2.0, -1.0}, {"l_shoulder", 1, -0.5, 0.5}, {"l_shoulder", 2, -0.5, 0.5},
      {"r_shoulder", 0, 1.0, 2.0},   {"r_shoulder", 1, -0.5, 0.5}, {"r_shoulder", 2, -0.5, 0.5},
      {"l_elbow", 1, -0.5, 0.5},     {"r_elbow", 1, -0.5, 0.5},    {"l_hip", 1, -0.5, 0.5},
      {"r_hip", 1, -0.5, 0.5},       {"l_knee", 1, -0.5, 0.5},     {"r_knee", 1, -0.5, 0.5},
  };
  std::vector<PostureError> out;
  for (const auto& e : entries) {
    PostureError p;
    p.dof = rig.dofStart[static_cast<std::size_t>(rig.jointIndex(e.joint))] + e.axis;
    p.amplitude = scale * rng.uniform(0.5, 1.0);
    p.frequency = rng.uniform(0.15, 0.5);
    p.phase = rng.uniform(0.0, 2.0 * kPi);
    p.bias = scale * rng.uniform(e.biasLo, e.biasHi);
    p.jitterAmplitude = 0.3 * scale * rng.uniform(0.5, 1.0);
    p.jitterFrequency = rng.uniform(1.0, 2.5);
    p.jitterPhase = rng.uniform(0.0, 2.0 * kPi);
    out.push_back(p);
  }
  return out;
}

PoseFrame applyPostureErrors(
    const RigModel& rig, const PoseFrame& truth, const std::vector<PostureError>& errors) {
  PoseFrame f = truth;
  const double t = static_cast<double>(truth.tNs) * 1e-9;
  for (const auto& e : errors) {
    const double v = e.bias * (1.0 - std::exp(-t / 10.0)) +
                     e.amplitude * std::sin(2.0 * kPi * e.frequency * t + e.phase) +
                     e.jitterAmplitude * std::sin(2.0 * kPi * e.jitterFrequency * t + e.jitterPhase);
    const auto& lim = rig.limits[static_cast<std::size_t>(e.dof)];
    f.pose[e.dof] = std::clamp(f.pose[e.dof] + v, lim.min, lim.max);
  }
  return f;
}

// Random walk on SE(3) sampled at knots, starting at identity.
std::vector<RigidTransform> driftKnots(const ScenarioParams& p, RandomStream& rng) {
  const int count = static_cast<int>(std::ceil(p.durationS / p.driftKnotS)) + 2;
  const double sq = std::sqrt(p.driftKnotS);
  std::vector<RigidTransform> knots = {RigidTransform()};
  for (int j = 1; j < count; ++j) {
    const Vec3 dr = rng.normal3(p.sigmaR * sq);
    const Vec3 dt = rng.normal3(p.sigmaT * sq);
    const RigidTransform& last = knots.back();
    knots.push_back({expMap(dr) * last.rotation, last.translation + dt});
  }
  return knots;
}

Obb3 makeBox(std::int64_t id, ObjectCategory c, const Vec3& center, double yaw, const Vec3& half) {
  Obb3 b;
  b.id = id;
  b.category = c;
  b.center = center;
  b.rotation = Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
  b.halfExtents = half;
  return b;
}

void buildScene(SyntheticScenario& s, RandomStream& rng) {
  const double room = s.params.pathRadius + 1.5;
  const double h = 1.3;
  const double t = kWallThickness / 2.0;
  auto& boxes = s.scene.boxes;
  s.scene.venueId = "synthetic_loop";
  s.scene.frame = "world";
  boxes.push_back(makeBox(1, ObjectCategory::Floor, {0, 0, -0.05}, 0.0, {room, room, 0.05}));
  boxes.push_back(makeBox(2, ObjectCategory::Wall, {room + t, 0, h}, 0.0, {t, room + 2 * t, h}));
  boxes.push_back(makeBox(3, ObjectCategory::Wall, {-room - t, 0, h}, 0.0, {t, room + 2 * t, h}));
  boxes.push_back(makeBox(4, ObjectCategory::Wall, {0, room + t, h}, 0.0, {room, t, h}));
  boxes.push_back(makeBox(5, ObjectCategory::Wall, {0, -room - t, h}, 0.0, {room, t, h}));

  struct Furniture {
    ObjectCategory category;
    Vec3 half;
    const char* caption;
  };
  const std::vector<Furniture> furniture = {
      {ObjectCategory::Table, {0.6, 0.4, 0.37}, nullptr},
      {ObjectCategory::Chair, {0.25, 0.25, 0.45}, nullptr},
      {ObjectCategory::Couch, {0.9, 0.4, 0.4}, nullptr},
      {ObjectCategory::LampLight, {0.15, 0.15, 0.8}, nullptr},
      {ObjectCategory::Plant, {0.2, 0.2, 0.5}, nullptr},
      {ObjectCategory::StorageShelf, {0.45, 0.2, 0.9}, nullptr},
      {ObjectCategory::ScreenDisplay, {0.5, 0.05, 0.3}, nullptr},
      {ObjectCategory::Refrigerator, {0.35, 0.35, 0.9}, nullptr},
      {ObjectCategory::Anything, {0.15, 0.1, 0.12}, "blue ceramic vase"},
      {ObjectCategory::Anything, {0.3, 0.2, 0.25}, "wicker laundry basket"},
  };
  for (std::size_t i = 0; i < furniture.size(); ++i) {
    const auto& f = furniture[i];
    const double angle = 2.0 * kPi * static_cast<double>(i) / furniture.size() +
                         rng.uniform(-0.2, 0.2);
    const double r = s.params.pathRadius + rng.uniform(0.7, 1.0);
    const Vec3 c(r * std::cos(angle), r * std::sin(angle), f.half.z());
    Obb3 b = makeBox(static_cast<std::int64_t>(10 + i), f.category, c, rng.uniform(-kPi, kPi), f.half);
    if (f.caption != nullptr) {
      b.caption = f.caption;
    }
    boxes.push_back(b);
  }

  // Semi-dense points just inside each furniture surface, plus clutter.
  for (std::size_t i = 5; i < boxes.size(); ++i) {
    const Obb3& b = boxes[i];
    for (int k = 0; k < 120; ++k) {
      Vec3 local(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      const int axis = static_cast<int>(rng.uniform(0.0, 3.0));
      local[axis] = local[axis] < 0.0 ? -1.0 : 1.0;
      s.cloud.push_back(b.center + b.rotation * (0.97 * local).cwiseProduct(b.halfExtents));
    }
  }
  for (int k = 0; k < 60; ++k) {
    s.cloud.emplace_back(rng.uniform(-room, room), rng.uniform(-room, room), rng.uniform(0.0, 2.5));
  }
}

} // namespace

std::vector<RigidTransform> sampleSourceDrift(
    const ScenarioParams& params, std::uint64_t seed, const std::vector<TimeNs>& times) {
  params.validate();
  // Source frame: gravity-aligned offset of the world, then the drift walk.
  RandomStream drift(seed, "drift");
  const RigidTransform initial(
      Quat(Eigen::AngleAxisd(drift.uniform(-kPi, kPi), Vec3::UnitZ())),
      Vec3(drift.uniform(-2.0, 2.0), drift.uniform(-2.0, 2.0), 0.0));
  const auto knots = driftKnots(params, drift);
  std::vector<RigidTransform> out;
  out.reserve(times.size());
  for (TimeNs tNs : times) {
    const double t = static_cast<double>(tNs) * 1e-9;
    EGOFUSE_CHECK(
        t >= 0.0 && t <= params.durationS + params.driftKnotS, ErrorCode::OutOfRange,
        "drift requested at t = " + std::to_string(t) + " s, outside the scenario");
    const double u = t / params.driftKnotS;
    const auto j = std::min(static_cast<std::size_t>(u), knots.size() - 2);
    const RigidTransform walk = interpolatePoses(knots[j], knots[j + 1], u - static_cast<double>(j));
    out.push_back(walk * initial);
  }
  return out;
}

SyntheticScenario generateScenario(
    const RigModel& rig, const ScenarioParams& params, std::uint64_t seed) {
  params.validate();
  SyntheticScenario s;
  s.params = params;
  s.seed = seed;

  // Population and subject identities: affine in height plus jitter.
  RandomStream pop(seed, "population");
  VecX slope(rig.identityDim);
  VecX bias(rig.identityDim);
  for (int g = 0; g < rig.identityDim; ++g) {
    slope[g] = pop.uniform(0.35, 0.6);
    bias[g] = pop.uniform(-0.03, 0.03);
  }
  auto identityAt = [&](double height, RandomStream& rng) {
    VecX id(rig.identityDim);
    for (int g = 0; g < rig.identityDim; ++g) {
      id[g] = slope[g] * (height - 1.75) + bias[g] + rng.normal(0.01);
    }
    return id;
  };
  for (int i = 0; i < params.populationSize; ++i) {
    const double height = pop.uniform(1.5, 1.95);
    s.population.push_back({height, identityAt(height, pop)});
  }
  RandomStream subject(seed, "subject");
  const VecX identity = identityAt(params.subjectHeightM, subject);

  auto [truth, contacts] = authorGait(rig, identity, params);
  s.groundTruth = std::move(truth);
  s.contacts = std::move(contacts);

  RandomStream posture(seed, "posture");
  const auto errors = drawPostureErrors(rig, params.postureErrorRad, posture);
  s.capturedPosture = s.groundTruth;
  for (auto& f : s.capturedPosture.frames) {
    f = applyPostureErrors(rig, f, errors);
  }

  std::vector<TimeNs> times;
  for (const auto& f : s.capturedPosture.frames) {
    times.push_back(f.tNs);
  }
  s.sourceFromWorld = sampleSourceDrift(params, seed, times);

  s.retargetMap = makeDeskRetargetMap(rig);
  const auto segmentJoints = deskSegmentJoints(rig);
  s.driftedSource.segmentCount = static_cast<int>(segmentJoints.size());
  s.driftedSource.landmarkCount = static_cast<int>(rig.landmarks.size());
  s.driftedSource.rateHz = params.rateHz;
  for (int j : segmentJoints) {
    s.driftedSource.segmentNames.push_back(rig.joints[static_cast<std::size_t>(j)].name);
  }
  for (std::size_t k = 0; k < s.capturedPosture.frames.size(); ++k) {
    const auto& f = s.capturedPosture.frames[k];
    const RigidTransform& d = s.sourceFromWorld[k];
    const Kinematics kin = computeKinematics(rig, identity, f);
    SourceFrame sf;
    sf.tNs = f.tNs;
    for (int joint : segmentJoints) {
      sf.segments.push_back(d * kin.transform(joint));
    }
    for (const Vec3& p : landmarkPositions(rig, kin)) {
      sf.landmarks.push_back(d.apply(p));
    }
    s.driftedSource.frames.push_back(std::move(sf));
  }

  // Headset rigidly mounted on the head; wristbands on the wrists.
  RandomStream mount(seed, "handeye");
  const Vec3 axis = mount.normal3(1.0).normalized();
  s.deviceFromHeadSegment = RigidTransform(
      Quat(Eigen::AngleAxisd(mount.uniform(0.05, 0.3), axis)),
      Vec3(0.09, 0.0, 0.07) + mount.normal3(0.01));
  const RigidTransform headFromDevice = s.deviceFromHeadSegment.inverse();
  RandomStream bands(seed, "wristband");
  std::vector<TrajectorySample> dev;
  std::vector<TrajectorySample> lw;
  std::vector<TrajectorySample> rw;
  for (const auto& f : s.groundTruth.frames) {
    const Kinematics kin = computeKinematics(rig, identity, f);
    dev.push_back({f.tNs, kin.transform(rig.named.head) * headFromDevice});
    RigidTransform l = kin.transform(rig.named.leftWrist);
    RigidTransform r = kin.transform(rig.named.rightWrist);
    l.translation += bands.normal3(params.sigmaW);
    r.translation += bands.normal3(params.sigmaW);
    lw.push_back({f.tNs, l});
    rw.push_back({f.tNs, r});
  }
  s.device = Trajectory("world", std::move(dev));
  s.leftWrist = Trajectory("world", std::move(lw));
  s.rightWrist = Trajectory("world", std::move(rw));

  // Forward-looking camera on the headset: z along head +x, y along head -z.
  Mat3 headFromCamera;
  headFromCamera.col(0) = -Vec3::UnitY();
  headFromCamera.col(1) = -Vec3::UnitZ();
  headFromCamera.col(2) = Vec3::UnitX();
  s.deviceFromCamera =
      s.deviceFromHeadSegment * RigidTransform(Quat(headFromCamera), Vec3(0.08, 0.0, 0.05));
  s.camera.fx = 320.0;
  s.camera.fy = 320.0;
  s.camera.cx = 320.0;
  s.camera.cy = 240.0;
  s.camera.width = 640;
  s.camera.height = 480;
  std::vector<TrajectorySample> cams;
  const int camCount = static_cast<int>(std::floor(params.durationS * params.cameraRateHz)) + 1;
  for (int k = 0; k < camCount; ++k) {
    const TimeNs t = frameTime(k, params.cameraRateHz);
    if (!s.device.covers(t)) {
      break;
    }
    cams.push_back({t, s.device.interpolate(t) * s.deviceFromCamera});
  }
  s.cameraPoses = Trajectory("world", std::move(cams));

  RandomStream scene(seed, "scene");
  buildScene(s, scene);
  return s;
}

void writeScenario(const SyntheticScenario& s, const RigModel& rig, const std::filesystem::path& dir) {
  namespace f = scenario_files;
  std::filesystem::create_directories(dir);
  io::Json meta;
  meta["seed"] = s.seed;
  meta["params"] = io::Json::parse(scenarioParamsToJson(s.params));
  io::writeText(dir / f::kParams, meta.dump(1) + "\n");
  saveRig(dir / f::kRig, rig);
  io::writeText(dir / f::kPopulation, identityTableToCsv(s.population));
  writeMotion(dir / f::kGroundTruth, s.groundTruth);
  writeSourceMotion(dir / f::kSource, s.driftedSource);
  io::writeText(dir / f::kMap, retargetMapToJson(s.retargetMap));
  writeTrajectoryCsv(dir / f::kDevice, s.device);
  writeTrajectoryCsv(dir / f::kLeftWrist, s.leftWrist);
  writeTrajectoryCsv(dir / f::kRightWrist, s.rightWrist);
  writeContacts(dir / f::kContacts, s.contacts);
  io::Json truth;
  truth["device_from_headsegment"] = io::poseToJson(s.deviceFromHeadSegment);
  io::writeText(dir / f::kTrueHandEye, truth.dump(1) + "\n");
  writeObbs(dir / f::kBoxes, s.scene.boxes);
  writePointCloud(dir / f::kCloud, s.cloud);
  writeCameraJson(dir / f::kCamera, s.camera);
  writeTrajectoryCsv(dir / f::kCameraPoses, s.cameraPoses);

  io::Json cfg;
  cfg["rig"] = f::kRig;
  cfg["identity_table"] = f::kPopulation;
  cfg["subject_height_m"] = s.params.subjectHeightM;
  cfg["retarget_map"] = f::kMap;
  cfg["source_motion"] = f::kSource;
  cfg["device"] = f::kDevice;
  cfg["left_wrist"] = f::kLeftWrist;
  cfg["right_wrist"] = f::kRightWrist;
  cfg["contacts"] = f::kContacts;
  cfg["output_dir"] = "pipeline_out";
  io::writeText(dir / f::kPipeline, cfg.dump(1) + "\n");
}

} // namespace egofuse
