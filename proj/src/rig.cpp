#include "egofuse/rig.h"

#include "egofuse/error.h"
#include "egofuse/io.h"

#include <cmath>

namespace egofuse {

namespace {

std::string jointLabel(const RigModel& rig, int j) {
  return "joint " + std::to_string(j) + " ('" + rig.joints[j].name + "')";
}

} // namespace

void RigModel::finalize() {
  EGOFUSE_CHECK(!joints.empty(), ErrorCode::InvariantViolation, "rig has no joints");
  EGOFUSE_CHECK(identityDim >= 0, ErrorCode::InvariantViolation, "negative identity dimension");
  int roots = 0;
  for (int j = 0; j < jointCount(); ++j) {
    const auto& jt = joints[j];
    if (jt.parent < 0) {
      ++roots;
      EGOFUSE_CHECK(j == 0, ErrorCode::InvariantViolation, jointLabel(*this, j) + " is a second root");
    } else {
      EGOFUSE_CHECK(
          jt.parent < j,
          ErrorCode::InvariantViolation,
          jointLabel(*this, j) + " has parent " + std::to_string(jt.parent) +
              " that is not earlier in topological order (cycle or bad ordering)");
    }
    EGOFUSE_CHECK(
        std::abs(jt.restDirection.norm() - 1.0) < 1e-9,
        ErrorCode::InvariantViolation,
        jointLabel(*this, j) + " rest direction is not unit length");
    EGOFUSE_CHECK(
        static_cast<int>(jt.lengthCoeffs.size()) == identityDim,
        ErrorCode::InvariantViolation,
        jointLabel(*this, j) + " length coefficients do not match identity dimension");
    EGOFUSE_CHECK(
        std::isfinite(jt.baseLength) && jt.baseLength >= 0.0,
        ErrorCode::InvariantViolation,
        jointLabel(*this, j) + " has invalid base length");
  }
  EGOFUSE_CHECK(roots == 1, ErrorCode::InvariantViolation, "rig must have exactly one root");

  dofStart.assign(joints.size(), -1);
  poseDofCount = 0;
  for (int j = 0; j < jointCount(); ++j) {
    if (joints[j].rotates) {
      dofStart[j] = poseDofCount;
      poseDofCount += 3;
    }
  }
  EGOFUSE_CHECK(
      static_cast<int>(limits.size()) == poseDofCount,
      ErrorCode::InvariantViolation,
      "limits count " + std::to_string(limits.size()) + " != pose DoF count " +
          std::to_string(poseDofCount));
  for (std::size_t d = 0; d < limits.size(); ++d) {
    EGOFUSE_CHECK(
        limits[d].min <= limits[d].max,
        ErrorCode::InvariantViolation,
        "limit of DoF " + std::to_string(d) + " has min > max");
  }

  chain.assign(joints.size(), {});
  children.assign(joints.size(), {});
  for (int j = 0; j < jointCount(); ++j) {
    if (joints[j].parent >= 0) {
      chain[j] = chain[joints[j].parent];
      children[joints[j].parent].push_back(j);
    }
    chain[j].push_back(j);
  }

  for (std::size_t l = 0; l < landmarks.size(); ++l) {
    EGOFUSE_CHECK(
        landmarks[l].joint >= 0 && landmarks[l].joint < jointCount(),
        ErrorCode::InvariantViolation,
        "landmark " + std::to_string(l) + " references invalid joint");
  }

  auto checkNamed = [&](int idx, const char* what, bool required) {
    if (idx < 0 && !required) {
      return;
    }
    EGOFUSE_CHECK(
        idx >= 0 && idx < jointCount(),
        ErrorCode::InvariantViolation,
        std::string("named joint '") + what + "' does not resolve to a valid joint");
  };
  checkNamed(named.root, "root", true);
  EGOFUSE_CHECK(
      named.root == 0, ErrorCode::InvariantViolation, "named joint 'root' must be joint 0");
  checkNamed(named.head, "head", true);
  checkNamed(named.leftWrist, "left_wrist", true);
  checkNamed(named.rightWrist, "right_wrist", true);
  checkNamed(named.leftHeel, "left_heel", true);
  checkNamed(named.rightHeel, "right_heel", true);
  checkNamed(named.leftToe, "left_toe", false);
  checkNamed(named.rightToe, "right_toe", false);

  EGOFUSE_CHECK(
      skinning.size() == templateVertices.size(),
      ErrorCode::InvariantViolation,
      "skinning table size does not match template vertex count");
  for (std::size_t v = 0; v < skinning.size(); ++v) {
    double sum = 0.0;
    EGOFUSE_CHECK(
        !skinning[v].empty(),
        ErrorCode::InvariantViolation,
        "vertex " + std::to_string(v) + " has no skinning influences");
    for (const auto& inf : skinning[v]) {
      EGOFUSE_CHECK(
          inf.joint >= 0 && inf.joint < jointCount(),
          ErrorCode::InvariantViolation,
          "vertex " + std::to_string(v) + " skinned to invalid joint");
      EGOFUSE_CHECK(
          inf.weight >= 0.0 && std::isfinite(inf.weight),
          ErrorCode::InvariantViolation,
          "vertex " + std::to_string(v) + " has a negative skinning weight");
      sum += inf.weight;
    }
    EGOFUSE_CHECK(
        std::abs(sum - 1.0) <= 1e-6,
        ErrorCode::InvariantViolation,
        "vertex " + std::to_string(v) + " skinning weights sum to " + std::to_string(sum));
  }
  const int nv = vertexCount();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    for (int k : edges[e]) {
      EGOFUSE_CHECK(
          k >= 0 && k < nv,
          ErrorCode::InvariantViolation,
          "edge " + std::to_string(e) + " references invalid vertex");
    }
  }
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    for (int k : triangles[t]) {
      EGOFUSE_CHECK(
          k >= 0 && k < nv,
          ErrorCode::InvariantViolation,
          "triangle " + std::to_string(t) + " references invalid vertex");
    }
  }
  for (std::size_t c = 0; c < collision.size(); ++c) {
    const auto& cap = collision[c];
    const std::string label = "collision primitive " + std::to_string(c);
    EGOFUSE_CHECK(
        cap.joint >= 0 && cap.joint < jointCount(),
        ErrorCode::InvariantViolation,
        label + " references invalid joint");
    EGOFUSE_CHECK(cap.radius > 0.0, ErrorCode::InvariantViolation, label + " radius must be > 0");
    EGOFUSE_CHECK(
        cap.taperRadius < 0.0 || cap.taperRadius > 0.0,
        ErrorCode::InvariantViolation,
        label + " taper radius must be > 0");
    EGOFUSE_CHECK(
        (cap.a - cap.b).norm() > 0.0, ErrorCode::InvariantViolation, label + " endpoints coincide");
  }
}

int RigModel::jointIndex(const std::string& jointName) const {
  for (int j = 0; j < jointCount(); ++j) {
    if (joints[j].name == jointName) {
      return j;
    }
  }
  throw Error(ErrorCode::InvalidArgument, "no joint named '" + jointName + "'");
}

double RigModel::boneLength(int joint, const VecX& identity) const {
  const auto& jt = joints[joint];
  double len = jt.baseLength;
  for (int g = 0; g < identityDim; ++g) {
    len += jt.lengthCoeffs[g] * identity[g];
  }
  return len;
}

bool RigModel::isAncestorOrSelf(int ancestor, int joint) const {
  for (int j = joint; j >= 0; j = joints[j].parent) {
    if (j == ancestor) {
      return true;
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// Serialization

std::string rigToJson(const RigModel& rig) {
  io::Json j;
  j["name"] = rig.name;
  j["identity_dim"] = rig.identityDim;
  io::Json joints = io::Json::array();
  for (const auto& jt : rig.joints) {
    io::Json e;
    e["name"] = jt.name;
    e["parent"] = jt.parent;
    e["direction"] = io::toJson(jt.restDirection);
    e["base_length"] = jt.baseLength;
    e["length_coeffs"] = jt.lengthCoeffs;
    e["dofs"] = jt.rotates ? 3 : 0;
    joints.push_back(e);
  }
  j["joints"] = joints;
  io::Json limits = io::Json::array();
  for (const auto& l : rig.limits) {
    limits.push_back(io::Json::array({l.min, l.max}));
  }
  j["limits"] = limits;
  io::Json lms = io::Json::array();
  for (const auto& l : rig.landmarks) {
    lms.push_back({{"joint", l.joint}, {"offset", io::toJson(l.offset)}});
  }
  j["landmarks"] = lms;
  j["named_joints"] = {
      {"root", rig.named.root},
      {"head", rig.named.head},
      {"left_wrist", rig.named.leftWrist},
      {"right_wrist", rig.named.rightWrist},
      {"left_heel", rig.named.leftHeel},
      {"right_heel", rig.named.rightHeel},
      {"left_toe", rig.named.leftToe},
      {"right_toe", rig.named.rightToe}};
  io::Json tmpl = io::Json::array();
  for (const auto& v : rig.templateVertices) {
    tmpl.push_back(io::toJson(v));
  }
  j["template"] = tmpl;
  io::Json skin = io::Json::array();
  for (const auto& infl : rig.skinning) {
    io::Json row = io::Json::array();
    for (const auto& i : infl) {
      row.push_back(io::Json::array({i.joint, i.weight}));
    }
    skin.push_back(row);
  }
  j["skinning"] = skin;
  j["edges"] = rig.edges;
  j["triangles"] = rig.triangles;
  io::Json caps = io::Json::array();
  for (const auto& c : rig.collision) {
    io::Json e = {
        {"joint", c.joint}, {"a", io::toJson(c.a)}, {"b", io::toJson(c.b)}, {"radius", c.radius}};
    if (c.taperRadius > 0.0) {
      e["taper"] = c.taperRadius;
    }
    caps.push_back(e);
  }
  j["collision"] = caps;
  if (!rig.shapeCoeffsBeta.empty()) {
    j["shape_coeffs_beta"] = rig.shapeCoeffsBeta;
  }
  return j.dump(1) + "\n";
}

RigModel rigFromJson(const std::string& text) {
  io::Json j;
  try {
    j = io::Json::parse(text);
  } catch (const io::Json::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("rig: ") + e.what());
  }
  RigModel rig;
  try {
    rig.name = j.value("name", std::string("rig"));
    rig.identityDim = j.at("identity_dim").get<int>();
    for (const auto& e : j.at("joints")) {
      RigJoint jt;
      jt.name = e.at("name").get<std::string>();
      jt.parent = e.at("parent").get<int>();
      jt.restDirection = io::vec3FromJson(e.at("direction"), "joint direction");
      jt.baseLength = e.at("base_length").get<double>();
      jt.lengthCoeffs = io::doublesFromJson(e.at("length_coeffs"), "length_coeffs");
      const int dofs = e.value("dofs", 3);
      EGOFUSE_CHECK(
          dofs == 0 || dofs == 3, ErrorCode::ParseError, "joint dofs must be 0 or 3");
      jt.rotates = dofs == 3;
      rig.joints.push_back(std::move(jt));
    }
    for (const auto& e : j.at("limits")) {
      EGOFUSE_CHECK(
          e.is_array() && e.size() == 2, ErrorCode::ParseError, "limit must be [min,max]");
      rig.limits.push_back({e[0].get<double>(), e[1].get<double>()});
    }
    for (const auto& e : j.at("landmarks")) {
      rig.landmarks.push_back(
          {e.at("joint").get<int>(), io::vec3FromJson(e.at("offset"), "landmark offset")});
    }
    const auto& nj = j.at("named_joints");
    rig.named.root = nj.at("root").get<int>();
    rig.named.head = nj.at("head").get<int>();
    rig.named.leftWrist = nj.at("left_wrist").get<int>();
    rig.named.rightWrist = nj.at("right_wrist").get<int>();
    rig.named.leftHeel = nj.at("left_heel").get<int>();
    rig.named.rightHeel = nj.at("right_heel").get<int>();
    rig.named.leftToe = nj.value("left_toe", -1);
    rig.named.rightToe = nj.value("right_toe", -1);
    for (const auto& v : j.at("template")) {
      rig.templateVertices.push_back(io::vec3FromJson(v, "template vertex"));
    }
    for (const auto& row : j.at("skinning")) {
      std::vector<SkinInfluence> infl;
      for (const auto& e : row) {
        EGOFUSE_CHECK(
            e.is_array() && e.size() == 2,
            ErrorCode::ParseError,
            "skinning entry must be [joint, weight]");
        infl.push_back({e[0].get<int>(), e[1].get<double>()});
      }
      rig.skinning.push_back(std::move(infl));
    }
    rig.edges = j.at("edges").get<std::vector<std::array<int, 2>>>();
    if (j.contains("triangles")) {
      rig.triangles = j.at("triangles").get<std::vector<std::array<int, 3>>>();
    }
    if (j.contains("collision")) {
      for (const auto& e : j.at("collision")) {
        CapsuleSpec c;
        c.joint = e.at("joint").get<int>();
        c.a = io::vec3FromJson(e.at("a"), "capsule a");
        c.b = io::vec3FromJson(e.at("b"), "capsule b");
        c.radius = e.at("radius").get<double>();
        c.taperRadius = e.value("taper", -1.0);
        rig.collision.push_back(c);
      }
    }
    if (j.contains("shape_coeffs_beta")) {
      rig.shapeCoeffsBeta = io::doublesFromJson(j.at("shape_coeffs_beta"), "shape_coeffs_beta");
    }
  } catch (const io::Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("rig: ") + e.what());
  }
  rig.finalize();
  return rig;
}

RigModel loadRig(const std::filesystem::path& path) {
  try {
    return rigFromJson(io::readText(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) {
      throw;
    }
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void saveRig(const std::filesystem::path& path, const RigModel& rig) {
  io::writeText(path, rigToJson(rig));
}

void MotionSequence::validate(const RigModel& rig) const {
  EGOFUSE_CHECK(
      identity.size() == rig.identityDim,
      ErrorCode::DimensionMismatch,
      "motion identity has " + std::to_string(identity.size()) + " entries, rig expects " +
          std::to_string(rig.identityDim));
  for (std::size_t f = 0; f < frames.size(); ++f) {
    EGOFUSE_CHECK(
        frames[f].pose.size() == rig.poseDofCount,
        ErrorCode::DimensionMismatch,
        "frame " + std::to_string(f) + " pose size does not match rig");
    if (f > 0) {
      EGOFUSE_CHECK(
          frames[f].tNs > frames[f - 1].tNs,
          ErrorCode::InvariantViolation,
          "motion timestamps not strictly increasing at frame " + std::to_string(f));
    }
  }
}

std::string motionToJson(const MotionSequence& motion) {
  io::Json j;
  j["rig"] = motion.rigName;
  j["rate_hz"] = motion.rateHz;
  j["identity"] = std::vector<double>(motion.identity.data(), motion.identity.data() + motion.identity.size());
  io::Json frames = io::Json::array();
  for (const auto& f : motion.frames) {
    frames.push_back(
        {{"t_ns", f.tNs},
         {"root", io::poseToJson(f.root)},
         {"pose", std::vector<double>(f.pose.data(), f.pose.data() + f.pose.size())}});
  }
  j["frames"] = frames;
  return j.dump() + "\n";
}

MotionSequence motionFromJson(const std::string& text) {
  io::Json j;
  try {
    j = io::Json::parse(text);
  } catch (const io::Json::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("motion: ") + e.what());
  }
  MotionSequence m;
  try {
    m.rigName = j.value("rig", std::string());
    m.rateHz = j.value("rate_hz", 0.0);
    const auto id = io::doublesFromJson(j.at("identity"), "identity");
    m.identity = Eigen::Map<const VecX>(id.data(), static_cast<Eigen::Index>(id.size()));
    for (const auto& e : j.at("frames")) {
      PoseFrame f;
      f.tNs = e.at("t_ns").get<TimeNs>();
      f.root = io::poseFromJson(e.at("root"), "frame root");
      const auto pose = io::doublesFromJson(e.at("pose"), "frame pose");
      f.pose = Eigen::Map<const VecX>(pose.data(), static_cast<Eigen::Index>(pose.size()));
      m.frames.push_back(std::move(f));
    }
  } catch (const io::Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("motion: ") + e.what());
  }
  return m;
}

MotionSequence readMotion(const std::filesystem::path& path) {
  try {
    return motionFromJson(io::readText(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) {
      throw;
    }
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void writeMotion(const std::filesystem::path& path, const MotionSequence& motion) {
  io::writeText(path, motionToJson(motion));
}

PoseFrame zeroFrame(const RigModel& rig, TimeNs t) {
  PoseFrame f;
  f.tNs = t;
  f.pose = VecX::Zero(rig.poseDofCount);
  return f;
}

// ---------------------------------------------------------------------------
// Kinematics

RigidTransform Kinematics::transform(int joint) const {
  return {Quat(rotation[joint]), position[joint]};
}

Kinematics computeKinematics(const RigModel& rig, const VecX& identity, const PoseFrame& frame) {
  EGOFUSE_CHECK(
      identity.size() == rig.identityDim,
      ErrorCode::DimensionMismatch,
      "identity size " + std::to_string(identity.size()) + " != " + std::to_string(rig.identityDim));
  EGOFUSE_CHECK(
      frame.pose.size() == rig.poseDofCount,
      ErrorCode::DimensionMismatch,
      "pose size " + std::to_string(frame.pose.size()) + " != " +
          std::to_string(rig.poseDofCount));
  const int n = rig.jointCount();
  Kinematics k;
  k.rotation.resize(n);
  k.position.resize(n);
  k.dofAxes.resize(n);
  k.offsetFrame.resize(n);
  k.rootTranslation = frame.root.translation;
  const Mat3 rootRot = frame.root.rotation.toRotationMatrix();
  for (int j = 0; j < n; ++j) {
    const auto& jt = rig.joints[j];
    Mat3 base;
    Vec3 origin;
    if (jt.parent < 0) {
      base = rootRot;
      origin = frame.root.translation;
    } else {
      base = k.rotation[jt.parent];
      origin = k.position[jt.parent] + base * (jt.restDirection * rig.boneLength(j, identity));
    }
    k.offsetFrame[j] = base;
    k.position[j] = origin;
    if (jt.rotates) {
      const int d = rig.dofStart[j];
      const Mat3 rx = Eigen::AngleAxisd(frame.pose[d], Vec3::UnitX()).toRotationMatrix();
      const Mat3 ry = Eigen::AngleAxisd(frame.pose[d + 1], Vec3::UnitY()).toRotationMatrix();
      const Mat3 rz = Eigen::AngleAxisd(frame.pose[d + 2], Vec3::UnitZ()).toRotationMatrix();
      k.dofAxes[j][0] = base.col(0);
      const Mat3 bx = base * rx;
      k.dofAxes[j][1] = bx.col(1);
      const Mat3 bxy = bx * ry;
      k.dofAxes[j][2] = bxy.col(2);
      k.rotation[j] = bxy * rz;
    } else {
      k.rotation[j] = base;
    }
  }
  return k;
}

std::vector<RigidTransform>
forwardKinematics(const RigModel& rig, const VecX& identity, const PoseFrame& frame) {
  const Kinematics k = computeKinematics(rig, identity, frame);
  std::vector<RigidTransform> out;
  out.reserve(k.position.size());
  for (int j = 0; j < rig.jointCount(); ++j) {
    out.push_back(k.transform(j));
  }
  return out;
}

std::vector<Vec3> restJointPositions(const RigModel& rig, const VecX& identity) {
  EGOFUSE_CHECK(
      identity.size() == rig.identityDim, ErrorCode::DimensionMismatch, "identity size mismatch");
  std::vector<Vec3> rest(rig.joints.size(), Vec3::Zero());
  for (int j = 1; j < rig.jointCount(); ++j) {
    const auto& jt = rig.joints[j];
    rest[j] = rest[jt.parent] + jt.restDirection * rig.boneLength(j, identity);
  }
  return rest;
}

std::vector<Vec3> skinMesh(const RigModel& rig, const VecX& identity, const PoseFrame& frame) {
  EGOFUSE_CHECK(
      !rig.templateVertices.empty(), ErrorCode::InvalidArgument, "rig has no template mesh");
  const Kinematics k = computeKinematics(rig, identity, frame);
  const auto rest = restJointPositions(rig, identity);
  std::vector<Vec3> out(rig.templateVertices.size());
  for (std::size_t v = 0; v < out.size(); ++v) {
    Vec3 acc = Vec3::Zero();
    for (const auto& inf : rig.skinning[v]) {
      // Rest joint frames are pure translations: zero pose, identity root.
      acc += inf.weight *
          (k.rotation[inf.joint] * (rig.templateVertices[v] - rest[inf.joint]) +
           k.position[inf.joint]);
    }
    out[v] = acc;
  }
  return out;
}

std::vector<Vec3> landmarkPositions(const RigModel& rig, const Kinematics& kin) {
  std::vector<Vec3> out;
  out.reserve(rig.landmarks.size());
  for (const auto& l : rig.landmarks) {
    out.push_back(kin.rotation[l.joint] * l.offset + kin.position[l.joint]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Jacobians

std::vector<int> pointColumns(const RigModel& rig, int joint, bool withIdentity) {
  std::vector<int> cols = {0, 1, 2, 3, 4, 5};
  for (int i : rig.chain[joint]) {
    if (rig.joints[i].rotates) {
      const int d = kPoseCol + rig.dofStart[i];
      cols.insert(cols.end(), {d, d + 1, d + 2});
    }
  }
  if (withIdentity) {
    for (int g = 0; g < rig.identityDim; ++g) {
      cols.push_back(kPoseCol + rig.poseDofCount + g);
    }
  }
  return cols;
}

void pointJacobian(
    const RigModel& rig,
    const Kinematics& kin,
    int joint,
    const Vec3& worldPoint,
    bool withIdentity,
    Eigen::Ref<MatX> jac) {
  jac.setZero();
  jac.block<3, 3>(0, 0).setIdentity();
  // offsetFrame[0] is the world_from_root rotation before any root Euler DoFs.
  jac.block<3, 3>(0, 3) = -skew(worldPoint - kin.rootTranslation) * kin.offsetFrame[0];
  int c = 6;
  for (int i : rig.chain[joint]) {
    if (!rig.joints[i].rotates) {
      continue;
    }
    const Vec3 lever = worldPoint - kin.position[i];
    for (int a = 0; a < 3; ++a) {
      jac.col(c++) = kin.dofAxes[i][a].cross(lever);
    }
  }
  if (withIdentity) {
    for (int i : rig.chain[joint]) {
      if (rig.joints[i].parent < 0) {
        continue;
      }
      const Vec3 dir = kin.offsetFrame[i] * rig.joints[i].restDirection;
      for (int g = 0; g < rig.identityDim; ++g) {
        const double coeff = rig.joints[i].lengthCoeffs[g];
        if (coeff != 0.0) {
          jac.col(c + g) += coeff * dir;
        }
      }
    }
  }
}

MatX vertexJacobian(
    const RigModel& rig,
    const VecX& identity,
    const Kinematics& kin,
    const std::vector<Vec3>& restJoints,
    int vertex,
    bool withIdentity) {
  (void)identity;
  const int cols = kPoseCol + rig.poseDofCount + (withIdentity ? rig.identityDim : 0);
  MatX full = MatX::Zero(3, cols);
  for (const auto& inf : rig.skinning[vertex]) {
    const int j = inf.joint;
    const Vec3 local = rig.templateVertices[vertex] - restJoints[j];
    const Vec3 world = kin.rotation[j] * local + kin.position[j];
    const auto idx = pointColumns(rig, j, withIdentity);
    MatX jac(3, idx.size());
    pointJacobian(rig, kin, j, world, withIdentity, jac);
    for (std::size_t c = 0; c < idx.size(); ++c) {
      full.col(idx[c]) += inf.weight * jac.col(c);
    }
    if (withIdentity) {
      // The rest-frame translation also moves with identity.
      for (int i : rig.chain[j]) {
        if (rig.joints[i].parent < 0) {
          continue;
        }
        const Vec3 dir = kin.rotation[j] * rig.joints[i].restDirection;
        for (int g = 0; g < rig.identityDim; ++g) {
          const double coeff = rig.joints[i].lengthCoeffs[g];
          if (coeff != 0.0) {
            full.col(kPoseCol + rig.poseDofCount + g) -= inf.weight * coeff * dir;
          }
        }
      }
    }
  }
  return full;
}

std::vector<int> problemColumns(
    const RigModel& rig, const std::vector<int>& local, int frame, int frameCount) {
  const int n = frameParamCount(rig);
  std::vector<int> out;
  out.reserve(local.size());
  for (int c : local) {
    out.push_back(c < n ? frame * n + c : frameCount * n + (c - n));
  }
  return out;
}

PoseFrame applyFrameIncrement(const PoseFrame& frame, const Eigen::Ref<const VecX>& delta) {
  PoseFrame out = frame;
  out.root.translation += delta.segment<3>(kRootTranslationCol);
  out.root.rotation = (frame.root.rotation * expMap(delta.segment<3>(kRootRotationCol))).normalized();
  out.pose += delta.segment(kPoseCol, frame.pose.size());
  return out;
}

Vec3 eulerFromRotation(const Mat3& r) {
  // R = Rx(a) Ry(b) Rz(c); R(0,2) = sin(b).
  const double sb = std::clamp(r(0, 2), -1.0, 1.0);
  const double b = std::asin(sb);
  const double a = std::atan2(-r(1, 2), r(2, 2));
  const double c = std::atan2(-r(0, 1), r(0, 0));
  return {a, b, c};
}

} // namespace egofuse
