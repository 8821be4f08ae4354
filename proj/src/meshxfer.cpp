#include "egofuse/meshxfer.h"

#include "egofuse/error.h"
#include "egofuse/io.h"

#include <Eigen/Geometry>

#include <algorithm>
#include <any>
#include <cmath>
#include <functional>
#include <limits>

namespace egofuse {

TriMesh templateMesh(const RigModel& rig) {
  return {rig.templateVertices, rig.triangles};
}

Vec3 closestPointBarycentric(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Voronoi-region walk over vertices, edges and the face.
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) {
    return {1.0, 0.0, 0.0};
  }
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) {
    return {0.0, 1.0, 0.0};
  }
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return {1.0 - v, v, 0.0};
  }
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) {
    return {0.0, 0.0, 1.0};
  }
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return {1.0 - w, 0.0, w};
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {0.0, 1.0 - w, w};
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom;
  const double w = vc * denom;
  return {1.0 - v - w, v, w};
}

namespace {

Vec3 interpolate(const std::vector<Vec3>& verts, const std::array<int, 3>& tri, const Vec3& bary) {
  return bary[0] * verts[static_cast<std::size_t>(tri[0])] +
      bary[1] * verts[static_cast<std::size_t>(tri[1])] +
      bary[2] * verts[static_cast<std::size_t>(tri[2])];
}

} // namespace

SurfaceCorrespondence buildCorrespondence(const TriMesh& source, const std::vector<Vec3>& target) {
  const int vcount = static_cast<int>(source.vertices.size());
  std::vector<int> usable;
  SurfaceCorrespondence out;
  for (int t = 0; t < static_cast<int>(source.triangles.size()); ++t) {
    const auto& tri = source.triangles[static_cast<std::size_t>(t)];
    for (int i : tri) {
      EGOFUSE_CHECK(
          i >= 0 && i < vcount, ErrorCode::OutOfRange,
          "source triangle " + std::to_string(t) + " references vertex " + std::to_string(i));
    }
    const Vec3& a = source.vertices[static_cast<std::size_t>(tri[0])];
    const Vec3 e1 = source.vertices[static_cast<std::size_t>(tri[1])] - a;
    const Vec3 e2 = source.vertices[static_cast<std::size_t>(tri[2])] - a;
    const double scale = std::max({e1.squaredNorm(), e2.squaredNorm(), (e2 - e1).squaredNorm()});
    if (e1.cross(e2).norm() <= 1e-12 * scale || scale == 0.0) {
      ++out.skippedTriangles;
      continue;
    }
    usable.push_back(t);
  }
  EGOFUSE_CHECK(!usable.empty(), ErrorCode::EmptyInput, "source mesh has no usable triangles");
  out.points.reserve(target.size());
  for (const Vec3& p : target) {
    double best = std::numeric_limits<double>::infinity();
    BaryPoint pick;
    for (int t : usable) {
      const auto& tri = source.triangles[static_cast<std::size_t>(t)];
      const Vec3 bary = closestPointBarycentric(
          p, source.vertices[static_cast<std::size_t>(tri[0])],
          source.vertices[static_cast<std::size_t>(tri[1])],
          source.vertices[static_cast<std::size_t>(tri[2])]);
      const double d = (interpolate(source.vertices, tri, bary) - p).squaredNorm();
      if (d < best) {
        best = d;
        pick = {t, bary};
      }
    }
    out.points.push_back(pick);
  }
  return out;
}

SurfaceCorrespondence buildPosedCorrespondence(
    const RigModel& source, const RigModel& target, const PoseFrame& pose) {
  EGOFUSE_CHECK(
      source.poseDofCount == target.poseDofCount, ErrorCode::DimensionMismatch,
      "rigs " + source.name + " and " + target.name + " have different pose layouts");
  const TriMesh posed{skinMesh(source, VecX::Zero(source.identityDim), pose), source.triangles};
  return buildCorrespondence(posed, skinMesh(target, VecX::Zero(target.identityDim), pose));
}

std::vector<Vec3> retopologize(
    const std::vector<Vec3>& sourcePosed, const std::vector<std::array<int, 3>>& sourceTriangles,
    const SurfaceCorrespondence& corresp) {
  std::vector<Vec3> out;
  out.reserve(corresp.points.size());
  for (const auto& bp : corresp.points) {
    EGOFUSE_CHECK(
        bp.triangle >= 0 && bp.triangle < static_cast<int>(sourceTriangles.size()),
        ErrorCode::OutOfRange, "correspondence triangle " + std::to_string(bp.triangle));
    const auto& tri = sourceTriangles[static_cast<std::size_t>(bp.triangle)];
    for (int i : tri) {
      EGOFUSE_CHECK(
          i >= 0 && i < static_cast<int>(sourcePosed.size()), ErrorCode::DimensionMismatch,
          "posed source mesh has " + std::to_string(sourcePosed.size()) + " vertices");
    }
    out.push_back(interpolate(sourcePosed, tri, bp.bary));
  }
  return out;
}

std::string correspondenceToJson(const SurfaceCorrespondence& c) {
  io::Json j = io::Json::array();
  for (const auto& p : c.points) {
    j.push_back({{"tri", p.triangle}, {"bary", {p.bary[0], p.bary[1], p.bary[2]}}});
  }
  return j.dump(1) + "\n";
}

SurfaceCorrespondence correspondenceFromJson(const std::string& text, int triangleCount) {
  SurfaceCorrespondence c;
  try {
    const io::Json j = io::Json::parse(text);
    EGOFUSE_CHECK(j.is_array(), ErrorCode::ParseError, "correspondence json must be a list");
    for (std::size_t i = 0; i < j.size(); ++i) {
      const auto& e = j[i];
      BaryPoint p;
      p.triangle = e.at("tri").get<int>();
      const auto b = io::doublesFromJson(e.at("bary"), "bary");
      EGOFUSE_CHECK(
          b.size() == 3, ErrorCode::ParseError,
          "entry " + std::to_string(i) + ": bary needs 3 values");
      p.bary = Vec3(b[0], b[1], b[2]);
      EGOFUSE_CHECK(
          p.bary.minCoeff() >= 0.0 && std::abs(p.bary.sum() - 1.0) <= 1e-6, ErrorCode::ParseError,
          "entry " + std::to_string(i) + ": barycentrics must be non-negative and sum to 1");
      EGOFUSE_CHECK(
          p.triangle >= 0 && (triangleCount < 0 || p.triangle < triangleCount),
          ErrorCode::ParseError,
          "entry " + std::to_string(i) + ": triangle " + std::to_string(p.triangle) +
              " out of range");
      c.points.push_back(p);
    }
  } catch (const io::Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("correspondence json: ") + e.what());
  }
  return c;
}

SurfaceCorrespondence readCorrespondence(const std::filesystem::path& path, int triangleCount) {
  try {
    return correspondenceFromJson(io::readText(path), triangleCount);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) {
      throw;
    }
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void writeCorrespondence(const std::filesystem::path& path, const SurfaceCorrespondence& c) {
  io::writeText(path, correspondenceToJson(c));
}

void FitConfig::validate() const {
  EGOFUSE_CHECK(lambdaE >= 0.0, ErrorCode::InvalidArgument, "lambda_E must be >= 0");
  EGOFUSE_CHECK(sparseFrames >= 1, ErrorCode::InvalidArgument, "need at least one sparse frame");
  EGOFUSE_CHECK(
      stage1Iterations >= 0 && stage2Iterations >= 0 && stage3Iterations >= 0,
      ErrorCode::InvalidArgument, "stage iteration caps must be >= 0");
  EGOFUSE_CHECK(
      learningRate > 0.0 && identityLearningRate >= 0.0, ErrorCode::InvalidArgument,
      "learning rates must be positive");
  EGOFUSE_CHECK(
      beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorCode::InvalidArgument,
      "Adam betas must lie in [0, 1)");
  EGOFUSE_CHECK(
      backoff > 0.0 && backoff < 1.0, ErrorCode::InvalidArgument, "backoff must lie in (0, 1)");
  EGOFUSE_CHECK(edgeEpsilon > 0.0, ErrorCode::InvalidArgument, "edge epsilon must be positive");
}

MeshLoss meshLoss(
    const RigModel& rig, const VecX& identity, const PoseFrame& frame,
    const std::vector<Vec3>& target, double lambdaE, double edgeEpsilon, bool withGradient) {
  const int nv = rig.vertexCount();
  EGOFUSE_CHECK(
      static_cast<int>(target.size()) == nv, ErrorCode::DimensionMismatch,
      "target mesh has " + std::to_string(target.size()) + " vertices, rig " + rig.name + " has " +
          std::to_string(nv));
  const Kinematics kin = computeKinematics(rig, identity, frame);
  const auto rest = restJointPositions(rig, identity);
  std::vector<Vec3> posed(static_cast<std::size_t>(nv), Vec3::Zero());
  for (int v = 0; v < nv; ++v) {
    for (const auto& inf : rig.skinning[static_cast<std::size_t>(v)]) {
      const auto j = static_cast<std::size_t>(inf.joint);
      posed[static_cast<std::size_t>(v)] +=
          inf.weight * (kin.rotation[j] * (rig.templateVertices[static_cast<std::size_t>(v)] - rest[j]) +
                        kin.position[j]);
    }
  }

  MeshLoss out;
  std::vector<Vec3> grad(withGradient ? static_cast<std::size_t>(nv) : 0, Vec3::Zero());
  for (int v = 0; v < nv; ++v) {
    const Vec3 d = posed[static_cast<std::size_t>(v)] - target[static_cast<std::size_t>(v)];
    out.vertex += d.squaredNorm();
    if (withGradient) {
      grad[static_cast<std::size_t>(v)] = 2.0 * d / nv;
    }
  }
  out.vertex /= nv;
  if (!rig.edges.empty()) {
    const double ne = static_cast<double>(rig.edges.size());
    for (const auto& [a, b] : rig.edges) {
      const auto ia = static_cast<std::size_t>(a);
      const auto ib = static_cast<std::size_t>(b);
      const Vec3 d = (posed[ia] - posed[ib]) - (target[ia] - target[ib]);
      const double n = std::sqrt(d.squaredNorm() + edgeEpsilon * edgeEpsilon);
      out.edge += n - edgeEpsilon;
      if (withGradient && lambdaE > 0.0) {
        const Vec3 g = lambdaE * d / (n * ne);
        grad[ia] += g;
        grad[ib] -= g;
      }
    }
    out.edge /= ne;
  }
  out.total = out.vertex + lambdaE * out.edge;
  if (!withGradient) {
    return out;
  }

  // Per-joint force and moment (about the origin) of the vertex gradients,
  // then subtree sums: every DoF sees the joints below it.
  const int nj = rig.jointCount();
  std::vector<Vec3> force(static_cast<std::size_t>(nj), Vec3::Zero());
  std::vector<Vec3> moment(static_cast<std::size_t>(nj), Vec3::Zero());
  for (int v = 0; v < nv; ++v) {
    const Vec3& g = grad[static_cast<std::size_t>(v)];
    for (const auto& inf : rig.skinning[static_cast<std::size_t>(v)]) {
      const auto j = static_cast<std::size_t>(inf.joint);
      const Vec3 p =
          kin.rotation[j] * (rig.templateVertices[static_cast<std::size_t>(v)] - rest[j]) +
          kin.position[j];
      force[j] += inf.weight * g;
      moment[j] += inf.weight * p.cross(g);
    }
  }
  const std::vector<Vec3> jointForce = force;
  for (int j = nj - 1; j > 0; --j) {
    const auto p = static_cast<std::size_t>(rig.joints[static_cast<std::size_t>(j)].parent);
    force[p] += force[static_cast<std::size_t>(j)];
    moment[p] += moment[static_cast<std::size_t>(j)];
  }

  const int n = frameParamCount(rig);
  out.gradient = VecX::Zero(n + rig.identityDim);
  out.gradient.segment<3>(kRootTranslationCol) = force[0];
  out.gradient.segment<3>(kRootRotationCol) =
      kin.offsetFrame[0].transpose() * (moment[0] - kin.rootTranslation.cross(force[0]));
  for (int i = 0; i < nj; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    if (!rig.joints[ii].rotates) {
      continue;
    }
    const Vec3 torque = moment[ii] - kin.position[ii].cross(force[ii]);
    for (int a = 0; a < 3; ++a) {
      out.gradient[kPoseCol + rig.dofStart[ii] + a] = kin.dofAxes[ii][static_cast<std::size_t>(a)].dot(torque);
    }
  }
  // Identity moves both the posed joint and the rest frame it skins from.
  for (int j = 0; j < nj; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    if (jointForce[jj].isZero(0.0)) {
      continue;
    }
    for (int i : rig.chain[jj]) {
      const auto& bone = rig.joints[static_cast<std::size_t>(i)];
      if (bone.parent < 0) {
        continue;
      }
      const Vec3 u =
          (kin.offsetFrame[static_cast<std::size_t>(i)] - kin.rotation[jj]) * bone.restDirection;
      const double s = jointForce[jj].dot(u);
      for (int g = 0; g < rig.identityDim; ++g) {
        out.gradient[n + g] += bone.lengthCoeffs[static_cast<std::size_t>(g)] * s;
      }
    }
  }
  return out;
}

std::vector<ResidualBlock> meshResidualBlocks(
    const RigModel& rig, const VecX& identity, const PoseFrame& frame,
    const std::vector<Vec3>& target, double lambdaE, double edgeEpsilon, int frameIndex,
    int frameCount, bool withIdentity, bool withJacobian) {
  const int nv = rig.vertexCount();
  EGOFUSE_CHECK(
      static_cast<int>(target.size()) == nv, ErrorCode::DimensionMismatch,
      "target mesh has " + std::to_string(target.size()) + " vertices, rig " + rig.name + " has " +
          std::to_string(nv));
  const Kinematics kin = computeKinematics(rig, identity, frame);
  const auto rest = restJointPositions(rig, identity);
  const int width = frameParamCount(rig) + (withIdentity ? rig.identityDim : 0);
  std::vector<int> local(static_cast<std::size_t>(width));
  for (int c = 0; c < width; ++c) {
    local[static_cast<std::size_t>(c)] = c;
  }
  const auto cols = problemColumns(rig, local, frameIndex, frameCount);

  std::vector<Vec3> posed(static_cast<std::size_t>(nv), Vec3::Zero());
  for (int v = 0; v < nv; ++v) {
    for (const auto& inf : rig.skinning[static_cast<std::size_t>(v)]) {
      const auto j = static_cast<std::size_t>(inf.joint);
      posed[static_cast<std::size_t>(v)] +=
          inf.weight * (kin.rotation[j] * (rig.templateVertices[static_cast<std::size_t>(v)] - rest[j]) +
                        kin.position[j]);
    }
  }
  std::vector<MatX> jac;
  if (withJacobian) {
    jac.reserve(static_cast<std::size_t>(nv));
    for (int v = 0; v < nv; ++v) {
      jac.push_back(vertexJacobian(rig, identity, kin, rest, v, withIdentity));
    }
  }

  std::vector<ResidualBlock> out;
  ResidualBlock vb;
  const double sv = 1.0 / std::sqrt(static_cast<double>(nv));
  vb.residual.resize(3 * nv);
  if (withJacobian) {
    vb.jacobian.resize(3 * nv, width);
  }
  for (int v = 0; v < nv; ++v) {
    const auto vv = static_cast<std::size_t>(v);
    vb.residual.segment<3>(3 * v) = sv * (posed[vv] - target[vv]);
    if (withJacobian) {
      vb.jacobian.middleRows<3>(3 * v) = sv * jac[vv];
    }
  }
  vb.cols = cols;
  vb.term = 0;
  out.push_back(std::move(vb));

  if (lambdaE > 0.0 && !rig.edges.empty()) {
    // Cost 2 delta (sqrt(c^2 |d|^2 + delta^2) - delta) with delta = c eps equals
    // 2 c^2 eps (sqrt(|d|^2 + eps^2) - eps); pick c so that 2 c^2 eps = lambdaE / E.
    const double ne = static_cast<double>(rig.edges.size());
    const double c = std::sqrt(lambdaE / (2.0 * ne * edgeEpsilon));
    for (const auto& [a, b] : rig.edges) {
      const auto ia = static_cast<std::size_t>(a);
      const auto ib = static_cast<std::size_t>(b);
      ResidualBlock eb;
      eb.residual = c * ((posed[ia] - posed[ib]) - (target[ia] - target[ib]));
      eb.pseudoHuberDelta = c * edgeEpsilon;
      eb.term = 1;
      if (withJacobian) {
        const MatX d = c * (jac[ia] - jac[ib]);
        for (int k = 0; k < width; ++k) {
          if (!d.col(k).isZero(0.0)) {
            eb.cols.push_back(cols[static_cast<std::size_t>(k)]);
          }
        }
        eb.jacobian.resize(3, static_cast<Eigen::Index>(eb.cols.size()));
        Eigen::Index used = 0;
        for (int k = 0; k < width; ++k) {
          if (!d.col(k).isZero(0.0)) {
            eb.jacobian.col(used++) = d.col(k);
          }
        }
      }
      out.push_back(std::move(eb));
    }
  }
  return out;
}

std::vector<int> selectSparseFrames(
    const RigModel& rig, const std::vector<std::vector<Vec3>>& targets, int count) {
  EGOFUSE_CHECK(!targets.empty(), ErrorCode::EmptyInput, "no target frames");
  EGOFUSE_CHECK(count >= 1, ErrorCode::InvalidArgument, "need at least one sparse frame");
  auto centered = [](const std::vector<Vec3>& m) {
    Vec3 c = Vec3::Zero();
    for (const auto& v : m) {
      c += v;
    }
    c /= static_cast<double>(m.size());
    std::vector<Vec3> out = m;
    for (auto& v : out) {
      v -= c;
    }
    return out;
  };
  auto distance = [](const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    double s = 0.0;
    for (std::size_t v = 0; v < a.size(); ++v) {
      s += (a[v] - b[v]).norm();
    }
    return s / static_cast<double>(a.size());
  };
  std::vector<std::vector<Vec3>> c;
  c.reserve(targets.size());
  for (const auto& t : targets) {
    c.push_back(centered(t));
  }
  const auto rest = centered(rig.templateVertices);
  std::vector<double> nearest(targets.size());
  for (std::size_t f = 0; f < targets.size(); ++f) {
    nearest[f] = distance(c[f], rest);
  }
  std::vector<int> picked;
  const auto want = std::min<std::size_t>(static_cast<std::size_t>(count), targets.size());
  while (picked.size() < want) {
    const auto it = std::max_element(nearest.begin(), nearest.end());
    const auto f = static_cast<std::size_t>(it - nearest.begin());
    picked.push_back(static_cast<int>(f));
    for (std::size_t k = 0; k < targets.size(); ++k) {
      nearest[k] = std::min(nearest[k], distance(c[k], c[f]));
    }
    nearest[f] = -1.0;
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

namespace {

// Adam over a flat parameter vector with a monotone safeguard: a step that
// does not lower the loss is undone and the rate backs off.
struct AdamProblem {
  // Returns loss; fills `grad` when non-null.
  std::function<double(VecX* grad)> evaluate;
  // Applies an increment to the current state.
  std::function<void(const VecX& step)> apply;
  std::function<void()> save;
  std::function<void()> restore;
};

StageTrace runAdam(
    const std::string& name, AdamProblem& p, const VecX& rates, int iterations,
    const FitConfig& cfg) {
  StageTrace trace;
  trace.name = name;
  VecX grad;
  double f = p.evaluate(&grad);
  trace.losses.push_back(f);
  VecX m = VecX::Zero(grad.size());
  VecX v = VecX::Zero(grad.size());
  double scale = 1.0;
  int t = 0;
  for (int it = 0; it < iterations; ++it) {
    if (f == 0.0 || grad.isZero(0.0)) {
      trace.converged = true;
      break;
    }
    ++t;
    const VecX m1 = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    const VecX v1 = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    // Exponential decay from the base rate to finalRateRatio times it.
    const double decay =
        std::pow(cfg.finalRateRatio, static_cast<double>(it) / std::max(iterations - 1, 1));
    const VecX step = -(scale * decay) *
        rates.cwiseProduct(((m1 / c1).array() /
                            ((v1 / c2).array().sqrt() + cfg.adamEpsilon)).matrix());
    p.save();
    p.apply(step);
    VecX g1;
    const double f1 = p.evaluate(&g1);
    if (f1 < f) {
      f = f1;
      grad = g1;
      m = m1;
      v = v1;
      trace.losses.push_back(f);
      scale = std::min(1.0, scale * 1.25);
    } else {
      p.restore();
      --t;
      scale *= cfg.backoff;
      if (scale * decay * rates.maxCoeff() < cfg.minLearningRate) {
        trace.converged = true;
        break;
      }
    }
  }
  return trace;
}

RigidTransform kabschRoot(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
  Eigen::Matrix3Xd a(3, static_cast<Eigen::Index>(from.size()));
  Eigen::Matrix3Xd b(3, static_cast<Eigen::Index>(to.size()));
  for (std::size_t i = 0; i < from.size(); ++i) {
    a.col(static_cast<Eigen::Index>(i)) = from[i];
    b.col(static_cast<Eigen::Index>(i)) = to[i];
  }
  const Eigen::Matrix4d t = Eigen::umeyama(a, b, false);
  return {Quat(Mat3(t.block<3, 3>(0, 0))).normalized(), t.block<3, 1>(0, 3)};
}

// Root that maps the zero-pose mesh onto the target.
PoseFrame initialFrame(
    const RigModel& rig, const VecX& identity, const std::vector<Vec3>& target, TimeNs t) {
  PoseFrame f = zeroFrame(rig, t);
  f.root = kabschRoot(skinMesh(rig, identity, f), target);
  return f;
}

// All frames plus the identity as one structured least-squares problem.
class MeshPolishProblem final : public StructuredProblem {
 public:
  MeshPolishProblem(
      const RigModel& rig, const std::vector<std::vector<Vec3>>& targets, const FitConfig& cfg,
      std::vector<PoseFrame>& frames, VecX& identity)
      : rig_(rig), targets_(targets), cfg_(cfg), frames_(frames), identity_(identity) {}

  [[nodiscard]] int frameCount() const override {
    return static_cast<int>(frames_.size());
  }
  [[nodiscard]] int frameDim() const override {
    return frameParamCount(rig_);
  }
  [[nodiscard]] int globalDim() const override {
    return rig_.identityDim;
  }

  void evaluate(std::vector<ResidualBlock>& blocks, bool withJacobians) const override {
    blocks.clear();
    for (int f = 0; f < frameCount(); ++f) {
      auto b = meshResidualBlocks(
          rig_, identity_, frames_[static_cast<std::size_t>(f)], targets_[static_cast<std::size_t>(f)],
          cfg_.lambdaE, cfg_.edgeEpsilon, f, frameCount(), true, withJacobians);
      for (auto& x : b) {
        blocks.push_back(std::move(x));
      }
    }
  }

  void applyIncrement(const Eigen::VectorXd& delta) override {
    const int n = frameDim();
    for (int f = 0; f < frameCount(); ++f) {
      auto& fr = frames_[static_cast<std::size_t>(f)];
      fr = applyFrameIncrement(fr, delta.segment(static_cast<Eigen::Index>(f) * n, n));
    }
    identity_ += delta.tail(rig_.identityDim);
  }

  [[nodiscard]] std::any saveState() const override {
    return std::make_pair(frames_, identity_);
  }

  void restoreState(const std::any& state) override {
    const auto& s = std::any_cast<const std::pair<std::vector<PoseFrame>, VecX>&>(state);
    frames_ = s.first;
    identity_ = s.second;
  }

 private:
  const RigModel& rig_;
  const std::vector<std::vector<Vec3>>& targets_;
  const FitConfig& cfg_;
  std::vector<PoseFrame>& frames_;
  VecX& identity_;
};

} // namespace

FitResult fitParameters(
    const RigModel& rig, const std::vector<std::vector<Vec3>>& targets,
    const std::vector<TimeNs>& times, const FitConfig& cfg) {
  cfg.validate();
  EGOFUSE_CHECK(!targets.empty(), ErrorCode::EmptyInput, "no target frames to fit");
  EGOFUSE_CHECK(
      times.size() == targets.size(), ErrorCode::DimensionMismatch,
      "got " + std::to_string(times.size()) + " timestamps for " + std::to_string(targets.size()) +
          " target frames");
  for (std::size_t f = 0; f < targets.size(); ++f) {
    EGOFUSE_CHECK(
        static_cast<int>(targets[f].size()) == rig.vertexCount(), ErrorCode::DimensionMismatch,
        "target frame " + std::to_string(f) + " has " + std::to_string(targets[f].size()) +
            " vertices, rig " + rig.name + " topology has " + std::to_string(rig.vertexCount()));
  }
  const int n = frameParamCount(rig);
  const int ni = rig.identityDim;
  const auto frameCount = static_cast<int>(targets.size());

  FitResult result;
  result.motion.rigName = rig.name;
  result.motion.identity = VecX::Zero(ni);
  for (std::size_t f = 0; f < targets.size(); ++f) {
    result.motion.frames.push_back(zeroFrame(rig, times[f]));
  }
  if (targets.size() >= 2) {
    result.motion.rateHz =
        1e9 * static_cast<double>(targets.size() - 1) /
        static_cast<double>(times.back() - times.front());
  }
  VecX& identity = result.motion.identity;
  auto& frames = result.motion.frames;

  // Joint optimization of the given frames (and optionally identity).
  auto jointProblem = [&](const std::vector<int>& which, bool withIdentity, bool rootOnly) {
    auto backup = std::make_shared<std::pair<std::vector<PoseFrame>, VecX>>();
    AdamProblem p;
    p.evaluate = [&, which, withIdentity](VecX* grad) {
      double total = 0.0;
      if (grad != nullptr) {
        *grad = VecX::Zero(static_cast<Eigen::Index>(which.size()) * n + (withIdentity ? ni : 0));
      }
      for (std::size_t k = 0; k < which.size(); ++k) {
        const auto f = static_cast<std::size_t>(which[k]);
        const MeshLoss l =
            meshLoss(rig, identity, frames[f], targets[f], cfg.lambdaE, cfg.edgeEpsilon, grad != nullptr);
        total += l.total;
        if (grad != nullptr) {
          grad->segment(static_cast<Eigen::Index>(k) * n, n) = l.gradient.head(n);
          if (withIdentity) {
            grad->tail(ni) += l.gradient.tail(ni);
          }
        }
      }
      const double inv = 1.0 / static_cast<double>(which.size());
      if (grad != nullptr) {
        *grad *= inv;
      }
      return total * inv;
    };
    p.apply = [&, which, withIdentity, rootOnly](const VecX& step) {
      for (std::size_t k = 0; k < which.size(); ++k) {
        VecX d = step.segment(static_cast<Eigen::Index>(k) * n, n);
        if (rootOnly) {
          d.tail(n - kPoseCol).setZero();
        }
        auto& fr = frames[static_cast<std::size_t>(which[k])];
        fr = applyFrameIncrement(fr, d);
      }
      if (withIdentity) {
        identity += step.tail(ni);
      }
    };
    p.save = [&, which, backup] {
      backup->first.clear();
      for (int f : which) {
        backup->first.push_back(frames[static_cast<std::size_t>(f)]);
      }
      backup->second = identity;
    };
    p.restore = [&, which, backup] {
      for (std::size_t k = 0; k < which.size(); ++k) {
        frames[static_cast<std::size_t>(which[k])] = backup->first[k];
      }
      identity = backup->second;
    };
    return p;
  };
  auto rates = [&](std::size_t count, bool withIdentity, bool rootOnly) {
    VecX r = VecX::Constant(static_cast<Eigen::Index>(count) * n + (withIdentity ? ni : 0),
                            cfg.learningRate);
    if (rootOnly) {
      for (std::size_t k = 0; k < count; ++k) {
        r.segment(static_cast<Eigen::Index>(k) * n + kPoseCol, n - kPoseCol).setZero();
      }
    }
    if (withIdentity) {
      r.tail(ni).setConstant(cfg.identityLearningRate);
    }
    return r;
  };

  // Stage 1: shared identity with the poses of a few diverse frames.
  result.sparseFrames = selectSparseFrames(rig, targets, cfg.sparseFrames);
  for (int f : result.sparseFrames) {
    const auto ff = static_cast<std::size_t>(f);
    frames[ff] = initialFrame(rig, identity, targets[ff], times[ff]);
  }
  {
    AdamProblem p = jointProblem(result.sparseFrames, true, false);
    result.stages.push_back(runAdam(
        "identity", p, rates(result.sparseFrames.size(), true, false), cfg.stage1Iterations, cfg));
  }

  // Stage 2: global orientation and translation per frame, pose held at zero.
  StageTrace root;
  root.name = "root";
  root.converged = true;
  std::vector<std::vector<double>> traces;
  for (int f = 0; f < frameCount; ++f) {
    const auto ff = static_cast<std::size_t>(f);
    frames[ff] = initialFrame(rig, identity, targets[ff], times[ff]);
    AdamProblem p = jointProblem({f}, false, true);
    StageTrace t = runAdam("root", p, rates(1, false, true), cfg.stage2Iterations, cfg);
    root.converged = root.converged && t.converged;
    traces.push_back(std::move(t.losses));
  }
  // Mean over frames, each trace padded with its final value.
  std::size_t longest = 0;
  for (const auto& t : traces) {
    longest = std::max(longest, t.size());
  }
  root.losses.assign(longest, 0.0);
  for (const auto& t : traces) {
    for (std::size_t k = 0; k < longest; ++k) {
      root.losses[k] += t[std::min(k, t.size() - 1)] / frameCount;
    }
  }
  result.stages.push_back(std::move(root));

  // Stage 3: every pose DoF of every frame together with the identity.
  std::vector<int> all(targets.size());
  for (int f = 0; f < frameCount; ++f) {
    all[static_cast<std::size_t>(f)] = f;
  }
  {
    AdamProblem p = jointProblem(all, true, false);
    result.stages.push_back(
        runAdam("full", p, rates(all.size(), true, false), cfg.stage3Iterations, cfg));
  }

  if (cfg.polishIterations > 0) {
    MeshPolishProblem problem(rig, targets, cfg, frames, identity);
    LmOptions lm;
    lm.maxIterations = cfg.polishIterations;
    const LmSummary s = solveLevenbergMarquardt(problem, lm);
    StageTrace t;
    t.name = "polish";
    t.converged = s.converged;
    for (double c : s.acceptedCosts) {
      t.losses.push_back(c / frameCount);
    }
    result.stages.push_back(std::move(t));
  }

  result.frameConverged.resize(targets.size());
  for (std::size_t f = 0; f < targets.size(); ++f) {
    result.frameConverged[f] = result.stages.back().converged;
    const MeshLoss l = meshLoss(rig, identity, frames[f], targets[f], cfg.lambdaE, cfg.edgeEpsilon, false);
    result.finalVertexLoss += l.vertex;
    result.finalEdgeLoss += l.edge;
  }
  result.finalVertexLoss /= frameCount;
  result.finalEdgeLoss /= frameCount;
  return result;
}

FitResult convertMotion(
    const RigModel& source, const RigModel& target, const SurfaceCorrespondence& corresp,
    const MotionSequence& motion, const FitConfig& cfg) {
  motion.validate(source);
  EGOFUSE_CHECK(
      static_cast<int>(corresp.points.size()) == target.vertexCount(), ErrorCode::DimensionMismatch,
      "correspondence has " + std::to_string(corresp.points.size()) + " points, target rig has " +
          std::to_string(target.vertexCount()) + " vertices");
  std::vector<std::vector<Vec3>> targets;
  std::vector<TimeNs> times;
  for (const auto& f : motion.frames) {
    targets.push_back(retopologize(skinMesh(source, motion.identity, f), source.triangles, corresp));
    times.push_back(f.tNs);
  }
  FitResult r = fitParameters(target, targets, times, cfg);
  if (motion.rateHz > 0.0) {
    r.motion.rateHz = motion.rateHz;
  }
  return r;
}

} // namespace egofuse
