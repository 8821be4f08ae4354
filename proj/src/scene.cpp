#include "egofuse/scene.h"

#include "egofuse/error.h"
#include "egofuse/io.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace egofuse {

namespace {

constexpr std::array<std::string_view, kFixedCategoryCount + 1> kCategoryNames = {
    "bed",           "chair",          "couch",  "door",   "floor",        "lamp_light",
    "mirror",        "table",          "wall_art", "window_opening", "plant", "storage_shelf",
    "screen_display", "wall",          "sink",   "toilet", "refrigerator", "washer_dryer",
    "stairs",        "anything",
};

} // namespace

std::string_view categoryName(ObjectCategory c) {
  return kCategoryNames.at(static_cast<std::size_t>(c));
}

ObjectCategory categoryFromName(std::string_view name) {
  for (std::size_t i = 0; i < kCategoryNames.size(); ++i) {
    if (kCategoryNames[i] == name) {
      return static_cast<ObjectCategory>(i);
    }
  }
  throw Error(ErrorCode::ParseError, "unknown object category '" + std::string(name) + "'");
}

void Obb3::validate() const {
  EGOFUSE_CHECK(
      center.allFinite() && halfExtents.allFinite(), ErrorCode::InvariantViolation,
      "box " + std::to_string(id) + ": non-finite geometry");
  EGOFUSE_CHECK(
      halfExtents.minCoeff() > 0.0, ErrorCode::InvariantViolation,
      "box " + std::to_string(id) + ": half extents must be positive");
  EGOFUSE_CHECK(
      std::abs(rotation.norm() - 1.0) <= 1e-9, ErrorCode::InvariantViolation,
      "box " + std::to_string(id) + ": rotation is not a unit quaternion");
}

Vec3 Obb3::toLocal(const Vec3& world) const {
  return rotation.conjugate() * (world - center);
}

bool Obb3::contains(const Vec3& world) const {
  const Vec3 local = toLocal(world);
  return (local.cwiseAbs().array() <= halfExtents.array()).all();
}

void SceneAnnotation::validate() const {
  std::set<std::int64_t> ids;
  for (const auto& b : boxes) {
    b.validate();
    EGOFUSE_CHECK(
        ids.insert(b.id).second, ErrorCode::InvariantViolation,
        "duplicate box id " + std::to_string(b.id));
  }
}

std::array<Vec3, 8> obbCorners(const Obb3& box) {
  std::array<Vec3, 8> out;
  const Mat3 r = box.rotation.toRotationMatrix();
  for (int i = 0; i < 8; ++i) {
    const Vec3 sign((i & 1) ? 1.0 : -1.0, (i & 2) ? 1.0 : -1.0, (i & 4) ? 1.0 : -1.0);
    out[static_cast<std::size_t>(i)] = box.center + r * sign.cwiseProduct(box.halfExtents);
  }
  return out;
}

std::vector<Vec3> obbEdgeSamples(const Obb3& box, int nPerEdge) {
  EGOFUSE_CHECK(nPerEdge >= 2, ErrorCode::InvalidArgument, "n_per_edge must be at least 2");
  const auto corners = obbCorners(box);
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(12 * nPerEdge));
  // An edge joins corners differing in exactly one bit.
  for (int axis = 0; axis < 3; ++axis) {
    const int bit = 1 << axis;
    for (int i = 0; i < 8; ++i) {
      if (i & bit) {
        continue;
      }
      const Vec3& a = corners[static_cast<std::size_t>(i)];
      const Vec3& b = corners[static_cast<std::size_t>(i | bit)];
      for (int k = 0; k < nPerEdge; ++k) {
        const double s = static_cast<double>(k) / (nPerEdge - 1);
        out.push_back(k == nPerEdge - 1 ? b : Vec3(a + s * (b - a)));
      }
    }
  }
  return out;
}

VisibilityVerdict computeVisibility(
    const Obb3& box, const CameraModel& cam, const RigidTransform& worldFromCamera,
    const std::vector<Vec3>& cloud, const VisibilityOptions& opts) {
  box.validate();
  cam.validate();
  EGOFUSE_CHECK(
      opts.insideFraction >= 0.0 && opts.insideFraction <= 1.0 && opts.minPoints >= 0,
      ErrorCode::InvalidArgument, "visibility thresholds out of range");
  const RigidTransform cameraFromWorld = worldFromCamera.inverse();
  const auto samples = obbEdgeSamples(box, opts.nPerEdge);

  int inImage = 0;
  for (const auto& p : samples) {
    const auto uv = cam.project(cameraFromWorld.apply(p));
    if (uv && cam.inImage(*uv)) {
      ++inImage;
    }
  }

  VisibilityVerdict v;
  for (const auto& p : cloud) {
    if (box.contains(p)) {
      ++v.pointsInside;
    }
  }
  v.fractionInside = static_cast<double>(inImage) / static_cast<double>(samples.size());
  v.projectable = inImage > 0;
  v.enoughPoints = v.pointsInside >= opts.minPoints;
  v.mostlyInImage = v.fractionInside >= opts.insideFraction;
  if (!v.projectable) {
    v.reasons.emplace_back("not_projectable");
  }
  if (!v.enoughPoints) {
    v.reasons.emplace_back("too_few_points");
  }
  if (!v.mostlyInImage) {
    v.reasons.emplace_back("outside_image");
  }
  v.visible = v.reasons.empty();
  return v;
}

std::optional<Box2> compute2dbb(
    const Obb3& box, const CameraModel& cam, const RigidTransform& worldFromCamera,
    int nPerEdge) {
  box.validate();
  cam.validate();
  const RigidTransform cameraFromWorld = worldFromCamera.inverse();
  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
  Vec2 hi = -lo;
  bool any = false;
  for (const auto& p : obbEdgeSamples(box, nPerEdge)) {
    const auto uv = cam.project(cameraFromWorld.apply(p));
    if (!uv) {
      continue;
    }
    any = true;
    lo = lo.cwiseMin(*uv);
    hi = hi.cwiseMax(*uv);
  }
  if (!any) {
    return std::nullopt;
  }
  const double w = cam.width;
  const double h = cam.height;
  return Box2{
      std::clamp(lo.x(), 0.0, w), std::clamp(lo.y(), 0.0, h), std::clamp(hi.x(), 0.0, w),
      std::clamp(hi.y(), 0.0, h)};
}

// ---------------------------------------------------------------------------
// Convex polytope clipping

namespace {

struct Face {
  std::vector<Vec3> pts;
  Vec3 normal; // outward, unit
};

std::vector<Face> boxFaces(const Obb3& box, const Vec3& origin) {
  const Mat3 r = box.rotation.toRotationMatrix();
  const Vec3 c = box.center - origin;
  std::vector<Face> faces;
  for (int a = 0; a < 3; ++a) {
    const int b = (a + 1) % 3;
    const int d = (a + 2) % 3;
    const Vec3 ub = r.col(b) * box.halfExtents[b];
    const Vec3 ud = r.col(d) * box.halfExtents[d];
    for (double s : {-1.0, 1.0}) {
      const Vec3 n = s * r.col(a);
      const Vec3 fc = c + n * box.halfExtents[a];
      faces.push_back({{fc + ub + ud, fc - ub + ud, fc - ub - ud, fc + ub - ud}, n});
    }
  }
  return faces;
}

double polygonArea(const std::vector<Vec3>& pts, const Vec3& normal) {
  Vec3 acc = Vec3::Zero();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    acc += pts[i].cross(pts[(i + 1) % pts.size()]);
  }
  return 0.5 * std::abs(normal.dot(acc));
}

// Keeps the part of the polytope with n.x <= d and closes it with a cap face.
std::vector<Face> clipPolytope(const std::vector<Face>& faces, const Vec3& n, double d, double tol) {
  std::vector<Face> out;
  std::vector<Vec3> cap;
  bool faceOnPlane = false;
  for (const auto& f : faces) {
    Face clipped{{}, f.normal};
    const std::size_t m = f.pts.size();
    bool allOnPlane = true;
    for (std::size_t i = 0; i < m; ++i) {
      const Vec3& p = f.pts[i];
      const Vec3& q = f.pts[(i + 1) % m];
      const double dp = n.dot(p) - d;
      const double dq = n.dot(q) - d;
      allOnPlane = allOnPlane && std::abs(dp) <= tol;
      if (dp <= tol) {
        clipped.pts.push_back(p);
        if (std::abs(dp) <= tol) {
          cap.push_back(p);
        }
      }
      if ((dp < -tol && dq > tol) || (dp > tol && dq < -tol)) {
        const Vec3 x = p + (q - p) * (dp / (dp - dq));
        clipped.pts.push_back(x);
        cap.push_back(x);
      }
    }
    if (allOnPlane && f.normal.dot(n) > 0.0) {
      faceOnPlane = true;
    }
    if (clipped.pts.size() >= 3) {
      out.push_back(std::move(clipped));
    }
  }
  if (out.empty() || faceOnPlane || cap.size() < 3) {
    return out;
  }
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : cap) {
    centroid += p;
  }
  centroid /= static_cast<double>(cap.size());
  const Vec3 u = n.unitOrthogonal();
  const Vec3 w = n.cross(u);
  std::sort(cap.begin(), cap.end(), [&](const Vec3& a, const Vec3& b) {
    const Vec3 da = a - centroid;
    const Vec3 db = b - centroid;
    return std::atan2(da.dot(w), da.dot(u)) < std::atan2(db.dot(w), db.dot(u));
  });
  out.push_back({std::move(cap), n});
  return out;
}

double polytopeVolume(const std::vector<Face>& faces) {
  double v = 0.0;
  for (const auto& f : faces) {
    v += f.normal.dot(f.pts.front()) * polygonArea(f.pts, f.normal);
  }
  return std::max(0.0, v / 3.0);
}

} // namespace

double intersectionVolume(const Obb3& a, const Obb3& b) {
  a.validate();
  b.validate();
  // Working relative to a's center keeps the dot products small.
  const Vec3 origin = a.center;
  const double scale = std::max(a.halfExtents.maxCoeff(), b.halfExtents.maxCoeff()) +
                       (b.center - a.center).norm();
  const double tol = 1e-12 * scale;
  std::vector<Face> poly = boxFaces(a, origin);
  const Mat3 rb = b.rotation.toRotationMatrix();
  const Vec3 cb = b.center - origin;
  for (int axis = 0; axis < 3 && !poly.empty(); ++axis) {
    for (double s : {-1.0, 1.0}) {
      const Vec3 n = s * rb.col(axis);
      poly = clipPolytope(poly, n, n.dot(cb) + b.halfExtents[axis], tol);
      if (poly.empty()) {
        break;
      }
    }
  }
  return polytopeVolume(poly);
}

double iou3d(const Obb3& a, const Obb3& b) {
  const double inter = intersectionVolume(a, b);
  const double uni = a.volume() + b.volume() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// ---------------------------------------------------------------------------

SceneAnnotation transferAnnotations(
    const SceneAnnotation& basemap, const std::string& targetFrame,
    const RigidTransform& worldAlignment) {
  basemap.validate();
  SceneAnnotation out = basemap;
  out.frame = targetFrame;
  for (auto& b : out.boxes) {
    b.center = worldAlignment.apply(b.center);
    b.rotation = worldAlignment.rotation * b.rotation;
  }
  return out;
}

std::optional<std::int64_t> gateShapeTransfer(
    const Obb3& source, const std::vector<Obb3>& candidates, double iouThreshold) {
  EGOFUSE_CHECK(
      iouThreshold > 0.0 && iouThreshold <= 1.0, ErrorCode::InvalidArgument,
      "IoU threshold must be in (0, 1]");
  std::optional<std::size_t> best;
  double bestIou = -1.0;
  std::vector<double> passing;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double v = iou3d(source, candidates[i]);
    if (v < iouThreshold) {
      continue;
    }
    passing.push_back(v);
    if (v > bestIou) {
      bestIou = v;
      best = i;
    }
  }
  if (!best) {
    return std::nullopt;
  }
  const auto ties = std::count_if(passing.begin(), passing.end(), [&](double v) {
    return bestIou - v <= 1e-9;
  });
  EGOFUSE_CHECK(
      ties == 1, ErrorCode::AmbiguousMatch,
      "box " + std::to_string(source.id) + ": " + std::to_string(ties) +
          " candidates tie at IoU " + formatDouble(bestIou));
  return candidates[*best].id;
}

std::vector<Vec3> filterInstancePoints(
    const Obb3& box, const std::vector<Vec3>& cloud, const std::optional<InstanceMasks>& masks) {
  box.validate();
  std::vector<Vec3> inside;
  for (const auto& p : cloud) {
    if (box.contains(p)) {
      inside.push_back(p);
    }
  }
  if (!masks) {
    return inside;
  }
  const CameraModel& cam = masks->cam;
  cam.validate();
  EGOFUSE_CHECK(masks->minHits >= 0, ErrorCode::InvalidArgument, "mask hit count must be >= 0");
  const auto pixels = static_cast<std::size_t>(cam.width) * static_cast<std::size_t>(cam.height);
  std::vector<RigidTransform> cameraFromWorld;
  for (const auto& f : masks->frames) {
    EGOFUSE_CHECK(
        f.mask.size() == pixels, ErrorCode::DimensionMismatch,
        "mask raster has " + std::to_string(f.mask.size()) + " pixels, camera needs " +
            std::to_string(pixels));
    cameraFromWorld.push_back(f.worldFromCamera.inverse());
  }
  std::vector<Vec3> kept;
  for (const auto& p : inside) {
    int hits = 0;
    for (std::size_t f = 0; f < masks->frames.size(); ++f) {
      const auto uv = cam.project(cameraFromWorld[f].apply(p));
      if (!uv || !cam.inImage(*uv)) {
        continue;
      }
      const auto col = static_cast<std::size_t>(uv->x());
      const auto row = static_cast<std::size_t>(uv->y());
      if (masks->frames[f].mask[row * static_cast<std::size_t>(cam.width) + col] != 0) {
        ++hits;
      }
    }
    if (hits >= masks->minHits) {
      kept.push_back(p);
    }
  }
  return kept;
}

double angleBetween(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

ViewSelection selectViews(
    const std::vector<Vec3>& objectPoints, const Trajectory& cameraPoses, const CameraModel& cam,
    int k) {
  EGOFUSE_CHECK(k >= 1, ErrorCode::InvalidArgument, "view count must be positive");
  EGOFUSE_CHECK(!objectPoints.empty(), ErrorCode::EmptyInput, "no object points");
  cam.validate();
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : objectPoints) {
    centroid += p;
  }
  centroid /= static_cast<double>(objectPoints.size());

  struct Candidate {
    TimeNs t;
    Vec3 dir;
    double coverage;
  };
  std::vector<Candidate> cands;
  for (const auto& s : cameraPoses.samples()) {
    const RigidTransform cameraFromWorld = s.pose.inverse();
    const auto uv = cam.project(cameraFromWorld.apply(centroid));
    if (!uv || !cam.inImage(*uv)) {
      continue;
    }
    Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
    Vec2 hi = -lo;
    for (const auto& p : objectPoints) {
      if (const auto q = cam.project(cameraFromWorld.apply(p))) {
        lo = lo.cwiseMin(*q);
        hi = hi.cwiseMax(*q);
      }
    }
    const Vec2 size(cam.width, cam.height);
    lo = lo.cwiseMax(Vec2::Zero()).cwiseMin(size);
    hi = hi.cwiseMax(Vec2::Zero()).cwiseMin(size);
    const Vec3 toObject = centroid - s.pose.translation;
    if (toObject.norm() == 0.0) {
      continue;
    }
    cands.push_back({s.tNs, toObject.normalized(), (hi - lo).prod()});
  }

  ViewSelection out;
  out.candidateCount = static_cast<int>(cands.size());
  if (cands.empty()) {
    out.insufficient = true;
    out.warnings.emplace_back("no frame sees the object centroid");
    return out;
  }
  if (out.candidateCount < k) {
    out.insufficient = true;
    out.warnings.emplace_back(
        "insufficient views: " + std::to_string(out.candidateCount) + " candidates for k=" +
        std::to_string(k));
  }
  const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(k), cands.size());

  std::size_t first = 0;
  for (std::size_t i = 1; i < cands.size(); ++i) {
    if (cands[i].coverage > cands[first].coverage) {
      first = i;
    }
  }
  std::vector<bool> taken(cands.size(), false);
  std::vector<double> minAngle(cands.size(), std::numeric_limits<double>::infinity());
  std::size_t next = first;
  double spread = std::numeric_limits<double>::infinity();
  while (out.timestamps.size() < want) {
    taken[next] = true;
    out.timestamps.push_back(cands[next].t);
    out.directions.push_back(cands[next].dir);
    if (out.timestamps.size() > 1) {
      spread = std::min(spread, minAngle[next]);
    }
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (taken[i]) {
        continue;
      }
      minAngle[i] = std::min(minAngle[i], angleBetween(cands[i].dir, cands[next].dir));
      if (!best || minAngle[i] > minAngle[*best]) {
        best = i;
      }
    }
    if (!best) {
      break;
    }
    next = *best;
  }
  if (want > 1 && spread <= 1e-9) {
    out.warnings.emplace_back("selected views share a viewing direction");
  }
  return out;
}

// ---------------------------------------------------------------------------
// I/O

namespace {

io::Json obbToJson(const Obb3& b) {
  io::Json j;
  j["id"] = b.id;
  j["category"] = std::string(categoryName(b.category));
  if (b.caption) {
    j["caption"] = *b.caption;
  }
  j["center"] = io::toJson(b.center);
  j["rotation"] = io::quatToJson(b.rotation);
  j["half_extents"] = io::toJson(b.halfExtents);
  return j;
}

Obb3 obbFromJson(const io::Json& j, std::size_t index) {
  const std::string where = "box[" + std::to_string(index) + "]";
  EGOFUSE_CHECK(j.is_object(), ErrorCode::ParseError, where + " must be an object");
  Obb3 b;
  b.id = j.at("id").get<std::int64_t>();
  b.category = categoryFromName(j.at("category").get<std::string>());
  if (j.contains("caption") && !j["caption"].is_null()) {
    b.caption = j["caption"].get<std::string>();
  }
  b.center = io::vec3FromJson(j.at("center"), where + ".center");
  const Quat q = io::quatFromJson(j.at("rotation"), where + ".rotation");
  EGOFUSE_CHECK(
      q.norm() > 0.5 && q.norm() < 2.0, ErrorCode::ParseError,
      where + ".rotation is far from unit length");
  b.rotation = std::abs(q.squaredNorm() - 1.0) < 1e-15 ? q : q.normalized();
  b.halfExtents = io::vec3FromJson(j.at("half_extents"), where + ".half_extents");
  try {
    b.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, where + ": " + e.what());
  }
  return b;
}

} // namespace

std::string obbsToJson(const std::vector<Obb3>& boxes) {
  io::Json j = io::Json::array();
  for (const auto& b : boxes) {
    j.push_back(obbToJson(b));
  }
  return j.dump(1) + "\n";
}

std::vector<Obb3> obbsFromJson(const std::string& text) {
  std::vector<Obb3> out;
  try {
    const auto j = io::Json::parse(text);
    EGOFUSE_CHECK(j.is_array(), ErrorCode::ParseError, "OBB file must be a JSON array");
    std::set<std::int64_t> ids;
    for (std::size_t i = 0; i < j.size(); ++i) {
      out.push_back(obbFromJson(j[i], i));
      EGOFUSE_CHECK(
          ids.insert(out.back().id).second, ErrorCode::ParseError,
          "duplicate box id " + std::to_string(out.back().id));
    }
  } catch (const io::Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("OBB json: ") + e.what());
  }
  return out;
}

std::vector<Obb3> readObbs(const std::filesystem::path& path) {
  const std::string text = io::readText(path);
  try {
    return obbsFromJson(text);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void writeObbs(const std::filesystem::path& path, const std::vector<Obb3>& boxes) {
  io::writeText(path, obbsToJson(boxes));
}

std::vector<Vec3> pointCloudFromCsv(const std::string& text) {
  std::vector<Vec3> out;
  std::istringstream in(text);
  std::string line;
  int lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    if (lineNo == 1 && line == "x,y,z") {
      continue;
    }
    const auto fields = io::splitCsvLine(line);
    const std::string where = "point cloud line " + std::to_string(lineNo);
    EGOFUSE_CHECK(fields.size() == 3, ErrorCode::ParseError, where + ": expected 3 fields");
    out.emplace_back(
        io::parseDouble(fields[0], where), io::parseDouble(fields[1], where),
        io::parseDouble(fields[2], where));
  }
  return out;
}

std::string pointCloudToCsv(const std::vector<Vec3>& points) {
  std::string s = "x,y,z\n";
  for (const auto& p : points) {
    s += formatDouble(p.x()) + "," + formatDouble(p.y()) + "," + formatDouble(p.z()) + "\n";
  }
  return s;
}

std::vector<Vec3> readPointCloud(const std::filesystem::path& path) {
  const std::string text = io::readText(path);
  try {
    return pointCloudFromCsv(text);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void writePointCloud(const std::filesystem::path& path, const std::vector<Vec3>& points) {
  io::writeText(path, pointCloudToCsv(points));
}

BoxObservation observeBox(
    TimeNs t, const Obb3& box, const CameraModel& cam, const RigidTransform& worldFromCamera,
    const std::vector<Vec3>& cloud, const VisibilityOptions& opts) {
  BoxObservation obs;
  obs.t = t;
  obs.boxId = box.id;
  obs.verdict = computeVisibility(box, cam, worldFromCamera, cloud, opts);
  obs.box = compute2dbb(box, cam, worldFromCamera, opts.nPerEdge);
  return obs;
}

std::string observationToJsonLine(const BoxObservation& obs) {
  io::Json j;
  j["t_ns"] = obs.t;
  j["box_id"] = obs.boxId;
  j["visible"] = obs.verdict.visible;
  if (obs.box) {
    j["min_u"] = obs.box->minU;
    j["min_v"] = obs.box->minV;
    j["max_u"] = obs.box->maxU;
    j["max_v"] = obs.box->maxV;
  } else {
    j["min_u"] = nullptr;
    j["min_v"] = nullptr;
    j["max_u"] = nullptr;
    j["max_v"] = nullptr;
  }
  j["fraction_inside"] = obs.verdict.fractionInside;
  j["points_inside"] = obs.verdict.pointsInside;
  return j.dump();
}

} // namespace egofuse
