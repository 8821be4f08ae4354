#include "doctest.h"
#include "test_util.h"

#include "egofuse/error.h"
#include "egofuse/io.h"
#include "egofuse/scene.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>

using namespace egofuse;

namespace {

CameraModel vga() {
  CameraModel c;
  c.fx = 500.0;
  c.fy = 500.0;
  c.cx = 320.0;
  c.cy = 240.0;
  c.width = 640;
  c.height = 480;
  return c;
}

// Camera at `eye` looking at `target`, x right, y down, world z up.
RigidTransform lookAt(const Vec3& eye, const Vec3& target) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(Vec3::UnitZ());
  if (x.norm() < 1e-9) {
    x = Vec3::UnitX();
  }
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return {Quat(r), eye};
}

Obb3 cube(std::int64_t id, const Vec3& center, double side = 1.0) {
  Obb3 b;
  b.id = id;
  b.center = center;
  b.halfExtents = Vec3::Constant(side / 2.0);
  return b;
}

Obb3 randomBox(std::mt19937_64& rng, std::int64_t id, double spread) {
  std::uniform_real_distribution<double> ext(0.15, 0.8);
  Obb3 b;
  b.id = id;
  b.center = testing::randomVec(rng, spread);
  b.rotation = testing::randomRotation(rng);
  b.halfExtents = Vec3(ext(rng), ext(rng), ext(rng));
  return b;
}

// Independent containment with a precomputed matrix.
struct LocalFrame {
  Mat3 rt;
  Vec3 c;
  Vec3 h;
  explicit LocalFrame(const Obb3& b)
      : rt(b.rotation.toRotationMatrix().transpose()), c(b.center), h(b.halfExtents) {}
  [[nodiscard]] bool inside(const Vec3& p) const {
    return ((rt * (p - c)).cwiseAbs().array() <= h.array()).all();
  }
};

double monteCarloIou(const Obb3& a, const Obb3& b, int samples, std::mt19937_64& rng) {
  Vec3 lo = Vec3::Constant(1e300);
  Vec3 hi = -lo;
  for (const auto& box : {a, b}) {
    for (const auto& c : obbCorners(box)) {
      lo = lo.cwiseMin(c);
      hi = hi.cwiseMax(c);
    }
  }
  const LocalFrame fa(a);
  const LocalFrame fb(b);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  long both = 0;
  long either = 0;
  for (int i = 0; i < samples; ++i) {
    const Vec3 p = lo + Vec3(u(rng), u(rng), u(rng)).cwiseProduct(hi - lo);
    const bool ia = fa.inside(p);
    const bool ib = fb.inside(p);
    both += (ia && ib) ? 1 : 0;
    either += (ia || ib) ? 1 : 0;
  }
  return either == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(either);
}

// Uniform samples on the box surface, faces weighted by area.
std::vector<Vec3> surfaceSamples(const Obb3& b, int n, std::mt19937_64& rng) {
  const Vec3& h = b.halfExtents;
  const std::array<double, 3> area = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
  std::discrete_distribution<int> pick({area[0], area[0], area[1], area[1], area[2], area[2]});
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> out;
  for (int i = 0; i < n; ++i) {
    const int f = pick(rng);
    Vec3 local(u(rng), u(rng), u(rng));
    local[f / 2] = (f % 2 == 0) ? -1.0 : 1.0;
    out.push_back(b.center + b.rotation * local.cwiseProduct(h));
  }
  return out;
}

std::vector<Vec3> pointsNear(const Vec3& c, double r, int n, std::mt19937_64& rng) {
  std::vector<Vec3> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(c + testing::randomVec(rng, r));
  }
  return out;
}

} // namespace

TEST_CASE("category names round trip") {
  for (int i = 0; i <= kFixedCategoryCount; ++i) {
    const auto c = static_cast<ObjectCategory>(i);
    CHECK(categoryFromName(categoryName(c)) == c);
  }
  CHECK(categoryName(ObjectCategory::Anything) == "anything");
  CHECK_THROWS_AS(categoryFromName("spaceship"), Error);
}

TEST_CASE("box corners and edge samples") {
  const Obb3 unit = cube(1, Vec3::Zero());
  for (const auto& c : obbCorners(unit)) {
    CHECK(c.cwiseAbs().isApprox(Vec3::Constant(0.5)));
  }

  const auto two = obbEdgeSamples(unit, 2);
  CHECK(two.size() == 24);
  std::set<std::array<double, 3>> distinct;
  for (const auto& p : two) {
    distinct.insert({p.x(), p.y(), p.z()});
  }
  CHECK(distinct.size() == 8);
  CHECK(obbEdgeSamples(unit, 7).size() == 84);
  CHECK_THROWS_AS(obbEdgeSamples(unit, 1), Error);

  std::mt19937_64 rng(3);
  Obb3 box;
  box.halfExtents = Vec3(0.3, 0.7, 1.1);
  const auto ref = obbCorners(box);
  box.rotation = testing::randomRotation(rng);
  box.center = Vec3(4.0, -2.0, 1.0);
  const auto moved = obbCorners(box);
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      CHECK(std::abs((moved[i] - moved[j]).norm() - (ref[i] - ref[j]).norm()) < 1e-12);
    }
  }
}

TEST_CASE("visibility rules") {
  const CameraModel cam = vga();
  const RigidTransform id;
  std::mt19937_64 rng(8);
  Obb3 box = cube(5, Vec3(0.0, 0.0, 3.0), 0.6);
  const auto inside = pointsNear(box.center, 0.2, 10, rng);

  SUBCASE("centered box with points") {
    const auto v = computeVisibility(box, cam, id, inside);
    CHECK(v.visible);
    CHECK(v.reasons.empty());
    CHECK(v.fractionInside == 1.0);
    CHECK(v.pointsInside == 10);
  }
  SUBCASE("behind the camera") {
    box.center = Vec3(0.0, 0.0, -3.0);
    const auto v = computeVisibility(box, cam, id, pointsNear(box.center, 0.2, 10, rng));
    CHECK_FALSE(v.visible);
    CHECK_FALSE(v.projectable);
    CHECK(std::find(v.reasons.begin(), v.reasons.end(), "not_projectable") != v.reasons.end());
    CHECK(v.fractionInside == 0.0);
  }
  SUBCASE("a single supporting point") {
    const auto v = computeVisibility(box, cam, id, {box.center});
    CHECK_FALSE(v.visible);
    CHECK(v.reasons == std::vector<std::string>{"too_few_points"});
  }
  SUBCASE("empty cloud fails only rule (ii)") {
    const auto v = computeVisibility(box, cam, id, {});
    CHECK(v.reasons == std::vector<std::string>{"too_few_points"});
  }
  SUBCASE("box half off the right border") {
    // u = 320 + 500 x / z; the box straddles u = 640 at x = 1.92.
    box.center = Vec3(1.92, 0.0, 3.0);
    const auto v = computeVisibility(box, cam, id, pointsNear(box.center, 0.2, 10, rng));
    CHECK(v.projectable);
    CHECK(v.fractionInside > 0.2);
    CHECK(v.fractionInside < 0.85);
    CHECK(v.reasons == std::vector<std::string>{"outside_image"});
  }
  SUBCASE("samples behind the camera count as outside") {
    box = cube(6, Vec3(0.0, 0.0, 0.0), 1.0);
    const auto v = computeVisibility(box, cam, id, {}, {8, 0.0, 0});
    const auto samples = obbEdgeSamples(box, 8);
    int expected = 0;
    for (const auto& p : samples) {
      const auto uv = cam.project(p);
      expected += (uv && cam.inImage(*uv)) ? 1 : 0;
    }
    CHECK(v.fractionInside == doctest::Approx(static_cast<double>(expected) / samples.size()));
    CHECK(v.fractionInside < 0.5);
  }
}

TEST_CASE("visibility with zero thresholds is projectability") {
  const CameraModel cam = vga();
  std::mt19937_64 rng(21);
  int projectable = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Obb3 box = randomBox(rng, trial, 6.0);
    const RigidTransform pose = testing::randomTransform(rng, 2.0);
    const auto v = computeVisibility(box, cam, pose, {}, {8, 0.0, 0});
    bool anyInImage = false;
    for (const auto& p : obbEdgeSamples(box, 8)) {
      const auto uv = cam.project(pose.inverse().apply(p));
      anyInImage = anyInImage || (uv && cam.inImage(*uv));
    }
    CHECK(v.visible == anyInImage);
    projectable += anyInImage ? 1 : 0;
  }
  CHECK(projectable > 10);
  CHECK(projectable < 190);
}

TEST_CASE("2D boxes") {
  const CameraModel cam = vga();
  const RigidTransform id;

  SUBCASE("symmetric about the principal point") {
    Obb3 box = cube(1, Vec3(0.0, 0.0, 4.0));
    box.halfExtents = Vec3(0.4, 0.3, 0.5);
    const auto b = compute2dbb(box, cam, id);
    REQUIRE(b);
    CHECK(std::abs((b->minU + b->maxU) / 2.0 - cam.cx) < 1e-6);
    CHECK(std::abs((b->minV + b->maxV) / 2.0 - cam.cy) < 1e-6);
    // Nearest face at z = 3.5 sets the extent.
    CHECK(b->maxU == doctest::Approx(320.0 + 500.0 * 0.4 / 3.5));
  }
  SUBCASE("dense surface sampling agrees") {
    std::mt19937_64 rng(44);
    for (int trial = 0; trial < 10; ++trial) {
      Obb3 box = randomBox(rng, trial, 0.4);
      box.center.z() += 4.0;
      const auto b = compute2dbb(box, cam, id, 64);
      REQUIRE(b);
      Vec2 lo = Vec2::Constant(1e300);
      Vec2 hi = -lo;
      for (const auto& p : surfaceSamples(box, 100000, rng)) {
        const Vec2 uv = *cam.project(p);
        lo = lo.cwiseMin(uv);
        hi = hi.cwiseMax(uv);
      }
      lo = lo.cwiseMax(Vec2::Zero()).cwiseMin(Vec2(640, 480));
      hi = hi.cwiseMax(Vec2::Zero()).cwiseMin(Vec2(640, 480));
      CHECK(std::abs(b->minU - lo.x()) < 2.0);
      CHECK(std::abs(b->minV - lo.y()) < 2.0);
      CHECK(std::abs(b->maxU - hi.x()) < 2.0);
      CHECK(std::abs(b->maxV - hi.y()) < 2.0);
    }
  }
  SUBCASE("clipped flush with the border") {
    const auto b = compute2dbb(cube(2, Vec3(1.92, 0.0, 3.0), 0.6), cam, id);
    REQUIRE(b);
    CHECK(b->maxU == 640.0);
    CHECK(b->minU < 640.0);
    CHECK(b->minU > 500.0);
  }
  SUBCASE("behind the camera") {
    CHECK_FALSE(compute2dbb(cube(3, Vec3(0.0, 0.0, -2.0)), cam, id));
  }
}

TEST_CASE("2D boxes never shrink with more samples") {
  const CameraModel cam = vga();
  std::mt19937_64 rng(77);
  const auto grows = [](const Box2& small, const Box2& big) {
    return big.minU <= small.minU + 1e-9 && big.minV <= small.minV + 1e-9 &&
           big.maxU >= small.maxU - 1e-9 && big.maxV >= small.maxV - 1e-9;
  };
  for (int trial = 0; trial < 100; ++trial) {
    // Centers near the camera make many boxes cross the image plane.
    const Obb3 box = randomBox(rng, trial, 1.5);
    std::optional<Box2> prev;
    for (int n : {2, 3, 5, 9, 17, 33, 65}) {
      const auto b = compute2dbb(box, cam, RigidTransform(), n);
      if (prev) {
        REQUIRE(b);
        CHECK(grows(*prev, *b));
      }
      if (b) {
        prev = b;
      }
    }
  }
  for (int trial = 0; trial < 50; ++trial) {
    Obb3 box = randomBox(rng, trial, 0.5);
    box.center.z() += 5.0;
    std::optional<Box2> prev;
    for (int n = 2; n <= 20; ++n) {
      const auto b = compute2dbb(box, cam, RigidTransform(), n);
      REQUIRE(b);
      if (prev) {
        CHECK(grows(*prev, *b));
      }
      prev = b;
    }
  }
}

TEST_CASE("IoU analytic cases") {
  const Obb3 a = cube(1, Vec3::Zero());
  CHECK(iou3d(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(iou3d(a, cube(2, Vec3(3.0, 0.0, 0.0))) == 0.0);
  CHECK(iou3d(a, cube(2, Vec3(1.0, 0.0, 0.0))) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(iou3d(a, cube(2, Vec3(0.5, 0.0, 0.0))) - 1.0 / 3.0) < 1e-12);
  CHECK(std::abs(iou3d(a, cube(2, Vec3(0.3, 0.0, 0.0))) - 0.7 / 1.3) < 1e-12);
  CHECK(std::abs(iou3d(a, cube(2, Vec3(0.5, 0.5, 0.5))) - 0.125 / 1.875) < 1e-12);

  // Unit square against itself turned 45 degrees: regular-octagon overlap.
  Obb3 turned = a;
  turned.rotation = Quat(Eigen::AngleAxisd(kPi / 4.0, Vec3::UnitZ()));
  const double octagon = 2.0 * (std::sqrt(2.0) - 1.0);
  CHECK(std::abs(intersectionVolume(a, turned) - octagon) < 1e-12);
  CHECK(std::abs(iou3d(a, turned) - octagon / (2.0 - octagon)) < 1e-12);

  // Nested boxes.
  Obb3 small = cube(3, Vec3(0.1, 0.0, -0.1), 0.4);
  small.rotation = Quat(Eigen::AngleAxisd(0.7, Vec3(1, 2, 3).normalized()));
  CHECK(std::abs(intersectionVolume(a, small) - small.volume()) < 1e-12);
  CHECK(std::abs(iou3d(small, a) - small.volume()) < 1e-12);
}

TEST_CASE("IoU matches Monte Carlo on random pairs") {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Obb3 a = randomBox(rng, 1, 0.3);
    const Obb3 b = randomBox(rng, 2, 0.3);
    const double exact = iou3d(a, b);
    const double mc = monteCarloIou(a, b, 1000000, rng);
    worst = std::max(worst, std::abs(exact - mc));
    CHECK(std::abs(exact - mc) < 0.01);
  }
  MESSAGE("worst |IoU - MC| = " << worst);
}

TEST_CASE("IoU symmetry, bounds and rigid invariance") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    Obb3 a = randomBox(rng, 1, 0.5);
    Obb3 b = randomBox(rng, 2, 0.5);
    const double ab = iou3d(a, b);
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(std::abs(ab - iou3d(b, a)) < 1e-9);
    const RigidTransform g = testing::randomTransform(rng, 5.0);
    for (auto* box : {&a, &b}) {
      box->center = g.apply(box->center);
      box->rotation = (g.rotation * box->rotation).normalized();
    }
    CHECK(std::abs(ab - iou3d(a, b)) < 1e-9);
  }
}

TEST_CASE("annotation transfer") {
  std::mt19937_64 rng(5);
  SceneAnnotation map;
  map.venueId = "house_a";
  for (int i = 0; i < 5; ++i) {
    map.boxes.push_back(randomBox(rng, 10 + i, 3.0));
  }
  map.boxes[1].category = ObjectCategory::Chair;
  map.boxes[2].caption = "red armchair";

  const auto same = transferAnnotations(map, "recording_7");
  CHECK(same.frame == "recording_7");
  CHECK(obbsToJson(same.boxes) == obbsToJson(map.boxes));

  const Vec3 shift(1.0, -2.0, 0.5);
  const auto moved = transferAnnotations(map, "w", RigidTransform::fromTranslation(shift));
  for (std::size_t i = 0; i < map.boxes.size(); ++i) {
    CHECK((moved.boxes[i].center - map.boxes[i].center - shift).norm() < 1e-12);
    CHECK(moved.boxes[i].rotation.coeffs() == map.boxes[i].rotation.coeffs());
    CHECK(moved.boxes[i].halfExtents == map.boxes[i].halfExtents);
    CHECK(moved.boxes[i].id == map.boxes[i].id);
  }

  const RigidTransform g = testing::randomTransform(rng, 4.0);
  const auto back = transferAnnotations(transferAnnotations(map, "x", g), "world", g.inverse());
  for (std::size_t i = 0; i < map.boxes.size(); ++i) {
    CHECK((back.boxes[i].center - map.boxes[i].center).norm() < 1e-9);
    CHECK(geodesicAngle(back.boxes[i].rotation, map.boxes[i].rotation) < 1e-9);
    CHECK(back.boxes[i].caption == map.boxes[i].caption);
  }

  map.boxes[3].id = map.boxes[0].id;
  CHECK_THROWS_AS(transferAnnotations(map, "w"), Error);
}

TEST_CASE("shape transfer gate") {
  const Obb3 src = cube(1, Vec3(2.0, 1.0, 0.5), 0.8);
  Obb3 same = src;
  same.id = 40;
  Obb3 near = src;
  near.id = 41;
  near.center.x() += 0.01;
  Obb3 shifted = src;
  shifted.id = 42;
  shifted.center.x() += 0.3 * 0.8;

  CHECK(gateShapeTransfer(src, {near, same, shifted}) == std::optional<std::int64_t>(40));
  // Analytic IoU of the 30% shift is 0.7 / 1.3.
  CHECK(iou3d(src, shifted) == doctest::Approx(0.7 / 1.3));
  CHECK_FALSE(gateShapeTransfer(src, {shifted}));
  CHECK_FALSE(gateShapeTransfer(src, {}));
  CHECK(gateShapeTransfer(src, {shifted, near}) == std::optional<std::int64_t>(41));

  Obb3 twin = same;
  twin.id = 43;
  CHECK_THROWS_WITH_AS(gateShapeTransfer(src, {same, twin}), doctest::Contains("AmbiguousMatch"), Error);
  // The tie only matters above the threshold.
  Obb3 farA = shifted;
  Obb3 farB = shifted;
  farB.id = 44;
  CHECK_FALSE(gateShapeTransfer(src, {farA, farB}));
}

TEST_CASE("instance point filtering") {
  const CameraModel cam = vga();
  std::mt19937_64 rng(31);
  Obb3 box = cube(9, Vec3::Zero(), 2.0);
  const auto instance = pointsNear(Vec3(-0.5, 0.0, 0.0), 0.1, 60, rng);
  const auto intruder = pointsNear(Vec3(0.5, 0.2, 0.0), 0.1, 40, rng);
  auto outside = pointsNear(Vec3(3.0, 0.0, 0.0), 0.2, 30, rng);
  std::vector<Vec3> cloud = instance;
  cloud.insert(cloud.end(), intruder.begin(), intruder.end());
  cloud.insert(cloud.end(), outside.begin(), outside.end());

  const auto contained = filterInstancePoints(box, cloud);
  CHECK(contained.size() == instance.size() + intruder.size());

  InstanceMasks masks;
  masks.cam = cam;
  const std::vector<Vec3> eyes = {
      {0.0, 0.0, 5.0}, {0.5, -4.0, 3.0}, {-1.0, 4.0, 3.0}, {3.0, -3.0, 2.0}};
  const auto pixels = static_cast<std::size_t>(cam.width * cam.height);
  for (const auto& eye : eyes) {
    MaskFrame f;
    f.worldFromCamera = lookAt(eye, Vec3::Zero());
    f.mask.assign(pixels, 1);
    masks.frames.push_back(f);
  }
  CHECK(filterInstancePoints(box, cloud, masks).size() == contained.size());

  // Planted intruder: masks painted around the instance projections only.
  for (auto& f : masks.frames) {
    std::fill(f.mask.begin(), f.mask.end(), 0);
    const RigidTransform cw = f.worldFromCamera.inverse();
    for (const auto& p : instance) {
      const Vec2 uv = *cam.project(cw.apply(p));
      for (int dv = -3; dv <= 3; ++dv) {
        for (int du = -3; du <= 3; ++du) {
          const int u = static_cast<int>(uv.x()) + du;
          const int v = static_cast<int>(uv.y()) + dv;
          if (u >= 0 && u < cam.width && v >= 0 && v < cam.height) {
            f.mask[static_cast<std::size_t>(v * cam.width + u)] = 1;
          }
        }
      }
    }
  }
  const auto kept = filterInstancePoints(box, cloud, masks);
  CHECK(kept.size() == instance.size());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    CHECK(kept[i] == instance[i]);
  }

  masks.frames[0].mask.pop_back();
  CHECK_THROWS_AS(filterInstancePoints(box, cloud, masks), Error);
}

TEST_CASE("visibility rule (ii) agrees with the containment filter") {
  std::mt19937_64 rng(12);
  const CameraModel cam = vga();
  for (int trial = 0; trial < 50; ++trial) {
    const Obb3 box = randomBox(rng, trial, 1.0);
    std::vector<Vec3> cloud;
    for (int i = 0; i < 300; ++i) {
      cloud.push_back(testing::randomVec(rng, 1.5));
    }
    // Points exactly on the boundary.
    cloud.push_back(obbCorners(box)[3]);
    const auto v = computeVisibility(box, cam, RigidTransform(), cloud);
    CHECK(static_cast<std::size_t>(v.pointsInside) == filterInstancePoints(box, cloud).size());
  }
}

TEST_CASE("greedy view selection") {
  const CameraModel cam = vga();
  std::mt19937_64 rng(4);
  const auto object = pointsNear(Vec3(0.0, 0.0, 0.5), 0.3, 200, rng);
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : object) {
    centroid += p;
  }
  centroid /= static_cast<double>(object.size());

  std::vector<TrajectorySample> ring;
  for (int i = 0; i < 36; ++i) {
    const double a = 2.0 * kPi * i / 36.0;
    const Vec3 eye(4.0 * std::cos(a), 4.0 * std::sin(a), 1.2);
    ring.push_back({static_cast<TimeNs>(i) * 1000, lookAt(eye, centroid)});
  }
  // Cameras looking away never qualify.
  for (int i = 0; i < 4; ++i) {
    const Vec3 eye(0.0, 6.0 + i, 1.0);
    ring.push_back({100000 + i, lookAt(eye, eye + Vec3(0.0, 1.0, 0.0))});
  }
  const Trajectory poses("world", ring);

  SUBCASE("ring, k = 4") {
    const auto sel = selectViews(object, poses, cam, 4);
    CHECK(sel.candidateCount == 36);
    REQUIRE(sel.timestamps.size() == 4);
    CHECK_FALSE(sel.insufficient);
    CHECK(sel.warnings.empty());
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = i + 1; j < 4; ++j) {
        CHECK(angleBetween(sel.directions[i], sel.directions[j]) >= 80.0 * kPi / 180.0);
      }
    }
    CHECK(selectViews(object, poses, cam, 4).timestamps == sel.timestamps);
  }
  SUBCASE("k equal to the candidate count") {
    const auto sel = selectViews(object, poses, cam, 36);
    CHECK_FALSE(sel.insufficient);
    std::set<TimeNs> got(sel.timestamps.begin(), sel.timestamps.end());
    CHECK(got.size() == 36);
    CHECK(*got.rbegin() == 35000);
  }
  SUBCASE("more views requested than available") {
    const auto sel = selectViews(object, poses, cam, 40);
    CHECK(sel.insufficient);
    CHECK(sel.timestamps.size() == 36);
    CHECK_FALSE(sel.warnings.empty());
  }
  SUBCASE("co-located cameras") {
    std::vector<TrajectorySample> same;
    for (int i = 0; i < 10; ++i) {
      same.push_back({i, lookAt(Vec3(3.0, 0.0, 1.0), centroid)});
    }
    const auto sel = selectViews(object, Trajectory("world", same), cam, 5);
    CHECK(sel.timestamps.size() == 5);
    CHECK_FALSE(sel.insufficient);
    CHECK(sel.warnings.size() == 1);
  }
}

TEST_CASE("OBB and point cloud files") {
  std::mt19937_64 rng(71);
  std::vector<Obb3> boxes;
  for (int i = 0; i < 4; ++i) {
    boxes.push_back(randomBox(rng, i * 3, 2.0));
  }
  boxes[0].category = ObjectCategory::WasherDryer;
  boxes[1].caption = "tall oak bookcase";
  const auto back = obbsFromJson(obbsToJson(boxes));
  REQUIRE(back.size() == boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    CHECK(back[i].id == boxes[i].id);
    CHECK(back[i].category == boxes[i].category);
    CHECK(back[i].caption == boxes[i].caption);
    CHECK((back[i].center - boxes[i].center).norm() == 0.0);
    CHECK(geodesicAngle(back[i].rotation, boxes[i].rotation) < 1e-12);
    CHECK(back[i].halfExtents == boxes[i].halfExtents);
  }

  const std::string good =
      R"([{"id":1,"category":"table","center":[0,0,0],"rotation":[1,0,0,0],"half_extents":[1,1,1]}])";
  CHECK(obbsFromJson(good).size() == 1);
  std::string bad = good;
  bad.replace(bad.find("[1,1,1]"), 7, "[1,0,1]");
  CHECK_THROWS_AS(obbsFromJson(bad), Error);
  bad = good;
  bad.replace(bad.find("table"), 5, "tabel");
  CHECK_THROWS_AS(obbsFromJson(bad), Error);
  CHECK_THROWS_AS(obbsFromJson("[" + good.substr(1, good.size() - 2) + "," +
                               good.substr(1, good.size() - 2) + "]"),
                  Error);
  CHECK_THROWS_AS(obbsFromJson("{}"), Error);

  const std::vector<Vec3> cloud = {{0.1, 0.2, 0.3}, {-1.0, 2.5, 1e-7}};
  CHECK(pointCloudFromCsv(pointCloudToCsv(cloud)) == cloud);
  CHECK(pointCloudFromCsv("1,2,3\n4,5,6\n").size() == 2);
  CHECK_THROWS_AS(pointCloudFromCsv("x,y,z\n1,2\n"), Error);

  const auto dir = std::filesystem::temp_directory_path() / "egofuse_scene_test";
  std::filesystem::create_directories(dir);
  writeObbs(dir / "boxes.json", boxes);
  CHECK(readObbs(dir / "boxes.json").size() == boxes.size());
  writePointCloud(dir / "cloud.csv", cloud);
  CHECK(readPointCloud(dir / "cloud.csv") == cloud);
  std::filesystem::remove_all(dir);
}

TEST_CASE("observation lines") {
  const CameraModel cam = vga();
  const Obb3 box = cube(12, Vec3(0.0, 0.0, 3.0), 0.6);
  const auto seen = observeBox(5, box, cam, RigidTransform(), {box.center, box.center});
  const auto j = io::Json::parse(observationToJsonLine(seen));
  CHECK(j["t_ns"] == 5);
  CHECK(j["box_id"] == 12);
  CHECK(j["visible"] == true);
  CHECK(j["points_inside"] == 2);
  CHECK(j["fraction_inside"] == 1.0);
  CHECK(j["min_u"].get<double>() < j["max_u"].get<double>());
  CHECK(observationToJsonLine(seen).find('\n') == std::string::npos);

  const auto hidden =
      observeBox(6, cube(13, Vec3(0.0, 0.0, -3.0)), cam, RigidTransform(), {});
  const auto k = io::Json::parse(observationToJsonLine(hidden));
  CHECK(k["visible"] == false);
  CHECK(k["min_u"].is_null());
}
