#include "doctest.h"
#include "motion_fixtures.h"
#include "test_util.h"

#include "egofuse/align.h"
#include "egofuse/error.h"

#include <cmath>

using namespace egofuse;

namespace {

constexpr double kRate = 60.0;

// Head segment in the source frame: walking path with yaw, pitch and roll.
Trajectory headTrajectory(double seconds, double phase = 0.0) {
  std::vector<TrajectorySample> s;
  const int n = static_cast<int>(seconds * kRate) + 1;
  for (int k = 0; k < n; ++k) {
    const double t = k / kRate;
    const Vec3 w(0.35 * std::sin(1.1 * t + phase), 0.25 * std::sin(0.7 * t + 1.0),
                 1.2 * std::sin(0.3 * t + phase));
    const Vec3 p(0.9 * t, 0.4 * std::sin(0.5 * t), 1.6 + 0.03 * std::sin(6.0 * t));
    s.push_back({static_cast<TimeNs>(std::llround(t * 1e9)), {expMap(w), p}});
  }
  return Trajectory("source", std::move(s));
}

} // namespace

TEST_CASE("noiseless synthetic trajectories recover the hand-eye transform") {
  std::mt19937_64 rng(3);
  const Trajectory head = headTrajectory(20.0);
  for (int trial = 0; trial < 5; ++trial) {
    const RigidTransform x = testing::randomTransform(rng, 0.2);
    const RigidTransform w = testing::randomTransform(rng, 10.0);
    Trajectory device = head.transformed(w, x.inverse());
    const auto r = estimateHandEye(device, head);
    const auto d = poseDifference(r.deviceFromHeadSegment, x);
    CHECK(d.angle < 1e-8);
    CHECK(d.distance < 1e-8);
    CHECK(r.rotationRmsRad < 1e-8);
    CHECK(r.translationRmsM < 1e-8);
    CHECK(r.pairCount == 40);
  }
}

TEST_CASE("identical trajectories give the identity") {
  const Trajectory head = headTrajectory(5.0);
  const auto r = estimateHandEye(head, head);
  CHECK(poseDifference(r.deviceFromHeadSegment, RigidTransform{}).angle < 1e-9);
  CHECK(r.deviceFromHeadSegment.translation.norm() < 1e-9);
}

TEST_CASE("hand-eye ignores independent global frame changes") {
  std::mt19937_64 rng(8);
  const Trajectory head = headTrajectory(10.0, 0.4);
  const RigidTransform x = testing::randomTransform(rng, 0.2);
  const Trajectory device = head.transformed({}, x.inverse());
  const auto a = estimateHandEye(device, head);
  const auto b = estimateHandEye(
      device.transformed(testing::randomTransform(rng, 50.0), {}),
      head.transformed(testing::randomTransform(rng, 50.0), {}));
  const auto d = poseDifference(a.deviceFromHeadSegment, b.deviceFromHeadSegment);
  CHECK(d.angle < 1e-9);
  CHECK(d.distance < 1e-9);
}

TEST_CASE("single-axis head rotation is degenerate") {
  std::vector<TrajectorySample> s;
  for (int k = 0; k <= 600; ++k) {
    const double t = k / kRate;
    s.push_back({static_cast<TimeNs>(std::llround(t * 1e9)),
                 {Quat(Eigen::AngleAxisd(0.8 * std::sin(t), Vec3::UnitZ())), Vec3(t, 0.0, 1.6)}});
  }
  const Trajectory head("source", std::move(s));
  const Trajectory device = head.transformed({}, RigidTransform{Quat::Identity(), Vec3(0.1, 0, 0)});
  try {
    (void)estimateHandEye(device, head);
    FAIL("expected DegenerateMotion");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateMotion);
  }
}

TEST_CASE("short overlap is rejected") {
  const Trajectory head = headTrajectory(0.8);
  try {
    (void)estimateHandEye(head, head);
    FAIL("expected InsufficientOverlap");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientOverlap);
  }
}

TEST_CASE("noisy trajectories stay within millimeters and fractions of a degree") {
  std::mt19937_64 rng(21);
  const Trajectory head = headTrajectory(60.0);
  const RigidTransform x = testing::randomTransform(rng, 0.2);
  const Trajectory clean = head.transformed(testing::randomTransform(rng, 5.0), x.inverse());
  std::normal_distribution<double> n(0.0, 1.0);
  const double sigmaT = 1e-3;
  const double sigmaR = 0.1 * kPi / 180.0;
  auto noisy = [&](const Trajectory& t) {
    std::vector<TrajectorySample> out;
    for (auto s : t.samples()) {
      s.pose.translation += sigmaT * Vec3(n(rng), n(rng), n(rng));
      s.pose.rotation = s.pose.rotation * expMap(sigmaR * Vec3(n(rng), n(rng), n(rng)));
      out.push_back(s);
    }
    return Trajectory(t.frameId(), std::move(out));
  };
  const auto r = estimateHandEye(noisy(clean), noisy(head));
  const auto d = poseDifference(r.deviceFromHeadSegment, x);
  CHECK(d.distance < 5e-3);
  CHECK(d.angle < 0.5 * kPi / 180.0);
  CHECK(r.rotationRmsRad > 0.0);
}

TEST_CASE("rigid alignment pins the head joint to the device") {
  const RigModel rig = makeDeskRig();
  const MotionSequence thetaX = testing::wavyMotion(rig, 120, kRate);
  std::mt19937_64 rng(5);
  HandEyeResult he;
  he.deviceFromHeadSegment = testing::randomTransform(rng, 0.1);
  he.pairCount = 2;
  // Device stream from an unrelated world, sampled faster than the motion.
  const Trajectory headW = headTrajectory(2.5, 1.0);
  const Trajectory device = headW.transformed({}, he.deviceFromHeadSegment.inverse());
  const MotionSequence rigid = rigidAlignSequence(thetaX, device, he, rig);
  REQUIRE(rigid.frames.size() == thetaX.frames.size());
  for (std::size_t k = 0; k < rigid.frames.size(); ++k) {
    const auto kin = computeKinematics(rig, rigid.identity, rigid.frames[k]);
    const RigidTransform want = device.interpolate(rigid.frames[k].tNs) * he.deviceFromHeadSegment;
    const auto d = poseDifference(kin.transform(rig.named.head), want);
    CHECK(d.distance < 1e-9);
    CHECK(d.angle < 1e-9);
    CHECK((rigid.frames[k].pose - thetaX.frames[k].pose).norm() == 0.0);
  }
}

TEST_CASE("zero-drift scenario puts the head where the device says") {
  const RigModel rig = makeDeskRig();
  const MotionSequence thetaX = testing::wavyMotion(rig, 90, kRate);
  std::mt19937_64 rng(9);
  const RigidTransform x = testing::randomTransform(rng, 0.1);
  const RigidTransform worldFromSource = testing::randomTransform(rng, 3.0);
  const Trajectory head = jointTrajectory(rig, thetaX, rig.named.head, "source");
  const Trajectory device = head.transformed(worldFromSource, x.inverse());
  HandEyeResult he;
  he.deviceFromHeadSegment = x;
  he.pairCount = 2;
  const MotionSequence rigid = rigidAlignSequence(thetaX, device, he, rig);
  for (std::size_t k = 0; k < rigid.frames.size(); ++k) {
    const auto d = poseDifference(worldFromSource * thetaX.frames[k].root, rigid.frames[k].root);
    CHECK(d.distance < 1e-9);
    CHECK(d.angle < 1e-9);
  }
}

TEST_CASE("a global offset on the device stream offsets every root") {
  const RigModel rig = makeDeskRig();
  const MotionSequence thetaX = testing::wavyMotion(rig, 60, kRate);
  std::mt19937_64 rng(2);
  HandEyeResult he;
  he.deviceFromHeadSegment = testing::randomTransform(rng, 0.1);
  he.pairCount = 2;
  const Trajectory device = headTrajectory(1.5, 0.2);
  const RigidTransform g = testing::randomTransform(rng, 4.0);
  const auto a = rigidAlignSequence(thetaX, device, he, rig);
  const auto b = rigidAlignSequence(thetaX, device.transformed(g, {}), he, rig);
  for (std::size_t k = 0; k < a.frames.size(); ++k) {
    const auto d = poseDifference(g * a.frames[k].root, b.frames[k].root);
    CHECK(d.distance < 1e-9);
    CHECK(d.angle < 1e-9);
  }
}

TEST_CASE("posture drift keeps the head pinned but moves the feet") {
  const RigModel rig = makeDeskRig();
  const MotionSequence thetaX = testing::wavyMotion(rig, 120, kRate);
  std::mt19937_64 rng(4);
  const RigidTransform x = testing::randomTransform(rng, 0.1);
  const Trajectory head = jointTrajectory(rig, thetaX, rig.named.head, "source");
  const Trajectory device = head.transformed({}, x.inverse());
  // Ground truth world motion equals the source motion. A rigid drift of the
  // whole source body is undone by head pinning; inertial drift in the spine
  // posture is not.
  MotionSequence drifted = thetaX;
  const int spine = rig.dofStart[rig.jointIndex("spine1")];
  for (auto& f : drifted.frames) {
    const double t = static_cast<double>(f.tNs) * 1e-9;
    const RigidTransform drift{expMap(Vec3(0.05 * t, -0.03 * t, 0.0)), Vec3(0.02 * t, 0.0, 0.0)};
    f.root = drift * f.root;
    f.pose[spine] += 0.05 * t;
  }
  HandEyeResult he;
  he.deviceFromHeadSegment = x;
  he.pairCount = 2;
  const MotionSequence rigid = rigidAlignSequence(drifted, device, he, rig);
  double maxFootError = 0.0;
  for (std::size_t k = 0; k < rigid.frames.size(); ++k) {
    const auto kin = computeKinematics(rig, rigid.identity, rigid.frames[k]);
    const auto truth = computeKinematics(rig, thetaX.identity, thetaX.frames[k]);
    const auto d = poseDifference(kin.transform(rig.named.head), truth.transform(rig.named.head));
    CHECK(d.distance < 1e-9);
    maxFootError = std::max(
        maxFootError,
        (kin.position[rig.named.leftHeel] - truth.position[rig.named.leftHeel]).norm());
  }
  CHECK(maxFootError > 1e-3);
}

TEST_CASE("alignment requires device coverage") {
  const RigModel rig = makeDeskRig();
  const MotionSequence thetaX = testing::wavyMotion(rig, 120, kRate);
  HandEyeResult he;
  he.pairCount = 2;
  CHECK_THROWS_AS((void)rigidAlignSequence(thetaX, headTrajectory(1.0), he, rig), Error);
}

TEST_CASE("hand-eye json round trip") {
  std::mt19937_64 rng(1);
  HandEyeResult r;
  r.deviceFromHeadSegment = testing::randomTransform(rng);
  r.rotationRmsRad = 0.001;
  r.translationRmsM = 0.002;
  r.pairCount = 17;
  const std::string text = handEyeToJson(r);
  CHECK(handEyeToJson(handEyeFromJson(text)) == text);
  CHECK_THROWS_AS((void)handEyeFromJson("{\"pair_count\": 1}"), Error);
}
