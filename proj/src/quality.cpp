#include "egofuse/quality.h"

#include "egofuse/error.h"
#include "egofuse/io.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

namespace egofuse {

std::vector<std::size_t> downsampleIndices(const MotionSequence& motion, double targetHz) {
  EGOFUSE_CHECK(
      std::isfinite(targetHz) && targetHz > 0.0, ErrorCode::InvalidArgument,
      "target rate must be positive");
  EGOFUSE_CHECK(
      targetHz <= motion.rateHz * (1.0 + 1e-9), ErrorCode::InvalidArgument,
      "cannot downsample " + std::to_string(motion.rateHz) + " Hz motion to " +
          std::to_string(targetHz) + " Hz");
  std::vector<std::size_t> out;
  if (motion.frames.empty()) {
    return out;
  }
  const auto& frames = motion.frames;
  const TimeNs t0 = frames.front().tNs;
  const TimeNs tEnd = frames.back().tNs;
  const double period = 1e9 / targetHz;
  for (long long k = 0;; ++k) {
    const auto grid = t0 + static_cast<TimeNs>(std::llround(static_cast<double>(k) * period));
    if (grid > tEnd) {
      break;
    }
    const auto it = std::lower_bound(
        frames.begin(), frames.end(), grid, [](const PoseFrame& f, TimeNs t) { return f.tNs < t; });
    auto idx = static_cast<std::size_t>(it - frames.begin());
    if (idx == frames.size() || (idx > 0 && grid - frames[idx - 1].tNs <= frames[idx].tNs - grid)) {
      idx = idx == 0 ? 0 : idx - 1;
    }
    if (out.empty() || out.back() != idx) {
      out.push_back(idx);
    }
  }
  return out;
}

MotionSequence downsample(const MotionSequence& motion, double targetHz) {
  const auto idx = downsampleIndices(motion, targetHz);
  MotionSequence out;
  out.rigName = motion.rigName;
  out.identity = motion.identity;
  out.rateHz = targetHz;
  out.frames.reserve(idx.size());
  for (auto i : idx) {
    out.frames.push_back(motion.frames[i]);
  }
  return out;
}

ContactLabels selectFrames(const ContactLabels& contacts, const std::vector<std::size_t>& indices) {
  ContactLabels out;
  out.provenance = contacts.provenance;
  out.frames.reserve(indices.size());
  for (auto i : indices) {
    EGOFUSE_CHECK(
        i < contacts.frames.size(), ErrorCode::FrameMisalignment,
        "contact labels have " + std::to_string(contacts.frames.size()) + " frames, need index " +
            std::to_string(i));
    out.frames.push_back(contacts.frames[i]);
  }
  return out;
}

namespace {

SegmentClosest closestOrdered(const Vec3& p0, const Vec3& p1, const Vec3& q0, const Vec3& q1) {
  constexpr double kEps = 1e-300;
  const Vec3 d1 = p1 - p0;
  const Vec3 d2 = q1 - q0;
  const Vec3 r = p0 - q0;
  const double a = d1.squaredNorm();
  const double e = d2.squaredNorm();
  const double f = d2.dot(r);
  double s = 0.0;
  double t = 0.0;
  if (a <= kEps && e <= kEps) {
    // both points
  } else if (a <= kEps) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= kEps) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      // Parallel axes: start from s = 0 and let the clamping below settle it.
      s = denom > 1e-14 * a * e ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  const Vec3 cp = p0 + s * d1;
  const Vec3 cq = q0 + t * d2;
  return {(cp - cq).norm(), s, t};
}

auto key(const Vec3& a, const Vec3& b) {
  return std::make_tuple(a.x(), a.y(), a.z(), b.x(), b.y(), b.z());
}

} // namespace

SegmentClosest segmentDistance(const Vec3& p0, const Vec3& p1, const Vec3& q0, const Vec3& q1) {
  // Evaluate in a canonical argument order so d(P, Q) == d(Q, P) bit for bit.
  if (key(q0, q1) < key(p0, p1)) {
    const SegmentClosest r = closestOrdered(q0, q1, p0, p1);
    return {r.distance, r.t, r.s};
  }
  return closestOrdered(p0, p1, q0, q1);
}

std::pair<Vec3, Vec3> capsuleAxis(const CapsuleSpec& c, const Kinematics& kin) {
  const auto j = static_cast<std::size_t>(c.joint);
  return {kin.position[j] + kin.rotation[j] * c.a, kin.position[j] + kin.rotation[j] * c.b};
}

double capsuleRadius(const CapsuleSpec& c, double u) {
  const double rb = c.taperRadius < 0.0 ? c.radius : c.taperRadius;
  return (1.0 - u) * c.radius + u * rb;
}

double capsulePenetration(const CapsuleSpec& a, const Kinematics& ka, const CapsuleSpec& b,
                          const Kinematics& kb) {
  const auto [a0, a1] = capsuleAxis(a, ka);
  const auto [b0, b1] = capsuleAxis(b, kb);
  const SegmentClosest cl = segmentDistance(a0, a1, b0, b1);
  return std::max(0.0, capsuleRadius(a, cl.s) + capsuleRadius(b, cl.t) - cl.distance);
}

std::vector<std::pair<int, int>> defaultExcludedPairs(
    const RigModel& rig, const std::vector<CapsuleSpec>& primitives) {
  std::vector<std::pair<int, int>> out;
  const int n = static_cast<int>(primitives.size());
  for (int i = 0; i < n; ++i) {
    for (int k = i + 1; k < n; ++k) {
      const int ji = primitives[static_cast<std::size_t>(i)].joint;
      const int jk = primitives[static_cast<std::size_t>(k)].joint;
      const bool related = ji == jk || rig.joints[static_cast<std::size_t>(ji)].parent == jk ||
                           rig.joints[static_cast<std::size_t>(jk)].parent == ji;
      if (related) {
        out.emplace_back(i, k);
      }
    }
  }
  return out;
}

namespace {

double meanOf(const std::vector<double>& v) {
  if (v.empty()) {
    return 0.0;
  }
  double s = 0.0;
  for (double x : v) {
    s += x;
  }
  return s / static_cast<double>(v.size());
}

} // namespace

PerFrameMetric wristDistanceError(
    const MotionSequence& motion, const RigModel& rig, const Trajectory& leftBand,
    const Trajectory& rightBand) {
  PerFrameMetric m;
  for (const auto& f : motion.frames) {
    if (!leftBand.covers(f.tNs) || !rightBand.covers(f.tNs)) {
      ++m.skippedFrames;
      continue;
    }
    const auto kin = computeKinematics(rig, motion.identity, f);
    const double l =
        (kin.position[rig.named.leftWrist] - leftBand.interpolate(f.tNs).translation).norm();
    const double r =
        (kin.position[rig.named.rightWrist] - rightBand.interpolate(f.tNs).translation).norm();
    m.values.push_back(50.0 * (l + r));
  }
  m.mean = meanOf(m.values);
  return m;
}

PerFrameMetric selfPenetrationError(
    const MotionSequence& motion, const RigModel& rig, const std::vector<CapsuleSpec>& primitives,
    const std::vector<std::pair<int, int>>& excludedPairs) {
  EGOFUSE_CHECK(!primitives.empty(), ErrorCode::EmptyInput, "no collision primitives");
  for (const auto& c : primitives) {
    EGOFUSE_CHECK(
        c.joint >= 0 && c.joint < static_cast<int>(rig.joints.size()), ErrorCode::OutOfRange,
        "collision primitive attached to unknown joint " + std::to_string(c.joint));
  }
  std::set<std::pair<int, int>> skip;
  for (auto [i, k] : excludedPairs) {
    skip.emplace(std::min(i, k), std::max(i, k));
  }
  PerFrameMetric m;
  m.values.reserve(motion.frames.size());
  const int n = static_cast<int>(primitives.size());
  for (const auto& f : motion.frames) {
    const auto kin = computeKinematics(rig, motion.identity, f);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int k = i + 1; k < n; ++k) {
        if (skip.count({i, k}) == 0) {
          sum += capsulePenetration(
              primitives[static_cast<std::size_t>(i)], kin, primitives[static_cast<std::size_t>(k)],
              kin);
        }
      }
    }
    m.values.push_back(sum);
  }
  m.mean = meanOf(m.values);
  return m;
}

SlidingResult footSlidingPercent(
    const MotionSequence& motion, const RigModel& rig, const ContactLabels& contacts,
    double threshold) {
  EGOFUSE_CHECK(
      contacts.frames.size() == motion.frames.size(), ErrorCode::FrameMisalignment,
      "contact labels have " + std::to_string(contacts.frames.size()) + " frames, motion has " +
          std::to_string(motion.frames.size()));
  EGOFUSE_CHECK(threshold >= 0.0, ErrorCode::InvalidArgument, "sliding threshold must be >= 0");
  SlidingResult r;
  const auto speeds = heelSpeeds(motion, rig);
  r.sliding.assign(motion.frames.size(), {false, false});
  for (std::size_t k = 0; k < speeds.size(); ++k) {
    for (int s = 0; s < 2; ++s) {
      if (!contacts.frames[k][static_cast<std::size_t>(s)]) {
        continue;
      }
      ++r.contactFrames;
      if (speeds[k][static_cast<std::size_t>(s)] > threshold) {
        r.sliding[k][static_cast<std::size_t>(s)] = true;
        ++r.slidingFrames;
      }
    }
  }
  if (r.contactFrames > 0) {
    r.percent = 100.0 * r.slidingFrames / r.contactFrames;
  }
  return r;
}

MetricReport evaluateMetrics(
    const MotionSequence& motion, const RigModel& rig, const Trajectory& leftBand,
    const Trajectory& rightBand, const ContactLabels& contacts, const MetricOptions& options) {
  motion.validate(rig);
  EGOFUSE_CHECK(
      contacts.frames.size() == motion.frames.size(), ErrorCode::FrameMisalignment,
      "contact labels have " + std::to_string(contacts.frames.size()) + " frames, motion has " +
          std::to_string(motion.frames.size()));
  const auto idx = downsampleIndices(motion, options.fps);
  MotionSequence m = motion;
  m.frames.clear();
  m.rateHz = options.fps;
  for (auto i : idx) {
    m.frames.push_back(motion.frames[i]);
  }
  const ContactLabels c = selectFrames(contacts, idx);

  MetricReport r;
  const auto wrist = wristDistanceError(m, rig, leftBand, rightBand);
  r.wristMeanCm = wrist.mean;
  r.wristFramesSkipped = wrist.skippedFrames;
  r.penetrationMean =
      selfPenetrationError(m, rig, rig.collision, defaultExcludedPairs(rig, rig.collision)).mean;
  r.slidingPercent = footSlidingPercent(m, rig, c, options.slidingThreshold).percent;
  r.framesEvaluated = static_cast<int>(m.frames.size());
  r.fpsUsed = options.fps;
  return r;
}

std::string metricReportToJson(const MetricReport& r) {
  io::Json j;
  j["wrist_mean_cm"] = r.wristMeanCm;
  j["penetration_mean"] = r.penetrationMean;
  j["sliding_percent"] = r.slidingPercent ? io::Json(*r.slidingPercent) : io::Json(nullptr);
  j["frames_evaluated"] = r.framesEvaluated;
  j["fps_used"] = r.fpsUsed;
  j["wrist_frames_skipped"] = r.wristFramesSkipped;
  return j.dump(1) + "\n";
}

MetricReport metricReportFromJson(const std::string& text) {
  MetricReport r;
  try {
    const io::Json j = io::Json::parse(text);
    r.wristMeanCm = j.at("wrist_mean_cm").get<double>();
    r.penetrationMean = j.at("penetration_mean").get<double>();
    if (!j.at("sliding_percent").is_null()) {
      r.slidingPercent = j.at("sliding_percent").get<double>();
    }
    r.framesEvaluated = j.at("frames_evaluated").get<int>();
    r.fpsUsed = j.at("fps_used").get<double>();
    r.wristFramesSkipped = j.value("wrist_frames_skipped", 0);
  } catch (const io::Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("metric report json: ") + e.what());
  }
  EGOFUSE_CHECK(
      r.wristMeanCm >= 0.0 && r.penetrationMean >= 0.0 && r.framesEvaluated >= 0 &&
          r.fpsUsed >= 0.0 && (!r.slidingPercent || (*r.slidingPercent >= 0.0 &&
                                                      *r.slidingPercent <= 100.0)),
      ErrorCode::ParseError, "metric report json: values out of range");
  return r;
}

} // namespace egofuse
