#include "egofuse/geom.h"

#include "egofuse/error.h"
#include "egofuse/io.h"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace egofuse {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Quat expMap(const Vec3& omega) {
  const double theta = omega.norm();
  if (theta < 1e-12) {
    Quat q(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
    return q.normalized();
  }
  const double half = 0.5 * theta;
  const Vec3 axis = omega / theta;
  const double s = std::sin(half);
  return Quat(std::cos(half), s * axis.x(), s * axis.y(), s * axis.z());
}

Vec3 logMap(const Quat& qIn) {
  Quat q = qIn.normalized();
  if (q.w() < 0.0) {
    q.coeffs() = -q.coeffs();
  }
  const Vec3 v = q.vec();
  const double sinHalf = v.norm();
  if (sinHalf < 1e-12) {
    return 2.0 * v / q.w();
  }
  const double theta = 2.0 * std::atan2(sinHalf, q.w());
  return v * (theta / sinHalf);
}

Mat3 rightJacobianInverse(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 k = skew(phi);
  double coeff;
  if (theta < 1e-6) {
    coeff = 1.0 / 12.0 + theta * theta / 720.0;
  } else {
    coeff = 1.0 / (theta * theta) -
        (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  }
  return Mat3::Identity() + 0.5 * k + coeff * k * k;
}

Mat3 rightJacobian(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 k = skew(phi);
  double a;
  double b;
  if (theta < 1e-6) {
    a = 0.5 - theta * theta / 24.0;
    b = 1.0 / 6.0 - theta * theta / 120.0;
  } else {
    const double t2 = theta * theta;
    a = (1.0 - std::cos(theta)) / t2;
    b = (theta - std::sin(theta)) / (t2 * theta);
  }
  return Mat3::Identity() - a * k + b * k * k;
}

double geodesicAngle(const Quat& a, const Quat& b) {
  // atan2 form stays accurate for tiny angles where acos loses digits.
  const Quat d = a.normalized().conjugate() * b.normalized();
  return 2.0 * std::atan2(d.vec().norm(), std::abs(d.w()));
}

Quat eulerXyz(double a, double b, double c) {
  return Quat(Eigen::AngleAxisd(a, Vec3::UnitX())) * Quat(Eigen::AngleAxisd(b, Vec3::UnitY())) *
      Quat(Eigen::AngleAxisd(c, Vec3::UnitZ()));
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation = rotation.conjugate();
  out.translation = -(out.rotation * translation);
  return out;
}

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation.toRotationMatrix();
  m.topRightCorner<3, 1>() = translation;
  return m;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform out;
  out.rotation = (a.rotation * b.rotation).normalized();
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

PoseDelta poseDifference(const RigidTransform& a, const RigidTransform& b) {
  return {geodesicAngle(a.rotation, b.rotation), (a.translation - b.translation).norm()};
}

RigidTransform interpolatePoses(const RigidTransform& a, const RigidTransform& b, double alpha) {
  RigidTransform out;
  out.translation = (1.0 - alpha) * a.translation + alpha * b.translation;
  // Eigen's slerp already follows the shorter arc.
  out.rotation = a.rotation.slerp(alpha, b.rotation).normalized();
  return out;
}

// ---------------------------------------------------------------------------

Trajectory::Trajectory(std::string frameId, std::vector<TrajectorySample> samples)
    : frameId_(std::move(frameId)), samples_(std::move(samples)) {
  EGOFUSE_CHECK(
      !samples_.empty(), ErrorCode::InvariantViolation, "trajectory needs at least one sample");
  for (std::size_t i = 1; i < samples_.size(); ++i) {
    EGOFUSE_CHECK(
        samples_[i].tNs > samples_[i - 1].tNs,
        ErrorCode::InvariantViolation,
        "trajectory timestamps not strictly increasing at sample " + std::to_string(i));
  }
}

TimeNs Trajectory::startTime() const {
  return samples_.front().tNs;
}

TimeNs Trajectory::endTime() const {
  return samples_.back().tNs;
}

bool Trajectory::covers(TimeNs t) const {
  return !samples_.empty() && t >= startTime() && t <= endTime();
}

RigidTransform Trajectory::interpolate(TimeNs t) const {
  EGOFUSE_CHECK(
      covers(t),
      ErrorCode::OutOfRange,
      "time " + std::to_string(t) + " outside trajectory '" + frameId_ + "' span");
  auto it = std::lower_bound(
      samples_.begin(), samples_.end(), t, [](const TrajectorySample& s, TimeNs v) {
        return s.tNs < v;
      });
  if (it->tNs == t) {
    return it->pose;
  }
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  const double alpha = static_cast<double>(t - lo.tNs) / static_cast<double>(hi.tNs - lo.tNs);
  return interpolatePoses(lo.pose, hi.pose, alpha);
}

Trajectory Trajectory::transformed(const RigidTransform& left, const RigidTransform& right) const {
  std::vector<TrajectorySample> out = samples_;
  for (auto& s : out) {
    s.pose = left * s.pose * right;
  }
  return {frameId_, std::move(out)};
}

std::string trajectoryToCsv(const Trajectory& traj) {
  std::string out = "t_ns,tx,ty,tz,qw,qx,qy,qz\n";
  for (const auto& s : traj.samples()) {
    const auto& t = s.pose.translation;
    const auto& q = s.pose.rotation;
    out += std::to_string(s.tNs);
    for (double v : {t.x(), t.y(), t.z(), q.w(), q.x(), q.y(), q.z()}) {
      out += ',';
      out += formatDouble(v);
    }
    out += '\n';
  }
  return out;
}

Trajectory trajectoryFromCsv(const std::string& text, std::string frameId) {
  std::istringstream in(text);
  std::string line;
  EGOFUSE_CHECK(
      static_cast<bool>(std::getline(in, line)), ErrorCode::ParseError, "empty trajectory CSV");
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  EGOFUSE_CHECK(
      line == "t_ns,tx,ty,tz,qw,qx,qy,qz",
      ErrorCode::ParseError,
      "unexpected trajectory CSV header '" + line + "'");
  std::vector<TrajectorySample> samples;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") {
      continue;
    }
    const auto cells = io::splitCsvLine(line);
    const std::string where = "trajectory row " + std::to_string(row);
    EGOFUSE_CHECK(cells.size() == 8, ErrorCode::ParseError, where + ": expected 8 columns");
    TrajectorySample s;
    s.tNs = io::parseInt(cells[0], where);
    double v[7];
    for (int i = 0; i < 7; ++i) {
      v[i] = io::parseDouble(cells[i + 1], where);
    }
    Quat q(v[3], v[4], v[5], v[6]);
    EGOFUSE_CHECK(q.norm() > 1e-12, ErrorCode::ParseError, where + ": zero quaternion");
    s.pose.rotation = std::abs(q.squaredNorm() - 1.0) < 1e-15 ? q : q.normalized();
    s.pose.translation = Vec3(v[0], v[1], v[2]);
    samples.push_back(s);
  }
  try {
    return {std::move(frameId), std::move(samples)};
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

Trajectory readTrajectoryCsv(const std::filesystem::path& path, std::string frameId) {
  try {
    return trajectoryFromCsv(io::readText(path), std::move(frameId));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) {
      throw;
    }
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void writeTrajectoryCsv(const std::filesystem::path& path, const Trajectory& traj) {
  io::writeText(path, trajectoryToCsv(traj));
}

// ---------------------------------------------------------------------------

void CameraModel::validate() const {
  EGOFUSE_CHECK(
      fx > 0.0 && fy > 0.0, ErrorCode::InvariantViolation, "camera focal lengths must be > 0");
  EGOFUSE_CHECK(
      width > 0 && height > 0, ErrorCode::InvariantViolation, "camera size must be > 0");
  EGOFUSE_CHECK(
      cx >= 0.0 && cx < width && cy >= 0.0 && cy < height,
      ErrorCode::InvariantViolation,
      "principal point outside image");
}

std::optional<Vec2> CameraModel::project(const Vec3& p) const {
  if (p.z() <= 0.0) {
    return std::nullopt;
  }
  return Vec2(fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy);
}

Vec3 CameraModel::unproject(const Vec2& uv, double depth) const {
  return Vec3((uv.x() - cx) / fx * depth, (uv.y() - cy) / fy * depth, depth);
}

CameraModel readCameraJson(const std::filesystem::path& path) {
  const auto j = io::readJson(path);
  CameraModel cam;
  try {
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  cam.validate();
  return cam;
}

void writeCameraJson(const std::filesystem::path& path, const CameraModel& cam) {
  io::Json j;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["width"] = cam.width;
  j["height"] = cam.height;
  io::writeJson(path, j);
}

} // namespace egofuse
