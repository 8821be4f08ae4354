#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace egofuse {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using TimeNs = std::int64_t;

constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// SO(3) helpers

Mat3 skew(const Vec3& v);

// Exponential map: rotation vector -> unit quaternion.
Quat expMap(const Vec3& omega);

// Logarithm map with angle in [0, pi].
Vec3 logMap(const Quat& q);

// Inverse of the right Jacobian of SO(3); d Log(R Exp(d)) / d d at d = 0.
Mat3 rightJacobianInverse(const Vec3& phi);

// Right Jacobian of SO(3); d Exp(phi + d) = Exp(phi) Exp(Jr d).
Mat3 rightJacobian(const Vec3& phi);

// Geodesic angle 2 acos(|<q1,q2>|).
double geodesicAngle(const Quat& a, const Quat& b);

// Intrinsic XYZ Euler angles: R = Rx(a) * Ry(b) * Rz(c).
Quat eulerXyz(double a, double b, double c);

// ---------------------------------------------------------------------------

/// Rigid body transform. `rotation` is kept normalized.
struct RigidTransform {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  RigidTransform() = default;
  RigidTransform(const Quat& q, const Vec3& t) : rotation(q.normalized()), translation(t) {}

  static RigidTransform identity() {
    return {};
  }
  static RigidTransform fromTranslation(const Vec3& t) {
    return {Quat::Identity(), t};
  }
  static RigidTransform fromRotation(const Quat& q) {
    return {q, Vec3::Zero()};
  }

  [[nodiscard]] Vec3 apply(const Vec3& p) const {
    return rotation * p + translation;
  }
  [[nodiscard]] RigidTransform inverse() const;
  [[nodiscard]] Eigen::Matrix4d matrix() const;
};

/// a * b: apply b first, then a.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

inline RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
  return compose(a, b);
}

/// Rotation angle and translation distance between two transforms.
struct PoseDelta {
  double angle = 0.0;
  double distance = 0.0;
};
PoseDelta poseDifference(const RigidTransform& a, const RigidTransform& b);

/// Translation lerp and shortest-arc slerp.
RigidTransform interpolatePoses(const RigidTransform& a, const RigidTransform& b, double alpha);

struct TrajectorySample {
  TimeNs tNs = 0;
  RigidTransform pose; // world_from_body
};

/// Timestamped pose stream in a named frame. Timestamps strictly increase.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(std::string frameId, std::vector<TrajectorySample> samples);

  [[nodiscard]] const std::string& frameId() const {
    return frameId_;
  }
  [[nodiscard]] const std::vector<TrajectorySample>& samples() const {
    return samples_;
  }
  [[nodiscard]] std::size_t size() const {
    return samples_.size();
  }
  [[nodiscard]] TimeNs startTime() const;
  [[nodiscard]] TimeNs endTime() const;
  [[nodiscard]] bool covers(TimeNs t) const;

  /// Throws OutOfRange outside [startTime, endTime].
  [[nodiscard]] RigidTransform interpolate(TimeNs t) const;

  /// Every pose replaced by left * pose * right.
  [[nodiscard]] Trajectory transformed(const RigidTransform& left, const RigidTransform& right) const;

 private:
  std::string frameId_;
  std::vector<TrajectorySample> samples_;
};

/// CSV: header `t_ns,tx,ty,tz,qw,qx,qy,qz`.
Trajectory readTrajectoryCsv(const std::filesystem::path& path, std::string frameId = "world");
void writeTrajectoryCsv(const std::filesystem::path& path, const Trajectory& traj);
std::string trajectoryToCsv(const Trajectory& traj);
Trajectory trajectoryFromCsv(const std::string& text, std::string frameId = "world");

/// Linear pinhole camera without distortion.
struct CameraModel {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  /// Throws InvariantViolation when the intrinsics are unusable.
  void validate() const;

  /// Pixel coordinates, or nullopt for z <= 0. May fall outside the image.
  [[nodiscard]] std::optional<Vec2> project(const Vec3& pointCamera) const;
  [[nodiscard]] Vec3 unproject(const Vec2& uv, double depth) const;
  [[nodiscard]] bool inImage(const Vec2& uv) const {
    return uv.x() >= 0.0 && uv.x() < width && uv.y() >= 0.0 && uv.y() < height;
  }
};

CameraModel readCameraJson(const std::filesystem::path& path);
void writeCameraJson(const std::filesystem::path& path, const CameraModel& cam);

// Shortest round-trip decimal representation.
std::string formatDouble(double v);

} // namespace egofuse
