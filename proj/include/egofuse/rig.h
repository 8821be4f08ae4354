#pragma once

#include "egofuse/geom.h"

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace egofuse {

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

struct RigJoint {
  std::string name;
  int parent = -1;
  Vec3 restDirection = Vec3::UnitZ(); // unit, expressed in the parent frame
  double baseLength = 0.0;            // meters at zero identity
  std::vector<double> lengthCoeffs;   // d length / d identity[g]
  bool rotates = true;                // three intrinsic XYZ Euler DoFs
};

struct RigLandmark {
  int joint = 0;
  Vec3 offset = Vec3::Zero(); // joint-local, meters
};

struct DofLimit {
  double min = -kPi;
  double max = kPi;
};

struct SkinInfluence {
  int joint = 0;
  double weight = 0.0;
};

struct CapsuleSpec {
  int joint = 0;
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();
  double radius = 0.0;
  double taperRadius = -1.0; // radius at b; negative means same as `radius`
};

struct NamedJoints {
  int root = 0;
  int head = -1;
  int leftWrist = -1;
  int rightWrist = -1;
  int leftHeel = -1;
  int rightHeel = -1;
  int leftToe = -1;
  int rightToe = -1;
};

/// Parametric skeleton with identity-controlled bone lengths and an optional
/// skinned template mesh. Immutable after `finalize()`.
struct RigModel {
  std::string name;
  int identityDim = 0;
  std::vector<RigJoint> joints;
  std::vector<DofLimit> limits; // one per pose DoF
  std::vector<RigLandmark> landmarks;
  NamedJoints named;
  std::vector<Vec3> templateVertices;
  std::vector<std::vector<SkinInfluence>> skinning;
  std::vector<std::array<int, 2>> edges;
  std::vector<std::array<int, 3>> triangles;
  std::vector<CapsuleSpec> collision;
  std::vector<double> shapeCoeffsBeta; // carried, never optimized

  // Derived by finalize().
  std::vector<int> dofStart;               // -1 for non-rotating joints
  std::vector<std::vector<int>> chain;     // root..joint inclusive
  std::vector<std::vector<int>> children;
  int poseDofCount = 0;

  /// Validates every invariant and fills the derived tables. Throws
  /// InvariantViolation naming the offending joint/vertex.
  void finalize();

  [[nodiscard]] int jointCount() const {
    return static_cast<int>(joints.size());
  }
  [[nodiscard]] int vertexCount() const {
    return static_cast<int>(templateVertices.size());
  }
  [[nodiscard]] int jointIndex(const std::string& jointName) const;
  [[nodiscard]] double boneLength(int joint, const VecX& identity) const;
  [[nodiscard]] bool isAncestorOrSelf(int ancestor, int joint) const;
};

RigModel loadRig(const std::filesystem::path& path);
RigModel rigFromJson(const std::string& text);
std::string rigToJson(const RigModel& rig);
void saveRig(const std::filesystem::path& path, const RigModel& rig);

struct PoseFrame {
  TimeNs tNs = 0;
  RigidTransform root; // world_from_root
  VecX pose;           // Euler angles, radians
};

struct MotionSequence {
  std::string rigName;
  VecX identity;
  std::vector<PoseFrame> frames;
  double rateHz = 0.0;

  /// Checks frame ordering and dimensions against `rig`.
  void validate(const RigModel& rig) const;
};

MotionSequence readMotion(const std::filesystem::path& path);
MotionSequence motionFromJson(const std::string& text);
std::string motionToJson(const MotionSequence& motion);
void writeMotion(const std::filesystem::path& path, const MotionSequence& motion);

PoseFrame zeroFrame(const RigModel& rig, TimeNs t = 0);

// ---------------------------------------------------------------------------
// Forward kinematics

/// World rotation/position of every joint plus the data the analytic
/// Jacobians need.
struct Kinematics {
  std::vector<Mat3> rotation;
  std::vector<Vec3> position;
  // World axes of the three Euler DoFs of each rotating joint.
  std::vector<std::array<Vec3, 3>> dofAxes;
  // World rotation of the frame in which the joint's rest offset is expressed.
  std::vector<Mat3> offsetFrame;
  Vec3 rootTranslation = Vec3::Zero();

  [[nodiscard]] RigidTransform transform(int joint) const;
};

Kinematics computeKinematics(const RigModel& rig, const VecX& identity, const PoseFrame& frame);

/// Per-joint world_from_joint transforms. Throws DimensionMismatch.
std::vector<RigidTransform>
forwardKinematics(const RigModel& rig, const VecX& identity, const PoseFrame& frame);

/// Rest joint positions (zero pose, identity root) for the given identity.
std::vector<Vec3> restJointPositions(const RigModel& rig, const VecX& identity);

/// Linear blend skinning of the template mesh.
std::vector<Vec3> skinMesh(const RigModel& rig, const VecX& identity, const PoseFrame& frame);

std::vector<Vec3> landmarkPositions(const RigModel& rig, const Kinematics& kin);

// ---------------------------------------------------------------------------
// Analytic derivatives
//
// Column layout of the per-frame parameter vector:
//   [0,3)   root translation (world)
//   [3,6)   root rotation, right-multiplied tangent increment
//   [6,6+P) pose DoFs
//   [6+P, 6+P+I) identity parameters (only when requested)

constexpr int kRootTranslationCol = 0;
constexpr int kRootRotationCol = 3;
constexpr int kPoseCol = 6;

/// Columns that can influence a point rigidly attached to `joint`.
std::vector<int> pointColumns(const RigModel& rig, int joint, bool withIdentity);

/// d(point)/d(params) for a world point rigidly attached to `joint`, written
/// into `jac` (3 x cols.size()) for the columns produced by pointColumns().
void pointJacobian(
    const RigModel& rig,
    const Kinematics& kin,
    int joint,
    const Vec3& worldPoint,
    bool withIdentity,
    Eigen::Ref<MatX> jac);

/// Full dense 3 x (6+P[+I]) Jacobian of a skinned vertex.
MatX vertexJacobian(
    const RigModel& rig,
    const VecX& identity,
    const Kinematics& kin,
    const std::vector<Vec3>& restJoints,
    int vertex,
    bool withIdentity);

/// Number of per-frame parameters (root + pose DoFs).
inline int frameParamCount(const RigModel& rig) {
  return kPoseCol + rig.poseDofCount;
}

/// Maps per-frame columns (layout above) to StructuredProblem columns:
/// frame-local columns go to frame * frameParamCount + c and identity columns
/// to the global block after all `frameCount` frames.
std::vector<int> problemColumns(
    const RigModel& rig, const std::vector<int>& local, int frame, int frameCount);

/// Applies a per-frame parameter increment (layout above, identity excluded).
PoseFrame applyFrameIncrement(const PoseFrame& frame, const Eigen::Ref<const VecX>& delta);

/// Builds the bundled 22-joint desk rig.
RigModel makeDeskRig();

/// A second desk rig sharing the skeleton but with a different mesh
/// topology; used as the conversion target.
RigModel makeDeskTargetRig();

/// Desk-rig pose with the arms abducted and the legs apart, so no two limb
/// surfaces touch. Used to build surface correspondences.
PoseFrame deskSpreadPose(const RigModel& rig);

/// Intrinsic XYZ Euler angles of a rotation matrix (inverse of eulerXyz).
Vec3 eulerFromRotation(const Mat3& r);

} // namespace egofuse
