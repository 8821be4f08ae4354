#pragma once

#include "egofuse/rig.h"
#include "egofuse/solver.h"

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace egofuse {

struct FusionConfig {
  double lambdaX = 0.1;
  double lambdaL = 100.0;
  double lambdaSmooth = 10.0;
  int smoothOrder = 2; // 1: first differences of the root, 2: second differences
  double lambdaG = 1.0;
  double lambda0 = 1.0;
  double lambdaAlpha = 9.0;
  double vSigma = 0.05; // m/s
  double delta = 0.05;  // Huber scale of the tracking term, meters
  int batchSize = 2000;
  double epsV = 0.05; // m/s, "foot at rest" threshold
  double seamWeight = 1e4;
  int maxIterations = 30;
  double tolerance = 1e-10;
  double initialDamping = 1e-4;

  void validate() const;
};

std::string fusionConfigToJson(const FusionConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
FusionConfig fusionConfigFromJson(const std::string& text);
FusionConfig readFusionConfig(const std::filesystem::path& path);

enum class ContactProvenance { Provided, DerivedFromVelocity };

/// Per-frame contact flags, index 0 = left heel, 1 = right heel.
struct ContactLabels {
  std::vector<std::array<bool, 2>> frames;
  ContactProvenance provenance = ContactProvenance::Provided;

  [[nodiscard]] std::size_t size() const {
    return frames.size();
  }
};

std::string contactsToJson(const ContactLabels& c);
ContactLabels contactsFromJson(const std::string& text);
ContactLabels readContacts(const std::filesystem::path& path);
void writeContacts(const std::filesystem::path& path, const ContactLabels& c);

/// lambda_0 + lambda_alpha * exp(-velX / v_sigma). Throws NegativeVelocity.
double adaptiveFootWeight(double velX, const FusionConfig& cfg);

/// World speed of each heel joint per frame: central differences inside,
/// one-sided at the ends, zero for a single frame.
std::vector<std::array<double, 2>> heelSpeeds(const MotionSequence& motion, const RigModel& rig);

/// Contact where the heel speed is below epsV. A single frame counts as contact.
ContactLabels deriveContacts(const MotionSequence& thetaX, const RigModel& rig, double epsV);

/// Term buckets of the fusion objective.
enum FusionTerm : int {
  kTermTracking = 0,
  kTermPrior,
  kTermLimits,
  kTermSmooth,
  kTermGravity,
  kTermFoot,
  kTermSeam,
  kFusionTermCount,
};
const char* fusionTermName(int term);

// Residual builders. `frame` indexes the batch and `frameCount` is its size;
// multi-frame residuals start at `frame`.

/// Huber-robustified joint position against a tracked position.
ResidualBlock trackingResidual(
    const RigModel& rig, const Kinematics& kin, int joint, const Vec3& target, double delta,
    int frame, int frameCount, bool withJacobian);

/// sqrt(lambdaX) (pose - poseX).
ResidualBlock priorResidual(
    const RigModel& rig, const VecX& pose, const VecX& poseX, double lambdaX, int frame,
    int frameCount, bool withJacobian);

/// Full-length hinge vector, zero for DoFs inside their limits.
ResidualBlock limitResidual(
    const RigModel& rig, const VecX& pose, double lambdaL, int frame, int frameCount,
    bool withJacobian);

/// sqrt(lambdaSmooth) [t_b - t_a; Log(R_a^T R_b)].
ResidualBlock smoothResidual(
    const RigModel& rig, const RigidTransform& rootA, const RigidTransform& rootB,
    double lambdaSmooth, int frame, int frameCount, bool withJacobian);

/// sqrt(lambdaSmooth) [t_c - 2 t_b + t_a; Log(R_b^T R_c) - Log(R_a^T R_b)],
/// coupling frames `frame` .. `frame + 2`.
ResidualBlock smoothSecondResidual(
    const RigModel& rig, const RigidTransform& rootA, const RigidTransform& rootB,
    const RigidTransform& rootC, double lambdaSmooth, int frame, int frameCount,
    bool withJacobian);

/// sqrt(lambdaG) * theta * axis, where theta is the angle between the root up
/// axes of the optimized and the reference orientation.
ResidualBlock gravityResidual(
    const RigModel& rig, const Quat& root, const Quat& rootX, double lambdaG, int frame,
    int frameCount, bool withJacobian);

/// sqrt(weight) (p_b - p_a) / dt: heel velocity between consecutive frames.
ResidualBlock footResidual(
    const RigModel& rig, const Kinematics& kinA, const Kinematics& kinB, int joint, double weight,
    double dtSeconds, int frame, int frameCount, bool withJacobian);

/// sqrt(weight) [t - t*; Log(R*^T R); pose - pose*] pinning a frame.
ResidualBlock seamResidual(
    const RigModel& rig, const PoseFrame& current, const PoseFrame& target, double weight,
    int frame, int frameCount, bool withJacobian);

/// Root-local axis that points along world up in the rest pose.
Vec3 rootUpAxis(const RigModel& rig);

struct BatchReport {
  int firstFrame = 0;
  int frameCount = 0;
  bool converged = false;
  int iterations = 0;
  double initialCost = 0.0;
  double finalCost = 0.0;
  std::vector<double> acceptedCosts;
};

struct FusionReport {
  std::map<std::string, double> termLosses; // summed over batches
  std::vector<BatchReport> batches;

  [[nodiscard]] bool converged() const;
};

std::string fusionReportToJson(const FusionReport& r);
FusionReport fusionReportFromJson(const std::string& text);

struct FusionInputs {
  const MotionSequence* thetaRigid = nullptr;
  const MotionSequence* thetaX = nullptr;
  const Trajectory* head = nullptr; // world_from_headsegment
  const Trajectory* leftWrist = nullptr;
  const Trajectory* rightWrist = nullptr;
  const ContactLabels* contacts = nullptr; // derived from thetaX when null
};

struct FusionResult {
  MotionSequence motion; // Theta^W
  FusionReport report;
  ContactLabels contactsUsed;
};

/// Refines the rigidly aligned motion batch by batch. Identity is copied from
/// thetaX and stays fixed. Batches overlap by one frame; that frame is pinned
/// to the previous batch's result by the seam residual.
FusionResult fuseSequence(const FusionInputs& in, const RigModel& rig, const FusionConfig& cfg);

} // namespace egofuse
