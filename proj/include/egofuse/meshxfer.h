#pragma once

#include "egofuse/rig.h"
#include "egofuse/solver.h"

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace egofuse {

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
};

/// Rest template of a rig as a triangle mesh.
TriMesh templateMesh(const RigModel& rig);

struct BaryPoint {
  int triangle = 0;
  Vec3 bary = Vec3(1.0, 0.0, 0.0);
};

struct SurfaceCorrespondence {
  std::vector<BaryPoint> points; // one per target vertex
  int skippedTriangles = 0;      // degenerate source triangles ignored
};

/// Closest point on triangle abc to p, as barycentric coordinates.
Vec3 closestPointBarycentric(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// For each target vertex, the closest point on the source surface. Ties keep
/// the lowest triangle index.
SurfaceCorrespondence buildCorrespondence(const TriMesh& source, const std::vector<Vec3>& target);

/// Correspondence between two rigs' templates, both skinned at zero identity
/// in `pose` (same pose layout required).
SurfaceCorrespondence buildPosedCorrespondence(
    const RigModel& source, const RigModel& target, const PoseFrame& pose);

/// Barycentric interpolation of posed source vertices into the target topology.
std::vector<Vec3> retopologize(
    const std::vector<Vec3>& sourcePosed, const std::vector<std::array<int, 3>>& sourceTriangles,
    const SurfaceCorrespondence& corresp);

std::string correspondenceToJson(const SurfaceCorrespondence& c);
/// `triangleCount` bounds the triangle indices; pass -1 to skip that check.
SurfaceCorrespondence correspondenceFromJson(const std::string& text, int triangleCount = -1);
SurfaceCorrespondence readCorrespondence(const std::filesystem::path& path, int triangleCount = -1);
void writeCorrespondence(const std::filesystem::path& path, const SurfaceCorrespondence& c);

struct FitConfig {
  double lambdaE = 0.1;
  int sparseFrames = 5;
  int stage1Iterations = 1500;
  int stage2Iterations = 300;
  int stage3Iterations = 3000;
  // Damped Gauss-Newton iterations after the first-order stages; 0 disables.
  int polishIterations = 60;
  double learningRate = 0.02;
  double identityLearningRate = 0.005;
  double finalRateRatio = 1e-3; // rate at the last iteration of a stage, relative
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adamEpsilon = 1e-12;
  // A step that raises the loss is undone and the rate multiplied by this.
  double backoff = 0.5;
  double minLearningRate = 1e-10;
  double edgeEpsilon = 1e-8;

  void validate() const;
};

/// Per-frame loss terms of the conversion objective:
///   L_V = mean over vertices of |v - v*|^2
///   L_E = mean over template edges of sqrt(|e - e*|^2 + eps^2) - eps
struct MeshLoss {
  double vertex = 0.0;
  double edge = 0.0;
  double total = 0.0; // vertex + lambdaE * edge
  // d total / d [frame params (6 + P) | identity (I)].
  VecX gradient;
};

MeshLoss meshLoss(
    const RigModel& rig, const VecX& identity, const PoseFrame& frame,
    const std::vector<Vec3>& target, double lambdaE, double edgeEpsilon, bool withGradient);

/// The same objective as least-squares blocks for the Gauss-Newton polish:
/// one block with every vertex residual scaled by 1/sqrt(V), then one
/// pseudo-Huber block per template edge whose cost equals lambdaE * L_E's
/// share of that edge. Columns follow problemColumns() for `frame` out of
/// `frameCount`, with identity columns when `withIdentity`.
std::vector<ResidualBlock> meshResidualBlocks(
    const RigModel& rig, const VecX& identity, const PoseFrame& frame,
    const std::vector<Vec3>& target, double lambdaE, double edgeEpsilon, int frameIndex,
    int frameCount, bool withIdentity, bool withJacobian);

/// Greedy farthest-point selection. Distance between two frames is the mean
/// vertex distance after removing each mesh's centroid; the seed is the frame
/// farthest from the rest template.
std::vector<int> selectSparseFrames(
    const RigModel& rig, const std::vector<std::vector<Vec3>>& targets, int count);

struct StageTrace {
  std::string name;
  std::vector<double> losses; // accepted iterates, starting with the initial loss
  bool converged = false;
};

struct FitResult {
  MotionSequence motion;
  std::vector<StageTrace> stages;
  std::vector<bool> frameConverged;
  std::vector<int> sparseFrames;
  double finalVertexLoss = 0.0; // mean over frames
  double finalEdgeLoss = 0.0;
};

/// Staged fit of identity, root and pose to per-frame target meshes in the
/// rig's topology. Timestamps come from `times` and must match targets.
FitResult fitParameters(
    const RigModel& rig, const std::vector<std::vector<Vec3>>& targets,
    const std::vector<TimeNs>& times, const FitConfig& cfg);

/// Skins `motion` on `source`, retopologizes each frame and fits `target`.
FitResult convertMotion(
    const RigModel& source, const RigModel& target, const SurfaceCorrespondence& corresp,
    const MotionSequence& motion, const FitConfig& cfg);

} // namespace egofuse
