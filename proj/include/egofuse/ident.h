#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace egofuse {

struct IdentitySample {
  double heightM = 0.0;
  Eigen::VectorXd identity;
};

struct LambdaScore {
  double lambda = 0.0;
  std::optional<double> loocvMse; // empty when the design is singular at this lambda
};

/// Affine map from subject height to identity parameters.
struct IdentityRegressor {
  Eigen::MatrixXd weights; // identityDim x 2, columns [height, bias]
  double ridgeLambda = 0.0;
  int sampleCount = 0;
  double loocvMse = 0.0;
  std::vector<LambdaScore> scores;

  [[nodiscard]] int identityDim() const {
    return static_cast<int>(weights.rows());
  }
};

/// 13 log-spaced values from 1e-4 to 1e2.
std::vector<double> defaultLambdaGrid();

/// Exact leave-one-out mean squared error of a ridge fit, computed from the
/// hat matrix. The penalty acts on the height slope only; the bias is free.
/// Throws DegenerateDesign when the regularized normal matrix is singular or
/// a sample has unit leverage.
double ridgeLoocvMse(const std::vector<IdentitySample>& samples, double lambda);

/// Fits the regressor at a fixed lambda.
Eigen::MatrixXd fitRidge(const std::vector<IdentitySample>& samples, double lambda);

/// Picks the grid lambda with the smallest LOOCV error (ties go to the larger
/// lambda) and refits on all samples.
IdentityRegressor fitRidgeLoocv(
    const std::vector<IdentitySample>& samples, const std::vector<double>& lambdaGrid);

/// Throws NonPositiveHeight for height <= 0.
Eigen::VectorXd predictIdentity(const IdentityRegressor& reg, double heightM);

/// CSV `height_m,i0,i1,...`.
std::vector<IdentitySample> identityTableFromCsv(const std::string& text);
std::vector<IdentitySample> readIdentityTable(const std::filesystem::path& path);
std::string identityTableToCsv(const std::vector<IdentitySample>& samples);

std::string regressorToJson(const IdentityRegressor& reg);
IdentityRegressor regressorFromJson(const std::string& text);

} // namespace egofuse
