#include "egofuse/ident.h"

#include "egofuse/error.h"
#include "egofuse/io.h"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <sstream>

namespace egofuse {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void checkSamples(const std::vector<IdentitySample>& samples) {
  EGOFUSE_CHECK(
      samples.size() >= 3,
      ErrorCode::InvalidArgument,
      "identity regression needs at least 3 samples, got " + std::to_string(samples.size()));
  const auto dim = samples.front().identity.size();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EGOFUSE_CHECK(
        samples[i].identity.size() == dim,
        ErrorCode::DimensionMismatch,
        "sample " + std::to_string(i) + " identity length differs from sample 0");
    EGOFUSE_CHECK(
        std::isfinite(samples[i].heightM) && samples[i].identity.allFinite(),
        ErrorCode::InvalidArgument,
        "sample " + std::to_string(i) + " is not finite");
  }
}

struct Design {
  MatrixXd x; // n x 2
  MatrixXd y; // n x identityDim
};

Design makeDesign(const std::vector<IdentitySample>& samples) {
  const auto n = static_cast<Eigen::Index>(samples.size());
  Design d{MatrixXd(n, 2), MatrixXd(n, samples.front().identity.size())};
  for (Eigen::Index i = 0; i < n; ++i) {
    d.x(i, 0) = samples[i].heightM;
    d.x(i, 1) = 1.0;
    d.y.row(i) = samples[i].identity.transpose();
  }
  return d;
}

// Inverse of X^T X + diag(lambda, 0), or throws DegenerateDesign.
Eigen::Matrix2d regularizedInverse(const MatrixXd& x, double lambda) {
  Eigen::Matrix2d a = x.transpose() * x;
  a(0, 0) += lambda;
  const double det = a.determinant();
  const double scale = std::abs(a(0, 0) * a(1, 1)) + std::abs(a(0, 1) * a(1, 0));
  EGOFUSE_CHECK(
      std::abs(det) > 1e-12 * scale,
      ErrorCode::DegenerateDesign,
      "regularized normal matrix is singular at lambda " + formatDouble(lambda));
  return a.inverse();
}

} // namespace

std::vector<double> defaultLambdaGrid() {
  std::vector<double> grid;
  for (int k = 0; k <= 12; ++k) {
    grid.push_back(std::pow(10.0, -4.0 + 0.5 * k));
  }
  return grid;
}

MatrixXd fitRidge(const std::vector<IdentitySample>& samples, double lambda) {
  checkSamples(samples);
  EGOFUSE_CHECK(lambda >= 0.0, ErrorCode::InvalidArgument, "ridge lambda must be >= 0");
  const Design d = makeDesign(samples);
  const Eigen::Matrix2d inv = regularizedInverse(d.x, lambda);
  return (inv * d.x.transpose() * d.y).transpose();
}

double ridgeLoocvMse(const std::vector<IdentitySample>& samples, double lambda) {
  checkSamples(samples);
  EGOFUSE_CHECK(lambda >= 0.0, ErrorCode::InvalidArgument, "ridge lambda must be >= 0");
  const Design d = makeDesign(samples);
  const Eigen::Matrix2d inv = regularizedInverse(d.x, lambda);
  const MatrixXd beta = inv * d.x.transpose() * d.y;
  const MatrixXd resid = d.y - d.x * beta;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    const Eigen::RowVector2d xi = d.x.row(i);
    const double leverage = xi * inv * xi.transpose();
    EGOFUSE_CHECK(
        1.0 - leverage > 1e-12,
        ErrorCode::DegenerateDesign,
        "sample " + std::to_string(i) + " has unit leverage at lambda " + formatDouble(lambda));
    sum += (resid.row(i) / (1.0 - leverage)).squaredNorm();
  }
  return sum / static_cast<double>(d.x.rows() * d.y.cols());
}

IdentityRegressor fitRidgeLoocv(
    const std::vector<IdentitySample>& samples, const std::vector<double>& lambdaGrid) {
  checkSamples(samples);
  EGOFUSE_CHECK(!lambdaGrid.empty(), ErrorCode::InvalidArgument, "lambda grid is empty");
  IdentityRegressor reg;
  reg.sampleCount = static_cast<int>(samples.size());
  double best = std::numeric_limits<double>::infinity();
  bool found = false;
  for (double lambda : lambdaGrid) {
    EGOFUSE_CHECK(
        lambda >= 0.0 && std::isfinite(lambda),
        ErrorCode::InvalidArgument,
        "lambda grid entries must be finite and >= 0");
    LambdaScore score{lambda, std::nullopt};
    try {
      score.loocvMse = ridgeLoocvMse(samples, lambda);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateDesign) {
        throw;
      }
    }
    if (score.loocvMse) {
      const double err = *score.loocvMse;
      if (!found || err < best || (err == best && lambda > reg.ridgeLambda)) {
        best = err;
        reg.ridgeLambda = lambda;
        found = true;
      }
    }
    reg.scores.push_back(score);
  }
  EGOFUSE_CHECK(
      found,
      ErrorCode::DegenerateDesign,
      "ridge design is singular for every lambda in the grid");
  reg.loocvMse = best;
  reg.weights = fitRidge(samples, reg.ridgeLambda);
  return reg;
}

VectorXd predictIdentity(const IdentityRegressor& reg, double heightM) {
  EGOFUSE_CHECK(
      heightM > 0.0 && std::isfinite(heightM),
      ErrorCode::NonPositiveHeight,
      "height must be > 0, got " + formatDouble(heightM));
  return reg.weights.col(0) * heightM + reg.weights.col(1);
}

std::vector<IdentitySample> identityTableFromCsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  EGOFUSE_CHECK(
      static_cast<bool>(std::getline(in, line)), ErrorCode::ParseError, "empty identity table");
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  const auto header = io::splitCsvLine(line);
  EGOFUSE_CHECK(
      header.size() >= 2 && header[0] == "height_m",
      ErrorCode::ParseError,
      "identity table header must start with height_m");
  std::vector<IdentitySample> out;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") {
      continue;
    }
    const auto cells = io::splitCsvLine(line);
    const std::string where = "identity table row " + std::to_string(row);
    EGOFUSE_CHECK(
        cells.size() == header.size(), ErrorCode::ParseError, where + ": wrong column count");
    IdentitySample s;
    s.heightM = io::parseDouble(cells[0], where);
    s.identity.resize(static_cast<Eigen::Index>(cells.size()) - 1);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      s.identity[static_cast<Eigen::Index>(c) - 1] = io::parseDouble(cells[c], where);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<IdentitySample> readIdentityTable(const std::filesystem::path& path) {
  try {
    return identityTableFromCsv(io::readText(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) {
      throw;
    }
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::string identityTableToCsv(const std::vector<IdentitySample>& samples) {
  EGOFUSE_CHECK(!samples.empty(), ErrorCode::EmptyInput, "no identity samples to write");
  std::string out = "height_m";
  for (Eigen::Index g = 0; g < samples.front().identity.size(); ++g) {
    out += ",i" + std::to_string(g);
  }
  out += '\n';
  for (const auto& s : samples) {
    out += formatDouble(s.heightM);
    for (Eigen::Index g = 0; g < s.identity.size(); ++g) {
      out += ',' + formatDouble(s.identity[g]);
    }
    out += '\n';
  }
  return out;
}

std::string regressorToJson(const IdentityRegressor& reg) {
  io::Json j;
  j["input"] = "height_m";
  j["ridge_lambda"] = reg.ridgeLambda;
  j["sample_count"] = reg.sampleCount;
  j["loocv_mse"] = reg.loocvMse;
  io::Json w = io::Json::array();
  for (Eigen::Index r = 0; r < reg.weights.rows(); ++r) {
    w.push_back(io::Json::array({reg.weights(r, 0), reg.weights(r, 1)}));
  }
  j["weights"] = w;
  io::Json scores = io::Json::array();
  for (const auto& s : reg.scores) {
    io::Json e = {{"lambda", s.lambda}};
    e["loocv_mse"] = s.loocvMse ? io::Json(*s.loocvMse) : io::Json(nullptr);
    scores.push_back(e);
  }
  j["scores"] = scores;
  return j.dump(1) + "\n";
}

IdentityRegressor regressorFromJson(const std::string& text) {
  IdentityRegressor reg;
  try {
    const auto j = io::Json::parse(text);
    reg.ridgeLambda = j.at("ridge_lambda").get<double>();
    reg.sampleCount = j.at("sample_count").get<int>();
    reg.loocvMse = j.at("loocv_mse").get<double>();
    const auto& w = j.at("weights");
    reg.weights.resize(static_cast<Eigen::Index>(w.size()), 2);
    for (std::size_t r = 0; r < w.size(); ++r) {
      EGOFUSE_CHECK(
          w[r].is_array() && w[r].size() == 2,
          ErrorCode::ParseError,
          "regressor weight rows must be [slope, bias]");
      reg.weights(static_cast<Eigen::Index>(r), 0) = w[r][0].get<double>();
      reg.weights(static_cast<Eigen::Index>(r), 1) = w[r][1].get<double>();
    }
    for (const auto& e : j.value("scores", io::Json::array())) {
      LambdaScore s{e.at("lambda").get<double>(), std::nullopt};
      if (!e.at("loocv_mse").is_null()) {
        s.loocvMse = e.at("loocv_mse").get<double>();
      }
      reg.scores.push_back(s);
    }
  } catch (const io::Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("regressor: ") + e.what());
  }
  EGOFUSE_CHECK(
      reg.ridgeLambda >= 0.0, ErrorCode::InvariantViolation, "regressor lambda must be >= 0");
  return reg;
}

} // namespace egofuse
