#include "egofuse/solver.h"

#include "egofuse/error.h"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

namespace egofuse {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double huberCost(double s, double delta) {
  if (delta <= 0.0 || s <= delta * delta) {
    return s;
  }
  return 2.0 * delta * std::sqrt(s) - delta * delta;
}

double pseudoHuberCost(double s, double delta) {
  if (delta <= 0.0) {
    return s;
  }
  // Written without the cancellation in sqrt(s + delta^2) - delta.
  return 2.0 * delta * s / (std::sqrt(s + delta * delta) + delta);
}

double blockCost(const ResidualBlock& block) {
  if (block.pseudoHuberDelta > 0.0) {
    return pseudoHuberCost(block.residual.squaredNorm(), block.pseudoHuberDelta);
  }
  return huberCost(block.residual.squaredNorm(), block.huberDelta);
}

double evaluateCost(const StructuredProblem& problem, std::map<int, double>* perTerm) {
  std::vector<ResidualBlock> blocks;
  problem.evaluate(blocks, false);
  double total = 0.0;
  for (const auto& b : blocks) {
    const double c = blockCost(b);
    total += c;
    if (perTerm != nullptr) {
      (*perTerm)[b.term] += c;
    }
  }
  return total;
}

namespace {

struct NormalEquations {
  int frames = 0;
  int n = 0;
  int g = 0;
  int bandwidth = 1;
  std::vector<MatrixXd> diag;
  std::vector<std::vector<MatrixXd>> upper; // upper[b][f]: frame f to f + b + 1
  std::vector<MatrixXd> coupling;
  MatrixXd global;
  VectorXd gradient;

  void reset(int f, int dim, int gdim, int band) {
    frames = f;
    n = dim;
    g = gdim;
    bandwidth = std::max(band, 1);
    diag.assign(f, MatrixXd::Zero(dim, dim));
    upper.assign(bandwidth, {});
    for (int b = 0; b < bandwidth; ++b) {
      upper[b].assign(std::max(f - b - 1, 0), MatrixXd::Zero(dim, dim));
    }
    coupling.assign(gdim > 0 ? f : 0, MatrixXd::Zero(dim, gdim));
    global = MatrixXd::Zero(gdim, gdim);
    gradient = VectorXd::Zero(static_cast<Eigen::Index>(f) * dim + gdim);
  }

  // Upper-triangle entry H(row, col) += v with row <= col.
  void add(int row, int col, double v) {
    const int globalStart = frames * n;
    const bool colGlobal = col >= globalStart;
    if (row >= globalStart) {
      global(row - globalStart, col - globalStart) += v;
      return;
    }
    const int fr = row / n;
    const int ir = row % n;
    if (colGlobal) {
      coupling[fr](ir, col - globalStart) += v;
      return;
    }
    const int fc = col / n;
    const int ic = col % n;
    if (fr == fc) {
      diag[fr](ir, ic) += v;
    } else if (fc > fr) {
      upper[fc - fr - 1][fr](ir, ic) += v;
    }
    // fc < fr is the transpose of an upper entry; skipped.
  }
};

} // namespace

bool solveBandedArrow(
    const std::vector<MatrixXd>& diag,
    const std::vector<std::vector<MatrixXd>>& upper,
    const std::vector<MatrixXd>& coupling,
    const MatrixXd& global,
    const VectorXd& rhs,
    VectorXd& solution) {
  const int frames = static_cast<int>(diag.size());
  const int n = frames > 0 ? static_cast<int>(diag[0].rows()) : 0;
  const int g = static_cast<int>(global.rows());
  const int band = std::max(static_cast<int>(upper.size()), 1);
  const int cols = 1 + g;

  // Block Cholesky H = L L^T with L block-lower-banded; lower[b][f] = L(f + b + 1, f).
  std::vector<Eigen::LLT<MatrixXd>> factors(frames);
  std::vector<std::vector<MatrixXd>> lower(band, std::vector<MatrixXd>(frames));
  auto coupled = [&](int b, int f) -> const MatrixXd* {
    if (b >= static_cast<int>(upper.size()) || f >= static_cast<int>(upper[b].size())) {
      return nullptr;
    }
    return &upper[b][f];
  };
  for (int f = 0; f < frames; ++f) {
    MatrixXd s = diag[f];
    for (int j = std::max(0, f - band); j < f; ++j) {
      const MatrixXd& l = lower[f - j - 1][j];
      s.noalias() -= l * l.transpose();
    }
    factors[f].compute(s);
    if (factors[f].info() != Eigen::Success) {
      return false;
    }
    const auto lff = factors[f].matrixL();
    for (int i = f + 1; i <= std::min(f + band, frames - 1); ++i) {
      MatrixXd t;
      if (const MatrixXd* h = coupled(i - f - 1, f)) {
        t = h->transpose();
      } else {
        t = MatrixXd::Zero(n, n);
      }
      for (int j = std::max(0, i - band); j < f; ++j) {
        t.noalias() -= lower[i - j - 1][j] * lower[f - j - 1][j].transpose();
      }
      // L(i, f) = T L(f, f)^{-T}
      MatrixXd lt = lff.solve(t.transpose()).transpose();
      lower[i - f - 1][f] = std::move(lt);
    }
  }
  // Forward: L Y = [rhs, C].
  std::vector<MatrixXd> y(frames);
  for (int f = 0; f < frames; ++f) {
    MatrixXd r(n, cols);
    r.col(0) = rhs.segment(static_cast<Eigen::Index>(f) * n, n);
    if (g > 0) {
      r.rightCols(g) = coupling[f];
    }
    for (int j = std::max(0, f - band); j < f; ++j) {
      r.noalias() -= lower[f - j - 1][j] * y[j];
    }
    y[f] = factors[f].matrixL().solve(r);
  }
  // Backward: L^T X = Y; x[f] holds [H^{-1} a, H^{-1} C] restricted to frame f.
  std::vector<MatrixXd> x(frames);
  for (int f = frames - 1; f >= 0; --f) {
    MatrixXd r = y[f];
    for (int i = f + 1; i <= std::min(f + band, frames - 1); ++i) {
      r.noalias() -= lower[i - f - 1][f].transpose() * x[i];
    }
    x[f] = factors[f].matrixU().solve(r);
  }
  solution.resize(static_cast<Eigen::Index>(frames) * n + g);
  if (g == 0) {
    for (int f = 0; f < frames; ++f) {
      solution.segment(static_cast<Eigen::Index>(f) * n, n) = x[f].col(0);
    }
    return true;
  }
  MatrixXd schur = global;
  VectorXd rg = rhs.tail(g);
  for (int f = 0; f < frames; ++f) {
    schur.noalias() -= coupling[f].transpose() * x[f].rightCols(g);
    rg.noalias() -= coupling[f].transpose() * x[f].col(0);
  }
  Eigen::LLT<MatrixXd> schurFactor(schur);
  if (schurFactor.info() != Eigen::Success) {
    return false;
  }
  const VectorXd yg = schurFactor.solve(rg);
  for (int f = 0; f < frames; ++f) {
    solution.segment(static_cast<Eigen::Index>(f) * n, n) = x[f].col(0) - x[f].rightCols(g) * yg;
  }
  solution.tail(g) = yg;
  return true;
}

bool solveBandedArrowReduced(
    const std::vector<MatrixXd>& diag,
    const std::vector<std::vector<MatrixXd>>& upper,
    const std::vector<MatrixXd>& coupling,
    const MatrixXd& global,
    const VectorXd& rhs,
    const std::vector<int>& interface,
    VectorXd& solution) {
  const int frames = static_cast<int>(diag.size());
  const int n = frames > 0 ? static_cast<int>(diag[0].rows()) : 0;
  const int g = static_cast<int>(global.rows());
  std::vector<int> local;
  {
    std::vector<char> isInterface(static_cast<std::size_t>(n), 0);
    for (int i : interface) {
      EGOFUSE_CHECK(i >= 0 && i < n, ErrorCode::OutOfRange, "interface index out of range");
      isInterface[static_cast<std::size_t>(i)] = 1;
    }
    for (int i = 0; i < n; ++i) {
      if (isInterface[static_cast<std::size_t>(i)] == 0) {
        local.push_back(i);
      }
    }
  }
  const auto ni = static_cast<Eigen::Index>(interface.size());
  const auto nl = static_cast<Eigen::Index>(local.size());
  const Eigen::Index rcols = ni + 1 + g;

  // Per frame: Z = A_LL^{-1} [A_LI, r_L, C_L]; the interface system is the
  // Schur complement of A_LL.
  std::vector<MatrixXd> z(static_cast<std::size_t>(frames));
  std::vector<MatrixXd> rdiag(static_cast<std::size_t>(frames));
  std::vector<MatrixXd> rcoupling(g > 0 ? static_cast<std::size_t>(frames) : 0);
  VectorXd rrhs(static_cast<Eigen::Index>(frames) * ni + g);
  for (int f = 0; f < frames; ++f) {
    const auto uf = static_cast<std::size_t>(f);
    const MatrixXd& a = diag[uf];
    const auto base = static_cast<Eigen::Index>(f) * n;
    MatrixXd all = a(local, local);
    Eigen::LLT<MatrixXd> llt(all);
    if (nl > 0 && llt.info() != Eigen::Success) {
      return false;
    }
    MatrixXd b(nl, rcols);
    b.leftCols(ni) = a(local, interface);
    for (Eigen::Index i = 0; i < nl; ++i) {
      b(i, ni) = rhs[base + local[static_cast<std::size_t>(i)]];
    }
    if (g > 0) {
      b.rightCols(g) = coupling[uf](local, Eigen::indexing::all);
    }
    z[uf] = nl > 0 ? MatrixXd(llt.solve(b)) : MatrixXd(0, rcols);
    const MatrixXd ali = a(local, interface);
    rdiag[uf] = a(interface, interface);
    rdiag[uf].noalias() -= ali.transpose() * z[uf].leftCols(ni);
    for (Eigen::Index i = 0; i < ni; ++i) {
      rrhs[static_cast<Eigen::Index>(f) * ni + i] = rhs[base + interface[static_cast<std::size_t>(i)]];
    }
    rrhs.segment(static_cast<Eigen::Index>(f) * ni, ni).noalias() -= ali.transpose() * z[uf].col(ni);
    if (g > 0) {
      rcoupling[uf] = coupling[uf](interface, Eigen::indexing::all);
      rcoupling[uf].noalias() -= ali.transpose() * z[uf].rightCols(g);
    }
  }
  MatrixXd rglobal = global;
  if (g > 0) {
    rrhs.tail(g) = rhs.tail(g);
    for (int f = 0; f < frames; ++f) {
      const auto uf = static_cast<std::size_t>(f);
      const auto cl = coupling[uf](local, Eigen::indexing::all);
      rglobal.noalias() -= MatrixXd(cl).transpose() * z[uf].rightCols(g);
      rrhs.tail(g).noalias() -= MatrixXd(cl).transpose() * z[uf].col(ni);
    }
  }
  std::vector<std::vector<MatrixXd>> rupper(upper.size());
  for (std::size_t bnd = 0; bnd < upper.size(); ++bnd) {
    rupper[bnd].reserve(upper[bnd].size());
    for (const auto& u : upper[bnd]) {
      rupper[bnd].push_back(u(interface, interface));
    }
  }
  VectorXd reduced;
  if (!solveBandedArrow(rdiag, rupper, rcoupling, rglobal, rrhs, reduced)) {
    return false;
  }
  solution.resize(static_cast<Eigen::Index>(frames) * n + g);
  const VectorXd yg = reduced.tail(g);
  for (int f = 0; f < frames; ++f) {
    const auto uf = static_cast<std::size_t>(f);
    const auto base = static_cast<Eigen::Index>(f) * n;
    const VectorXd xi = reduced.segment(static_cast<Eigen::Index>(f) * ni, ni);
    VectorXd xl = z[uf].col(ni) - z[uf].leftCols(ni) * xi;
    if (g > 0) {
      xl.noalias() -= z[uf].rightCols(g) * yg;
    }
    for (Eigen::Index i = 0; i < ni; ++i) {
      solution[base + interface[static_cast<std::size_t>(i)]] = xi[i];
    }
    for (Eigen::Index i = 0; i < nl; ++i) {
      solution[base + local[static_cast<std::size_t>(i)]] = xl[i];
    }
  }
  solution.tail(g) = yg;
  return true;
}

namespace {

struct BandInfo {
  int band = 1;
  std::vector<int> interface; // frame-local indices used by any cross-frame block
};

// Widest frame span of any block (global columns excluded) and the local
// indices through which frames couple.
BandInfo frameBandInfo(const std::vector<ResidualBlock>& blocks, int frames, int n) {
  const int globalStart = frames * n;
  BandInfo info;
  std::vector<char> coupled(static_cast<std::size_t>(n), 0);
  for (const auto& b : blocks) {
    int lo = frames;
    int hi = -1;
    for (int c : b.cols) {
      if (c < globalStart) {
        lo = std::min(lo, c / n);
        hi = std::max(hi, c / n);
      }
    }
    info.band = std::max(info.band, hi - lo);
    if (hi > lo) {
      for (int c : b.cols) {
        if (c < globalStart) {
          coupled[static_cast<std::size_t>(c % n)] = 1;
        }
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    if (coupled[static_cast<std::size_t>(i)] != 0) {
      info.interface.push_back(i);
    }
  }
  return info;
}

void assemble(const std::vector<ResidualBlock>& blocks, NormalEquations& ne) {
  std::vector<int> nz;
  for (const auto& b : blocks) {
    const auto k = static_cast<int>(b.cols.size());
    if (k == 0 || b.residual.size() == 0) {
      continue;
    }
    double w = 1.0;
    if (b.pseudoHuberDelta > 0.0) {
      const double d = b.pseudoHuberDelta;
      w = d / std::sqrt(b.residual.squaredNorm() + d * d);
    } else if (b.huberDelta > 0.0) {
      const double s = b.residual.squaredNorm();
      if (s > b.huberDelta * b.huberDelta) {
        w = b.huberDelta / std::sqrt(s);
      }
    }
    // Row by row over the nonzero entries: prior and limit Jacobians are
    // diagonal, so a dense J^T J would dominate the assembly.
    for (Eigen::Index r = 0; r < b.jacobian.rows(); ++r) {
      nz.clear();
      for (int a = 0; a < k; ++a) {
        if (b.jacobian(r, a) != 0.0) {
          nz.push_back(a);
        }
      }
      const double wr = w * b.residual[r];
      for (int a : nz) {
        const double ja = w * b.jacobian(r, a);
        const int ra = b.cols[a];
        ne.gradient[ra] += b.jacobian(r, a) * wr;
        for (int c : nz) {
          const int rc = b.cols[c];
          if (ra <= rc) {
            ne.add(ra, rc, ja * b.jacobian(r, c));
          }
        }
      }
    }
  }
  // Mirror the upper triangle of each diagonal block.
  for (auto& d : ne.diag) {
    d = d.selfadjointView<Eigen::Upper>();
  }
  ne.global = ne.global.selfadjointView<Eigen::Upper>();
}

} // namespace

LmSummary solveLevenbergMarquardt(StructuredProblem& problem, const LmOptions& options) {
  const int frames = problem.frameCount();
  const int n = problem.frameDim();
  const int g = problem.globalDim();
  LmSummary summary;

  std::vector<ResidualBlock> blocks;
  problem.evaluate(blocks, true);
  double cost = 0.0;
  for (const auto& b : blocks) {
    cost += blockCost(b);
  }
  summary.initialCost = cost;
  summary.acceptedCosts.push_back(cost);

  double mu = options.initialDamping;
  double nu = 2.0;
  NormalEquations ne;
  for (int iter = 0; iter < options.maxIterations; ++iter) {
    summary.iterations = iter + 1;
    const BandInfo band = frameBandInfo(blocks, frames, n);
    ne.reset(frames, n, g, band.band);
    assemble(blocks, ne);
    if (ne.gradient.lpNorm<Eigen::Infinity>() <= options.gradientTolerance) {
      summary.converged = true;
      break;
    }

    bool accepted = false;
    bool stepTiny = false;
    double newCost = cost;
    while (!accepted) {
      std::vector<MatrixXd> diag = ne.diag;
      MatrixXd global = ne.global;
      VectorXd scale(static_cast<Eigen::Index>(frames) * n + g);
      for (int f = 0; f < frames; ++f) {
        for (int i = 0; i < n; ++i) {
          const double d = std::max(diag[f](i, i), options.minDiagonal);
          scale[static_cast<Eigen::Index>(f) * n + i] = d;
          diag[f](i, i) += mu * d;
        }
      }
      for (int i = 0; i < g; ++i) {
        const double d = std::max(global(i, i), options.minDiagonal);
        scale[static_cast<Eigen::Index>(frames) * n + i] = d;
        global(i, i) += mu * d;
      }
      VectorXd delta;
      const VectorXd rhs = -ne.gradient;
      const bool solved =
          static_cast<int>(band.interface.size()) < n
              ? solveBandedArrowReduced(
                    diag, ne.upper, ne.coupling, global, rhs, band.interface, delta)
              : solveBandedArrow(diag, ne.upper, ne.coupling, global, rhs, delta);
      if (!solved) {
        mu *= nu;
        nu *= 2.0;
        ++summary.rejectedSteps;
        if (mu > 1e16) {
          break;
        }
        continue;
      }
      if (delta.norm() <= options.stepTolerance) {
        stepTiny = true;
        break;
      }
      const std::any saved = problem.saveState();
      problem.applyIncrement(delta);
      newCost = evaluateCost(problem);
      const double predicted =
          -ne.gradient.dot(delta) + mu * delta.dot(scale.cwiseProduct(delta));
      if (std::isfinite(newCost) && newCost < cost) {
        accepted = true;
        const double rho = predicted > 0.0 ? (cost - newCost) / predicted : 0.0;
        mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
        nu = 2.0;
      } else {
        problem.restoreState(saved);
        ++summary.rejectedSteps;
        mu *= nu;
        nu *= 2.0;
        if (mu > 1e16) {
          break;
        }
      }
    }
    if (stepTiny) {
      summary.converged = true;
      break;
    }
    if (!accepted) {
      // Damping exhausted without progress: at a (numerical) minimum.
      summary.converged = true;
      break;
    }
    const double decrease = cost - newCost;
    cost = newCost;
    summary.acceptedCosts.push_back(cost);
    problem.evaluate(blocks, true);
    if (decrease <= options.relativeCostTolerance * std::max(cost, 1e-300)) {
      summary.converged = true;
      break;
    }
  }
  summary.finalCost = evaluateCost(problem, &summary.termCosts);
  return summary;
}

} // namespace egofuse
