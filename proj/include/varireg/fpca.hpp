#ifndef VARIREG_FPCA_HPP
#define VARIREG_FPCA_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "varireg/curve.hpp"
#include "varireg/error.hpp"

namespace varireg {

struct EigenDecomposition {
  std::vector<double> grid;
  std::vector<double> eigenvalues;                 // nonincreasing
  std::vector<std::vector<double>> eigenfunctions; // unit L2 norm on `grid`
  std::vector<double> explained_ratios;            // eigenvalue / trace
  double trace = 0.0;
  bool trace_zero = false;
};

namespace detail {

inline const std::vector<double>& common_grid(std::span<const DiscreteCurve> curves) {
  if (curves.empty()) throw Error(ErrorCode::EmptySample, "no curves");
  const auto& g = curves.front().grid();
  for (std::size_t i = 1; i < curves.size(); ++i)
    if (!same_grid(curves[i].grid(), g))
      throw Error(ErrorCode::GridMismatch, "curves are not on a common grid", i);
  return g;
}

}  // namespace detail

inline DiscreteCurve cross_sectional_mean(std::span<const DiscreteCurve> curves) {
  const auto& g = detail::common_grid(curves);
  std::vector<double> m(g.size(), 0.0);
  for (const auto& c : curves)
    for (std::size_t j = 0; j < g.size(); ++j) m[j] += c.values()[j];
  for (double& x : m) x /= static_cast<double>(curves.size());
  return DiscreteCurve(g, std::move(m));
}

/// Empirical covariance kernel on the common grid, divisor n.
inline Eigen::MatrixXd covariance_matrix(std::span<const DiscreteCurve> curves) {
  const auto& g = detail::common_grid(curves);
  if (curves.size() < 2) throw Error(ErrorCode::EmptySample, "covariance needs at least two curves");
  const auto r = static_cast<Eigen::Index>(g.size());
  const auto n = static_cast<Eigen::Index>(curves.size());
  Eigen::MatrixXd X(n, r);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < r; ++j) X(i, j) = curves[static_cast<std::size_t>(i)].values()[static_cast<std::size_t>(j)];
  const Eigen::RowVectorXd mu = X.colwise().mean();
  X.rowwise() -= mu;
  Eigen::MatrixXd K = (X.transpose() * X) / static_cast<double>(n);
  return 0.5 * (K + K.transpose());
}

/// Leading m eigenpairs of the integral operator with kernel K under
/// trapezoid quadrature on `grid`. Eigenfunctions satisfy int phi >= 0, or,
/// when that integral vanishes, a positive largest-magnitude coordinate.
inline EigenDecomposition leading_eigenpairs(const Eigen::MatrixXd& K, std::span<const double> grid, std::size_t m) {
  const auto r = static_cast<Eigen::Index>(grid.size());
  if (K.rows() != r || K.cols() != r) throw Error(ErrorCode::GridMismatch, "kernel size does not match grid");
  if (m == 0) throw Error(ErrorCode::InvalidConfig, "need at least one eigenpair");
  const double kmax = K.cwiseAbs().maxCoeff();
  if ((K - K.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(kmax, 1e-300))
    throw Error(ErrorCode::NonSymmetric, "covariance kernel is not symmetric");

  const std::vector<double> w = trapezoid_weights(grid);
  Eigen::VectorXd sw(r);
  for (Eigen::Index j = 0; j < r; ++j) sw(j) = std::sqrt(w[static_cast<std::size_t>(j)]);
  const Eigen::MatrixXd A = sw.asDiagonal() * K * sw.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (A + A.transpose()));

  EigenDecomposition out;
  out.grid.assign(grid.begin(), grid.end());
  out.trace = 0.0;
  for (Eigen::Index j = 0; j < r; ++j) out.trace += w[static_cast<std::size_t>(j)] * K(j, j);
  out.trace_zero = !(out.trace > 1e-300);
  const std::size_t take = std::min<std::size_t>(m, grid.size());
  for (std::size_t k = 0; k < take; ++k) {
    const Eigen::Index col = r - 1 - static_cast<Eigen::Index>(k);
    const double lambda = std::max(0.0, es.eigenvalues()(col));
    std::vector<double> phi(grid.size());
    for (Eigen::Index j = 0; j < r; ++j) phi[static_cast<std::size_t>(j)] = es.eigenvectors()(j, col) / sw(j);
    double integral = 0.0;
    for (std::size_t j = 0; j < phi.size(); ++j) integral += w[j] * phi[j];
    double sign = 1.0;
    if (std::abs(integral) >= 1e-10) {
      sign = integral < 0.0 ? -1.0 : 1.0;
    } else {
      std::size_t big = 0;
      for (std::size_t j = 1; j < phi.size(); ++j)
        if (std::abs(phi[j]) > std::abs(phi[big])) big = j;
      sign = phi[big] < 0.0 ? -1.0 : 1.0;
    }
    for (double& x : phi) x *= sign;
    out.eigenvalues.push_back(lambda);
    out.eigenfunctions.push_back(std::move(phi));
    out.explained_ratios.push_back(out.trace_zero ? 0.0 : lambda / out.trace);
  }
  return out;
}

/// Trapezoid inner products <X_i, phi>.
inline std::vector<double> scores(std::span<const DiscreteCurve> curves, std::span<const double> eigenfunction,
                                  std::span<const double> grid) {
  const std::vector<double> w = trapezoid_weights(grid);
  if (eigenfunction.size() != grid.size()) throw Error(ErrorCode::GridMismatch, "eigenfunction/grid size mismatch");
  std::vector<double> s(curves.size(), 0.0);
  for (std::size_t i = 0; i < curves.size(); ++i) {
    if (!same_grid(curves[i].grid(), grid)) throw Error(ErrorCode::GridMismatch, "curve not on the analysis grid", i);
    for (std::size_t j = 0; j < grid.size(); ++j) s[i] += w[j] * curves[i].values()[j] * eigenfunction[j];
  }
  return s;
}

struct FpcaResult {
  DiscreteCurve mean;
  EigenDecomposition eigen;
  std::vector<std::vector<double>> scores;  // scores[k][i]
};

/// Mean, covariance eigenpairs and scores of curves on a common grid. Grids
/// above `cap` points are thinned before the dense eigen solve.
inline FpcaResult analyze(std::span<const DiscreteCurve> curves, std::size_t m, std::size_t cap = 2048) {
  const auto& g = detail::common_grid(curves);
  std::vector<DiscreteCurve> work;
  std::span<const DiscreteCurve> use = curves;
  if (g.size() > cap) {
    const auto idx = thin_indices(g.size(), cap);
    for (const auto& c : curves) {
      std::vector<double> tg, tv;
      for (std::size_t j : idx) {
        tg.push_back(c.grid()[j]);
        tv.push_back(c.values()[j]);
      }
      work.emplace_back(std::move(tg), std::move(tv));
    }
    use = work;
  }
  FpcaResult out;
  out.mean = cross_sectional_mean(use);
  out.eigen = leading_eigenpairs(covariance_matrix(use), use.front().grid(), m);
  for (const auto& phi : out.eigen.eigenfunctions) out.scores.push_back(scores(use, phi, use.front().grid()));
  return out;
}

}  // namespace varireg

#endif  // VARIREG_FPCA_HPP
