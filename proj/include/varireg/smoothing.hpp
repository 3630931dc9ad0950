#ifndef VARIREG_SMOOTHING_HPP
#define VARIREG_SMOOTHING_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "varireg/curve.hpp"
#include "varireg/error.hpp"
#include "varireg/warp_map.hpp"

namespace varireg {

/// Epanechnikov kernel 0.75 (1 - u^2) on [-1, 1].
struct Epanechnikov {
  static constexpr double support = 1.0;
  constexpr double operator()(double u) const noexcept {
    return (u > -1.0 && u < 1.0) ? 0.75 * (1.0 - u * u) : 0.0;
  }
};

struct SmootherConfig {
  double bandwidth = 0.05;
  int degree = 0;
  int deriv_order = 0;

  void validate() const {
    if (!(bandwidth > 0.0) || bandwidth > 1.0)
      throw Error(ErrorCode::InvalidConfig, "bandwidth must lie in (0, 1]");
    if (degree < 0 || degree > 2) throw Error(ErrorCode::InvalidConfig, "degree must be 0, 1 or 2");
    if (deriv_order < 0 || deriv_order > 1)
      throw Error(ErrorCode::InvalidConfig, "deriv_order must be 0 or 1");
    if (deriv_order > 0 && deriv_order >= degree)
      throw Error(ErrorCode::InvalidConfig, "deriv_order must be below the polynomial degree");
  }
};

namespace detail {

// Index range of grid points strictly inside (t - h, t + h).
inline std::pair<std::size_t, std::size_t> window(std::span<const double> g, double t, double h) {
  auto lo = std::upper_bound(g.begin(), g.end(), t - h);
  auto hi = std::lower_bound(lo, g.end(), t + h);
  return {static_cast<std::size_t>(lo - g.begin()), static_cast<std::size_t>(hi - g.begin())};
}

// Weighted local polynomial fit at t, optionally skipping index `skip`.
// Returns coefficient `deriv` of the fit in the unscaled variable (s - t),
// multiplied by deriv!. Throws SingularFit when the window is underdetermined.
inline double local_fit(std::span<const double> g, std::span<const double> v, double t, double h,
                        int degree, int deriv, std::size_t skip = std::numeric_limits<std::size_t>::max()) {
  constexpr Epanechnikov k;
  const auto [lo, hi] = window(g, t, h);
  const int p = degree + 1;
  std::array<double, 5> S{};
  std::array<double, 3> T{};
  std::size_t used = 0;
  for (std::size_t j = lo; j < hi; ++j) {
    if (j == skip) continue;
    const double x = (g[j] - t) / h;
    const double w = k(x);
    if (w <= 0.0) continue;
    ++used;
    double xp = w;
    for (int m = 0; m < 2 * degree + 1; ++m) {
      S[m] += xp;
      if (m < p) T[m] += xp * v[j];
      xp *= x;
    }
  }
  if (used < static_cast<std::size_t>(p))
    throw Error(ErrorCode::SingularFit, "too few points in the smoothing window", std::nullopt, t);

  // Gaussian elimination with partial pivoting on the (p x p) moment system.
  double A[3][4];
  for (int r = 0; r < p; ++r) {
    for (int c = 0; c < p; ++c) A[r][c] = S[r + c];
    A[r][p] = T[r];
  }
  const double scale = S[0];
  for (int c = 0; c < p; ++c) {
    int piv = c;
    for (int r = c + 1; r < p; ++r)
      if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
    if (std::abs(A[piv][c]) <= 1e-12 * scale)
      throw Error(ErrorCode::SingularFit, "degenerate smoothing window", std::nullopt, t);
    if (piv != c)
      for (int q = 0; q <= p; ++q) std::swap(A[c][q], A[piv][q]);
    for (int r = c + 1; r < p; ++r) {
      const double f = A[r][c] / A[c][c];
      for (int q = c; q <= p; ++q) A[r][q] -= f * A[c][q];
    }
  }
  double beta[3] = {0, 0, 0};
  for (int r = p - 1; r >= 0; --r) {
    double s = A[r][p];
    for (int q = r + 1; q < p; ++q) s -= A[r][q] * beta[q];
    beta[r] = s / A[r][r];
  }
  // beta is in the scaled variable x = (s - t)/h; deriv! * beta_deriv / h^deriv.
  return deriv == 0 ? beta[0] : beta[1] / h;
}

}  // namespace detail

/// Nadaraya-Watson (local constant) regression of the curve at each point.
inline std::vector<double> nadaraya_watson(const DiscreteCurve& curve, double bandwidth,
                                           std::span<const double> points) {
  SmootherConfig{bandwidth, 0, 0}.validate();
  constexpr Epanechnikov k;
  const auto& g = curve.grid();
  const auto& v = curve.values();
  std::vector<double> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double t = points[i];
    const auto [lo, hi] = detail::window(g, t, bandwidth);
    double sw = 0.0, swv = 0.0;
    for (std::size_t j = lo; j < hi; ++j) {
      const double w = k((t - g[j]) / bandwidth);
      sw += w;
      swv += w * v[j];
    }
    if (!(sw > 0.0))
      throw Error(ErrorCode::EmptyWindow, "no grid point within the bandwidth", std::nullopt, t);
    out[i] = swv / sw;
  }
  return out;
}

/// Local polynomial regression: the fitted value (deriv_order 0) or first
/// derivative (deriv_order 1) of the kernel-weighted least-squares fit.
inline std::vector<double> local_poly(const DiscreteCurve& curve, const SmootherConfig& cfg,
                                      std::span<const double> points) {
  cfg.validate();
  if (cfg.degree == 0) return nadaraya_watson(curve, cfg.bandwidth, points);
  std::vector<double> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    out[i] = detail::local_fit(curve.grid(), curve.values(), points[i], cfg.bandwidth, cfg.degree,
                               cfg.deriv_order);
  return out;
}

/// Default registration bandwidth: just wide enough that every point of the
/// grid's span sees a grid point.
inline double default_bandwidth(std::span<const double> grid) {
  return std::min(1.0, 1.1 * max_gap(grid));
}

/// 12 log-spaced candidates from 2 x max gap up to 0.25.
inline std::vector<double> default_bandwidth_candidates(std::span<const double> grid, std::size_t count = 12) {
  const double lo = std::min(2.0 * max_gap(grid), 0.25);
  const double hi = 0.25;
  std::vector<double> c(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double s = count == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(count - 1);
    c[k] = lo * std::pow(hi / lo, s);
  }
  return c;
}

/// Leave-one-out cross-validated bandwidth; ties go to the smaller bandwidth.
/// Candidates whose leave-one-out fits are not all feasible are skipped.
inline double loocv_bandwidth(const DiscreteCurve& curve, int degree, std::span<const double> candidates) {
  if (candidates.empty()) throw Error(ErrorCode::InvalidConfig, "no bandwidth candidates");
  std::vector<double> hs(candidates.begin(), candidates.end());
  std::sort(hs.begin(), hs.end());
  const auto& g = curve.grid();
  const auto& v = curve.values();
  double best_h = 0.0, best_err = std::numeric_limits<double>::infinity();
  for (double h : hs) {
    SmootherConfig{h, degree, 0}.validate();
    double err = 0.0;
    bool feasible = true;
    for (std::size_t j = 0; j < g.size() && feasible; ++j) {
      try {
        const double fit = detail::local_fit(g, v, g[j], h, degree, 0, j);
        err += (fit - v[j]) * (fit - v[j]);
      } catch (const Error&) {
        feasible = false;
      }
    }
    if (feasible && err < best_err) {
      best_err = err;
      best_h = h;
    }
  }
  if (!std::isfinite(best_err))
    throw Error(ErrorCode::AllCandidatesSingular, "every bandwidth candidate leaves a window underdetermined");
  return best_h;
}

/// Fritsch-Carlson monotone cubic through `n_knots` equispaced knots whose
/// values are read off the input warp. Endpoints stay at (0,0) and (1,1).
inline WarpMap monotone_smooth_warp(const WarpMap& samples, std::size_t n_knots = 11) {
  if (n_knots < 2) throw Error(ErrorCode::InvalidConfig, "monotone smoothing needs at least 2 knots");
  const std::vector<double> u = uniform_grid(n_knots);
  std::vector<double> y(n_knots);
  for (std::size_t k = 0; k < n_knots; ++k) y[k] = samples(u[k]);
  y.front() = 0.0;
  y.back() = 1.0;
  for (std::size_t k = 1; k < n_knots; ++k) y[k] = std::max(y[k], y[k - 1]);

  const std::size_t n = n_knots;
  std::vector<double> d(n - 1), m(n);
  for (std::size_t k = 0; k + 1 < n; ++k) d[k] = (y[k + 1] - y[k]) / (u[k + 1] - u[k]);
  m[0] = d[0];
  m[n - 1] = d[n - 2];
  for (std::size_t k = 1; k + 1 < n; ++k) m[k] = (d[k - 1] * d[k] <= 0.0) ? 0.0 : 0.5 * (d[k - 1] + d[k]);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    if (d[k] == 0.0) {
      m[k] = m[k + 1] = 0.0;
      continue;
    }
    const double a = m[k] / d[k], b = m[k + 1] / d[k];
    const double s = a * a + b * b;
    if (s > 9.0) {
      const double tau = 3.0 / std::sqrt(s);
      m[k] = tau * a * d[k];
      m[k + 1] = tau * b * d[k];
    }
  }
  return WarpMap(u, std::move(y), std::move(m));
}

}  // namespace varireg

#endif  // VARIREG_SMOOTHING_HPP
