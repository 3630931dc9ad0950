#ifndef VARIREG_CURVE_HPP
#define VARIREG_CURVE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "varireg/error.hpp"

namespace varireg {

/// One functional observation: values on a strictly increasing grid in [0,1].
class DiscreteCurve {
 public:
  DiscreteCurve() = default;

  DiscreteCurve(std::vector<double> grid, std::vector<double> values)
      : grid_(std::move(grid)), values_(std::move(values)) {
    validate();
  }

  const std::vector<double>& grid() const noexcept { return grid_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return grid_.size(); }

  double max_gap() const {
    double g = 0.0;
    for (std::size_t j = 1; j < grid_.size(); ++j) g = std::max(g, grid_[j] - grid_[j - 1]);
    return g;
  }

 private:
  void validate() const {
    if (grid_.size() != values_.size())
      throw Error(ErrorCode::InvalidCurve, "grid and values differ in length");
    if (grid_.size() < 3)
      throw Error(ErrorCode::InvalidCurve, "a curve needs at least 3 grid points");
    for (std::size_t j = 0; j < grid_.size(); ++j) {
      if (!(grid_[j] >= 0.0 && grid_[j] <= 1.0))
        throw Error(ErrorCode::InvalidCurve, "grid point outside [0,1]", std::nullopt, grid_[j]);
      if (j > 0 && !(grid_[j] > grid_[j - 1]))
        throw Error(ErrorCode::InvalidCurve, "grid not strictly increasing", std::nullopt, grid_[j]);
      if (!std::isfinite(values_[j]))
        throw Error(ErrorCode::InvalidCurve, "non-finite value", std::nullopt, grid_[j]);
    }
  }

  std::vector<double> grid_;
  std::vector<double> values_;
};

/// r equispaced points on [0,1], endpoints exact.
inline std::vector<double> uniform_grid(std::size_t r) {
  std::vector<double> g(r);
  if (r == 1) {
    g[0] = 0.0;
    return g;
  }
  for (std::size_t j = 0; j < r; ++j) g[j] = static_cast<double>(j) / static_cast<double>(r - 1);
  g.back() = 1.0;
  return g;
}

inline std::vector<double> uniform_grid(std::size_t r, double lo, double hi) {
  std::vector<double> g(r);
  for (std::size_t j = 0; j < r; ++j)
    g[j] = lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(r - 1);
  g.front() = lo;
  g.back() = hi;
  return g;
}

inline double max_gap(std::span<const double> grid) {
  double g = 0.0;
  for (std::size_t j = 1; j < grid.size(); ++j) g = std::max(g, grid[j] - grid[j - 1]);
  return g;
}

/// Trapezoid quadrature weights; exact for piecewise-linear integrands on the grid.
inline std::vector<double> trapezoid_weights(std::span<const double> grid) {
  const std::size_t r = grid.size();
  std::vector<double> w(r, 0.0);
  for (std::size_t j = 1; j < r; ++j) {
    const double half = 0.5 * (grid[j] - grid[j - 1]);
    w[j - 1] += half;
    w[j] += half;
  }
  return w;
}

inline double trapezoid(std::span<const double> grid, std::span<const double> f) {
  double s = 0.0;
  for (std::size_t j = 1; j < grid.size(); ++j) s += 0.5 * (grid[j] - grid[j - 1]) * (f[j] + f[j - 1]);
  return s;
}

/// Linear interpolation on a sorted grid, constant extrapolation.
inline double interp_linear(std::span<const double> x, std::span<const double> y, double t) {
  if (t <= x.front()) return y.front();
  if (t >= x.back()) return y.back();
  auto it = std::upper_bound(x.begin(), x.end(), t);
  const std::size_t k = static_cast<std::size_t>(it - x.begin());
  const double x0 = x[k - 1], x1 = x[k];
  const double w = (t - x0) / (x1 - x0);
  return y[k - 1] + w * (y[k] - y[k - 1]);
}

/// Keeps at most `cap` points by uniform index thinning; first and last kept.
inline std::vector<std::size_t> thin_indices(std::size_t size, std::size_t cap) {
  std::vector<std::size_t> idx;
  if (size <= cap || cap < 2) {
    idx.resize(size);
    for (std::size_t j = 0; j < size; ++j) idx[j] = j;
    return idx;
  }
  idx.reserve(cap);
  for (std::size_t k = 0; k < cap; ++k) {
    const double pos = static_cast<double>(k) * static_cast<double>(size - 1) / static_cast<double>(cap - 1);
    const auto j = static_cast<std::size_t>(std::llround(pos));
    if (idx.empty() || j != idx.back()) idx.push_back(j);
  }
  return idx;
}

inline std::vector<double> thin(std::span<const double> v, std::size_t cap) {
  std::vector<double> out;
  for (std::size_t j : thin_indices(v.size(), cap)) out.push_back(v[j]);
  return out;
}

/// Sorted union of several grids with exact duplicates removed.
inline std::vector<double> merge_grids(const std::vector<std::vector<double>>& grids) {
  std::vector<double> all;
  for (const auto& g : grids) all.insert(all.end(), g.begin(), g.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return all;
}

inline bool same_grid(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

}  // namespace varireg

#endif  // VARIREG_CURVE_HPP
