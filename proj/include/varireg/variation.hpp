#ifndef VARIREG_VARIATION_HPP
#define VARIREG_VARIATION_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "varireg/curve.hpp"
#include "varireg/error.hpp"
#include "varireg/warp_map.hpp"

namespace varireg {

/// Right-continuous nondecreasing step function on [0,1] ending at 1.
/// F(t) = cum_values[k] on [jump_locations[k], jump_locations[k+1]),
/// and 0 before the first jump.
class StepCdf {
 public:
  StepCdf() : loc_{1.0}, cum_{1.0}, max_jump_(1.0) {}

  StepCdf(std::vector<double> jump_locations, std::vector<double> cum_values)
      : loc_(std::move(jump_locations)), cum_(std::move(cum_values)) {
    if (loc_.empty() || loc_.size() != cum_.size())
      throw Error(ErrorCode::InvalidConfig, "step cdf needs matching, nonempty jump arrays");
    double prev = 0.0;
    max_jump_ = 0.0;
    for (std::size_t k = 0; k < loc_.size(); ++k) {
      if (!(loc_[k] >= 0.0 && loc_[k] <= 1.0) || (k > 0 && !(loc_[k] > loc_[k - 1])))
        throw Error(ErrorCode::InvalidConfig, "jump locations must increase within [0,1]",
                    std::nullopt, loc_[k]);
      if (!(cum_[k] >= prev) || cum_[k] > 1.0)
        throw Error(ErrorCode::InvalidConfig, "cumulative values must be nondecreasing in [0,1]",
                    std::nullopt, loc_[k]);
      max_jump_ = std::max(max_jump_, cum_[k] - prev);
      prev = cum_[k];
    }
    if (cum_.back() != 1.0) throw Error(ErrorCode::InvalidConfig, "step cdf must end at 1");
  }

  double operator()(double t) const {
    auto it = std::upper_bound(loc_.begin(), loc_.end(), t);
    if (it == loc_.begin()) return 0.0;
    return cum_[static_cast<std::size_t>(it - loc_.begin()) - 1];
  }

  const std::vector<double>& jump_locations() const noexcept { return loc_; }
  const std::vector<double>& cum_values() const noexcept { return cum_; }
  double max_jump() const noexcept { return max_jump_; }

 private:
  std::vector<double> loc_;
  std::vector<double> cum_;
  double max_jump_ = 0.0;
};

/// Left-continuous nondecreasing function on [0,1] with Q(0) = 0.
/// Segment k covers (knots[k], knots[k+1]] and runs linearly from its
/// right-limit value `left[k]` at knots[k] to `right[k]` at knots[k+1];
/// step segments have left == right. Jumps sit at knots.
class QuantileFn {
 public:
  QuantileFn() : knots_{0.0, 1.0}, left_{0.0}, right_{1.0} {}

  QuantileFn(std::vector<double> knots, std::vector<double> left, std::vector<double> right)
      : knots_(std::move(knots)), left_(std::move(left)), right_(std::move(right)) {
    validate();
  }

  /// Continuous piecewise-linear quantile through (u[k], q[k]); u[0] must be 0.
  /// Q(0) stays 0, so q[0] > 0 encodes an atom at the left end.
  static QuantileFn from_samples(std::span<const double> u, std::span<const double> q) {
    if (u.size() < 2 || u.size() != q.size() || u.front() != 0.0 || u.back() != 1.0)
      throw Error(ErrorCode::InvalidConfig, "quantile samples must span [0,1]");
    std::vector<double> knots(u.begin(), u.end());
    std::vector<double> left(q.begin(), q.end() - 1);
    std::vector<double> right(q.begin() + 1, q.end());
    return QuantileFn(std::move(knots), std::move(left), std::move(right));
  }

  double operator()(double u) const {
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return right_.back();
    auto it = std::lower_bound(knots_.begin(), knots_.end(), u);
    return on_segment(static_cast<std::size_t>(it - knots_.begin()) - 1, u);
  }

  /// lim_{s -> u+} Q(s).
  double right_limit(double u) const {
    if (u >= 1.0) return right_.back();
    if (u < 0.0) u = 0.0;
    auto it = std::upper_bound(knots_.begin(), knots_.end(), u);
    return on_segment(static_cast<std::size_t>(it - knots_.begin()) - 1, u);
  }

  /// sup{u in [0,1] : Q(u) <= x}, the right-continuous inverse of Q.
  double inverse_at(double x) const {
    if (x < 0.0) return 0.0;
    auto it = std::upper_bound(right_.begin(), right_.end(), x);
    if (it == right_.end()) return 1.0;
    const auto k = static_cast<std::size_t>(it - right_.begin());
    if (left_[k] > x) return knots_[k];
    const double w = (x - left_[k]) / (right_[k] - left_[k]);
    return knots_[k] + w * (knots_[k + 1] - knots_[k]);
  }

  std::size_t segments() const noexcept { return left_.size(); }
  bool is_step(std::size_t k) const { return left_[k] == right_[k]; }
  const std::vector<double>& knots() const noexcept { return knots_; }
  const std::vector<double>& left() const noexcept { return left_; }
  const std::vector<double>& right() const noexcept { return right_; }

 private:
  double on_segment(std::size_t k, double u) const {
    if (left_[k] == right_[k]) return right_[k];
    const double w = (u - knots_[k]) / (knots_[k + 1] - knots_[k]);
    return left_[k] + w * (right_[k] - left_[k]);
  }

  void validate() const {
    const std::size_t m = left_.size();
    if (m == 0 || right_.size() != m || knots_.size() != m + 1)
      throw Error(ErrorCode::InvalidConfig, "quantile needs knots.size() == segments + 1");
    if (knots_.front() != 0.0 || knots_.back() != 1.0)
      throw Error(ErrorCode::InvalidConfig, "quantile knots must span [0,1]");
    double prev = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      if (!(knots_[k + 1] > knots_[k]))
        throw Error(ErrorCode::InvalidConfig, "quantile knots must increase", std::nullopt, knots_[k + 1]);
      if (!(left_[k] >= prev) || !(right_[k] >= left_[k]))
        throw Error(ErrorCode::NonMonotoneInput, "quantile must be nondecreasing", std::nullopt, knots_[k + 1]);
      prev = right_[k];
    }
    if (prev > 1.0) throw Error(ErrorCode::InvalidConfig, "quantile values must lie in [0,1]");
  }

  std::vector<double> knots_;
  std::vector<double> left_;
  std::vector<double> right_;
};

/// Total variation J(1) together with the normalized local-variation cdf.
struct VariationSummary {
  double total_variation = 0.0;
  StepCdf cdf;
};

inline constexpr int kCdfLevelBits = 36;

/// Discrete local variation distribution: a jump of |v[j+1]-v[j]| / J(1)
/// at grid[j+1]. The observed grid is the only partition used.
inline VariationSummary discrete_variation_cdf(const DiscreteCurve& curve) {
  const auto& g = curve.grid();
  const auto& v = curve.values();
  const std::size_t r = g.size();

  double total = 0.0, vmax = 0.0;
  for (std::size_t j = 0; j < r; ++j) vmax = std::max(vmax, std::abs(v[j]));
  for (std::size_t j = 1; j < r; ++j) total += std::abs(v[j] - v[j - 1]);
  if (!(total > 0.0) || total < 1e-12 * vmax)
    throw Error(ErrorCode::ZeroVariation, "curve has no variation; registration undefined");

  std::vector<double> loc(g.begin() + 1, g.end());
  std::vector<double> cum(r - 1);
  double running = 0.0;
  for (std::size_t j = 1; j < r; ++j) {
    running += std::abs(v[j] - v[j - 1]);
    // snapped to a dyadic grid so levels that agree up to rounding (for
    // instance after an affine change of the values) tie exactly
    cum[j - 1] = std::ldexp(std::round(std::ldexp(running / total, kCdfLevelBits)), -kCdfLevelBits);
  }
  cum.back() = 1.0;
  return {total, StepCdf(std::move(loc), std::move(cum))};
}

/// G^-(t) = inf{u : G(u) >= t}, with G^-(0) = 0.
inline QuantileFn generalized_inverse(const StepCdf& G) {
  const auto& loc = G.jump_locations();
  const auto& cum = G.cum_values();
  std::vector<double> knots{0.0}, vals;
  for (std::size_t k = 0; k < cum.size(); ++k) {
    if (cum[k] > knots.back()) {
      knots.push_back(cum[k]);
      vals.push_back(loc[k]);
    }
  }
  return QuantileFn(std::move(knots), vals, vals);
}

namespace detail {

// Walks one quantile's segments alongside a sorted sequence of abscissae.
class SegmentCursor {
 public:
  explicit SegmentCursor(const QuantileFn& q) : q_(q) {}

  // Value at u and right-limit at u; u must be visited in nondecreasing order.
  void seek(double u) {
    const auto& kn = q_.knots();
    while (k_ + 1 < q_.segments() && kn[k_ + 1] < u) ++k_;
  }
  double value(double u) {
    if (u <= 0.0) return 0.0;
    seek(u);
    return eval(k_, u);
  }
  double right_limit(double u) {
    const auto& kn = q_.knots();
    seek(u);
    std::size_t k = k_;
    while (k + 1 < q_.segments() && kn[k + 1] <= u) ++k;
    return eval(k, u);
  }

 private:
  double eval(std::size_t k, double u) const {
    const double l = q_.left()[k], r = q_.right()[k];
    if (l == r) return r;
    const auto& kn = q_.knots();
    const double w = std::clamp((u - kn[k]) / (kn[k + 1] - kn[k]), 0.0, 1.0);
    return l + w * (r - l);
  }

  const QuantileFn& q_;
  std::size_t k_ = 0;
};

inline constexpr std::size_t kMaxQuantileKnots = 1'000'000;

inline std::vector<double> merged_knots(std::span<const QuantileFn* const> qs,
                                        std::span<const double> extra) {
  std::vector<double> all{0.0, 1.0};
  for (const QuantileFn* q : qs) all.insert(all.end(), q->knots().begin(), q->knots().end());
  for (double u : extra)
    if (u > 0.0 && u < 1.0) all.push_back(u);
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  if (all.size() > kMaxQuantileKnots) all = thin(all, kMaxQuantileKnots);
  return all;
}

}  // namespace detail

/// Pointwise mean of quantile functions (the Wasserstein barycenter), exact
/// on the union of all input knots and `eval_grid`.
inline QuantileFn mean_quantile(std::span<const QuantileFn> qs, std::span<const double> eval_grid = {}) {
  if (qs.empty()) throw Error(ErrorCode::EmptySample, "mean of zero quantile functions");
  std::vector<const QuantileFn*> ptrs;
  for (const auto& q : qs) ptrs.push_back(&q);
  std::vector<double> knots = detail::merged_knots(ptrs, eval_grid);
  const std::size_t m = knots.size() - 1;
  // Neumaier-compensated sums keep the result (nearly) independent of the
  // order in which the sample is listed.
  std::vector<double> left(m, 0.0), right(m, 0.0), left_c(m, 0.0), right_c(m, 0.0);
  auto add = [](double& s, double& c, double x) {
    const double t = s + x;
    c += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
    s = t;
  };
  for (const auto& q : qs) {
    detail::SegmentCursor cur(q);
    for (std::size_t k = 0; k < m; ++k) {
      add(left[k], left_c[k], cur.right_limit(knots[k]));
      add(right[k], right_c[k], cur.value(knots[k + 1]));
    }
  }
  const double n = static_cast<double>(qs.size());
  double prev = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    left[k] = std::max((left[k] + left_c[k]) / n, prev);
    right[k] = std::max((right[k] + right_c[k]) / n, left[k]);
    prev = right[k];
  }
  return QuantileFn(std::move(knots), std::move(left), std::move(right));
}

/// Generalized inverse of a quantile function as a StepCdf. Exact (at every
/// abscissa) when Q is a step function; for linear segments it is exact at the
/// segment end values and lies below the continuous inverse in between.
inline StepCdf quantile_to_cdf(const QuantileFn& Q) {
  std::vector<double> xs;
  xs.reserve(2 * Q.segments());
  for (std::size_t k = 0; k < Q.segments(); ++k) {
    xs.push_back(Q.left()[k]);
    xs.push_back(Q.right()[k]);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::vector<double> loc, cum;
  double prev = 0.0;
  for (double x : xs) {
    const double F = Q.inverse_at(x);
    if (F > prev) {
      loc.push_back(x);
      cum.push_back(F);
      prev = F;
    }
  }
  cum.back() = 1.0;
  return StepCdf(std::move(loc), std::move(cum));
}

/// 2-Wasserstein distance sqrt(int_0^1 (A(u) - B(u))^2 du), integrated
/// exactly over the merged knots (both integrands are piecewise linear).
inline double wasserstein2(const QuantileFn& a, const QuantileFn& b) {
  const QuantileFn* ptrs[] = {&a, &b};
  const std::vector<double> knots = detail::merged_knots(ptrs, {});
  detail::SegmentCursor ca(a), cb(b);
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    const double lo = ca.right_limit(knots[k]) - cb.right_limit(knots[k]);
    const double hi = ca.value(knots[k + 1]) - cb.value(knots[k + 1]);
    s += (knots[k + 1] - knots[k]) * (lo * lo + lo * hi + hi * hi) / 3.0;
  }
  return std::sqrt(std::max(0.0, s));
}

inline double wasserstein2(const StepCdf& a, const StepCdf& b) {
  return wasserstein2(generalized_inverse(a), generalized_inverse(b));
}
inline double wasserstein2(const StepCdf& a, const QuantileFn& b) {
  return wasserstein2(generalized_inverse(a), b);
}
inline double wasserstein2(const QuantileFn& a, const StepCdf& b) {
  return wasserstein2(a, generalized_inverse(b));
}

/// Samples t -> Q(F(t)) at the given points.
inline WarpSamples compose_quantile_cdf(const QuantileFn& Q, const StepCdf& F,
                                        std::span<const double> points) {
  WarpSamples out;
  out.t.assign(points.begin(), points.end());
  out.v.resize(points.size());
  for (std::size_t j = 0; j < points.size(); ++j) out.v[j] = Q(F(points[j]));
  return out;
}

}  // namespace varireg

#endif  // VARIREG_VARIATION_HPP
