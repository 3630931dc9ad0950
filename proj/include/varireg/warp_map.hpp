#ifndef VARIREG_WARP_MAP_HPP
#define VARIREG_WARP_MAP_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "varireg/error.hpp"

namespace varireg {

/// Raw (abscissa, value) pairs produced by composing step functions.
struct WarpSamples {
  std::vector<double> t;
  std::vector<double> v;
};

/// Monotone map of [0,1] onto itself with fixed endpoints, stored as knots.
/// Without slopes it is evaluated by linear interpolation; with slopes it is
/// a cubic Hermite interpolant (used for smoothed warps).
class WarpMap {
 public:
  WarpMap() : t_{0.0, 1.0}, v_{0.0, 1.0} {}

  WarpMap(std::vector<double> t, std::vector<double> v, std::vector<double> slopes = {})
      : t_(std::move(t)), v_(std::move(v)), m_(std::move(slopes)) {
    validate();
  }

  static WarpMap identity() { return WarpMap(); }

  double operator()(double x) const {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    auto it = std::upper_bound(t_.begin(), t_.end(), x);
    const auto k = static_cast<std::size_t>(it - t_.begin());
    const double h = t_[k] - t_[k - 1];
    const double s = (x - t_[k - 1]) / h;
    double y;
    if (m_.empty()) {
      y = v_[k - 1] + s * (v_[k] - v_[k - 1]);
    } else {
      // increment form keeps flat segments exactly flat
      const double s2 = s * s, s3 = s2 * s;
      y = v_[k - 1] + (3 * s2 - 2 * s3) * (v_[k] - v_[k - 1]) + (s3 - 2 * s2 + s) * h * m_[k - 1] +
          (s3 - s2) * h * m_[k];
      y = std::clamp(y, v_[k - 1], v_[k]);
    }
    return std::clamp(y, 0.0, 1.0);
  }

  std::vector<double> operator()(std::span<const double> xs) const {
    std::vector<double> out(xs.size());
    for (std::size_t j = 0; j < xs.size(); ++j) out[j] = (*this)(xs[j]);
    return out;
  }

  const std::vector<double>& knots() const noexcept { return t_; }
  const std::vector<double>& values() const noexcept { return v_; }
  const std::vector<double>& slopes() const noexcept { return m_; }
  bool is_cubic() const noexcept { return !m_.empty(); }

 private:
  void validate() const {
    if (t_.size() != v_.size() || t_.size() < 2)
      throw Error(ErrorCode::InvalidConfig, "warp knots and values must match, at least 2");
    if (!m_.empty() && m_.size() != t_.size())
      throw Error(ErrorCode::InvalidConfig, "warp slopes must match knots");
    if (t_.front() != 0.0 || t_.back() != 1.0 || v_.front() != 0.0 || v_.back() != 1.0)
      throw Error(ErrorCode::NonMonotoneInput, "warp must fix the endpoints 0 and 1");
    for (std::size_t j = 1; j < t_.size(); ++j) {
      if (!(t_[j] > t_[j - 1]))
        throw Error(ErrorCode::NonMonotoneInput, "warp knots not strictly increasing", std::nullopt, t_[j]);
      if (v_[j] < v_[j - 1])
        throw Error(ErrorCode::NonMonotoneInput, "warp values decreasing", std::nullopt, t_[j]);
    }
  }

  std::vector<double> t_;
  std::vector<double> v_;
  std::vector<double> m_;
};

/// sup over the points of |a(t) - b(t)|.
template <class A, class B>
double sup_distance(const A& a, const B& b, std::span<const double> points) {
  double d = 0.0;
  for (double t : points) d = std::max(d, std::abs(a(t) - b(t)));
  return d;
}

}  // namespace varireg

#endif  // VARIREG_WARP_MAP_HPP
