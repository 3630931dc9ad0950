#ifndef VARIREG_REGISTRATION_HPP
#define VARIREG_REGISTRATION_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "varireg/curve.hpp"
#include "varireg/error.hpp"
#include "varireg/parallel.hpp"
#include "varireg/smoothing.hpp"
#include "varireg/variation.hpp"
#include "varireg/warp_map.hpp"

namespace varireg {

enum class Regime { complete, discrete, noisy };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::complete: return "complete";
    case Regime::discrete: return "discrete";
    case Regime::noisy: return "noisy";
  }
  return "unknown";
}

struct RegistrationResult {
  Regime regime = Regime::discrete;
  std::vector<double> grid;               // common output grid
  std::vector<WarpMap> warps;             // estimated T_i
  std::vector<WarpMap> inverse_warps;     // estimated T_i^{-1}
  StepCdf template_cdf;                   // estimated F_phi
  QuantileFn template_quantile;           // mean of the quantile functions
  std::vector<DiscreteCurve> registered;  // X_i composed with the estimated warp
  DiscreteCurve mean;
  std::vector<double> bandwidths;         // per curve: h (discrete) or h2 (noisy)
  std::vector<double> deriv_bandwidths;   // per curve h1, noisy regime only
  std::vector<std::size_t> low_variation; // noisy regime: curves indistinguishable from noise
  std::vector<std::string> flags;
};

struct WarpEstimate {
  StepCdf template_cdf;
  QuantileFn template_quantile;
  std::vector<WarpMap> warps;
  std::vector<WarpMap> inverse_warps;
  bool inverse_endpoint_appended = false;
};

/// Turns raw warp samples on a grid ending at t_r into a WarpMap on [0,1]:
/// (0,0) is prepended, the value at t_r is pinned to t_r and, when t_r < 1,
/// the knot (1,1) closes the map by linear interpolation.
inline WarpMap boundary_extend(const WarpSamples& s, double t_r) {
  if (s.t.size() != s.v.size())
    throw Error(ErrorCode::InvalidConfig, "warp samples and abscissae differ in length");
  for (std::size_t j = 1; j < s.v.size(); ++j)
    if (s.v[j] < s.v[j - 1])
      throw Error(ErrorCode::NonMonotoneInput, "warp samples decrease", std::nullopt, s.t[j]);
  t_r = std::clamp(t_r, 0.0, 1.0);

  std::vector<double> t{0.0}, v{0.0};
  for (std::size_t j = 0; j < s.t.size(); ++j) {
    const double x = s.t[j];
    if (x <= 0.0 || x > t_r) continue;
    t.push_back(x);
    v.push_back(std::clamp(s.v[j], 0.0, t_r));
  }
  if (t.back() != t_r) {
    t.push_back(t_r);
    v.push_back(t_r);
  } else {
    v.back() = t_r;
  }
  if (t_r < 1.0) {
    t.push_back(1.0);
    v.push_back(1.0);
  }
  return WarpMap(std::move(t), std::move(v));
}

/// Warp and inverse-warp estimates from the local variation cdfs evaluated on
/// `grid`: T_i = F_i^- o F_hat and T_i^* = F_hat^* o F_i, where F_hat^* is the
/// mean of the quantile functions and F_hat its generalized inverse.
inline WarpEstimate estimate_warps_discrete(std::span<const StepCdf> cdfs, std::span<const double> grid) {
  if (cdfs.empty()) throw Error(ErrorCode::EmptySample, "no curves to register");
  if (grid.empty()) throw Error(ErrorCode::InvalidConfig, "empty evaluation grid");
  const std::size_t n = cdfs.size();
  std::vector<QuantileFn> qs(n);
  parallel_for(n, [&](std::size_t i) { qs[i] = generalized_inverse(cdfs[i]); });

  WarpEstimate est;
  est.template_quantile = mean_quantile(qs, grid);
  est.template_cdf = quantile_to_cdf(est.template_quantile);
  const double t_r = grid.back();
  est.inverse_endpoint_appended = t_r < 1.0;

  est.warps.resize(n);
  est.inverse_warps.resize(n);
  parallel_for(n, [&](std::size_t i) {
    est.warps[i] = boundary_extend(compose_quantile_cdf(qs[i], est.template_cdf, grid), t_r);
    est.inverse_warps[i] = boundary_extend(compose_quantile_cdf(est.template_quantile, cdfs[i], grid), t_r);
  });
  return est;
}

/// Pairwise-registration route to T_i: the generalized inverse of
/// t -> n^{-1} sum_j F_j^-(F_i(t)), sampled on `grid`.
inline WarpMap pairwise_warp_oracle(std::span<const StepCdf> cdfs, std::size_t i, std::span<const double> grid) {
  if (cdfs.empty()) throw Error(ErrorCode::EmptySample, "no curves to register");
  if (i >= cdfs.size()) throw Error(ErrorCode::InvalidConfig, "curve index out of range");
  std::vector<QuantileFn> qs;
  qs.reserve(cdfs.size());
  for (const auto& c : cdfs) qs.push_back(generalized_inverse(c));

  // G is a right-continuous step function with jumps only where F_i jumps.
  std::vector<double> xs{0.0};
  for (double x : cdfs[i].jump_locations())
    if (x > 0.0) xs.push_back(x);
  std::vector<double> G(xs.size());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double u = cdfs[i](xs[k]);
    double s = 0.0;
    for (const auto& q : qs) s += q(u);
    G[k] = s / static_cast<double>(qs.size());
  }
  for (std::size_t k = 1; k < G.size(); ++k) G[k] = std::max(G[k], G[k - 1]);

  WarpSamples samples;
  samples.t.assign(grid.begin(), grid.end());
  samples.v.resize(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double s = grid[j];
    if (s <= 0.0) {
      samples.v[j] = 0.0;
      continue;
    }
    auto it = std::lower_bound(G.begin(), G.end(), s);
    samples.v[j] = it == G.end() ? 1.0 : xs[static_cast<std::size_t>(it - G.begin())];
  }
  return boundary_extend(samples, grid.back());
}

struct DiscreteOptions {
  std::optional<double> bandwidth;   // default: 1.1 x max grid gap per curve
  bool smooth_warps = false;
  std::size_t n_knots = 11;
  std::vector<double> output_grid;   // default: union of observed grids
  std::size_t output_cap = 1024;
};

namespace detail {

inline std::vector<double> default_output_grid(std::span<const DiscreteCurve> sample, std::size_t cap) {
  std::vector<std::vector<double>> grids;
  grids.reserve(sample.size());
  for (const auto& c : sample) grids.push_back(c.grid());
  return thin(merge_grids(grids), cap);
}

inline DiscreteCurve pointwise_mean(const std::vector<DiscreteCurve>& curves) {
  const auto& g = curves.front().grid();
  std::vector<double> m(g.size(), 0.0);
  for (const auto& c : curves)
    for (std::size_t j = 0; j < g.size(); ++j) m[j] += c.values()[j];
  for (double& x : m) x /= static_cast<double>(curves.size());
  return DiscreteCurve(g, std::move(m));
}

inline std::vector<StepCdf> variation_cdfs(std::span<const DiscreteCurve> sample) {
  std::vector<StepCdf> cdfs(sample.size());
  parallel_for(sample.size(), [&](std::size_t i) {
    try {
      cdfs[i] = discrete_variation_cdf(sample[i]).cdf;
    } catch (const Error& e) {
      throw e.with_curve(i);
    }
  });
  return cdfs;
}

inline double nearest_value(const DiscreteCurve& c, double t) {
  const auto& g = c.grid();
  auto it = std::lower_bound(g.begin(), g.end(), t);
  std::size_t k = static_cast<std::size_t>(it - g.begin());
  if (k == g.size()) k = g.size() - 1;
  else if (k > 0 && (t - g[k - 1]) <= (g[k] - t)) k = k - 1;
  return c.values()[k];
}

enum class Evaluator { nadaraya_watson, nearest };

inline RegistrationResult register_with(std::span<const DiscreteCurve> sample, const DiscreteOptions& opt,
                                        Regime regime, Evaluator eval) {
  if (sample.empty()) throw Error(ErrorCode::EmptySample, "no curves to register");
  const std::size_t n = sample.size();
  const std::vector<StepCdf> cdfs = variation_cdfs(sample);

  RegistrationResult res;
  res.regime = regime;
  res.grid = opt.output_grid.empty() ? default_output_grid(sample, opt.output_cap) : opt.output_grid;
  if (res.grid.size() < 3 || !std::is_sorted(res.grid.begin(), res.grid.end()) || res.grid.front() < 0.0 ||
      res.grid.back() > 1.0)
    throw Error(ErrorCode::InvalidConfig, "output grid must be sorted in [0,1] with at least 3 points");

  WarpEstimate est = estimate_warps_discrete(cdfs, res.grid);
  res.template_cdf = std::move(est.template_cdf);
  res.template_quantile = std::move(est.template_quantile);
  res.warps = std::move(est.warps);
  res.inverse_warps = std::move(est.inverse_warps);
  if (est.inverse_endpoint_appended) res.flags.push_back("inverse_warp_endpoint_appended");
  if (opt.smooth_warps) {
    for (auto& w : res.warps) w = monotone_smooth_warp(w, opt.n_knots);
    for (auto& w : res.inverse_warps) w = monotone_smooth_warp(w, opt.n_knots);
    res.flags.push_back("warps_smoothed");
  }

  res.registered.resize(n);
  res.bandwidths.assign(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    const std::vector<double> at = res.warps[i](res.grid);
    std::vector<double> vals(at.size());
    if (eval == Evaluator::nearest) {
      for (std::size_t j = 0; j < at.size(); ++j) vals[j] = nearest_value(sample[i], at[j]);
    } else {
      const double h = opt.bandwidth ? *opt.bandwidth : default_bandwidth(sample[i].grid());
      res.bandwidths[i] = h;
      try {
        vals = nadaraya_watson(sample[i], h, at);
      } catch (const Error& e) {
        throw e.with_curve(i);
      }
    }
    res.registered[i] = DiscreteCurve(res.grid, std::move(vals));
  });
  res.mean = pointwise_mean(res.registered);
  return res;
}

}  // namespace detail

/// Discretely observed, noiseless curves: warps from the discrete local
/// variation cdfs, curves smoothed by Nadaraya-Watson and composed with them.
inline RegistrationResult register_discrete(std::span<const DiscreteCurve> sample, const DiscreteOptions& opt = {}) {
  return detail::register_with(sample, opt, Regime::discrete, detail::Evaluator::nadaraya_watson);
}

/// Densely observed curves treated as fully observed: the discrete estimator
/// at the fine grid, evaluating curves at the nearest grid point.
inline RegistrationResult register_complete(std::span<const DiscreteCurve> sample,
                                            std::vector<double> output_grid = {}) {
  DiscreteOptions opt;
  opt.output_grid = std::move(output_grid);
  return detail::register_with(sample, opt, Regime::complete, detail::Evaluator::nearest);
}

struct NoisyOptions {
  double h1 = 0.0;  // derivative (local quadratic) bandwidth
  double h2 = 0.0;  // curve (local linear) bandwidth
  bool auto_bandwidth = true;
  std::size_t deriv_grid_size = 512;
  std::vector<double> output_grid;
  std::size_t output_cap = 1024;

  void validate() const {
    if (!auto_bandwidth && (!(h1 > 0.0) || !(h2 > 0.0)))
      throw Error(ErrorCode::InvalidConfig, "h1 and h2 must be positive unless bandwidths are automatic");
    if (deriv_grid_size < 3) throw Error(ErrorCode::InvalidConfig, "deriv_grid_size must be at least 3");
  }
};

namespace detail {

// Continuous local-variation cdf built from an estimated derivative on a grid.
struct SmoothVariation {
  std::vector<double> u;    // abscissae
  std::vector<double> cdf;  // normalized cumulative |derivative|
  double total = 0.0;

  double operator()(double t) const {
    if (t <= u.front()) return 0.0;
    if (t >= u.back()) return 1.0;
    return interp_linear(u, cdf, t);
  }

  // inf{t : F(t) >= s} as a piecewise-linear quantile function.
  QuantileFn quantile() const {
    std::vector<double> knots{0.0}, left, right;
    double start = u.front();
    for (std::size_t k = 1; k < u.size(); ++k) {
      if (cdf[k] > knots.back()) {
        knots.push_back(cdf[k]);
        left.push_back(start);
        right.push_back(u[k]);
      }
      start = u[k];
    }
    return QuantileFn(std::move(knots), std::move(left), std::move(right));
  }
};

}  // namespace detail

/// Noisy discrete curves: derivative by local quadratic regression (h1),
/// variation cdfs by trapezoid accumulation of its absolute value, warps as
/// in the complete-observation estimator, curves by local linear regression (h2).
inline RegistrationResult register_noisy(std::span<const DiscreteCurve> sample, const NoisyOptions& opt = {}) {
  opt.validate();
  if (sample.empty()) throw Error(ErrorCode::EmptySample, "no curves to register");
  const std::size_t n = sample.size();
  for (std::size_t i = 0; i < n; ++i)
    if (sample[i].size() < 10)
      throw Error(ErrorCode::InvalidCurve, "noisy registration needs at least 10 points per curve", i);

  RegistrationResult res;
  res.regime = Regime::noisy;
  res.grid = opt.output_grid.empty() ? detail::default_output_grid(sample, opt.output_cap) : opt.output_grid;
  res.bandwidths.assign(n, opt.h2);
  res.deriv_bandwidths.assign(n, opt.h1);

  std::vector<detail::SmoothVariation> vars(n);
  std::vector<QuantileFn> qs(n);
  std::vector<char> low(n, 0);
  parallel_for(n, [&](std::size_t i) {
    const DiscreteCurve& c = sample[i];
    try {
      if (opt.auto_bandwidth) {
        const auto cand = default_bandwidth_candidates(c.grid());
        res.deriv_bandwidths[i] = loocv_bandwidth(c, 2, cand);
        res.bandwidths[i] = loocv_bandwidth(c, 1, cand);
      }
      auto& sv = vars[i];
      sv.u = uniform_grid(opt.deriv_grid_size, c.grid().front(), c.grid().back());
      std::vector<double> d = local_poly(c, {res.deriv_bandwidths[i], 2, 1}, sv.u);
      sv.cdf.assign(sv.u.size(), 0.0);
      for (std::size_t k = 1; k < sv.u.size(); ++k)
        sv.cdf[k] = sv.cdf[k - 1] + 0.5 * (sv.u[k] - sv.u[k - 1]) * (std::abs(d[k]) + std::abs(d[k - 1]));
      sv.total = sv.cdf.back();
      double vmax = 0.0;
      for (double v : c.values()) vmax = std::max(vmax, std::abs(v));
      if (!(sv.total > 0.0) || sv.total < 1e-12 * vmax)
        throw Error(ErrorCode::ZeroVariation, "estimated derivative integrates to zero");
      for (double& f : sv.cdf) f /= sv.total;
      sv.cdf.back() = 1.0;
      qs[i] = sv.quantile();

      // Curves whose smoothed range is within the residual noise band carry
      // no usable variation.
      const auto fit = local_poly(c, {res.bandwidths[i], 1, 0}, c.grid());
      double rss = 0.0;
      for (std::size_t j = 0; j < fit.size(); ++j) rss += (fit[j] - c.values()[j]) * (fit[j] - c.values()[j]);
      const double sd = std::sqrt(rss / static_cast<double>(fit.size()));
      const auto [mn, mx] = std::minmax_element(fit.begin(), fit.end());
      low[i] = (*mx - *mn) < 4.0 * sd;
    } catch (const Error& e) {
      throw e.with_curve(i);
    }
  });
  for (std::size_t i = 0; i < n; ++i)
    if (low[i]) res.low_variation.push_back(i);
  if (!res.low_variation.empty()) res.flags.push_back("low_variation_curves");

  res.template_quantile = mean_quantile(qs, res.grid);
  res.template_cdf = quantile_to_cdf(res.template_quantile);
  const double t_r = res.grid.back();
  if (t_r < 1.0) res.flags.push_back("inverse_warp_endpoint_appended");

  res.warps.resize(n);
  res.inverse_warps.resize(n);
  res.registered.resize(n);
  parallel_for(n, [&](std::size_t i) {
    WarpSamples w{res.grid, std::vector<double>(res.grid.size())};
    WarpSamples winv{res.grid, std::vector<double>(res.grid.size())};
    for (std::size_t j = 0; j < res.grid.size(); ++j) {
      w.v[j] = qs[i](res.template_quantile.inverse_at(res.grid[j]));
      winv.v[j] = res.template_quantile(vars[i](res.grid[j]));
    }
    res.warps[i] = boundary_extend(w, t_r);
    res.inverse_warps[i] = boundary_extend(winv, t_r);
    try {
      res.registered[i] =
          DiscreteCurve(res.grid, local_poly(sample[i], {res.bandwidths[i], 1, 0}, res.warps[i](res.grid)));
    } catch (const Error& e) {
      throw e.with_curve(i);
    }
  });
  res.mean = detail::pointwise_mean(res.registered);
  return res;
}

}  // namespace varireg

#endif  // VARIREG_REGISTRATION_HPP
