#ifndef VARIREG_DIAGNOSTICS_HPP
#define VARIREG_DIAGNOSTICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "varireg/curve.hpp"
#include "varireg/error.hpp"
#include "varireg/fpca.hpp"
#include "varireg/parallel.hpp"
#include "varireg/registration.hpp"
#include "varireg/simulate.hpp"
#include "varireg/variation.hpp"

namespace varireg {

// ---------------------------------------------------------------------------
// Misspecification statistic

enum class MeanMode { automatic, force_zero_deriv };
enum class ZBranch { mean_derivative, zero_mean_derivative };

struct ZResult {
  std::vector<double> z;
  ZBranch branch = ZBranch::mean_derivative;
  std::vector<std::size_t> above_bound;  // indices with Z > 2 + 1e-9
};

/// Finite-difference derivative: central inside, one-sided at the ends.
inline std::vector<double> fd_derivative(std::span<const double> g, std::span<const double> v) {
  const std::size_t r = g.size();
  std::vector<double> d(r);
  d[0] = (v[1] - v[0]) / (g[1] - g[0]);
  d[r - 1] = (v[r - 1] - v[r - 2]) / (g[r - 1] - g[r - 2]);
  for (std::size_t j = 1; j + 1 < r; ++j) d[j] = (v[j + 1] - v[j - 1]) / (g[j + 1] - g[j - 1]);
  return d;
}

inline double integral_abs(std::span<const double> g, std::span<const double> f) {
  double s = 0.0;
  for (std::size_t j = 1; j < g.size(); ++j) s += 0.5 * (g[j] - g[j - 1]) * (std::abs(f[j]) + std::abs(f[j - 1]));
  return s;
}

/// Per-curve departure from the rank-one regime. With a non-flat sample mean,
/// Z_i = 2 int|X_i' - mu'| / int|X_i'|. With a flat mean, the top two
/// principal components stand in for the population decomposition:
/// Z_i = 2 int|s_i2 phi_2'| / int|s_i1 phi_1' + s_i2 phi_2'| with centered scores s.
inline ZResult z_statistic(std::span<const DiscreteCurve> curves, MeanMode mode = MeanMode::automatic) {
  const auto& g = detail::common_grid(curves);
  const std::size_t n = curves.size();
  if (n < 2) throw Error(ErrorCode::EmptySample, "Z statistics need at least two curves");

  const DiscreteCurve mu = cross_sectional_mean(curves);
  const std::vector<double> dmu = fd_derivative(g, mu.values());
  std::vector<std::vector<double>> dx(n);
  std::vector<double> tv(n);
  double tv_max = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dx[i] = fd_derivative(g, curves[i].values());
    tv[i] = integral_abs(g, dx[i]);
    tv_max = std::max(tv_max, tv[i]);
  }

  ZResult out;
  out.z.resize(n);
  const bool flat = mode == MeanMode::force_zero_deriv || integral_abs(g, dmu) < 1e-8 * tv_max;
  if (!flat) {
    out.branch = ZBranch::mean_derivative;
    std::vector<double> diff(g.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (!(tv[i] > 0.0)) throw Error(ErrorCode::ZeroVariation, "curve has no variation", i);
      for (std::size_t j = 0; j < g.size(); ++j) diff[j] = dx[i][j] - dmu[j];
      out.z[i] = 2.0 * integral_abs(g, diff) / tv[i];
    }
  } else {
    out.branch = ZBranch::zero_mean_derivative;
    const EigenDecomposition eig = leading_eigenpairs(covariance_matrix(curves), g, 2);
    std::vector<DiscreteCurve> centered;
    centered.reserve(n);
    for (const auto& c : curves) {
      std::vector<double> v(g.size());
      for (std::size_t j = 0; j < g.size(); ++j) v[j] = c.values()[j] - mu.values()[j];
      centered.emplace_back(g, std::move(v));
    }
    const auto s1 = scores(centered, eig.eigenfunctions[0], g);
    const auto s2 = eig.eigenfunctions.size() > 1 ? scores(centered, eig.eigenfunctions[1], g)
                                                  : std::vector<double>(n, 0.0);
    const auto d1 = fd_derivative(g, eig.eigenfunctions[0]);
    const auto d2 = eig.eigenfunctions.size() > 1 ? fd_derivative(g, eig.eigenfunctions[1])
                                                  : std::vector<double>(g.size(), 0.0);
    std::vector<double> num(g.size()), den(g.size());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < g.size(); ++j) {
        num[j] = s2[i] * d2[j];
        den[j] = s1[i] * d1[j] + s2[i] * d2[j];
      }
      const double D = integral_abs(g, den);
      if (!(D > 0.0)) throw Error(ErrorCode::ZeroVariation, "curve has no variation in the leading components", i);
      out.z[i] = 2.0 * integral_abs(g, num) / D;
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (out.z[i] > 2.0 + 1e-9) out.above_bound.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------
// Registration quality against ground truth

/// Ground truth sampled on a grid: latent curves X_i and warps T_i.
struct TruthSamples {
  std::vector<double> grid;
  std::vector<std::vector<double>> latent;
  std::vector<std::vector<double>> warp;
  std::optional<StepCdf> fphi;
};

inline TruthSamples truth_samples(const TruthBundle& b) {
  TruthSamples t;
  t.grid = b.grid;
  for (std::size_t i = 0; i < b.size(); ++i) {
    t.latent.push_back(b.latent_on(i, b.grid));
    std::vector<double> w(b.grid.size());
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = b.warps[i](b.grid[j]);
    t.warp.push_back(std::move(w));
  }
  t.fphi = b.fphi;
  return t;
}

struct RegistrationReport {
  std::optional<double> dW2_template_to_target;  // squared 2-Wasserstein distance
  std::optional<std::vector<double>> warp_sup_errors;
  std::optional<std::vector<double>> curve_rel_L2_errors;
  std::vector<double> explained_ratios;
  std::optional<std::vector<double>> z_stats;
  std::optional<double> mean_sup_error;  // against the mean of the latent curves
  std::vector<std::string> flags;
};

inline double l2_norm(std::span<const double> g, std::span<const double> f) {
  double s = 0.0;
  for (std::size_t j = 1; j < g.size(); ++j)
    s += 0.5 * (g[j] - g[j - 1]) * (f[j] * f[j] + f[j - 1] * f[j - 1]);
  return std::sqrt(s);
}

inline RegistrationReport evaluate_against_truth(const RegistrationResult& res, const TruthSamples& truth) {
  const std::size_t n = res.registered.size();
  if (truth.latent.size() != n || truth.warp.size() != n)
    throw Error(ErrorCode::GridMismatch, "truth and result hold different numbers of curves");
  const auto& g = res.grid;
  RegistrationReport rep;
  std::vector<double> wsup(n), rel(n), latent_mean(g.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (truth.latent[i].size() != truth.grid.size() || truth.warp[i].size() != truth.grid.size())
      throw Error(ErrorCode::GridMismatch, "truth arrays do not match the truth grid", i);
    double ws = 0.0;
    std::vector<double> x(g.size()), err(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) {
      ws = std::max(ws, std::abs(res.warps[i](g[j]) - interp_linear(truth.grid, truth.warp[i], g[j])));
      x[j] = interp_linear(truth.grid, truth.latent[i], g[j]);
      err[j] = res.registered[i].values()[j] - x[j];
      latent_mean[j] += x[j];
    }
    wsup[i] = ws;
    const double nx = l2_norm(g, x);
    rel[i] = nx > 0.0 ? l2_norm(g, err) / nx : l2_norm(g, err);
  }
  double msup = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j)
    msup = std::max(msup, std::abs(res.mean.values()[j] - latent_mean[j] / static_cast<double>(n)));
  rep.warp_sup_errors = std::move(wsup);
  rep.curve_rel_L2_errors = std::move(rel);
  rep.mean_sup_error = msup;
  if (truth.fphi) {
    const double d = wasserstein2(res.template_quantile, *truth.fphi);
    rep.dW2_template_to_target = d * d;
  }
  return rep;
}

inline RegistrationReport evaluate_against_truth(const RegistrationResult& res, const TruthBundle& truth) {
  return evaluate_against_truth(res, truth_samples(truth));
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// ---------------------------------------------------------------------------
// Monte Carlo rate check for the template estimator

struct RateCheckResult {
  std::vector<std::size_t> ns;
  std::vector<std::size_t> grid_sizes;
  std::vector<double> means;     // mean squared Wasserstein distance per n
  std::vector<double> std_errors;
  std::optional<double> slope;   // least-squares slope of log(mean) on log(n)
  bool slope_skipped = false;    // no phase variation: nothing to estimate
};

inline std::size_t rate_grid_size(std::size_t n) {
  return 1 + static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(n), 1.2) - 1e-9));
}

/// Squared Wasserstein distance between the estimated template (from a fresh
/// bundle of n curves on r = 1 + ceil(n^1.2) points) and F_phi, averaged over
/// replicates. Replicate k of size n always uses the same substream.
inline RateCheckResult rate_check(LatentModelConfig model, const WarpLawConfig& warp, std::span<const std::size_t> ns,
                                  std::size_t reps, std::uint64_t seed, std::size_t dense_r = 20001) {
  if (!model.rank_one()) throw Error(ErrorCode::NotRankOne, "rate check needs a rank-one model");
  if (ns.empty() || reps == 0) throw Error(ErrorCode::InvalidConfig, "rate check needs sizes and replicates");
  for (std::size_t k = 1; k < ns.size(); ++k)
    if (ns[k] <= ns[k - 1]) throw Error(ErrorCode::InvalidConfig, "sample sizes must increase");
  const QuantileFn target = generalized_inverse(true_variation_cdf(model, dense_r));

  RateCheckResult out;
  out.ns.assign(ns.begin(), ns.end());
  for (std::size_t n : ns) {
    model.grid_size = rate_grid_size(n);
    std::vector<double> d2(reps);
    parallel_for(reps, [&](std::size_t k) {
      const std::uint64_t rep_seed = splitmix64(seed ^ splitmix64(n * 1000003ULL + k));
      const TruthBundle b = make_truth_bundle(model, warp, n, rep_seed, 0);
      std::vector<QuantileFn> qs;
      qs.reserve(n);
      for (const auto& c : b.observed) qs.push_back(generalized_inverse(discrete_variation_cdf(c).cdf));
      const double d = wasserstein2(mean_quantile(qs), target);
      d2[k] = d * d;
    });
    double m = 0.0;
    for (double x : d2) m += x;
    m /= static_cast<double>(reps);
    double v = 0.0;
    for (double x : d2) v += (x - m) * (x - m);
    v = reps > 1 ? v / static_cast<double>(reps - 1) : 0.0;
    out.grid_sizes.push_back(model.grid_size);
    out.means.push_back(m);
    out.std_errors.push_back(std::sqrt(v / static_cast<double>(reps)));
  }
  if (warp.family == WarpFamily::identity || ns.size() < 2) {
    out.slope_skipped = true;
    return out;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double k = static_cast<double>(ns.size());
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const double x = std::log(static_cast<double>(ns[i])), y = std::log(out.means[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  out.slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  return out;
}

}  // namespace varireg

#endif  // VARIREG_DIAGNOSTICS_HPP
