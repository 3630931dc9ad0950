#ifndef VARIREG_SIMULATE_HPP
#define VARIREG_SIMULATE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "varireg/curve.hpp"
#include "varireg/error.hpp"
#include "varireg/parallel.hpp"
#include "varireg/variation.hpp"
#include "varireg/warp_map.hpp"

namespace varireg {

inline constexpr double kPi = std::numbers::pi;

// ---------------------------------------------------------------------------
// Random streams

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seeded stream with distribution samplers built from uniforms, so draws are
/// identical on every standard library.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : eng_(splitmix64(seed)) {}

  /// Substream keyed by (seed, index, tag); independent of evaluation order.
  static RandomStream substream(std::uint64_t seed, std::uint64_t index, std::uint64_t tag) {
    return RandomStream(splitmix64(splitmix64(seed) ^ splitmix64(index * 0x632be59bd9b4e019ULL + tag)));
  }

  /// Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Box-Muller.
  double normal(double mean = 0.0, double sd = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + sd * spare_;
    }
    double u1;
    do u1 = uniform(); while (u1 <= 0.0);
    const double u2 = uniform();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    spare_ = rad * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return mean + sd * rad * std::cos(2.0 * kPi * u2);
  }

  /// Poisson by inversion of the cdf.
  int poisson(double lambda) {
    const double u = uniform();
    double p = std::exp(-lambda), F = p;
    int k = 0;
    while (u >= F && k < 10000) {
      ++k;
      p *= lambda / k;
      F += p;
    }
    return k;
  }

  /// Beta(2,2) as the median of three uniforms.
  double beta22() {
    double a = uniform(), b = uniform(), c = uniform();
    return std::max(std::min(a, b), std::min(std::max(a, b), c));
  }

  int sign() { return uniform() < 0.5 ? -1 : 1; }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Warps

enum class WarpFamily { sine_mixture, identity };

struct WarpLawConfig {
  WarpFamily family = WarpFamily::sine_mixture;
  int J = 2;
  double beta = 1.01;
  double lambda = 3.0;  // K_j = V1 * V2, V1 ~ Poisson(lambda), V2 = +-1

  void validate() const {
    if (J < 2) throw Error(ErrorCode::InvalidConfig, "mixture size J must be at least 2");
    if (!(beta > 1.0)) throw Error(ErrorCode::InvalidConfig, "beta must exceed 1");
    if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidConfig, "lambda must be nonnegative");
  }
};

/// T(t) = sum_j w_j zeta_{K_j}(t), zeta_k(t) = t - sin(pi k t) / (|k| pi beta),
/// zeta_0 = Id, with weights the spacings of J-1 sorted uniforms.
class SineMixtureWarp {
 public:
  SineMixtureWarp() = default;
  SineMixtureWarp(std::vector<int> K, std::vector<double> weights, double beta)
      : K_(std::move(K)), w_(std::move(weights)), beta_(beta) {}

  double operator()(double t) const {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    double s = 0.0;
    for (std::size_t j = 0; j < K_.size(); ++j)
      if (K_[j] != 0) s += w_[j] * std::sin(kPi * K_[j] * t) / (std::abs(K_[j]) * kPi * beta_);
    return t - s;
  }

  double derivative(double t) const {
    double s = 0.0;
    for (std::size_t j = 0; j < K_.size(); ++j)
      if (K_[j] != 0) s += w_[j] * K_[j] * std::cos(kPi * K_[j] * t) / (std::abs(K_[j]) * beta_);
    return 1.0 - s;
  }

  /// Bisection on the strictly increasing map, to full double resolution.
  double inverse(double y) const {
    if (y <= 0.0) return 0.0;
    if (y >= 1.0) return 1.0;
    if (is_identity()) return y;
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      if ((*this)(mid) < y) lo = mid;
      else hi = mid;
    }
    return 0.5 * (lo + hi);
  }

  bool is_identity() const {
    return std::all_of(K_.begin(), K_.end(), [](int k) { return k == 0; });
  }

  WarpMap to_warp_map(std::span<const double> grid) const {
    std::vector<double> t{0.0}, v{0.0};
    for (double x : grid)
      if (x > 0.0 && x < 1.0) {
        t.push_back(x);
        v.push_back((*this)(x));
      }
    t.push_back(1.0);
    v.push_back(1.0);
    return WarpMap(std::move(t), std::move(v));
  }

  const std::vector<int>& K() const noexcept { return K_; }
  const std::vector<double>& weights() const noexcept { return w_; }
  double beta() const noexcept { return beta_; }

 private:
  std::vector<int> K_;
  std::vector<double> w_;
  double beta_ = 1.01;
};

inline SineMixtureWarp sample_warp(const WarpLawConfig& cfg, RandomStream& rng) {
  cfg.validate();
  if (cfg.family == WarpFamily::identity) return SineMixtureWarp({0, 0}, {0.5, 0.5}, cfg.beta);
  std::vector<int> K(static_cast<std::size_t>(cfg.J));
  for (int& k : K) {
    const int v1 = rng.poisson(cfg.lambda);
    k = v1 * rng.sign();
  }
  std::vector<double> U(static_cast<std::size_t>(cfg.J - 1));
  for (double& u : U) u = rng.uniform();
  std::sort(U.begin(), U.end());
  std::vector<double> w(static_cast<std::size_t>(cfg.J));
  double prev = 0.0;
  for (std::size_t j = 0; j < U.size(); ++j) {
    w[j] = U[j] - prev;
    prev = U[j];
  }
  w.back() = 1.0 - prev;
  return SineMixtureWarp(std::move(K), std::move(w), cfg.beta);
}

// ---------------------------------------------------------------------------
// Latent models

enum class ModelName { model1, model2, rank2, rank3, breakdown };

inline const char* to_string(ModelName m) {
  switch (m) {
    case ModelName::model1: return "model1";
    case ModelName::model2: return "model2";
    case ModelName::rank2: return "rank2";
    case ModelName::rank3: return "rank3";
    case ModelName::breakdown: return "breakdown";
  }
  return "unknown";
}

struct LatentModelConfig {
  ModelName name = ModelName::model1;
  std::size_t grid_size = 101;
  double noise_halfwidth = 0.0;
  // breakdown family: xi1 ~ N(3c, 1), xi2 ~ N(-c, r_scale), xi3 ~ N(c, r_scale^2)
  double c = 2.0;
  double r_scale = 0.01;
  int rank = 2;

  void validate() const {
    if (grid_size < 3) throw Error(ErrorCode::InvalidConfig, "grid_size must be at least 3");
    if (!(noise_halfwidth >= 0.0)) throw Error(ErrorCode::InvalidConfig, "noise half-width must be >= 0");
    if (name == ModelName::breakdown && rank != 2 && rank != 3)
      throw Error(ErrorCode::InvalidConfig, "breakdown rank must be 2 or 3");
    if (name == ModelName::breakdown && !(r_scale >= 0.0))
      throw Error(ErrorCode::InvalidConfig, "r_scale must be >= 0");
  }

  bool rank_one() const { return name == ModelName::model1 || name == ModelName::model2; }
  std::size_t components() const {
    switch (name) {
      case ModelName::model1:
      case ModelName::model2: return 1;
      case ModelName::rank2: return 2;
      case ModelName::rank3: return 3;
      case ModelName::breakdown: return static_cast<std::size_t>(rank);
    }
    return 1;
  }
};

namespace detail {

inline double basis(ModelName m, std::size_t k, double t) {
  switch (m) {
    case ModelName::model1: return std::exp(std::cos(2 * kPi * t - kPi));
    case ModelName::model2: return (1.0 - (t - 0.25) * (t - 0.25)) * std::cos(3 * kPi * t);
    default: break;
  }
  switch (k) {
    case 0: return std::sqrt(2.0) * std::sin(kPi * t);
    case 1: return std::sqrt(2.0) * std::cos(2 * kPi * t);
    default: return std::sqrt(2.0) * std::cos(4 * kPi * t);
  }
}

inline double basis_derivative(ModelName m, std::size_t k, double t) {
  switch (m) {
    case ModelName::model1:
      return -2 * kPi * std::sin(2 * kPi * t - kPi) * std::exp(std::cos(2 * kPi * t - kPi));
    case ModelName::model2:
      return -2 * (t - 0.25) * std::cos(3 * kPi * t) -
             3 * kPi * (1.0 - (t - 0.25) * (t - 0.25)) * std::sin(3 * kPi * t);
    default: break;
  }
  switch (k) {
    case 0: return std::sqrt(2.0) * kPi * std::cos(kPi * t);
    case 1: return -std::sqrt(2.0) * 2 * kPi * std::sin(2 * kPi * t);
    default: return -std::sqrt(2.0) * 4 * kPi * std::sin(4 * kPi * t);
  }
}

// (mean, standard deviation) of each score.
inline std::vector<std::pair<double, double>> score_laws(const LatentModelConfig& cfg) {
  switch (cfg.name) {
    case ModelName::model1: return {{1.5, 1.0}};
    case ModelName::model2: return {{1.5, std::sqrt(0.05)}};  // 1 + Beta(2,2)
    case ModelName::rank2: return {{1.5, 1.0}, {-0.5, std::sqrt(0.15)}};
    case ModelName::rank3: return {{1.5, 1.0}, {-0.5, std::sqrt(0.15)}, {0.5, 0.15}};
    case ModelName::breakdown: {
      std::vector<std::pair<double, double>> laws{{3 * cfg.c, 1.0}, {-cfg.c, std::sqrt(cfg.r_scale)}};
      if (cfg.rank == 3) laws.push_back({cfg.c, cfg.r_scale});
      return laws;
    }
  }
  return {};
}

}  // namespace detail

/// X(t) = sum_k xi_k phi_k(t) for one of the named models.
struct LatentCurve {
  ModelName model = ModelName::model1;
  std::vector<double> xi;

  double operator()(double t) const {
    double s = 0.0;
    for (std::size_t k = 0; k < xi.size(); ++k) s += xi[k] * detail::basis(model, k, t);
    return s;
  }
  double derivative(double t) const {
    double s = 0.0;
    for (std::size_t k = 0; k < xi.size(); ++k) s += xi[k] * detail::basis_derivative(model, k, t);
    return s;
  }
  double basis(std::size_t k, double t) const { return detail::basis(model, k, t); }
  double basis_derivative(std::size_t k, double t) const { return detail::basis_derivative(model, k, t); }
};

inline LatentCurve sample_latent(const LatentModelConfig& cfg, RandomStream& rng) {
  cfg.validate();
  LatentCurve c;
  c.model = cfg.name;
  if (cfg.name == ModelName::model2) {
    c.xi = {1.0 + rng.beta22()};
    return c;
  }
  for (const auto& [m, sd] : detail::score_laws(cfg)) c.xi.push_back(rng.normal(m, sd));
  return c;
}

/// Population mean curve E X.
inline LatentCurve population_mean(const LatentModelConfig& cfg) {
  LatentCurve c;
  c.model = cfg.name;
  for (const auto& law : detail::score_laws(cfg)) c.xi.push_back(law.first);
  return c;
}

/// Observes X o T^{-1} on the grid, plus Unif(-a, a) noise when a > 0.
template <class Latent>
DiscreteCurve observe(const Latent& latent, const SineMixtureWarp& warp, std::span<const double> grid,
                      double noise_halfwidth, RandomStream& rng) {
  std::vector<double> v(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    v[j] = latent(warp.inverse(grid[j]));
    if (noise_halfwidth > 0.0) v[j] += rng.uniform(-noise_halfwidth, noise_halfwidth);
  }
  return DiscreteCurve(std::vector<double>(grid.begin(), grid.end()), std::move(v));
}

/// F_phi for an arbitrary curve: the discrete variation cdf on `dense_r` points.
inline StepCdf true_variation_cdf(const std::function<double(double)>& phi, std::size_t dense_r) {
  const auto g = uniform_grid(dense_r);
  std::vector<double> v(dense_r);
  for (std::size_t j = 0; j < dense_r; ++j) v[j] = phi(g[j]);
  return discrete_variation_cdf(DiscreteCurve(g, std::move(v))).cdf;
}

inline StepCdf true_variation_cdf(const LatentModelConfig& cfg, std::size_t dense_r) {
  if (!cfg.rank_one()) throw Error(ErrorCode::NotRankOne, "F_phi exists only for rank-one models");
  const ModelName m = cfg.name;
  return true_variation_cdf([m](double t) { return detail::basis(m, 0, t); }, dense_r);
}

// ---------------------------------------------------------------------------
// Counterexample with two latent descriptions of one warped process

/// X(t) = xi (2t - 1), Y_k(t) = xi (2t - 1) + xi (2 - 4U) phi_k(t) and
/// T_k(t) = t - (2U - 1) phi_k(t), phi_k(t) = sin((2k-1) pi t) / ((2k-1) pi);
/// then X = Y_k o T_k^{-1}.
struct CounterexamplePair {
  int k = 1;
  double U = 0.5;
  double xi = 1.0;

  double phi(double t) const {
    const double f = (2.0 * k - 1.0) * kPi;
    return std::sin(f * t) / f;
  }
  double X(double t) const { return xi * (2 * t - 1); }
  double Y(double t) const { return xi * (2 * t - 1) + xi * (2 - 4 * U) * phi(t); }
  double T(double t) const {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    return t - (2 * U - 1) * phi(t);
  }
  double T_inverse(double y) const {
    if (y <= 0.0) return 0.0;
    if (y >= 1.0) return 1.0;
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (T(mid) < y) lo = mid;
      else hi = mid;
    }
    return 0.5 * (lo + hi);
  }
};

inline CounterexamplePair counterexample_pair(int k, double M, RandomStream& rng) {
  if (k < 1) throw Error(ErrorCode::InvalidConfig, "k must be at least 1");
  if (!(M > 1.0)) throw Error(ErrorCode::InvalidConfig, "M must exceed 1");
  CounterexamplePair p;
  p.k = k;
  p.U = rng.uniform(0.5 * (1 - 1 / M), 0.5 * (1 + 1 / M));
  p.xi = rng.normal();
  return p;
}

// ---------------------------------------------------------------------------
// Ground truth

struct TruthBundle {
  LatentModelConfig model;
  WarpLawConfig warp_law;
  std::uint64_t seed = 0;
  std::vector<double> grid;
  std::vector<LatentCurve> latent;
  std::vector<SineMixtureWarp> warps;
  std::vector<DiscreteCurve> observed;
  std::optional<StepCdf> fphi;           // rank-one models only
  std::optional<std::vector<double>> phi; // phi on `grid`, rank-one models only

  std::size_t size() const { return latent.size(); }
  std::vector<double> latent_on(std::size_t i, std::span<const double> g) const {
    std::vector<double> v(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) v[j] = latent[i](g[j]);
    return v;
  }
};

inline constexpr std::uint64_t kWarpTag = 1, kLatentTag = 2, kNoiseTag = 3;

/// n independent (latent, warp, observed) triples. Curve i draws from its own
/// substreams, so the bundle does not depend on thread count. `dense_r` sets
/// the resolution of F_phi (0 skips it).
inline TruthBundle make_truth_bundle(const LatentModelConfig& cfg, const WarpLawConfig& warp_cfg, std::size_t n,
                                     std::uint64_t seed, std::size_t dense_r = 10001) {
  cfg.validate();
  warp_cfg.validate();
  if (n == 0) throw Error(ErrorCode::EmptySample, "truth bundle needs at least one curve");
  TruthBundle b;
  b.model = cfg;
  b.warp_law = warp_cfg;
  b.seed = seed;
  b.grid = uniform_grid(cfg.grid_size);
  b.latent.resize(n);
  b.warps.resize(n);
  b.observed.resize(n);
  parallel_for(n, [&](std::size_t i) {
    RandomStream ws = RandomStream::substream(seed, i, kWarpTag);
    RandomStream ls = RandomStream::substream(seed, i, kLatentTag);
    RandomStream ns = RandomStream::substream(seed, i, kNoiseTag);
    b.warps[i] = sample_warp(warp_cfg, ws);
    b.latent[i] = sample_latent(cfg, ls);
    b.observed[i] = observe(b.latent[i], b.warps[i], b.grid, cfg.noise_halfwidth, ns);
  });
  if (cfg.rank_one()) {
    if (dense_r > 0) b.fphi = true_variation_cdf(cfg, dense_r);
    std::vector<double> phi(b.grid.size());
    for (std::size_t j = 0; j < phi.size(); ++j) phi[j] = detail::basis(cfg.name, 0, b.grid[j]);
    b.phi = std::move(phi);
  }
  return b;
}

}  // namespace varireg

#endif  // VARIREG_SIMULATE_HPP
