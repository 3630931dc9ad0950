#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "varireg/fpca.hpp"

using namespace varireg;

namespace {

const double kPi = std::numbers::pi;

double norm_sq(std::span<const double> g, std::span<const double> f) {
  std::vector<double> sq(f.size());
  for (std::size_t j = 0; j < f.size(); ++j) sq[j] = f[j] * f[j];
  return trapezoid(g, sq);
}

double inner(std::span<const double> g, std::span<const double> a, std::span<const double> b) {
  std::vector<double> p(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) p[j] = a[j] * b[j];
  return trapezoid(g, p);
}

// sqrt(2) sin(pi t) and sqrt(2) cos(2 pi t), normalized under trapezoid weights
std::vector<double> basis(const std::vector<double>& g, int k) {
  std::vector<double> f(g.size());
  for (std::size_t j = 0; j < g.size(); ++j)
    f[j] = k == 0 ? std::sqrt(2.0) * std::sin(kPi * g[j]) : std::sqrt(2.0) * std::sin(2 * kPi * g[j]);
  const double s = std::sqrt(norm_sq(g, f));
  for (double& x : f) x /= s;
  return f;
}

std::vector<DiscreteCurve> combos(const std::vector<double>& g, const std::vector<std::vector<double>>& phis,
                                  const std::vector<std::vector<double>>& xis) {
  std::vector<DiscreteCurve> out;
  for (const auto& xi : xis) {
    std::vector<double> v(g.size(), 0.0);
    for (std::size_t k = 0; k < phis.size(); ++k)
      for (std::size_t j = 0; j < g.size(); ++j) v[j] += xi[k] * phis[k][j];
    out.emplace_back(g, v);
  }
  return out;
}

double population_var(const std::vector<double>& x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size());
}

}  // namespace

TEST(CrossSectionalMean, SingleCurveIsItself) {
  const DiscreteCurve c(uniform_grid(5), {1, -2, 3, 0.5, 7});
  const std::vector<DiscreteCurve> one{c};
  EXPECT_EQ(cross_sectional_mean(one).values(), c.values());
}

TEST(CrossSectionalMean, OppositeCurvesCancel) {
  const DiscreteCurve a(uniform_grid(4), {1.5, -2, 3, 0.25});
  const DiscreteCurve b(uniform_grid(4), {-1.5, 2, -3, -0.25});
  const std::vector<DiscreteCurve> both{a, b};
  const auto m = cross_sectional_mean(both);
  for (double v : m.values()) EXPECT_EQ(v, 0.0);
}

TEST(CrossSectionalMean, HandAveraged) {
  const std::vector<DiscreteCurve> cs{DiscreteCurve(uniform_grid(3), {1, 2, 3}),
                                      DiscreteCurve(uniform_grid(3), {3, 2, 0})};
  EXPECT_EQ(cross_sectional_mean(cs).values(), (std::vector<double>{2, 2, 1.5}));
}

TEST(CrossSectionalMean, Errors) {
  const std::vector<DiscreteCurve> none;
  try {
    cross_sectional_mean(none);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptySample);
  }
  const std::vector<DiscreteCurve> mixed{DiscreteCurve(uniform_grid(3), {1, 2, 3}),
                                         DiscreteCurve({0.0, 0.4, 1.0}, {1, 2, 3})};
  try {
    cross_sectional_mean(mixed);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::GridMismatch);
  }
}

TEST(Covariance, IdenticalCurvesGiveZero) {
  const DiscreteCurve c(uniform_grid(6), {1, 4, 2, 8, 5, 7});
  const std::vector<DiscreteCurve> same(4, c);
  EXPECT_EQ(covariance_matrix(same).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Covariance, NeedsTwoCurves) {
  const std::vector<DiscreteCurve> one{DiscreteCurve(uniform_grid(3), {1, 2, 3})};
  try {
    covariance_matrix(one);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptySample);
  }
}

TEST(Covariance, RankOneOuterProduct) {
  const auto g = uniform_grid(81);
  const auto phi = basis(g, 0);
  const std::vector<double> xi{0.3, 1.7, -0.4, 2.2, 1.1};
  std::vector<std::vector<double>> xis;
  for (double x : xi) xis.push_back({x});
  const auto curves = combos(g, {phi}, xis);
  const auto K = covariance_matrix(curves);
  const double s2 = population_var(xi);
  for (std::size_t a = 0; a < g.size(); ++a)
    for (std::size_t b = 0; b < g.size(); ++b) EXPECT_NEAR(K(a, b), s2 * phi[a] * phi[b], 1e-12);
  const auto ed = leading_eigenpairs(K, g, 2);
  EXPECT_LE(ed.eigenvalues[1], 1e-10 * ed.eigenvalues[0]);
  EXPECT_NEAR(ed.eigenvalues[0], s2, 1e-10);
  // symmetric PSD
  EXPECT_EQ((K - K.transpose()).cwiseAbs().maxCoeff(), 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
}

TEST(Covariance, TwoOrthogonalComponents) {
  const auto g = uniform_grid(201);
  const auto p0 = basis(g, 0), p1 = basis(g, 1);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> N;
  std::vector<std::vector<double>> xis;
  std::vector<double> x0, x1;
  for (int i = 0; i < 40; ++i) {
    x0.push_back(1.5 + N(rng));
    x1.push_back(-0.5 + 0.3 * N(rng));
    xis.push_back({x0.back(), x1.back()});
  }
  const auto curves = combos(g, {p0, p1}, xis);
  const auto ed = leading_eigenpairs(covariance_matrix(curves), g, 3);
  // orthonormal components: eigenvalues are those of the score covariance
  ASSERT_NEAR(inner(g, p0, p1), 0.0, 1e-12);
  double m0 = 0, m1 = 0;
  for (int i = 0; i < 40; ++i) {
    m0 += x0[i] / 40;
    m1 += x1[i] / 40;
  }
  double c01 = 0;
  for (int i = 0; i < 40; ++i) c01 += (x0[i] - m0) * (x1[i] - m1) / 40;
  Eigen::Matrix2d M;
  const double v0 = population_var(x0), v1 = population_var(x1);
  M << v0, c01, c01, v1;
  Eigen::EigenSolver<Eigen::Matrix2d> es(M);
  std::vector<double> ev{es.eigenvalues()(0).real(), es.eigenvalues()(1).real()};
  std::sort(ev.rbegin(), ev.rend());
  EXPECT_NEAR(ed.eigenvalues[0], ev[0], 1e-9);
  EXPECT_NEAR(ed.eigenvalues[1], ev[1], 1e-9);
  EXPECT_LE(ed.eigenvalues[2], 1e-10 * ed.eigenvalues[0]);
  EXPECT_NEAR(ed.eigenvalues[0], v0, 0.05 * v0);
  EXPECT_NEAR(ed.eigenvalues[1], v1, 0.1 * v1);
}

TEST(LeadingEigenpairs, RecoversUnitRankOneKernel) {
  const auto g = uniform_grid(101);
  const auto phi = basis(g, 0);
  const auto r = static_cast<Eigen::Index>(g.size());
  Eigen::MatrixXd K(r, r);
  for (Eigen::Index a = 0; a < r; ++a)
    for (Eigen::Index b = 0; b < r; ++b) K(a, b) = phi[a] * phi[b];
  const auto ed = leading_eigenpairs(K, g, 1);
  EXPECT_NEAR(ed.eigenvalues[0], 1.0, 1e-8);
  for (std::size_t j = 0; j < g.size(); ++j) EXPECT_NEAR(ed.eigenfunctions[0][j], phi[j], 1e-8);
  EXPECT_NEAR(ed.explained_ratios[0], 1.0, 1e-8);
}

TEST(LeadingEigenpairs, NegativeKernelDirectionIsFlipped) {
  const auto g = uniform_grid(101);
  auto phi = basis(g, 0);
  for (double& x : phi) x = -x;
  const auto r = static_cast<Eigen::Index>(g.size());
  Eigen::MatrixXd K(r, r);
  for (Eigen::Index a = 0; a < r; ++a)
    for (Eigen::Index b = 0; b < r; ++b) K(a, b) = phi[a] * phi[b];
  const auto ed = leading_eigenpairs(K, g, 1);
  EXPECT_GT(trapezoid(g, ed.eigenfunctions[0]), 0.0);
}

TEST(LeadingEigenpairs, ZeroIntegralUsesLargestCoordinate) {
  // odd about 1/2, so the integral vanishes
  const auto g = uniform_grid(101);
  std::vector<double> phi(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) phi[j] = -std::sin(2 * kPi * g[j]);
  const auto r = static_cast<Eigen::Index>(g.size());
  Eigen::MatrixXd K(r, r);
  for (Eigen::Index a = 0; a < r; ++a)
    for (Eigen::Index b = 0; b < r; ++b) K(a, b) = phi[a] * phi[b];
  const auto ed = leading_eigenpairs(K, g, 1);
  const auto& f = ed.eigenfunctions[0];
  std::size_t big = 0;
  for (std::size_t j = 1; j < f.size(); ++j)
    if (std::abs(f[j]) > std::abs(f[big])) big = j;
  EXPECT_GT(f[big], 0.0);
}

TEST(LeadingEigenpairs, ZeroMatrixFlagsTrace) {
  const auto g = uniform_grid(11);
  const auto ed = leading_eigenpairs(Eigen::MatrixXd::Zero(11, 11), g, 3);
  EXPECT_TRUE(ed.trace_zero);
  for (double v : ed.eigenvalues) EXPECT_EQ(v, 0.0);
  for (double v : ed.explained_ratios) EXPECT_EQ(v, 0.0);
}

TEST(LeadingEigenpairs, RejectsAsymmetricKernel) {
  const auto g = uniform_grid(4);
  Eigen::MatrixXd K = Eigen::MatrixXd::Identity(4, 4);
  K(0, 1) = 0.5;
  try {
    leading_eigenpairs(K, g, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonSymmetric);
  }
  EXPECT_THROW(leading_eigenpairs(Eigen::MatrixXd::Identity(3, 3), g, 1), Error);
}

TEST(LeadingEigenpairs, OrthonormalityTraceAndResidual) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> N;
  std::uniform_real_distribution<double> U(-0.3, 0.3);
  for (int rep = 0; rep < 10; ++rep) {
    auto g = uniform_grid(60);
    for (std::size_t j = 1; j + 1 < g.size(); ++j) g[j] += U(rng) / 59.0;
    std::vector<DiscreteCurve> curves;
    for (int i = 0; i < 25; ++i) {
      std::vector<double> v(g.size());
      const double a = N(rng), b = N(rng), c = 0.3 * N(rng);
      for (std::size_t j = 0; j < g.size(); ++j)
        v[j] = a * std::sin(kPi * g[j]) + b * g[j] * g[j] + c * std::cos(5 * g[j]) + 0.01 * N(rng);
      curves.emplace_back(g, v);
    }
    const auto K = covariance_matrix(curves);
    const auto ed = leading_eigenpairs(K, g, g.size());
    double sum = 0.0;
    for (double l : ed.eigenvalues) sum += l;
    EXPECT_NEAR(sum, ed.trace, 1e-8 * std::max(1.0, ed.trace));
    for (std::size_t k = 1; k < ed.eigenvalues.size(); ++k) EXPECT_LE(ed.eigenvalues[k], ed.eigenvalues[k - 1]);
    const auto w = trapezoid_weights(g);
    for (std::size_t a = 0; a < 4; ++a) {
      EXPECT_NEAR(norm_sq(g, ed.eigenfunctions[a]), 1.0, 1e-8);
      for (std::size_t b = 0; b < a; ++b) EXPECT_NEAR(inner(g, ed.eigenfunctions[a], ed.eigenfunctions[b]), 0.0, 1e-8);
      // residual of the weighted operator: sum_k K(j,k) w_k phi(k) = lambda phi(j)
      double res = 0.0;
      for (std::size_t j = 0; j < g.size(); ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) s += K(j, k) * w[k] * ed.eigenfunctions[a][k];
        res = std::max(res, std::abs(s - ed.eigenvalues[a] * ed.eigenfunctions[a][j]));
      }
      EXPECT_LE(res, 1e-9 * K.cwiseAbs().maxCoeff() * static_cast<double>(g.size()));
    }
  }
}

TEST(Scores, ProjectionExamples) {
  const auto g = uniform_grid(101);
  const auto p0 = basis(g, 0);
  std::vector<double> ortho(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) ortho[j] = std::sin(2 * kPi * g[j]) * (g[j] < 2.0 ? 1.0 : 0.0);
  // make it exactly orthogonal to p0 under the quadrature
  const double ip = inner(g, ortho, p0);
  for (std::size_t j = 0; j < g.size(); ++j) ortho[j] -= ip * p0[j];
  std::vector<double> scaled(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) scaled[j] = -2.5 * p0[j];
  const std::vector<DiscreteCurve> cs{DiscreteCurve(g, scaled), DiscreteCurve(g, ortho),
                                      DiscreteCurve(g, std::vector<double>(g.size(), 0.0))};
  const auto s = scores(cs, p0, g);
  EXPECT_NEAR(s[0], -2.5, 1e-12);
  EXPECT_NEAR(s[1], 0.0, 1e-8);
  EXPECT_EQ(s[2], 0.0);
}

TEST(Scores, GridMismatch) {
  const auto g = uniform_grid(5);
  const std::vector<DiscreteCurve> cs{DiscreteCurve({0.0, 0.2, 0.5, 0.7, 1.0}, {1, 2, 3, 4, 5})};
  const std::vector<double> phi(5, 1.0);
  try {
    scores(cs, phi, g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::GridMismatch);
  }
}

TEST(Analyze, RankOneCertificateAndReconstruction) {
  const auto g = uniform_grid(101);
  std::vector<double> phi(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) phi[j] = std::exp(std::cos(2 * kPi * g[j] - kPi));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> N(1.5, 1.0);
  std::vector<std::vector<double>> xis;
  for (int i = 0; i < 30; ++i) xis.push_back({N(rng)});
  const auto curves = combos(g, {phi}, xis);
  const auto fr = analyze(curves, 3);
  EXPECT_GE(fr.eigen.explained_ratios[0], 1.0 - 1e-8);
  // uncentered scores reconstruct the curves
  for (std::size_t i = 0; i < curves.size(); ++i) {
    double mx = 0.0, err = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      mx = std::max(mx, std::abs(curves[i].values()[j]));
      err = std::max(err, std::abs(fr.scores[0][i] * fr.eigen.eigenfunctions[0][j] - curves[i].values()[j]));
    }
    EXPECT_LE(err, 1e-6 * mx);
  }
}

TEST(Analyze, PermutationGivesIdenticalEigenfunctions) {
  const auto g = uniform_grid(64);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> N;
  std::vector<std::vector<double>> xis;
  for (int i = 0; i < 12; ++i) xis.push_back({N(rng), 0.5 * N(rng)});
  auto curves = combos(g, {basis(g, 0), basis(g, 1)}, xis);
  const auto a = analyze(curves, 2);
  std::reverse(curves.begin(), curves.end());
  const auto b = analyze(curves, 2);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t j = 0; j < g.size(); ++j)
      EXPECT_NEAR(a.eigen.eigenfunctions[k][j], b.eigen.eigenfunctions[k][j], 1e-9);
}

TEST(Analyze, LargeGridIsThinned) {
  const auto g = uniform_grid(3001);
  std::vector<std::vector<double>> xis{{1.0}, {2.0}, {-0.5}};
  const auto fr = analyze(combos(g, {basis(g, 0)}, xis), 1, 2048);
  EXPECT_LE(fr.eigen.grid.size(), 2048u);
  EXPECT_EQ(fr.eigen.grid.front(), 0.0);
  EXPECT_EQ(fr.eigen.grid.back(), 1.0);
  EXPECT_GE(fr.eigen.explained_ratios[0], 1.0 - 1e-8);
}
