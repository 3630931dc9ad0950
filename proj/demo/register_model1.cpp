// Simulates Model 1 curves, registers them and compares the registered
// mean with the warped cross-sectional mean.
#include <cstdio>

#include "varireg/varireg.hpp"

int main() {
  using namespace varireg;
  LatentModelConfig model;  // model1 on 101 points
  const TruthBundle b = make_truth_bundle(model, WarpLawConfig{}, 50, 2024);

  const RegistrationResult res = register_discrete(b.observed);
  const FpcaResult pca = analyze(res.registered, 2);
  const DiscreteCurve warped_mean = cross_sectional_mean(b.observed);

  double reg_err = 0.0, warp_err = 0.0;
  for (std::size_t j = 0; j < res.grid.size(); ++j) {
    double latent_mean = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) latent_mean += b.latent[i](res.grid[j]);
    latent_mean /= static_cast<double>(b.size());
    reg_err = std::max(reg_err, std::abs(res.mean.values()[j] - latent_mean));
    warp_err = std::max(warp_err, std::abs(warped_mean.values()[j] - latent_mean));
  }
  const double d = wasserstein2(res.template_quantile, *b.fphi);

  std::printf("curves                     %zu\n", b.size());
  std::printf("sup error, registered mean %.4f\n", reg_err);
  std::printf("sup error, warped mean     %.4f\n", warp_err);
  std::printf("leading PC explains        %.4f\n", pca.eigen.explained_ratios[0]);
  std::printf("d_W(template, F_phi)       %.4f\n", d);
  return 0;
}
