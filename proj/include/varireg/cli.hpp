#ifndef VARIREG_CLI_HPP
#define VARIREG_CLI_HPP

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "varireg/csv.hpp"
#include "varireg/diagnostics.hpp"
#include "varireg/fpca.hpp"
#include "varireg/parallel.hpp"
#include "varireg/registration.hpp"
#include "varireg/simulate.hpp"

namespace varireg::cli {

using json = nlohmann::ordered_json;

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kZeroVariation = 3, kWindow = 4 };

struct RunConfig {
  std::string config;
  std::string out = ".";
  unsigned threads = 0;
  std::optional<std::uint64_t> seed;

  // register
  std::string input;
  std::string regime = "discrete";
  std::optional<double> bandwidth, h1, h2;
  bool auto_bandwidth = false;
  bool smooth_warps = false;
  std::size_t knots = 11;
  std::size_t eigen = 3;
  std::optional<std::size_t> grid_size;

  // simulate
  std::string model = "model1";
  std::string warp = "sine";
  std::size_t n = 50;
  std::size_t r = 101;
  double noise = 0.0;

  // diagnose
  std::string result_dir;
  std::string truth_dir;
  std::string mean_mode = "auto";
  bool rate_check = false;
  std::vector<std::size_t> rate_ns{25, 50, 100, 200};
  std::size_t rate_reps = 50;
};

/// Usage or input problems that map to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Model and warp specifications, e.g. "breakdown c=2 r_scale=0.01 rank=3"

inline std::vector<std::string> tokens(const std::string& spec) {
  std::istringstream in(spec);
  std::vector<std::string> out;
  for (std::string s; in >> s;) out.push_back(s);
  return out;
}

inline std::pair<std::string, double> key_value(const std::string& tok) {
  const auto eq = tok.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("expected key=value, got '" + tok + "'");
  try {
    return {tok.substr(0, eq), csv::to_double(tok.substr(eq + 1), 0)};
  } catch (const csv::ParseError&) {
    throw UsageError("bad number in '" + tok + "'");
  }
}

inline LatentModelConfig parse_model(const std::string& spec) {
  const auto t = tokens(spec);
  if (t.empty()) throw UsageError("empty model specification");
  LatentModelConfig cfg;
  if (t[0] == "model1") cfg.name = ModelName::model1;
  else if (t[0] == "model2") cfg.name = ModelName::model2;
  else if (t[0] == "rank2") cfg.name = ModelName::rank2;
  else if (t[0] == "rank3") cfg.name = ModelName::rank3;
  else if (t[0] == "breakdown") cfg.name = ModelName::breakdown;
  else throw UsageError("unknown model '" + t[0] + "'");
  for (std::size_t k = 1; k < t.size(); ++k) {
    const auto [key, v] = key_value(t[k]);
    if (cfg.name != ModelName::breakdown) throw UsageError("model '" + t[0] + "' takes no parameters");
    if (key == "c") cfg.c = v;
    else if (key == "r_scale" || key == "r") cfg.r_scale = v;
    else if (key == "rank") {
      if (v != 2.0 && v != 3.0) throw UsageError("rank must be 2 or 3");
      cfg.rank = static_cast<int>(v);
    } else throw UsageError("unknown model parameter '" + key + "'");
  }
  return cfg;
}

inline WarpLawConfig parse_warp(const std::string& spec) {
  const auto t = tokens(spec);
  if (t.empty()) throw UsageError("empty warp specification");
  WarpLawConfig cfg;
  if (t[0] == "sine" || t[0] == "sine_mixture") cfg.family = WarpFamily::sine_mixture;
  else if (t[0] == "identity") cfg.family = WarpFamily::identity;
  else throw UsageError("unknown warp family '" + t[0] + "'");
  for (std::size_t k = 1; k < t.size(); ++k) {
    const auto [key, v] = key_value(t[k]);
    if (key == "J") cfg.J = static_cast<int>(v);
    else if (key == "beta") cfg.beta = v;
    else if (key == "lambda") cfg.lambda = v;
    else throw UsageError("unknown warp parameter '" + key + "'");
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

inline std::string model_spec(const LatentModelConfig& cfg) {
  std::string s = to_string(cfg.name);
  if (cfg.name == ModelName::breakdown)
    s += " c=" + csv::format_double(cfg.c) + " r_scale=" + csv::format_double(cfg.r_scale) +
         " rank=" + std::to_string(cfg.rank);
  return s;
}

// ---------------------------------------------------------------------------
// Helpers

/// Smallest h for which every point of [0,1] sees `degree + 1` grid points
/// strictly inside its Epanechnikov window, padded by 1%.
inline double min_feasible_bandwidth(std::span<const double> g, int degree) {
  const std::size_t need = std::min<std::size_t>(static_cast<std::size_t>(degree) + 1, g.size());
  std::vector<double> probes{0.0, 1.0};
  for (std::size_t j = 0; j < g.size(); ++j) {
    probes.push_back(g[j]);
    if (j + 1 < g.size()) probes.push_back(0.5 * (g[j] + g[j + 1]));
  }
  double worst = 0.0;
  std::vector<double> d(g.size());
  for (double t : probes) {
    for (std::size_t j = 0; j < g.size(); ++j) d[j] = std::abs(g[j] - t);
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(need - 1), d.end());
    worst = std::max(worst, d[need - 1]);
  }
  return 1.01 * worst;
}

inline void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(path + ": " + e.what());
  }
}

inline std::string curve_name(std::size_t i, std::size_t n) {
  const std::size_t width = std::to_string(n > 0 ? n - 1 : 0).size();
  std::string s = std::to_string(i);
  return "curve_" + std::string(width - std::min(width, s.size()), '0') + s;
}

inline std::string join(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

/// Maps a library error to an exit code and a message naming the curve.
inline int report_error(const Error& e, const std::vector<std::string>& ids, const std::vector<DiscreteCurve>& curves,
                        int degree, std::ostream& err) {
  std::string who;
  if (e.curve() && *e.curve() < ids.size()) who = "curve '" + ids[*e.curve()] + "': ";
  switch (e.code()) {
    case ErrorCode::ZeroVariation:
      err << "error: " << who << "zero total variation, registration undefined (" << e.what() << ")\n";
      return kZeroVariation;
    case ErrorCode::EmptyWindow:
    case ErrorCode::SingularFit:
    case ErrorCode::AllCandidatesSingular: {
      double h = 0.0;
      if (e.curve() && *e.curve() < curves.size()) {
        h = min_feasible_bandwidth(curves[*e.curve()].grid(), degree);
      } else {
        for (const auto& c : curves) h = std::max(h, min_feasible_bandwidth(c.grid(), degree));
      }
      err << "error: " << who << e.what() << "; suggested minimum bandwidth h >= " << csv::format_double(h) << "\n";
      return kWindow;
    }
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidCurve:
    case ErrorCode::GridMismatch:
    case ErrorCode::NotRankOne:
      err << "error: " << who << e.what() << "\n";
      return kUsage;
    default:
      err << "error: " << who << e.what() << "\n";
      return kFailure;
  }
}

// ---------------------------------------------------------------------------
// register

inline int cmd_register(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  csv::CurveSet set;
  try {
    set = csv::read_curves(cfg.input);
  } catch (const csv::ParseError& e) {
    err << "error: " << cfg.input << ": " << e.what() << "\n";
    return kUsage;
  }
  const std::size_t n = set.curves.size();

  std::vector<double> out_grid;
  if (cfg.grid_size) {
    if (*cfg.grid_size < 3) throw UsageError("grid-size must be at least 3");
    double lo = 1.0, hi = 0.0;
    for (const auto& c : set.curves) {
      lo = std::min(lo, c.grid().front());
      hi = std::max(hi, c.grid().back());
    }
    out_grid = uniform_grid(*cfg.grid_size, lo, hi);
  }

  RegistrationResult res;
  int degree = 0;
  try {
    if (cfg.regime == "discrete") {
      DiscreteOptions opt;
      opt.bandwidth = cfg.bandwidth;
      opt.smooth_warps = cfg.smooth_warps;
      opt.n_knots = cfg.knots;
      opt.output_grid = out_grid;
      res = register_discrete(set.curves, opt);
    } else if (cfg.regime == "complete") {
      res = register_complete(set.curves, out_grid);
    } else if (cfg.regime == "noisy") {
      degree = 2;
      NoisyOptions opt;
      opt.auto_bandwidth = cfg.auto_bandwidth || !(cfg.h1 && cfg.h2);
      if (cfg.h1) opt.h1 = *cfg.h1;
      if (cfg.h2) opt.h2 = *cfg.h2;
      opt.output_grid = out_grid;
      res = register_noisy(set.curves, opt);
    } else {
      throw UsageError("unknown regime '" + cfg.regime + "' (complete, discrete, noisy)");
    }
  } catch (const Error& e) {
    return report_error(e, set.ids, set.curves, degree, err);
  }

  std::optional<FpcaResult> fpca;
  if (n >= 2) fpca = analyze(res.registered, cfg.eigen);

  std::filesystem::create_directories(cfg.out);
  {
    csv::Writer w(join(cfg.out, "warps.csv"));
    w.header({"curve_id", "t", "warp_value", "inverse_warp_value"});
    for (std::size_t i = 0; i < n; ++i)
      for (double t : res.grid) w.row(set.ids[i], t, res.warps[i](t), res.inverse_warps[i](t));
  }
  {
    csv::Writer w(join(cfg.out, "registered.csv"));
    w.header({"curve_id", "t", "value"});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < res.grid.size(); ++j) w.row(set.ids[i], res.grid[j], res.registered[i].values()[j]);
  }
  {
    csv::Writer w(join(cfg.out, "mean.csv"));
    w.header({"t", "value"});
    for (std::size_t j = 0; j < res.grid.size(); ++j) w.row(res.grid[j], res.mean.values()[j]);
  }
  {
    csv::Writer w(join(cfg.out, "template_quantile.csv"));
    w.header({"u_start", "u_end", "q_start", "q_end"});
    const auto& q = res.template_quantile;
    for (std::size_t k = 0; k < q.segments(); ++k) w.row(q.knots()[k], q.knots()[k + 1], q.left()[k], q.right()[k]);
  }
  const std::size_t m = fpca ? fpca->eigen.eigenfunctions.size() : 0;
  {
    csv::Writer w(join(cfg.out, "eigen.csv"));
    std::vector<std::string> head{"t"};
    for (std::size_t k = 0; k < m; ++k) head.push_back("phi" + std::to_string(k + 1));
    w.row_strings(head);
    if (fpca)
      for (std::size_t j = 0; j < fpca->eigen.grid.size(); ++j) {
        std::vector<std::string> row{csv::format_double(fpca->eigen.grid[j])};
        for (std::size_t k = 0; k < m; ++k) row.push_back(csv::format_double(fpca->eigen.eigenfunctions[k][j]));
        w.row_strings(row);
      }
  }
  {
    csv::Writer w(join(cfg.out, "scores.csv"));
    std::vector<std::string> head{"curve_id"};
    for (std::size_t k = 0; k < m; ++k) head.push_back("score" + std::to_string(k + 1));
    w.row_strings(head);
    if (fpca)
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::string> row{set.ids[i]};
        for (std::size_t k = 0; k < m; ++k) row.push_back(csv::format_double(fpca->scores[k][i]));
        w.row_strings(row);
      }
  }

  json rep;
  rep["command"] = "register";
  rep["regime"] = to_string(res.regime);
  rep["input_format"] = set.long_format ? "long" : "wide";
  rep["n_curves"] = n;
  rep["curve_ids"] = set.ids;
  std::vector<std::size_t> sizes;
  for (const auto& c : set.curves) sizes.push_back(c.size());
  rep["grid_sizes"] = sizes;
  rep["output_grid_size"] = res.grid.size();
  if (set.transform) rep["time_transform"] = {{"offset", set.transform->offset}, {"scale", set.transform->scale}};
  else rep["time_transform"] = nullptr;
  rep["bandwidths"] = res.bandwidths;
  if (res.regime == Regime::noisy) rep["deriv_bandwidths"] = res.deriv_bandwidths;
  json low = json::array();
  for (std::size_t i : res.low_variation) low.push_back(set.ids[i]);
  rep["low_variation_curves"] = low;
  if (fpca) {
    rep["explained_ratios"] = fpca->eigen.explained_ratios;
    rep["eigenvalues"] = fpca->eigen.eigenvalues;
    rep["trace_zero"] = fpca->eigen.trace_zero;
    rep["fpca_grid_size"] = fpca->eigen.grid.size();
  } else {
    rep["explained_ratios"] = json::array();
  }
  json flags = res.flags;
  if (!fpca) flags.push_back("fpca_skipped_single_curve");
  rep["flags"] = flags;
  rep["options"] = {{"smooth_warps", cfg.smooth_warps}, {"knots", cfg.knots}, {"eigen", cfg.eigen}};
  write_json(join(cfg.out, "report.json"), rep);
  out << "registered " << n << " curves (" << to_string(res.regime) << ") -> " << cfg.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// simulate

inline int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  if (!cfg.seed) throw UsageError("simulate requires --seed");
  LatentModelConfig model = parse_model(cfg.model);
  const WarpLawConfig warp = parse_warp(cfg.warp);
  model.grid_size = cfg.r;
  model.noise_halfwidth = cfg.noise;
  if (cfg.n == 0) throw UsageError("n must be positive");
  const TruthBundle b = make_truth_bundle(model, warp, cfg.n, *cfg.seed);
  const std::size_t n = b.size();
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = curve_name(i, n);

  std::filesystem::create_directories(cfg.out);
  auto wide = [&](const std::string& file, auto value) {
    csv::Writer w(join(cfg.out, file));
    std::vector<std::string> head{"t"};
    head.insert(head.end(), ids.begin(), ids.end());
    w.row_strings(head);
    for (std::size_t j = 0; j < b.grid.size(); ++j) {
      std::vector<std::string> row{csv::format_double(b.grid[j])};
      for (std::size_t i = 0; i < n; ++i) row.push_back(csv::format_double(value(i, j)));
      w.row_strings(row);
    }
  };
  wide("observed.csv", [&](std::size_t i, std::size_t j) { return b.observed[i].values()[j]; });
  wide("truth_latent.csv", [&](std::size_t i, std::size_t j) { return b.latent[i](b.grid[j]); });
  {
    csv::Writer w(join(cfg.out, "truth_warps.csv"));
    w.header({"curve_id", "t", "warp_value", "inverse_warp_value"});
    for (std::size_t i = 0; i < n; ++i)
      for (double t : b.grid) w.row(ids[i], t, b.warps[i](t), b.warps[i].inverse(t));
  }
  {
    csv::Writer w(join(cfg.out, "truth_fphi.csv"));
    w.header({"t", "value"});
    if (b.fphi)
      for (std::size_t k = 0; k < b.fphi->jump_locations().size(); ++k)
        w.row(b.fphi->jump_locations()[k], b.fphi->cum_values()[k]);
  }
  json meta;
  meta["command"] = "simulate";
  meta["model"] = model_spec(model);
  meta["rank"] = model.components();
  meta["warp"] = cfg.warp;
  meta["n"] = n;
  meta["r"] = cfg.r;
  meta["noise"] = cfg.noise;
  meta["seed"] = *cfg.seed;
  meta["fphi_available"] = b.fphi.has_value();
  json scores = json::array();
  for (const auto& l : b.latent) scores.push_back(l.xi);
  meta["scores"] = scores;
  write_json(join(cfg.out, "simulation.json"), meta);
  out << "simulated " << n << " curves (" << model_spec(model) << ") -> " << cfg.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// diagnose

struct LoadedResult {
  std::vector<std::string> ids;
  RegistrationResult res;
};

inline LoadedResult load_result(const std::string& dir) {
  LoadedResult lr;
  const auto reg = csv::read_long(csv::read_file(join(dir, "registered.csv")));
  if (reg.transform) throw UsageError("registered.csv: time values outside [0,1]");
  lr.ids = reg.ids;
  lr.res.registered = reg.curves;
  lr.res.grid = reg.curves.front().grid();
  for (std::size_t i = 1; i < reg.curves.size(); ++i)
    if (!same_grid(reg.curves[i].grid(), lr.res.grid))
      throw UsageError("registered.csv: curve '" + reg.ids[i] + "' is not on the common output grid");
  lr.res.mean = cross_sectional_mean(lr.res.registered);

  const auto warps = csv::read_long(csv::read_file(join(dir, "warps.csv")), "warp_value");
  if (warps.ids != lr.ids) throw UsageError("warps.csv: curve ids differ from registered.csv");
  for (const auto& c : warps.curves) {
    if (!same_grid(c.grid(), lr.res.grid)) throw UsageError("warps.csv: grid differs from registered.csv");
    lr.res.warps.push_back(boundary_extend({c.grid(), c.values()}, lr.res.grid.back()));
  }

  const std::string tq = join(dir, "template_quantile.csv");
  if (std::filesystem::exists(tq)) {
    const auto t = csv::read_file(tq);
    const std::size_t a = csv::column(t, "u_start"), b = csv::column(t, "u_end"), c = csv::column(t, "q_start"),
                      d = csv::column(t, "q_end");
    std::vector<double> knots, left, right;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      if (r == 0) knots.push_back(csv::to_double(t.rows[r][a], t.lines[r]));
      knots.push_back(csv::to_double(t.rows[r][b], t.lines[r]));
      left.push_back(csv::to_double(t.rows[r][c], t.lines[r]));
      right.push_back(csv::to_double(t.rows[r][d], t.lines[r]));
    }
    try {
      lr.res.template_quantile = QuantileFn(knots, left, right);
    } catch (const Error& e) {
      throw UsageError(std::string("template_quantile.csv: ") + e.what());
    }
  }
  return lr;
}

inline TruthSamples load_truth(const std::string& dir, const std::vector<std::string>& ids) {
  const auto latent = csv::read_wide(csv::read_file(join(dir, "truth_latent.csv")));
  const auto warps = csv::read_long(csv::read_file(join(dir, "truth_warps.csv")), "warp_value");
  TruthSamples t;
  t.grid = latent.curves.front().grid();
  for (const auto& id : ids) {
    auto li = std::find(latent.ids.begin(), latent.ids.end(), id);
    auto wi = std::find(warps.ids.begin(), warps.ids.end(), id);
    if (li == latent.ids.end() || wi == warps.ids.end()) throw UsageError("truth has no curve '" + id + "'");
    const auto& wc = warps.curves[static_cast<std::size_t>(wi - warps.ids.begin())];
    if (!same_grid(wc.grid(), t.grid)) throw UsageError("truth_warps.csv: grid differs from truth_latent.csv");
    t.latent.push_back(latent.curves[static_cast<std::size_t>(li - latent.ids.begin())].values());
    t.warp.push_back(wc.values());
  }
  const std::string fp = join(dir, "truth_fphi.csv");
  if (std::filesystem::exists(fp)) {
    const auto f = csv::read_file(fp);
    if (!f.rows.empty()) {
      const std::size_t a = csv::column(f, "t"), b = csv::column(f, "value");
      std::vector<double> loc, cum;
      for (std::size_t r = 0; r < f.rows.size(); ++r) {
        loc.push_back(csv::to_double(f.rows[r][a], f.lines[r]));
        cum.push_back(csv::to_double(f.rows[r][b], f.lines[r]));
      }
      try {
        t.fphi = StepCdf(loc, cum);
      } catch (const Error& e) {
        throw UsageError(std::string("truth_fphi.csv: ") + e.what());
      }
    }
  }
  return t;
}

inline json rate_json(const RateCheckResult& rc) {
  json j;
  j["ns"] = rc.ns;
  j["grid_sizes"] = rc.grid_sizes;
  j["mean_dW2"] = rc.means;
  j["std_errors"] = rc.std_errors;
  j["slope"] = rc.slope ? json(*rc.slope) : json(nullptr);
  j["slope_skipped"] = rc.slope_skipped;
  return j;
}

inline int cmd_diagnose(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.result_dir.empty() && !cfg.rate_check) throw UsageError("diagnose needs a result directory or --rate-check");
  json rep;
  rep["command"] = "diagnose";
  json flags = json::array();
  std::vector<std::string> ids;
  std::vector<double> z;
  std::optional<RegistrationReport> truth_rep;

  if (!cfg.result_dir.empty()) {
    LoadedResult lr;
    try {
      lr = load_result(cfg.result_dir);
    } catch (const csv::ParseError& e) {
      throw UsageError(cfg.result_dir + ": " + e.what());
    }
    ids = lr.ids;
    const auto& curves = lr.res.registered;
    if (curves.size() < 2) throw UsageError("diagnose needs at least two registered curves");
    const MeanMode mode = cfg.mean_mode == "force_zero_deriv" ? MeanMode::force_zero_deriv : MeanMode::automatic;
    if (cfg.mean_mode != "auto" && cfg.mean_mode != "force_zero_deriv")
      throw UsageError("mean-mode must be auto or force_zero_deriv");
    ZResult zr;
    try {
      zr = z_statistic(curves, mode);
    } catch (const Error& e) {
      return report_error(e, ids, curves, 0, err);
    }
    z = zr.z;
    const auto f = analyze(curves, cfg.eigen);
    rep["curve_ids"] = ids;
    rep["explained_ratios"] = f.eigen.explained_ratios;
    rep["z_stats"] = z;
    rep["z_statistic"] = {
        {"branch", zr.branch == ZBranch::mean_derivative ? "mean_derivative" : "zero_mean_derivative"},
        {"estimator", zr.branch == ZBranch::mean_derivative
                          ? "sample mean plug-in, finite-difference derivatives"
                          : "plug-in with the top two principal components, finite-difference derivatives"}};
    if (!zr.above_bound.empty()) flags.push_back("z_above_2");

    if (!cfg.truth_dir.empty()) {
      TruthSamples truth;
      try {
        truth = load_truth(cfg.truth_dir, ids);
      } catch (const csv::ParseError& e) {
        throw UsageError(cfg.truth_dir + ": " + e.what());
      }
      if (truth.fphi && !std::filesystem::exists(join(cfg.result_dir, "template_quantile.csv"))) truth.fphi.reset();
      truth_rep = evaluate_against_truth(lr.res, truth);
      if (truth_rep->dW2_template_to_target) rep["dW2_template_to_target"] = *truth_rep->dW2_template_to_target;
      rep["warp_sup_errors"] = *truth_rep->warp_sup_errors;
      rep["curve_rel_L2_errors"] = *truth_rep->curve_rel_L2_errors;
      rep["median_curve_rel_L2_error"] = median(*truth_rep->curve_rel_L2_errors);
      rep["mean_sup_error"] = *truth_rep->mean_sup_error;
    }
  }

  if (cfg.rate_check) {
    const LatentModelConfig model = parse_model(cfg.model);
    if (!model.rank_one()) throw UsageError("rate check needs a rank-one model (model1 or model2)");
    const WarpLawConfig warp = parse_warp(cfg.warp);
    auto ns = cfg.rate_ns;
    const auto rc = rate_check(model, warp, ns, cfg.rate_reps, cfg.seed.value_or(1));
    json j = rate_json(rc);
    j["model"] = model_spec(model);
    j["warp"] = cfg.warp;
    j["reps"] = cfg.rate_reps;
    j["seed"] = cfg.seed.value_or(1);
    rep["rate_check"] = j;
  }
  rep["flags"] = flags;

  const std::string dir = cfg.out;
  std::filesystem::create_directories(dir);
  write_json(join(dir, "report.json"), rep);
  {
    csv::Writer w(join(dir, "metrics.csv"));
    w.header({"curve_id", "z_stat", "warp_sup_error", "curve_rel_L2_error"});
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::vector<std::string> row{ids[i], csv::format_double(z[i])};
      row.push_back(truth_rep ? csv::format_double((*truth_rep->warp_sup_errors)[i]) : "");
      row.push_back(truth_rep ? csv::format_double((*truth_rep->curve_rel_L2_errors)[i]) : "");
      w.row_strings(row);
    }
  }
  out << "diagnostics -> " << dir << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// Argument parsing

inline void define_common(CLI::App& sub, RunConfig& cfg) {
  sub.add_option("--config", cfg.config, "JSON file of flag defaults; flags override it");
  sub.add_option("--out", cfg.out, "Output directory");
  sub.add_option("--threads", cfg.threads, "Worker threads (default: VARIREG_THREADS or 1)");
  sub.add_option("--seed", cfg.seed, "Random seed");
}

struct Parser {
  CLI::App app{"Registration of warped functional data by local variation distributions", "varireg"};
  RunConfig cfg;
  CLI::App* reg = nullptr;
  CLI::App* sim = nullptr;
  CLI::App* diag = nullptr;

  Parser() {
    app.require_subcommand(1);
    app.set_version_flag("--version", "varireg 1.0.0");

    reg = app.add_subcommand("register", "Register curves from a CSV file");
    reg->add_option("input,--input", cfg.input, "Wide (t, curves...) or long (curve_id, t, value) CSV");
    reg->add_option("--regime", cfg.regime, "complete | discrete | noisy");
    reg->add_option("--bandwidth", cfg.bandwidth, "Nadaraya-Watson bandwidth (discrete regime)");
    reg->add_option("--h1", cfg.h1, "Derivative bandwidth (noisy regime)");
    reg->add_option("--h2", cfg.h2, "Curve bandwidth (noisy regime)");
    reg->add_flag("--auto-bandwidth", cfg.auto_bandwidth, "Leave-one-out bandwidths (noisy regime)");
    reg->add_flag("--smooth-warps", cfg.smooth_warps, "Monotone cubic smoothing of the warps");
    reg->add_option("--knots", cfg.knots, "Knots for --smooth-warps");
    reg->add_option("--eigen", cfg.eigen, "Number of principal components");
    reg->add_option("--grid-size", cfg.grid_size, "Uniform output grid size (default: union of input grids)");
    define_common(*reg, cfg);

    sim = app.add_subcommand("simulate", "Simulate warped curves with ground truth");
    sim->add_option("--model", cfg.model, "model1 | model2 | rank2 | rank3 | 'breakdown c=2 r_scale=0.01 rank=2'");
    sim->add_option("--warp", cfg.warp, "sine | identity, optionally 'sine J=2 beta=1.01 lambda=3'");
    sim->add_option("--n", cfg.n, "Number of curves");
    sim->add_option("--r", cfg.r, "Grid points per curve");
    sim->add_option("--noise", cfg.noise, "Half-width of the uniform measurement error");
    define_common(*sim, cfg);

    diag = app.add_subcommand("diagnose", "Z statistics, truth comparison and rate check");
    diag->add_option("result,--result", cfg.result_dir, "Directory written by register");
    diag->add_option("--truth", cfg.truth_dir, "Directory written by simulate");
    diag->add_option("--eigen", cfg.eigen, "Number of principal components");
    diag->add_option("--mean-mode", cfg.mean_mode, "auto | force_zero_deriv");
    diag->add_flag("--rate-check", cfg.rate_check, "Run the Monte Carlo rate check");
    diag->add_option("--ns", cfg.rate_ns, "Sample sizes for the rate check")->delimiter(',');
    diag->add_option("--reps", cfg.rate_reps, "Replicates per sample size");
    diag->add_option("--model", cfg.model, "Rank-one model for the rate check");
    diag->add_option("--warp", cfg.warp, "Warp law for the rate check");
    define_common(*diag, cfg);
  }

  CLI::App* active() const {
    for (auto* s : {reg, sim, diag})
      if (s->parsed()) return s;
    return nullptr;
  }
};

inline std::string json_scalar(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_float()) return csv::format_double(v.get<double>());
  if (v.is_array()) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ",") + json_scalar(x);
    return s;
  }
  return v.dump();
}

/// Entry point. args excludes the program name.
inline int run(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Parser first;
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    first.app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << first.app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << "varireg 1.0.0\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  CLI::App* sub = first.active();
  // Config keys become flags unless the same flag was given explicitly.
  Parser p;
  if (!first.cfg.config.empty()) {
    json conf;
    try {
      conf = read_json(first.cfg.config);
    } catch (const UsageError& e) {
      err << "error: " << e.what() << "\n";
      return kUsage;
    }
    if (!conf.is_object()) {
      err << "error: " << first.cfg.config << ": expected a flat JSON object\n";
      return kUsage;
    }
    std::vector<std::string> extra{sub->get_name()};
    for (const auto& [key, value] : conf.items()) {
      if (key == "config") continue;
      CLI::Option* opt = nullptr;
      try {
        opt = sub->get_option("--" + key);
      } catch (const CLI::OptionNotFound&) {
        err << "error: " << first.cfg.config << ": unknown key '" << key << "' for " << sub->get_name() << "\n";
        return kUsage;
      }
      if (opt->count() > 0) continue;
      if (opt->get_type_size() == 0) {
        if (value.is_boolean() && value.get<bool>()) extra.push_back("--" + key);
        continue;
      }
      extra.push_back("--" + key + "=" + json_scalar(value));
    }
    std::vector<std::string> merged(args.begin(), args.end());
    auto pos = std::find(merged.begin(), merged.end(), sub->get_name());
    merged.erase(merged.begin(), pos + 1);
    merged.insert(merged.begin(), extra.begin(), extra.end());
    std::vector<std::string> mrev(merged.rbegin(), merged.rend());
    try {
      p.app.parse(mrev);
    } catch (const CLI::ParseError& e) {
      err << "error: " << e.what() << "\n";
      return kUsage;
    }
  } else {
    std::vector<std::string> again(args.rbegin(), args.rend());
    p.app.parse(again);
  }

  RunConfig& cfg = p.cfg;
  if (cfg.threads > 0) set_threads(cfg.threads);
  try {
    if (p.reg->parsed()) {
      if (cfg.input.empty()) throw UsageError("register needs an input CSV");
      return cmd_register(cfg, out, err);
    }
    if (p.sim->parsed()) return cmd_simulate(cfg, out, err);
    return cmd_diagnose(cfg, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const csv::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    return report_error(e, {}, {}, 0, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int k = 1; k < argc; ++k) args.emplace_back(argv[k]);
  return run(std::move(args), out, err);
}

}  // namespace varireg::cli

#endif  // VARIREG_CLI_HPP
