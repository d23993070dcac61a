#include "pidld/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <set>

#include "pidld/csv.hpp"
#include "pidld/diagnostics.hpp"
#include "pidld/stability.hpp"
#include "pidld/svg.hpp"

namespace pidld {

namespace {

namespace fs = std::filesystem;

constexpr double kKlSpeedThreshold = 0.45;

const std::vector<std::string> kMetricHeader = {
    "experiment_id", "seed", "k_p", "k_i", "k_d", "gamma",
    "metric_name", "cluster_id", "value"};
const std::vector<std::string> kCurveHeader = {
    "experiment_id", "seed", "k_p", "k_i", "k_d", "gamma",
    "snapshot", "step", "kl"};
const std::vector<std::string> kFloorHeader = {"experiment_id", "seed",
                                               "n_samples", "value"};

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory: " + dir);
}

std::string seeds_comment(const std::vector<std::uint64_t>& seeds) {
  std::string s = "seeds:";
  for (auto v : seeds) s += " " + std::to_string(v);
  return s;
}

struct Setting {
  std::string label;
  PidGains gains;
};

struct RunFlags {
  bool kl_curve = false;
  bool centers = false;
};

struct RunOutput {
  std::vector<long> steps;
  std::vector<double> kl;
  std::vector<double> final_positions;
  CenterTrajectory centers;
  bool centers_ok = true;
  bool diverged = false;
  double final_current_ki = 0.0;
  double denoised_kl = 0.0;
};

std::array<std::array<double, 2>, 2> cluster_inits(const GaussianMixture& truth) {
  const auto& comps = truth.components();
  if (comps.size() != 2 || truth.dim() != 2) {
    throw std::invalid_argument("cluster metrics expect a two-component 2-D target");
  }
  const std::size_t dom = comps[0].weight >= comps[1].weight ? 0 : 1;
  const std::size_t other = 1 - dom;
  return {std::array<double, 2>{comps[dom].mean[0], comps[dom].mean[1]},
          std::array<double, 2>{comps[other].mean[0], comps[other].mean[1]}};
}

RunOutput run_one(const LoadedConfig& base, const PidGains& gains,
                  std::uint64_t seed, const KlGrid* grid, int threads,
                  const RunFlags& flags,
                  const std::shared_ptr<const ScoreModel>& model_override) {
  RunConfig rc = base.run;
  rc.gains = gains;
  rc.master_seed = seed;
  const ScoreModel& model = model_override ? *model_override : *base.model;
  RunOutput out;
  const auto inits = flags.centers ? cluster_inits(*base.truth)
                                   : std::array<std::array<double, 2>, 2>{};
  auto on_snapshot = [&](long step, const Ensemble& ens) {
    out.steps.push_back(step);
    if (flags.kl_curve && grid) out.kl.push_back(grid->kl(ens.positions));
    if (flags.centers && out.centers_ok) {
      try {
        const FitResult fit =
            fit_centers(ens.positions, inits, base.truth->base_variance());
        out.centers.recorded_steps.push_back(step);
        out.centers.c1.push_back(fit.means[0][0]);
        out.centers.c1.push_back(fit.means[0][1]);
        out.centers.c2.push_back(fit.means[1][0]);
        out.centers.c2.push_back(fit.means[1][1]);
      } catch (const DegenerateClusterError&) {
        out.centers_ok = false;
      }
    }
  };
  try {
    RunResult res = run_annealed(rc, model, threads,
                                 (flags.kl_curve || flags.centers)
                                     ? std::function<void(long, const Ensemble&)>(on_snapshot)
                                     : std::function<void(long, const Ensemble&)>{});
    out.final_positions = std::move(res.ensemble.positions);
    out.final_current_ki = res.state.current_ki;
    if (flags.kl_curve && grid) out.denoised_kl = grid->kl(out.final_positions);
  } catch (const DivergenceError&) {
    out.diverged = true;
  }
  return out;
}

class MetricsCsv {
 public:
  MetricsCsv(const std::string& path, const std::vector<std::string>& comments)
      : w_(path, kMetricHeader, comments) {}

  void add(const std::string& exp, std::uint64_t seed, const PidGains& g,
           const std::string& name, int cluster, double value) {
    w_.row({exp, std::to_string(seed), format_double(g.kp), format_double(g.ki),
            format_double(g.kd), format_double(g.gamma), name,
            std::to_string(cluster), format_double(value)});
  }

  void close() { w_.close(); }

 private:
  CsvWriter w_;
};

// Everything shared by the KL-curve experiments (ablation, k_i sweep, decay,
// k_d sweep): per-run KL curves, terminal/rebound metrics, per-seed estimator
// floors, and a seed-mean chart.
ExperimentResult curve_experiment(
    const std::string& exp_id, const LoadedConfig& base,
    const std::vector<std::uint64_t>& seeds, const std::vector<Setting>& settings,
    const ExperimentContext& ctx,
    const std::function<void(MetricsCsv&, const Setting&, std::uint64_t,
                             const RunOutput&)>& extra_metrics = {}) {
  ensure_dir(ctx.out_dir);
  const std::vector<std::string> comments = {echo_comment(base.echo),
                                             "experiment: " + exp_id,
                                             seeds_comment(seeds)};
  const KlGrid grid(base.kl.box_low, base.kl.box_high, base.kl.bins_per_axis,
                    base.kl.pseudo_count, *base.truth);
  ExperimentResult result;
  const std::string metrics_path = join_path(ctx.out_dir, exp_id + "_metrics.csv");
  const std::string curves_path = join_path(ctx.out_dir, exp_id + "_curves.csv");
  const std::string floors_path = join_path(ctx.out_dir, exp_id + "_floors.csv");
  MetricsCsv metrics(metrics_path, comments);
  CsvWriter curves(curves_path, kCurveHeader, comments);
  CsvWriter floors(floors_path, kFloorHeader, comments);

  // Seed-mean curves per setting for the chart.
  std::vector<std::vector<double>> mean_kl(settings.size());
  std::vector<double> mean_steps;

  for (std::uint64_t seed : seeds) {
    RngStream floor_rng(seed, kFloorStreamId);
    const double floor_here =
        self_kl_floor(*base.truth, grid, base.run.ensemble_size, floor_rng);
    floors.row({exp_id, std::to_string(seed),
                std::to_string(base.run.ensemble_size), format_double(floor_here)});
    for (std::size_t si = 0; si < settings.size(); ++si) {
      const Setting& st = settings[si];
      RunFlags flags;
      flags.kl_curve = true;
      const RunOutput out = run_one(base, st.gains, seed, &grid, ctx.threads,
                                    flags, nullptr);
      if (out.diverged) {
        metrics.add(exp_id, seed, st.gains, "diverged", 0, 1.0);
        continue;
      }
      for (std::size_t i = 0; i < out.steps.size(); ++i) {
        curves.row({exp_id, std::to_string(seed), format_double(st.gains.kp),
                    format_double(st.gains.ki), format_double(st.gains.kd),
                    format_double(st.gains.gamma), std::to_string(i + 1),
                    std::to_string(out.steps[i]), format_double(out.kl[i])});
      }
      const ReboundReport reb = detect_rebound(out.kl, kSelfKlFloor);
      metrics.add(exp_id, seed, st.gains, "terminal_kl", 0, out.kl.back());
      metrics.add(exp_id, seed, st.gains, "denoised_kl", 0, out.denoised_kl);
      metrics.add(exp_id, seed, st.gains, "min_kl", 0, reb.min_kl);
      metrics.add(exp_id, seed, st.gains, "rebound_flag", 0,
                  reb.flagged ? 1.0 : 0.0);
      metrics.add(exp_id, seed, st.gains, "rebound_excess", 0,
                  reb.terminal_kl - reb.min_kl);
      metrics.add(exp_id, seed, st.gains, "rebound_min_snapshot", 0,
                  static_cast<double>(reb.min_index + 1));
      metrics.add(exp_id, seed, st.gains, "final_current_ki", 0,
                  out.final_current_ki);
      long first_below = -1;
      for (std::size_t i = 0; i < out.kl.size(); ++i) {
        if (out.kl[i] <= kKlSpeedThreshold) {
          first_below = static_cast<long>(i + 1);
          break;
        }
      }
      metrics.add(exp_id, seed, st.gains, "snapshots_to_kl_0.45", 0,
                  static_cast<double>(first_below));
      if (extra_metrics) extra_metrics(metrics, st, seed, out);
      if (mean_kl[si].empty()) mean_kl[si].assign(out.kl.size(), 0.0);
      for (std::size_t i = 0; i < out.kl.size(); ++i) {
        mean_kl[si][i] += out.kl[i] / static_cast<double>(seeds.size());
      }
      if (mean_steps.empty()) {
        mean_steps.assign(out.steps.begin(), out.steps.end());
      }
    }
  }
  metrics.close();
  curves.close();
  floors.close();
  result.files = {metrics_path, curves_path, floors_path};

  if (ctx.svg) {
    std::vector<Series> series;
    for (std::size_t si = 0; si < settings.size(); ++si) {
      if (mean_kl[si].empty()) continue;
      Series s;
      s.name = settings[si].label;
      s.xs = mean_steps;
      s.ys = mean_kl[si];
      series.push_back(std::move(s));
    }
    ChartStyle style;
    style.title = exp_id + ": seed-mean KL along the run";
    style.x_label = "step";
    style.y_label = "KL divergence";
    const std::string svg_path = join_path(ctx.out_dir, exp_id + "_curves.svg");
    render_line_chart(svg_path, style, series, comments);
    result.files.push_back(svg_path);
  }
  return result;
}

}  // namespace

double mean(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean of empty vector");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("pearson needs two equal-length vectors, n >= 2");
  }
  const double mx = mean(x);
  const double my = mean(y);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx < 1e-30 || syy < 1e-30) return 0.0;  // no variation: defined as 0
  return sxy / std::sqrt(sxx * syy);
}

ExperimentResult run_kl_ablation(const LoadedConfig& base,
                                 const std::vector<std::uint64_t>& seeds,
                                 const ExperimentContext& ctx) {
  const std::vector<Setting> settings = {
      {"baseline", {1.0, 0.0, 0.0, 1.0}},
      {"+I", {1.0, 0.1, 0.0, 1.0}},
      {"+D", {1.0, 0.0, 6.0, 1.0}},
      {"+I&D", {1.0, 0.1, 6.0, 1.0}},
  };
  return curve_experiment("kl_ablation", base, seeds, settings, ctx);
}

ExperimentResult run_ki_sweep(const LoadedConfig& base,
                              const std::vector<std::uint64_t>& seeds,
                              const ExperimentContext& ctx) {
  std::vector<Setting> settings;
  for (double ki : {0.0, 0.1, 0.2, 0.3}) {
    settings.push_back({"ki=" + format_double(ki), {1.0, ki, 0.0, 1.0}});
  }
  return curve_experiment("ki_sweep", base, seeds, settings, ctx);
}

ExperimentResult run_decay(const LoadedConfig& base,
                           const std::vector<std::uint64_t>& seeds,
                           const ExperimentContext& ctx) {
  const std::vector<Setting> settings = {
      {"ki=0.3 gamma=1", {1.0, 0.3, 0.0, 1.0}},
      {"ki=0.3 gamma=0.9", {1.0, 0.3, 0.0, 0.9}},
  };
  return curve_experiment("decay", base, seeds, settings, ctx);
}

ExperimentResult run_kd_sweep(const LoadedConfig& base,
                              const std::vector<std::uint64_t>& seeds,
                              const ExperimentContext& ctx) {
  std::vector<Setting> settings;
  for (double kd : {0.0, 2.0, 4.0, 6.0}) {
    settings.push_back({"kd=" + format_double(kd), {1.0, 0.0, kd, 1.0}});
  }
  return curve_experiment("kd_sweep", base, seeds, settings, ctx);
}

ExperimentResult run_bias(const LoadedConfig& base,
                          const std::vector<std::uint64_t>& seeds,
                          const ExperimentContext& ctx) {
  ensure_dir(ctx.out_dir);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  const std::vector<double> direction = {-inv_sqrt2, inv_sqrt2};
  constexpr double kScale = 1.0 / 20.0;

  struct BiasSetting {
    std::string exp_id;
    PidGains gains;
    double scale;
  };
  std::vector<BiasSetting> settings;
  std::set<std::pair<double, double>> seen;  // (ki, kd) in the perturbed matrix
  for (double ki : {0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35}) {
    settings.push_back({"bias", {1.0, ki, 0.0, 1.0}, kScale});
    seen.insert({ki, 0.0});
  }
  for (double kd : {0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0}) {
    if (seen.contains({0.0, kd})) continue;  // (ki=0, kd=0) already swept
    settings.push_back({"bias", {1.0, 0.0, kd, 1.0}, kScale});
  }
  for (double ki : {0.0, 0.35}) {
    settings.push_back({"bias_null", {1.0, ki, 0.0, 1.0}, 0.0});
  }

  const std::vector<std::string> comments = {
      echo_comment(base.echo), "experiment: bias",
      "perturbation: direction (-1,1)/sqrt(2), scale_fraction 0.05 "
      "(bias_null rows: scale_fraction 0)",
      seeds_comment(seeds)};
  const std::string metrics_path = join_path(ctx.out_dir, "bias_metrics.csv");
  const std::string summary_path = join_path(ctx.out_dir, "bias_summary.csv");
  MetricsCsv metrics(metrics_path, comments);

  const auto inits = cluster_inits(*base.truth);
  struct Acc {
    std::vector<double> d1, d2, c1x, c1y;
    long diverged = 0, degenerate = 0;
  };
  std::vector<Acc> accs(settings.size());

  for (std::uint64_t seed : seeds) {
    for (std::size_t si = 0; si < settings.size(); ++si) {
      const BiasSetting& st = settings[si];
      const auto model = std::make_shared<BiasedScore>(base.truth, direction,
                                                       st.scale);
      const RunOutput out = run_one(base, st.gains, seed, nullptr, ctx.threads,
                                    RunFlags{}, model);
      if (out.diverged) {
        metrics.add(st.exp_id, seed, st.gains, "diverged", 0, 1.0);
        ++accs[si].diverged;
        continue;
      }
      try {
        const FitResult fit =
            fit_centers(out.final_positions, inits, base.truth->base_variance());
        const double d1 = std::hypot(fit.means[0][0] - inits[0][0],
                                     fit.means[0][1] - inits[0][1]);
        const double d2 = std::hypot(fit.means[1][0] - inits[1][0],
                                     fit.means[1][1] - inits[1][1]);
        metrics.add(st.exp_id, seed, st.gains, "center_distance", 1, d1);
        metrics.add(st.exp_id, seed, st.gains, "center_distance", 2, d2);
        metrics.add(st.exp_id, seed, st.gains, "center_x", 1, fit.means[0][0]);
        metrics.add(st.exp_id, seed, st.gains, "center_y", 1, fit.means[0][1]);
        metrics.add(st.exp_id, seed, st.gains, "center_x", 2, fit.means[1][0]);
        metrics.add(st.exp_id, seed, st.gains, "center_y", 2, fit.means[1][1]);
        accs[si].d1.push_back(d1);
        accs[si].d2.push_back(d2);
        accs[si].c1x.push_back(fit.means[0][0]);
        accs[si].c1y.push_back(fit.means[0][1]);
      } catch (const DegenerateClusterError&) {
        metrics.add(st.exp_id, seed, st.gains, "degenerate", 0, 1.0);
        ++accs[si].degenerate;
      }
    }
  }
  metrics.close();

  CsvWriter summary(summary_path,
                    {"experiment_id", "k_p", "k_i", "k_d", "gamma",
                     "scale_fraction", "metric_name", "cluster_id",
                     "mean_value", "std_value", "n"},
                    comments);
  for (std::size_t si = 0; si < settings.size(); ++si) {
    const BiasSetting& st = settings[si];
    const Acc& a = accs[si];
    auto emit = [&](const std::string& name, int cluster,
                    const std::vector<double>& v) {
      if (v.empty()) return;
      summary.row({st.exp_id, format_double(st.gains.kp),
                   format_double(st.gains.ki), format_double(st.gains.kd),
                   format_double(st.gains.gamma), format_double(st.scale), name,
                   std::to_string(cluster), format_double(mean(v)),
                   format_double(sample_std(v)), std::to_string(v.size())});
    };
    emit("center_distance", 1, a.d1);
    emit("center_distance", 2, a.d2);
    emit("center_x", 1, a.c1x);
    emit("center_y", 1, a.c1y);
  }
  summary.close();
  return {{metrics_path, summary_path}};
}

ExperimentResult run_oscillation(const LoadedConfig& base,
                                 const std::vector<std::uint64_t>& seeds,
                                 const ExperimentContext& ctx) {
  ensure_dir(ctx.out_dir);
  constexpr std::size_t kWindowStart = 40;  // last 200 of 240 snapshots
  constexpr double kSettleRadius = 0.1;
  std::vector<Setting> settings;
  std::set<std::pair<double, double>> seen;
  for (double kd : {0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0}) {
    settings.push_back({"kd=" + format_double(kd), {1.5, 0.0, kd, 1.0}});
    seen.insert({0.0, kd});
  }
  for (double ki : {0.0, 0.1, 0.2, 0.3, 0.4}) {
    if (seen.contains({ki, 0.0})) continue;
    settings.push_back({"ki=" + format_double(ki), {1.5, ki, 0.0, 1.0}});
  }
  const std::vector<std::string> comments = {
      echo_comment(base.echo), "experiment: oscillation",
      "k_p fixed at 1.5; analysis window: snapshots 41..240 (1-based), "
      "settle radius 0.1",
      seeds_comment(seeds)};
  const std::string metrics_path =
      join_path(ctx.out_dir, "oscillation_metrics.csv");
  const std::string summary_path =
      join_path(ctx.out_dir, "oscillation_summary.csv");
  MetricsCsv metrics(metrics_path, comments);

  struct Acc {
    std::vector<double> d_sum[2], d_max[2], settle[2];
    long diverged = 0, degenerate = 0;
  };
  std::vector<Acc> accs(settings.size());

  for (std::uint64_t seed : seeds) {
    for (std::size_t si = 0; si < settings.size(); ++si) {
      const Setting& st = settings[si];
      RunFlags flags;
      flags.centers = true;
      const RunOutput out =
          run_one(base, st.gains, seed, nullptr, ctx.threads, flags, nullptr);
      if (out.diverged) {
        metrics.add("oscillation", seed, st.gains, "diverged", 0, 1.0);
        ++accs[si].diverged;
        continue;
      }
      if (!out.centers_ok || out.centers.recorded_steps.empty()) {
        metrics.add("oscillation", seed, st.gains, "degenerate", 0, 1.0);
        ++accs[si].degenerate;
        continue;
      }
      // Canonical runs record 240 snapshots and analyse the last 200; short
      // diagnostic runs clamp the window so the metrics stay defined.
      const std::size_t n_snaps = out.centers.recorded_steps.size();
      const std::size_t start = std::min(kWindowStart, n_snaps - 1);
      const OscillationReport rep =
          oscillation_metrics(out.centers, start, kSettleRadius);
      for (int c = 0; c < 2; ++c) {
        const int cluster = c + 1;
        // Settling is reported as a 1-based snapshot index (-1 = never).
        const double settle =
            rep.settling_index[c] < 0
                ? -1.0
                : static_cast<double>(rep.settling_index[c] + 1);
        metrics.add("oscillation", seed, st.gains, "d_sum", cluster, rep.d_sum[c]);
        metrics.add("oscillation", seed, st.gains, "d_max", cluster, rep.d_max[c]);
        metrics.add("oscillation", seed, st.gains, "settling_snapshot", cluster,
                    settle);
        accs[si].d_sum[c].push_back(rep.d_sum[c]);
        accs[si].d_max[c].push_back(rep.d_max[c]);
        accs[si].settle[c].push_back(settle);
      }
    }
  }
  metrics.close();

  CsvWriter summary(summary_path,
                    {"experiment_id", "k_p", "k_i", "k_d", "gamma",
                     "metric_name", "cluster_id", "mean_value", "std_value",
                     "n"},
                    comments);
  std::vector<Series> kd_series(2), ki_series(2);
  for (std::size_t si = 0; si < settings.size(); ++si) {
    const Setting& st = settings[si];
    const Acc& a = accs[si];
    auto emit = [&](const std::string& name, int cluster,
                    const std::vector<double>& v) {
      if (v.empty()) return;
      summary.row({"oscillation", format_double(st.gains.kp),
                   format_double(st.gains.ki), format_double(st.gains.kd),
                   format_double(st.gains.gamma), name, std::to_string(cluster),
                   format_double(mean(v)), format_double(sample_std(v)),
                   std::to_string(v.size())});
    };
    for (int c = 0; c < 2; ++c) {
      emit("d_sum", c + 1, a.d_sum[c]);
      emit("d_max", c + 1, a.d_max[c]);
      emit("settling_snapshot", c + 1, a.settle[c]);
      if (!a.d_sum[c].empty()) {
        if (st.gains.ki == 0.0) {
          kd_series[c].xs.push_back(st.gains.kd);
          kd_series[c].ys.push_back(mean(a.d_sum[c]));
        }
        if (st.gains.kd == 0.0) {
          ki_series[c].xs.push_back(st.gains.ki);
          ki_series[c].ys.push_back(mean(a.d_sum[c]));
        }
      }
    }
  }
  summary.close();
  ExperimentResult result;
  result.files = {metrics_path, summary_path};
  if (ctx.svg) {
    kd_series[0].name = "cluster 1";
    kd_series[1].name = "cluster 2";
    ChartStyle style;
    style.title = "oscillation: seed-mean d_sum vs k_d (k_i=0, k_p=1.5)";
    style.x_label = "k_d";
    style.y_label = "d_sum";
    const std::string kd_svg = join_path(ctx.out_dir, "oscillation_dsum_kd.svg");
    render_line_chart(kd_svg, style, kd_series, comments);
    ki_series[0].name = "cluster 1";
    ki_series[1].name = "cluster 2";
    style.title = "oscillation: seed-mean d_sum vs k_i (k_d=0, k_p=1.5)";
    style.x_label = "k_i";
    const std::string ki_svg = join_path(ctx.out_dir, "oscillation_dsum_ki.svg");
    render_line_chart(ki_svg, style, ki_series, comments);
    result.files.push_back(kd_svg);
    result.files.push_back(ki_svg);
  }
  return result;
}

ExperimentResult run_decay_grid(const LoadedConfig& base,
                                const std::vector<std::uint64_t>& seeds,
                                const ExperimentContext& ctx) {
  ensure_dir(ctx.out_dir);
  const std::vector<double> kis = {0.1, 0.2, 0.3, 0.4, 0.5};
  const std::vector<double> gammas = {0.8, 0.85, 0.9, 0.95, 1.0};
  const std::vector<std::string> comments = {echo_comment(base.echo),
                                             "experiment: decay_grid",
                                             seeds_comment(seeds)};
  const KlGrid grid(base.kl.box_low, base.kl.box_high, base.kl.bins_per_axis,
                    base.kl.pseudo_count, *base.truth);
  const std::string metrics_path =
      join_path(ctx.out_dir, "decay_grid_metrics.csv");
  const std::string summary_path =
      join_path(ctx.out_dir, "decay_grid_summary.csv");
  const std::string argmin_path =
      join_path(ctx.out_dir, "decay_grid_argmin.csv");
  const std::string corr_path =
      join_path(ctx.out_dir, "decay_grid_correlation.csv");
  MetricsCsv metrics(metrics_path, comments);
  CsvWriter summary(summary_path,
                    {"k_i", "gamma", "mean_terminal_kl", "std_terminal_kl", "n"},
                    comments);
  CsvWriter argmin_csv(argmin_path, {"k_i", "argmin_gamma", "best_mean_terminal_kl"},
                       comments);

  std::vector<double> argmin_gamma_per_ki;
  std::vector<Series> series_per_ki;
  for (double ki : kis) {
    double best_gamma = gammas.front();
    double best_kl = std::numeric_limits<double>::infinity();
    Series s;
    s.name = "ki=" + format_double(ki);
    for (double gamma : gammas) {
      const PidGains gains{1.0, ki, 0.0, gamma};
      std::vector<double> terminals;
      for (std::uint64_t seed : seeds) {
        RunFlags flags;
        flags.kl_curve = true;
        const RunOutput out =
            run_one(base, gains, seed, &grid, ctx.threads, flags, nullptr);
        if (out.diverged) {
          metrics.add("decay_grid", seed, gains, "diverged", 0, 1.0);
          continue;
        }
        metrics.add("decay_grid", seed, gains, "terminal_kl", 0, out.kl.back());
        metrics.add("decay_grid", seed, gains, "denoised_kl", 0, out.denoised_kl);
        terminals.push_back(out.kl.back());
      }
      if (terminals.empty()) continue;
      const double m = mean(terminals);
      summary.row({format_double(ki), format_double(gamma), format_double(m),
                   format_double(sample_std(terminals)),
                   std::to_string(terminals.size())});
      s.xs.push_back(gamma);
      s.ys.push_back(m);
      if (m < best_kl) {
        best_kl = m;
        best_gamma = gamma;
      }
    }
    argmin_csv.row({format_double(ki), format_double(best_gamma),
                    format_double(best_kl)});
    argmin_gamma_per_ki.push_back(best_gamma);
    series_per_ki.push_back(std::move(s));
  }
  metrics.close();
  summary.close();
  argmin_csv.close();

  CsvWriter corr(corr_path, {"metric_name", "value"}, comments);
  const double correlation = pearson(kis, argmin_gamma_per_ki);
  corr.row({"ki_gamma_correlation", format_double(correlation)});
  corr.close();

  ExperimentResult result;
  result.files = {metrics_path, summary_path, argmin_path, corr_path};
  if (ctx.svg) {
    ChartStyle style;
    style.title = "decay grid: seed-mean terminal KL";
    style.x_label = "gamma";
    style.y_label = "terminal KL";
    const std::string svg_path = join_path(ctx.out_dir, "decay_grid.svg");
    render_line_chart(svg_path, style, series_per_ki, comments);
    result.files.push_back(svg_path);
  }
  return result;
}

ExperimentResult run_stability_grid(const StabilityGridSpec& spec,
                                    const ExperimentContext& ctx) {
  ensure_dir(ctx.out_dir);
  if (spec.eps_count < 2 || spec.kd_count < 2) {
    throw std::invalid_argument("stability grid needs at least 2 points per axis");
  }
  std::vector<double> eps_values(spec.eps_count), kd_values(spec.kd_count);
  for (int i = 0; i < spec.eps_count; ++i) {
    eps_values[i] = spec.eps_min +
                    (spec.eps_max - spec.eps_min) * i / (spec.eps_count - 1);
  }
  for (int j = 0; j < spec.kd_count; ++j) {
    kd_values[j] =
        spec.kd_min + (spec.kd_max - spec.kd_min) * j / (spec.kd_count - 1);
  }
  const std::vector<std::string> comments = {
      "experiment: stability_grid",
      "grid: eps in [" + format_double(spec.eps_min) + ", " +
          format_double(spec.eps_max) + "] x" + std::to_string(spec.eps_count) +
          ", k_d in [" + format_double(spec.kd_min) + ", " +
          format_double(spec.kd_max) + "] x" + std::to_string(spec.kd_count) +
          ", m = " + format_double(spec.m)};
  const std::string grid_path = join_path(ctx.out_dir, "stability_grid.csv");
  const std::string sim_path = join_path(ctx.out_dir, "stability_sim.csv");
  CsvWriter grid_csv(grid_path,
                     {"eps", "k_d", "m", "spectral_radius", "jury_pass",
                      "bound_statement", "bound_proof", "cov_00", "cov_01",
                      "cov_11"},
                     comments);
  CsvWriter sim_csv(sim_path,
                    {"eps", "k_d", "m", "eigen_stable", "sim_converged",
                     "sim_diverged", "steps_run", "final_err", "agrees"},
                    comments);
  std::optional<CsvWriter> emp_csv;
  std::string emp_path;
  if (spec.empirical) {
    emp_path = join_path(ctx.out_dir, "stability_empirical.csv");
    emp_csv.emplace(emp_path,
                    std::vector<std::string>{"eps", "k_d", "m", "emp_00",
                                             "emp_01", "emp_11", "lyap_00",
                                             "lyap_01", "lyap_11",
                                             "max_abs_err", "max_rel_err"},
                    comments);
  }

  std::vector<double> rho_cells(static_cast<std::size_t>(spec.kd_count) *
                                spec.eps_count);
  std::uint64_t point_index = 0;
  for (int j = 0; j < spec.kd_count; ++j) {
    for (int i = 0; i < spec.eps_count; ++i, ++point_index) {
      const double eps = eps_values[i];
      const double kd = kd_values[j];
      const LinearizedSystem sys = build_system(eps, kd, spec.m);
      const StabilityReport rep = jury_check(sys);
      rho_cells[static_cast<std::size_t>(j) * spec.eps_count + i] =
          rep.spectral_radius;
      std::string cov00 = "divergent", cov01 = "divergent", cov11 = "divergent";
      Mat2 lyap{};
      const bool stable = rep.spectral_radius < 1.0;
      if (stable) {
        lyap = stationary_covariance(sys);
        cov00 = format_double(lyap[0][0]);
        cov01 = format_double(lyap[0][1]);
        cov11 = format_double(lyap[1][1]);
      }
      const std::string verdict =
          rep.marginal ? "marginal" : (rep.jury_pass ? "true" : "false");
      grid_csv.row({format_double(eps), format_double(kd), format_double(spec.m),
                    format_double(rep.spectral_radius), verdict,
                    format_double(rep.eps_bound_statement),
                    format_double(rep.eps_bound_proof), cov00, cov01, cov11});

      const DeterministicSim sim =
          simulate_deterministic(eps, kd, spec.m, 1.0, 0.0, spec.sim_max_steps);
      const bool agrees = sim.converged == stable;
      sim_csv.row({format_double(eps), format_double(kd), format_double(spec.m),
                   stable ? "true" : "false", sim.converged ? "true" : "false",
                   sim.diverged ? "true" : "false", std::to_string(sim.steps_run),
                   format_double(sim.final_err), agrees ? "true" : "false"});

      if (spec.empirical && stable && !rep.marginal) {
        RngStream rng(spec.empirical_seed, point_index);
        const Mat2 emp = empirical_stationary_covariance(
            eps, kd, spec.m, spec.empirical_burn_in, spec.empirical_samples, rng);
        double max_abs = 0.0, max_rel = 0.0;
        for (int r = 0; r < 2; ++r) {
          for (int c = 0; c < 2; ++c) {
            const double err = std::abs(emp[r][c] - lyap[r][c]);
            max_abs = std::max(max_abs, err);
            max_rel = std::max(max_rel,
                               err / std::max(std::abs(lyap[r][c]), 1e-12));
          }
        }
        emp_csv->row({format_double(eps), format_double(kd),
                      format_double(spec.m), format_double(emp[0][0]),
                      format_double(emp[0][1]), format_double(emp[1][1]),
                      format_double(lyap[0][0]), format_double(lyap[0][1]),
                      format_double(lyap[1][1]), format_double(max_abs),
                      format_double(max_rel)});
      }
    }
  }
  grid_csv.close();
  sim_csv.close();
  if (emp_csv) emp_csv->close();

  ExperimentResult result;
  result.files = {grid_path, sim_path};
  if (spec.empirical) result.files.push_back(emp_path);
  if (ctx.svg) {
    HeatmapStyle style;
    style.title = "spectral radius of the linearized update (m = " +
                  format_double(spec.m) + ")";
    style.x_label = "eps";
    style.y_label = "k_d";
    style.value_label = "rho";
    style.v_min = 0.0;
    style.v_max = 1.5;
    Series proof, statement;
    proof.name = "proof bound eps = 2/((1+2kd)m)";
    statement.name = "statement bound eps = 1/((1+2kd)m)";
    for (int j = 0; j < 200; ++j) {
      const double kd =
          spec.kd_min + (spec.kd_max - spec.kd_min) * j / 199.0;
      proof.xs.push_back(2.0 / ((1.0 + 2.0 * kd) * spec.m));
      proof.ys.push_back(kd);
      statement.xs.push_back(1.0 / ((1.0 + 2.0 * kd) * spec.m));
      statement.ys.push_back(kd);
    }
    const std::string svg_path = join_path(ctx.out_dir, "stability_grid.svg");
    render_heatmap(svg_path, style, eps_values, kd_values, rho_cells,
                   {proof, statement}, comments);
    result.files.push_back(svg_path);
  }
  return result;
}

const std::map<std::string, ExperimentFn>& experiment_registry() {
  static const std::map<std::string, ExperimentFn> registry = {
      {"kl_ablation", run_kl_ablation}, {"ki_sweep", run_ki_sweep},
      {"decay", run_decay},             {"kd_sweep", run_kd_sweep},
      {"bias", run_bias},               {"oscillation", run_oscillation},
      {"decay_grid", run_decay_grid},
  };
  return registry;
}

std::vector<std::uint64_t> default_seeds(const std::string& experiment) {
  const std::size_t n =
      (experiment == "bias" || experiment == "oscillation") ? 100 : 10;
  std::vector<std::uint64_t> seeds(n);
  for (std::size_t i = 0; i < n; ++i) seeds[i] = i + 1;
  return seeds;
}

}  // namespace pidld
