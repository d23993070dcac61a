#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pidld/config.hpp"
#include "pidld/csv.hpp"
#include "pidld/diagnostics.hpp"
#include "pidld/experiments.hpp"
#include "pidld/sampler.hpp"
#include "pidld/svg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string out_dir = ".";
  int threads = 0;
  bool no_svg = false;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw pidld::IoError("cannot create output directory: " + dir);
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  // A missing or unparsable spec is a configuration problem (exit 2), like a
  // bad run config; IoError (exit 4) is reserved for output failures.
  if (!in) throw pidld::ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw pidld::ConfigError("cannot parse " + path + ": " + e.what());
  }
}

void report_files(const std::vector<std::string>& files) {
  for (const auto& f : files) std::cout << "wrote " << f << "\n";
}

int cmd_run(const std::string& config_path, const CommonOpts& opts) {
  pidld::LoadedConfig cfg = pidld::load_run_config(config_path);
  if (opts.seed_set) {
    cfg.run.master_seed = opts.seed;
    cfg.echo["master_seed"] = opts.seed;
  }
  ensure_dir(opts.out_dir);
  const std::vector<std::string> comments = {pidld::echo_comment(cfg.echo)};
  const pidld::KlGrid grid(cfg.kl.box_low, cfg.kl.box_high, cfg.kl.bins_per_axis,
                           cfg.kl.pseudo_count, *cfg.truth);
  const auto path_of = [&](const char* name) {
    return (fs::path(opts.out_dir) / name).string();
  };
  pidld::CsvWriter traj(path_of("run_trajectory.csv"),
                        {"step", "particle_id", "x0", "x1"}, comments);
  pidld::CsvWriter kl_csv(path_of("run_kl.csv"), {"snapshot", "step", "kl"},
                          comments);
  std::vector<double> xs, ys;
  long snapshot = 0;
  auto on_snapshot = [&](long step, const pidld::Ensemble& ens) {
    ++snapshot;
    for (int i = 0; i < ens.n; ++i) {
      const double* x = ens.positions.data() + 2 * static_cast<std::size_t>(i);
      traj.row({std::to_string(step), std::to_string(i),
                pidld::format_double(x[0]), pidld::format_double(x[1])});
    }
    const double kl = grid.kl(ens.positions);
    kl_csv.row({std::to_string(snapshot), std::to_string(step),
                pidld::format_double(kl)});
    xs.push_back(static_cast<double>(step));
    ys.push_back(kl);
  };
  const pidld::RunResult res =
      pidld::run_annealed(cfg.run, *cfg.model, opts.threads, on_snapshot);
  traj.close();
  kl_csv.close();

  pidld::CsvWriter fin(path_of("run_final.csv"), {"particle_id", "x0", "x1"},
                       comments);
  for (int i = 0; i < res.ensemble.n; ++i) {
    const double* x =
        res.ensemble.positions.data() + 2 * static_cast<std::size_t>(i);
    fin.row({std::to_string(i), pidld::format_double(x[0]),
             pidld::format_double(x[1])});
  }
  fin.close();

  const double final_kl = grid.kl(res.ensemble.positions);
  std::cout << "steps: " << res.state.step_count << "\n"
            << "snapshots: " << snapshot << "\n"
            << "score evaluations per particle: " << res.score_evals << "\n";
  if (!ys.empty()) std::cout << "terminal KL (pre-denoise): " << ys.back() << "\n";
  std::cout << "final KL (after denoise): " << final_kl << "\n";
  std::cout << "wrote " << path_of("run_trajectory.csv") << "\n"
            << "wrote " << path_of("run_kl.csv") << "\n"
            << "wrote " << path_of("run_final.csv") << "\n";
  if (!opts.no_svg && !xs.empty()) {
    pidld::Series s;
    s.name = "KL";
    s.xs = xs;
    s.ys = ys;
    pidld::ChartStyle style;
    style.title = "KL divergence along the run";
    style.x_label = "step";
    style.y_label = "KL divergence";
    pidld::render_line_chart(path_of("run_kl.svg"), style, {s}, comments);
    std::cout << "wrote " << path_of("run_kl.svg") << "\n";
  }
  return 0;
}

int cmd_sweep(const std::string& spec_path, const CommonOpts& opts) {
  const json spec = load_json_file(spec_path);
  if (!spec.is_object()) throw pidld::ConfigError("sweep spec must be a JSON object");
  for (const auto& [key, _] : spec.items()) {
    if (key != "experiment" && key != "config" && key != "seeds") {
      throw pidld::ConfigError("sweep spec: unknown key '" + key + "'");
    }
  }
  if (!spec.contains("experiment") || !spec["experiment"].is_string()) {
    throw pidld::ConfigError("sweep spec: 'experiment' (string) is required");
  }
  if (!spec.contains("config") || !spec["config"].is_string()) {
    throw pidld::ConfigError("sweep spec: 'config' (path string) is required");
  }
  const std::string experiment = spec["experiment"];
  const auto& registry = pidld::experiment_registry();
  const auto it = registry.find(experiment);
  if (it == registry.end()) {
    std::string known;
    for (const auto& [name, _] : registry) {
      known += known.empty() ? name : ", " + name;
    }
    throw pidld::ConfigError("unknown experiment '" + experiment +
                             "' (known: " + known +
                             "; the stability grid has its own subcommand)");
  }
  std::vector<std::uint64_t> seeds;
  if (opts.seed_set) {
    seeds = {opts.seed};
  } else if (spec.contains("seeds")) {
    if (!spec["seeds"].is_array() || spec["seeds"].empty()) {
      throw pidld::ConfigError("sweep spec: 'seeds' must be a non-empty array");
    }
    for (const auto& s : spec["seeds"]) {
      if (!s.is_number_unsigned()) {
        throw pidld::ConfigError("sweep spec: seeds must be nonnegative integers");
      }
      seeds.push_back(s.get<std::uint64_t>());
    }
  } else {
    seeds = pidld::default_seeds(experiment);
  }
  const pidld::LoadedConfig cfg =
      pidld::load_run_config(spec["config"].get<std::string>());
  pidld::ExperimentContext ctx;
  ctx.out_dir = opts.out_dir;
  ctx.threads = opts.threads;
  ctx.svg = !opts.no_svg;
  const pidld::ExperimentResult result = it->second(cfg, seeds, ctx);
  report_files(result.files);
  return 0;
}

int cmd_stability(const std::string& spec_path, const CommonOpts& opts) {
  pidld::StabilityGridSpec gspec;
  if (!spec_path.empty()) {
    const json spec = load_json_file(spec_path);
    if (!spec.is_object()) {
      throw pidld::ConfigError("stability spec must be a JSON object");
    }
    const std::map<std::string, std::function<void(const json&)>> setters = {
        {"eps_min", [&](const json& v) { gspec.eps_min = v.get<double>(); }},
        {"eps_max", [&](const json& v) { gspec.eps_max = v.get<double>(); }},
        {"eps_count", [&](const json& v) { gspec.eps_count = v.get<int>(); }},
        {"kd_min", [&](const json& v) { gspec.kd_min = v.get<double>(); }},
        {"kd_max", [&](const json& v) { gspec.kd_max = v.get<double>(); }},
        {"kd_count", [&](const json& v) { gspec.kd_count = v.get<int>(); }},
        {"m", [&](const json& v) { gspec.m = v.get<double>(); }},
        {"sim_max_steps",
         [&](const json& v) { gspec.sim_max_steps = v.get<long>(); }},
        {"empirical", [&](const json& v) { gspec.empirical = v.get<bool>(); }},
        {"empirical_burn_in",
         [&](const json& v) { gspec.empirical_burn_in = v.get<long>(); }},
        {"empirical_samples",
         [&](const json& v) { gspec.empirical_samples = v.get<long>(); }},
        {"empirical_seed",
         [&](const json& v) { gspec.empirical_seed = v.get<std::uint64_t>(); }},
    };
    for (const auto& [key, value] : spec.items()) {
      const auto setter = setters.find(key);
      if (setter == setters.end()) {
        throw pidld::ConfigError("stability spec: unknown key '" + key + "'");
      }
      try {
        setter->second(value);
      } catch (const json::exception& e) {
        throw pidld::ConfigError("stability spec: bad value for '" + key +
                                 "': " + e.what());
      }
    }
  }
  pidld::ExperimentContext ctx;
  ctx.out_dir = opts.out_dir;
  ctx.threads = opts.threads;
  ctx.svg = !opts.no_svg;
  const pidld::ExperimentResult result = pidld::run_stability_grid(gspec, ctx);
  report_files(result.files);
  return 0;
}

int cmd_plot(const std::string& csv_path, const std::string& out_path) {
  const pidld::CsvFile file = pidld::read_csv(csv_path);
  if (file.rows.empty()) throw pidld::ConfigError(csv_path + ": no data rows");
  const auto column = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < file.header.size(); ++i) {
      if (file.header[i] == name) return static_cast<int>(i);
    }
    return -1;
  };
  int x_col = column("step");
  int y_col = column("kl");
  if (x_col < 0 || y_col < 0) {
    if (file.header.size() == 2) {
      x_col = 0;
      y_col = 1;
    } else {
      throw pidld::ConfigError(
          csv_path + ": need 'step' and 'kl' columns, or exactly two columns");
    }
  }
  const int snap_col = column("snapshot");
  std::vector<pidld::Series> series;
  std::map<std::string, std::size_t> index;
  for (const auto& row : file.rows) {
    std::string key;
    for (std::size_t c = 0; c < row.size(); ++c) {
      const int ci = static_cast<int>(c);
      if (ci == x_col || ci == y_col || ci == snap_col) continue;
      key += key.empty() ? row[c] : " " + row[c];
    }
    auto [it, inserted] = index.try_emplace(key, series.size());
    if (inserted) {
      pidld::Series s;
      s.name = key.empty() ? file.header[static_cast<std::size_t>(y_col)] : key;
      series.push_back(std::move(s));
    }
    pidld::Series& s = series[it->second];
    s.xs.push_back(std::stod(row[static_cast<std::size_t>(x_col)]));
    s.ys.push_back(std::stod(row[static_cast<std::size_t>(y_col)]));
  }
  pidld::ChartStyle style;
  style.title = fs::path(csv_path).filename().string();
  style.x_label = file.header[static_cast<std::size_t>(x_col)];
  style.y_label = file.header[static_cast<std::size_t>(y_col)];
  pidld::render_line_chart(out_path, style, series, file.comments);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PID-controlled annealed Langevin sampling toolkit"};
  app.require_subcommand(1);
  CommonOpts opts;
  std::string config_path, sweep_spec, stability_spec, plot_csv, plot_out;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out-dir", opts.out_dir, "output directory");
    sub->add_option("--threads", opts.threads,
                    "worker threads (0 = all available)");
    sub->add_flag("--no-svg", opts.no_svg, "skip SVG rendering");
  };

  CLI::App* run_cmd =
      app.add_subcommand("run", "single annealed run from a JSON config");
  run_cmd->add_option("config", config_path, "run config JSON")->required();
  CLI::Option* run_seed =
      run_cmd->add_option("--seed", opts.seed, "override master_seed");
  add_common(run_cmd);

  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "run a named experiment over seeds");
  sweep_cmd->add_option("spec", sweep_spec, "sweep spec JSON")->required();
  CLI::Option* sweep_seed =
      sweep_cmd->add_option("--seed", opts.seed, "run a single seed");
  add_common(sweep_cmd);

  CLI::App* stability_cmd = app.add_subcommand(
      "stability", "linear stability grid (spectral radius, Jury, covariance)");
  stability_cmd->add_option("spec", stability_spec,
                            "optional grid spec JSON (defaults cover the "
                            "standard 50x50 grid)");
  add_common(stability_cmd);

  CLI::App* plot_cmd =
      app.add_subcommand("plot", "render a line chart from a curves CSV");
  plot_cmd->add_option("csv", plot_csv, "input CSV")->required();
  plot_cmd->add_option("--out", plot_out, "output SVG path")->required();

  CLI11_PARSE(app, argc, argv);
  opts.seed_set = run_seed->count() > 0 || sweep_seed->count() > 0;

  try {
    if (run_cmd->parsed()) return cmd_run(config_path, opts);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_spec, opts);
    if (stability_cmd->parsed()) return cmd_stability(stability_spec, opts);
    if (plot_cmd->parsed()) return cmd_plot(plot_csv, plot_out);
  } catch (const pidld::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const pidld::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const pidld::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
