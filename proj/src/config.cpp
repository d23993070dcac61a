#include "pidld/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace pidld {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::string& path,
                         const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.contains(key)) {
      throw ConfigError("unknown key: " + (path.empty() ? key : path + "." + key));
    }
  }
}

const json& require(const json& obj, const std::string& path,
                    const std::string& key) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw ConfigError("missing key: " + (path.empty() ? key : path + "." + key));
  }
  return *it;
}

double get_number(const json& obj, const std::string& path, const std::string& key) {
  const json& v = require(obj, path, key);
  if (!v.is_number()) {
    throw ConfigError(path + "." + key + ": expected a number");
  }
  return v.get<double>();
}

double get_number_or(const json& obj, const std::string& path,
                     const std::string& key, double fallback) {
  if (!obj.contains(key)) return fallback;
  return get_number(obj, path, key);
}

long get_integer(const json& obj, const std::string& path, const std::string& key) {
  const json& v = require(obj, path, key);
  if (!v.is_number_integer()) {
    throw ConfigError(path + "." + key + ": expected an integer");
  }
  return v.get<long>();
}

bool get_bool_or(const json& obj, const std::string& path,
                 const std::string& key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError(path + "." + key + ": expected a boolean");
  return v.get<bool>();
}

std::vector<double> get_vector(const json& obj, const std::string& path,
                               const std::string& key) {
  const json& v = require(obj, path, key);
  if (!v.is_array() || v.empty()) {
    throw ConfigError(path + "." + key + ": expected a nonempty array of numbers");
  }
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& e : v) {
    if (!e.is_number()) {
      throw ConfigError(path + "." + key + ": expected a nonempty array of numbers");
    }
    out.push_back(e.get<double>());
  }
  return out;
}

}  // namespace

LoadedConfig parse_run_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("configuration root must be an object");
  reject_unknown_keys(doc, "", {"target", "gains", "schedule", "ensemble",
                                "master_seed", "record_every", "final_denoise",
                                "kl"});
  LoadedConfig cfg;

  // target
  const json& target = require(doc, "", "target");
  if (!target.is_object()) throw ConfigError("target: expected an object");
  reject_unknown_keys(target, "target", {"type", "components", "base_variance", "bias"});
  const json& type = require(target, "target", "type");
  if (!type.is_string() || type.get<std::string>() != "gaussian_mixture") {
    throw ConfigError("target.type: only \"gaussian_mixture\" is supported");
  }
  const json& comps = require(target, "target", "components");
  if (!comps.is_array() || comps.empty()) {
    throw ConfigError("target.components: expected a nonempty array");
  }
  std::vector<GaussianMixture::Component> components;
  for (std::size_t i = 0; i < comps.size(); ++i) {
    const std::string cpath = "target.components[" + std::to_string(i) + "]";
    const json& c = comps[i];
    if (!c.is_object()) throw ConfigError(cpath + ": expected an object");
    reject_unknown_keys(c, cpath, {"weight", "mean"});
    GaussianMixture::Component comp;
    comp.weight = get_number(c, cpath, "weight");
    comp.mean = get_vector(c, cpath, "mean");
    components.push_back(std::move(comp));
  }
  const double base_variance = get_number_or(target, "target", "base_variance", 1.0);
  try {
    cfg.truth = std::make_shared<GaussianMixture>(std::move(components), base_variance);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("target.components: ") + e.what());
  }
  cfg.model = cfg.truth;
  json bias_echo;
  if (target.contains("bias")) {
    const json& bias = target.at("bias");
    if (!bias.is_object()) throw ConfigError("target.bias: expected an object");
    reject_unknown_keys(bias, "target.bias", {"direction", "scale_fraction"});
    std::vector<double> direction = get_vector(bias, "target.bias", "direction");
    const double frac = get_number(bias, "target.bias", "scale_fraction");
    try {
      cfg.model = std::make_shared<BiasedScore>(cfg.truth, direction, frac);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("target.bias: ") + e.what());
    }
    bias_echo = {{"direction", direction}, {"scale_fraction", frac}};
  }

  // gains
  PidGains gains;
  if (doc.contains("gains")) {
    const json& g = doc.at("gains");
    if (!g.is_object()) throw ConfigError("gains: expected an object");
    reject_unknown_keys(g, "gains", {"kp", "ki", "kd", "gamma"});
    gains.kp = get_number_or(g, "gains", "kp", 1.0);
    gains.ki = get_number_or(g, "gains", "ki", 0.0);
    gains.kd = get_number_or(g, "gains", "kd", 0.0);
    gains.gamma = get_number_or(g, "gains", "gamma", 1.0);
  }
  if (!(gains.gamma > 0.0) || gains.gamma > 1.0) {
    throw ConfigError("gains.gamma: must lie in (0, 1]");
  }

  // schedule
  const json& sched = require(doc, "", "schedule");
  if (!sched.is_object()) throw ConfigError("schedule: expected an object");
  reject_unknown_keys(sched, "schedule",
                      {"sigma_first", "sigma_last", "levels", "steps_per_level",
                       "base_step", "step_rule"});
  const double sigma_first = get_number(sched, "schedule", "sigma_first");
  const double sigma_last = get_number(sched, "schedule", "sigma_last");
  const long levels = get_integer(sched, "schedule", "levels");
  const long steps_per_level = get_integer(sched, "schedule", "steps_per_level");
  const double base_step = get_number(sched, "schedule", "base_step");
  std::string step_rule = "ncsn_quadratic";
  if (sched.contains("step_rule")) {
    const json& r = sched.at("step_rule");
    if (!r.is_string()) throw ConfigError("schedule.step_rule: expected a string");
    step_rule = r.get<std::string>();
  }
  StepRule rule;
  if (step_rule == "ncsn_quadratic") {
    rule = StepRule::ncsn_quadratic;
  } else if (step_rule == "constant") {
    rule = StepRule::constant;
  } else {
    throw ConfigError(
        "schedule.step_rule: must be \"ncsn_quadratic\" or \"constant\"");
  }
  if (levels < 1 || levels > 1000000) {
    throw ConfigError("schedule.levels: must be a positive integer");
  }
  try {
    cfg.run.schedule = NoiseSchedule::geometric(sigma_first, sigma_last,
                                                static_cast<int>(levels),
                                                steps_per_level, base_step, rule);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("schedule: ") + e.what());
  }

  // ensemble
  const json& ens = require(doc, "", "ensemble");
  if (!ens.is_object()) throw ConfigError("ensemble: expected an object");
  reject_unknown_keys(ens, "ensemble", {"size", "init_box"});
  const long size = get_integer(ens, "ensemble", "size");
  if (size < 1 || size > 100000000) {
    throw ConfigError("ensemble.size: must be a positive integer");
  }
  double box_low = -8.0, box_high = 8.0;
  if (ens.contains("init_box")) {
    const json& box = ens.at("init_box");
    if (!box.is_object()) throw ConfigError("ensemble.init_box: expected an object");
    reject_unknown_keys(box, "ensemble.init_box", {"low", "high"});
    box_low = get_number(box, "ensemble.init_box", "low");
    box_high = get_number(box, "ensemble.init_box", "high");
  }
  if (!(box_high > box_low)) {
    throw ConfigError("ensemble.init_box: high must exceed low");
  }

  // scalars
  long master_seed = 0;
  if (doc.contains("master_seed")) {
    master_seed = get_integer(doc, "", "master_seed");
    if (master_seed < 0) throw ConfigError("master_seed: must be nonnegative");
  }
  long record_every = 5;
  if (doc.contains("record_every")) {
    record_every = get_integer(doc, "", "record_every");
    if (record_every < 0) throw ConfigError("record_every: must be >= 0");
  }
  const bool final_denoise = get_bool_or(doc, "", "final_denoise", true);

  // kl
  KlParams kl;
  if (doc.contains("kl")) {
    const json& k = doc.at("kl");
    if (!k.is_object()) throw ConfigError("kl: expected an object");
    reject_unknown_keys(k, "kl", {"box", "bins_per_axis", "pseudo_count"});
    if (k.contains("box")) {
      std::vector<double> box = get_vector(k, "kl", "box");
      if (box.size() != 2 || !(box[1] > box[0])) {
        throw ConfigError("kl.box: expected [low, high] with high > low");
      }
      kl.box_low = box[0];
      kl.box_high = box[1];
    }
    if (k.contains("bins_per_axis")) {
      const long bins = get_integer(k, "kl", "bins_per_axis");
      if (bins < 1 || bins > 4096) {
        throw ConfigError("kl.bins_per_axis: must be in [1, 4096]");
      }
      kl.bins_per_axis = static_cast<int>(bins);
    }
    if (k.contains("pseudo_count")) {
      kl.pseudo_count = get_number(k, "kl", "pseudo_count");
      if (!(kl.pseudo_count > 0.0)) {
        throw ConfigError("kl.pseudo_count: must be positive");
      }
    }
  }

  cfg.run.gains = gains;
  cfg.run.ensemble_size = static_cast<int>(size);
  cfg.run.box_low = box_low;
  cfg.run.box_high = box_high;
  cfg.run.master_seed = static_cast<std::uint64_t>(master_seed);
  cfg.run.record_every = record_every;
  cfg.run.final_denoise = final_denoise;
  try {
    cfg.run.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  // Resolved echo, defaults included (nlohmann keeps object keys sorted, so
  // the echo is deterministic).
  json target_echo = {{"type", "gaussian_mixture"},
                      {"base_variance", cfg.truth->base_variance()}};
  json comps_echo = json::array();
  for (const auto& c : cfg.truth->components()) {
    comps_echo.push_back({{"weight", c.weight}, {"mean", c.mean}});
  }
  target_echo["components"] = comps_echo;
  if (!bias_echo.is_null()) target_echo["bias"] = bias_echo;
  cfg.echo = {
      {"target", target_echo},
      {"gains", {{"kp", gains.kp}, {"ki", gains.ki}, {"kd", gains.kd}, {"gamma", gains.gamma}}},
      {"schedule",
       {{"sigma_first", sigma_first},
        {"sigma_last", sigma_last},
        {"levels", levels},
        {"steps_per_level", steps_per_level},
        {"base_step", base_step},
        {"step_rule", step_rule}}},
      {"ensemble", {{"size", size}, {"init_box", {{"low", box_low}, {"high", box_high}}}}},
      {"master_seed", master_seed},
      {"record_every", record_every},
      {"final_denoise", final_denoise},
      {"kl",
       {{"box", {kl.box_low, kl.box_high}},
        {"bins_per_axis", kl.bins_per_axis},
        {"pseudo_count", kl.pseudo_count}}}};
  cfg.kl = kl;
  return cfg;
}

LoadedConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    // nlohmann reports the line/column position in the message.
    throw ConfigError("cannot parse " + path + ": " + e.what());
  }
  return parse_run_config(doc);
}

std::string echo_comment(const nlohmann::json& echo) {
  return "config: " + echo.dump();
}

}  // namespace pidld
