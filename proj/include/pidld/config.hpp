#pragma once

#include <memory>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "pidld/sampler.hpp"
#include "pidld/score_model.hpp"

namespace pidld {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KlParams {
  double box_low = -8.0;
  double box_high = 8.0;
  int bins_per_axis = 64;
  double pseudo_count = 1e-6;
};

struct LoadedConfig {
  RunConfig run;
  std::shared_ptr<const GaussianMixture> truth;  // target mixture, used for KL/EM
  std::shared_ptr<const ScoreModel> model;  // truth, or truth wrapped in a bias
  KlParams kl;
  nlohmann::json echo;  // fully resolved document, defaults filled
};

// Validates and materializes a run configuration. Unknown keys anywhere in
// the document are rejected with their full path; every numeric field is
// range-checked. Throws ConfigError with an explanatory message.
LoadedConfig parse_run_config(const nlohmann::json& doc);
LoadedConfig load_run_config(const std::string& path);

// The resolved-configuration comment embedded in every output file so a run
// can be reproduced exactly from its artifacts.
std::string echo_comment(const nlohmann::json& echo);

}  // namespace pidld
