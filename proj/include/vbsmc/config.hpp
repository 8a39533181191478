#ifndef VBSMC_CONFIG_HPP
#define VBSMC_CONFIG_HPP

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "vbsmc/arma.hpp"
#include "vbsmc/error.hpp"
#include "vbsmc/obs.hpp"
#include "vbsmc/smc.hpp"
#include "vbsmc/var.hpp"
#include "vbsmc/variational.hpp"

namespace vbsmc {

enum class ModelKind { arma, var };

/// Everything one CLI invocation needs. Built only through `parse_run_config`,
/// which validates every field before anything is computed.
///
/// JSON schema (all keys optional unless noted):
///   model:       {kind: "arma", ar: [..], ma: [..]}
///              | {kind: "var", weights: [W_1, ..., W_k] (n x n row lists), labels: [..]}   (required)
///   innovations: {hurst: 0.7, sigma2: 1.0}
///   noise:       {alpha: 0.5, beta: 1.0}
///   filter:      {particles: 1000, resampling: "paper"|"systematic", ess_threshold: null, workers: 1}
///   horizon:     100
///   seed:        0
///   out:         "."
///   data:        {observations, truth, dataset, dataset_truth}   (file paths)
///   simulate:    {mask_fraction: 0.0}
///   fitness:     {enabled: false, samples: 2000, residual_sign: "as_printed"|"likelihood"}
struct RunConfig {
  ModelKind kind = ModelKind::arma;
  std::optional<ArmaModel> arma;
  std::optional<VarModel> var;
  std::vector<std::string> labels;  ///< VAR series labels (may be empty = take from data)
  FilterConfig filter;
  std::size_t horizon = 100;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::optional<std::string> observations_path;
  std::optional<std::string> truth_path;
  std::optional<std::string> dataset_path;
  std::optional<std::string> dataset_truth_path;
  double mask_fraction = 0.0;
  bool fitness = false;
  std::size_t fitness_samples = 2000;
  ResidualSign residual_sign = ResidualSign::as_printed;

  std::string model_label() const { return kind == ModelKind::arma ? arma->label() : var->label(); }
};

namespace detail {

template <class T>
T field(const nlohmann::json& obj, const std::string& key, const std::string& path, T fallback) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config field '" + path + key + "': " + e.what());
  }
}

inline const nlohmann::json& section(const nlohmann::json& root, const std::string& key) {
  static const nlohmann::json empty = nlohmann::json::object();
  if (!root.contains(key)) return empty;
  const auto& s = root.at(key);
  if (!s.is_object()) throw ConfigError("config field '" + key + "' must be an object");
  return s;
}

template <class Fn>
auto guarded(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError("config field '" + path + "': " + e.what());
  }
}

inline std::optional<std::string> optional_path(const nlohmann::json& obj, const std::string& key) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  return field<std::string>(obj, key, "data.", "");
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& root) {
  using detail::field;
  if (!root.is_object()) throw ConfigError("config root must be a JSON object");
  RunConfig cfg;

  const auto& inn = detail::section(root, "innovations");
  const double hurst = field<double>(inn, "hurst", "innovations.", 0.7);
  const double sigma2 = field<double>(inn, "sigma2", "innovations.", 1.0);
  const FgnSpec spec = detail::guarded("innovations", [&] { return FgnSpec(HurstExponent(hurst), sigma2); });

  if (!root.contains("model")) throw ConfigError("config field 'model' is required");
  const auto& model = detail::section(root, "model");
  const auto kind = field<std::string>(model, "kind", "model.", "arma");
  if (kind == "arma") {
    cfg.kind = ModelKind::arma;
    auto ar = field<std::vector<double>>(model, "ar", "model.", {});
    auto ma = field<std::vector<double>>(model, "ma", "model.", {});
    cfg.arma = detail::guarded("model", [&] { return ArmaModel(ar, ma, spec); });
  } else if (kind == "var") {
    cfg.kind = ModelKind::var;
    const auto raw = field<std::vector<std::vector<std::vector<double>>>>(model, "weights", "model.", {});
    std::vector<Matrix> weights;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const auto& rows = raw[i];
      const auto n = static_cast<Eigen::Index>(rows.size());
      Matrix w(n, n);
      for (Eigen::Index r = 0; r < n; ++r) {
        if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)].size()) != n) {
          throw ConfigError("config field 'model.weights[" + std::to_string(i) + "]' must be square");
        }
        for (Eigen::Index c = 0; c < n; ++c) w(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      }
      weights.push_back(std::move(w));
    }
    cfg.var = detail::guarded("model.weights", [&] { return VarModel(weights, spec); });
    cfg.labels = field<std::vector<std::string>>(model, "labels", "model.", {});
    if (!cfg.labels.empty() && cfg.labels.size() != cfg.var->dim()) {
      throw ConfigError("config field 'model.labels': expected " + std::to_string(cfg.var->dim()) + " labels");
    }
  } else {
    throw ConfigError("config field 'model.kind': expected \"arma\" or \"var\", got \"" + kind + "\"");
  }

  const auto& noise = detail::section(root, "noise");
  const double alpha = field<double>(noise, "alpha", "noise.", 0.5);
  const double beta = field<double>(noise, "beta", "noise.", 1.0);
  cfg.filter.channel.noise = detail::guarded("noise", [&] { return GammaNoiseParams(alpha, beta); });

  const auto& filt = detail::section(root, "filter");
  const auto particles = field<std::int64_t>(filt, "particles", "filter.", 1000);
  if (particles < 2) throw ConfigError("config field 'filter.particles': must be >= 2");
  cfg.filter.n_particles = static_cast<std::size_t>(particles);
  cfg.filter.resampling = detail::guarded("filter.resampling", [&] {
    return parse_resampling_scheme(field<std::string>(filt, "resampling", "filter.", "paper"));
  });
  if (filt.contains("ess_threshold") && !filt.at("ess_threshold").is_null())
    cfg.filter.ess_threshold = field<double>(filt, "ess_threshold", "filter.", 1.0);
  const auto workers = field<std::int64_t>(filt, "workers", "filter.", 1);
  if (workers < 1) throw ConfigError("config field 'filter.workers': must be >= 1");
  cfg.filter.workers = static_cast<std::size_t>(workers);
  detail::guarded("filter", [&] {
    cfg.filter.validate();
    return 0;
  });

  const auto horizon = field<std::int64_t>(root, "horizon", "", 100);
  if (horizon < 1) throw ConfigError("config field 'horizon': must be >= 1, got " + std::to_string(horizon));
  cfg.horizon = static_cast<std::size_t>(horizon);
  cfg.seed = field<std::uint64_t>(root, "seed", "", 0);
  cfg.filter.seed = cfg.seed;
  cfg.out_dir = field<std::string>(root, "out", "", ".");

  const auto& data = detail::section(root, "data");
  cfg.observations_path = detail::optional_path(data, "observations");
  cfg.truth_path = detail::optional_path(data, "truth");
  cfg.dataset_path = detail::optional_path(data, "dataset");
  cfg.dataset_truth_path = detail::optional_path(data, "dataset_truth");

  const auto& sim = detail::section(root, "simulate");
  cfg.mask_fraction = field<double>(sim, "mask_fraction", "simulate.", 0.0);
  if (!(cfg.mask_fraction >= 0.0 && cfg.mask_fraction < 1.0)) {
    throw ConfigError("config field 'simulate.mask_fraction': must lie in [0, 1)");
  }

  const auto& fit = detail::section(root, "fitness");
  cfg.fitness = field<bool>(fit, "enabled", "fitness.", false);
  const auto samples = field<std::int64_t>(fit, "samples", "fitness.", 2000);
  if (samples < 1) throw ConfigError("config field 'fitness.samples': must be >= 1");
  cfg.fitness_samples = static_cast<std::size_t>(samples);
  const auto sign = field<std::string>(fit, "residual_sign", "fitness.", "as_printed");
  if (sign == "as_printed") {
    cfg.residual_sign = ResidualSign::as_printed;
  } else if (sign == "likelihood") {
    cfg.residual_sign = ResidualSign::likelihood;
  } else {
    throw ConfigError("config field 'fitness.residual_sign': expected \"as_printed\" or \"likelihood\"");
  }
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(root);
}

}  // namespace vbsmc

#endif
