#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dynafilter/dyna.hpp"
#include "dynafilter/env.hpp"
#include "dynafilter/errors.hpp"
#include "dynafilter/filter.hpp"
#include "dynafilter/nn.hpp"

namespace dynafilter {

/// Shortest round-trip decimal form of a double; the one formatting used in
/// every file this project writes, so identical runs emit identical bytes.
inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/**
 * Flat key = value experiment configuration with a closed schema: every key
 * has a default, unknown keys are rejected by name. '#' starts a comment.
 */
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds;  // non-empty overrides `seed`
  std::string out_dir = "runs/out";

  std::string env_name = "pendulum";
  DiscretePendulum::Params pend;
  LinearGaussianEnv::Params lin;

  std::string model_kind = "mlp";  // mlp | kde
  int model_ensemble_b = 1;
  std::vector<int> model_hidden = {32, 32};
  std::string model_activation = "tanh";
  double model_lr = 1e-3;
  int model_epochs = 10;
  int model_batch = 32;
  double model_var_floor = 1e-6;
  double model_var_ceil = 10.0;
  std::string kde_kernel = "gaussian";
  double kde_bandwidth = 0.0;  // 0 selects the median heuristic
  double model_lipschitz_cap = 0.0;

  std::vector<int> agent_hidden = {32, 32};
  std::string agent_activation = "tanh";
  double agent_alpha = 1e-3;
  double agent_gamma = 0.99;
  std::uint64_t agent_sync_period = 100;
  int agent_updates_per_step = 1;
  int agent_batch = 32;
  double agent_real_fraction = 0.05;
  double agent_eps_start = 1.0;
  double agent_eps_end = 0.05;
  double agent_eps_decay_frac = 0.2;

  int dyna_k = 1;
  int dyna_h = 1;
  int dyna_l = 1;
  int dyna_n = 1;
  long long dyna_m = -1;  // optional; must equal n * l when given
  int dyna_f = 250;
  int dyna_r = 1;
  int dyna_pretrain_samples = 0;
  int dyna_min_fit_size = 32;
  int dyna_eval_period = 0;
  int dyna_eval_episodes = 5;
  int dyna_eval_horizon = 0;

  std::string filter_schedule = "off";  // off | static | dynamic
  double filter_epsilon = std::numeric_limits<double>::infinity();
  bool filter_epsilon_off = false;  // `filter.epsilon = off` forces schedule off
  std::string filter_key = "state";  // state | state_action
  double filter_action_weight = 1.0;
  bool filter_exact = false;

  int index_m_link = 16;
  int index_ef_construction = 200;
  int index_ef_search = 64;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline double parse_real(const std::string& key, const std::string& v) {
  if (v == "inf") return std::numeric_limits<double>::infinity();
  try {
    std::size_t pos = 0;
    double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a real number, got '" + v + "'");
  }
}

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long out = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: key '" + key + "' expects true/false, got '" + v + "'");
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<int>(parse_int(key, item)));
  }
  if (out.empty()) throw ConfigError("config: key '" + key + "' expects a comma list");
  return out;
}

inline std::vector<std::uint64_t> parse_u64_list(const std::string& key, const std::string& v) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<std::uint64_t>(parse_int(key, item)));
  }
  return out;
}

inline std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace detail

inline Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "linear") return Activation::Linear;
  throw ConfigError("config: unknown activation '" + name + "'");
}

/// Apply one key = value assignment. Unknown keys are errors by name.
inline void apply_config_key(ExperimentConfig& c, const std::string& key,
                             const std::string& value) {
  using namespace detail;
  auto as_int = [&](int lo) {
    long long v = parse_int(key, value);
    if (v < lo) throw ConfigError("config: key '" + key + "' must be >= " + std::to_string(lo));
    return static_cast<int>(v);
  };

  if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "seeds") c.seeds = parse_u64_list(key, value);
  else if (key == "out_dir") c.out_dir = value;
  else if (key == "env.name") {
    if (value != "pendulum" && value != "lingauss")
      throw ConfigError("config: env.name must be pendulum or lingauss, got '" + value + "'");
    c.env_name = value;
  } else if (key == "env.gravity") c.pend.gravity = parse_real(key, value);
  else if (key == "env.length") c.pend.length = parse_real(key, value);
  else if (key == "env.mass") c.pend.mass = parse_real(key, value);
  else if (key == "env.dt") c.pend.dt = parse_real(key, value);
  else if (key == "env.torque_max") c.pend.torque_max = parse_real(key, value);
  else if (key == "env.theta_max") c.pend.theta_max = parse_real(key, value);
  else if (key == "env.omega_max") c.pend.omega_max = parse_real(key, value);
  else if (key == "env.init_range") c.pend.init_range = parse_real(key, value);
  else if (key == "env.state_dim") c.lin.state_dim = as_int(1);
  else if (key == "env.num_actions") c.lin.num_actions = as_int(1);
  else if (key == "env.a_scale") c.lin.a_scale = parse_real(key, value);
  else if (key == "env.b_scale") c.lin.b_scale = parse_real(key, value);
  else if (key == "env.sigma") c.lin.sigma = parse_real(key, value);
  else if (key == "env.box_half") c.lin.box_half = parse_real(key, value);
  else if (key == "model.kind") {
    if (value != "mlp" && value != "kde")
      throw ConfigError("config: model.kind must be mlp or kde, got '" + value + "'");
    c.model_kind = value;
  } else if (key == "model.ensemble_b") c.model_ensemble_b = as_int(1);
  else if (key == "model.hidden") c.model_hidden = parse_int_list(key, value);
  else if (key == "model.activation") c.model_activation = value;
  else if (key == "model.lr") c.model_lr = parse_real(key, value);
  else if (key == "model.epochs") c.model_epochs = as_int(1);
  else if (key == "model.batch") c.model_batch = as_int(1);
  else if (key == "model.var_floor") c.model_var_floor = parse_real(key, value);
  else if (key == "model.var_ceil") c.model_var_ceil = parse_real(key, value);
  else if (key == "model.kde_kernel") {
    if (value != "indicator" && value != "gaussian")
      throw ConfigError("config: model.kde_kernel must be indicator or gaussian");
    c.kde_kernel = value;
  } else if (key == "model.kde_bandwidth") c.kde_bandwidth = parse_real(key, value);
  else if (key == "model.lipschitz_cap") c.model_lipschitz_cap = parse_real(key, value);
  else if (key == "agent.hidden") c.agent_hidden = parse_int_list(key, value);
  else if (key == "agent.activation") c.agent_activation = value;
  else if (key == "agent.alpha") c.agent_alpha = parse_real(key, value);
  else if (key == "agent.gamma") c.agent_gamma = parse_real(key, value);
  else if (key == "agent.sync_period")
    c.agent_sync_period = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "agent.updates_per_step") c.agent_updates_per_step = as_int(0);
  else if (key == "agent.batch") c.agent_batch = as_int(1);
  else if (key == "agent.real_fraction") c.agent_real_fraction = parse_real(key, value);
  else if (key == "agent.eps_start") c.agent_eps_start = parse_real(key, value);
  else if (key == "agent.eps_end") c.agent_eps_end = parse_real(key, value);
  else if (key == "agent.eps_decay_frac") c.agent_eps_decay_frac = parse_real(key, value);
  else if (key == "dyna.k") c.dyna_k = as_int(1);
  else if (key == "dyna.h") c.dyna_h = as_int(1);
  else if (key == "dyna.l") c.dyna_l = as_int(0);
  else if (key == "dyna.n") c.dyna_n = as_int(0);
  else if (key == "dyna.m") c.dyna_m = parse_int(key, value);
  else if (key == "dyna.f") c.dyna_f = as_int(1);
  else if (key == "dyna.r") c.dyna_r = as_int(1);
  else if (key == "dyna.pretrain_samples") c.dyna_pretrain_samples = as_int(0);
  else if (key == "dyna.min_fit_size") c.dyna_min_fit_size = as_int(1);
  else if (key == "dyna.eval_period") c.dyna_eval_period = as_int(0);
  else if (key == "dyna.eval_episodes") c.dyna_eval_episodes = as_int(1);
  else if (key == "dyna.eval_horizon") c.dyna_eval_horizon = as_int(0);
  else if (key == "filter.schedule") {
    if (value != "off" && value != "static" && value != "dynamic")
      throw ConfigError("config: filter.schedule must be off, static or dynamic");
    c.filter_schedule = value;
  } else if (key == "filter.epsilon") {
    if (value == "off") {
      c.filter_epsilon_off = true;
      c.filter_epsilon = std::numeric_limits<double>::infinity();
    } else {
      c.filter_epsilon_off = false;
      c.filter_epsilon = parse_real(key, value);
    }
  } else if (key == "filter.key") {
    if (value != "state" && value != "state_action")
      throw ConfigError("config: filter.key must be state or state_action");
    c.filter_key = value;
  } else if (key == "filter.action_weight") c.filter_action_weight = parse_real(key, value);
  else if (key == "filter.exact") c.filter_exact = parse_bool(key, value);
  else if (key == "index.m_link") c.index_m_link = as_int(2);
  else if (key == "index.ef_construction") c.index_ef_construction = as_int(1);
  else if (key == "index.ef_search") c.index_ef_search = as_int(1);
  else throw ConfigError("config: unknown key '" + key + "'");
}

/// Cross-key validation, run after all assignments.
inline void validate_config(const ExperimentConfig& c) {
  if (c.dyna_m >= 0 &&
      c.dyna_m != static_cast<long long>(c.dyna_n) * static_cast<long long>(c.dyna_l))
    throw ConfigError("config: dyna.m must equal dyna.n * dyna.l (" + std::to_string(c.dyna_n) +
                      " * " + std::to_string(c.dyna_l) + ")");
  std::string schedule = c.filter_epsilon_off ? "off" : c.filter_schedule;
  if (schedule == "dynamic" && c.dyna_k < 2)
    throw ConfigError("config: dynamic filter schedule needs dyna.k >= 2");
  if (schedule == "static" && !(c.filter_epsilon >= 0.0))
    throw ConfigError("config: filter.epsilon must be >= 0");
  if (c.agent_real_fraction < 0.0 || c.agent_real_fraction > 1.0)
    throw ConfigError("config: agent.real_fraction must be in [0, 1]");
  if (c.agent_gamma < 0.0 || c.agent_gamma > 1.0)
    throw ConfigError("config: agent.gamma must be in [0, 1]");
  if (c.model_var_floor <= 0.0 || c.model_var_ceil < c.model_var_floor)
    throw ConfigError("config: need 0 < model.var_floor <= model.var_ceil");
  parse_activation(c.model_activation);
  parse_activation(c.agent_activation);
}

inline ExperimentConfig load_config_text(const std::string& text) {
  ExperimentConfig c;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(line_no) + " is not key = value");
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config: line " + std::to_string(line_no) + " has an empty key or value");
    apply_config_key(c, key, value);
  }
  validate_config(c);
  return c;
}

inline ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_config_text(ss.str());
}

/// Every key with its resolved value, sorted, one per line; written next to
/// the run outputs so a run is reconstructible from its artifacts.
inline std::string config_echo(const ExperimentConfig& c) {
  std::map<std::string, std::string> kv;
  kv["seed"] = std::to_string(c.seed);
  if (!c.seeds.empty()) {
    std::string s;
    for (std::size_t i = 0; i < c.seeds.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(c.seeds[i]);
    }
    kv["seeds"] = s;
  }
  kv["out_dir"] = c.out_dir;
  kv["env.name"] = c.env_name;
  kv["env.gravity"] = fmt_double(c.pend.gravity);
  kv["env.length"] = fmt_double(c.pend.length);
  kv["env.mass"] = fmt_double(c.pend.mass);
  kv["env.dt"] = fmt_double(c.pend.dt);
  kv["env.torque_max"] = fmt_double(c.pend.torque_max);
  kv["env.theta_max"] = fmt_double(c.pend.theta_max);
  kv["env.omega_max"] = fmt_double(c.pend.omega_max);
  kv["env.init_range"] = fmt_double(c.pend.init_range);
  kv["env.state_dim"] = std::to_string(c.lin.state_dim);
  kv["env.num_actions"] = std::to_string(c.lin.num_actions);
  kv["env.a_scale"] = fmt_double(c.lin.a_scale);
  kv["env.b_scale"] = fmt_double(c.lin.b_scale);
  kv["env.sigma"] = fmt_double(c.lin.sigma);
  kv["env.box_half"] = fmt_double(c.lin.box_half);
  kv["model.kind"] = c.model_kind;
  kv["model.ensemble_b"] = std::to_string(c.model_ensemble_b);
  kv["model.hidden"] = detail::join_ints(c.model_hidden);
  kv["model.activation"] = c.model_activation;
  kv["model.lr"] = fmt_double(c.model_lr);
  kv["model.epochs"] = std::to_string(c.model_epochs);
  kv["model.batch"] = std::to_string(c.model_batch);
  kv["model.var_floor"] = fmt_double(c.model_var_floor);
  kv["model.var_ceil"] = fmt_double(c.model_var_ceil);
  kv["model.kde_kernel"] = c.kde_kernel;
  kv["model.kde_bandwidth"] = fmt_double(c.kde_bandwidth);
  kv["model.lipschitz_cap"] = fmt_double(c.model_lipschitz_cap);
  kv["agent.hidden"] = detail::join_ints(c.agent_hidden);
  kv["agent.activation"] = c.agent_activation;
  kv["agent.alpha"] = fmt_double(c.agent_alpha);
  kv["agent.gamma"] = fmt_double(c.agent_gamma);
  kv["agent.sync_period"] = std::to_string(c.agent_sync_period);
  kv["agent.updates_per_step"] = std::to_string(c.agent_updates_per_step);
  kv["agent.batch"] = std::to_string(c.agent_batch);
  kv["agent.real_fraction"] = fmt_double(c.agent_real_fraction);
  kv["agent.eps_start"] = fmt_double(c.agent_eps_start);
  kv["agent.eps_end"] = fmt_double(c.agent_eps_end);
  kv["agent.eps_decay_frac"] = fmt_double(c.agent_eps_decay_frac);
  kv["dyna.k"] = std::to_string(c.dyna_k);
  kv["dyna.h"] = std::to_string(c.dyna_h);
  kv["dyna.l"] = std::to_string(c.dyna_l);
  kv["dyna.n"] = std::to_string(c.dyna_n);
  kv["dyna.m"] = std::to_string(c.dyna_m < 0 ? static_cast<long long>(c.dyna_n) * c.dyna_l
                                             : c.dyna_m);
  kv["dyna.f"] = std::to_string(c.dyna_f);
  kv["dyna.r"] = std::to_string(c.dyna_r);
  kv["dyna.pretrain_samples"] = std::to_string(c.dyna_pretrain_samples);
  kv["dyna.min_fit_size"] = std::to_string(c.dyna_min_fit_size);
  kv["dyna.eval_period"] = std::to_string(c.dyna_eval_period);
  kv["dyna.eval_episodes"] = std::to_string(c.dyna_eval_episodes);
  kv["dyna.eval_horizon"] = std::to_string(c.dyna_eval_horizon);
  kv["filter.schedule"] = c.filter_epsilon_off ? "off" : c.filter_schedule;
  kv["filter.epsilon"] = c.filter_epsilon_off ? "off" : fmt_double(c.filter_epsilon);
  kv["filter.key"] = c.filter_key;
  kv["filter.action_weight"] = fmt_double(c.filter_action_weight);
  kv["filter.exact"] = c.filter_exact ? "true" : "false";
  kv["index.m_link"] = std::to_string(c.index_m_link);
  kv["index.ef_construction"] = std::to_string(c.index_ef_construction);
  kv["index.ef_search"] = std::to_string(c.index_ef_search);
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

/// Translate the experiment block into the loop's config.
inline DynaConfig make_dyna_config(const ExperimentConfig& c) {
  DynaConfig d;
  d.episodes = c.dyna_k;
  d.horizon = c.dyna_h;
  d.rollout_len = c.dyna_l;
  d.branches = c.dyna_n;
  d.updates_per_step = c.agent_updates_per_step;
  d.refit_period = c.dyna_f;
  d.retention_epochs = c.dyna_r;
  d.pretrain_samples = c.dyna_pretrain_samples;
  d.min_fit_size = c.dyna_min_fit_size;
  d.real_fraction = c.agent_real_fraction;
  d.batch_size = c.agent_batch;
  d.eps_start = c.agent_eps_start;
  d.eps_end = c.agent_eps_end;
  d.eps_decay_frac = c.agent_eps_decay_frac;
  d.eval_period = c.dyna_eval_period;
  d.eval_episodes = c.dyna_eval_episodes;
  d.eval_horizon = c.dyna_eval_horizon;
  std::string schedule = c.filter_epsilon_off ? "off" : c.filter_schedule;
  d.filter_kind = schedule == "off"      ? FilterScheduleKind::Off
                  : schedule == "static" ? FilterScheduleKind::Static
                                         : FilterScheduleKind::Dynamic;
  d.filter_epsilon = c.filter_epsilon;
  d.key_mode = c.filter_key == "state" ? FilterKeyMode::StateOnly : FilterKeyMode::StateAction;
  d.action_weight = c.filter_action_weight;
  d.exact_index = c.filter_exact;
  d.m_link = c.index_m_link;
  d.ef_construction = c.index_ef_construction;
  d.ef_search = c.index_ef_search;
  return d;
}

}  // namespace dynafilter
