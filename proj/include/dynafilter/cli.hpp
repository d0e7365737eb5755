#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dynafilter/agent.hpp"
#include "dynafilter/bounds.hpp"
#include "dynafilter/config.hpp"
#include "dynafilter/dyna.hpp"
#include "dynafilter/filter.hpp"
#include "dynafilter/index.hpp"
#include "dynafilter/metrics.hpp"

namespace dynafilter {

inline std::unique_ptr<Env> make_env(const ExperimentConfig& c) {
  if (c.env_name == "pendulum") return std::make_unique<DiscretePendulum>(c.pend);
  return std::make_unique<LinearGaussianEnv>(c.lin);
}

inline std::unique_ptr<TransitionModel> make_model(const ExperimentConfig& c, const Env& env,
                                                   std::uint64_t seed) {
  if (c.model_kind == "kde") {
    KdeKernel kernel = c.kde_kernel == "indicator" ? KdeKernel::Indicator : KdeKernel::Gaussian;
    return std::make_unique<KdeTransitionModel>(env.state_dim(), env.num_actions(), kernel, 1.0,
                                                c.model_var_floor, c.model_var_ceil,
                                                c.kde_bandwidth);
  }
  EnsembleTransitionModel::FitParams fp;
  fp.epochs = c.model_epochs;
  fp.batch_size = c.model_batch;
  fp.lr = c.model_lr;
  fp.lipschitz_cap = c.model_lipschitz_cap;
  Rng init = Rng::derive(seed, "model-init");
  return std::make_unique<EnsembleTransitionModel>(
      env.state_dim(), env.num_actions(), c.model_hidden, parse_activation(c.model_activation),
      c.model_var_floor, c.model_var_ceil, c.model_ensemble_b, fp, init);
}

inline DqnAgent make_agent(const ExperimentConfig& c, const Env& env, std::uint64_t seed) {
  Rng init = Rng::derive(seed, "agent-init");
  return DqnAgent::make(env.state_dim(), env.num_actions(), c.agent_hidden,
                        parse_activation(c.agent_activation), c.agent_alpha, c.agent_gamma,
                        c.agent_sync_period, init);
}

/// Seed priority: DYNA_OOD_SEED env var, then the CLI flag, then the config.
inline std::vector<std::uint64_t> resolve_seeds(const ExperimentConfig& c,
                                                std::optional<std::uint64_t> cli_seed) {
  if (const char* env_seed = std::getenv("DYNA_OOD_SEED")) {
    try {
      return {static_cast<std::uint64_t>(std::stoull(env_seed))};
    } catch (const std::exception&) {
      throw ConfigError("DYNA_OOD_SEED is set but not an integer");
    }
  }
  if (cli_seed) return {*cli_seed};
  if (!c.seeds.empty()) return c.seeds;
  return {c.seed};
}

struct TrainOptions {
  std::string config_path;
  std::string config_text;  // used when config_path is empty (tests)
  std::string out_dir_override;
  std::optional<std::uint64_t> seed_override;
};

inline int cmd_train(const TrainOptions& opt, std::ostream& log) {
  try {
    ExperimentConfig cfg = opt.config_path.empty() ? load_config_text(opt.config_text)
                                                   : load_config_file(opt.config_path);
    if (!opt.out_dir_override.empty()) cfg.out_dir = opt.out_dir_override;
    std::vector<std::uint64_t> seeds = resolve_seeds(cfg, opt.seed_override);

    std::filesystem::create_directories(cfg.out_dir);
    DynaConfig dcfg = make_dyna_config(cfg);
    if (const char* t = std::getenv("DYNAF_TIMING"))
      dcfg.capture_timing = std::string(t) == "1";

    std::vector<std::vector<EvalPoint>> per_seed;
    auto env = make_env(cfg);
    for (std::uint64_t seed : seeds) {
      DqnAgent agent = make_agent(cfg, *env, seed);
      auto model = make_model(cfg, *env, seed);
      RunTrace trace = run_dyna(*env, agent, *model, dcfg, seed);
      std::string base = cfg.out_dir + "/";
      write_metrics_csv(base + "metrics_seed" + std::to_string(seed) + ".csv", trace.evals);
      write_trace_jsonl(base + "trace_seed" + std::to_string(seed) + ".jsonl", trace);
      per_seed.push_back(trace.evals);
      log << "seed " << seed << ": " << trace.total_real_steps << " real steps, "
          << trace.total_kept << " of " << trace.total_generated
          << " rollout transitions kept, final eval "
          << (trace.evals.empty() ? "n/a" : fmt_double(trace.evals.back().eval_return_mean))
          << "\n";
    }
    write_text_file(cfg.out_dir + "/config_resolved.txt", config_echo(cfg));
    write_aggregate_csv(cfg.out_dir + "/aggregate.csv", per_seed);
    log << "wrote " << cfg.out_dir << "/ (" << seeds.size() << " seed"
        << (seeds.size() == 1 ? "" : "s") << ")\n";
    return 0;
  } catch (const std::exception& e) {
    log << "train: error: " << e.what() << "\n";
    return 1;
  }
}

/* ------------------------------------------------------------------ */
/* verify-bounds                                                       */

inline void print_bound_report(std::ostream& os, const BoundReport& r) {
  os << r.check << ": " << (r.pass ? "pass" : "FAIL") << "  trials=" << r.n_trials
     << " violations=" << r.violations << " rate=" << fmt_double(r.violation_rate)
     << " allowed=" << fmt_double(r.allowed_rate + r.mc_slack)
     << " lhs_max=" << fmt_double(r.lhs_max) << " rhs_min=" << fmt_double(r.rhs_min);
  if (r.flagged_constant_violations > 0)
    os << " flagged_assumption_failures=" << r.flagged_constant_violations;
  os << "\n";
}

inline std::string bound_report_csv_header() {
  return "check,n_trials,violations,violation_rate,allowed_rate,mc_slack,lhs_max,rhs_min,pass";
}

inline std::string bound_report_csv_row(const BoundReport& r) {
  std::string out = r.check;
  out += "," + std::to_string(r.n_trials);
  out += "," + std::to_string(r.violations);
  out += "," + fmt_double(r.violation_rate);
  out += "," + fmt_double(r.allowed_rate);
  out += "," + fmt_double(r.mc_slack);
  out += "," + fmt_double(r.lhs_max);
  out += "," + fmt_double(r.rhs_min);
  out += r.pass ? ",1" : ",0";
  return out;
}

struct VerifyBoundsOptions {
  std::string check = "all";  // all | chebyshev | trajectory | update | composed
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::size_t trials = 0;  // 0 keeps each check's default
  double epsilon = 0.1;
  double epsilon_kde = 0.1;
  double alpha = 0.1;
  double corrupt_c1 = 1.0;
  double corrupt_c2 = 1.0;
  std::string out_csv;
};

inline int cmd_verify_bounds(const VerifyBoundsOptions& opt, std::ostream& log) {
  try {
    std::vector<BoundReport> reports;
    auto want = [&](const char* name) { return opt.check == "all" || opt.check == name; };
    bool corrupted = opt.corrupt_c1 != 1.0 || opt.corrupt_c2 != 1.0;

    if (want("chebyshev")) {
      std::size_t n = opt.trials ? std::max<std::size_t>(opt.trials, 10000) : 100000;
      for (std::uint64_t seed : opt.seeds) {
        Rng rng = Rng::derive(seed, "verify-chebyshev");
        reports.push_back(verify_chebyshev(0.0, 1.0, 0.3, 2.0, opt.epsilon, n, rng));
        reports.back().check += "/seed" + std::to_string(seed);
      }
    }
    if (want("trajectory")) {
      std::size_t n = opt.trials ? opt.trials : 500;
      LinearGaussianEnv::Params p;
      p.state_dim = 8;
      p.num_actions = 4;
      LinearGaussianEnv env(p);
      for (std::uint64_t seed : opt.seeds) {
        Rng rng = Rng::derive(seed, "verify-trajectory");
        reports.push_back(verify_trajectory_shift(env, opt.epsilon, opt.epsilon_kde, n, rng));
        reports.back().check += "/seed" + std::to_string(seed);
      }
    }
    if (want("update")) {
      std::size_t n = opt.trials ? opt.trials : 500;
      for (std::uint64_t seed : opt.seeds) {
        Rng rng = Rng::derive(seed, "verify-update");
        ClosedFormLinearQ cf;
        cf.dim = 2;
        // The safe regime: small parameter norm, where the stated constants
        // dominate with a provable margin.
        double theta_norm = corrupted ? 6.0 : 0.5;
        Vec theta_t(static_cast<std::size_t>(cf.dim));
        Vec theta_minus(static_cast<std::size_t>(cf.dim));
        for (auto& v : theta_t) v = rng.normal();
        for (auto& v : theta_minus) v = rng.normal();
        double nt = norm2(theta_t), nm = norm2(theta_minus);
        for (auto& v : theta_t) v *= theta_norm / nt;
        for (auto& v : theta_minus) v *= theta_norm / nm;
        auto pairs = make_q_update_pairs(cf.dim, 1, cf.box_half, n, 0.6, rng);
        if (corrupted) {
          // A pair where the quadratic term carries real load, so halving C1
          // must produce a visible violation: axis-aligned parameters and a
          // half-box shift.
          theta_t = Vec{6.0, 0.0};
          theta_minus = Vec{0.0, 0.0};
          QUpdatePair p;
          p.s = Vec{1.0, 1.0};
          p.s_hat = Vec{0.5, 1.0};
          p.s_next = Vec{0.0, 0.0};
          p.s_next_hat = Vec{0.0, 0.0};
          pairs.push_back(p);
        }
        BoundReport rep = verify_update_shift(cf.problem(), cf.bundle(theta_t, theta_minus),
                                              theta_t, theta_minus, pairs, opt.alpha, 0.0,
                                              opt.corrupt_c1, opt.corrupt_c2);
        rep.check += "/seed" + std::to_string(seed);
        reports.push_back(rep);
      }
      if (!corrupted) {
        Rng rng = Rng::derive(opt.seeds.empty() ? 1 : opt.seeds.front(), "verify-update-mlp");
        MlpQInstance inst = make_mlp_q_instance(4, 2, 1.0, 16, 0.02, 0.1, 2000, 1.2, rng);
        auto pairs = make_q_update_pairs(4, 2, 1.0, 300, 0.3, rng);
        BoundReport rep = verify_update_shift(inst.problem, inst.bundle, inst.theta_t,
                                              inst.theta_minus, pairs, opt.alpha, 0.9);
        rep.check += "/mlp";
        reports.push_back(rep);
      }
    }
    if (want("composed")) {
      std::size_t n = opt.trials ? opt.trials : 400;
      LinearGaussianEnv::Params p;
      p.state_dim = 4;
      p.num_actions = 2;
      LinearGaussianEnv env(p);
      for (std::uint64_t seed : opt.seeds) {
        Rng rng = Rng::derive(seed, "verify-composed");
        reports.push_back(
            verify_composed_shift(env, opt.alpha, opt.epsilon, opt.epsilon_kde, n, rng));
        reports.back().check += "/seed" + std::to_string(seed);
      }
    }

    if (reports.empty()) {
      log << "verify-bounds: unknown check '" << opt.check << "'\n";
      return 2;
    }
    bool all_pass = true;
    for (const auto& r : reports) {
      print_bound_report(log, r);
      all_pass = all_pass && r.pass;
    }
    if (!opt.out_csv.empty()) {
      std::ofstream out(opt.out_csv, std::ios::binary);
      if (!out) throw ConfigError("cannot open '" + opt.out_csv + "' for writing");
      out << bound_report_csv_header() << "\n";
      for (const auto& r : reports) out << bound_report_csv_row(r) << "\n";
    }
    log << (all_pass ? "all checks passed\n" : "CHECK FAILURES PRESENT\n");
    return all_pass ? 0 : 1;
  } catch (const std::exception& e) {
    log << "verify-bounds: error: " << e.what() << "\n";
    return 1;
  }
}

/* ------------------------------------------------------------------ */
/* bench-index                                                         */

struct BenchIndexOptions {
  std::vector<std::size_t> sizes = {10000, 100000};
  std::size_t queries = 1000;
  int dim = 8;
  std::uint64_t seed = 1;
  int m_link = 16;
  int ef_construction = 200;
  int ef_search = 64;
  std::string out_csv;
};

struct BenchIndexRow {
  std::size_t n = 0;
  double build_ms = 0.0;
  std::size_t median_visited = 0;
  double recall_at_1 = 0.0;
};

inline std::vector<BenchIndexRow> bench_index(const BenchIndexOptions& opt) {
  std::vector<BenchIndexRow> rows;
  for (std::size_t n : opt.sizes) {
    Rng data_rng = Rng::derive(opt.seed, "bench-data");
    Rng level_rng = Rng::derive(opt.seed, "index-levels");
    Rng query_rng = Rng::derive(opt.seed, "bench-queries");
    HnswIndex hnsw(opt.dim, opt.m_link, opt.ef_construction, opt.ef_search);
    ExactIndex exact(opt.dim);
    std::vector<Vec> points;
    points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Vec x(static_cast<std::size_t>(opt.dim));
      for (auto& v : x) v = data_rng.uniform01();
      points.push_back(std::move(x));
    }
    auto t0 = std::chrono::steady_clock::now();
    for (const auto& x : points) hnsw.insert(x, level_rng);
    auto t1 = std::chrono::steady_clock::now();
    for (const auto& x : points) exact.insert(x);

    std::vector<std::size_t> visited;
    visited.reserve(opt.queries);
    std::size_t hits = 0;
    for (std::size_t q = 0; q < opt.queries; ++q) {
      Vec x(static_cast<std::size_t>(opt.dim));
      for (auto& v : x) v = query_rng.uniform01();
      NnResult a = hnsw.nearest(x);
      NnResult b = exact.nearest(x);
      visited.push_back(a.visited);
      if (a.dist <= b.dist * (1.0 + 1e-12)) ++hits;
    }
    std::sort(visited.begin(), visited.end());
    BenchIndexRow row;
    row.n = n;
    row.build_ms =
        std::chrono::duration_cast<std::chrono::duration<double, std::milli>>(t1 - t0).count();
    row.median_visited = visited[visited.size() / 2];
    row.recall_at_1 = static_cast<double>(hits) / static_cast<double>(opt.queries);
    rows.push_back(row);
  }
  return rows;
}

inline int cmd_bench_index(const BenchIndexOptions& opt, std::ostream& log) {
  try {
    if (opt.sizes.empty() || opt.queries == 0)
      throw ConfigError("bench-index: need at least one size and one query");
    auto rows = bench_index(opt);
    std::string csv = "n,build_ms,median_visited,recall_at_1\n";
    for (const auto& r : rows) {
      csv += std::to_string(r.n) + "," + fmt_double(r.build_ms) + "," +
             std::to_string(r.median_visited) + "," + fmt_double(r.recall_at_1) + "\n";
      log << "n=" << r.n << " build_ms=" << fmt_double(r.build_ms)
          << " median_visited=" << r.median_visited
          << " recall@1=" << fmt_double(r.recall_at_1) << "\n";
    }
    if (!opt.out_csv.empty()) write_text_file(opt.out_csv, csv);
    return 0;
  } catch (const std::exception& e) {
    log << "bench-index: error: " << e.what() << "\n";
    return 1;
  }
}

/* ------------------------------------------------------------------ */
/* filter-demo                                                         */

struct FilterDemoOptions {
  std::string input_path;  // reference keys and candidate keys, see README
  double epsilon = 0.5;
  std::string schedule = "static";  // static | dynamic
  int episode = 1;
  int episodes = 2;
  int rollout_len = 1;
  bool exact = false;
  std::uint64_t seed = 1;
};

/// Text format: one point per line, whitespace-separated reals; a line
/// holding only "---" splits reference keys from candidates.
inline void load_filter_demo_file(const std::string& path, std::vector<Vec>& reference,
                                  std::vector<Vec>& candidates) {
  std::ifstream in(path);
  if (!in) throw ConfigError("filter-demo: cannot open '" + path + "'");
  std::vector<Vec>* target = &reference;
  std::string line;
  while (std::getline(in, line)) {
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line == "---") {
      target = &candidates;
      continue;
    }
    Vec v;
    std::stringstream ss(line);
    double x;
    while (ss >> x) v.push_back(x);
    if (!ss.eof()) throw ConfigError("filter-demo: bad number in line '" + line + "'");
    target->push_back(std::move(v));
  }
  if (reference.empty() || candidates.empty())
    throw ConfigError("filter-demo: need reference keys, then ---, then candidates");
}

inline int cmd_filter_demo(const FilterDemoOptions& opt, std::ostream& log) {
  try {
    std::vector<Vec> reference, candidates;
    load_filter_demo_file(opt.input_path, reference, candidates);
    std::size_t dim = reference.front().size();
    for (const auto& v : reference)
      if (v.size() != dim) throw DimensionError("filter-demo: ragged reference keys");
    for (const auto& v : candidates)
      if (v.size() != dim) throw DimensionError("filter-demo: ragged candidate keys");

    RejectSchedule sch;
    if (opt.schedule == "dynamic") {
      sch.kind = FilterScheduleKind::Dynamic;
      sch.total_episodes = opt.episodes;
      sch.rollout_len = opt.rollout_len;
    } else {
      sch.kind = FilterScheduleKind::Static;
      sch.epsilon = opt.epsilon;
    }

    std::vector<double> dists;
    dists.reserve(candidates.size());
    if (opt.exact) {
      ExactIndex index(static_cast<int>(dim));
      for (const auto& v : reference) index.insert(v);
      for (const auto& c : candidates) dists.push_back(index.nearest(c).dist);
    } else {
      HnswIndex index(static_cast<int>(dim));
      Rng level_rng = Rng::derive(opt.seed, "index-levels");
      for (const auto& v : reference) index.insert(v, level_rng);
      for (const auto& c : candidates) dists.push_back(index.nearest(c).dist);
    }
    FilterReport rep;
    if (sch.kind == FilterScheduleKind::Dynamic) {
      rep = apply_dynamic(dists, sch, opt.episode);
    } else {
      rep = apply_threshold(dists, schedule_eps(sch, opt.episode, dists));
    }

    log << "reference=" << reference.size() << " candidates=" << candidates.size()
        << " eps=" << fmt_double(rep.eps_k) << "\n";
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      log << "  [" << i << "] dist=" << fmt_double(rep.nn_dist[i]) << " "
          << (rep.keep[i] ? "keep" : "reject") << "\n";
    }
    log << "kept " << rep.n_kept << " / rejected " << rep.n_rejected << "\n";
    return 0;
  } catch (const std::exception& e) {
    log << "filter-demo: error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace dynafilter
