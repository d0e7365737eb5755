// Command-line front end: train runs the full loop from a config file,
// verify-bounds replays the concentration and update-shift checks,
// bench-index measures the graph index, filter-demo filters a saved
// buffer pair. Every command is a thin shell over the library so tests
// can call the same entry points in-process.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dynafilter/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Dyna-style model-based RL with nearest-neighbour rollout filtering"};
  app.require_subcommand(1);

  dynafilter::TrainOptions train_opt;
  std::uint64_t train_seed = 0;
  auto* train = app.add_subcommand("train", "run the full training loop from a config file");
  train->add_option("-c,--config", train_opt.config_path, "config file (key = value lines)")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("-o,--out", train_opt.out_dir_override, "output directory override");
  train->add_option("-s,--seed", train_seed, "seed override (single run)");

  dynafilter::VerifyBoundsOptions vb_opt;
  auto* verify = app.add_subcommand("verify-bounds", "run the bound verification suites");
  verify->add_option("--check", vb_opt.check,
                     "all | chebyshev | trajectory | update | composed");
  verify->add_option("--seeds", vb_opt.seeds, "seeds to run each suite under")
      ->delimiter(',');
  verify->add_option("--trials", vb_opt.trials, "trial count override (0 = per-check default)");
  verify->add_option("--eps", vb_opt.epsilon, "epsilon for the probabilistic checks");
  verify->add_option("--eps-kde", vb_opt.epsilon_kde, "epsilon_kde for the estimator checks");
  verify->add_option("--alpha", vb_opt.alpha, "learning rate used in the update checks");
  verify->add_option("--corrupt-c1", vb_opt.corrupt_c1,
                     "scale the quadratic update constant (diagnostic; 0.5 must fail)");
  verify->add_option("--corrupt-c2", vb_opt.corrupt_c2,
                     "scale the linear update constant (diagnostic)");
  verify->add_option("--out", vb_opt.out_csv, "write the reports as CSV");

  dynafilter::BenchIndexOptions bi_opt;
  auto* bench = app.add_subcommand("bench-index", "measure index build/query behaviour");
  bench->add_option("--sizes", bi_opt.sizes, "buffer sizes to benchmark")->delimiter(',');
  bench->add_option("--queries", bi_opt.queries, "queries per size");
  bench->add_option("--dim", bi_opt.dim, "key dimension");
  bench->add_option("--seed", bi_opt.seed, "data/query seed");
  bench->add_option("--m-link", bi_opt.m_link, "graph degree parameter");
  bench->add_option("--ef-construction", bi_opt.ef_construction, "construction beam width");
  bench->add_option("--ef-search", bi_opt.ef_search, "query beam width");
  bench->add_option("--out", bi_opt.out_csv, "write results as CSV");

  dynafilter::FilterDemoOptions fd_opt;
  auto* fdemo = app.add_subcommand("filter-demo", "filter saved candidates against saved keys");
  fdemo->add_option("-i,--input", fd_opt.input_path,
                    "keys file: reference rows, ---, candidate rows")
      ->required()
      ->check(CLI::ExistingFile);
  fdemo->add_option("--epsilon", fd_opt.epsilon, "static distance threshold");
  fdemo->add_option("--schedule", fd_opt.schedule, "static | dynamic");
  fdemo->add_option("--episode", fd_opt.episode, "current episode k (dynamic)");
  fdemo->add_option("--episodes", fd_opt.episodes, "total episodes K (dynamic)");
  fdemo->add_option("--rollout-len", fd_opt.rollout_len, "rollout length L (dynamic)");
  fdemo->add_flag("--exact", fd_opt.exact, "use the exact index instead of the graph");
  fdemo->add_option("--seed", fd_opt.seed, "level seed for the graph index");

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) {
    if (train->count("--seed") > 0) train_opt.seed_override = train_seed;
    return dynafilter::cmd_train(train_opt, std::cout);
  }
  if (verify->parsed()) return dynafilter::cmd_verify_bounds(vb_opt, std::cout);
  if (bench->parsed()) return dynafilter::cmd_bench_index(bi_opt, std::cout);
  return dynafilter::cmd_filter_demo(fd_opt, std::cout);
}
