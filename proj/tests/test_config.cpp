#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dynafilter/cli.hpp"
#include "dynafilter/config.hpp"
#include "dynafilter/metrics.hpp"

using namespace dynafilter;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  EXPECT_TRUE(in.good()) << p;
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / "dynaf_test" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// A small linear-Gaussian run that exercises both buffers and the filter.
std::string small_train_config(const std::string& schedule, const std::string& epsilon) {
  return "env.name = lingauss\n"
         "env.state_dim = 2\n"
         "env.num_actions = 2\n"
         "model.kind = kde\n"
         "model.kde_bandwidth = 1.0\n"
         "agent.hidden = 8\n"
         "agent.updates_per_step = 1\n"
         "agent.batch = 4\n"
         "dyna.k = 2\n"
         "dyna.h = 10\n"
         "dyna.l = 1\n"
         "dyna.n = 2\n"
         "dyna.f = 5\n"
         "dyna.min_fit_size = 5\n"
         "dyna.eval_period = 5\n"
         "dyna.eval_episodes = 2\n"
         "dyna.eval_horizon = 5\n"
         "filter.schedule = " + schedule + "\n"
         "filter.epsilon = " + epsilon + "\n";
}

}  // namespace

TEST(FmtDouble, ShortestRoundTripForms) {
  EXPECT_EQ(fmt_double(0.5), "0.5");
  EXPECT_EQ(fmt_double(1.0), "1");
  EXPECT_EQ(fmt_double(0.25), "0.25");
  EXPECT_EQ(fmt_double(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(fmt_double(-std::numeric_limits<double>::infinity()), "-inf");
  EXPECT_EQ(fmt_double(std::numeric_limits<double>::quiet_NaN()), "nan");
}

TEST(Config, EmptyTextYieldsDefaults) {
  ExperimentConfig c = load_config_text("");
  EXPECT_EQ(c.seed, 1u);
  EXPECT_TRUE(c.seeds.empty());
  EXPECT_EQ(c.env_name, "pendulum");
  EXPECT_EQ(c.model_kind, "mlp");
  EXPECT_EQ(c.filter_schedule, "off");
  EXPECT_EQ(c.dyna_m, -1);
  EXPECT_EQ(c.agent_gamma, 0.99);
}

TEST(Config, UnknownKeyIsNamedInTheError) {
  try {
    load_config_text("frobnicate = 1\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("frobnicate"), std::string::npos);
  }
}

TEST(Config, ParseErrorsCarryLineNumbers) {
  try {
    load_config_text("seed = 1\nthis line has no equals\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_THROW(load_config_text("seed =\n"), ConfigError);
  EXPECT_THROW(load_config_text("dyna.k = three\n"), ConfigError);
  EXPECT_THROW(load_config_text("dyna.k = 0\n"), ConfigError);
}

TEST(Config, CommentsAndBlanksAreIgnored) {
  ExperimentConfig c = load_config_text(
      "# full-line comment\n"
      "\n"
      "seed = 42   # trailing comment\n");
  EXPECT_EQ(c.seed, 42u);
}

TEST(Config, CommonExperimentShapesValidate) {
  // Plain rollout shape: many single-step branches.
  EXPECT_NO_THROW(load_config_text(
      "dyna.k = 20\ndyna.h = 250\ndyna.n = 400\ndyna.l = 1\ndyna.m = 400\n"
      "agent.updates_per_step = 20\n"));
  // Deep rollout shape with the decaying schedule.
  EXPECT_NO_THROW(load_config_text(
      "dyna.k = 20\ndyna.h = 250\ndyna.n = 80\ndyna.l = 5\ndyna.m = 400\n"
      "filter.schedule = dynamic\n"));
}

TEST(Config, ExplicitBatchSizeMustMatchProduct) {
  try {
    load_config_text("dyna.n = 100\ndyna.l = 1\ndyna.m = 400\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("dyna.m"), std::string::npos);
  }
  // Omitted m is derived instead of checked.
  EXPECT_NO_THROW(load_config_text("dyna.n = 100\ndyna.l = 1\n"));
}

TEST(Config, DynamicScheduleNeedsMultipleEpisodes) {
  EXPECT_THROW(load_config_text("filter.schedule = dynamic\ndyna.k = 1\n"), ConfigError);
  EXPECT_NO_THROW(load_config_text("filter.schedule = dynamic\ndyna.k = 2\n"));
}

TEST(Config, FilterEpsilonForms) {
  ExperimentConfig real = load_config_text("filter.schedule = static\nfilter.epsilon = 0.4\n");
  EXPECT_DOUBLE_EQ(real.filter_epsilon, 0.4);
  EXPECT_FALSE(real.filter_epsilon_off);

  ExperimentConfig inf = load_config_text("filter.schedule = static\nfilter.epsilon = inf\n");
  EXPECT_TRUE(std::isinf(inf.filter_epsilon));
  EXPECT_FALSE(inf.filter_epsilon_off);
  EXPECT_EQ(make_dyna_config(inf).filter_kind, FilterScheduleKind::Static);

  ExperimentConfig off = load_config_text("filter.schedule = static\nfilter.epsilon = off\n");
  EXPECT_TRUE(off.filter_epsilon_off);
  EXPECT_EQ(make_dyna_config(off).filter_kind, FilterScheduleKind::Off);
  EXPECT_NE(config_echo(off).find("filter.epsilon = off"), std::string::npos);

  EXPECT_THROW(load_config_text("filter.schedule = static\nfilter.epsilon = -0.5\n"),
               ConfigError);
}

TEST(Config, EchoRoundTripsToItself) {
  ExperimentConfig c = load_config_text(
      "seeds = 3,5\n"
      "env.name = lingauss\n"
      "env.state_dim = 6\n"
      "model.kind = kde\n"
      "model.hidden = 64,64\n"
      "agent.gamma = 0.95\n"
      "dyna.k = 4\ndyna.h = 50\ndyna.l = 5\ndyna.n = 80\n"
      "filter.schedule = dynamic\n"
      "filter.key = state_action\n"
      "filter.action_weight = 2.5\n");
  std::string echo1 = config_echo(c);
  ExperimentConfig c2 = load_config_text(echo1);
  std::string echo2 = config_echo(c2);
  EXPECT_EQ(echo1, echo2);
}

TEST(Config, MakeDynaConfigMapsEveryField) {
  ExperimentConfig c = load_config_text(
      "dyna.k = 3\ndyna.h = 7\ndyna.l = 2\ndyna.n = 5\ndyna.f = 11\ndyna.r = 4\n"
      "dyna.pretrain_samples = 13\ndyna.min_fit_size = 17\n"
      "dyna.eval_period = 19\ndyna.eval_episodes = 23\ndyna.eval_horizon = 29\n"
      "agent.updates_per_step = 6\nagent.batch = 31\nagent.real_fraction = 0.25\n"
      "agent.eps_start = 0.9\nagent.eps_end = 0.1\nagent.eps_decay_frac = 0.5\n"
      "filter.schedule = static\nfilter.epsilon = 0.7\nfilter.key = state_action\n"
      "filter.action_weight = 1.5\nfilter.exact = true\n"
      "index.m_link = 8\nindex.ef_construction = 50\nindex.ef_search = 20\n");
  DynaConfig d = make_dyna_config(c);
  EXPECT_EQ(d.episodes, 3);
  EXPECT_EQ(d.horizon, 7);
  EXPECT_EQ(d.rollout_len, 2);
  EXPECT_EQ(d.branches, 5);
  EXPECT_EQ(d.refit_period, 11);
  EXPECT_EQ(d.retention_epochs, 4);
  EXPECT_EQ(d.pretrain_samples, 13);
  EXPECT_EQ(d.min_fit_size, 17);
  EXPECT_EQ(d.eval_period, 19);
  EXPECT_EQ(d.eval_episodes, 23);
  EXPECT_EQ(d.eval_horizon, 29);
  EXPECT_EQ(d.updates_per_step, 6);
  EXPECT_EQ(d.batch_size, 31);
  EXPECT_DOUBLE_EQ(d.real_fraction, 0.25);
  EXPECT_DOUBLE_EQ(d.eps_start, 0.9);
  EXPECT_DOUBLE_EQ(d.eps_end, 0.1);
  EXPECT_DOUBLE_EQ(d.eps_decay_frac, 0.5);
  EXPECT_EQ(d.filter_kind, FilterScheduleKind::Static);
  EXPECT_DOUBLE_EQ(d.filter_epsilon, 0.7);
  EXPECT_EQ(d.key_mode, FilterKeyMode::StateAction);
  EXPECT_DOUBLE_EQ(d.action_weight, 1.5);
  EXPECT_TRUE(d.exact_index);
  EXPECT_EQ(d.m_link, 8);
  EXPECT_EQ(d.ef_construction, 50);
  EXPECT_EQ(d.ef_search, 20);
}

TEST(Metrics, HeaderAndRowFormatAreFrozen) {
  EXPECT_EQ(metrics_csv_header(),
            "real_steps,episode,eval_return_mean,eval_return_std,kept_count,"
            "rejected_count,eps_k,model_nll,wallclock_ms");
  EvalPoint p;
  p.real_steps = 50;
  p.episode = 2;
  p.eval_return_mean = 1.5;
  p.eval_return_std = 0.25;
  p.kept_count = 10;
  p.rejected_count = 3;
  EXPECT_EQ(metrics_csv_row(p), "50,2,1.5,0.25,10,3,inf,nan,0");
}

TEST(Metrics, AggregateRejectsRaggedRuns) {
  std::vector<std::vector<EvalPoint>> runs(2);
  runs[0].resize(3);
  runs[1].resize(2);
  fs::path dir = fresh_dir("agg");
  EXPECT_THROW(write_aggregate_csv((dir / "a.csv").string(), runs), DimensionError);
  runs[1].resize(3);
  EXPECT_NO_THROW(write_aggregate_csv((dir / "a.csv").string(), runs));
  std::string text = slurp(dir / "a.csv");
  EXPECT_NE(text.find("eval_return_ci95"), std::string::npos);
}

TEST(ResolveSeeds, PriorityOrder) {
  unsetenv("DYNA_OOD_SEED");
  ExperimentConfig c;
  c.seed = 4;
  EXPECT_EQ(resolve_seeds(c, std::nullopt), std::vector<std::uint64_t>{4});
  c.seeds = {2, 3};
  EXPECT_EQ(resolve_seeds(c, std::nullopt), (std::vector<std::uint64_t>{2, 3}));
  EXPECT_EQ(resolve_seeds(c, 7), std::vector<std::uint64_t>{7});
  setenv("DYNA_OOD_SEED", "9", 1);
  EXPECT_EQ(resolve_seeds(c, 7), std::vector<std::uint64_t>{9});
  setenv("DYNA_OOD_SEED", "not-a-number", 1);
  EXPECT_THROW(resolve_seeds(c, 7), ConfigError);
  unsetenv("DYNA_OOD_SEED");
}

TEST(CmdTrain, WritesArtifactsAndIsByteStable) {
  fs::path dir_a = fresh_dir("train_a");
  fs::path dir_b = fresh_dir("train_b");
  TrainOptions opt;
  opt.config_text = small_train_config("static", "0.8");
  std::ostringstream log;

  opt.out_dir_override = dir_a.string();
  ASSERT_EQ(cmd_train(opt, log), 0) << log.str();
  opt.out_dir_override = dir_b.string();
  ASSERT_EQ(cmd_train(opt, log), 0) << log.str();

  for (const auto& dir : {dir_a, dir_b}) {
    EXPECT_TRUE(fs::exists(dir / "metrics_seed1.csv"));
    EXPECT_TRUE(fs::exists(dir / "trace_seed1.jsonl"));
    EXPECT_TRUE(fs::exists(dir / "config_resolved.txt"));
    EXPECT_TRUE(fs::exists(dir / "aggregate.csv"));
  }
  EXPECT_EQ(slurp(dir_a / "metrics_seed1.csv"), slurp(dir_b / "metrics_seed1.csv"));
  EXPECT_EQ(slurp(dir_a / "trace_seed1.jsonl"), slurp(dir_b / "trace_seed1.jsonl"));

  std::string metrics = slurp(dir_a / "metrics_seed1.csv");
  EXPECT_EQ(metrics.substr(0, metrics.find('\n')), metrics_csv_header());
  std::string echo = slurp(dir_a / "config_resolved.txt");
  EXPECT_NE(echo.find("filter.epsilon = 0.8"), std::string::npos);
}

TEST(CmdTrain, FilterOffAndInfiniteEpsilonShareEvalColumns) {
  fs::path dir_off = fresh_dir("train_off");
  fs::path dir_inf = fresh_dir("train_inf");
  std::ostringstream log;
  TrainOptions opt;
  opt.config_text = small_train_config("off", "inf");
  opt.out_dir_override = dir_off.string();
  ASSERT_EQ(cmd_train(opt, log), 0) << log.str();
  opt.config_text = small_train_config("static", "inf");
  opt.out_dir_override = dir_inf.string();
  ASSERT_EQ(cmd_train(opt, log), 0) << log.str();

  std::stringstream a(slurp(dir_off / "metrics_seed1.csv"));
  std::stringstream b(slurp(dir_inf / "metrics_seed1.csv"));
  std::string la, lb;
  int rows = 0;
  while (std::getline(a, la) && std::getline(b, lb)) {
    // Columns 0-3: real_steps, episode, eval mean, eval std.
    auto prefix = [](const std::string& line) {
      std::size_t pos = 0;
      for (int c = 0; c < 4; ++c) pos = line.find(',', pos) + 1;
      return line.substr(0, pos);
    };
    EXPECT_EQ(prefix(la), prefix(lb)) << "row " << rows;
    ++rows;
  }
  EXPECT_GT(rows, 1);
}

TEST(CmdTrain, SeedOverrideAndEnvVarPickTheSeed) {
  unsetenv("DYNA_OOD_SEED");
  fs::path dir = fresh_dir("train_seed");
  std::ostringstream log;
  TrainOptions opt;
  opt.config_text = small_train_config("off", "inf");
  opt.out_dir_override = dir.string();
  opt.seed_override = 7;
  ASSERT_EQ(cmd_train(opt, log), 0) << log.str();
  EXPECT_TRUE(fs::exists(dir / "metrics_seed7.csv"));

  setenv("DYNA_OOD_SEED", "9", 1);
  fs::path dir2 = fresh_dir("train_seed_env");
  opt.out_dir_override = dir2.string();
  int rc = cmd_train(opt, log);
  unsetenv("DYNA_OOD_SEED");
  ASSERT_EQ(rc, 0) << log.str();
  EXPECT_TRUE(fs::exists(dir2 / "metrics_seed9.csv"));
  EXPECT_FALSE(fs::exists(dir2 / "metrics_seed7.csv"));
}

TEST(CmdTrain, BadConfigReturnsNonzero) {
  std::ostringstream log;
  TrainOptions opt;
  opt.config_text = "frobnicate = 1\n";
  opt.out_dir_override = fresh_dir("train_bad").string();
  EXPECT_EQ(cmd_train(opt, log), 1);
  EXPECT_NE(log.str().find("train: error"), std::string::npos);
  TrainOptions missing;
  missing.config_path = "/nonexistent/config.cfg";
  EXPECT_EQ(cmd_train(missing, log), 1);
}

TEST(CmdVerifyBounds, QuickChebyshevPasses) {
  VerifyBoundsOptions opt;
  opt.check = "chebyshev";
  opt.seeds = {1};
  opt.trials = 10000;
  opt.out_csv = (fresh_dir("vb") / "reports.csv").string();
  std::ostringstream log;
  EXPECT_EQ(cmd_verify_bounds(opt, log), 0);
  EXPECT_NE(log.str().find("chebyshev/seed1: pass"), std::string::npos);
  std::string csv = slurp(opt.out_csv);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), bound_report_csv_header());
}

TEST(CmdVerifyBounds, CorruptedQuadraticConstantFails) {
  VerifyBoundsOptions opt;
  opt.check = "update";
  opt.seeds = {1};
  opt.trials = 50;
  opt.corrupt_c1 = 0.5;
  std::ostringstream log;
  EXPECT_EQ(cmd_verify_bounds(opt, log), 1);
  EXPECT_NE(log.str().find("FAIL"), std::string::npos);
}

TEST(CmdVerifyBounds, UnknownCheckReturnsTwo) {
  VerifyBoundsOptions opt;
  opt.check = "nonsense";
  std::ostringstream log;
  EXPECT_EQ(cmd_verify_bounds(opt, log), 2);
}

TEST(CmdBenchIndex, TinySizesSucceed) {
  BenchIndexOptions opt;
  opt.sizes = {200};
  opt.queries = 50;
  opt.dim = 4;
  opt.out_csv = (fresh_dir("bench") / "bench.csv").string();
  std::ostringstream log;
  EXPECT_EQ(cmd_bench_index(opt, log), 0);
  std::string csv = slurp(opt.out_csv);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "n,build_ms,median_visited,recall_at_1");
  EXPECT_NE(log.str().find("recall@1="), std::string::npos);
  BenchIndexOptions bad;
  bad.sizes = {};
  EXPECT_EQ(cmd_bench_index(bad, log), 1);
}

TEST(CmdFilterDemo, StaticAndDynamicRuns) {
  fs::path dir = fresh_dir("demo");
  fs::path input = dir / "points.txt";
  write_text_file(input.string(),
                  "# reference keys\n"
                  "0 0\n"
                  "1 1\n"
                  "---\n"
                  "0.4 0.4\n"
                  "2 2\n");
  FilterDemoOptions opt;
  opt.input_path = input.string();
  opt.epsilon = 0.5;
  opt.exact = true;
  std::ostringstream log;
  EXPECT_EQ(cmd_filter_demo(opt, log), 0);
  EXPECT_NE(log.str().find("reject"), std::string::npos);

  FilterDemoOptions dyn = opt;
  dyn.schedule = "dynamic";
  dyn.episode = 1;
  dyn.episodes = 2;
  dyn.rollout_len = 2;
  std::ostringstream log2;
  EXPECT_EQ(cmd_filter_demo(dyn, log2), 0);
  // f(1) = 1/2 of 2 candidates: exactly one eliminated.
  EXPECT_NE(log2.str().find("kept 1 / rejected 1"), std::string::npos);

  FilterDemoOptions missing;
  missing.input_path = (dir / "absent.txt").string();
  std::ostringstream log3;
  EXPECT_EQ(cmd_filter_demo(missing, log3), 1);
}
