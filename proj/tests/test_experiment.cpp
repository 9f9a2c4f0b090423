#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "relaympr/experiment.hpp"

using namespace relaympr;

namespace {

std::size_t error_line(std::string_view text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  ADD_FAILURE() << "no ConfigError for:\n" << text;
  return 0;
}

std::string error_message(std::string_view text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RELAYMPR_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::filesystem::path temp_file(const std::string& name, const std::string& body = {}) {
  const auto p = std::filesystem::temp_directory_path() / ("relaympr_test_" + name);
  if (!body.empty()) std::ofstream(p) << body;
  return p;
}

}  // namespace

TEST(Config, MinimalScenario) {
  const auto cfg = parse_config_text("preset = paper-baseline\ngamma = 0.5\nn = 2\nq = 0.2\nq0 = 0.8\n");
  EXPECT_EQ(cfg.mode, Mode::analyze);
  EXPECT_EQ(*cfg.n, 2u);
  EXPECT_DOUBLE_EQ(*cfg.q, 0.2);
  EXPECT_DOUBLE_EQ(*cfg.q0, 0.8);
  EXPECT_DOUBLE_EQ(cfg.layout.r_user_dest, 130.0);
  EXPECT_DOUBLE_EQ(cfg.layout.ptx_relay, 10e-3);
  EXPECT_EQ(cfg.variant, FormulaVariant::corrected);
}

TEST(Config, CommentsUnitsAndOverrides) {
  const auto cfg = parse_config_text(
      "# header\n  n = 3   # trailing\nq=0.1\nq0 = 1\ngamma = 1.2\nptx_user_mw = 2\nr_relay_dest = 70\n"
      "eta = 1e-12\nalpha = 3\nv = 2\nstrict_paper_formulas = true\ngamma_relay = 0.9\n");
  EXPECT_DOUBLE_EQ(cfg.layout.ptx_user, 2e-3);
  EXPECT_DOUBLE_EQ(cfg.layout.r_relay_dest, 70.0);
  EXPECT_DOUBLE_EQ(cfg.layout.noise, 1e-12);
  EXPECT_DOUBLE_EQ(cfg.layout.alpha, 3.0);
  EXPECT_DOUBLE_EQ(cfg.layout.fading_mean, 2.0);
  EXPECT_EQ(cfg.variant, FormulaVariant::as_printed);
  const auto layout = layout_for(cfg, 1.2);
  EXPECT_DOUBLE_EQ(layout.gamma_dest, 1.2);
  EXPECT_DOUBLE_EQ(layout.gamma_relay, 0.9);
}

TEST(Config, SweepInference) {
  const auto cfg = parse_config_text("sweep = n\nn_grid = 1:30\nq = 0.1\nq0 = 1\ngamma = 2.5\n");
  EXPECT_EQ(cfg.mode, Mode::sweep);
  ASSERT_EQ(cfg.grid.size(), 30u);
  EXPECT_EQ(cfg.grid.front(), 1.0);
  EXPECT_EQ(cfg.grid.back(), 30.0);
  const auto sim = parse_config_text("mode = simulate\nsweep = q0\nq0_grid = 0.5,0.7,0.9\nq = 0.1\nn = 2\ngamma = 1\n");
  EXPECT_EQ(sim.mode, Mode::simulate);
  EXPECT_EQ(sim.grid.size(), 3u);
  const auto fig = parse_config_text("preset = fig-queue-vs-q0\n");
  EXPECT_EQ(fig.mode, Mode::preset);
  EXPECT_EQ(*fig.figure, FigurePreset::queue_vs_q0);
}

TEST(Config, StepRangesIncludeEndpoint) {
  const auto cfg = parse_config_text("sweep = q\nq_grid = 0.01:0.01:0.99\nn = 5\nq0 = 1\ngamma = 1\n");
  ASSERT_EQ(cfg.grid.size(), 99u);
  EXPECT_DOUBLE_EQ(cfg.grid[0], 0.01);
  EXPECT_DOUBLE_EQ(cfg.grid[98], 0.99);
  EXPECT_DOUBLE_EQ(cfg.grid[49], 0.5);
}

TEST(Config, ErrorsNameTheLine) {
  EXPECT_EQ(error_line("n = 2\nq = 0.2\nbogus = 1\n"), 3u);
  EXPECT_EQ(error_line("n = 2\nq = 1.5\nq0 = 1\ngamma = 1\n"), 2u);
  EXPECT_EQ(error_line("n = 2\nn = 3\n"), 2u);
  EXPECT_EQ(error_line("n = 2\njust words\n"), 2u);
  EXPECT_EQ(error_line("q = abc\n"), 1u);
  EXPECT_EQ(error_line("n = 0\n"), 1u);
  EXPECT_EQ(error_line("n=1\nq=0.1\nq0=1\ngamma=1\nsweep = q\nq_grid = 0.3,0.2\n"), 6u);
  EXPECT_EQ(error_line("n=1\nq=0.1\nq0=1\ngamma=1\nsweep = q\nq_grid = 0.1:-1:0.5\n"), 6u);
  EXPECT_EQ(error_line("preset = fig-nothing\n"), 1u);
  EXPECT_EQ(error_line("ptx_user_mw = -1\n"), 1u);
  EXPECT_EQ(error_line("n=1\nq=0.1\nq0=1\ngamma=1\nslots = 100\nwarmup = 100\n"), 6u);
}

TEST(Config, StructuralErrors) {
  EXPECT_NE(error_message("n = 2\nq = 0.2\nq0 = 0.8\n").find("'gamma'"), std::string::npos);
  EXPECT_NE(error_message("n=2\nq=0.1\ngamma=1\nq0=1\nmode=sweep\n").find("sweep"), std::string::npos);
  EXPECT_NE(error_message("n=2\nq=0.1\ngamma=1\nsweep=q0\n").find("q0_grid"), std::string::npos);
  EXPECT_NE(error_message("n=2\nq=0.1\ngamma=1\nq0=1\nn_grid=1:3\n").find("n_grid"), std::string::npos);
  EXPECT_NE(error_message("preset = fig-q0min-vs-n\nmode = analyze\n").find("preset"), std::string::npos);
  EXPECT_NE(error_message("mode = preset\n").find("fig"), std::string::npos);
  EXPECT_NE(error_message("mode=simulate\nn=64\nq=0.1\nq0=1\ngamma=1\n").find("63"), std::string::npos);
  EXPECT_NE(error_message("strict_paper_formulas = maybe\n").find("boolean"), std::string::npos);
}

TEST(Config, MissingFileIsIoError) {
  EXPECT_THROW(parse_config("/nonexistent/relaympr.cfg"), IoError);
}

TEST(Config, SampleConfigsParse) {
  for (const auto& entry : std::filesystem::directory_iterator(RELAYMPR_CONFIG_DIR)) {
    EXPECT_NO_THROW(parse_config(entry.path())) << entry.path();
  }
}

TEST(Evaluate, TwoUserPointRoutesThroughTwoUserModel) {
  const auto row = evaluate_point(baseline_layout(0.5), 2, 0.2, 0.8);
  EXPECT_NEAR(*row.prob_empty, 0.729334, 1e-6);
  EXPECT_NEAR(*row.mean_queue, 0.302625596, 1e-9);
  EXPECT_NEAR(*row.per_user, 0.141106501436, 1e-12);
  EXPECT_NEAR(*row.aggregate, 2 * 0.141106501436, 1e-12);
  EXPECT_TRUE(row.stable);
}

TEST(Evaluate, UnstablePointDiverges) {
  const auto row = evaluate_point(baseline_layout(0.5), 10, 0.4, 0.05);
  EXPECT_FALSE(row.stable);
  EXPECT_FALSE(row.mean_queue);
  EXPECT_FALSE(row.aggregate);
  std::ostringstream os;
  write_csv(os, {row});
  EXPECT_NE(os.str().find("diverges"), std::string::npos);
  EXPECT_EQ(os.str().find(",0,false"), std::string::npos);
}

TEST(Csv, RoundTrip) {
  auto cfg = parse_config_text("mode=simulate\nn=2\nq=0.2\nq0=0.8\ngamma=0.5\nslots=20000\nreplications=3\n");
  auto res = run_experiment(cfg);
  ASSERT_EQ(res.rows.size(), 1u);
  ASSERT_TRUE(res.rows[0].sim);
  res.rows.push_back(evaluate_point(baseline_layout(0.5), 10, 0.4, 0.05));
  std::stringstream ss;
  write_csv(ss, res.rows);
  const auto back = read_csv(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0], res.rows[0]);
  EXPECT_EQ(back[1], res.rows[1]);
}

TEST(Csv, HeaderIsFixed) {
  std::ostringstream os;
  write_csv(os, {evaluate_point(baseline_layout(0.5), 3, 0.1, 1.0)});
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')),
            "n,q,q0,gamma,lambda0,lambda1,lambda,mu,prob_empty,mean_queue,q0min,stable,per_user_throughput,"
            "aggregate_throughput,no_relay_aggregate,relay_gain");
  std::istringstream bad("n,q\n1,2\n");
  EXPECT_THROW(read_csv(bad), IoError);
}

TEST(Run, SweepKeepsGridOrder) {
  const auto cfg = parse_config_text("sweep = n\nn_grid = 1:12\nq = 0.1\nq0 = 1\ngamma = 2.5\n");
  const auto res = run_experiment(cfg);
  ASSERT_EQ(res.rows.size(), 12u);
  for (unsigned i = 0; i < 12; ++i) EXPECT_EQ(res.rows[i].n, i + 1);
  EXPECT_FALSE(res.unstable_everywhere);
}

TEST(Run, UnstableEverywhereIsFlagged) {
  const auto cfg = parse_config_text("sweep = q0\nq0_grid = 0.01,0.02\nn = 10\nq = 0.4\ngamma = 0.5\n");
  EXPECT_TRUE(run_experiment(cfg).unstable_everywhere);
}

TEST(Run, FigurePresetsProduceRows) {
  const auto a = run_experiment(parse_config_text("preset = fig-aggregate-vs-n\ngamma = 2.5\nq = 0.1\n"));
  EXPECT_EQ(a.rows.size(), 30u);
  EXPECT_NE(a.summary.back().find("N* = "), std::string::npos);
  const auto t = run_experiment(parse_config_text("preset = fig-throughput-vs-q\ngamma = 0.8\nn = 5\n"));
  EXPECT_EQ(t.rows.size(), 99u);
  EXPECT_NE(t.summary.back().find("q* = "), std::string::npos);
  const auto z = run_experiment(parse_config_text("preset = fig-queue-vs-q0\n"));
  EXPECT_EQ(z.rows.size(), 4u * 2u * 100u);
  const auto m = run_experiment(parse_config_text("preset = fig-q0min-vs-n\nn_grid = 1:5\n"));
  EXPECT_EQ(m.rows.size(), 4u * 3u * 5u);
}

TEST(Trace, RecordRoundTrip) {
  std::stringstream ss;
  const SlotRecord r{123456789012ULL, 0b1011, 0b10, 0b1000, 42};
  write_trace_record(ss, r);
  EXPECT_EQ(ss.str().size(), 40u);
  EXPECT_EQ(static_cast<unsigned char>(ss.str()[0]), 0x14);  // little-endian low byte of the slot
  const auto back = read_trace_record(ss);
  ASSERT_TRUE(back);
  EXPECT_EQ(back->slot, r.slot);
  EXPECT_EQ(back->active, r.active);
  EXPECT_EQ(back->dest_decoded, r.dest_decoded);
  EXPECT_EQ(back->relay_decoded, r.relay_decoded);
  EXPECT_EQ(back->queue_length, r.queue_length);
  EXPECT_FALSE(read_trace_record(ss));
}

TEST(Cli, ExitCodes) {
  const std::string dir = RELAYMPR_CONFIG_DIR;
  const auto out = temp_file("out.csv");
  EXPECT_EQ(run_cli("--config " + dir + "/two_user_baseline.cfg --output " + out.string()), 0);
  std::ifstream in(out);
  const auto rows = read_csv(in);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(*rows[0].mean_queue, 0.302625596, 1e-9);

  EXPECT_EQ(run_cli("--config " + temp_file("bad.cfg", "n = 2\nwhat = 1\n").string()), 2);
  EXPECT_EQ(run_cli("--config " + dir + "/two_user_baseline.cfg --format nope"), 2);
  EXPECT_EQ(run_cli("--config " + temp_file("unstable.cfg", "n=10\nq=0.4\nq0=0.05\ngamma=0.5\n").string()), 3);
  EXPECT_EQ(run_cli("--config /nonexistent/x.cfg"), 4);
  EXPECT_EQ(run_cli("--config " + dir + "/two_user_baseline.cfg --output /nonexistent/dir/out.csv"), 4);
}

TEST(Cli, SimulationWithTrace) {
  const auto trace = temp_file("trace.bin");
  const auto out = temp_file("sim.csv");
  ASSERT_EQ(run_cli("--config " + std::string(RELAYMPR_CONFIG_DIR) + "/two_user_simulate.cfg --slots 5000 " +
                    "--replications 2 --seed 9 --trace " + trace.string() + " --output " + out.string()),
            0);
  EXPECT_EQ(std::filesystem::file_size(trace), 5000u * 40u);
  std::ifstream in(out);
  const auto rows = read_csv(in);
  ASSERT_EQ(rows.size(), 1u);
  ASSERT_TRUE(rows[0].sim);
  EXPECT_GT(rows[0].sim->prob_empty.mean, 0.5);
}

TEST(Cli, SummaryFormat) {
  const auto out = temp_file("summary.txt");
  ASSERT_EQ(run_cli("--config " + std::string(RELAYMPR_CONFIG_DIR) + "/sweep_users.cfg --format summary --output " +
                    out.string()),
            0);
  std::ifstream in(out);
  std::stringstream text;
  text << in.rdbuf();
  EXPECT_NE(text.str().find("max aggregate throughput"), std::string::npos);
}

// Property: analytic columns do not depend on simulation settings.
TEST(Run, AnalyticColumnsIgnoreSimulation) {
  const std::string point = "n=3\nq=0.15\nq0=0.7\ngamma=1.2\n";
  const auto analytic = run_experiment(parse_config_text(point)).rows.at(0);
  for (const char* extra : {"slots=5000\nseed=3\nreplications=2\n", "slots=8000\nseed=11\nreplications=1\n"}) {
    auto row = run_experiment(parse_config_text("mode=simulate\n" + point + extra)).rows.at(0);
    ASSERT_TRUE(row.sim);
    row.sim.reset();
    EXPECT_EQ(row, analytic);
  }
}
