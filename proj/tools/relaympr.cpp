// Command-line front end: relaympr --config run.cfg [--output out.csv]

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "relaympr/relaympr.hpp"

namespace {

enum ExitCode : int { kOk = 0, kConfig = 2, kUnstable = 3, kIo = 4 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relay-assisted random access with multipacket reception: analysis, sweeps and simulation"};
  std::string config_path;
  std::string output_path;
  std::string trace_path;
  std::string format;
  std::optional<std::uint64_t> seed, slots;
  std::optional<unsigned> replications;
  app.add_option("-c,--config", config_path, "Experiment config (key = value)")->required();
  app.add_option("-o,--output", output_path, "Write results here instead of stdout");
  app.add_option("--seed", seed, "Override the config seed");
  app.add_option("--slots", slots, "Override slots per replication");
  app.add_option("--replications", replications, "Override replication count");
  app.add_option("--format", format, "csv or summary")->check(CLI::IsMember({"csv", "summary"}));
  app.add_option("--trace", trace_path, "Binary per-slot trace of replication 0 (single simulated point)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  relaympr::ExperimentConfig cfg;
  try {
    cfg = relaympr::parse_config(config_path);
    if (seed) cfg.seed = *seed;
    if (slots) cfg.slots = *slots;
    if (replications) cfg.replications = *replications;
    if (!format.empty()) cfg.format = format == "summary" ? relaympr::OutputFormat::summary : relaympr::OutputFormat::csv;
    if (!output_path.empty()) cfg.output = output_path;
    if (cfg.replications < 1) throw relaympr::ConfigError("replications must be >= 1");
    if (!(cfg.slots > cfg.effective_warmup())) throw relaympr::ConfigError("slots must exceed warmup");
    if (!trace_path.empty() && (!cfg.simulating() || cfg.sweep)) {
      throw relaympr::ConfigError("--trace needs mode = simulate at a single point");
    }
  } catch (const relaympr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const relaympr::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }

  std::ofstream trace_file;
  relaympr::TraceSink sink;
  if (!trace_path.empty()) {
    trace_file.open(trace_path, std::ios::binary);
    if (!trace_file) {
      std::cerr << "error: cannot open trace file " << trace_path << '\n';
      return kIo;
    }
    sink = [&](const relaympr::SlotRecord& r) { relaympr::write_trace_record(trace_file, r); };
  }

  relaympr::ExperimentResult result;
  try {
    result = relaympr::run_experiment(cfg, sink);
  } catch (const relaympr::DomainError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }

  std::ofstream file;
  std::ostream* out = &std::cout;
  if (cfg.output) {
    file.open(*cfg.output);
    if (!file) {
      std::cerr << "error: cannot open output " << *cfg.output << '\n';
      return kIo;
    }
    out = &file;
  }
  if (cfg.format == relaympr::OutputFormat::csv) {
    relaympr::write_csv(*out, result.rows);
  } else {
    for (const auto& line : result.summary) *out << line << '\n';
  }
  out->flush();
  if (!*out || (trace_file.is_open() && !trace_file.flush())) {
    std::cerr << "error: write failed\n";
    return kIo;
  }
  if (result.unstable_everywhere) {
    std::cerr << "relay queue is unstable at every evaluated point\n";
    return kUnstable;
  }
  return kOk;
}
