#pragma once

// Experiment harness behind the command-line tool: flat key = value config
// files, analytical evaluation and simulation of single points, parameter
// sweeps, figure presets, and the CSV result format.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "relaympr/channel_model.hpp"
#include "relaympr/common.hpp"
#include "relaympr/slot_simulator.hpp"
#include "relaympr/symmetric_analysis.hpp"
#include "relaympr/two_user_analysis.hpp"

namespace relaympr {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Mode { analyze, simulate, sweep, preset };
enum class SweepAxis { q0, q, n, gamma };
enum class FigurePreset { aggregate_vs_n, throughput_vs_q, q0min_vs_n, queue_vs_q0 };
enum class OutputFormat { csv, summary };

inline constexpr std::string_view kDivergenceToken = "diverges";

inline std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::q0: return "q0";
    case SweepAxis::q: return "q";
    case SweepAxis::n: return "n";
    case SweepAxis::gamma: return "gamma";
  }
  return "";
}

inline std::string_view to_string(FigurePreset p) {
  switch (p) {
    case FigurePreset::aggregate_vs_n: return "fig-aggregate-vs-n";
    case FigurePreset::throughput_vs_q: return "fig-throughput-vs-q";
    case FigurePreset::q0min_vs_n: return "fig-q0min-vs-n";
    case FigurePreset::queue_vs_q0: return "fig-queue-vs-q0";
  }
  return "";
}

struct ExperimentConfig {
  Mode mode = Mode::analyze;
  std::optional<FigurePreset> figure;
  StarLayout layout = baseline_layout(0.5);  // gamma fields overwritten per point

  std::optional<unsigned> n;
  std::optional<double> q;
  std::optional<double> q0;
  std::optional<double> gamma;
  std::optional<double> gamma_relay;  // defaults to gamma

  std::optional<SweepAxis> sweep;
  std::vector<double> grid;

  std::uint64_t slots = 1'000'000;
  std::optional<std::uint64_t> warmup;  // default: 10% of slots
  std::uint64_t seed = 1;
  unsigned replications = 10;

  FormulaVariant variant = FormulaVariant::corrected;
  std::optional<std::string> output;
  OutputFormat format = OutputFormat::csv;

  std::uint64_t effective_warmup() const noexcept { return warmup.value_or(SimConfig::default_warmup(slots)); }
  bool simulating() const noexcept { return mode == Mode::simulate; }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<std::uint64_t> parse_uint(std::string_view s) {
  std::uint64_t v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    // accept integral scientific notation such as 1e6
    const auto d = parse_double(s);
    if (d && *d >= 0.0 && *d == std::floor(*d) && *d < 1.8e19) return static_cast<std::uint64_t>(*d);
    return std::nullopt;
  }
  return v;
}

/// "a:b" (unit step), "a:step:b" (inclusive), or "x,y,z".
inline std::vector<double> parse_grid(std::string_view text, std::size_t line, const std::string& key) {
  std::vector<double> out;
  auto bad = [&](const std::string& why) { return ConfigError(key + ": " + why, line); };
  if (text.find(':') != std::string_view::npos) {
    std::vector<double> parts;
    std::string_view rest = text;
    for (;;) {
      const auto pos = rest.find(':');
      const auto piece = parse_double(trim(rest.substr(0, pos)));
      if (!piece) throw bad("malformed range '" + std::string(text) + "'");
      parts.push_back(*piece);
      if (pos == std::string_view::npos) break;
      rest = rest.substr(pos + 1);
    }
    if (parts.size() != 2 && parts.size() != 3) throw bad("range must be start:stop or start:step:stop");
    const double start = parts.front();
    const double stop = parts.back();
    const double step = parts.size() == 3 ? parts[1] : 1.0;
    if (!(step > 0.0)) throw bad("range step must be positive");
    if (stop < start) throw bad("range stop is below start");
    const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    if (count > 1'000'000) throw bad("range has too many points");
    for (std::size_t i = 0; i < count; ++i) {
      const double v = start + static_cast<double>(i) * step;
      out.push_back(std::round(v * 1e12) / 1e12);
    }
  } else {
    std::string_view rest = text;
    for (;;) {
      const auto pos = rest.find(',');
      const auto v = parse_double(trim(rest.substr(0, pos)));
      if (!v) throw bad("malformed list '" + std::string(text) + "'");
      out.push_back(*v);
      if (pos == std::string_view::npos) break;
      rest = rest.substr(pos + 1);
    }
  }
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (!(out[i] > out[i - 1])) throw bad("grid must be strictly increasing");
  }
  return out;
}

struct RawEntry {
  std::string value;
  std::size_t line;
};

}  // namespace detail

/// Parses a flat `key = value` config (`#` starts a comment) and applies the
/// baseline geometry defaults. Throws ConfigError naming key and line.
inline ExperimentConfig parse_config_text(std::string_view text) {
  static const std::vector<std::string> kKeys = {
      "preset", "mode", "n", "q", "q0", "gamma", "gamma_relay", "alpha", "eta", "ptx_user_mw", "ptx_relay_mw",
      "r_user_dest", "r_user_relay", "r_relay_dest", "v", "sweep", "n_grid", "q_grid", "q0_grid", "gamma_grid",
      "slots", "warmup", "seed", "replications", "strict_paper_formulas", "output", "format"};

  std::map<std::string, detail::RawEntry> raw;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line_no);
    const std::string key = detail::trim(std::string_view(body).substr(0, eq));
    const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw ConfigError("unknown key '" + key + "'", line_no);
    }
    if (value.empty()) throw ConfigError("key '" + key + "' has no value", line_no);
    if (raw.count(key)) throw ConfigError("duplicate key '" + key + "'", line_no);
    raw.emplace(key, detail::RawEntry{value, line_no});
  }

  ExperimentConfig cfg;
  auto number = [&](const std::string& key) -> std::optional<double> {
    const auto it = raw.find(key);
    if (it == raw.end()) return std::nullopt;
    const auto v = detail::parse_double(it->second.value);
    if (!v) throw ConfigError("key '" + key + "' is not a number: '" + it->second.value + "'", it->second.line);
    return v;
  };
  auto line_of = [&](const std::string& key) { return raw.count(key) ? raw.at(key).line : 0; };
  auto probability = [&](const std::string& key) -> std::optional<double> {
    const auto v = number(key);
    if (v && !(*v >= 0.0 && *v <= 1.0)) {
      throw ConfigError("key '" + key + "' must lie in [0, 1], got " + raw.at(key).value, line_of(key));
    }
    return v;
  };
  auto positive = [&](const std::string& key, double& target, double scale = 1.0) {
    if (const auto v = number(key)) {
      if (!(*v > 0.0)) throw ConfigError("key '" + key + "' must be positive", line_of(key));
      target = *v * scale;
    }
  };
  auto count = [&](const std::string& key) -> std::optional<std::uint64_t> {
    const auto it = raw.find(key);
    if (it == raw.end()) return std::nullopt;
    const auto v = detail::parse_uint(it->second.value);
    if (!v) throw ConfigError("key '" + key + "' must be a non-negative integer", it->second.line);
    return v;
  };

  if (const auto it = raw.find("preset"); it != raw.end()) {
    const std::string& p = it->second.value;
    if (p == "fig-aggregate-vs-n") cfg.figure = FigurePreset::aggregate_vs_n;
    else if (p == "fig-throughput-vs-q") cfg.figure = FigurePreset::throughput_vs_q;
    else if (p == "fig-q0min-vs-n") cfg.figure = FigurePreset::q0min_vs_n;
    else if (p == "fig-queue-vs-q0") cfg.figure = FigurePreset::queue_vs_q0;
    else if (p != "paper-baseline") throw ConfigError("unknown preset '" + p + "'", it->second.line);
  }

  positive("alpha", cfg.layout.alpha);
  positive("eta", cfg.layout.noise);
  positive("ptx_user_mw", cfg.layout.ptx_user, 1e-3);
  positive("ptx_relay_mw", cfg.layout.ptx_relay, 1e-3);
  positive("r_user_dest", cfg.layout.r_user_dest);
  positive("r_user_relay", cfg.layout.r_user_relay);
  positive("r_relay_dest", cfg.layout.r_relay_dest);
  positive("v", cfg.layout.fading_mean);

  if (const auto n = count("n")) {
    if (*n < 1 || *n > 100'000) throw ConfigError("key 'n' must be a positive user count", line_of("n"));
    cfg.n = static_cast<unsigned>(*n);
  }
  cfg.q = probability("q");
  cfg.q0 = probability("q0");
  for (const char* key : {"gamma", "gamma_relay"}) {
    if (const auto g = number(key); g && *g < 0.0) throw ConfigError(std::string("key '") + key + "' must be >= 0", line_of(key));
  }
  cfg.gamma = number("gamma");
  cfg.gamma_relay = number("gamma_relay");

  if (const auto s = count("slots")) cfg.slots = *s;
  cfg.warmup = count("warmup");
  if (const auto s = count("seed")) cfg.seed = *s;
  if (const auto r = count("replications")) {
    if (*r < 1 || *r > 100'000) throw ConfigError("key 'replications' must be >= 1", line_of("replications"));
    cfg.replications = static_cast<unsigned>(*r);
  }
  if (!(cfg.slots > cfg.effective_warmup())) {
    throw ConfigError("slots must exceed warmup", std::max(line_of("slots"), line_of("warmup")));
  }

  if (const auto it = raw.find("strict_paper_formulas"); it != raw.end()) {
    const auto& v = it->second.value;
    if (v == "true" || v == "1" || v == "yes") cfg.variant = FormulaVariant::as_printed;
    else if (v == "false" || v == "0" || v == "no") cfg.variant = FormulaVariant::corrected;
    else throw ConfigError("key 'strict_paper_formulas' must be a boolean", it->second.line);
  }
  if (const auto it = raw.find("output"); it != raw.end()) cfg.output = it->second.value;
  if (const auto it = raw.find("format"); it != raw.end()) {
    if (it->second.value == "csv") cfg.format = OutputFormat::csv;
    else if (it->second.value == "summary") cfg.format = OutputFormat::summary;
    else throw ConfigError("key 'format' must be csv or summary", it->second.line);
  }

  if (const auto it = raw.find("sweep"); it != raw.end()) {
    const auto& v = it->second.value;
    if (v == "q0") cfg.sweep = SweepAxis::q0;
    else if (v == "q") cfg.sweep = SweepAxis::q;
    else if (v == "n") cfg.sweep = SweepAxis::n;
    else if (v == "gamma") cfg.sweep = SweepAxis::gamma;
    else throw ConfigError("sweep axis must be one of q0, q, n, gamma", it->second.line);
  }

  std::optional<Mode> mode;
  if (const auto it = raw.find("mode"); it != raw.end()) {
    const auto& v = it->second.value;
    if (v == "analyze") mode = Mode::analyze;
    else if (v == "simulate") mode = Mode::simulate;
    else if (v == "sweep") mode = Mode::sweep;
    else if (v == "preset") mode = Mode::preset;
    else throw ConfigError("mode must be one of analyze, simulate, sweep, preset", it->second.line);
  }
  if (cfg.figure) {
    if (mode && *mode != Mode::preset) {
      throw ConfigError("figure presets run in mode = preset", line_of("mode"));
    }
    if (cfg.sweep) throw ConfigError("figure presets fix their own sweep axis", line_of("sweep"));
    cfg.mode = Mode::preset;
  } else if (mode == Mode::preset) {
    throw ConfigError("mode = preset needs a figure preset (fig-...)", line_of("mode"));
  } else if (mode) {
    cfg.mode = *mode;
  } else {
    cfg.mode = cfg.sweep ? Mode::sweep : Mode::analyze;
  }
  if (cfg.mode == Mode::sweep && !cfg.sweep) throw ConfigError("mode = sweep needs a 'sweep' axis", line_of("mode"));
  if (cfg.mode == Mode::analyze && cfg.sweep) {
    throw ConfigError("mode = analyze evaluates a single point; remove 'sweep' or use mode = sweep", line_of("sweep"));
  }

  // Which axis may carry a grid.
  std::optional<SweepAxis> grid_axis = cfg.sweep;
  if (cfg.figure) {
    switch (*cfg.figure) {
      case FigurePreset::aggregate_vs_n:
      case FigurePreset::q0min_vs_n: grid_axis = SweepAxis::n; break;
      case FigurePreset::throughput_vs_q: grid_axis = SweepAxis::q; break;
      case FigurePreset::queue_vs_q0: grid_axis = SweepAxis::q0; break;
    }
  }
  for (SweepAxis axis : {SweepAxis::q0, SweepAxis::q, SweepAxis::n, SweepAxis::gamma}) {
    const std::string key = std::string(to_string(axis)) + "_grid";
    const auto it = raw.find(key);
    if (it == raw.end()) continue;
    if (grid_axis != axis) throw ConfigError("key '" + key + "' does not match the sweep axis", it->second.line);
    cfg.grid = detail::parse_grid(it->second.value, it->second.line, key);
    for (double v : cfg.grid) {
      const bool ok = axis == SweepAxis::n      ? (v >= 1.0 && v == std::floor(v))
                      : axis == SweepAxis::gamma ? v >= 0.0
                                                 : (v >= 0.0 && v <= 1.0);
      if (!ok) throw ConfigError("key '" + key + "' has an out-of-range value", it->second.line);
    }
  }
  if (cfg.sweep && cfg.grid.empty()) {
    throw ConfigError("missing required key '" + std::string(to_string(*cfg.sweep)) + "_grid'", line_of("sweep"));
  }

  if (!cfg.figure) {
    auto require = [&](bool present, SweepAxis axis) {
      if (!present && cfg.sweep != axis) {
        throw ConfigError("missing required key '" + std::string(to_string(axis)) + "'");
      }
    };
    require(cfg.n.has_value(), SweepAxis::n);
    require(cfg.q.has_value(), SweepAxis::q);
    require(cfg.q0.has_value(), SweepAxis::q0);
    require(cfg.gamma.has_value(), SweepAxis::gamma);
  }
  if (cfg.simulating()) {
    const unsigned max_n = cfg.sweep == SweepAxis::n ? static_cast<unsigned>(cfg.grid.back()) : cfg.n.value_or(1);
    if (max_n > 63) throw ConfigError("simulation supports at most 63 users", line_of("n"));
  }
  return cfg;
}

inline ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

/// Simulated counterparts of a result row.
struct SimulatedColumns {
  Estimate lambda0;
  Estimate lambda;
  Estimate mu;
  Estimate prob_empty;
  Estimate mean_queue;
  Estimate per_user;
  Estimate aggregate;

  bool operator==(const SimulatedColumns& o) const;
};

/// One grid point. Divergent quantities are nullopt and render as the
/// divergence token.
struct ResultRow {
  unsigned n = 1;
  double q = 0.0;
  double q0 = 0.0;
  double gamma = 0.0;
  double lambda0 = 0.0;
  double lambda1 = 0.0;
  MaybeDivergent lambda;
  double mu = 0.0;
  MaybeDivergent prob_empty;
  MaybeDivergent mean_queue;
  double q0min = 0.0;
  bool stable = false;
  MaybeDivergent per_user;  // aggregate / n
  MaybeDivergent aggregate;
  double no_relay_aggregate = 0.0;
  MaybeDivergent relay_gain;
  std::optional<SimulatedColumns> sim;

  bool operator==(const ResultRow& o) const;
};

namespace detail {

inline bool same_number(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

inline bool same_estimate(const Estimate& a, const Estimate& b) {
  return same_number(a.mean, b.mean) && same_number(a.std_error, b.std_error);
}

}  // namespace detail

inline bool SimulatedColumns::operator==(const SimulatedColumns& o) const {
  using detail::same_estimate;
  return same_estimate(lambda0, o.lambda0) && same_estimate(lambda, o.lambda) && same_estimate(mu, o.mu) &&
         same_estimate(prob_empty, o.prob_empty) && same_estimate(mean_queue, o.mean_queue) &&
         same_estimate(per_user, o.per_user) && same_estimate(aggregate, o.aggregate);
}

inline bool ResultRow::operator==(const ResultRow& o) const {
  return n == o.n && q == o.q && q0 == o.q0 && gamma == o.gamma && lambda0 == o.lambda0 && lambda1 == o.lambda1 &&
         lambda == o.lambda && mu == o.mu && prob_empty == o.prob_empty && mean_queue == o.mean_queue &&
         q0min == o.q0min && stable == o.stable && per_user == o.per_user && aggregate == o.aggregate &&
         no_relay_aggregate == o.no_relay_aggregate && relay_gain == o.relay_gain && sim == o.sim;
}

inline StarLayout layout_for(const ExperimentConfig& cfg, double gamma) {
  StarLayout l = cfg.layout;
  l.gamma_dest = gamma;
  l.gamma_relay = cfg.gamma_relay.value_or(gamma);
  return l;
}

/// Analytical row for one point. Two users go through the explicit-geometry
/// two-user model, larger networks through the symmetric closed forms.
inline ResultRow evaluate_point(const StarLayout& layout, unsigned n, double q, double q0,
                                FormulaVariant variant = FormulaVariant::corrected) {
  ResultRow row;
  row.n = n;
  row.q = q;
  row.q0 = q0;
  row.gamma = layout.gamma_dest;
  const auto geometry = make_star_geometry(n, layout);

  QueueCharacterization c;
  std::optional<ThroughputReport> tp;
  double no_relay = 0.0;
  if (n == 2) {
    const TwoUserScenario s{geometry, q0, q, q, variant};
    c = characterize_queue(s);
    if (c.stable) tp = throughput(s);
    for (double v : no_relay_throughput(s)) no_relay += v;
  } else {
    const SymmetricScenario s{symmetric_link_params(geometry), n, q, q0, variant};
    c = characterize_queue(s);
    if (c.stable) tp = throughput(s);
    no_relay = n * no_relay_throughput_per_user(s);
  }
  row.lambda0 = c.lambda0;
  row.lambda1 = c.lambda1;
  row.lambda = c.lambda;
  row.mu = c.mu;
  row.prob_empty = c.prob_empty;
  row.mean_queue = c.mean_queue;
  row.q0min = c.q0min;
  row.stable = c.stable;
  row.no_relay_aggregate = no_relay;
  if (tp) {
    row.aggregate = tp->aggregate;
    row.per_user = tp->aggregate / n;
    if (tp->no_relay_aggregate > 0.0) row.relay_gain = tp->relay_gain;
  }
  return row;
}

inline SimulatedColumns simulate_point(const StarLayout& layout, unsigned n, double q, double q0,
                                       const ExperimentConfig& cfg, const TraceSink& trace = {}) {
  const SimConfig sc{.scenario = SimScenario::symmetric(make_star_geometry(n, layout), q, q0),
                     .slots = cfg.slots,
                     .warmup = cfg.effective_warmup(),
                     .seed = cfg.seed,
                     .replications = cfg.replications};
  const auto st = run(sc, trace);
  return SimulatedColumns{st.lambda0, st.lambda, st.mu, st.prob_empty, st.mean_queue, st.per_user_mean, st.aggregate};
}

// ---------------------------------------------------------------- CSV

inline std::vector<std::string> csv_header(bool with_sim) {
  std::vector<std::string> h = {"n",        "q",          "q0",       "gamma",  "lambda0",
                                "lambda1",  "lambda",     "mu",       "prob_empty", "mean_queue",
                                "q0min",    "stable",     "per_user_throughput", "aggregate_throughput",
                                "no_relay_aggregate", "relay_gain"};
  if (with_sim) {
    for (const char* c : {"sim_lambda0", "sim_lambda", "sim_mu", "sim_prob_empty", "sim_mean_queue",
                          "sim_per_user_throughput", "sim_aggregate_throughput"}) {
      h.emplace_back(c);
      h.emplace_back(std::string(c) + "_se");
    }
  }
  return h;
}

namespace detail {

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string format_maybe(const MaybeDivergent& v) {
  return v ? format_number(*v) : std::string(kDivergenceToken);
}

inline double read_number(const std::string& s, std::size_t line) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  const auto v = parse_double(s);
  if (!v) throw IoError("line " + std::to_string(line) + ": bad number '" + s + "'");
  return *v;
}

inline MaybeDivergent read_maybe(const std::string& s, std::size_t line) {
  if (s == kDivergenceToken) return std::nullopt;
  return read_number(s, line);
}

}  // namespace detail

inline void write_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  const bool with_sim = std::any_of(rows.begin(), rows.end(), [](const ResultRow& r) { return r.sim.has_value(); });
  const auto header = csv_header(with_sim);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  using detail::format_maybe;
  using detail::format_number;
  for (const auto& r : rows) {
    out << r.n << ',' << format_number(r.q) << ',' << format_number(r.q0) << ',' << format_number(r.gamma) << ','
        << format_number(r.lambda0) << ',' << format_number(r.lambda1) << ',' << format_maybe(r.lambda) << ','
        << format_number(r.mu) << ',' << format_maybe(r.prob_empty) << ',' << format_maybe(r.mean_queue) << ','
        << format_number(r.q0min) << ',' << (r.stable ? "true" : "false") << ',' << format_maybe(r.per_user) << ','
        << format_maybe(r.aggregate) << ',' << format_number(r.no_relay_aggregate) << ','
        << format_maybe(r.relay_gain);
    if (with_sim) {
      if (r.sim) {
        for (const Estimate* e : {&r.sim->lambda0, &r.sim->lambda, &r.sim->mu, &r.sim->prob_empty,
                                  &r.sim->mean_queue, &r.sim->per_user, &r.sim->aggregate}) {
          out << ',' << format_number(e->mean) << ',' << format_number(e->std_error);
        }
      } else {
        for (int i = 0; i < 14; ++i) out << ',' << kDivergenceToken;
      }
    }
    out << '\n';
  }
}

inline std::vector<ResultRow> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  const bool with_sim = header == csv_header(true);
  if (!with_sim && header != csv_header(false)) throw IoError("unexpected CSV header");

  std::vector<ResultRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) throw IoError("line " + std::to_string(line_no) + ": wrong column count");
    using detail::read_maybe;
    using detail::read_number;
    ResultRow r;
    r.n = static_cast<unsigned>(read_number(cells[0], line_no));
    r.q = read_number(cells[1], line_no);
    r.q0 = read_number(cells[2], line_no);
    r.gamma = read_number(cells[3], line_no);
    r.lambda0 = read_number(cells[4], line_no);
    r.lambda1 = read_number(cells[5], line_no);
    r.lambda = read_maybe(cells[6], line_no);
    r.mu = read_number(cells[7], line_no);
    r.prob_empty = read_maybe(cells[8], line_no);
    r.mean_queue = read_maybe(cells[9], line_no);
    r.q0min = read_number(cells[10], line_no);
    if (cells[11] != "true" && cells[11] != "false") throw IoError("line " + std::to_string(line_no) + ": bad flag");
    r.stable = cells[11] == "true";
    r.per_user = read_maybe(cells[12], line_no);
    r.aggregate = read_maybe(cells[13], line_no);
    r.no_relay_aggregate = read_number(cells[14], line_no);
    r.relay_gain = read_maybe(cells[15], line_no);
    if (with_sim && cells[16] != kDivergenceToken) {
      SimulatedColumns s;
      std::size_t c = 16;
      for (Estimate* e : {&s.lambda0, &s.lambda, &s.mu, &s.prob_empty, &s.mean_queue, &s.per_user, &s.aggregate}) {
        e->mean = read_number(cells[c++], line_no);
        e->std_error = read_number(cells[c++], line_no);
      }
      r.sim = s;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------- running

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<std::string> summary;
  bool unstable_everywhere = false;
};

namespace detail {

struct PointSpec {
  unsigned n;
  double q;
  double q0;
  double gamma;
};

/// Evaluates points concurrently; results keep the input order.
inline std::vector<ResultRow> evaluate_points(const ExperimentConfig& cfg, const std::vector<PointSpec>& pts) {
  std::vector<ResultRow> rows(pts.size());
  auto work = [&](std::size_t i) {
    const auto& p = pts[i];
    rows[i] = evaluate_point(layout_for(cfg, p.gamma), p.n, p.q, p.q0, cfg.variant);
  };
  const unsigned workers = std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), pts.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < pts.size(); ++i) work(i);
    return rows;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < pts.size(); i = next++) work(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

inline std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

inline std::string fmt(const MaybeDivergent& v, int precision = 6) {
  return v ? fmt(*v, precision) : std::string(kDivergenceToken);
}

inline std::vector<double> gammas_for(const ExperimentConfig& cfg) {
  if (cfg.gamma) return {*cfg.gamma};
  return {0.5, 0.8, 1.2, 2.5};
}

inline std::vector<double> n_grid_or(const ExperimentConfig& cfg, double lo, double hi) {
  if (!cfg.grid.empty()) return cfg.grid;
  std::vector<double> g;
  for (double v = lo; v <= hi; v += 1.0) g.push_back(v);
  return g;
}

}  // namespace detail

/// Runs the configured experiment. `trace` receives the slots of replication
/// 0 when a single point is simulated.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const TraceSink& trace = {}) {
  using detail::fmt;
  ExperimentResult res;
  auto& out = res.summary;
  const std::string q0_note = cfg.q0 ? "" : " (preset default q0 = 1)";

  if (cfg.mode == Mode::preset) {
    const double q0 = cfg.q0.value_or(1.0);
    const auto gammas = detail::gammas_for(cfg);
    std::vector<detail::PointSpec> pts;
    switch (*cfg.figure) {
      case FigurePreset::aggregate_vs_n:
      case FigurePreset::q0min_vs_n: {
        const std::vector<double> qs = cfg.q ? std::vector<double>{*cfg.q} : std::vector<double>{0.05, 0.1, 0.2};
        const auto ns = detail::n_grid_or(cfg, 1, 30);
        for (double g : gammas)
          for (double q : qs)
            for (double n : ns) pts.push_back({static_cast<unsigned>(n), q, q0, g});
        res.rows = detail::evaluate_points(cfg, pts);
        out.push_back(std::string(to_string(*cfg.figure)) + ": q0 = " + fmt(q0) + q0_note);
        for (double g : gammas) {
          for (double q : qs) {
            const ResultRow* best = nullptr;
            double q0min_lo = 1.0, q0min_hi = 0.0;
            for (const auto& r : res.rows) {
              if (r.gamma != g || r.q != q) continue;
              q0min_lo = std::min(q0min_lo, r.q0min);
              q0min_hi = std::max(q0min_hi, r.q0min);
              if (r.aggregate && (!best || *r.aggregate > *best->aggregate)) best = &r;
            }
            std::string line = "gamma = " + fmt(g) + ", q = " + fmt(q) + ": ";
            if (*cfg.figure == FigurePreset::q0min_vs_n) {
              line += "q0min ranges over [" + fmt(q0min_lo) + ", " + fmt(q0min_hi) + "]";
            } else if (best) {
              line += "N* = " + std::to_string(best->n) + ", aggregate = " + fmt(*best->aggregate) +
                      ", no-relay aggregate = " + fmt(best->no_relay_aggregate) +
                      ", relay gain = " + fmt(best->relay_gain);
            } else {
              line += "unstable at every n";
            }
            out.push_back(line);
          }
        }
        break;
      }
      case FigurePreset::throughput_vs_q: {
        std::vector<double> ns = cfg.n ? std::vector<double>{static_cast<double>(*cfg.n)} : std::vector<double>{2, 5, 10};
        std::vector<double> qs = cfg.grid;
        if (qs.empty()) {
          for (int k = 1; k <= 99; ++k) qs.push_back(k / 100.0);
        }
        for (double g : gammas)
          for (double n : ns)
            for (double q : qs) pts.push_back({static_cast<unsigned>(n), q, q0, g});
        res.rows = detail::evaluate_points(cfg, pts);
        out.push_back(std::string(to_string(*cfg.figure)) + ": q0 = " + fmt(q0) + q0_note);
        for (double g : gammas) {
          const auto params = symmetric_link_params(make_star_geometry(1, layout_for(cfg, g)));
          for (double n : ns) {
            const auto grid = uniform_q_grid(999);
            const auto curve = throughput_vs_q(params, static_cast<unsigned>(n), grid, q0, cfg.variant);
            std::string line = "gamma = " + fmt(g) + ", n = " + fmt(n) + ": ";
            line += curve.q_star ? "q* = " + fmt(*curve.q_star) + ", per-user throughput = " +
                                       fmt(curve.per_user_at_q_star)
                                 : std::string("unstable for every q");
            out.push_back(line);
          }
        }
        break;
      }
      case FigurePreset::queue_vs_q0: {
        const unsigned n = cfg.n.value_or(2);
        const std::vector<double> qs = cfg.q ? std::vector<double>{*cfg.q} : std::vector<double>{0.1, 0.2};
        std::vector<double> q0s = cfg.grid;
        if (q0s.empty()) {
          for (int k = 1; k <= 100; ++k) q0s.push_back(k / 100.0);
        }
        for (double g : gammas)
          for (double q : qs)
            for (double v : q0s) pts.push_back({n, q, v, g});
        res.rows = detail::evaluate_points(cfg, pts);
        out.push_back(std::string(to_string(*cfg.figure)) + ": n = " + std::to_string(n));
        for (double g : gammas) {
          for (double q : qs) {
            for (const auto& r : res.rows) {
              if (r.gamma == g && r.q == q) {
                out.push_back("gamma = " + fmt(g) + ", q = " + fmt(q) + ": stable for q0 > q0min = " + fmt(r.q0min));
                break;
              }
            }
          }
        }
        break;
      }
    }
  } else {
    std::vector<detail::PointSpec> pts;
    const std::vector<double> axis_values = cfg.sweep ? cfg.grid : std::vector<double>{0.0};
    for (double v : axis_values) {
      detail::PointSpec p{cfg.n.value_or(1), cfg.q.value_or(0.0), cfg.q0.value_or(1.0), cfg.gamma.value_or(0.0)};
      if (cfg.sweep) {
        switch (*cfg.sweep) {
          case SweepAxis::n: p.n = static_cast<unsigned>(v); break;
          case SweepAxis::q: p.q = v; break;
          case SweepAxis::q0: p.q0 = v; break;
          case SweepAxis::gamma: p.gamma = v; break;
        }
      }
      pts.push_back(p);
    }
    res.rows = detail::evaluate_points(cfg, pts);
    if (cfg.simulating()) {
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (!res.rows[i].stable) continue;
        const auto& p = pts[i];
        res.rows[i].sim = simulate_point(layout_for(cfg, p.gamma), p.n, p.q, p.q0, cfg, pts.size() == 1 ? trace : TraceSink{});
      }
    }

    if (!cfg.sweep) {
      const auto& r = res.rows.front();
      out.push_back("n = " + std::to_string(r.n) + ", q = " + fmt(r.q) + ", q0 = " + fmt(r.q0) + ", gamma = " + fmt(r.gamma));
      out.push_back("lambda0 = " + fmt(r.lambda0) + ", lambda1 = " + fmt(r.lambda1) + ", lambda = " + fmt(r.lambda) +
                    ", mu = " + fmt(r.mu));
      out.push_back("q0min = " + fmt(r.q0min) + ", stable = " + (r.stable ? "yes" : "no"));
      out.push_back("P(Q=0) = " + fmt(r.prob_empty) + ", mean queue = " + fmt(r.mean_queue));
      out.push_back("per-user throughput = " + fmt(r.per_user) + ", aggregate = " + fmt(r.aggregate) +
                    ", no-relay aggregate = " + fmt(r.no_relay_aggregate) + ", relay gain = " + fmt(r.relay_gain));
      if (r.n == 2 && r.stable) {
        const TwoUserScenario s{make_star_geometry(2, layout_for(cfg, r.gamma)), r.q0, r.q, r.q, cfg.variant};
        const auto tp = throughput(s);
        out.push_back("two-user model: mu1 = " + fmt(tp.per_user[0]) + ", mu2 = " + fmt(tp.per_user[1]));
      }
      if (r.sim) {
        const auto& s = *r.sim;
        auto pm = [&](const Estimate& e) { return fmt(e.mean) + " +/- " + fmt(e.std_error, 3); };
        out.push_back("simulated (" + std::to_string(cfg.replications) + " x " + std::to_string(cfg.slots) +
                      " slots): P(Q=0) = " + pm(s.prob_empty) + ", lambda = " + pm(s.lambda) + ", mu = " + pm(s.mu) +
                      ", per-user throughput = " + pm(s.per_user) + ", mean queue = " + pm(s.mean_queue));
      }
    } else {
      const std::string axis(to_string(*cfg.sweep));
      out.push_back("sweep over " + axis + " (" + std::to_string(res.rows.size()) + " points)");
      const ResultRow* best = nullptr;
      std::optional<double> first_stable;
      for (std::size_t i = 0; i < res.rows.size(); ++i) {
        const auto& r = res.rows[i];
        if (r.stable && !first_stable) first_stable = axis_values[i];
        if (r.aggregate && (!best || *r.aggregate > *best->aggregate)) best = &r;
      }
      if (best) {
        out.push_back("max aggregate throughput " + fmt(*best->aggregate) + " at n = " + std::to_string(best->n) +
                      ", q = " + fmt(best->q) + ", q0 = " + fmt(best->q0) + ", gamma = " + fmt(best->gamma) +
                      " (relay gain " + fmt(best->relay_gain) + ")");
        out.push_back("first stable " + axis + " = " + fmt(*first_stable));
      }
    }
  }

  res.unstable_everywhere = std::none_of(res.rows.begin(), res.rows.end(), [](const ResultRow& r) { return r.stable; });
  if (res.unstable_everywhere) out.push_back("relay queue is unstable at every point");
  return res;
}

/// Binary trace layout: five little-endian uint64 per slot
/// (slot, active, dest_decoded, relay_decoded, queue_length).
inline void write_trace_record(std::ostream& out, const SlotRecord& r) {
  unsigned char buf[40];
  const std::uint64_t fields[5] = {r.slot, r.active, r.dest_decoded, r.relay_decoded, r.queue_length};
  for (int f = 0; f < 5; ++f) {
    for (int b = 0; b < 8; ++b) buf[f * 8 + b] = static_cast<unsigned char>(fields[f] >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(buf), sizeof buf);
}

inline std::optional<SlotRecord> read_trace_record(std::istream& in) {
  unsigned char buf[40];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof buf)) return std::nullopt;
  std::uint64_t fields[5] = {};
  for (int f = 0; f < 5; ++f) {
    for (int b = 0; b < 8; ++b) fields[f] |= static_cast<std::uint64_t>(buf[f * 8 + b]) << (8 * b);
  }
  return SlotRecord{fields[0], fields[1], fields[2], fields[3], fields[4]};
}

}  // namespace relaympr
