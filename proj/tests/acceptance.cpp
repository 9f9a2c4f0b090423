// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "relaympr/relaympr.hpp"

using namespace relaympr;

namespace {

const std::vector<unsigned> kUsers{1, 2, 3, 5, 10};
const std::vector<double> kGammas{0.5, 0.8, 1.2, 2.5};
const std::vector<double> kQs{0.05, 0.1, 0.2, 0.4};

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s criterion %d: %s [%s] (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str(),
              secs);
  std::fflush(stdout);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

SymmetricLinkParams params_for(double gamma) {
  return symmetric_link_params(make_star_geometry(1, baseline_layout(gamma)));
}

// Analytical queue characterization with the two-user model at n = 2.
struct Analysis {
  QueueCharacterization queue;
  ArrivalProbabilities arrivals;
  double per_user = 0.0;
};

Analysis analyze(unsigned n, double gamma, double q, double q0) {
  Analysis a;
  const auto g = make_star_geometry(n, baseline_layout(gamma));
  if (n == 2) {
    const TwoUserScenario s{g, q0, q, q};
    a.queue = characterize_queue(s);
    a.arrivals = arrival_probabilities(s);
    if (a.queue.stable) a.per_user = throughput(s).per_user[0];
  } else {
    const SymmetricScenario s{symmetric_link_params(g), n, q, q0};
    a.queue = characterize_queue(s);
    a.arrivals = arrival_probabilities(s);
    if (a.queue.stable) a.per_user = throughput(s).per_user[0];
  }
  return a;
}

double q0min_at(unsigned n, double gamma, double q) {
  return q0min(SymmetricScenario{params_for(gamma), n, q, 1.0});
}

Outcome closed_form_vs_oracle() {
  std::size_t stable = 0;
  double worst_s0 = 0.0, worst_mean = 0.0, worst_tail = 0.0;
  for (unsigned n : kUsers)
    for (double gamma : kGammas)
      for (double q : kQs)
        for (double q0 : {q0min_at(n, gamma, q) + 0.05, 0.8, 1.0}) {
          if (q0 > 1.0) continue;
          const auto a = analyze(n, gamma, q, q0);
          if (!a.queue.stable) continue;
          ++stable;
          const auto o = steady_state_adaptive(build_chain(a.arrivals, a.queue.mu));
          worst_s0 = std::max(worst_s0, std::abs(*a.queue.prob_empty - o.s0));
          worst_mean = std::max(worst_mean, std::abs(*a.queue.mean_queue - o.mean) / o.mean);
          worst_tail = std::max(worst_tail, o.tail_mass);
        }
  return {stable >= 200 && worst_s0 < 1e-9 && worst_mean < 1e-6 && worst_tail < 1e-10,
          std::to_string(stable) + " stable scenarios, max |ds0| = " + num(worst_s0) + ", max rel dQ = " +
              num(worst_mean) + ", max tail = " + num(worst_tail)};
}

bool within(const Estimate& e, double exact, double sigmas = 4.0) {
  return std::abs(e.mean - exact) <= sigmas * e.std_error;
}

SimulationStats simulate(unsigned n, double gamma, double q, double q0, std::uint64_t seed) {
  return run(SimConfig{.scenario = SimScenario::symmetric(make_star_geometry(n, baseline_layout(gamma)), q, q0),
                       .slots = 1'000'000,
                       .warmup = 100'000,
                       .seed = seed,
                       .replications = 10});
}

Outcome simulation_agreement() {
  // One scenario per (n, gamma); q and q0 rotate through the grid, skipping
  // points with relay load above 0.8 where 1e6 slots mix too slowly.
  std::size_t scenarios = 0, misses = 0;
  double worst_p0 = 0.0, worst_z = 0.0;
  std::string first_miss;
  std::size_t idx = 0;
  for (unsigned n : kUsers) {
    for (double gamma : kGammas) {
      for (std::size_t attempt = 0; attempt < 8; ++attempt, ++idx) {
        const double q = kQs[idx % 4];
        const double q0 = (idx / 4) % 2 ? 0.8 : 1.0;
        const auto a = analyze(n, gamma, q, q0);
        if (!a.queue.stable || *a.queue.lambda / a.queue.mu > 0.8) continue;
        const auto st = simulate(n, gamma, q, q0, 1000 + idx);
        ++scenarios;
        const std::pair<const Estimate*, double> checks[] = {{&st.prob_empty, *a.queue.prob_empty},
                                                             {&st.lambda, *a.queue.lambda},
                                                             {&st.mu, a.queue.mu},
                                                             {&st.per_user_mean, a.per_user}};
        for (const auto& [est, exact] : checks) {
          const double z = std::abs(est->mean - exact) / est->std_error;
          worst_z = std::max(worst_z, z);
          if (!within(*est, exact)) {
            ++misses;
            if (first_miss.empty()) first_miss = "n=" + std::to_string(n) + " gamma=" + num(gamma) + " q=" + num(q);
          }
        }
        worst_p0 = std::max(worst_p0, std::abs(st.prob_empty.mean - *a.queue.prob_empty));
        ++idx;
        break;
      }
    }
  }
  std::string detail = std::to_string(scenarios) + " scenarios x 10 reps x 1e6 slots, max z = " + num(worst_z) +
                       ", max |dP(Q=0)| = " + num(worst_p0);
  if (misses) detail += ", " + std::to_string(misses) + " outside 4 SE (first: " + first_miss + ")";
  return {scenarios >= 20 && misses == 0 && worst_p0 < 0.005, detail};
}

Outcome q0_independence() {
  const unsigned n = 5;
  const double q = 0.1, gamma = 0.8;
  const double lo = q0min_at(n, gamma, q);
  double tp_lo = INFINITY, tp_hi = -INFINITY, l_lo = INFINITY, l_hi = -INFINITY;
  for (int k = 1; k <= 20; ++k) {
    const auto a = analyze(n, gamma, q, lo + (1.0 - lo) * k / 20.0);
    if (!a.queue.stable) return {false, "unstable q0 in the test range"};
    tp_lo = std::min(tp_lo, a.per_user);
    tp_hi = std::max(tp_hi, a.per_user);
    l_lo = std::min(l_lo, *a.queue.lambda);
    l_hi = std::max(l_hi, *a.queue.lambda);
  }
  // Simulated intervals at several relay access probabilities must overlap.
  std::vector<Estimate> tp, lam;
  for (double q0 : {lo + 0.2, 0.6, 0.8, 1.0}) {
    const auto st = simulate(n, gamma, q, q0, 77);
    tp.push_back(st.per_user_mean);
    lam.push_back(st.lambda);
  }
  auto overlap = [](const std::vector<Estimate>& es) {
    double lo_max = -INFINITY, hi_min = INFINITY;
    for (const auto& e : es) {
      lo_max = std::max(lo_max, e.mean - 4 * e.std_error);
      hi_min = std::min(hi_min, e.mean + 4 * e.std_error);
    }
    return lo_max <= hi_min;
  };
  const bool ok = tp_hi - tp_lo < 1e-12 && l_hi - l_lo < 1e-12 && overlap(tp) && overlap(lam);
  return {ok, "analytic spread: throughput " + num(tp_hi - tp_lo) + ", lambda " + num(l_hi - l_lo) +
                  "; simulated 4-sigma intervals " + (overlap(tp) && overlap(lam) ? "overlap" : "disjoint")};
}

Outcome stability_equivalence() {
  std::size_t points = 0, mismatches = 0, stable = 0;
  for (unsigned n : kUsers)
    for (double gamma : kGammas)
      for (double q : kQs) {
        const double lo = q0min_at(n, gamma, q);
        for (double q0 : {0.05, 0.1, 0.3, 0.5, 0.8, 1.0, lo - 0.05, lo + 0.05}) {
          if (q0 < 0.0 || q0 > 1.0) continue;
          const auto a = analyze(n, gamma, q, q0);
          const auto& c = a.queue;
          const double lambda = c.mu * c.lambda0 / (c.mu - c.lambda1 + c.lambda0);
          const bool by_lambda = c.mu - c.lambda1 + c.lambda0 > 0.0 && lambda / c.mu < 1.0;
          const bool by_lambda1 = c.lambda1 / c.mu < 1.0;
          ++points;
          stable += by_lambda1;
          if (by_lambda != by_lambda1 || c.stable != by_lambda1 || c.lambda.has_value() != c.stable) ++mismatches;
        }
      }
  return {mismatches == 0, std::to_string(points) + " points (" + std::to_string(stable) + " stable), " +
                               std::to_string(mismatches) + " mismatches"};
}

Outcome two_user_consistency() {
  double worst = 0.0;
  std::size_t points = 0;
  for (double gamma : kGammas)
    for (double q : kQs)
      for (double q0 : {0.1, 0.3, 0.5, 0.8, 1.0}) {
        const auto g = make_star_geometry(2, baseline_layout(gamma));
        const TwoUserScenario t{g, q0, q, q};
        const SymmetricScenario s{symmetric_link_params(g), 2, q, q0};
        const auto ct = characterize_queue(t);
        const auto cs = characterize_queue(s);
        const auto at = arrival_probabilities(t);
        const auto as = arrival_probabilities(s);
        if (ct.stable != cs.stable) return {false, "stability differs"};
        std::vector<std::pair<double, double>> pairs = {
            {ct.mu, cs.mu},         {ct.lambda0, cs.lambda0},           {ct.lambda1, cs.lambda1},
            {ct.q0min, cs.q0min},   {at.given_empty(1), as.given_empty(1)}, {at.given_empty(2), as.given_empty(2)},
            {no_relay_throughput(t)[0], no_relay_throughput_per_user(s)}};
        if (ct.stable) {
          pairs.insert(pairs.end(), {{*ct.prob_empty, *cs.prob_empty},
                                     {*ct.lambda, *cs.lambda},
                                     {*ct.mean_queue, *cs.mean_queue},
                                     {throughput(t).per_user[0], throughput(s).per_user[0]},
                                     {throughput(t).per_user[1], throughput(s).per_user[1]}});
        }
        for (const auto& [x, y] : pairs) worst = std::max(worst, std::abs(x - y));
        ++points;
      }
  return {worst < 1e-12, std::to_string(points) + " points, max difference " + num(worst)};
}

Outcome expanded_throughput() {
  double worst = 0.0;
  std::size_t points = 0;
  const auto grid = uniform_q_grid(99);
  for (double gamma : kGammas) {
    const auto p = params_for(gamma);
    for (unsigned n : {2u, 5u, 10u}) {
      for (double q : grid) {
        const SymmetricScenario s{p, n, q, 1.0};
        if (!characterize_queue(s).stable) continue;
        worst = std::max(worst, std::abs(throughput_per_user_expanded(p, n, q) - throughput(s).per_user[0]));
        ++points;
      }
    }
  }
  return {points > 0 && worst < 1e-12, std::to_string(points) + " stable grid points, max difference " + num(worst)};
}

Outcome qualitative() {
  std::vector<std::string> broken;
  // (a) queue against q0
  for (double gamma : kGammas)
    for (double q : {0.1, 0.2}) {
      double prev_p0 = -1.0, prev_mean = INFINITY;
      for (int k = 1; k <= 100; ++k) {
        const auto a = analyze(2, gamma, q, k / 100.0);
        if (!a.queue.stable) continue;
        if (!(*a.queue.prob_empty > prev_p0 && *a.queue.mean_queue < prev_mean)) {
          broken.push_back("(a) gamma=" + num(gamma) + " q=" + num(q));
          break;
        }
        prev_p0 = *a.queue.prob_empty;
        prev_mean = *a.queue.mean_queue;
      }
    }
  // (b) N* interior for gamma = 2.5, and decreasing in gamma and q
  const std::vector<double> qs{0.05, 0.1, 0.2};
  std::vector<std::vector<unsigned>> n_star(kGammas.size(), std::vector<unsigned>(qs.size()));
  for (std::size_t g = 0; g < kGammas.size(); ++g)
    for (std::size_t j = 0; j < qs.size(); ++j) n_star[g][j] = optimal_user_count(params_for(kGammas[g]), qs[j], 1.0, 30).n_star;
  for (std::size_t j = 0; j < qs.size(); ++j) {
    if (!(n_star.back()[j] > 1 && n_star.back()[j] < 30)) broken.push_back("(b) no interior N* at q=" + num(qs[j]));
    for (std::size_t g = 1; g < kGammas.size(); ++g)
      if (n_star[g][j] > n_star[g - 1][j]) broken.push_back("(b) N* rises with gamma at q=" + num(qs[j]));
    if (!(n_star.back()[j] < n_star.front()[j])) broken.push_back("(b) N* flat in gamma at q=" + num(qs[j]));
  }
  for (std::size_t g = 0; g < kGammas.size(); ++g) {
    for (std::size_t j = 1; j < qs.size(); ++j)
      if (n_star[g][j] > n_star[g][j - 1]) broken.push_back("(b) N* rises with q at gamma=" + num(kGammas[g]));
    if (!(n_star[g].back() < n_star[g].front())) broken.push_back("(b) N* flat in q at gamma=" + num(kGammas[g]));
  }
  // (c) relay never loses to direct transmission on the preset grids
  std::size_t compared = 0;
  for (double gamma : kGammas) {
    const auto p = params_for(gamma);
    for (double q : qs)
      for (unsigned n = 1; n <= 30; ++n) {
        const SymmetricScenario s{p, n, q, 1.0};
        if (!characterize_queue(s).stable) continue;
        const auto tp = throughput(s);
        ++compared;
        if (tp.aggregate < tp.no_relay_aggregate) broken.push_back("(c) n=" + std::to_string(n));
      }
    for (unsigned n : {2u, 5u, 10u})
      for (int k = 1; k <= 99; ++k) {
        const SymmetricScenario s{p, n, k / 100.0, 1.0};
        if (!characterize_queue(s).stable) continue;
        const auto tp = throughput(s);
        ++compared;
        if (tp.aggregate < tp.no_relay_aggregate) broken.push_back("(c) n=" + std::to_string(n) + " q=" + num(k / 100.0));
      }
  }
  // (d) q* decreasing in n
  const auto grid = uniform_q_grid(999);
  std::string q_stars;
  for (double gamma : kGammas) {
    double prev = 1.0;
    for (unsigned n : {2u, 5u, 10u}) {
      const auto curve = throughput_vs_q(params_for(gamma), n, grid);
      if (!curve.q_star || !(*curve.q_star < prev)) broken.push_back("(d) gamma=" + num(gamma) + " n=" + std::to_string(n));
      if (curve.q_star) prev = *curve.q_star;
      if (gamma == 2.5) q_stars += (q_stars.empty() ? "" : "/") + num(curve.q_star.value_or(NAN));
    }
  }
  std::string detail = "N*(gamma=2.5; q=0.05/0.1/0.2) = " + std::to_string(n_star.back()[0]) + "/" +
                       std::to_string(n_star.back()[1]) + "/" + std::to_string(n_star.back()[2]) +
                       ", q*(gamma=2.5; n=2/5/10) = " + q_stars + ", relay >= no-relay at " +
                       std::to_string(compared) + " points";
  if (!broken.empty()) detail += ", broken: " + broken.front();
  return {broken.empty(), detail};
}

Outcome channel_checks() {
  std::size_t checks = 0, misses = 0;
  double worst_z = 0.0;
  std::uint64_t seed = 1;
  for (double gamma : {0.5, 2.5}) {
    const auto g = make_star_geometry(3, baseline_layout(gamma));
    const std::vector<NodeId> nodes{NodeId::relay(), NodeId::user(1), NodeId::user(2), NodeId::user(3)};
    for (NodeId rx : {NodeId::destination(), NodeId::relay()}) {
      for (unsigned mask = 1; mask < 16; ++mask) {
        std::vector<NodeId> set;
        for (unsigned b = 0; b < 4; ++b)
          if (mask >> b & 1u) set.push_back(nodes[b]);
        if (set.size() > 3) continue;
        if (std::find(set.begin(), set.end(), rx) != set.end()) continue;
        for (NodeId tx : set) {
          const double exact = success_probability(g, tx, rx, std::span<const NodeId>(set));
          const auto mc = oracle::capture_monte_carlo(g, tx, rx, set, 1'000'000, seed++);
          const double se = std::sqrt(exact * (1 - exact) / 1e6);
          const double z = se > 0 ? std::abs(mc.p - exact) / se : (mc.p == exact ? 0.0 : INFINITY);
          worst_z = std::max(worst_z, z);
          ++checks;
          if (z > 4.0) ++misses;
        }
      }
    }
  }
  double worst_enum = 0.0;
  std::size_t enum_cases = 0;
  for (double gamma : kGammas)
    for (unsigned n = 1; n <= 4; ++n)
      for (double q : kQs) {
        const auto g = make_star_geometry(n, baseline_layout(gamma));
        const auto dist = oracle::enumerate_batch_distribution(g, std::vector<double>(n, q));
        const auto arr = arrival_probabilities(SymmetricScenario{symmetric_link_params(g), n, q, 1.0});
        for (unsigned k = 0; k <= n; ++k) worst_enum = std::max(worst_enum, std::abs(arr.given_empty(k) - dist[k]));
        ++enum_cases;
      }
  return {misses == 0 && worst_enum < 1e-12,
          std::to_string(checks) + " Monte Carlo checks, max z = " + num(worst_z) + "; " + std::to_string(enum_cases) +
              " enumeration cases, max |dp_k| = " + num(worst_enum)};
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  report(1, "closed form vs truncated chain oracle", closed_form_vs_oracle);
  const auto sim_start = std::chrono::steady_clock::now();
  Outcome sim = {false, ""};
  report(2, "simulation agrees with analysis", [&] {
    sim = simulation_agreement();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - sim_start).count();
    sim.detail += ", runtime " + num(secs) + " s (limit 120)";
    sim.pass = sim.pass && secs < 120.0;
    return sim;
  });
  report(3, "per-user throughput and lambda independent of q0", q0_independence);
  report(4, "lambda/mu < 1 iff lambda1/mu < 1", stability_equivalence);
  report(5, "two-user and symmetric models agree at n = 2", two_user_consistency);
  report(6, "expanded throughput equals direct throughput", expanded_throughput);
  report(7, "qualitative figure behaviour", qualitative);
  report(8, "capture probability and batch distribution oracles", channel_checks);
  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s: %d criteria failed, total %.1f s\n", failures ? "FAIL" : "PASS", failures, total);
  return failures ? 1 : 0;
}
