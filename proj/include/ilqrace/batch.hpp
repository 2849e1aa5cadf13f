#pragma once

// Monte-Carlo experiment runner: planner-pair matrix x collision-weight
// ratios x sampled lateral start positions.

#include "ilqrace/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <thread>
#include <tuple>
#include <vector>

namespace ilqrace::batch {

using sim::PlannerKind;
using sim::ScenarioConfig;

struct StartPair {
  double n_ego = 0.0;
  double n_opponent = 0.0;
};

/// Uniform i.i.d. lateral starts in the upper track half with the opponent
/// closer to the left wall: 0 <= n_ego < n_opp <= w_left - w_veh / 2.
/// Rejection sampling on the square; deterministic for a given seed.
inline std::vector<StartPair> sample_starts(std::size_t count, std::uint64_t seed,
                                            const racing::Track& track, double vehicle_width,
                                            double at_s = 0.0) {
  const double upper = track.width_left.value(at_s) - 0.5 * vehicle_width;
  if (!(upper > 0.0)) throw ConfigError("sample_starts: admissible lateral region is empty");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, upper);
  std::vector<StartPair> out;
  out.reserve(count);
  while (out.size() < count) {
    const double a = uni(rng);
    const double b = uni(rng);
    if (a < b) out.push_back({a, b});
  }
  return out;
}

struct BatchSpec {
  ScenarioConfig base;
  std::vector<PlannerKind> ego_kinds{PlannerKind::Sequential, PlannerKind::GameOpenLoop,
                                     PlannerKind::GameFeedback};
  std::vector<PlannerKind> opponent_kinds{PlannerKind::Sequential, PlannerKind::GameOpenLoop,
                                          PlannerKind::GameFeedback};
  std::vector<double> ratios{1.0, 10.0};
  std::size_t samples = 20;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const {
    base.validate();
    if (base.players.size() != 2) throw ConfigError("batch: exactly two players required");
    if (samples < 1) throw ConfigError("batch: sample count must be >= 1");
    if (ratios.empty() || ego_kinds.empty() || opponent_kinds.empty())
      throw ConfigError("batch: empty planner matrix or ratio list");
    for (double r : ratios)
      if (!(r > 0.0)) throw ConfigError("batch: ratios must be positive");
  }
};

struct SampleRecord {
  double ratio = 1.0;
  PlannerKind ego = PlannerKind::Sequential;
  PlannerKind opponent = PlannerKind::Sequential;
  std::size_t index = 0;
  double n_ego = 0.0;
  double n_opponent = 0.0;
  sim::Outcome outcome = sim::Outcome::Completed;
  bool collision = false;
  std::optional<double> overtake_time;
  double opponent_min_speed = 0.0;
  std::size_t replans = 0;
  std::size_t converged_replans = 0;
  std::size_t failed_replans = 0;
  std::size_t iterations = 0;

  bool operator==(const SampleRecord&) const = default;
};

struct CellSummary {
  double ratio = 1.0;
  PlannerKind ego = PlannerKind::Sequential;
  PlannerKind opponent = PlannerKind::Sequential;
  std::size_t samples = 0;
  std::size_t collisions = 0;
  std::size_t completed_overtakes = 0;
  double collision_probability = 0.0;
  double mean_overtake_time = std::numeric_limits<double>::quiet_NaN();
  std::size_t replans = 0;
  std::size_t converged_replans = 0;

  bool operator==(const CellSummary&) const = default;
};

struct BatchResult {
  std::vector<CellSummary> cells;
  std::vector<SampleRecord> records;
};

/// The scenario of one batch sample.
inline ScenarioConfig make_sample_scenario(const BatchSpec& spec, double ratio, PlannerKind ego,
                                           PlannerKind opponent, const StartPair& start) {
  ScenarioConfig sc = spec.base;
  auto& e = sc.players[sc.target];
  auto& o = sc.players[sc.overtaker];
  e.initial.n = start.n_ego;
  o.initial.n = start.n_opponent;
  e.planner.kind = ego;
  o.planner.kind = opponent;
  o.cost.c_c = ratio * e.cost.c_c;
  return sc;
}

inline SampleRecord summarize_log(const sim::SimLog& log, const ScenarioConfig& sc) {
  SampleRecord rec;
  rec.outcome = log.outcome;
  rec.collision = !log.collisions.empty();
  rec.overtake_time = sim::overtaking_time(log, sc.overtaker, sc.target, sc.overtake_gap);
  double vmin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < log.states.size(); ++k)
    vmin = std::min(vmin, log.player_value(k, sc.overtaker, racing::kV));
  rec.opponent_min_speed = vmin;
  for (const auto& r : log.replans) {
    ++rec.replans;
    if (r.converged) ++rec.converged_replans;
    if (r.failed) ++rec.failed_replans;
    rec.iterations += static_cast<std::size_t>(r.iterations);
  }
  return rec;
}

/// Aggregates per-sample records into per-cell statistics. The mean
/// overtaking time covers completed overtakes only.
inline std::vector<CellSummary> summarize(const std::vector<SampleRecord>& records) {
  using Key = std::tuple<double, int, int>;
  std::map<Key, CellSummary> cells;
  std::map<Key, double> time_sums;
  std::vector<Key> order;
  for (const auto& r : records) {
    const Key key{r.ratio, static_cast<int>(r.ego), static_cast<int>(r.opponent)};
    auto [it, inserted] = cells.try_emplace(key);
    if (inserted) {
      order.push_back(key);
      it->second.ratio = r.ratio;
      it->second.ego = r.ego;
      it->second.opponent = r.opponent;
      time_sums[key] = 0.0;
    }
    CellSummary& c = it->second;
    ++c.samples;
    if (r.collision) ++c.collisions;
    if (r.overtake_time) {
      ++c.completed_overtakes;
      time_sums[key] += *r.overtake_time;
    }
    c.replans += r.replans;
    c.converged_replans += r.converged_replans;
  }
  std::vector<CellSummary> out;
  for (const auto& key : order) {
    CellSummary c = cells[key];
    c.collision_probability = static_cast<double>(c.collisions) / static_cast<double>(c.samples);
    if (c.completed_overtakes > 0)
      c.mean_overtake_time = time_sums[key] / static_cast<double>(c.completed_overtakes);
    out.push_back(c);
  }
  return out;
}

/// Runs every (ratio, ego, opponent, sample) combination. Records are indexed
/// by position, so results do not depend on the thread count. The progress
/// callback (if any) is invoked from worker threads.
inline BatchResult run_batch(const BatchSpec& spec,
                             const std::function<void(std::size_t, std::size_t)>& progress = {}) {
  spec.validate();
  const auto& ego_player = spec.base.players[spec.base.target];
  const auto starts = sample_starts(spec.samples, spec.seed, spec.base.track,
                                    std::max(ego_player.cost.w_veh,
                                             spec.base.players[spec.base.overtaker].cost.w_veh),
                                    ego_player.initial.s);

  struct Job {
    double ratio;
    PlannerKind ego;
    PlannerKind opponent;
    std::size_t index;
  };
  std::vector<Job> jobs;
  for (double ratio : spec.ratios)
    for (PlannerKind e : spec.ego_kinds)
      for (PlannerKind o : spec.opponent_kinds)
        for (std::size_t s = 0; s < spec.samples; ++s) jobs.push_back({ratio, e, o, s});

  BatchResult result;
  result.records.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      const Job& job = jobs[j];
      const StartPair& start = starts[job.index];
      SampleRecord rec;
      try {
        const ScenarioConfig sc = make_sample_scenario(spec, job.ratio, job.ego, job.opponent, start);
        rec = summarize_log(sim::run_scenario(sc, spec.seed), sc);
      } catch (const std::exception&) {
        rec.outcome = sim::Outcome::EvaluationFailure;
      }
      rec.ratio = job.ratio;
      rec.ego = job.ego;
      rec.opponent = job.opponent;
      rec.index = job.index;
      rec.n_ego = start.n_ego;
      rec.n_opponent = start.n_opponent;
      result.records[j] = std::move(rec);
      const std::size_t d = done.fetch_add(1) + 1;
      if (progress) progress(d, jobs.size());
    }
  };
  const std::size_t nthreads = std::max<std::size_t>(1, std::min(spec.threads, jobs.size()));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
  }
  result.cells = summarize(result.records);
  return result;
}

/// Finds the summary of one cell; nullptr if absent.
inline const CellSummary* find_cell(const BatchResult& r, double ratio, PlannerKind ego,
                                    PlannerKind opponent) {
  for (const auto& c : r.cells)
    if (c.ratio == ratio && c.ego == ego && c.opponent == opponent) return &c;
  return nullptr;
}

/// Max |n| of the ego's first plan for each opponent collision-weight ratio.
struct SweepPoint {
  double ratio = 1.0;
  double max_abs_n = 0.0;
  int iterations = 0;
  bool converged = false;
};

inline std::vector<SweepPoint> run_sweep(const ScenarioConfig& base, const std::vector<double>& ratios) {
  base.validate();
  std::vector<SweepPoint> out;
  for (double ratio : ratios) {
    ScenarioConfig sc = base;
    sc.players[sc.overtaker].cost.c_c = ratio * sc.players[sc.target].cost.c_c;
    const auto plan = sim::plan_step(sc.target, sc.initial_state(), std::nullopt,
                                     sc.players[sc.target].planner, sc);
    double m = 0.0;
    for (const auto& s : plan.planned_states) m = std::max(m, std::abs(s(racing::kN)));
    out.push_back({ratio, m, plan.iterations, plan.converged});
  }
  return out;
}

}  // namespace ilqrace::batch
