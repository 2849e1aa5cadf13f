#pragma once

// CSV / JSON export of logs, plans, batch results and sweeps, plus re-import
// of per-sample batch records. Numbers are printed with 17 significant digits
// so exports round-trip exactly and are byte-stable.

#include "ilqrace/batch.hpp"
#include "ilqrace/sim.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ilqrace::io {

using nlohmann::json;

enum class Format { Csv, Json };

inline std::optional<Format> format_from_string(const std::string& s) {
  if (s == "csv") return Format::Csv;
  if (s == "json") return Format::Json;
  return std::nullopt;
}

inline constexpr double kHistogramBin = 0.5;

inline std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_num(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("not a number: '" + s + "'");
  return v;
}

inline json num_json(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

/// Opens `path` for writing and hands the stream to `body`; IO errors carry
/// the path.
inline void write_file(const std::string& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  body(out);
  out.flush();
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- trajectories -----------------------------------------------------------

inline constexpr const char* kStateFields[] = {"s", "V", "n", "chi", "ax", "ay"};
inline constexpr const char* kInputFields[] = {"jx", "jy"};

inline std::string trajectory_header(std::size_t num_players) {
  std::string h = "t";
  for (std::size_t i = 0; i < num_players; ++i) {
    const std::string p = "p" + std::to_string(i) + "_";
    for (const char* f : kStateFields) h += "," + p + f;
    for (const char* f : kInputFields) h += "," + p + f;
  }
  return h;
}

/// One row per stage: time, then per player the six states and two inputs.
/// The final row has no inputs; its input fields are left empty.
inline void write_trajectory_csv(std::ostream& os, std::size_t num_players,
                                 const std::vector<double>& times, const std::vector<Vector>& states,
                                 const std::vector<PlayerVectors>& inputs) {
  os << trajectory_header(num_players) << '\n';
  for (std::size_t k = 0; k < states.size(); ++k) {
    os << num(times[k]);
    for (std::size_t i = 0; i < num_players; ++i) {
      const Eigen::Index o = racing::RacingGame::offset(i);
      for (Eigen::Index f = 0; f < racing::kStateDim; ++f) os << ',' << num(states[k](o + f));
      for (Eigen::Index f = 0; f < racing::kInputDim; ++f) {
        os << ',';
        if (k < inputs.size()) os << num(inputs[k][i](f));
      }
    }
    os << '\n';
  }
}

inline json trajectory_json(std::size_t num_players, const std::vector<double>& times,
                            const std::vector<Vector>& states,
                            const std::vector<PlayerVectors>& inputs) {
  json rows = json::array();
  for (std::size_t k = 0; k < states.size(); ++k) {
    json row{{"t", times[k]}};
    json ps = json::array();
    for (std::size_t i = 0; i < num_players; ++i) {
      const Eigen::Index o = racing::RacingGame::offset(i);
      json p;
      for (Eigen::Index f = 0; f < racing::kStateDim; ++f) p[kStateFields[f]] = states[k](o + f);
      for (Eigen::Index f = 0; f < racing::kInputDim; ++f)
        p[kInputFields[f]] = k < inputs.size() ? json(inputs[k][i](f)) : json(nullptr);
      ps.push_back(p);
    }
    row["players"] = ps;
    rows.push_back(row);
  }
  return rows;
}

// ---- simulation logs ----------------------------------------------------------

struct LogSummary {
  std::string outcome;
  bool collision = false;
  std::optional<double> collision_time;
  std::optional<double> overtake_time;
  std::size_t replans = 0;
  std::size_t converged_replans = 0;
  std::size_t failed_replans = 0;
  std::vector<int> iterations;  // per replan, in log order
  std::string note;
};

inline LogSummary summarize_log(const sim::SimLog& log, const sim::ScenarioConfig& sc) {
  LogSummary s;
  s.outcome = sim::to_string(log.outcome);
  s.collision = !log.collisions.empty();
  if (s.collision) s.collision_time = log.collisions.front().t;
  if (sc.players.size() >= 2)
    s.overtake_time = sim::overtaking_time(log, sc.overtaker, sc.target, sc.overtake_gap);
  for (const auto& r : log.replans) {
    ++s.replans;
    if (r.converged) ++s.converged_replans;
    if (r.failed) ++s.failed_replans;
    s.iterations.push_back(r.iterations);
  }
  s.note = log.note;
  return s;
}

/// Key-value text block, one `key: value` per line.
inline void write_summary(std::ostream& os, const LogSummary& s, std::uint64_t seed) {
  auto opt = [](const std::optional<double>& v) { return v ? num(*v) : std::string("none"); };
  os << "outcome: " << s.outcome << '\n';
  os << "seed: " << seed << '\n';
  os << "collision: " << (s.collision ? "true" : "false") << '\n';
  os << "collision_time: " << opt(s.collision_time) << '\n';
  os << "overtake_time: " << opt(s.overtake_time) << '\n';
  os << "replans: " << s.replans << '\n';
  os << "converged_replans: " << s.converged_replans << '\n';
  os << "failed_replans: " << s.failed_replans << '\n';
  os << "iterations:";
  for (int it : s.iterations) os << ' ' << it;
  os << '\n';
  if (!s.note.empty()) os << "note: " << s.note << '\n';
}

inline json summary_json(const LogSummary& s, std::uint64_t seed) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"outcome", s.outcome},
          {"seed", seed},
          {"collision", s.collision},
          {"collision_time", opt(s.collision_time)},
          {"overtake_time", opt(s.overtake_time)},
          {"replans", s.replans},
          {"converged_replans", s.converged_replans},
          {"failed_replans", s.failed_replans},
          {"iterations", s.iterations},
          {"note", s.note}};
}

inline void write_log_csv(std::ostream& os, const sim::SimLog& log) {
  write_trajectory_csv(os, log.num_players, log.times, log.states, log.inputs);
}

inline json log_json(const sim::SimLog& log, const sim::ScenarioConfig& sc) {
  return {{"summary", summary_json(summarize_log(log, sc), log.seed)},
          {"dt", log.dt},
          {"rows", trajectory_json(log.num_players, log.times, log.states, log.inputs)}};
}

// ---- batch records --------------------------------------------------------------

inline constexpr const char* kRecordHeader =
    "ratio,ego,opponent,index,n_ego,n_opponent,outcome,collision,overtake_time,"
    "opponent_min_speed,replans,converged_replans,failed_replans,iterations";

inline void write_records_csv(std::ostream& os, const std::vector<batch::SampleRecord>& recs) {
  os << kRecordHeader << '\n';
  for (const auto& r : recs) {
    os << num(r.ratio) << ',' << sim::to_string(r.ego) << ',' << sim::to_string(r.opponent) << ','
       << r.index << ',' << num(r.n_ego) << ',' << num(r.n_opponent) << ','
       << sim::to_string(r.outcome) << ',' << (r.collision ? 1 : 0) << ','
       << (r.overtake_time ? num(*r.overtake_time) : std::string()) << ','
       << num(r.opponent_min_speed) << ',' << r.replans << ',' << r.converged_replans << ','
       << r.failed_replans << ',' << r.iterations << '\n';
  }
}

inline sim::Outcome outcome_from_string(const std::string& s) {
  for (auto o : {sim::Outcome::Completed, sim::Outcome::Collision, sim::Outcome::EvaluationFailure})
    if (s == sim::to_string(o)) return o;
  throw std::invalid_argument("unknown outcome '" + s + "'");
}

inline sim::PlannerKind kind_from_string(const std::string& s) {
  const auto k = sim::planner_from_string(s);
  if (!k) throw std::invalid_argument("unknown planner '" + s + "'");
  return *k;
}

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::vector<batch::SampleRecord> read_records_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || split(line) != split(kRecordHeader))
    throw std::runtime_error("records CSV: header mismatch");
  std::vector<batch::SampleRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 14)
      throw std::runtime_error("records CSV line " + std::to_string(lineno) + ": field count");
    try {
      batch::SampleRecord r;
      r.ratio = parse_num(f[0]);
      r.ego = kind_from_string(f[1]);
      r.opponent = kind_from_string(f[2]);
      r.index = std::stoull(f[3]);
      r.n_ego = parse_num(f[4]);
      r.n_opponent = parse_num(f[5]);
      r.outcome = outcome_from_string(f[6]);
      r.collision = f[7] == "1";
      if (!f[8].empty()) r.overtake_time = parse_num(f[8]);
      r.opponent_min_speed = parse_num(f[9]);
      r.replans = std::stoull(f[10]);
      r.converged_replans = std::stoull(f[11]);
      r.failed_replans = std::stoull(f[12]);
      r.iterations = std::stoull(f[13]);
      out.push_back(r);
    } catch (const std::logic_error& e) {
      throw std::runtime_error("records CSV line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline json records_json(const std::vector<batch::SampleRecord>& recs) {
  json arr = json::array();
  for (const auto& r : recs) {
    arr.push_back({{"ratio", r.ratio},
                   {"ego", sim::to_string(r.ego)},
                   {"opponent", sim::to_string(r.opponent)},
                   {"index", r.index},
                   {"n_ego", r.n_ego},
                   {"n_opponent", r.n_opponent},
                   {"outcome", sim::to_string(r.outcome)},
                   {"collision", r.collision},
                   {"overtake_time", r.overtake_time ? json(*r.overtake_time) : json(nullptr)},
                   {"opponent_min_speed", r.opponent_min_speed},
                   {"replans", r.replans},
                   {"converged_replans", r.converged_replans},
                   {"failed_replans", r.failed_replans},
                   {"iterations", r.iterations}});
  }
  return arr;
}

inline std::vector<batch::SampleRecord> read_records_json(const json& arr) {
  std::vector<batch::SampleRecord> out;
  try {
    for (const auto& j : arr) {
      batch::SampleRecord r;
      r.ratio = j.at("ratio").get<double>();
      r.ego = kind_from_string(j.at("ego").get<std::string>());
      r.opponent = kind_from_string(j.at("opponent").get<std::string>());
      r.index = j.at("index").get<std::size_t>();
      r.n_ego = j.at("n_ego").get<double>();
      r.n_opponent = j.at("n_opponent").get<double>();
      r.outcome = outcome_from_string(j.at("outcome").get<std::string>());
      r.collision = j.at("collision").get<bool>();
      if (!j.at("overtake_time").is_null()) r.overtake_time = j.at("overtake_time").get<double>();
      r.opponent_min_speed = j.at("opponent_min_speed").get<double>();
      r.replans = j.at("replans").get<std::size_t>();
      r.converged_replans = j.at("converged_replans").get<std::size_t>();
      r.failed_replans = j.at("failed_replans").get<std::size_t>();
      r.iterations = j.at("iterations").get<std::size_t>();
      out.push_back(r);
    }
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("records JSON: ") + e.what());
  }
  return out;
}

// ---- batch summaries ------------------------------------------------------------

inline constexpr const char* kSummaryHeader =
    "ratio,ego,opponent,samples,collisions,collision_probability,completed_overtakes,"
    "mean_overtake_time,replans,converged_replans";

inline void write_summary_csv(std::ostream& os, const std::vector<batch::CellSummary>& cells) {
  os << kSummaryHeader << '\n';
  for (const auto& c : cells) {
    os << num(c.ratio) << ',' << sim::to_string(c.ego) << ',' << sim::to_string(c.opponent) << ','
       << c.samples << ',' << c.collisions << ',' << num(c.collision_probability) << ','
       << c.completed_overtakes << ',' << num(c.mean_overtake_time) << ',' << c.replans << ','
       << c.converged_replans << '\n';
  }
}

inline json summary_cells_json(const std::vector<batch::CellSummary>& cells) {
  json arr = json::array();
  for (const auto& c : cells) {
    arr.push_back({{"ratio", c.ratio},
                   {"ego", sim::to_string(c.ego)},
                   {"opponent", sim::to_string(c.opponent)},
                   {"samples", c.samples},
                   {"collisions", c.collisions},
                   {"collision_probability", c.collision_probability},
                   {"completed_overtakes", c.completed_overtakes},
                   {"mean_overtake_time", num_json(c.mean_overtake_time)},
                   {"replans", c.replans},
                   {"converged_replans", c.converged_replans}});
  }
  return arr;
}

/// Planner-matrix table: one block per ratio, rows = ego planner, and for
/// each opponent planner a mean-overtake-time and a collision-probability
/// column.
inline void write_table_csv(std::ostream& os, const batch::BatchSpec& spec,
                            const std::vector<batch::CellSummary>& cells) {
  os << "ratio,ego";
  for (auto o : spec.opponent_kinds)
    os << ',' << sim::to_string(o) << ":mean_overtake_time," << sim::to_string(o)
       << ":collision_probability";
  os << '\n';
  for (double ratio : spec.ratios) {
    for (auto e : spec.ego_kinds) {
      os << num(ratio) << ',' << sim::to_string(e);
      for (auto o : spec.opponent_kinds) {
        const batch::CellSummary* c = nullptr;
        for (const auto& x : cells)
          if (x.ratio == ratio && x.ego == e && x.opponent == o) c = &x;
        if (c) os << ',' << num(c->mean_overtake_time) << ',' << num(c->collision_probability);
        else os << ",,";
      }
      os << '\n';
    }
  }
}

// ---- histograms -----------------------------------------------------------------

struct HistogramBin {
  double ratio = 1.0;
  sim::PlannerKind ego = sim::PlannerKind::Sequential;
  sim::PlannerKind opponent = sim::PlannerKind::Sequential;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

/// Completed overtaking times per cell binned at `width` seconds, from 0 up
/// to the bin holding the cell's largest time (empty bins included).
inline std::vector<HistogramBin> histogram(const std::vector<batch::SampleRecord>& recs,
                                           double width = kHistogramBin) {
  const auto cells = batch::summarize(recs);
  std::vector<HistogramBin> out;
  for (const auto& c : cells) {
    std::map<long, std::size_t> counts;
    long max_bin = -1;
    for (const auto& r : recs) {
      if (r.ratio != c.ratio || r.ego != c.ego || r.opponent != c.opponent || !r.overtake_time)
        continue;
      const long b = static_cast<long>(std::floor(*r.overtake_time / width));
      ++counts[b];
      max_bin = std::max(max_bin, b);
    }
    for (long b = 0; b <= max_bin; ++b) {
      out.push_back({c.ratio, c.ego, c.opponent, static_cast<double>(b) * width,
                     static_cast<double>(b + 1) * width, counts.count(b) ? counts[b] : 0});
    }
  }
  return out;
}

inline void write_histogram_csv(std::ostream& os, const std::vector<HistogramBin>& bins) {
  os << "ratio,ego,opponent,bin_start,bin_end,count\n";
  for (const auto& b : bins)
    os << num(b.ratio) << ',' << sim::to_string(b.ego) << ',' << sim::to_string(b.opponent) << ','
       << num(b.lo) << ',' << num(b.hi) << ',' << b.count << '\n';
}

inline json histogram_json(const std::vector<HistogramBin>& bins) {
  json arr = json::array();
  for (const auto& b : bins)
    arr.push_back({{"ratio", b.ratio},
                   {"ego", sim::to_string(b.ego)},
                   {"opponent", sim::to_string(b.opponent)},
                   {"bin_start", b.lo},
                   {"bin_end", b.hi},
                   {"count", b.count}});
  return arr;
}

// ---- sweeps -------------------------------------------------------------------------

inline void write_sweep_csv(std::ostream& os, const std::vector<batch::SweepPoint>& pts) {
  os << "ratio,max_abs_n,iterations,converged\n";
  for (const auto& p : pts)
    os << num(p.ratio) << ',' << num(p.max_abs_n) << ',' << p.iterations << ','
       << (p.converged ? 1 : 0) << '\n';
}

inline json sweep_json(const std::vector<batch::SweepPoint>& pts) {
  json arr = json::array();
  for (const auto& p : pts)
    arr.push_back({{"ratio", p.ratio},
                   {"max_abs_n", p.max_abs_n},
                   {"iterations", p.iterations},
                   {"converged", p.converged}});
  return arr;
}

}  // namespace ilqrace::io
