#pragma once

// JSON configuration: sections track, players[], solver, sim, batch. Every
// key is optional and falls back to the experiment defaults; unknown keys are
// rejected.

#include "ilqrace/batch.hpp"
#include "ilqrace/sim.hpp"

#include <json.hpp>

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

namespace ilqrace::config {

using nlohmann::json;
using racing::PiecewiseLinear;

inline constexpr double kExperimentJerkWeight = 0.01;
inline constexpr double kExperimentCollisionWeight = 0.3;
inline constexpr double kExperimentWallWeight = 1000.0;
inline constexpr double kExperimentHalfWidth = 4.0;

/// Head-to-head experiment used throughout the batch studies: the ego
/// (player 0, top speed 30 m/s) starts 50 m ahead of a faster opponent
/// (player 1, top speed 40 m/s) on a straight track. Compared with the bare
/// model defaults the jerk weight is raised (a lighter one lets the first
/// iterations take large lateral steps into the extrapolated collision term),
/// the collision weight is lowered so that vehicles are willing to pass
/// closely, the walls are stiff, and the track is narrower, which makes
/// blocking possible.
inline sim::ScenarioConfig default_scenario() {
  sim::ScenarioConfig sc;
  sc.track = racing::Track::straight(600.0, kExperimentHalfWidth, kExperimentHalfWidth);
  sim::ScenarioPlayer ego;
  ego.cost.R = Matrix::Identity(2, 2) * kExperimentJerkWeight;
  ego.cost.c_c = kExperimentCollisionWeight;
  ego.cost.c_w = kExperimentWallWeight;
  ego.initial = {50.0, 30.0, 0.0, 0.0, 0.0, 0.0};
  ego.gg = racing::GGDiamond::with_defaults(30.0);
  sim::ScenarioPlayer opp = ego;
  opp.initial = {0.0, 40.0, 0.5, 0.0, 0.0, 0.0};
  opp.gg = racing::GGDiamond::with_defaults(40.0);
  sc.players = {ego, opp};
  return sc;
}

struct Config {
  sim::ScenarioConfig scenario = default_scenario();
  batch::BatchSpec batch;  // base is filled from `scenario`
  std::vector<double> sweep_ratios{1.0, 10.0, 100.0};
};

namespace detail {

inline void check_keys(const json& j, const std::string& where,
                       std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

/// Either a constant or {"knots": [...], "values": [...]}.
inline PiecewiseLinear read_table(const json& j, const std::string& where) {
  if (j.is_number()) return PiecewiseLinear(j.get<double>());
  check_keys(j, where, {"knots", "values"});
  std::vector<double> xs, ys;
  read(j, "knots", xs, where);
  read(j, "values", ys, where);
  return PiecewiseLinear(std::move(xs), std::move(ys));
}

inline json write_table(const PiecewiseLinear& t) {
  if (t.knots().size() == 1) return t.values().front();
  return json{{"knots", t.knots()}, {"values", t.values()}};
}

inline sim::PlannerKind read_planner(const json& j, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + ": planner must be a string");
  const auto k = sim::planner_from_string(j.get<std::string>());
  if (!k) throw ConfigError(where + ": unknown planner '" + j.get<std::string>() + "'");
  return *k;
}

inline void read_track(const json& j, racing::Track& t) {
  const std::string w = "track";
  check_keys(j, w, {"length", "curvature", "width_left", "width_right"});
  read(j, "length", t.length, w);
  if (j.contains("curvature")) t.curvature = read_table(j["curvature"], w + ".curvature");
  if (j.contains("width_left")) t.width_left = read_table(j["width_left"], w + ".width_left");
  if (j.contains("width_right")) t.width_right = read_table(j["width_right"], w + ".width_right");
}

inline void read_cost(const json& j, racing::CostParams& c, const std::string& w) {
  check_keys(j, w, {"R", "c_c", "c_w", "c_ax", "c_a", "c_g", "l_veh", "w_veh"});
  if (j.contains("R")) {
    std::vector<std::vector<double>> rows;
    read(j, "R", rows, w);
    if (rows.size() != 2 || rows[0].size() != 2 || rows[1].size() != 2)
      throw ConfigError(w + ".R: expected a 2x2 array");
    c.R.resize(2, 2);
    for (int r = 0; r < 2; ++r)
      for (int q = 0; q < 2; ++q) c.R(r, q) = rows[r][q];
  }
  read(j, "c_c", c.c_c, w);
  read(j, "c_w", c.c_w, w);
  read(j, "c_ax", c.c_ax, w);
  read(j, "c_a", c.c_a, w);
  read(j, "c_g", c.c_g, w);
  read(j, "l_veh", c.l_veh, w);
  read(j, "w_veh", c.w_veh, w);
}

inline void read_gg(const json& j, racing::GGDiamond& g, const std::string& w) {
  check_keys(j, w, {"v_max", "ax_max", "ax_min", "ay_max"});
  if (j.contains("v_max")) {
    read(j, "v_max", g.v_max, w);
    g.ax_max = racing::GGDiamond::with_defaults(g.v_max).ax_max;
  }
  if (j.contains("ax_max")) g.ax_max = read_table(j["ax_max"], w + ".ax_max");
  if (j.contains("ax_min")) g.ax_min = read_table(j["ax_min"], w + ".ax_min");
  if (j.contains("ay_max")) g.ay_max = read_table(j["ay_max"], w + ".ay_max");
}

inline void read_solver(const json& j, SolverParams& p, const std::string& w) {
  // The equilibrium concept follows from each player's planner kind.
  check_keys(j, w, {"step_size", "max_iters", "conv_tol", "regularization"});
  read(j, "step_size", p.step_size, w);
  read(j, "max_iters", p.max_iters, w);
  read(j, "conv_tol", p.conv_tol, w);
  read(j, "regularization", p.regularization, w);
}

inline void read_player(const json& j, sim::ScenarioPlayer& p, const std::string& w) {
  check_keys(j, w, {"initial", "planner", "solver", "cost", "gg"});
  if (j.contains("initial")) {
    const json& s = j["initial"];
    const std::string ws = w + ".initial";
    check_keys(s, ws, {"s", "V", "n", "chi", "ax", "ay"});
    read(s, "s", p.initial.s, ws);
    read(s, "V", p.initial.V, ws);
    read(s, "n", p.initial.n, ws);
    read(s, "chi", p.initial.chi, ws);
    read(s, "ax", p.initial.ax, ws);
    read(s, "ay", p.initial.ay, ws);
  }
  if (j.contains("planner")) p.planner.kind = read_planner(j["planner"], w + ".planner");
  if (j.contains("solver")) read_solver(j["solver"], p.planner.solver, w + ".solver");
  if (j.contains("cost")) read_cost(j["cost"], p.cost, w + ".cost");
  if (j.contains("gg")) read_gg(j["gg"], p.gg, w + ".gg");
}

inline void read_sim(const json& j, sim::ScenarioConfig& sc) {
  const std::string w = "sim";
  check_keys(j, w, {"horizon", "dt", "replan_interval", "duration", "overtake_gap",
                    "overtake_margin", "target", "overtaker"});
  read(j, "horizon", sc.horizon, w);
  read(j, "dt", sc.dt, w);
  read(j, "replan_interval", sc.replan_interval, w);
  read(j, "duration", sc.duration, w);
  read(j, "overtake_gap", sc.overtake_gap, w);
  read(j, "overtake_margin", sc.overtake_margin, w);
  read(j, "target", sc.target, w);
  read(j, "overtaker", sc.overtaker, w);
}

inline void read_batch(const json& j, Config& c) {
  const std::string w = "batch";
  check_keys(j, w, {"ratios", "samples", "seed", "ego", "opponent", "threads", "sweep_ratios"});
  read(j, "ratios", c.batch.ratios, w);
  read(j, "samples", c.batch.samples, w);
  read(j, "seed", c.batch.seed, w);
  read(j, "threads", c.batch.threads, w);
  read(j, "sweep_ratios", c.sweep_ratios, w);
  auto kinds = [&](const char* key, std::vector<sim::PlannerKind>& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_array()) throw ConfigError(w + "." + key + ": expected an array");
    out.clear();
    for (const auto& e : j[key]) out.push_back(read_planner(e, w + "." + key));
  };
  kinds("ego", c.batch.ego_kinds);
  kinds("opponent", c.batch.opponent_kinds);
}

}  // namespace detail

/// Parses a configuration document. Top-level "solver" applies to every
/// player before per-player "solver" overrides.
inline Config parse(const json& j) {
  Config c;
  detail::check_keys(j, "config", {"track", "players", "solver", "sim", "batch"});
  auto& sc = c.scenario;
  if (j.contains("track")) detail::read_track(j["track"], sc.track);
  if (j.contains("solver")) {
    for (auto& p : sc.players) detail::read_solver(j["solver"], p.planner.solver, "solver");
  }
  if (j.contains("players")) {
    const json& ps = j["players"];
    if (!ps.is_array()) throw ConfigError("players: expected an array");
    const auto defaults = sc.players;
    sc.players.clear();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      // Missing players fall back to the last default player.
      sim::ScenarioPlayer p = defaults[std::min(i, defaults.size() - 1)];
      detail::read_player(ps[i], p, "players[" + std::to_string(i) + "]");
      sc.players.push_back(std::move(p));
    }
  }
  if (j.contains("sim")) detail::read_sim(j["sim"], sc);
  if (j.contains("batch")) detail::read_batch(j["batch"], c);
  sc.validate();
  c.batch.base = sc;
  return c;
}

inline Config parse_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse(j);
}

inline Config load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_text(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline json to_json(const SolverParams& p) {
  return {{"step_size", p.step_size},
          {"max_iters", p.max_iters},
          {"conv_tol", p.conv_tol},
          {"regularization", p.regularization}};
}

/// Serializes a configuration in the same schema `parse` reads.
inline json to_json(const Config& c) {
  const auto& sc = c.scenario;
  json players = json::array();
  for (const auto& p : sc.players) {
    const auto& q = p.cost;
    players.push_back(
        {{"initial",
          {{"s", p.initial.s}, {"V", p.initial.V}, {"n", p.initial.n}, {"chi", p.initial.chi},
           {"ax", p.initial.ax}, {"ay", p.initial.ay}}},
         {"planner", sim::to_string(p.planner.kind)},
         {"solver", to_json(p.planner.solver)},
         {"cost",
          {{"R", {{q.R(0, 0), q.R(0, 1)}, {q.R(1, 0), q.R(1, 1)}}}, {"c_c", q.c_c}, {"c_w", q.c_w},
           {"c_ax", q.c_ax}, {"c_a", q.c_a}, {"c_g", q.c_g}, {"l_veh", q.l_veh},
           {"w_veh", q.w_veh}}},
         {"gg",
          {{"v_max", p.gg.v_max}, {"ax_max", detail::write_table(p.gg.ax_max)},
           {"ax_min", detail::write_table(p.gg.ax_min)},
           {"ay_max", detail::write_table(p.gg.ay_max)}}}});
  }
  json kinds_ego = json::array(), kinds_opp = json::array();
  for (auto k : c.batch.ego_kinds) kinds_ego.push_back(sim::to_string(k));
  for (auto k : c.batch.opponent_kinds) kinds_opp.push_back(sim::to_string(k));
  return {{"track",
           {{"length", sc.track.length}, {"curvature", detail::write_table(sc.track.curvature)},
            {"width_left", detail::write_table(sc.track.width_left)},
            {"width_right", detail::write_table(sc.track.width_right)}}},
          {"players", players},
          {"sim",
           {{"horizon", sc.horizon}, {"dt", sc.dt}, {"replan_interval", sc.replan_interval},
            {"duration", sc.duration}, {"overtake_gap", sc.overtake_gap},
            {"overtake_margin", sc.overtake_margin}, {"target", sc.target},
            {"overtaker", sc.overtaker}}},
          {"batch",
           {{"ratios", c.batch.ratios}, {"samples", c.batch.samples}, {"seed", c.batch.seed},
            {"ego", kinds_ego}, {"opponent", kinds_opp}, {"threads", c.batch.threads},
            {"sweep_ratios", c.sweep_ratios}}}};
}

}  // namespace ilqrace::config
