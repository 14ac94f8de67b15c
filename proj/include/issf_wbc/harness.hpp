// Copyright 2026 The issf-wbc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "issf_wbc/scenario.hpp"
#include "issf_wbc/sim.hpp"

namespace issf_wbc {

inline constexpr double kIssfBoundTolerance = 5e-3;

/// A maximal contiguous run of cycles with h < 0 on one barrier.
inline int count_negative_intervals(const RunTrace& trace, std::size_t barrier) {
  int events = 0;
  bool inside = false;
  for (const auto& c : trace.cycles) {
    const bool neg = c.h[barrier] < 0.0;
    if (neg && !inside) ++events;
    inside = neg;
  }
  return events;
}

struct BarrierSummary {
  std::string name;
  BarrierKind kind;
  double h0 = 0.0;
  double min_h = std::numeric_limits<double>::infinity();
  int collision_events = 0;
  double issf_bound = -std::numeric_limits<double>::infinity();  // only for IssfCbf runs
};

struct RunMetrics {
  std::string scenario;
  FilterMode mode = FilterMode::IssfCbf;
  double alpha = 0.0;    // self/object collision alpha
  double epsilon = 0.0;  // self/object collision epsilon
  long cycles = 0;
  bool aborted = false;
  std::string abort_reason;
  double dbar = 0.0;
  std::map<std::string, double> min_h_per_kind;
  std::vector<BarrierSummary> barriers;
  int collision_events = 0;
  double min_collision_h = std::numeric_limits<double>::infinity();
  double mean_deviation = 0.0;  // mean |qdot_safe - qdot_des|
  double jitter = 0.0;          // max |delta qdot_safe| / dt
  double max_dyn_residual = 0.0;
  double mean_task_error = 0.0;
  double runtime_per_cycle_us = 0.0;
  bool issf_bound_holds = true;
  double issf_bound_margin = std::numeric_limits<double>::infinity();  // min over barriers of min_h - bound
  EventLog events;
};

inline RunMetrics compute_metrics(const Scenario& sc, const RunTrace& trace) {
  const auto& f = sc.setup.filter;
  RunMetrics m;
  m.scenario = sc.name;
  m.mode = f.mode;
  m.alpha = f.self_collision.alpha;
  m.epsilon = f.mode == FilterMode::Cbf ? std::numeric_limits<double>::infinity() : f.self_collision.epsilon;
  m.cycles = static_cast<long>(trace.cycles.size());
  m.aborted = trace.aborted;
  m.abort_reason = trace.abort_reason;
  m.dbar = trace.dbar;
  m.events = trace.events;
  const double dt = sc.setup.sim.dt_control;

  for (std::size_t b = 0; b < trace.barrier_names.size(); ++b) {
    BarrierSummary s;
    s.name = trace.barrier_names[b];
    s.kind = trace.barrier_kinds[b];
    if (!trace.cycles.empty()) s.h0 = trace.cycles.front().h[b];
    for (const auto& c : trace.cycles) s.min_h = std::min(s.min_h, c.h[b]);
    if (is_collision(s.kind)) {
      s.collision_events = count_negative_intervals(trace, b);
      m.collision_events += s.collision_events;
      m.min_collision_h = std::min(m.min_collision_h, s.min_h);
    }
    if (f.mode == FilterMode::IssfCbf && !trace.cycles.empty()) {
      const auto& p = f.params(s.kind);
      s.issf_bound = std::min(s.h0, 0.0) - p.epsilon * trace.dbar * trace.dbar / (4.0 * p.alpha) - kIssfBoundTolerance;
      m.issf_bound_margin = std::min(m.issf_bound_margin, s.min_h - s.issf_bound);
      if (s.min_h < s.issf_bound) m.issf_bound_holds = false;
    }
    const auto [it, fresh] = m.min_h_per_kind.emplace(to_string(s.kind), s.min_h);
    if (!fresh) it->second = std::min(it->second, s.min_h);
    m.barriers.push_back(std::move(s));
  }

  double dev = 0.0, task = 0.0;
  for (std::size_t k = 0; k < trace.cycles.size(); ++k) {
    const auto& c = trace.cycles[k];
    dev += (c.qdot_safe - c.qdot_des).norm();
    task += c.task_error;
    m.max_dyn_residual = std::max(m.max_dyn_residual, c.dyn_residual);
    if (k > 0) m.jitter = std::max(m.jitter, (c.qdot_safe - trace.cycles[k - 1].qdot_safe).norm() / dt);
  }
  if (!trace.cycles.empty()) {
    m.mean_deviation = dev / double(trace.cycles.size());
    m.mean_task_error = task / double(trace.cycles.size());
    m.runtime_per_cycle_us = 1e6 * trace.wall_time_s / double(trace.cycles.size());
  }
  return m;
}

namespace harness_detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline nlohmann::json number_json(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

inline void append_vec(std::string& line, const VecX& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    line += ',';
    line += fmt(v[i]);
  }
}

inline void header_vec(std::string& line, const char* prefix, int n) {
  for (int i = 0; i < n; ++i) line += std::string(",") + prefix + std::to_string(i);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace harness_detail

inline std::string trace_csv(const RunTrace& trace) {
  using namespace harness_detail;
  const int n = trace.n_dof;
  std::string s = "t";
  header_vec(s, "q", n);
  header_vec(s, "qd", n);
  header_vec(s, "qdot_des", n);
  header_vec(s, "qdot_safe", n);
  header_vec(s, "tau_cmd", n);
  for (const auto& name : trace.barrier_names) s += ",h:" + name;
  s += ",d_inf,dbar,qp_iters,qp_status,dyn_residual\n";
  for (const auto& c : trace.cycles) {
    std::string line = fmt(c.t);
    append_vec(line, c.q);
    append_vec(line, c.qd);
    append_vec(line, c.qdot_des);
    append_vec(line, c.qdot_safe);
    append_vec(line, c.tau_cmd);
    for (double h : c.h) line += ',' + fmt(h);
    line += ',' + fmt(c.d_inf) + ',' + fmt(c.dbar) + ',' + std::to_string(c.qp_iters) + ',' +
            (c.relaxed ? std::string("relaxed") : std::string(to_string(c.qp_status))) + ',' + fmt(c.dyn_residual) + '\n';
    s += line;
  }
  return s;
}

inline std::string torque_csv(const RunTrace& trace) {
  using namespace harness_detail;
  std::string s = "t";
  header_vec(s, "tau_cmd", trace.n_dof);
  header_vec(s, "clamped", trace.n_dof);
  s += '\n';
  for (const auto& c : trace.cycles) {
    std::string line = fmt(c.t);
    append_vec(line, c.tau_cmd);
    for (char f : c.clamped) line += f ? ",1" : ",0";
    s += line + '\n';
  }
  return s;
}

inline std::string constraints_csv(const RunTrace& trace) {
  using namespace harness_detail;
  std::string s = "t,kind,pair,h,rhs,active\n";
  for (const auto& r : trace.constraints)
    s += fmt(r.t) + ',' + to_string(r.kind) + ',' + r.pair + ',' + fmt(r.h) + ',' + fmt(r.rhs) + ',' +
         (r.active ? "1" : "0") + '\n';
  return s;
}

inline nlohmann::json summary_json(const RunMetrics& m) {
  using harness_detail::number_json;
  nlohmann::json j;
  j["scenario"] = m.scenario;
  j["mode"] = to_string(m.mode);
  j["alpha"] = number_json(m.alpha);
  j["epsilon"] = number_json(m.epsilon);
  j["cycles"] = m.cycles;
  j["aborted"] = m.aborted;
  if (m.aborted) j["abort_reason"] = m.abort_reason;
  j["dbar"] = m.dbar;
  nlohmann::json kinds = nlohmann::json::object();
  for (const auto& [k, v] : m.min_h_per_kind) kinds[k] = number_json(v);
  j["min_h_per_kind"] = kinds;
  j["collision_events"] = m.collision_events;
  j["min_collision_h"] = number_json(m.min_collision_h);
  j["mean_qdot_deviation"] = m.mean_deviation;
  j["jitter"] = m.jitter;
  j["mean_task_error"] = m.mean_task_error;
  j["max_dynamics_residual"] = m.max_dyn_residual;
  j["runtime_per_cycle_us"] = m.runtime_per_cycle_us;
  if (m.mode == FilterMode::IssfCbf) {
    j["issf_bound"] = {{"holds", m.issf_bound_holds}, {"margin", number_json(m.issf_bound_margin)}};
  }
  nlohmann::json bars = nlohmann::json::array();
  for (const auto& b : m.barriers) {
    nlohmann::json e{{"name", b.name}, {"kind", to_string(b.kind)}, {"h0", b.h0}, {"min_h", number_json(b.min_h)}};
    if (is_collision(b.kind)) e["collision_events"] = b.collision_events;
    bars.push_back(e);
  }
  j["barriers"] = bars;
  j["events"] = {{"dropped_rows", m.events.dropped_rows},
                 {"slack_relaxations", m.events.slack_relaxations},
                 {"infeasible_qps", m.events.infeasible_qps},
                 {"torque_clamps", m.events.torque_clamps},
                 {"messages", m.events.messages}};
  return j;
}

/// Output root: $ISSF_WBC_OUT if set, else the given default.
inline std::filesystem::path output_root(const std::string& fallback = "out") {
  if (const char* env = std::getenv("ISSF_WBC_OUT"); env && *env) return env;
  return fallback;
}

inline std::string param_label(double v) {
  if (std::isinf(v)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

inline std::filesystem::path run_directory(const std::filesystem::path& root, const RunMetrics& m) {
  return root / m.scenario / to_string(m.mode) / (param_label(m.alpha) + "_" + param_label(m.epsilon));
}

/// Copy of the scenario with the mode and the self/object collision (alpha,
/// epsilon) replaced. Unset values keep the scenario's own.
inline Scenario with_mode(const Scenario& base, FilterMode mode, std::optional<double> alpha = std::nullopt,
                          std::optional<double> epsilon = std::nullopt) {
  Scenario s = base;
  auto& f = s.setup.filter;
  f.mode = mode;
  if (alpha) f.self_collision.alpha = f.object_collision.alpha = *alpha;
  if (epsilon) f.self_collision.epsilon = f.object_collision.epsilon = *epsilon;
  f.validate();
  return s;
}

struct RunOutput {
  RunTrace trace;
  RunMetrics metrics;
  std::filesystem::path directory;  // empty when nothing was written
};

struct RunOptions {
  std::optional<std::filesystem::path> out_root;  // nullopt: keep everything in memory
  bool write_trace = true;
  bool trace_constraints = false;
};

inline RunOutput run_scenario(const Scenario& sc, const RunOptions& opt = {}) {
  using harness_detail::write_text;
  ClosedLoopSetup setup = sc.setup;
  setup.trace_constraints = opt.trace_constraints;
  RunOutput out;
  out.trace = run_closed_loop(sc.nominal, sc.plant(), setup);
  out.metrics = compute_metrics(sc, out.trace);
  if (opt.out_root) {
    out.directory = run_directory(*opt.out_root, out.metrics);
    std::filesystem::create_directories(out.directory);
    if (opt.write_trace) {
      write_text(out.directory / "trace.csv", trace_csv(out.trace));
      write_text(out.directory / "torque.csv", torque_csv(out.trace));
    }
    if (opt.trace_constraints) write_text(out.directory / "constraints.csv", constraints_csv(out.trace));
    write_text(out.directory / "summary.json", summary_json(out.metrics).dump(2) + "\n");
  }
  return out;
}

struct SweepPoint {
  FilterMode mode = FilterMode::WithoutCbf;
  double alpha = 0.0;
  double epsilon = 0.0;  // +inf for plain CBF and the unfiltered reference
  bool failed = false;
  std::string error;
  RunMetrics metrics;
  double remaining_collision_ratio = 0.0;
};

struct SweepResult {
  std::string scenario;
  int reference_events = 0;  // w/o-CBF collision events (ratio denominator)
  std::vector<SweepPoint> points;

  const SweepPoint* find(FilterMode mode, double alpha, double epsilon) const {
    for (const auto& p : points)
      if (p.mode == mode && (mode == FilterMode::WithoutCbf || p.alpha == alpha) &&
          (mode != FilterMode::IssfCbf || p.epsilon == epsilon))
        return &p;
    return nullptr;
  }
};

struct SweepOptions {
  int jobs = 1;
  std::optional<std::filesystem::path> out_root;
  bool write_traces = false;
};

/// One run per grid point. w/o-CBF ignores (alpha, epsilon) and plain CBF
/// ignores epsilon, so those collapse to one point each (per alpha for CBF).
/// The w/o-CBF reference is always run to normalize collision ratios.
inline SweepResult run_sweep(const Scenario& sc, const std::vector<double>& alphas,
                             const std::vector<double>& epsilons, const std::vector<FilterMode>& modes,
                             const SweepOptions& opt = {}) {
  if (alphas.empty() || epsilons.empty() || modes.empty())
    throw std::invalid_argument("run_sweep: alpha, epsilon and mode grids must be non-empty");
  const double inf = std::numeric_limits<double>::infinity();
  auto make_point = [](FilterMode mode, double alpha, double epsilon) {
    SweepPoint p;
    p.mode = mode;
    p.alpha = alpha;
    p.epsilon = epsilon;
    return p;
  };
  SweepResult result;
  result.scenario = sc.name;
  result.points.push_back(make_point(FilterMode::WithoutCbf, sc.setup.filter.self_collision.alpha, inf));
  for (FilterMode mode : modes) {
    if (mode == FilterMode::WithoutCbf) continue;
    for (double a : alphas) {
      if (mode == FilterMode::IssfCbf) {
        for (double e : epsilons) result.points.push_back(make_point(mode, a, e));
      } else {
        result.points.push_back(make_point(mode, a, inf));
      }
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < result.points.size(); i = next++) {
      auto& p = result.points[i];
      try {
        const Scenario run = p.mode == FilterMode::WithoutCbf ? with_mode(sc, p.mode)
                             : p.mode == FilterMode::IssfCbf  ? with_mode(sc, p.mode, p.alpha, p.epsilon)
                                                              : with_mode(sc, p.mode, p.alpha);
        RunOptions ro;
        ro.out_root = opt.out_root;
        ro.write_trace = opt.write_traces;
        p.metrics = run_scenario(run, ro).metrics;
        if (p.metrics.aborted) {
          p.failed = true;
          p.error = p.metrics.abort_reason;
        }
      } catch (const std::exception& e) {
        p.failed = true;
        p.error = e.what();
      }
    }
  };
  const int jobs = std::max(1, opt.jobs);
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  const auto& ref = result.points.front();
  result.reference_events = ref.failed ? 0 : ref.metrics.collision_events;
  for (auto& p : result.points) {
    if (&p == &ref && !p.failed) {
      p.remaining_collision_ratio = 1.0;  // normalization anchor
      continue;
    }
    if (p.failed || result.reference_events == 0) {
      p.remaining_collision_ratio = p.failed ? std::numeric_limits<double>::quiet_NaN() : 0.0;
      continue;
    }
    p.remaining_collision_ratio =
        std::clamp(double(p.metrics.collision_events) / double(result.reference_events), 0.0, 1.0);
  }

  if (opt.out_root) {
    using harness_detail::fmt;
    std::string csv =
        "mode,alpha,epsilon,status,collision_events,remaining_collision_ratio,min_h,mean_qdot_deviation,jitter,dbar\n";
    for (const auto& p : result.points) {
      csv += std::string(to_string(p.mode)) + ',' + param_label(p.alpha) + ',' + param_label(p.epsilon) + ',' +
             (p.failed ? "failed" : "ok") + ',' + std::to_string(p.metrics.collision_events) + ',' +
             fmt(p.remaining_collision_ratio) + ',' + fmt(p.metrics.min_collision_h) + ',' +
             fmt(p.metrics.mean_deviation) + ',' + fmt(p.metrics.jitter) + ',' + fmt(p.metrics.dbar) + '\n';
    }
    std::filesystem::create_directories(*opt.out_root / sc.name);
    harness_detail::write_text(*opt.out_root / sc.name / "sweep.csv", csv);
  }
  return result;
}

}  // namespace issf_wbc
