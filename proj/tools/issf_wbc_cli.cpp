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

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "issf_wbc/harness.hpp"

namespace {

using namespace issf_wbc;

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "inf") {
      out.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument("not a number: " + item);
    out.push_back(v);
  }
  return out;
}

std::vector<FilterMode> parse_modes(const std::string& text) {
  std::vector<FilterMode> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto m = parse_filter_mode(item);
    if (!m) throw std::invalid_argument("unknown mode: " + item);
    out.push_back(*m);
  }
  return out;
}

void print_run(const RunOutput& r) {
  const auto& m = r.metrics;
  std::printf("scenario %s  mode %s  alpha %s  epsilon %s\n", m.scenario.c_str(), to_string(m.mode),
              param_label(m.alpha).c_str(), param_label(m.epsilon).c_str());
  std::printf("  cycles %ld  %.1f us/cycle%s\n", m.cycles, m.runtime_per_cycle_us, m.aborted ? "  ABORTED" : "");
  if (m.aborted) std::printf("  reason: %s\n", m.abort_reason.c_str());
  for (const auto& [kind, h] : m.min_h_per_kind) std::printf("  min h %-17s %+.5f\n", kind.c_str(), h);
  std::printf("  collision events %d  dbar %.4f  jitter %.2f\n", m.collision_events, m.dbar, m.jitter);
  if (m.mode == FilterMode::IssfCbf)
    std::printf("  issf bound %s (margin %.5f)\n", m.issf_bound_holds ? "holds" : "VIOLATED", m.issf_bound_margin);
  if (m.events.slack_relaxations || m.events.dropped_rows || m.events.torque_clamps)
    std::printf("  events: %d slack relaxations, %d dropped rows, %d torque clamps\n", m.events.slack_relaxations,
                m.events.dropped_rows, m.events.torque_clamps);
  if (!r.directory.empty()) std::printf("  wrote %s\n", r.directory.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Whole-body control with input-to-state safe barrier filtering"};
  app.require_subcommand(1);
  std::string out_dir = "out";

  auto* run = app.add_subcommand("run", "Run one scenario");
  std::string run_path, mode_name = "issf-cbf";
  std::optional<double> alpha, epsilon;
  std::optional<std::uint64_t> seed;
  bool trace_constraints = false;
  run->add_option("scenario", run_path, "Scenario file")->required();
  run->add_option("--mode", mode_name, "without-cbf | cbf | issf-cbf | ecbf");
  run->add_option("--alpha", alpha, "Collision-barrier alpha (1/s)");
  run->add_option("--epsilon", epsilon, "Collision-barrier ISSf epsilon");
  run->add_flag("--trace-constraints", trace_constraints, "Write per-cycle constraint rows");
  run->add_option("--seed", seed, "Random seed");
  run->add_option("--out", out_dir, "Output root (overridden by ISSF_WBC_OUT)");

  auto* sweep = app.add_subcommand("sweep", "Grid over (mode, alpha, epsilon)");
  std::string sweep_path, alphas = "1,5,10,20,30", epsilons = "10,20,30", modes = "cbf,issf-cbf";
  int jobs = 1;
  bool traces = false;
  sweep->add_option("scenario", sweep_path, "Scenario file")->required();
  sweep->add_option("--alphas", alphas, "Comma-separated alpha grid");
  sweep->add_option("--epsilons", epsilons, "Comma-separated epsilon grid");
  sweep->add_option("--modes", modes, "Comma-separated modes");
  sweep->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);
  sweep->add_flag("--traces", traces, "Also write trace.csv for every grid point");
  sweep->add_option("--seed", seed, "Random seed");
  sweep->add_option("--out", out_dir, "Output root (overridden by ISSF_WBC_OUT)");

  auto* check = app.add_subcommand("check", "Validate a scenario file");
  std::string check_path;
  check->add_option("scenario", check_path, "Scenario file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*check) {
      const auto sc = load_scenario(check_path);
      std::printf("%s: ok (%s, %d dof, %zu tasks, %zu obstacles, %zu self pairs)\n", check_path.c_str(),
                  sc.nominal.name.c_str(), sc.nominal.n_dof(), sc.setup.tasks.size(), sc.setup.obstacles.size(),
                  sc.setup.barriers.self_pairs.size());
      return 0;
    }
    const auto root = output_root(out_dir);
    if (*run) {
      const auto mode = parse_filter_mode(mode_name);
      if (!mode) throw CLI::ValidationError("--mode", "unknown mode '" + mode_name + "'");
      Scenario sc = with_mode(load_scenario(run_path), *mode, alpha, epsilon);
      if (seed) sc.setup.sim.seed = *seed;
      RunOptions ro;
      ro.out_root = root;
      ro.trace_constraints = trace_constraints;
      const auto r = run_scenario(sc, ro);
      print_run(r);
      return r.metrics.aborted ? 2 : 0;
    }
    if (*sweep) {
      Scenario sc = load_scenario(sweep_path);
      if (seed) sc.setup.sim.seed = *seed;
      SweepOptions so;
      so.jobs = jobs;
      so.out_root = root;
      so.write_traces = traces;
      const auto res = run_sweep(sc, parse_list(alphas), parse_list(epsilons), parse_modes(modes), so);
      std::printf("%-12s %6s %6s %7s %7s %10s %9s\n", "mode", "alpha", "eps", "events", "ratio", "min_h", "jitter");
      int failed = 0;
      for (const auto& p : res.points) {
        failed += p.failed;
        std::printf("%-12s %6s %6s %7d %7.3f %+10.5f %9.2f%s\n", to_string(p.mode), param_label(p.alpha).c_str(),
                    param_label(p.epsilon).c_str(), p.metrics.collision_events, p.remaining_collision_ratio,
                    p.metrics.min_collision_h, p.metrics.jitter, p.failed ? ("  FAILED: " + p.error).c_str() : "");
      }
      std::printf("wrote %s\n", (root / sc.name / "sweep.csv").string().c_str());
      return failed ? 2 : 0;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
