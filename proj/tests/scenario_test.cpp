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

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "issf_wbc/harness.hpp"
#include "issf_wbc/scenario.hpp"

namespace issf_wbc {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string data_path(const std::string& rel) { return std::string(ISSF_WBC_DATA_DIR) + "/" + rel; }

json minimal_doc() {
  return json::parse(R"({
    "format": "issf-wbc/scenario/v1",
    "name": "mini",
    "robot": "planar3.robot",
    "initial": {"q": [0.5, -1.0, -0.5]},
    "sim": {"duration": 0.05},
    "tasks": [{"name": "tool", "link": "link3", "point": [0.2, 0, 0]}],
    "barriers": {"self_pairs": "auto"}
  })");
}

Scenario parse(const json& doc) { return scenario_from_json(doc, "mini", data_path("robots")); }

std::string field_of(const json& doc) {
  try {
    parse(doc);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<no error>";
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("issf_wbc_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(Scenario, MinimalDefaults) {
  const auto sc = parse(minimal_doc());
  EXPECT_EQ(sc.name, "mini");
  EXPECT_EQ(sc.nominal.n_dof(), 3);
  EXPECT_EQ(sc.setup.filter.mode, FilterMode::IssfCbf);
  EXPECT_EQ(sc.setup.sim.mass_scale, 1.0);
  ASSERT_EQ(sc.setup.tasks.size(), 1u);
  // No trajectory: hold the initial tool position.
  EXPECT_EQ(sc.setup.tasks[0].trajectory.sample(1.0).velocity.norm(), 0.0);
  EXPECT_EQ(sc.setup.barriers.self_pairs.size(), default_self_pairs(sc.nominal).size());
}

TEST(Scenario, PerKindParameters) {
  auto doc = minimal_doc();
  doc["filter"] = json::parse(R"({"mode": "cbf", "alpha": {"self_collision": 7},
                                   "epsilon": {"workspace": "inf"}, "slack": {"policy": "hard-fail"}})");
  const auto sc = parse(doc);
  EXPECT_EQ(sc.setup.filter.mode, FilterMode::Cbf);
  EXPECT_EQ(sc.setup.filter.self_collision.alpha, 7.0);
  EXPECT_EQ(sc.setup.filter.object_collision.alpha, FilterConfig{}.object_collision.alpha);
  EXPECT_TRUE(std::isinf(sc.setup.filter.workspace.epsilon));
  EXPECT_EQ(sc.setup.filter.slack.kind, SlackPolicy::Kind::HardFail);
}

TEST(Scenario, ErrorsNameTheField) {
  {
    auto doc = minimal_doc();
    doc["filter"] = {{"mode", "magic"}};
    EXPECT_EQ(field_of(doc), "mini.filter.mode");
  }
  {
    auto doc = minimal_doc();
    doc["barriers"]["self_pairs"] = json::parse(R"([["tool", "nose"]])");
    EXPECT_EQ(field_of(doc), "mini.barriers.self_pairs[0][1]");
  }
  {
    auto doc = minimal_doc();
    doc["tasks"][0]["link"] = "link9";
    EXPECT_EQ(field_of(doc), "mini.tasks[0].link");
  }
  {
    auto doc = minimal_doc();
    doc["initial"]["q"] = json::array({0.0, 1.0});
    EXPECT_EQ(field_of(doc), "mini.initial.q");
  }
  {
    auto doc = minimal_doc();
    doc["sim"]["mass_scale"] = -1.2;
    EXPECT_EQ(field_of(doc), "mini.sim.mass_scale");
  }
  {
    auto doc = minimal_doc();
    doc["filter"] = {{"alpha", -1.0}};
    EXPECT_EQ(field_of(doc), "mini.filter.alpha");
  }
  {
    auto doc = minimal_doc();
    doc["dynwbc"] = {{"kp", json::array({1.0, 2.0})}};
    EXPECT_EQ(field_of(doc), "mini.dynwbc.kp");
  }
  {
    auto doc = minimal_doc();
    doc["tasks"][0]["trajectory"] =
        json::parse(R"({"type": "waypoints", "times": [0, 0.01], "points": [[0.5, 0, 0], [0.5, 0, 0]]})");
    EXPECT_EQ(field_of(doc).rfind("mini.tasks[0].trajectory", 0), 0u);
  }
  {
    auto doc = minimal_doc();
    doc["sim"]["integrator"] = 4;
    EXPECT_EQ(field_of(doc), "mini");
  }
}

TEST(Scenario, SyntaxErrorReportsLine) {
  const fs::path dir = fresh_dir("syntax");
  const fs::path file = dir / "broken.scenario";
  std::ofstream(file) << "{\n  \"name\": \"x\",\n  \"robot\": oops\n}\n";
  try {
    load_scenario(file.string());
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(e.field().find("broken.scenario:3:"), std::string::npos) << e.field();
  }
}

TEST(Scenario, BundledScenariosLoad) {
  for (const char* name : {"hand_track", "moving_obstacle", "hold_posture"}) {
    const auto sc = load_scenario(data_path(std::string("scenarios/") + name + ".scenario"));
    EXPECT_EQ(sc.name, name);
  }
}

TEST(Harness, CountsContiguousNegativeIntervals) {
  RunTrace t;
  for (double h : {0.1, -0.1, -0.2, 0.05, -0.01, 0.0, 0.3, -1.0}) {
    CycleRecord c;
    c.h = {h};
    t.cycles.push_back(c);
  }
  EXPECT_EQ(count_negative_intervals(t, 0), 3);
}

TEST(Harness, HoldPostureKeepsBarriersConstant) {
  const auto sc = load_scenario(data_path("scenarios/hold_posture.scenario"));
  const auto out = run_scenario(sc);
  ASSERT_FALSE(out.trace.aborted);
  ASSERT_FALSE(out.trace.cycles.empty());
  const auto& first = out.trace.cycles.front().h;
  for (const auto& c : out.trace.cycles)
    for (std::size_t b = 0; b < first.size(); ++b) ASSERT_NEAR(c.h[b], first[b], 1e-9);
}

TEST(Harness, WritesRunDirectory) {
  const fs::path root = fresh_dir("run");
  auto sc = load_scenario(data_path("scenarios/moving_obstacle.scenario"));
  sc.setup.sim.duration = 0.05;
  RunOptions opt;
  opt.out_root = root;
  opt.trace_constraints = true;
  const auto out = run_scenario(sc, opt);
  EXPECT_EQ(out.directory, root / "moving_obstacle" / "issf-cbf" / "10_10");
  for (const char* f : {"trace.csv", "torque.csv", "constraints.csv", "summary.json"})
    EXPECT_TRUE(fs::exists(out.directory / f)) << f;

  std::ifstream trace(out.directory / "trace.csv");
  std::string header;
  std::getline(trace, header);
  EXPECT_EQ(header.rfind("t,q0,q1,q2,qd0", 0), 0u);
  EXPECT_NE(header.find("h:object_collision:tool|ball"), std::string::npos);
  std::size_t rows = 0;
  for (std::string line; std::getline(trace, line);) ++rows;
  EXPECT_EQ(rows, out.trace.cycles.size());

  std::ifstream cons(out.directory / "constraints.csv");
  std::getline(cons, header);
  EXPECT_EQ(header, "t,kind,pair,h,rhs,active");

  std::ifstream summary(out.directory / "summary.json");
  const auto j = json::parse(summary);
  EXPECT_EQ(j.at("scenario"), "moving_obstacle");
  EXPECT_EQ(j.at("mode"), "issf-cbf");
}

TEST(Harness, OutputRootFromEnvironment) {
  ::setenv("ISSF_WBC_OUT", "/tmp/elsewhere", 1);
  EXPECT_EQ(output_root("out"), fs::path("/tmp/elsewhere"));
  ::unsetenv("ISSF_WBC_OUT");
  EXPECT_EQ(output_root("out"), fs::path("out"));
}

TEST(Harness, WithModeOverridesCollisionParameters) {
  const auto base = parse(minimal_doc());
  const auto s = with_mode(base, FilterMode::IssfCbf, 3.0, 4.0);
  EXPECT_EQ(s.setup.filter.self_collision.alpha, 3.0);
  EXPECT_EQ(s.setup.filter.object_collision.epsilon, 4.0);
  EXPECT_EQ(s.setup.filter.joint_limit.alpha, base.setup.filter.joint_limit.alpha);
}

TEST(Harness, PlainCbfJittersMoreThanIssf) {
  const auto base = load_scenario(data_path("scenarios/hand_track.scenario"));
  const auto cbf = run_scenario(with_mode(base, FilterMode::Cbf, 30.0)).metrics;
  const auto issf = run_scenario(with_mode(base, FilterMode::IssfCbf, 10.0, 10.0)).metrics;
  ASSERT_FALSE(cbf.aborted);
  ASSERT_FALSE(issf.aborted);
  EXPECT_GT(cbf.jitter, 2.0 * issf.jitter);
}

TEST(Sweep, ReferenceRatioIsOne) {
  auto sc = load_scenario(data_path("scenarios/hand_track.scenario"));
  sc.setup.sim.duration = 0.1;
  const auto r = run_sweep(sc, {10.0}, {10.0}, {FilterMode::WithoutCbf});
  ASSERT_EQ(r.points.size(), 1u);
  EXPECT_EQ(r.points[0].remaining_collision_ratio, 1.0);
}

TEST(Sweep, GridShapeAndDeterminism) {
  auto sc = load_scenario(data_path("scenarios/moving_obstacle.scenario"));
  sc.setup.sim.duration = 0.2;
  const std::vector<double> alphas{5.0, 10.0}, eps{10.0, 20.0};
  const std::vector<FilterMode> modes{FilterMode::Cbf, FilterMode::IssfCbf};
  const fs::path root = fresh_dir("sweep");
  SweepOptions opt;
  opt.jobs = 2;
  opt.out_root = root;
  const auto a = run_sweep(sc, alphas, eps, modes, opt);
  opt.jobs = 1;
  opt.out_root.reset();
  const auto b = run_sweep(sc, alphas, eps, modes, opt);
  ASSERT_EQ(a.points.size(), 1u + 2u + 4u);
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_FALSE(a.points[i].failed) << a.points[i].error;
    EXPECT_EQ(a.points[i].metrics.min_collision_h, b.points[i].metrics.min_collision_h);
    EXPECT_EQ(a.points[i].metrics.dbar, b.points[i].metrics.dbar);
    const double r = a.points[i].remaining_collision_ratio;
    EXPECT_TRUE(r >= 0.0 && r <= 1.0);
  }
  EXPECT_NE(a.find(FilterMode::IssfCbf, 10.0, 20.0), nullptr);
  EXPECT_TRUE(fs::exists(root / "moving_obstacle" / "sweep.csv"));
}

TEST(Sweep, RejectsEmptyGrid) {
  const auto sc = parse(minimal_doc());
  EXPECT_THROW(run_sweep(sc, {}, {10.0}, {FilterMode::Cbf}), std::invalid_argument);
}

}  // namespace
}  // namespace issf_wbc
