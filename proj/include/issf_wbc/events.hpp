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

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace issf_wbc {

/// Run-level event counters plus a bounded message log.
struct EventLog {
  int dropped_rows = 0;
  int slack_relaxations = 0;
  int infeasible_qps = 0;
  int torque_clamps = 0;
  std::vector<std::string> messages;
  std::size_t max_messages = 200;

  void note(std::string message) {
    if (messages.size() < max_messages) messages.push_back(std::move(message));
  }
};

}  // namespace issf_wbc
