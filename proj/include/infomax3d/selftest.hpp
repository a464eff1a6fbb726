// Copyright 2026 The Infomax3D Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace infomax3d {

struct PropertyResult {
  std::string name;
  bool        passed = false;
  std::string detail;
};

//! Quick invariant suite: encoder invariances, loss identities and closed
//! forms, finite-difference gradient checks, frequency encoding, schedule
//! constants and conformer rules.
std::vector<PropertyResult> run_selftest(std::uint64_t seed = 0);

}  // namespace infomax3d
