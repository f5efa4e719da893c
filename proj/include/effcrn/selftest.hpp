// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

namespace effcrn {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Built-in verification battery: per-layer gradient checks, conv/deconv
// adjointness on every geometry the models use, STFT round trip, pad-plan
// enumeration, and the complexity accounting against the published totals.
std::vector<CheckResult> run_selftest();

}  // namespace effcrn
