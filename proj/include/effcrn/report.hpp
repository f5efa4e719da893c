// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>
#include <vector>

#include "effcrn/topology.hpp"

namespace effcrn {

struct AnalyzeRow {
  std::string variant;
  std::int64_t params = 0;
  double ref_params = 0;
  double param_dev_pct = 0;
  std::int64_t flops = 0;
  double ref_flops = 0;
  double flops_dev_pct = 0;
  int depth = 0;
};

struct AnalyzeDelta {
  std::string from, to;
  std::int64_t param_delta = 0;
  double ref_param_delta = 0;
  std::int64_t flops_delta = 0;
  double ref_flops_delta = 0;
};

struct AnalyzeReport {
  std::vector<AnalyzeRow> rows;
  std::vector<AnalyzeDelta> deltas;  // between published ablation pairs
};

// Empty variant list means the full published set.
AnalyzeReport analyze_variants(const std::vector<std::string>& variants);

std::string render_analyze_table(const AnalyzeReport& report);
std::string render_analyze_json_lines(const AnalyzeReport& report);

}  // namespace effcrn
