// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "effcrn/report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include <json.hpp>

namespace effcrn {

namespace {

// Ablation pairs whose published deltas the report calls out.
const std::vector<std::pair<std::string, std::string>> kDeltaPairs = {
    {"FCRN15", "FCRN15-C"},
    {"FCRN15-C", "FCRN15-C+G"},
    {"FCRN15", "FCRN15+D"},
    {"FCRN15+D", "FCRN15+D+P"},
    {"FCRN15", "FCRN15+F"},
    {"FCRN15+F", "FCRN15+F+D+P"},
};

const ReferenceEntry* find_reference(const std::string& variant) {
  for (const auto& e : reference_table())
    if (e.variant == variant) return &e;
  return nullptr;
}

std::string human(double v) {
  char buf[32];
  if (std::abs(v) >= 1e6)
    std::snprintf(buf, sizeof buf, "%.2fM", v / 1e6);
  else if (std::abs(v) >= 1e3)
    std::snprintf(buf, sizeof buf, "%.0fK", v / 1e3);
  else
    std::snprintf(buf, sizeof buf, "%.0f", v);
  return buf;
}

}  // namespace

AnalyzeReport analyze_variants(const std::vector<std::string>& variants) {
  std::vector<std::string> names = variants;
  if (names.empty())
    for (const auto& e : reference_table()) names.push_back(e.variant);

  AnalyzeReport report;
  std::map<std::string, AnalyzeRow> by_name;
  for (const auto& name : names) {
    auto graph = build_model(name);
    AnalyzeRow row;
    row.variant = graph.spec.variant;
    row.params = graph.count_params();
    row.flops = graph.count_flops_per_frame();
    row.depth = graph.depth();
    if (const ReferenceEntry* ref = find_reference(row.variant)) {
      row.ref_params = ref->params;
      row.ref_flops = ref->flops_per_frame;
      row.param_dev_pct = 100.0 * (double(row.params) - ref->params) / ref->params;
      row.flops_dev_pct =
          100.0 * (double(row.flops) - ref->flops_per_frame) / ref->flops_per_frame;
    }
    by_name[row.variant] = row;
    report.rows.push_back(row);
  }

  for (const auto& [from, to] : kDeltaPairs) {
    auto a = by_name.find(from);
    auto b = by_name.find(to);
    if (a == by_name.end() || b == by_name.end()) continue;
    AnalyzeDelta d;
    d.from = from;
    d.to = to;
    d.param_delta = b->second.params - a->second.params;
    d.flops_delta = b->second.flops - a->second.flops;
    const ReferenceEntry* ra = find_reference(from);
    const ReferenceEntry* rb = find_reference(to);
    if (ra && rb) {
      d.ref_param_delta = rb->params - ra->params;
      d.ref_flops_delta = rb->flops_per_frame - ra->flops_per_frame;
    }
    report.deltas.push_back(d);
  }
  return report;
}

std::string render_analyze_table(const AnalyzeReport& report) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %5s %12s %10s %7s %12s %10s %7s\n",
                "variant", "depth", "params", "published", "dev%", "flops/frame",
                "published", "dev%");
  os << line;
  os << std::string(82, '-') << '\n';
  for (const auto& r : report.rows) {
    std::snprintf(line, sizeof line,
                  "%-14s %5d %12lld %10s %6.1f%% %12lld %10s %6.1f%%\n",
                  r.variant.c_str(), r.depth, static_cast<long long>(r.params),
                  human(r.ref_params).c_str(), r.param_dev_pct,
                  static_cast<long long>(r.flops), human(r.ref_flops).c_str(),
                  r.flops_dev_pct);
    os << line;
  }
  if (!report.deltas.empty()) {
    os << "\nablation deltas (published in parentheses)\n";
    os << std::string(82, '-') << '\n';
    for (const auto& d : report.deltas) {
      std::snprintf(line, sizeof line,
                    "%-14s -> %-14s params %+12lld (%+9s)  flops %+12lld (%+9s)\n",
                    d.from.c_str(), d.to.c_str(),
                    static_cast<long long>(d.param_delta),
                    human(d.ref_param_delta).c_str(),
                    static_cast<long long>(d.flops_delta),
                    human(d.ref_flops_delta).c_str());
      os << line;
    }
  }
  return os.str();
}

std::string render_analyze_json_lines(const AnalyzeReport& report) {
  std::ostringstream os;
  for (const auto& r : report.rows) {
    os << nlohmann::json{{"type", "variant"},
                         {"variant", r.variant},
                         {"depth", r.depth},
                         {"params", r.params},
                         {"ref_params", r.ref_params},
                         {"param_dev_pct", r.param_dev_pct},
                         {"flops_per_frame", r.flops},
                         {"ref_flops_per_frame", r.ref_flops},
                         {"flops_dev_pct", r.flops_dev_pct}}
              .dump()
       << '\n';
  }
  for (const auto& d : report.deltas) {
    os << nlohmann::json{{"type", "delta"},
                         {"from", d.from},
                         {"to", d.to},
                         {"param_delta", d.param_delta},
                         {"ref_param_delta", d.ref_param_delta},
                         {"flops_delta", d.flops_delta},
                         {"ref_flops_delta", d.ref_flops_delta}}
              .dump()
       << '\n';
  }
  return os.str();
}

}  // namespace effcrn
