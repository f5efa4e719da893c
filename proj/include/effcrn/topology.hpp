// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "effcrn/ops.hpp"

namespace effcrn {

// How the network reaches a power-of-two friendly frequency size: pad the
// input spectrum once up front (external), or pad odd sizes to even directly
// before each encoder block and drop the extra entries at the mirrored spot
// in the decoder (in_network).
enum class PaddingPolicy { external, in_network };

enum class LayerKind { conv, deconv, depthwise_skip, conv_lstm, gru };

struct LayerDesc {
  std::string name;
  LayerKind kind = LayerKind::conv;
  int in_freq = 0, out_freq = 0;
  int in_ch = 0, out_ch = 0;  // conv_lstm: out_ch is the hidden channel count
  int kernel = 0;
  int stride = 1;
  int pad_lo = 0, pad_hi = 0;  // deconv: crop_lo / crop_hi
  Activation act = Activation::linear;
  int gru_input = 0, gru_hidden = 0;

  bool operator==(const LayerDesc&) const = default;

  std::int64_t param_count() const;
  // FLOPs for one streaming frame at batch 1; one multiply-accumulate counts
  // as 2 FLOPs, biases, activations and elementwise adds as 1 FLOP/element.
  std::int64_t flops_per_frame() const;
};

struct ModelSpec {
  std::string variant;
  int base_filters = 32;       // F
  int kernel_freq = 12;        // N
  int input_bins = 257;        // K/2 + 1
  int model_input = 264;       // M
  int stages = 3;              // EDBlock count
  PaddingPolicy padding = PaddingPolicy::external;
  int clstm_count = 2;
  bool use_gru = false;
  int clstm_hidden = 0;  // 0 -> base_filters
  int gru_hidden = 0;    // 0 -> flattened bottleneck length
  float leaky_slope = 0.2f;
  int in_channels = 2;
  int out_channels = 2;

  bool operator==(const ModelSpec&) const = default;

  int external_pad() const { return model_input - input_bins; }
  int resolved_clstm_hidden() const {
    return clstm_hidden > 0 ? clstm_hidden : base_filters;
  }
  // Weighted layers: EDBlock convolutions + recurrent cells + output conv.
  int depth() const {
    return 4 * stages + clstm_count + (use_gru ? 1 : 0) + 1;
  }
};

struct PadPlan {
  std::vector<int> pad_bits;      // one 0/1 entry per encoder stage
  std::vector<int> raw_sizes;     // frequency size entering each stage
  std::vector<int> padded_sizes;  // size after the stage's pre-pad
  int bottleneck = 0;

  bool operator==(const PadPlan&) const = default;
};

// Derives the per-stage pad/crop plan. In external mode every stage input
// must already be even; in in-network mode odd inputs get one zero on the
// high-frequency side, mirrored by a crop in the decoder.
PadPlan plan_padding(int m_raw, int stages, PaddingPolicy mode);

struct EncoderStageDesc {
  int pre_pad = 0;
  LayerDesc conv1;
  LayerDesc down;
  LayerDesc skip;
};

struct DecoderStageDesc {
  LayerDesc up;
  LayerDesc conv;
  int post_crop = 0;
};

// Declarative layer table: forward pass, parameter count, and FLOP count are
// all derived from this one structure.
struct LayerGraph {
  ModelSpec spec;
  PadPlan plan;
  std::vector<EncoderStageDesc> encoder;
  std::vector<LayerDesc> bottleneck;
  std::vector<DecoderStageDesc> decoder;  // bottom stage first
  LayerDesc out_conv;

  std::vector<LayerDesc> layer_table() const;
  std::int64_t count_params() const;
  std::int64_t count_flops_per_frame() const;
  int depth() const;  // weighted layers, skips excluded
  // Layer-table equality (spec naming aside): same layers, same geometry.
  bool structurally_equal(const LayerGraph& other) const;
};

// Topology changes relative to FCRN15.
struct VariantChanges {
  bool deeper = false;           // +D: 5 EDBlocks
  bool in_network_pad = false;   // +P: pad inside the encoder, M = 260
  bool small_filters = false;    // +F: (F, N) = (27, 4)
  bool drop_second_clstm = false;  // -C
  bool add_gru = false;            // +G
};

ModelSpec fcrn15_spec();
// Applies a change set; only the combinations with published complexity
// figures are accepted.
ModelSpec apply_variant(const ModelSpec& base, const VariantChanges& changes);

// Parses "FCRN15", "EffCRN23", "EffCRN23lite" or "FCRN15" followed by
// +D/+P/+F/-C/+G tokens (the circled-operator spellings are accepted too).
ModelSpec spec_for_variant(const std::string& name);

LayerGraph build_graph(const ModelSpec& spec);

inline LayerGraph build_model(const std::string& variant) {
  return build_graph(spec_for_variant(variant));
}

// Published complexity totals used for reporting and verification.
struct ReferenceEntry {
  std::string variant;
  double params = 0;
  double flops_per_frame = 0;
};
const std::vector<ReferenceEntry>& reference_table();

std::string spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const std::string& json_text);
// Spec plus derived layer table, for reports and checkpoint headers.
std::string graph_to_json(const LayerGraph& graph);

}  // namespace effcrn
