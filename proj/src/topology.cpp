// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "effcrn/topology.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <json.hpp>

namespace effcrn {

namespace {

int round_up(int value, int multiple) {
  return ((value + multiple - 1) / multiple) * multiple;
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

std::string kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::deconv: return "deconv";
    case LayerKind::depthwise_skip: return "depthwise_skip";
    case LayerKind::conv_lstm: return "conv_lstm";
    case LayerKind::gru: return "gru";
  }
  return "?";
}

}  // namespace

std::int64_t LayerDesc::param_count() const {
  switch (kind) {
    case LayerKind::conv:
    case LayerKind::deconv:
      return std::int64_t(kernel) * in_ch * out_ch + out_ch;
    case LayerKind::depthwise_skip:
      return 2 * std::int64_t(out_ch);
    case LayerKind::conv_lstm:
      return 4 * (std::int64_t(kernel) * (in_ch + out_ch) * out_ch + out_ch);
    case LayerKind::gru:
      return 3 * (std::int64_t(gru_input + gru_hidden) * gru_hidden + gru_hidden);
  }
  return 0;
}

std::int64_t LayerDesc::flops_per_frame() const {
  const std::int64_t out_elems = std::int64_t(out_freq) * out_ch;
  const std::int64_t act_cost = (act == Activation::linear) ? 0 : out_elems;
  switch (kind) {
    case LayerKind::conv:
      return 2 * out_elems * kernel * in_ch + out_elems + act_cost;
    case LayerKind::deconv:
      return 2 * std::int64_t(in_freq) * kernel * in_ch * out_ch + out_elems +
             act_cost;
    case LayerKind::depthwise_skip:
      // scale (2) + bias (1) + add into decoder path (1)
      return 4 * out_elems;
    case LayerKind::conv_lstm: {
      const std::int64_t gate_macs =
          std::int64_t(out_freq) * out_ch * kernel * (in_ch + out_ch);
      // 4 gate biases + 4 gate activations + cell/hidden elementwise updates
      return 4 * 2 * gate_macs + 13 * out_elems;
    }
    case LayerKind::gru: {
      const std::int64_t macs =
          std::int64_t(gru_input + gru_hidden) * gru_hidden;
      return 3 * 2 * macs + 11 * std::int64_t(gru_hidden);
    }
  }
  return 0;
}

PadPlan plan_padding(int m_raw, int stages, PaddingPolicy mode) {
  EFFCRN_CHECK(m_raw >= 2 && stages >= 1, ConfigError,
               "padding plan needs m_raw >= 2 and stages >= 1");
  PadPlan plan;
  int size = m_raw;
  for (int s = 0; s < stages; ++s) {
    EFFCRN_CHECK(size >= 2, ConfigError,
                 "frequency size collapses before stage " + std::to_string(s + 1));
    int pad = 0;
    if (size % 2 != 0) {
      EFFCRN_CHECK(mode == PaddingPolicy::in_network, ConfigError,
                   "input size " + std::to_string(m_raw) + " cannot reach " +
                       std::to_string(stages) + " downsampling stages without "
                       "in-network padding");
      pad = 1;
    }
    plan.raw_sizes.push_back(size);
    plan.pad_bits.push_back(pad);
    plan.padded_sizes.push_back(size + pad);
    size = (size + pad) / 2;
  }
  plan.bottleneck = size;
  return plan;
}

ModelSpec fcrn15_spec() {
  ModelSpec spec;
  spec.variant = "FCRN15";
  spec.base_filters = 32;
  spec.kernel_freq = 12;
  spec.model_input = 264;
  spec.stages = 3;
  spec.padding = PaddingPolicy::external;
  spec.clstm_count = 2;
  spec.use_gru = false;
  return spec;
}

ModelSpec apply_variant(const ModelSpec& base, const VariantChanges& ch) {
  EFFCRN_CHECK(base.variant == "FCRN15", ConfigError,
               "variant changes apply to the FCRN15 base");
  // Only change sets with published complexity figures are valid.
  const std::set<std::string> supported = {
      "", "C", "CG", "D", "DP", "F", "DFP", "CDFGP"};
  std::string key;
  if (ch.drop_second_clstm) key += 'C';
  if (ch.deeper) key += 'D';
  if (ch.small_filters) key += 'F';
  if (ch.add_gru) key += 'G';
  if (ch.in_network_pad) key += 'P';
  EFFCRN_CHECK(supported.count(key) != 0, ConfigError,
               "unsupported change combination");

  ModelSpec spec = base;
  if (ch.deeper) spec.stages = 5;
  if (ch.in_network_pad) spec.padding = PaddingPolicy::in_network;
  if (ch.small_filters) {
    spec.base_filters = 27;
    spec.kernel_freq = 4;
  }
  if (ch.drop_second_clstm) spec.clstm_count = 1;
  if (ch.add_gru) spec.use_gru = true;
  // External mode pads the input once so every stage halves exactly;
  // in-network mode only needs two free halvings up front.
  spec.model_input =
      spec.padding == PaddingPolicy::external
          ? round_up(spec.input_bins, 1 << spec.stages)
          : round_up(spec.input_bins, 4);
  // published spellings of the supported change sets
  static const std::map<std::string, std::string> canonical = {
      {"", ""},        {"C", "-C"},         {"CG", "-C+G"},
      {"D", "+D"},     {"DP", "+D+P"},      {"F", "+F"},
      {"DFP", "+F+D+P"}, {"CDFGP", "+F+D+P-C+G"}};
  spec.variant = base.variant + canonical.at(key);
  return spec;
}

ModelSpec spec_for_variant(const std::string& name) {
  // Normalize the circled-operator spellings to +X / -X tokens.
  std::string canon;
  for (size_t i = 0; i < name.size();) {
    if (name.compare(i, 3, "⊕") == 0) {  // circled plus
      canon += '+';
      i += 3;
    } else if (name.compare(i, 3, "⊖") == 0) {  // circled minus
      canon += '-';
      i += 3;
    } else {
      canon += name[i];
      ++i;
    }
  }
  if (canon == "EffCRN23" || canon == "EffCRN23lite") {
    VariantChanges all{true, true, true, true, true};
    ModelSpec spec = apply_variant(fcrn15_spec(), all);
    spec.variant = canon;
    if (canon == "EffCRN23lite") spec.base_filters = 17;
    return spec;
  }
  const std::string base = "FCRN15";
  EFFCRN_CHECK(canon.compare(0, base.size(), base) == 0, ConfigError,
               "unknown variant '" + name + "'");
  VariantChanges ch;
  for (size_t i = base.size(); i < canon.size(); i += 2) {
    EFFCRN_CHECK(i + 1 < canon.size() &&
                     (canon[i] == '+' || canon[i] == '-'),
                 ConfigError, "unknown variant '" + name + "'");
    const bool plus = canon[i] == '+';
    switch (canon[i + 1]) {
      case 'D': EFFCRN_CHECK(plus, ConfigError, "change D is additive"); ch.deeper = true; break;
      case 'P': EFFCRN_CHECK(plus, ConfigError, "change P is additive"); ch.in_network_pad = true; break;
      case 'F': EFFCRN_CHECK(plus, ConfigError, "change F is additive"); ch.small_filters = true; break;
      case 'G': EFFCRN_CHECK(plus, ConfigError, "change G is additive"); ch.add_gru = true; break;
      case 'C': EFFCRN_CHECK(!plus, ConfigError, "change C removes the second CLSTM"); ch.drop_second_clstm = true; break;
      default:
        throw ConfigError("unknown variant '" + name + "'");
    }
  }
  return apply_variant(fcrn15_spec(), ch);
}

LayerGraph build_graph(const ModelSpec& spec) {
  EFFCRN_CHECK(spec.base_filters >= 1 && spec.kernel_freq >= 1 &&
                   spec.stages >= 1,
               ConfigError, "invalid model spec");
  EFFCRN_CHECK(spec.model_input >= spec.input_bins, ConfigError,
               "model input smaller than the spectrum");
  EFFCRN_CHECK(spec.clstm_count >= 1 && spec.clstm_count <= 2, ConfigError,
               "bottleneck needs one or two CLSTMs");
  EFFCRN_CHECK(!(spec.use_gru && spec.clstm_count == 2), ConfigError,
               "GRU replaces the second CLSTM");

  LayerGraph g;
  g.spec = spec;
  g.plan = plan_padding(spec.model_input, spec.stages, spec.padding);

  const int F = spec.base_filters;
  const int N = spec.kernel_freq;
  const int hidden = spec.resolved_clstm_hidden();

  auto leaky = Activation::leaky_relu;
  for (int i = 1; i <= spec.stages; ++i) {
    EncoderStageDesc stage;
    stage.pre_pad = g.plan.pad_bits[size_t(i - 1)];
    const int fin = g.plan.padded_sizes[size_t(i - 1)];
    const int in_ch = (i == 1) ? spec.in_channels : (i - 1) * F;
    const int out_ch = i * F;
    const auto geom1 = detail::conv_geometry(fin, N, 1, PadMode::same);
    stage.conv1 = {"enc" + std::to_string(i) + ".conv1", LayerKind::conv,
                   fin,  fin,  in_ch, out_ch, N, 1, geom1.pad_lo, geom1.pad_hi,
                   leaky};
    const auto geom2 = detail::conv_geometry(fin, N, 2, PadMode::same);
    stage.down = {"enc" + std::to_string(i) + ".down", LayerKind::conv,
                  fin,  fin / 2, out_ch, out_ch, N, 2, geom2.pad_lo,
                  geom2.pad_hi, leaky};
    stage.skip = {"skip" + std::to_string(i), LayerKind::depthwise_skip,
                  fin,  fin,  out_ch, out_ch, 1, 1, 0, 0, Activation::linear};
    g.encoder.push_back(stage);
  }

  const int bn = g.plan.bottleneck;
  int bottleneck_ch = spec.stages * F;
  for (int c = 0; c < spec.clstm_count; ++c) {
    LayerDesc cell{"clstm" + std::to_string(c + 1), LayerKind::conv_lstm,
                   bn,  bn,  bottleneck_ch, hidden, N, 1, 0, 0,
                   Activation::linear};
    const auto geom = detail::conv_geometry(bn, N, 1, PadMode::same);
    cell.pad_lo = geom.pad_lo;
    cell.pad_hi = geom.pad_hi;
    g.bottleneck.push_back(cell);
    bottleneck_ch = hidden;
  }
  if (spec.use_gru) {
    const int flat = bn * bottleneck_ch;
    const int gru_hidden = spec.gru_hidden > 0 ? spec.gru_hidden : flat;
    EFFCRN_CHECK(gru_hidden % bn == 0, ConfigError,
                 "GRU hidden size must map back onto the bottleneck grid");
    LayerDesc cell{"gru", LayerKind::gru, bn, bn, bottleneck_ch,
                   gru_hidden / bn, 0, 1, 0, 0, Activation::linear,
                   flat, gru_hidden};
    g.bottleneck.push_back(cell);
    bottleneck_ch = gru_hidden / bn;
  }

  int dec_in_ch = bottleneck_ch;
  for (int i = spec.stages; i >= 1; --i) {
    DecoderStageDesc stage;
    const int fin = g.plan.padded_sizes[size_t(i - 1)];
    const int out_ch = i * F;
    // Crop mirroring the encoder's strided same-pad keeps the transposed
    // convolution the exact adjoint of the matching downsampling conv.
    const auto geom = detail::conv_geometry(fin, N, 2, PadMode::same);
    stage.up = {"dec" + std::to_string(i) + ".up", LayerKind::deconv,
                fin / 2, fin, dec_in_ch, out_ch, N, 2, geom.pad_lo,
                geom.pad_hi, leaky};
    const auto geom1 = detail::conv_geometry(fin, N, 1, PadMode::same);
    stage.conv = {"dec" + std::to_string(i) + ".conv", LayerKind::conv,
                  fin,  fin,  out_ch, out_ch, N, 1, geom1.pad_lo, geom1.pad_hi,
                  leaky};
    stage.post_crop = g.plan.pad_bits[size_t(i - 1)];
    g.decoder.push_back(stage);
    dec_in_ch = out_ch;
  }

  const int top = spec.model_input;
  const auto geom_out = detail::conv_geometry(top, N, 1, PadMode::same);
  g.out_conv = {"out.conv", LayerKind::conv, top, top, F, spec.out_channels,
                N, 1, geom_out.pad_lo, geom_out.pad_hi, Activation::linear};
  return g;
}

std::vector<LayerDesc> LayerGraph::layer_table() const {
  std::vector<LayerDesc> table;
  for (const auto& s : encoder) {
    table.push_back(s.conv1);
    table.push_back(s.skip);
    table.push_back(s.down);
  }
  for (const auto& c : bottleneck) table.push_back(c);
  for (const auto& s : decoder) {
    table.push_back(s.up);
    table.push_back(s.conv);
  }
  table.push_back(out_conv);
  return table;
}

std::int64_t LayerGraph::count_params() const {
  std::int64_t total = 0;
  for (const auto& l : layer_table()) total += l.param_count();
  return total;
}

std::int64_t LayerGraph::count_flops_per_frame() const {
  std::int64_t total = 0;
  for (const auto& l : layer_table()) total += l.flops_per_frame();
  return total;
}

int LayerGraph::depth() const {
  int d = 0;
  for (const auto& l : layer_table())
    if (l.kind != LayerKind::depthwise_skip) ++d;
  return d;
}

bool LayerGraph::structurally_equal(const LayerGraph& other) const {
  return layer_table() == other.layer_table();
}

const std::vector<ReferenceEntry>& reference_table() {
  static const std::vector<ReferenceEntry> table = {
      {"FCRN15", 875e3, 123e6},
      {"EffCRN23", 997e3, 41e6},
      {"EffCRN23lite", 396e3, 16e6},
      {"FCRN15-C", 777e3, 112e6},
      {"FCRN15-C+G", 7400e3, 125e6},
      {"FCRN15+D", 2800e3, 183e6},
      {"FCRN15+D+P", 2800e3, 172e6},
      {"FCRN15+F", 209e3, 29e6},
      {"FCRN15+F+D+P", 665e3, 41e6},
  };
  return table;
}

namespace {

nlohmann::json spec_json(const ModelSpec& s) {
  return nlohmann::json{
      {"variant", s.variant},
      {"base_filters", s.base_filters},
      {"kernel_freq", s.kernel_freq},
      {"input_bins", s.input_bins},
      {"model_input", s.model_input},
      {"stages", s.stages},
      {"padding", s.padding == PaddingPolicy::external ? "external" : "in_network"},
      {"clstm_count", s.clstm_count},
      {"use_gru", s.use_gru},
      {"clstm_hidden", s.clstm_hidden},
      {"gru_hidden", s.gru_hidden},
      {"leaky_slope", s.leaky_slope},
      {"in_channels", s.in_channels},
      {"out_channels", s.out_channels},
  };
}

}  // namespace

std::string spec_to_json(const ModelSpec& spec) {
  return spec_json(spec).dump(2);
}

ModelSpec spec_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad model spec json: ") + e.what());
  }
  try {
    ModelSpec s;
    s.variant = j.at("variant").get<std::string>();
    s.base_filters = j.at("base_filters").get<int>();
    s.kernel_freq = j.at("kernel_freq").get<int>();
    s.input_bins = j.at("input_bins").get<int>();
    s.model_input = j.at("model_input").get<int>();
    s.stages = j.at("stages").get<int>();
    s.padding = j.at("padding").get<std::string>() == "external"
                    ? PaddingPolicy::external
                    : PaddingPolicy::in_network;
    s.clstm_count = j.at("clstm_count").get<int>();
    s.use_gru = j.at("use_gru").get<bool>();
    s.clstm_hidden = j.at("clstm_hidden").get<int>();
    s.gru_hidden = j.at("gru_hidden").get<int>();
    s.leaky_slope = j.at("leaky_slope").get<float>();
    s.in_channels = j.at("in_channels").get<int>();
    s.out_channels = j.at("out_channels").get<int>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad model spec json: ") + e.what());
  }
}

std::string graph_to_json(const LayerGraph& g) {
  nlohmann::json j;
  j["spec"] = spec_json(g.spec);
  j["pad_bits"] = g.plan.pad_bits;
  j["bottleneck_freq"] = g.plan.bottleneck;
  j["depth"] = g.depth();
  j["params"] = g.count_params();
  j["flops_per_frame"] = g.count_flops_per_frame();
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : g.layer_table()) {
    layers.push_back({
        {"name", l.name},
        {"kind", kind_name(l.kind)},
        {"in_freq", l.in_freq},
        {"out_freq", l.out_freq},
        {"in_ch", l.in_ch},
        {"out_ch", l.out_ch},
        {"kernel", l.kernel},
        {"stride", l.stride},
        {"activation", activation_name(l.act)},
        {"params", l.param_count()},
        {"flops_per_frame", l.flops_per_frame()},
    });
  }
  j["layers"] = std::move(layers);
  return j.dump(2);
}

}  // namespace effcrn
