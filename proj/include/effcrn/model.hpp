// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <memory>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "effcrn/rnn.hpp"
#include "effcrn/topology.hpp"

namespace effcrn {

// Runtime instance of a LayerGraph: parameters plus the per-frame forward
// pass. Built models are immutable apart from optimizer updates; every
// inference session owns its RecurrentState.
template <typename T>
class ModelT {
 public:
  ModelT(LayerGraph graph, unsigned seed) : graph_(std::move(graph)) {
    std::mt19937 rng(seed);
    const ModelSpec& spec = graph_.spec;
    for (const auto& s : graph_.encoder) {
      EncoderStage stage;
      stage.conv1 = make_conv(s.conv1, rng);
      stage.down = make_conv(s.down, rng);
      stage.skip_w = ParameterT<T>(s.skip.name + ".weight",
                                   TensorT<T>::full({s.skip.out_ch}, T(1)));
      stage.skip_b = ParameterT<T>(s.skip.name + ".bias",
                                   TensorT<T>::zeros({s.skip.out_ch}));
      encoder_.push_back(std::move(stage));
    }
    for (const auto& c : graph_.bottleneck) {
      if (c.kind == LayerKind::conv_lstm) {
        cells_.emplace_back(ConvLSTMCellT<T>::create(c.name, c.in_ch, c.out_ch,
                                                     c.kernel, rng));
      } else {
        cells_.emplace_back(
            GRUCellT<T>::create(c.name, c.gru_input, c.gru_hidden, rng));
      }
    }
    for (const auto& s : graph_.decoder) {
      DecoderStage stage;
      stage.up = make_conv(s.up, rng);
      stage.conv = make_conv(s.conv, rng);
      decoder_.push_back(std::move(stage));
    }
    out_ = make_conv(graph_.out_conv, rng);
    slope_ = T(spec.leaky_slope);
  }

  const LayerGraph& graph() const { return graph_; }

  std::vector<ParameterT<T>*> parameters() {
    std::vector<ParameterT<T>*> out;
    for (auto& s : encoder_) {
      out.push_back(&s.conv1.kernel);
      out.push_back(&s.conv1.bias);
      out.push_back(&s.down.kernel);
      out.push_back(&s.down.bias);
      out.push_back(&s.skip_w);
      out.push_back(&s.skip_b);
    }
    for (auto& c : cells_) {
      if (auto* lstm = std::get_if<ConvLSTMCellT<T>>(&c)) {
        for (auto* p : lstm->parameters()) out.push_back(p);
      } else {
        for (auto* p : std::get<GRUCellT<T>>(c).parameters()) out.push_back(p);
      }
    }
    for (auto& s : decoder_) {
      out.push_back(&s.up.kernel);
      out.push_back(&s.up.bias);
      out.push_back(&s.conv.kernel);
      out.push_back(&s.conv.bias);
    }
    out.push_back(&out_.kernel);
    out.push_back(&out_.bias);
    return out;
  }

  std::int64_t parameter_numel() {
    std::int64_t n = 0;
    for (auto* p : parameters()) n += p->value.numel();
    return n;
  }

  RecurrentStateT<T> make_state(int batch) const {
    EFFCRN_CHECK(batch >= 1, UsageError, "batch must be >= 1");
    RecurrentStateT<T> state;
    state.owner = this;
    state.batch = batch;
    const int bn = graph_.plan.bottleneck;
    for (const auto& c : graph_.bottleneck) {
      typename RecurrentStateT<T>::CellState cs;
      if (c.kind == LayerKind::conv_lstm) {
        cs.h = VarT<T>(TensorT<T>::zeros({batch, bn, 1, c.out_ch}));
        cs.c = VarT<T>(TensorT<T>::zeros({batch, bn, 1, c.out_ch}));
      } else {
        cs.h = VarT<T>(TensorT<T>::zeros({batch, c.gru_hidden}));
      }
      state.cells.push_back(std::move(cs));
    }
    return state;
  }

  // Processes a sequence of frames in one pass: the convolutions cover the
  // whole time axis at once (kernels never span time), only the recurrent
  // cells step frame by frame. Input holds (Re, Im) of the non-redundant
  // spectrum, shape (input_bins,T,2) or (B,input_bins,T,2); returns the
  // unbounded mask tensor with the same shape. Recurrent state advances in
  // place; pass a tape to make the pass differentiable, nullptr for plain
  // inference.
  VarT<T> forward_sequence(const VarT<T>& frames, RecurrentStateT<T>& state,
                           TapeT<T>* tape) {
    EFFCRN_CHECK(state.owner == this, UsageError,
                 "recurrent state belongs to a different model");
    EFFCRN_CHECK(state.cells.size() == cells_.size(), UsageError,
                 "recurrent state is stale");
    const bool batched = frames.value.rank() == 4;
    VarT<T> x = batched ? frames
                        : reshape(frames, {1, frames.value.dim(0),
                                           frames.value.dim(1),
                                           frames.value.dim(2)});
    EFFCRN_CHECK(x.value.rank() == 4 &&
                     x.value.dim(1) == graph_.spec.input_bins &&
                     x.value.dim(3) == graph_.spec.in_channels,
                 ShapeError,
                 "frames must be (B," + std::to_string(graph_.spec.input_bins) +
                     ",T,2), got " + shape_str(frames.value.shape()));
    EFFCRN_CHECK(x.value.dim(0) == state.batch, UsageError,
                 "state batch does not match frame batch");

    if (graph_.spec.external_pad() > 0)
      x = pad_freq(x, 0, graph_.spec.external_pad());

    std::vector<VarT<T>> taps;
    for (size_t i = 0; i < encoder_.size(); ++i) {
      const auto& desc = graph_.encoder[i];
      auto& stage = encoder_[i];
      if (desc.pre_pad > 0) x = pad_freq(x, 0, desc.pre_pad);
      VarT<T> a = leaky(conv2d(x, use_param(tape, stage.conv1.kernel),
                               use_param(tape, stage.conv1.bias), 1,
                               PadMode::same));
      taps.push_back(a);
      x = leaky(conv2d(a, use_param(tape, stage.down.kernel),
                       use_param(tape, stage.down.bias), 2, PadMode::same));
    }

    const int steps = x.value.dim(2);
    for (size_t i = 0; i < cells_.size(); ++i) {
      auto& cs = state.cells[i];
      std::vector<VarT<T>> outs;
      outs.reserve(size_t(steps));
      if (auto* lstm = std::get_if<ConvLSTMCellT<T>>(&cells_[i])) {
        for (int t = 0; t < steps; ++t) {
          VarT<T> xt = steps == 1 ? x : slice_time(x, t);
          auto step = clstm_step(xt, cs.h, cs.c, *lstm, tape);
          cs.h = step.h;
          cs.c = step.c;
          outs.push_back(step.y);
        }
      } else {
        auto& gru = std::get<GRUCellT<T>>(cells_[i]);
        const int B = x.value.dim(0);
        for (int t = 0; t < steps; ++t) {
          VarT<T> xt = steps == 1 ? x : slice_time(x, t);
          auto step = gru_step(reshape(xt, {B, gru.input_size}), cs.h, gru, tape);
          cs.h = step.h;
          outs.push_back(reshape(step.y,
                                 {B, graph_.plan.bottleneck, 1,
                                  gru.hidden_size / graph_.plan.bottleneck}));
        }
      }
      x = steps == 1 ? outs.front() : concat_time(outs);
    }

    for (size_t d = 0; d < decoder_.size(); ++d) {
      const auto& desc = graph_.decoder[d];
      auto& stage = decoder_[d];
      const size_t enc_index = encoder_.size() - 1 - d;
      auto& enc = encoder_[enc_index];
      VarT<T> up = leaky(conv2d_transpose(
          x, use_param(tape, stage.up.kernel), use_param(tape, stage.up.bias),
          2, desc.up.pad_lo, desc.up.pad_hi));
      VarT<T> skip = depthwise_1x1(taps[enc_index], use_param(tape, enc.skip_w),
                                   use_param(tape, enc.skip_b));
      x = add(up, skip);
      x = leaky(conv2d(x, use_param(tape, stage.conv.kernel),
                       use_param(tape, stage.conv.bias), 1, PadMode::same));
      if (desc.post_crop > 0) x = crop_freq(x, 0, desc.post_crop);
    }

    x = conv2d(x, use_param(tape, out_.kernel), use_param(tape, out_.bias), 1,
               PadMode::same);
    if (graph_.spec.external_pad() > 0)
      x = crop_freq(x, 0, graph_.spec.external_pad());
    if (!batched)
      x = reshape(x, {x.value.dim(1), x.value.dim(2), x.value.dim(3)});
    return x;
  }

  // One streaming step, the T=1 case of forward_sequence.
  VarT<T> forward_frame(const VarT<T>& frame, RecurrentStateT<T>& state,
                        TapeT<T>* tape) {
    EFFCRN_CHECK(frame.value.rank() >= 3 &&
                     frame.value.dim(frame.value.rank() - 2) == 1,
                 ShapeError, "forward_frame expects a single frame");
    return forward_sequence(frame, state, tape);
  }

 private:
  struct ConvLayer {
    ParameterT<T> kernel;
    ParameterT<T> bias;
  };
  struct EncoderStage {
    ConvLayer conv1, down;
    ParameterT<T> skip_w, skip_b;
  };
  struct DecoderStage {
    ConvLayer up, conv;
  };

  VarT<T> leaky(const VarT<T>& x) const {
    return activation(x, Activation::leaky_relu, slope_);
  }

  static ConvLayer make_conv(const LayerDesc& d, std::mt19937& rng) {
    ConvLayer layer;
    const T limit =
        T(std::sqrt(6.0 / (double(d.kernel) * d.in_ch + double(d.kernel) * d.out_ch)));
    Shape kshape = d.kind == LayerKind::deconv
                       ? Shape{d.kernel, 1, d.out_ch, d.in_ch}
                       : Shape{d.kernel, 1, d.in_ch, d.out_ch};
    layer.kernel = ParameterT<T>(d.name + ".kernel",
                                 TensorT<T>::uniform(kshape, limit, rng));
    layer.bias = ParameterT<T>(d.name + ".bias", TensorT<T>::zeros({d.out_ch}));
    return layer;
  }

  LayerGraph graph_;
  std::vector<EncoderStage> encoder_;
  std::vector<std::variant<ConvLSTMCellT<T>, GRUCellT<T>>> cells_;
  std::vector<DecoderStage> decoder_;
  ConvLayer out_;
  T slope_ = T(0.2);
};

using Model = ModelT<float>;

}  // namespace effcrn
