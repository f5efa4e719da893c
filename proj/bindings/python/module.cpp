// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cmath>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "effcrn/checkpoint.hpp"
#include "effcrn/level.hpp"
#include "effcrn/mask.hpp"
#include "effcrn/mixer.hpp"
#include "effcrn/report.hpp"
#include "effcrn/selftest.hpp"
#include "effcrn/synth.hpp"
#include "effcrn/train.hpp"

namespace py = pybind11;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

std::vector<float> to_samples(const FloatArray& a) {
  if (a.ndim() != 1) throw effcrn::UsageError("expected a 1-D sample array");
  return std::vector<float>(a.data(), a.data() + a.size());
}

FloatArray from_samples(const std::vector<float>& v) {
  return FloatArray({py::ssize_t(v.size())}, v.data());
}

effcrn::Tensor spec_from_array(const FloatArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 2)
    throw effcrn::UsageError("expected a (bins, frames, 2) spectrum array");
  effcrn::Tensor t = effcrn::Tensor::uninitialized(
      {int(a.shape(0)), int(a.shape(1)), 2});
  std::copy(a.data(), a.data() + a.size(), t.data());
  return t;
}

FloatArray spec_to_array(const effcrn::Tensor& t) {
  FloatArray out({py::ssize_t(t.dim(0)), py::ssize_t(t.dim(1)), py::ssize_t(2)});
  std::copy(t.data(), t.data() + t.numel(), out.mutable_data());
  return out;
}

// Python-facing model handle: a checkpointable network plus helpers that run
// whole signals through the streaming front end.
class PyModel {
 public:
  PyModel(const std::string& variant, unsigned seed)
      : model_(std::make_unique<effcrn::Model>(
            effcrn::build_graph(effcrn::spec_for_variant(variant)), seed)) {}
  explicit PyModel(std::unique_ptr<effcrn::Model> model)
      : model_(std::move(model)) {}

  static PyModel load(const std::string& path) {
    return PyModel(std::move(effcrn::load_checkpoint(path).model));
  }

  void save(const std::string& path) {
    effcrn::save_checkpoint(*model_, path);
  }

  std::string variant() const { return model_->graph().spec.variant; }
  std::int64_t num_params() const { return model_->graph().count_params(); }
  std::int64_t flops_per_frame() const {
    return model_->graph().count_flops_per_frame();
  }

  FloatArray enhance(const FloatArray& noisy) {
    const auto cfg = effcrn::make_frame_config();
    return from_samples(
        effcrn::enhance_samples(*model_, to_samples(noisy), cfg));
  }

  // Unbounded masks for a (257, L, 2) spectrum sequence, state carried
  // across the frames.
  FloatArray forward_mask(const FloatArray& spec) {
    effcrn::Tensor frames = spec_from_array(spec);
    auto state = model_->make_state(1);
    effcrn::VarT<float> x(
        frames.reshaped({1, frames.dim(0), frames.dim(1), 2}));
    auto mask = model_->forward_sequence(x, state, nullptr);
    return spec_to_array(
        mask.value.reshaped({frames.dim(0), frames.dim(1), 2}));
  }

  py::dict train(const std::string& manifest, py::kwargs kwargs) {
    effcrn::TrainConfig cfg;
    for (auto item : kwargs) {
      const std::string key = py::cast<std::string>(item.first);
      if (key == "sequence_frames") cfg.sequence_frames = py::cast<int>(item.second);
      else if (key == "batch_size") cfg.batch_size = py::cast<int>(item.second);
      else if (key == "lr") cfg.lr = py::cast<float>(item.second);
      else if (key == "max_steps") cfg.max_steps = py::cast<int>(item.second);
      else if (key == "max_epochs") cfg.max_epochs = py::cast<int>(item.second);
      else if (key == "seed") cfg.seed = py::cast<unsigned>(item.second);
      else if (key == "out_dir") cfg.out_dir = py::cast<std::string>(item.second);
      else if (key == "workers") cfg.workers = py::cast<int>(item.second);
      else throw effcrn::UsageError("unknown training option '" + key + "'");
    }
    auto result = effcrn::train(*model_, manifest, cfg);
    py::dict out;
    out["total_steps"] = result.total_steps;
    out["first_step_loss"] = result.first_step_loss;
    out["last_step_loss"] = result.last_step_loss;
    out["stop_reason"] = result.stop_reason;
    out["best_checkpoint"] = result.best_checkpoint;
    return out;
  }

 private:
  std::unique_ptr<effcrn::Model> model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "efficient convolutional recurrent speech enhancement core";

  py::register_exception<effcrn::Error>(m, "EffcrnError", PyExc_RuntimeError);

  m.def("variants", [] {
    std::vector<std::string> names;
    for (const auto& e : effcrn::reference_table()) names.push_back(e.variant);
    return names;
  });
  m.def("count_params", [](const std::string& variant) {
    return effcrn::build_model(variant).count_params();
  });
  m.def("count_flops_per_frame", [](const std::string& variant) {
    return effcrn::build_model(variant).count_flops_per_frame();
  });
  m.def("layer_table_json", [](const std::string& variant) {
    return effcrn::graph_to_json(effcrn::build_model(variant));
  });
  m.def("analyze", [](const std::vector<std::string>& variants) {
    auto report = effcrn::analyze_variants(variants);
    py::list rows;
    for (const auto& r : report.rows) {
      py::dict d;
      d["variant"] = r.variant;
      d["depth"] = r.depth;
      d["params"] = r.params;
      d["ref_params"] = r.ref_params;
      d["param_dev_pct"] = r.param_dev_pct;
      d["flops_per_frame"] = r.flops;
      d["ref_flops_per_frame"] = r.ref_flops;
      d["flops_dev_pct"] = r.flops_dev_pct;
      rows.append(d);
    }
    return rows;
  }, py::arg("variants") = std::vector<std::string>{});

  m.def("stft", [](const FloatArray& signal) {
    return spec_to_array(
        effcrn::stft(to_samples(signal), effcrn::make_frame_config()));
  });
  m.def("istft", [](const FloatArray& spec, std::int64_t num_samples) {
    return from_samples(effcrn::istft(spec_from_array(spec),
                                      effcrn::make_frame_config(),
                                      num_samples));
  }, py::arg("spec"), py::arg("num_samples") = -1);

  m.def("bound_mask", [](const FloatArray& mask) {
    return spec_to_array(
        effcrn::bound_mask(effcrn::VarT<float>(spec_from_array(mask))).value);
  });
  m.def("compressed_loss",
        [](const FloatArray& est, const FloatArray& tgt, float compression,
           float blend) {
          effcrn::LossConfigT<float> cfg;
          cfg.compression = compression;
          cfg.blend = blend;
          return effcrn::compressed_loss(
                     effcrn::VarT<float>(spec_from_array(est)),
                     effcrn::VarT<float>(spec_from_array(tgt)), cfg)
              .value[0];
        },
        py::arg("estimate"), py::arg("target"), py::arg("compression") = 0.3f,
        py::arg("blend") = 0.3f);

  m.def("active_speech_level", [](const FloatArray& samples, int sample_rate) {
    return effcrn::active_speech_level(to_samples(samples), sample_rate);
  }, py::arg("samples"), py::arg("sample_rate") = 16000);
  m.def("mix_at_snr",
        [](const FloatArray& speech, const FloatArray& noise, double snr_db,
           double target_level_dbov) {
          auto mix = effcrn::mix_at_snr(to_samples(speech), to_samples(noise),
                                        snr_db, target_level_dbov, 16000);
          py::dict out;
          out["clean"] = from_samples(mix.clean);
          out["noise"] = from_samples(mix.noise);
          out["mixture"] = from_samples(mix.mixture);
          out["speech_gain"] = mix.speech_gain;
          out["noise_gain"] = mix.noise_gain;
          return out;
        },
        py::arg("speech"), py::arg("noise"), py::arg("snr_db"),
        py::arg("target_level_dbov") = -26.0);
  m.def("delta_snr",
        [](const FloatArray& clean, const FloatArray& noisy,
           const FloatArray& enhanced) {
          auto d = effcrn::delta_snr(to_samples(clean), to_samples(noisy),
                                     to_samples(enhanced), 16000);
          py::dict out;
          out["snr_in_db"] = d.snr_in_db;
          out["snr_out_db"] = d.snr_out_db;
          out["delta_db"] = d.delta_db;
          out["clamped"] = d.clamped;
          return out;
        });

  m.def("make_synthetic_corpus", &effcrn::make_synthetic_corpus,
        py::arg("dir"), py::arg("num_utterances"), py::arg("seed"),
        py::arg("seconds") = 1.8, py::arg("sample_rate") = 16000);

  m.def("selftest", [] {
    py::list out;
    for (const auto& r : effcrn::run_selftest()) {
      py::dict d;
      d["check"] = r.name;
      d["pass"] = r.pass;
      d["detail"] = r.detail;
      out.append(d);
    }
    return out;
  });

  py::class_<PyModel>(m, "Model")
      .def(py::init<const std::string&, unsigned>(), py::arg("variant"),
           py::arg("seed") = 1)
      .def_static("load", &PyModel::load)
      .def("save", &PyModel::save)
      .def_property_readonly("variant", &PyModel::variant)
      .def_property_readonly("num_params", &PyModel::num_params)
      .def_property_readonly("flops_per_frame", &PyModel::flops_per_frame)
      .def("enhance", &PyModel::enhance)
      .def("forward_mask", &PyModel::forward_mask)
      .def("train", &PyModel::train, py::arg("manifest"));
}
