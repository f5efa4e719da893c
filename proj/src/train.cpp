// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "effcrn/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "effcrn/adam.hpp"
#include "effcrn/checkpoint.hpp"
#include "effcrn/mask.hpp"
#include "effcrn/mixer.hpp"
#include "effcrn/wav.hpp"

namespace effcrn {

namespace {

namespace fs = std::filesystem;

void parallel_for_ordered(int n, int workers,
                          const std::function<void(int)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  const int count = std::min(workers, n);
  pool.reserve(size_t(count));
  for (int w = 0; w < count; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : pool) t.join();
}

struct SegmentRef {
  int entry = 0;
  std::int64_t offset = 0;  // sample offset of the segment
};

// (B,F,L,2) batch of spectra from sample segments.
Tensor batch_stft(const std::vector<PreparedCorpus::Item>& entries,
                  const std::vector<SegmentRef>& refs,
                  const std::vector<int>& picks, bool mixture,
                  std::int64_t seg_samples, const FrameConfig& fcfg) {
  const int B = int(picks.size());
  const int bins = num_bins(fcfg);
  const int L = int(num_frames(seg_samples, fcfg));
  Tensor batch = Tensor::uninitialized({B, bins, L, 2});
  std::vector<float> window(size_t(seg_samples), 0.f);
  for (int b = 0; b < B; ++b) {
    const SegmentRef& ref = refs[size_t(picks[size_t(b)])];
    const auto& src = mixture ? entries[size_t(ref.entry)].mixture
                              : entries[size_t(ref.entry)].clean;
    for (std::int64_t i = 0; i < seg_samples; ++i) {
      const std::int64_t idx = ref.offset + i;
      window[size_t(i)] =
          idx < std::int64_t(src.size()) ? src[size_t(idx)] : 0.f;
    }
    Tensor spec = stft(window, fcfg);
    std::copy(spec.data(), spec.data() + spec.numel(),
              batch.data() + std::int64_t(b) * spec.numel());
  }
  return batch;
}

}  // namespace

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream file(path);
  EFFCRN_CHECK(file.good(), IoError, "cannot open manifest '" + path + "'");
  const fs::path base = fs::path(path).parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(file, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream is(line);
    ManifestEntry e;
    std::string snr;
    if (!(is >> e.clean)) continue;  // blank line
    if (!(is >> e.noise >> snr >> e.split))
      throw UsageError("manifest '" + path + "' line " +
                       std::to_string(line_no) +
                       ": expected 'clean noise snr_db split'");
    try {
      size_t used = 0;
      e.snr_db = std::stod(snr, &used);
      EFFCRN_CHECK(used == snr.size(), UsageError, "");
    } catch (...) {
      throw UsageError("manifest '" + path + "' line " +
                       std::to_string(line_no) + ": bad snr_db '" + snr + "'");
    }
    if (e.split != "train" && e.split != "val")
      throw UsageError("manifest '" + path + "' line " +
                       std::to_string(line_no) + ": split must be train|val");
    e.clean = (base / e.clean).string();
    e.noise = (base / e.noise).string();
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<float> enhance_samples(Model& model, std::span<const float> noisy,
                                   const FrameConfig& fcfg) {
  Tensor spec = stft(noisy, fcfg);
  const int bins = spec.dim(0);
  const int L = spec.dim(1);
  auto state = model.make_state(1);
  VarT<float> noisy_seq(spec.reshaped({1, bins, L, 2}));
  VarT<float> mask = model.forward_sequence(noisy_seq, state, nullptr);
  VarT<float> est = bound_and_apply_mask(mask, noisy_seq);
  return istft(est.value.reshaped({bins, L, 2}), fcfg,
               std::int64_t(noisy.size()));
}

PreparedCorpus prepare_corpus(const std::string& manifest_path,
                              float target_level_dbov, int workers) {
  const FrameConfig fcfg = make_frame_config();
  auto manifest = load_manifest(manifest_path);
  EFFCRN_CHECK(!manifest.empty(), UsageError,
               "manifest '" + manifest_path + "' holds no usable entries");

  // Mixing and leveling, deterministic order regardless of worker count.
  PreparedCorpus corpus;
  corpus.items.resize(manifest.size());
  std::atomic<bool> failed{false};
  std::string failure;
  std::mutex failure_mutex;
  parallel_for_ordered(int(manifest.size()), workers, [&](int i) {
    try {
      const ManifestEntry& e = manifest[size_t(i)];
      auto speech = read_wav_checked(e.clean, fcfg.sample_rate);
      auto noise = read_wav_checked(e.noise, fcfg.sample_rate);
      EFFCRN_CHECK(!speech.empty() && !noise.empty(), DataError,
                   "empty audio in '" + e.clean + "' / '" + e.noise + "'");
      // loop the noise to cover the speech
      std::vector<float> looped(speech.size());
      for (size_t n = 0; n < looped.size(); ++n)
        looped[n] = noise[n % noise.size()];
      MixtureExample mix = mix_at_snr(speech, looped, e.snr_db,
                                      target_level_dbov, fcfg.sample_rate);
      corpus.items[size_t(i)].clean = std::move(mix.clean);
      corpus.items[size_t(i)].mixture = std::move(mix.mixture);
      corpus.items[size_t(i)].is_val = e.split == "val";
    } catch (const std::exception& ex) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      failed = true;
      if (failure.empty()) failure = ex.what();
    }
  });
  if (failed) throw DataError("dataset preparation failed: " + failure);
  return corpus;
}

namespace {

std::vector<SegmentRef> collect_segments(const PreparedCorpus& corpus,
                                         std::int64_t seg_samples,
                                         bool val_split) {
  std::vector<SegmentRef> refs;
  for (int i = 0; i < int(corpus.items.size()); ++i) {
    if (corpus.items[size_t(i)].is_val != val_split) continue;
    const auto len = std::int64_t(corpus.items[size_t(i)].clean.size());
    const std::int64_t count = std::max<std::int64_t>(1, len / seg_samples);
    for (std::int64_t s = 0; s < count; ++s)
      refs.push_back(SegmentRef{i, s * seg_samples});
  }
  return refs;
}

}  // namespace

double dataset_loss(Model& model, const PreparedCorpus& corpus,
                    int sequence_frames, const LossConfig& loss_cfg,
                    bool val_split) {
  const FrameConfig fcfg = make_frame_config();
  const std::int64_t seg_samples =
      std::int64_t(sequence_frames) * fcfg.frame_shift;
  auto refs = collect_segments(corpus, seg_samples, val_split);
  EFFCRN_CHECK(!refs.empty(), UsageError, "no sequences in the chosen split");
  double acc = 0;
  std::int64_t weight = 0;
  for (size_t at = 0; at < refs.size();) {
    const size_t take = std::min<size_t>(8, refs.size() - at);
    std::vector<int> picks(take);
    std::iota(picks.begin(), picks.end(), int(at));
    at += take;
    Tensor y_batch =
        batch_stft(corpus.items, refs, picks, true, seg_samples, fcfg);
    Tensor s_batch =
        batch_stft(corpus.items, refs, picks, false, seg_samples, fcfg);
    auto state = model.make_state(int(take));
    VarT<float> y(y_batch);
    VarT<float> mask = model.forward_sequence(y, state, nullptr);
    VarT<float> est = bound_and_apply_mask(mask, y);
    acc += double(compressed_loss(est, VarT<float>(s_batch), loss_cfg).value[0]) *
           double(take);
    weight += std::int64_t(take);
  }
  return acc / double(weight);
}

TrainResult train(Model& model, const std::string& manifest_path,
                  const TrainConfig& cfg,
                  const std::function<void(const std::string&)>& log_line) {
  EFFCRN_CHECK(cfg.sequence_frames >= 1 && cfg.batch_size >= 1, ConfigError,
               "sequence_frames and batch_size must be >= 1");
  const FrameConfig fcfg = make_frame_config();
  const std::int64_t seg_samples =
      std::int64_t(cfg.sequence_frames) * fcfg.frame_shift;

  PreparedCorpus corpus =
      prepare_corpus(manifest_path, cfg.target_level_dbov, cfg.workers);
  const auto& prepared = corpus.items;

  std::vector<SegmentRef> train_segments =
      collect_segments(corpus, seg_samples, /*val_split=*/false);
  std::vector<SegmentRef> val_segments =
      collect_segments(corpus, seg_samples, /*val_split=*/true);
  EFFCRN_CHECK(!train_segments.empty(), UsageError,
               "manifest '" + manifest_path + "' has no train entries");

  auto params = model.parameters();
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  Adam adam(params, adam_cfg);

  std::ofstream log_file;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    log_file.open(fs::path(cfg.out_dir) / "train_log.jsonl");
  }
  auto emit = [&](const nlohmann::json& j) {
    const std::string line = j.dump();
    if (log_file.is_open()) log_file << line << '\n' << std::flush;
    if (log_line) log_line(line);
  };
  emit({{"event", "start"},
        {"variant", model.graph().spec.variant},
        {"train_segments", train_segments.size()},
        {"val_segments", val_segments.size()},
        {"batch_size", cfg.batch_size},
        {"sequence_frames", cfg.sequence_frames},
        {"lr", cfg.lr},
        {"seed", cfg.seed}});

  auto run_batch = [&](const std::vector<SegmentRef>& refs,
                       const std::vector<int>& picks,
                       bool training) -> double {
    Tensor y_batch = batch_stft(prepared, refs, picks, /*mixture=*/true,
                                seg_samples, fcfg);
    Tensor s_batch = batch_stft(prepared, refs, picks, /*mixture=*/false,
                                seg_samples, fcfg);
    const int B = y_batch.dim(0);
    LossConfigT<float> loss_cfg = cfg.loss;
    if (!training) {
      auto state = model.make_state(B);
      VarT<float> y(y_batch);
      VarT<float> mask = model.forward_sequence(y, state, nullptr);
      VarT<float> est = bound_and_apply_mask(mask, y);
      return double(compressed_loss(est, VarT<float>(s_batch), loss_cfg)
                        .value[0]);
    }
    Tape tape;
    auto state = model.make_state(B);
    VarT<float> y(y_batch);
    VarT<float> mask = model.forward_sequence(y, state, &tape);
    VarT<float> est = bound_and_apply_mask(mask, y);
    VarT<float> loss = compressed_loss(est, VarT<float>(s_batch), loss_cfg);
    const double value = double(loss.value[0]);
    EFFCRN_CHECK(std::isfinite(value), DataError,
                 "non-finite training loss after " +
                     std::to_string(adam.steps()) + " steps");
    for (auto* p : params) p->zero_grad();
    tape.backward(loss);
    adam.step();
    return value;
  };

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  double best_tracked = std::numeric_limits<double>::infinity();
  int stagnant = 0, decay_wait = 0;
  bool stop = false;

  for (int epoch = 1; epoch <= cfg.max_epochs && !stop; ++epoch) {
    std::vector<int> order(train_segments.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937 shuffle_rng(cfg.seed * 1000003u + unsigned(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0;
    int epoch_steps = 0;
    for (size_t at = 0; at < order.size() && !stop;) {
      const size_t take =
          std::min(size_t(cfg.batch_size), order.size() - at);
      std::vector<int> picks(order.begin() + long(at),
                             order.begin() + long(at + take));
      at += take;
      const double loss = run_batch(train_segments, picks, /*training=*/true);
      if (result.total_steps == 0) result.first_step_loss = loss;
      result.last_step_loss = loss;
      epoch_loss += loss;
      ++epoch_steps;
      ++result.total_steps;
      if (cfg.max_steps > 0 && result.total_steps >= cfg.max_steps) {
        stop = true;
        result.stop_reason = "max_steps";
      }
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.steps = epoch_steps;
    entry.train_loss = epoch_steps ? epoch_loss / epoch_steps : 0.0;
    entry.lr = double(adam.lr());

    if (!val_segments.empty()) {
      entry.has_val = true;
      double val_loss = 0;
      int val_batches = 0;
      for (size_t at = 0; at < val_segments.size();) {
        const size_t take =
            std::min(size_t(cfg.batch_size), val_segments.size() - at);
        std::vector<int> picks(take);
        std::iota(picks.begin(), picks.end(), int(at));
        at += take;
        val_loss += run_batch(val_segments, picks, /*training=*/false);
        ++val_batches;
      }
      entry.val_loss = val_loss / val_batches;

      // Delta-SNR over a fixed subset of validation utterances.
      double dsnr = 0;
      int dsnr_count = 0;
      for (size_t i = 0; i < prepared.size() && dsnr_count < 3; ++i) {
        if (!prepared[i].is_val) continue;
        auto enhanced = enhance_samples(model, prepared[i].mixture, fcfg);
        dsnr += delta_snr(prepared[i].clean, prepared[i].mixture, enhanced,
                          fcfg.sample_rate)
                    .delta_db;
        ++dsnr_count;
      }
      entry.val_delta_snr = dsnr_count ? dsnr / dsnr_count : 0.0;
    }

    const double tracked = entry.has_val ? entry.val_loss : entry.train_loss;
    const bool improved = tracked < best_tracked;
    if (improved) {
      best_tracked = tracked;
      result.best_val_loss = tracked;
      stagnant = 0;
      decay_wait = 0;
      if (!cfg.out_dir.empty()) {
        result.best_checkpoint =
            (fs::path(cfg.out_dir) / "best.ckpt").string();
        nlohmann::json meta{{"epoch", epoch},
                            {"val_loss", tracked},
                            {"steps", result.total_steps}};
        save_checkpoint(model, result.best_checkpoint, meta.dump());
      }
    } else {
      ++stagnant;
      ++decay_wait;
    }

    // Plateau schedule: decay after decay_patience stagnant epochs, stop on
    // lr underflow, long stagnation, or the epoch cap. Without validation
    // data the schedule stays fixed.
    if (entry.has_val) {
      if (decay_wait >= cfg.decay_patience) {
        adam.set_lr(adam.lr() * cfg.lr_decay);
        decay_wait = 0;
      }
      if (adam.lr() < cfg.lr_min && !stop) {
        stop = true;
        result.stop_reason = "lr_below_min";
      }
      if (stagnant >= cfg.stop_patience && !stop) {
        stop = true;
        result.stop_reason = "stagnation";
      }
    }
    entry.lr = double(adam.lr());
    result.log.push_back(entry);

    nlohmann::json j{{"event", "epoch"},
                     {"epoch", entry.epoch},
                     {"steps", entry.steps},
                     {"train_loss", entry.train_loss},
                     {"lr", entry.lr}};
    if (entry.has_val) {
      j["val_loss"] = entry.val_loss;
      j["val_delta_snr"] = entry.val_delta_snr;
    }
    emit(j);
  }
  if (result.stop_reason.empty()) result.stop_reason = "max_epochs";

  if (!cfg.out_dir.empty()) {
    const std::string last = (fs::path(cfg.out_dir) / "last.ckpt").string();
    save_checkpoint(model, last,
                    nlohmann::json{{"steps", result.total_steps}}.dump());
    if (result.best_checkpoint.empty()) result.best_checkpoint = last;
  }
  emit({{"event", "stop"},
        {"reason", result.stop_reason},
        {"total_steps", result.total_steps},
        {"first_step_loss", result.first_step_loss},
        {"last_step_loss", result.last_step_loss}});
  return result;
}

EnhanceStats enhance_wav(Model& model, const std::string& in_path,
                         const std::string& out_path, WavFormat out_format) {
  WavReader reader(in_path);
  const FrameConfig fcfg = make_frame_config();
  EFFCRN_CHECK(reader.info().sample_rate == fcfg.sample_rate, UsageError,
               "'" + in_path + "' is sampled at " +
                   std::to_string(reader.info().sample_rate) +
                   " Hz, expected " + std::to_string(fcfg.sample_rate) +
                   " Hz (no resampling)");
  EFFCRN_CHECK(reader.info().channels == 1, UsageError,
               "'" + in_path + "' must be mono");

  WavWriter writer(out_path, fcfg.sample_rate, out_format);
  const int K = fcfg.dft_size;
  const int R = fcfg.frame_shift;
  const int bins = num_bins(fcfg);
  EFFCRN_CHECK(K == 2 * R, ConfigError, "streaming path assumes 50% shift");

  std::vector<float> window(static_cast<size_t>(K), 0.f);
  std::vector<float> hop(static_cast<size_t>(R));
  std::vector<float> spec(static_cast<size_t>(bins) * 2);
  std::vector<float> out_hop(static_cast<size_t>(R));
  IstftStream synth(fcfg);
  auto state = model.make_state(1);
  Tensor frame = Tensor::zeros({1, bins, 1, 2});

  std::int64_t len = 0;
  bool eof = false;
  auto read_hop = [&]() {
    std::int64_t got = 0;
    if (!eof) {
      got = reader.read(hop.data(), R);
      if (got < R) eof = true;
      len += got;
    }
    std::fill(hop.begin() + long(got), hop.end(), 0.f);
  };

  // Frame l covers samples [l*R, l*R+K); the first frame needs two hops.
  read_hop();
  std::copy(hop.begin(), hop.end(), window.begin());
  read_hop();
  std::copy(hop.begin(), hop.end(), window.begin() + R);
  EFFCRN_CHECK(len > 0, UsageError, "'" + in_path + "' holds no samples");

  EnhanceStats stats;
  double steady_seconds = 0;
  for (std::int64_t l = 0;; ++l) {
    const auto t0 = std::chrono::steady_clock::now();
    analyze_frame(window, fcfg, spec.data());
    for (int k = 0; k < bins; ++k) {
      frame.data()[2 * k] = spec[size_t(2 * k)];
      frame.data()[2 * k + 1] = spec[size_t(2 * k) + 1];
    }
    VarT<float> mask = model.forward_frame(VarT<float>(frame), state, nullptr);
    VarT<float> est = bound_and_apply_mask(mask, VarT<float>(frame));
    synth.push(est.value.data(), out_hop.data());
    const auto t1 = std::chrono::steady_clock::now();
    ++stats.frames;
    if (stats.frames > 10)
      steady_seconds += std::chrono::duration<double>(t1 - t0).count();

    // Samples [l*R, l*R+R) are final now; truncate at the signal length.
    const std::int64_t n = std::min<std::int64_t>(R, len - l * R);
    writer.write(std::span<const float>(out_hop.data(), size_t(n)));
    if (eof && (l + 1) * R >= len) break;
    read_hop();
    std::copy(window.begin() + R, window.end(), window.begin());
    std::copy(hop.begin(), hop.end(), window.end() - R);
  }
  writer.close();

  const std::int64_t steady_frames = std::max<std::int64_t>(stats.frames - 10, 1);
  stats.ms_per_frame = 1e3 * steady_seconds / double(steady_frames);
  const double frame_period_ms = 1e3 * double(R) / fcfg.sample_rate;
  stats.realtime_factor =
      stats.ms_per_frame > 0 ? frame_period_ms / stats.ms_per_frame : 0.0;
  return stats;
}

}  // namespace effcrn
