// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "effcrn/loss.hpp"
#include "effcrn/mixer.hpp"
#include "effcrn/model.hpp"
#include "effcrn/stft.hpp"
#include "effcrn/wav.hpp"

namespace effcrn {

struct ManifestEntry {
  std::string clean;
  std::string noise;
  double snr_db = 0;
  std::string split;  // "train" or "val"
};

// Line format: clean_path noise_path snr_db split. '#' starts a comment.
// Paths are resolved relative to the manifest's directory by the loader.
std::vector<ManifestEntry> load_manifest(const std::string& path);

struct TrainConfig {
  int sequence_frames = 100;
  int batch_size = 16;
  float lr = 1e-4f;
  float lr_decay = 0.6f;
  int decay_patience = 4;   // stagnant epochs before a decay
  float lr_min = 1e-6f;     // stop when lr falls below this
  int stop_patience = 10;   // stagnant epochs before stopping
  int max_epochs = 70;
  int max_steps = 0;  // 0 = no cap
  unsigned seed = 1;
  float target_level_dbov = -26.f;
  int workers = 1;  // mixing/STFT worker threads, deterministic order
  LossConfig loss;
  std::string out_dir;  // checkpoints + log land here when non-empty
};

struct EpochLog {
  int epoch = 0;
  int steps = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_delta_snr = 0;
  double lr = 0;
  bool has_val = false;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double first_step_loss = 0;
  double last_step_loss = 0;
  double best_val_loss = 0;
  int total_steps = 0;
  std::string stop_reason;
  std::string best_checkpoint;  // empty when out_dir was empty
};

// Runs the BPTT training loop: 100-frame segments, per-segment state reset,
// Adam with validation-plateau decay and the three stopping rules. With no
// "val" entries in the manifest the schedule stays fixed and stopping falls
// to max_epochs/max_steps.
TrainResult train(Model& model, const std::string& manifest_path,
                  const TrainConfig& cfg,
                  const std::function<void(const std::string&)>& log_line = {});

// Leveled and mixed manifest entries, the corpus the trainer consumes.
struct PreparedCorpus {
  struct Item {
    std::vector<float> clean;
    std::vector<float> mixture;
    bool is_val = false;
  };
  std::vector<Item> items;
};

PreparedCorpus prepare_corpus(const std::string& manifest_path,
                              float target_level_dbov, int workers);

// Mean training-objective loss over every sequence of the corpus' chosen
// split, forward passes only.
double dataset_loss(Model& model, const PreparedCorpus& corpus,
                    int sequence_frames, const LossConfig& loss_cfg,
                    bool val_split = false);

// In-memory enhancement used for metrics and tests: stft -> masks with
// carried state -> bounded masking -> istft.
std::vector<float> enhance_samples(Model& model, std::span<const float> noisy,
                                   const FrameConfig& cfg);

struct EnhanceStats {
  std::int64_t frames = 0;
  double ms_per_frame = 0;       // steady state, first 10 frames excluded
  double realtime_factor = 0;    // frame period / processing time
};

// Streaming file-to-file enhancement with bounded memory.
EnhanceStats enhance_wav(Model& model, const std::string& in_path,
                         const std::string& out_path,
                         WavFormat out_format = WavFormat::pcm16);

}  // namespace effcrn
