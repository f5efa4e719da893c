// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// effcrn - efficient convolutional recurrent networks for single-channel
// speech enhancement. Subcommands: analyze, enhance, train, selftest.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "effcrn/checkpoint.hpp"
#include "effcrn/report.hpp"
#include "effcrn/selftest.hpp"
#include "effcrn/train.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitUsage = 2;

int env_threads() {
  if (const char* v = std::getenv("EFFCRN_THREADS")) {
    const int n = std::atoi(v);
    if (n >= 1) return n;
  }
  return 1;
}

int cmd_analyze(const std::vector<std::string>& variants,
                const std::string& format, const std::string& dump_dir) {
  auto report = effcrn::analyze_variants(variants);
  if (format == "json-lines")
    std::cout << effcrn::render_analyze_json_lines(report);
  else
    std::cout << effcrn::render_analyze_table(report);
  if (!dump_dir.empty()) {
    std::filesystem::create_directories(dump_dir);
    for (const auto& row : report.rows) {
      const auto path =
          std::filesystem::path(dump_dir) / (row.variant + ".json");
      std::ofstream out(path);
      out << effcrn::graph_to_json(effcrn::build_model(row.variant)) << '\n';
      if (!out.good())
        throw effcrn::IoError("cannot write '" + path.string() + "'");
      std::cerr << "wrote " << path.string() << '\n';
    }
  }
  return kExitOk;
}

int cmd_enhance(const std::string& model_path, const std::string& in_path,
                const std::string& out_path, const std::string& format,
                bool float_out) {
  auto loaded = effcrn::load_checkpoint(model_path);
  auto stats = effcrn::enhance_wav(
      *loaded.model, in_path, out_path,
      float_out ? effcrn::WavFormat::float32 : effcrn::WavFormat::pcm16);
  if (format == "json-lines") {
    std::cout << nlohmann::json{{"frames", stats.frames},
                                {"ms_per_frame", stats.ms_per_frame},
                                {"realtime_factor", stats.realtime_factor}}
                     .dump()
              << '\n';
  } else {
    std::printf("%lld frames, %.3f ms/frame steady state, %.1fx realtime\n",
                static_cast<long long>(stats.frames), stats.ms_per_frame,
                stats.realtime_factor);
  }
  return kExitOk;
}

int cmd_train(const std::string& manifest, const std::string& variant,
              const std::string& out_dir, const std::string& resume,
              effcrn::TrainConfig cfg) {
  std::unique_ptr<effcrn::Model> model;
  const effcrn::ModelSpec spec = effcrn::spec_for_variant(variant);
  if (!resume.empty()) {
    auto loaded = effcrn::load_checkpoint(resume);
    if (effcrn::spec_hash(loaded.model->graph().spec) !=
        effcrn::spec_hash(spec))
      throw effcrn::UsageError(
          "checkpoint '" + resume + "' was trained as '" +
          loaded.model->graph().spec.variant + "', not '" + spec.variant +
          "' (spec hash mismatch)");
    model = std::move(loaded.model);
  } else {
    model = std::make_unique<effcrn::Model>(effcrn::build_graph(spec),
                                            cfg.seed);
  }
  cfg.out_dir = out_dir;
  cfg.workers = env_threads();
  auto result = effcrn::train(*model, manifest, cfg,
                              [](const std::string& line) {
                                std::cout << line << '\n' << std::flush;
                              });
  std::cerr << "stopped after " << result.total_steps << " steps ("
            << result.stop_reason << ")";
  if (!result.best_checkpoint.empty())
    std::cerr << ", best checkpoint at " << result.best_checkpoint;
  std::cerr << '\n';
  return kExitOk;
}

int cmd_selftest(const std::string& format) {
  auto results = effcrn::run_selftest();
  bool all_ok = true;
  for (const auto& r : results) {
    all_ok = all_ok && r.pass;
    if (format == "json-lines")
      std::cout << nlohmann::json{{"check", r.name},
                                  {"pass", r.pass},
                                  {"detail", r.detail}}
                       .dump()
                << '\n';
    else
      std::printf("[%s] %-42s %s\n", r.pass ? " ok " : "FAIL", r.name.c_str(),
                  r.detail.c_str());
  }
  return all_ok ? kExitOk : kExitCheckFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"efficient convolutional recurrent speech enhancement"};
  app.require_subcommand(1);
  std::string format = "table";

  auto* analyze = app.add_subcommand(
      "analyze", "parameter and FLOPs/frame accounting per variant");
  std::vector<std::string> variants;
  analyze->add_option("variants", variants,
                      "variant names (default: the full published set)");
  analyze->add_option("--format", format, "table or json-lines")
      ->check(CLI::IsMember({"table", "json-lines"}));
  std::string dump_dir;
  analyze->add_option("--dump-spec", dump_dir,
                      "also write each variant's spec + layer table as JSON "
                      "into this directory");

  auto* enhance =
      app.add_subcommand("enhance", "denoise a 16 kHz mono WAV file");
  std::string model_path, in_path, out_path;
  bool float_out = false;
  enhance->add_option("--model", model_path, "model checkpoint")->required();
  enhance->add_option("--in", in_path, "input WAV (16 kHz mono)")->required();
  enhance->add_option("--out", out_path, "output WAV")->required();
  enhance->add_flag("--float", float_out, "write 32-bit float samples");
  enhance->add_option("--format", format, "table or json-lines")
      ->check(CLI::IsMember({"table", "json-lines"}));

  auto* train = app.add_subcommand("train", "train a variant on a manifest");
  std::string manifest, variant = "EffCRN23lite", out_dir = "runs", resume;
  effcrn::TrainConfig cfg;
  train->add_option("--manifest", manifest, "dataset manifest")->required();
  train->add_option("--variant", variant, "model variant");
  train->add_option("--out", out_dir, "output directory");
  train->add_option("--resume", resume, "checkpoint to continue from");
  train->add_option("--seed", cfg.seed, "rng seed");
  train->add_option("--lr", cfg.lr, "initial learning rate");
  train->add_option("--batch", cfg.batch_size, "minibatch size");
  train->add_option("--seq-frames", cfg.sequence_frames,
                    "frames per training sequence");
  train->add_option("--max-steps", cfg.max_steps, "step cap (0 = none)");
  train->add_option("--epochs", cfg.max_epochs, "epoch cap");

  auto* selftest =
      app.add_subcommand("selftest", "run the built-in verification battery");
  selftest->add_option("--format", format, "table or json-lines")
      ->check(CLI::IsMember({"table", "json-lines"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (analyze->parsed()) return cmd_analyze(variants, format, dump_dir);
    if (enhance->parsed())
      return cmd_enhance(model_path, in_path, out_path, format, float_out);
    if (train->parsed())
      return cmd_train(manifest, variant, out_dir, resume, cfg);
    if (selftest->parsed()) return cmd_selftest(format);
  } catch (const effcrn::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckFailure;
  } catch (const effcrn::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckFailure;
  }
  return kExitUsage;
}
