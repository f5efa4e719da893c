// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "effcrn/model.hpp"

namespace effcrn {

std::uint32_t crc32(const void* data, std::size_t size,
                    std::uint32_t seed = 0);

// Stable hash of a model's JSON spec; used to guard checkpoint resumption.
std::uint32_t spec_hash(const ModelSpec& spec);

// Checkpoint layout: magic, JSON header (spec + parameter table), raw
// little-endian float32 parameter blob, CRC32 of everything before it.
void save_checkpoint(Model& model, const std::string& path,
                     const std::string& metadata_json = "{}");

struct LoadedCheckpoint {
  std::unique_ptr<Model> model;
  std::string metadata_json;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace effcrn
