// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "effcrn/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

namespace effcrn {

namespace {

constexpr char kMagic[8] = {'E', 'F', 'F', 'C', 'R', 'N', '0', '1'};

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k)
      c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : (c >> 1);
    table[i] = c;
  }
  return table;
}

void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

std::uint32_t parse_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= std::uint32_t(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

std::uint64_t parse_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= std::uint64_t(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

static_assert(std::endian::native == std::endian::little,
              "checkpoint blob assumes a little-endian host");

}  // namespace

std::uint32_t crc32(const void* data, std::size_t size, std::uint32_t seed) {
  static const auto table = make_crc_table();
  std::uint32_t c = seed ^ 0xFFFFFFFFu;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) c = table[(c ^ p[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

std::uint32_t spec_hash(const ModelSpec& spec) {
  const std::string json = spec_to_json(spec);
  return crc32(json.data(), json.size());
}

void save_checkpoint(Model& model, const std::string& path,
                     const std::string& metadata_json) {
  nlohmann::json header;
  header["spec"] = nlohmann::json::parse(spec_to_json(model.graph().spec));
  header["spec_hash"] = spec_hash(model.graph().spec);
  header["metadata"] = nlohmann::json::parse(metadata_json);
  nlohmann::json params = nlohmann::json::array();
  std::int64_t blob_floats = 0;
  for (auto* p : model.parameters()) {
    params.push_back({{"name", p->name}, {"shape", p->value.shape()}});
    blob_floats += p->value.numel();
  }
  header["params"] = std::move(params);
  const std::string header_text = header.dump();

  std::string out;
  out.append(kMagic, sizeof(kMagic));
  append_u32(out, std::uint32_t(header_text.size()));
  out.append(header_text);
  append_u64(out, std::uint64_t(blob_floats) * 4);
  for (auto* p : model.parameters())
    out.append(reinterpret_cast<const char*>(p->value.data()),
               size_t(p->value.numel()) * 4);
  append_u32(out, crc32(out.data(), out.size()));

  std::ofstream file(path, std::ios::binary);
  EFFCRN_CHECK(file.good(), IoError, "cannot create '" + path + "'");
  file.write(out.data(), std::streamsize(out.size()));
  file.close();
  EFFCRN_CHECK(file.good(), IoError, "failed to write '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  EFFCRN_CHECK(file.good(), IoError, "cannot open '" + path + "'");
  std::string data((std::istreambuf_iterator<char>(file)),
                   std::istreambuf_iterator<char>());
  EFFCRN_CHECK(data.size() > sizeof(kMagic) + 16, IoError,
               "'" + path + "' is truncated");
  EFFCRN_CHECK(std::memcmp(data.data(), kMagic, sizeof(kMagic)) == 0, IoError,
               "'" + path + "' is not a checkpoint (bad magic)");
  const std::uint32_t stored_crc = parse_u32(data.data() + data.size() - 4);
  EFFCRN_CHECK(crc32(data.data(), data.size() - 4) == stored_crc, IoError,
               "'" + path + "' failed its integrity check");

  size_t pos = sizeof(kMagic);
  const std::uint32_t header_len = parse_u32(data.data() + pos);
  pos += 4;
  EFFCRN_CHECK(pos + header_len + 12 <= data.size(), IoError,
               "'" + path + "' is truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(data.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("'" + path + "': bad header: " + e.what());
  }
  pos += header_len;
  const std::uint64_t blob_len = parse_u64(data.data() + pos);
  pos += 8;
  EFFCRN_CHECK(pos + blob_len + 4 == data.size(), IoError,
               "'" + path + "' has a malformed parameter blob");

  LoadedCheckpoint out;
  try {
    const ModelSpec spec = spec_from_json(header.at("spec").dump());
    out.metadata_json = header.value("metadata", nlohmann::json::object()).dump();
    out.model = std::make_unique<Model>(build_graph(spec), /*seed=*/0);
    std::uint64_t off = 0;
    const auto& ptable = header.at("params");
    auto params = out.model->parameters();
    EFFCRN_CHECK(ptable.size() == params.size(), IoError,
                 "'" + path + "': parameter table mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
      ParameterT<float>* p = params[i];
      EFFCRN_CHECK(ptable[i].at("name").get<std::string>() == p->name, IoError,
                   "'" + path + "': parameter order mismatch");
      const std::uint64_t bytes = std::uint64_t(p->value.numel()) * 4;
      EFFCRN_CHECK(off + bytes <= blob_len, IoError,
                   "'" + path + "': parameter blob too small");
      std::memcpy(p->value.data(), data.data() + pos + off, size_t(bytes));
      off += bytes;
    }
    EFFCRN_CHECK(off == blob_len, IoError,
                 "'" + path + "': parameter blob too large");
  } catch (const nlohmann::json::exception& e) {
    throw IoError("'" + path + "': bad header: " + e.what());
  }
  return out;
}

}  // namespace effcrn
