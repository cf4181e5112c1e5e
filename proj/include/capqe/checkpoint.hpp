#pragma once

// Checkpoint file layout (all integers little-endian):
//
//   "CQEC"            magic
//   u32               format version
//   u64               metadata length, then that many bytes of JSON
//   u64               parameter count, then that many f64 values
//   u32               CRC-32 of every preceding byte

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

#include "capqe/binio.hpp"
#include "capqe/error.hpp"
#include "capqe/fileio.hpp"
#include "capqe/model.hpp"

namespace capqe {

inline constexpr std::string_view kCheckpointMagic = "CQEC";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  std::int64_t step = 0;
  std::optional<double> dev_spearman;
  std::string provenance;

  const ModelConfig& config() const { return params.config(); }
};

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"proj_dim", c.proj_dim},
          {"num_labels", c.num_labels},
          {"leaky_slope", c.leaky_slope},
          {"dropout_rate", c.dropout_rate}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.proj_dim = j.at("proj_dim").get<int>();
  c.num_labels = j.at("num_labels").get<int>();
  c.leaky_slope = j.at("leaky_slope").get<double>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  return c;
}

inline std::string encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json meta;
  meta["format_version"] = kCheckpointVersion;
  meta["config"] = config_to_json(ckpt.config());
  meta["step"] = ckpt.step;
  meta["dev_spearman"] = ckpt.dev_spearman ? nlohmann::json(*ckpt.dev_spearman) : nlohmann::json(nullptr);
  meta["provenance"] = ckpt.provenance;
  meta["dims"] = {{"image", kImageDim}, {"label", kLabelDim}, {"sentence", kSentenceDim}};
  auto& blocks = meta["blocks"] = nlohmann::json::array();
  for (std::size_t b = 0; b < kBlockCount; ++b) {
    const auto shape = ckpt.params.shape(static_cast<Block>(b));
    blocks.push_back({{"name", kBlockNames[b]}, {"rows", shape.rows}, {"cols", shape.cols}});
  }
  const std::string meta_text = meta.dump();

  std::string out(kCheckpointMagic);
  binio::put_le<std::uint32_t>(out, kCheckpointVersion);
  binio::put_le<std::uint64_t>(out, meta_text.size());
  out += meta_text;
  binio::put_le<std::uint64_t>(out, ckpt.params.size());
  for (double v : ckpt.params.values()) binio::put_le<double>(out, v);
  binio::put_le<std::uint32_t>(out, crc32_of(out));
  return out;
}

// `expected` (when given) must match the stored parameter shapes.
inline Checkpoint decode_checkpoint(std::string_view data, const std::optional<ModelConfig>& expected = std::nullopt,
                                    const std::string& context = "checkpoint") {
  if (data.size() < kCheckpointMagic.size() + 8 || data.substr(0, 4) != kCheckpointMagic) {
    fail(ErrorKind::CorruptCheckpoint, context + ": bad magic or truncated header");
  }
  binio::Reader in(data.substr(0, data.size() - 4), ErrorKind::CorruptCheckpoint, context);
  in.bytes(4);
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    fail(ErrorKind::VersionMismatch, context + ": format version " + std::to_string(version) + ", expected " +
                                         std::to_string(kCheckpointVersion));
  }
  binio::Reader tail(data.substr(data.size() - 4), ErrorKind::CorruptCheckpoint, context);
  if (tail.get<std::uint32_t>() != crc32_of(data.substr(0, data.size() - 4))) {
    fail(ErrorKind::CorruptCheckpoint, context + ": checksum mismatch");
  }
  const auto meta_len = in.get<std::uint64_t>();
  nlohmann::json meta;
  ModelConfig config;
  try {
    meta = nlohmann::json::parse(in.bytes(meta_len));
    config = config_from_json(meta.at("config"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::CorruptCheckpoint, context + ": bad metadata: " + e.what());
  }
  if (expected && !expected->same_shape(config)) {
    fail(ErrorKind::VersionMismatch, context + ": stored config P=" + std::to_string(config.proj_dim) +
                                         " K=" + std::to_string(config.num_labels) + " does not match requested P=" +
                                         std::to_string(expected->proj_dim) +
                                         " K=" + std::to_string(expected->num_labels));
  }

  Checkpoint ckpt;
  ckpt.params = ModelParams(config);
  const auto count = in.get<std::uint64_t>();
  if (count != ckpt.params.size()) {
    fail(ErrorKind::CorruptCheckpoint, context + ": parameter count " + std::to_string(count) +
                                           " does not match config (" + std::to_string(ckpt.params.size()) + ")");
  }
  for (auto& v : ckpt.params.values()) v = in.get<double>();
  if (in.remaining() != 0) fail(ErrorKind::CorruptCheckpoint, context + ": trailing bytes");
  if (!ckpt.params.all_finite()) fail(ErrorKind::CorruptCheckpoint, context + ": non-finite parameter");

  ckpt.step = meta.value("step", std::int64_t{0});
  if (meta.contains("dev_spearman") && !meta["dev_spearman"].is_null()) {
    ckpt.dev_spearman = meta["dev_spearman"].get<double>();
  }
  ckpt.provenance = meta.value("provenance", std::string{});
  return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path,
                                  const std::optional<ModelConfig>& expected = std::nullopt) {
  return decode_checkpoint(read_file(path), expected, path.string());
}

}  // namespace capqe
