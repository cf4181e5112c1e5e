#pragma once

// Sample storage. Two interchangeable formats:
//
//  * jsonl: one object per line,
//      {"sample_id", "image_id", "image": [64], "labels": [[256], ...],
//       "sentence": [512], "target": float?}
//    with every number written as the shortest decimal that round-trips a
//    32-bit float.
//
//  * packed ("CQE1"), little-endian:
//      "CQE1" u32 version u64 count u32 k_max u32 d_image u32 d_label u32 d_sentence
//      per sample: str sample_id, str image_id, u8 has_target, f32 target,
//                  u32 n_labels, f32 image[64], f32 labels[n][256], f32 sentence[512]
//    (str = u32 length + bytes), plus a sidecar "<path>.index.json" mapping
//    sample_id to the byte offset of its record.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"

#include "capqe/binio.hpp"
#include "capqe/error.hpp"
#include "capqe/fileio.hpp"
#include "capqe/rng.hpp"
#include "capqe/sample.hpp"

namespace capqe {

enum class SampleFormat { Jsonl, Packed };

inline constexpr std::string_view kPackedMagic = "CQE1";
inline constexpr std::uint32_t kPackedVersion = 1;

// ".jsonl"/".json" are jsonl; anything else is packed.
inline SampleFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return (ext == ".jsonl" || ext == ".json") ? SampleFormat::Jsonl : SampleFormat::Packed;
}

inline std::filesystem::path packed_index_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".index.json");
}

struct SaveOptions {
  bool force = false;
  std::size_t max_labels = kDefaultMaxLabels;
};

namespace detail {

inline void append_float(std::string& out, float v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
  // Integral spellings would parse as JSON integers and lose the sign of -0.
  if (std::find_if(buf, end, [](char c) { return c == '.' || c == 'e'; }) == end) out += ".0";
}

inline void append_float_array(std::string& out, std::span<const float> v) {
  out.push_back('[');
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out.push_back(',');
    append_float(out, v[i]);
  }
  out.push_back(']');
}

inline std::vector<float> float_array(const nlohmann::json& j, const std::string& field, std::size_t line) {
  if (!j.is_array()) {
    fail(ErrorKind::MalformedRecord, "line " + std::to_string(line) + ": field " + field + " is not an array");
  }
  std::vector<float> out;
  out.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) {
      fail(ErrorKind::MalformedRecord, "line " + std::to_string(line) + ": field " + field + " has a non-number");
    }
    out.push_back(static_cast<float>(x.get<double>()));
  }
  return out;
}

inline void check_unique(const SampleSet& samples) {
  std::unordered_set<std::string_view> seen;
  for (const auto& s : samples) {
    if (!seen.insert(s.sample_id).second) fail(ErrorKind::DuplicateKey, "duplicate sample_id '" + s.sample_id + "'");
  }
}

}  // namespace detail

inline std::string sample_to_jsonl(const Sample& s) {
  std::string out = "{\"sample_id\":" + nlohmann::json(s.sample_id).dump() +
                    ",\"image_id\":" + nlohmann::json(s.image_id).dump() + ",\"image\":";
  detail::append_float_array(out, s.image);
  out += ",\"labels\":[";
  for (std::size_t j = 0; j < s.labels.size(); ++j) {
    if (j) out.push_back(',');
    detail::append_float_array(out, s.labels[j]);
  }
  out += "],\"sentence\":";
  detail::append_float_array(out, s.sentence);
  if (s.target) {
    out += ",\"target\":";
    detail::append_float(out, *s.target);
  }
  out += "}";
  return out;
}

inline Sample sample_from_json(const nlohmann::json& j, std::size_t line) {
  auto where = [&] { return "line " + std::to_string(line); };
  if (!j.is_object()) fail(ErrorKind::MalformedRecord, where() + ": not a JSON object");
  for (const char* key : {"sample_id", "image_id", "image", "labels", "sentence"}) {
    if (!j.contains(key)) fail(ErrorKind::MalformedRecord, where() + ": missing field '" + key + "'");
  }
  Sample s;
  try {
    s.sample_id = j.at("sample_id").get<std::string>();
    s.image_id = j.at("image_id").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::MalformedRecord, where() + ": sample_id and image_id must be strings");
  }
  s.image = detail::float_array(j.at("image"), "image", line);
  const auto& labels = j.at("labels");
  if (!labels.is_array()) fail(ErrorKind::MalformedRecord, where() + ": field labels is not an array");
  for (std::size_t k = 0; k < labels.size(); ++k) {
    s.labels.push_back(detail::float_array(labels[k], "labels[" + std::to_string(k) + "]", line));
  }
  s.sentence = detail::float_array(j.at("sentence"), "sentence", line);
  if (j.contains("target") && !j.at("target").is_null()) {
    if (!j.at("target").is_number()) fail(ErrorKind::MalformedRecord, where() + ": target is not a number");
    s.target = static_cast<float>(j.at("target").get<double>());
  }
  return s;
}

inline SampleSet parse_jsonl_samples(std::string_view text, std::size_t max_labels = kDefaultMaxLabels) {
  SampleSet out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(sample_from_json(j, line_no));
    validate_sample(out.back(), max_labels);
  }
  detail::check_unique(out);
  return out;
}

// ---------------------------------------------------------------------------
// Packed

struct PackedEncoding {
  std::string bytes;
  std::vector<std::pair<std::string, std::uint64_t>> offsets;
};

inline PackedEncoding encode_packed(const SampleSet& samples, std::size_t max_labels = kDefaultMaxLabels) {
  PackedEncoding enc;
  auto& out = enc.bytes;
  out.append(kPackedMagic);
  binio::put_le<std::uint32_t>(out, kPackedVersion);
  binio::put_le<std::uint64_t>(out, samples.size());
  binio::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(max_labels));
  binio::put_le<std::uint32_t>(out, kImageDim);
  binio::put_le<std::uint32_t>(out, kLabelDim);
  binio::put_le<std::uint32_t>(out, kSentenceDim);
  for (const auto& s : samples) {
    enc.offsets.emplace_back(s.sample_id, out.size());
    binio::put_string(out, s.sample_id);
    binio::put_string(out, s.image_id);
    binio::put_le<std::uint8_t>(out, s.target ? 1 : 0);
    binio::put_le<float>(out, s.target.value_or(0.0f));
    binio::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.labels.size()));
    for (float v : s.image) binio::put_le<float>(out, v);
    for (const auto& l : s.labels) {
      for (float v : l) binio::put_le<float>(out, v);
    }
    for (float v : s.sentence) binio::put_le<float>(out, v);
  }
  return enc;
}

struct PackedHeader {
  std::uint64_t count = 0;
  std::uint32_t max_labels = 0;
};

namespace detail {

inline PackedHeader read_packed_header(binio::Reader& in, const std::string& context) {
  if (in.bytes(4) != kPackedMagic) fail(ErrorKind::ParseError, context + ": not a packed sample file");
  const auto version = in.get<std::uint32_t>();
  if (version != kPackedVersion) {
    fail(ErrorKind::VersionMismatch, context + ": packed format version " + std::to_string(version));
  }
  PackedHeader h;
  h.count = in.get<std::uint64_t>();
  h.max_labels = in.get<std::uint32_t>();
  const std::array<std::size_t, 3> expected{kImageDim, kLabelDim, kSentenceDim};
  const std::array<const char*, 3> names{"image", "label", "sentence"};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto d = in.get<std::uint32_t>();
    if (d != expected[i]) {
      fail(ErrorKind::DimensionMismatch, context + ": header " + names[i] + " dimension " + std::to_string(d) +
                                             ", expected " + std::to_string(expected[i]));
    }
  }
  return h;
}

inline Sample read_packed_record(binio::Reader& in, const PackedHeader& h, const std::string& context) {
  Sample s;
  s.sample_id = in.get_string();
  s.image_id = in.get_string();
  const auto has_target = in.get<std::uint8_t>();
  const auto target = in.get<float>();
  if (has_target) s.target = target;
  const auto n_labels = in.get<std::uint32_t>();
  if (n_labels > h.max_labels) {
    fail(ErrorKind::DimensionMismatch, context + ": sample '" + s.sample_id + "' has " + std::to_string(n_labels) +
                                           " labels, header allows " + std::to_string(h.max_labels));
  }
  auto read_vec = [&](std::size_t n) {
    std::vector<float> v(n);
    for (auto& x : v) x = in.get<float>();
    return v;
  };
  s.image = read_vec(kImageDim);
  for (std::uint32_t j = 0; j < n_labels; ++j) s.labels.push_back(read_vec(kLabelDim));
  s.sentence = read_vec(kSentenceDim);
  return s;
}

}  // namespace detail

inline SampleSet decode_packed(std::string_view data, const std::string& context = "packed") {
  binio::Reader in(data, ErrorKind::ParseError, context);
  const auto header = detail::read_packed_header(in, context);
  SampleSet out;
  out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(header.count, 1u << 20)));
  for (std::uint64_t i = 0; i < header.count; ++i) {
    out.push_back(detail::read_packed_record(in, header, context));
    validate_sample(out.back(), header.max_labels);
  }
  if (in.remaining() != 0) fail(ErrorKind::ParseError, context + ": trailing bytes after last record");
  detail::check_unique(out);
  return out;
}

inline std::vector<std::pair<std::string, std::uint64_t>> read_packed_index(const std::filesystem::path& path) {
  const auto idx_path = packed_index_path(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(idx_path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::ParseError, idx_path.string() + ": " + e.what());
  }
  std::vector<std::pair<std::string, std::uint64_t>> out;
  for (const auto& e : j.at("entries")) out.emplace_back(e.at("sample_id"), e.at("offset"));
  return out;
}

// Random access to one record through the sidecar index.
inline Sample load_packed_sample(const std::filesystem::path& path, const std::string& sample_id) {
  for (const auto& [id, offset] : read_packed_index(path)) {
    if (id != sample_id) continue;
    const auto data = read_file(path);
    binio::Reader in(data, ErrorKind::ParseError, path.string());
    const auto header = detail::read_packed_header(in, path.string());
    in.seek(offset);
    auto s = detail::read_packed_record(in, header, path.string());
    validate_sample(s, header.max_labels);
    return s;
  }
  fail(ErrorKind::InvalidArgument, path.string() + ": no sample '" + sample_id + "' in index");
}

// ---------------------------------------------------------------------------
// Entry points

inline SampleSet load_samples(const std::filesystem::path& path, SampleFormat format) {
  const auto data = read_file(path);
  try {
    if (format == SampleFormat::Jsonl) return parse_jsonl_samples(data);
    return decode_packed(data, path.string());
  } catch (const Error& e) {
    if (format == SampleFormat::Packed) throw;  // already names the file
    throw Error(e.kind(), path.string() + ": " + e.message());
  }
}

inline SampleSet load_samples(const std::filesystem::path& path) { return load_samples(path, format_from_path(path)); }

inline void save_samples(const SampleSet& samples, const std::filesystem::path& path, SampleFormat format,
                         const SaveOptions& opts = {}) {
  for (const auto& s : samples) validate_sample(s, opts.max_labels);
  detail::check_unique(samples);
  if (!opts.force && std::filesystem::exists(path)) {
    fail(ErrorKind::IoError, "'" + path.string() + "' exists; pass force to overwrite");
  }
  if (format == SampleFormat::Jsonl) {
    std::string text;
    for (const auto& s : samples) {
      text += sample_to_jsonl(s);
      text.push_back('\n');
    }
    write_file(path, text);
    return;
  }
  const auto enc = encode_packed(samples, opts.max_labels);
  nlohmann::json index;
  index["format"] = kPackedMagic;
  index["count"] = samples.size();
  auto& entries = index["entries"] = nlohmann::json::array();
  for (const auto& [id, offset] : enc.offsets) entries.push_back({{"sample_id", id}, {"offset", offset}});
  write_file(path, enc.bytes);
  write_file(packed_index_path(path), index.dump() + "\n");
}

inline void save_samples(const SampleSet& samples, const std::filesystem::path& path, const SaveOptions& opts = {}) {
  save_samples(samples, path, format_from_path(path), opts);
}

// ---------------------------------------------------------------------------
// Image-disjoint split

struct SplitResult {
  SampleSet train;
  SampleSet dev;
  SampleSet test;
};

// Folds receive floor(f * n_images) images each; leftover images go to the
// folds with the largest fractional remainders (ties: train, dev, test).
inline std::array<std::size_t, 3> fold_sizes(std::size_t n_images, const std::array<double, 3>& fractions) {
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t f = 0; f < 3; ++f) {
    const double exact = fractions[f] * static_cast<double>(n_images);
    // Absorb representation error such as 0.7 * 10 = 7.000000000000001.
    const double snapped = std::abs(exact - std::round(exact)) < 1e-9 ? std::round(exact) : exact;
    sizes[f] = static_cast<std::size_t>(std::floor(snapped));
    remainder[f] = snapped - std::floor(snapped);
    assigned += sizes[f];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < n_images; ++i, ++assigned) ++sizes[order[i % 3]];
  return sizes;
}

inline SplitResult split_image_disjoint(const SampleSet& samples, const std::array<double, 3>& fractions,
                                        std::uint64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) fail(ErrorKind::InvalidArgument, "split fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorKind::InvalidArgument, "split fractions must sum to 1");

  std::vector<std::string> images;
  std::set<std::string> seen;
  for (const auto& s : samples) {
    if (seen.insert(s.image_id).second) images.push_back(s.image_id);
  }
  const auto sizes = fold_sizes(images.size(), fractions);
  for (std::size_t f = 0; f < 3; ++f) {
    if (sizes[f] == 0) {
      fail(ErrorKind::TooFewImages, std::to_string(images.size()) + " images cannot fill fold " + std::to_string(f));
    }
  }
  Rng rng(seed);
  rng.shuffle(std::span<std::string>(images));

  std::map<std::string, std::size_t> fold_of;
  for (std::size_t i = 0; i < images.size(); ++i) {
    fold_of[images[i]] = i < sizes[0] ? 0 : (i < sizes[0] + sizes[1] ? 1 : 2);
  }
  SplitResult out;
  std::array<SampleSet*, 3> folds{&out.train, &out.dev, &out.test};
  for (const auto& s : samples) folds[fold_of.at(s.image_id)]->push_back(s);
  return out;
}

}  // namespace capqe
