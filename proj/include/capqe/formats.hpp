#pragma once

// Line-oriented file formats for ratings, aggregated scores, model scores,
// fine-grained annotations and PR curves. Parsers report the offending line.

#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "capqe/error.hpp"
#include "capqe/metrics.hpp"
#include "capqe/ratings.hpp"

namespace capqe {

namespace detail {

template <typename Fn>
void for_each_json_line(std::string_view text, const std::string& source, Fn&& fn) {
  std::size_t pos = 0, line_no = 0;
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
      fail(ErrorKind::ParseError, source + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      fn(j, line_no);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::MalformedRecord, source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline std::string shortest(double v) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace detail

// {"image_id": str, "caption_id": str, "caption": str?, "ratings": ["YES"|"NO"|"SKIP", ...]}
inline std::vector<RatingRecord> parse_rating_records(std::string_view text, const std::string& source = "ratings") {
  std::vector<RatingRecord> out;
  detail::for_each_json_line(text, source, [&](const nlohmann::json& j, std::size_t line) {
    auto bad = [&](const std::string& why) {
      fail(ErrorKind::MalformedRecord, source + ":" + std::to_string(line) + ": " + why);
    };
    if (!j.is_object()) bad("not a JSON object");
    RatingRecord r;
    r.image_id = j.at("image_id").get<std::string>();
    r.caption_id = j.at("caption_id").get<std::string>();
    if (j.contains("caption") && !j.at("caption").is_null()) r.caption_text = j.at("caption").get<std::string>();
    const auto& ratings = j.at("ratings");
    if (!ratings.is_array() || ratings.empty() || ratings.size() > 20) bad("ratings must be a list of 1..20 values");
    for (const auto& v : ratings) {
      const auto parsed = v.is_string() ? parse_rating(v.get<std::string>()) : std::nullopt;
      if (!parsed) bad("rating " + v.dump() + " is not YES, NO or SKIP");
      r.ratings.push_back(*parsed);
    }
    out.push_back(std::move(r));
  });
  return out;
}

inline std::string rating_record_to_jsonl(const RatingRecord& r) {
  nlohmann::json j{{"image_id", r.image_id}, {"caption_id", r.caption_id}};
  if (r.caption_text) j["caption"] = *r.caption_text;
  auto& arr = j["ratings"] = nlohmann::json::array();
  for (Rating x : r.ratings) arr.push_back(std::string(to_string(x)));
  return j.dump();
}

// {"image_id", "caption_id", "score": k/8, "n_valid": int}
inline std::string scored_record_to_jsonl(const ScoredRecord& r) {
  nlohmann::json j{{"image_id", r.image_id},
                   {"caption_id", r.caption_id},
                   {"score", r.score.value()},
                   {"n_valid", r.score.n_valid()}};
  return j.dump();
}

inline std::vector<ScoredRecord> parse_scored_records(std::string_view text, const std::string& source = "scores") {
  std::vector<ScoredRecord> out;
  detail::for_each_json_line(text, source, [&](const nlohmann::json& j, std::size_t line) {
    ScoredRecord r;
    r.image_id = j.at("image_id").get<std::string>();
    r.caption_id = j.at("caption_id").get<std::string>();
    try {
      r.score = QualityScore::from_value(j.at("score").get<double>(), j.value("n_valid", 0));
    } catch (const Error& e) {
      fail(ErrorKind::MalformedRecord, source + ":" + std::to_string(line) + ": " + e.message());
    }
    out.push_back(std::move(r));
  });
  return out;
}

inline std::string filter_log_to_jsonl(const FilterLogEntry& e) {
  nlohmann::json j{{"image_id", e.image_id},
                   {"caption_id", e.caption_id},
                   {"skip_count", e.skip_count},
                   {"reason", std::string(to_string(e.reason))}};
  return j.dump();
}

// Model output: {"sample_id", "score"}
inline std::string prediction_to_jsonl(const std::string& sample_id, double score) {
  return "{\"sample_id\":" + nlohmann::json(sample_id).dump() + ",\"score\":" + detail::shortest(score) + "}";
}

inline std::map<std::string, double> parse_predictions(std::string_view text, const std::string& source = "scores") {
  std::map<std::string, double> out;
  detail::for_each_json_line(text, source, [&](const nlohmann::json& j, std::size_t line) {
    const auto id = j.at("sample_id").get<std::string>();
    if (!out.emplace(id, j.at("score").get<double>()).second) {
      fail(ErrorKind::DuplicateKey, source + ":" + std::to_string(line) + ": duplicate sample_id '" + id + "'");
    }
  });
  return out;
}

// {"sample_id", "raters": [{"correctness": 0|1|2, "helpfulness": 0|1|2} x 3]}
inline std::vector<FineGrainedAnnotation> parse_annotations(std::string_view text,
                                                            const std::string& source = "annotations") {
  std::vector<FineGrainedAnnotation> out;
  detail::for_each_json_line(text, source, [&](const nlohmann::json& j, std::size_t line) {
    auto bad = [&](const std::string& why) {
      fail(ErrorKind::MalformedRecord, source + ":" + std::to_string(line) + ": " + why);
    };
    FineGrainedAnnotation a;
    a.sample_id = j.at("sample_id").get<std::string>();
    const auto& raters = j.at("raters");
    if (!raters.is_array() || raters.size() != kFineGrainedRaters) bad("expected exactly 3 raters");
    for (std::size_t r = 0; r < kFineGrainedRaters; ++r) {
      const int c = raters[r].at("correctness").get<int>();
      const int h = raters[r].at("helpfulness").get<int>();
      if (c < 0 || c > 2 || h < 0 || h > 2) bad("ordinal codes must be 0, 1 or 2");
      a.raters[r] = {static_cast<Correctness>(c), static_cast<Helpfulness>(h)};
    }
    out.push_back(std::move(a));
  });
  return out;
}

inline std::string annotation_to_jsonl(const FineGrainedAnnotation& a) {
  nlohmann::json raters = nlohmann::json::array();
  for (const auto& r : a.raters) {
    raters.push_back({{"correctness", static_cast<int>(r.correctness)}, {"helpfulness", static_cast<int>(r.helpfulness)}});
  }
  return nlohmann::json{{"sample_id", a.sample_id}, {"raters", raters}}.dump();
}

// threshold,precision,recall,n_served; precision is empty when nothing is served.
inline std::string pr_curve_to_csv(const std::vector<PRPoint>& curve) {
  std::string out = "threshold,precision,recall,n_served\n";
  for (const auto& p : curve) {
    out += detail::shortest(p.threshold) + "," + (p.precision ? detail::shortest(*p.precision) : std::string()) + "," +
           detail::shortest(p.recall) + "," + std::to_string(p.n_served) + "\n";
  }
  return out;
}

inline std::vector<PRPoint> parse_pr_curve_csv(std::string_view text, const std::string& source = "curve") {
  std::vector<PRPoint> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != "threshold,precision,recall,n_served") {
        fail(ErrorKind::ParseError, source + ":1: unexpected header '" + line + "'");
      }
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() == 3 && line.back() == ',') cells.emplace_back();
    if (cells.size() != 4) fail(ErrorKind::ParseError, source + ":" + std::to_string(line_no) + ": expected 4 columns");
    try {
      PRPoint p;
      p.threshold = std::stod(cells[0]);
      if (!cells[1].empty()) p.precision = std::stod(cells[1]);
      p.recall = std::stod(cells[2]);
      p.n_served = static_cast<std::size_t>(std::stoull(cells[3]));
      out.push_back(p);
    } catch (const std::exception&) {
      fail(ErrorKind::ParseError, source + ":" + std::to_string(line_no) + ": bad number");
    }
  }
  return out;
}

// Minimal PR-curve plot: precision (y) against recall (x).
inline std::string pr_curve_to_svg(const std::vector<PRPoint>& curve, double auc_value) {
  constexpr double w = 400, h = 300, m = 40;
  std::string pts;
  for (const auto& p : curve) {
    if (!p.precision) continue;
    const double x = m + p.recall * (w - 2 * m);
    const double y = h - m - *p.precision * (h - 2 * m);
    pts += detail::shortest(x) + "," + detail::shortest(y) + " ";
  }
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"300\">\n";
  svg += "<rect x=\"40\" y=\"40\" width=\"320\" height=\"220\" fill=\"none\" stroke=\"#888\"/>\n";
  svg += "<polyline fill=\"none\" stroke=\"#c03\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
  svg += "<text x=\"200\" y=\"290\" text-anchor=\"middle\" font-size=\"12\">recall</text>\n";
  svg += "<text x=\"12\" y=\"150\" font-size=\"12\" transform=\"rotate(-90 12 150)\">precision</text>\n";
  svg += "<text x=\"200\" y=\"28\" text-anchor=\"middle\" font-size=\"12\">AUC " + detail::shortest(auc_value) +
         "</text>\n</svg>\n";
  return svg;
}

}  // namespace capqe
