#pragma once

// Text formats: ground-truth CSV, submission-style prediction CSV, detection
// CSV, and the JSON score / classification reports. Boxes are converted to
// corner form here so the rest of the library sees a single convention.
//
// Parsing is locale-independent (std::from_chars) and accepts LF or CRLF
// line endings. Unknown or missing columns are errors.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lungdet/errors.hpp"
#include "lungdet/geometry.hpp"
#include "lungdet/metrics.hpp"
#include "lungdet/nms.hpp"

namespace lungdet {

// ---------------------------------------------------------------------------
// Records

/// One row of the ground-truth file. target == 1 iff a box is present.
struct GtRecord {
  std::string patient_id;
  std::optional<BBox> box;
  int target = 0;

  bool operator==(const GtRecord&) const = default;
};

struct PredRecord {
  std::string patient_id;
  std::vector<Detection> detections;

  bool operator==(const PredRecord&) const = default;
};

/// One row of a detection CSV: a detection tagged with its image.
struct DetectionRecord {
  std::string image_id;
  Detection detection;

  bool operator==(const DetectionRecord&) const = default;
};

struct ImageEntry {
  std::string patient_id;
  std::optional<double> score;

  bool operator==(const ImageEntry&) const = default;
};

struct ScoreReport {
  double dataset_map = 0.0;
  std::vector<ImageEntry> per_image;
  std::vector<double> thresholds;
  std::vector<ThresholdCounts> counts;  // summed over images, one per threshold
  bool dataset_map_undefined = true;    // no image contributed a score
  std::size_t images_excluded = 0;      // images with neither GT nor predictions

  bool operator==(const ScoreReport&) const = default;
};

inline constexpr std::string_view kGtHeader = "patientId,x,y,width,height,Target";
inline constexpr std::string_view kPredHeader = "patientId,PredictionString";
inline constexpr std::string_view kDetectionHeader =
    "image_id,x_min,y_min,x_max,y_max,score,class_id";
inline constexpr std::string_view kBoxHeader = "x_min,y_min,x_max,y_max";
inline constexpr std::string_view kFoldHeader = "id,fold";

// ---------------------------------------------------------------------------
// Low-level text helpers

namespace text {

/// Split into lines on LF, dropping a trailing CR from each line. A final
/// empty line (from a terminating newline) is not reported.
inline std::vector<std::string_view> lines(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < s.size()) {
    auto end = s.find('\n', start);
    if (end == std::string_view::npos) end = s.size();
    auto line = s.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    start = end + 1;
  }
  return out;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto end = s.find(sep, start);
    if (end == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, end - start));
    start = end + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline bool is_blank(std::string_view s) { return trim(s).empty(); }

/// Whitespace-separated tokens.
inline std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

inline std::optional<double> try_parse_real(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline double parse_real(std::string_view s, std::size_t line, std::string_view what) {
  const auto v = try_parse_real(s);
  if (!v) {
    throw ParseError(line, "invalid number for " + std::string(what) + ": '" + std::string(s) + "'");
  }
  return *v;
}

inline long long parse_int(std::string_view s, std::size_t line, std::string_view what) {
  s = trim(s);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ParseError(line, "invalid integer for " + std::string(what) + ": '" + std::string(s) + "'");
  }
  return v;
}

/// Shortest representation that parses back to the same double.
inline std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

/// Fixed notation with six decimals.
inline std::string format_fixed6(double v) {
  char buf[512];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 6);
  return std::string(buf, ptr);
}

inline std::string json_string(std::string_view s) {
  std::string out = "\"";
  for (const char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          static constexpr char hex[] = "0123456789abcdef";
          out += "\\u00";
          out += hex[(c >> 4) & 0xf];
          out += hex[c & 0xf];
        } else {
          out += c;
        }
    }
  }
  out += '"';
  return out;
}

// Validates the header line and returns the data lines with their 1-based
// line numbers, skipping blank lines.
inline std::vector<std::pair<std::size_t, std::string_view>> body(std::string_view csv,
                                                                  std::string_view header) {
  const auto all = lines(csv);
  if (all.empty()) throw ParseError(1, "missing header '" + std::string(header) + "'");
  if (trim(all[0]) != header) {
    throw ParseError(1, "unexpected header '" + std::string(all[0]) + "', expected '" +
                            std::string(header) + "'");
  }
  std::vector<std::pair<std::size_t, std::string_view>> out;
  for (std::size_t i = 1; i < all.size(); ++i) {
    if (!is_blank(all[i])) out.emplace_back(i + 1, all[i]);
  }
  return out;
}

inline std::vector<std::string_view> fields(std::string_view line, std::size_t expected,
                                            std::size_t line_no) {
  auto f = split(line, ',');
  if (f.size() != expected) {
    throw ParseError(line_no, "expected " + std::to_string(expected) + " fields, got " +
                                  std::to_string(f.size()));
  }
  return f;
}

inline std::string parse_id(std::string_view s, std::size_t line, std::string_view what) {
  s = trim(s);
  if (s.empty()) throw ParseError(line, "empty " + std::string(what));
  return std::string(s);
}

inline BBox parse_xywh(std::string_view x, std::string_view y, std::string_view w,
                       std::string_view h, std::size_t line) {
  const double bx = parse_real(x, line, "x");
  const double by = parse_real(y, line, "y");
  const double bw = parse_real(w, line, "width");
  const double bh = parse_real(h, line, "height");
  if (bw < 0.0 || bh < 0.0) throw ParseError(line, "negative box width or height");
  return BBox::from_xywh(bx, by, bw, bh);
}

}  // namespace text

// ---------------------------------------------------------------------------
// Ground truth: patientId,x,y,width,height,Target

inline std::vector<GtRecord> read_ground_truth(std::string_view csv) {
  std::vector<GtRecord> out;
  for (const auto& [line_no, line] : text::body(csv, kGtHeader)) {
    const auto f = text::fields(line, 6, line_no);
    GtRecord r;
    r.patient_id = text::parse_id(f[0], line_no, "patientId");
    const auto target = text::parse_int(f[5], line_no, "Target");
    if (target != 0 && target != 1) throw ParseError(line_no, "Target must be 0 or 1");
    r.target = static_cast<int>(target);
    const bool any_box_field = !text::is_blank(f[1]) || !text::is_blank(f[2]) ||
                               !text::is_blank(f[3]) || !text::is_blank(f[4]);
    if (r.target == 1) {
      r.box = text::parse_xywh(f[1], f[2], f[3], f[4], line_no);
    } else if (any_box_field) {
      throw ParseError(line_no, "Target 0 row must not carry a box");
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::string write_ground_truth(const std::vector<GtRecord>& records) {
  std::string out(kGtHeader);
  out += '\n';
  for (const auto& r : records) {
    out += r.patient_id;
    if (r.box) {
      out += ',' + text::format_real(r.box->x_min) + ',' + text::format_real(r.box->y_min) + ',' +
             text::format_real(r.box->width()) + ',' + text::format_real(r.box->height());
    } else {
      out += ",,,,";
    }
    out += ',' + std::to_string(r.target) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Predictions: patientId,PredictionString ("conf x y w h" repeated)

inline std::vector<PredRecord> read_predictions(std::string_view csv) {
  std::vector<PredRecord> out;
  for (const auto& [line_no, line] : text::body(csv, kPredHeader)) {
    const auto f = text::fields(line, 2, line_no);
    PredRecord r;
    r.patient_id = text::parse_id(f[0], line_no, "patientId");
    const auto tok = text::tokens(f[1]);
    if (tok.size() % 5 != 0) {
      throw ParseError(line_no, "prediction string has " + std::to_string(tok.size()) +
                                    " tokens, expected a multiple of 5");
    }
    for (std::size_t i = 0; i < tok.size(); i += 5) {
      const double conf = text::parse_real(tok[i], line_no, "confidence");
      if (conf < 0.0 || conf > 1.0) throw ParseError(line_no, "confidence outside [0,1]");
      r.detections.push_back(
          {text::parse_xywh(tok[i + 1], tok[i + 2], tok[i + 3], tok[i + 4], line_no), conf,
           std::nullopt});
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::string write_predictions(const std::vector<PredRecord>& records) {
  std::string out(kPredHeader);
  out += '\n';
  for (const auto& r : records) {
    out += r.patient_id;
    out += ',';
    bool first = true;
    for (const auto& d : r.detections) {
      if (!first) out += ' ';
      first = false;
      out += text::format_real(d.score) + ' ' + text::format_real(d.box.x_min) + ' ' +
             text::format_real(d.box.y_min) + ' ' + text::format_real(d.box.width()) + ' ' +
             text::format_real(d.box.height());
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Detections: image_id,x_min,y_min,x_max,y_max,score,class_id

inline std::vector<DetectionRecord> read_detections(std::string_view csv) {
  std::vector<DetectionRecord> out;
  for (const auto& [line_no, line] : text::body(csv, kDetectionHeader)) {
    const auto f = text::fields(line, 7, line_no);
    DetectionRecord r;
    r.image_id = text::parse_id(f[0], line_no, "image_id");
    const double x0 = text::parse_real(f[1], line_no, "x_min");
    const double y0 = text::parse_real(f[2], line_no, "y_min");
    const double x1 = text::parse_real(f[3], line_no, "x_max");
    const double y1 = text::parse_real(f[4], line_no, "y_max");
    if (x1 < x0 || y1 < y0) throw ParseError(line_no, "box has negative extent");
    r.detection.box = BBox(x0, y0, x1, y1);
    r.detection.score = text::parse_real(f[5], line_no, "score");
    if (r.detection.score < 0.0 || r.detection.score > 1.0) {
      throw ParseError(line_no, "score outside [0,1]");
    }
    if (!text::is_blank(f[6])) {
      const auto cls = text::parse_int(f[6], line_no, "class_id");
      if (cls < 0 || cls > 1'000'000) throw ParseError(line_no, "class_id out of range");
      r.detection.class_id = static_cast<int>(cls);
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::string write_detections(const std::vector<DetectionRecord>& records) {
  std::string out(kDetectionHeader);
  out += '\n';
  for (const auto& r : records) {
    const auto& d = r.detection;
    out += r.image_id + ',' + text::format_real(d.box.x_min) + ',' +
           text::format_real(d.box.y_min) + ',' + text::format_real(d.box.x_max) + ',' +
           text::format_real(d.box.y_max) + ',' + text::format_real(d.score) + ',';
    if (d.class_id) out += std::to_string(*d.class_id);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plain box lists: x_min,y_min,x_max,y_max

inline std::vector<BBox> read_boxes(std::string_view csv) {
  std::vector<BBox> out;
  for (const auto& [line_no, line] : text::body(csv, kBoxHeader)) {
    const auto f = text::fields(line, 4, line_no);
    const double x0 = text::parse_real(f[0], line_no, "x_min");
    const double y0 = text::parse_real(f[1], line_no, "y_min");
    const double x1 = text::parse_real(f[2], line_no, "x_max");
    const double y1 = text::parse_real(f[3], line_no, "y_max");
    if (x1 < x0 || y1 < y0) throw ParseError(line_no, "box has negative extent");
    out.emplace_back(x0, y0, x1, y1);
  }
  return out;
}

inline std::string write_boxes(const std::vector<BBox>& boxes) {
  std::string out(kBoxHeader);
  out += '\n';
  for (const auto& b : boxes) {
    out += text::format_real(b.x_min) + ',' + text::format_real(b.y_min) + ',' +
           text::format_real(b.x_max) + ',' + text::format_real(b.y_max) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fold assignment: id,fold

inline std::string write_folds(const FoldAssignment& folds) {
  std::string out(kFoldHeader);
  out += '\n';
  for (std::size_t i = 0; i < folds.ids.size(); ++i) {
    out += folds.ids[i] + ',' + std::to_string(folds.folds[i]) + '\n';
  }
  return out;
}

/// Ids one per line; blank lines skipped.
inline std::vector<std::string> read_id_list(std::string_view s) {
  std::vector<std::string> out;
  for (const auto line : text::lines(s)) {
    const auto id = text::trim(line);
    if (id.empty()) continue;
    if (id.find(',') != std::string_view::npos) {
      throw ParseError(out.size() + 1, "id contains a comma");
    }
    out.emplace_back(id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Grouping helpers

/// An image with its ground-truth boxes and predictions.
struct ImageRecord {
  std::string patient_id;
  std::vector<BBox> gt;
  std::vector<Detection> preds;
};

/// Join GT rows and prediction rows per patient. Order: GT patients in
/// first-appearance order, then patients that only occur in predictions.
inline std::vector<ImageRecord> join_images(const std::vector<GtRecord>& gt,
                                            const std::vector<PredRecord>& preds) {
  std::vector<ImageRecord> out;
  std::map<std::string, std::size_t, std::less<>> index;
  auto slot = [&](const std::string& id) -> ImageRecord& {
    const auto [it, inserted] = index.try_emplace(id, out.size());
    if (inserted) out.push_back({id, {}, {}});
    return out[it->second];
  };
  for (const auto& r : gt) {
    auto& img = slot(r.patient_id);
    if (r.box) img.gt.push_back(*r.box);
  }
  for (const auto& r : preds) {
    auto& img = slot(r.patient_id);
    img.preds.insert(img.preds.end(), r.detections.begin(), r.detections.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Score report JSON

/// Serialize with a fixed key order and six-decimal reals; absent per-image
/// scores become null.
inline std::string write_report(const ScoreReport& r) {
  using text::format_fixed6;
  std::string out = "{\"dataset_map\":" + format_fixed6(r.dataset_map) + ",\"per_image\":[";
  for (std::size_t i = 0; i < r.per_image.size(); ++i) {
    if (i > 0) out += ',';
    const auto& e = r.per_image[i];
    out += "{\"patient_id\":" + text::json_string(e.patient_id) + ",\"score\":" +
           (e.score ? format_fixed6(*e.score) : std::string("null")) + "}";
  }
  out += "],\"thresholds\":[";
  for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
    if (i > 0) out += ',';
    out += format_fixed6(r.thresholds[i]);
  }
  out += "],\"counts\":[";
  for (std::size_t i = 0; i < r.counts.size(); ++i) {
    if (i > 0) out += ',';
    const auto& c = r.counts[i];
    out += "{\"threshold\":" + format_fixed6(c.threshold) + ",\"tp\":" + std::to_string(c.tp) +
           ",\"fp\":" + std::to_string(c.fp) + ",\"fn\":" + std::to_string(c.fn) + "}";
  }
  out += "],\"dataset_map_undefined\":";
  out += r.dataset_map_undefined ? "true" : "false";
  out += ",\"images_excluded\":" + std::to_string(r.images_excluded) + "}\n";
  return out;
}

inline ScoreReport read_report(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(0, std::string("report: ") + e.what());
  }
  try {
    ScoreReport r;
    r.dataset_map = j.at("dataset_map").get<double>();
    for (const auto& e : j.at("per_image")) {
      ImageEntry entry{e.at("patient_id").get<std::string>(), std::nullopt};
      if (!e.at("score").is_null()) entry.score = e.at("score").get<double>();
      r.per_image.push_back(std::move(entry));
    }
    r.thresholds = j.at("thresholds").get<std::vector<double>>();
    for (const auto& c : j.at("counts")) {
      r.counts.push_back({c.at("threshold").get<double>(), c.at("tp").get<std::size_t>(),
                          c.at("fp").get<std::size_t>(), c.at("fn").get<std::size_t>()});
    }
    r.dataset_map_undefined = j.at("dataset_map_undefined").get<bool>();
    r.images_excluded = j.at("images_excluded").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("report: ") + e.what());
  }
}

/// Score every joined image and assemble the report in image order.
inline ScoreReport build_report(const std::vector<ImageRecord>& images,
                                const std::vector<ImageScore>& scores,
                                const ThresholdSet& thresholds) {
  ScoreReport r;
  r.thresholds = thresholds.values();
  for (const double t : thresholds) r.counts.push_back({t, 0, 0, 0});
  std::vector<std::optional<double>> aps;
  aps.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    r.per_image.push_back({images[i].patient_id, scores[i].ap});
    aps.push_back(scores[i].ap);
    if (!scores[i].ap) ++r.images_excluded;
    for (std::size_t k = 0; k < scores[i].counts.size(); ++k) {
      r.counts[k].tp += scores[i].counts[k].tp;
      r.counts[k].fp += scores[i].counts[k].fp;
      r.counts[k].fn += scores[i].counts[k].fn;
    }
  }
  r.dataset_map = dataset_map(aps);
  r.dataset_map_undefined = r.images_excluded == images.size();
  return r;
}

// ---------------------------------------------------------------------------
// Classification report JSON

inline std::string write_classification_report(const ConfusionCounts& c,
                                               const ConfusionMetrics& m) {
  using text::format_fixed6;
  auto flag = [](bool b) { return b ? std::string("true") : std::string("false"); };
  std::string out = "{\"accuracy\":" + format_fixed6(m.accuracy.value) +
                    ",\"specificity\":" + format_fixed6(m.specificity.value) +
                    ",\"precision\":" + format_fixed6(m.precision.value) +
                    ",\"recall\":" + format_fixed6(m.recall.value) +
                    ",\"f1\":" + format_fixed6(m.f1.value) + ",\"counts\":{\"tp\":" +
                    std::to_string(c.tp) + ",\"fp\":" + std::to_string(c.fp) +
                    ",\"tn\":" + std::to_string(c.tn) + ",\"fn\":" + std::to_string(c.fn) +
                    "},\"undefined\":{\"accuracy\":" + flag(m.accuracy.undefined) +
                    ",\"specificity\":" + flag(m.specificity.undefined) +
                    ",\"precision\":" + flag(m.precision.undefined) +
                    ",\"recall\":" + flag(m.recall.undefined) + ",\"f1\":" + flag(m.f1.undefined) +
                    "}}\n";
  return out;
}

}  // namespace lungdet
