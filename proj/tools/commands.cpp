#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <ios>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <CLI11.hpp>

#include "lungdet/lungdet.hpp"

namespace lungdet::cli {
namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot open " + path + " for writing");
  out << contents;
  if (!out) throw std::ios_base::failure("write failed: " + path);
}

// Writes to `path`, or to `out` when no path was given.
void emit(const std::string& path, const std::string& contents, std::ostream& out) {
  if (path.empty()) {
    out << contents;
  } else {
    write_file(path, contents);
  }
}

std::vector<double> parse_real_list(const std::string& s, const char* what) {
  std::vector<double> out;
  for (const auto part : text::split(s, ',')) {
    const auto v = text::try_parse_real(part);
    if (!v) throw std::invalid_argument(std::string("bad value in ") + what + ": '" + std::string(part) + "'");
    out.push_back(*v);
  }
  return out;
}

// Uniform double in [lo, hi) from the top 53 bits of the generator.
double uniform_real(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

struct ScoreArgs {
  std::string gt;
  std::string pred;
  std::string thresholds = "0.4:0.75:0.05";
  std::string out;
  std::size_t workers = 1;
  bool inclusive = false;
};

int cmd_score(const ScoreArgs& a, std::ostream& out) {
  const auto thresholds = parse_thresholds(a.thresholds);
  const auto gt = read_ground_truth(read_file(a.gt));
  const auto preds = read_predictions(read_file(a.pred));
  const auto images = join_images(gt, preds);
  const auto rule = a.inclusive ? HitRule::GreaterEqual : HitRule::Greater;
  const auto scores = score_images(images, thresholds, rule, a.workers);
  const auto report = build_report(images, scores, thresholds);
  if (!a.out.empty()) write_file(a.out, write_report(report));
  out << text::format_fixed6(report.dataset_map) << '\n';
  return kOk;
}

struct NmsArgs {
  std::string in;
  std::string out;
  std::string mode = "hard";
  double iou = 0.5;
  double sigma = 0.5;
  double score_cut = 0.001;
};

int cmd_nms(const NmsArgs& a, std::ostream& out) {
  NmsMode mode;
  mode.score_cutoff = a.score_cut;
  if (a.mode == "hard") {
    mode.kind = nms_mode::Hard{a.iou};
  } else if (a.mode == "soft-linear") {
    mode.kind = nms_mode::SoftLinear{a.iou};
  } else if (a.mode == "soft-gaussian") {
    mode.kind = nms_mode::SoftGaussian{a.sigma};
  } else {
    throw std::invalid_argument("unknown NMS mode '" + a.mode + "'");
  }
  validate(mode);

  const auto records = read_detections(read_file(a.in));
  std::vector<std::string> order;
  std::map<std::string, std::vector<Detection>> groups;
  for (const auto& r : records) {
    auto [it, inserted] = groups.try_emplace(r.image_id);
    if (inserted) order.push_back(r.image_id);
    it->second.push_back(r.detection);
  }
  std::vector<DetectionRecord> kept;
  for (const auto& id : order) {
    for (const auto& d : nms(groups[id], mode)) kept.push_back({id, d});
  }
  emit(a.out, write_detections(kept), out);
  return kOk;
}

struct AnchorArgs {
  double base = 16.0;
  std::string scales = "8,16,32";
  std::string ratios = "0.5,1,2";
  double stride = 16.0;
  std::string grid = "1x1";
  std::string out;
};

int cmd_anchors(const AnchorArgs& a, std::ostream& out) {
  AnchorSpec spec;
  spec.base_size = a.base;
  spec.scales = parse_real_list(a.scales, "--scales");
  spec.ratios = parse_real_list(a.ratios, "--ratios");
  spec.stride = a.stride;
  const auto [gw, gh] = parse_dims(a.grid);
  emit(a.out, write_boxes(generate_anchors(spec, gw, gh)), out);
  return kOk;
}

struct PreprocessArgs {
  std::string in;
  std::string out;
  bool clahe = false;
  double clip = 2.0;
  std::string tiles = "8x8";
  std::size_t resize = 0;
  double rotate = 0.0;
  double shift_x = 0.0;
  double shift_y = 0.0;
  bool hflip = false;
  bool random_augment = false;
  double max_rotate = 0.0;
  double max_shift = 0.0;
  double flip_prob = 0.5;
  std::uint64_t seed = 0;
  std::string boxes;
  std::string boxes_out;
};

int cmd_preprocess(const PreprocessArgs& a, std::ostream& out) {
  GrayImage img = read_pgm_file(a.in);
  std::vector<BBox> boxes;
  if (!a.boxes.empty()) boxes = read_boxes(read_file(a.boxes));

  if (a.clahe) {
    const auto [tx, ty] = parse_dims(a.tiles);
    img = clahe(img, {tx, ty, a.clip});
  }
  if (a.resize > 0) {
    const double sx = static_cast<double>(a.resize) / static_cast<double>(img.width());
    const double sy = static_cast<double>(a.resize) / static_cast<double>(img.height());
    img = resize(img, a.resize, a.resize);
    boxes = scale_boxes(boxes, sx, sy);
  }

  AugmentSpec spec{a.rotate, a.shift_x, a.shift_y, a.hflip};
  if (a.random_augment) {
    if (a.max_rotate < 0.0 || a.max_shift < 0.0 || a.flip_prob < 0.0 || a.flip_prob > 1.0) {
      throw std::invalid_argument("random augmentation ranges must be non-negative, flip prob in [0,1]");
    }
    std::mt19937_64 rng(a.seed);
    spec.rotation_deg = uniform_real(rng, -a.max_rotate, a.max_rotate);
    spec.shift_x = uniform_real(rng, -a.max_shift, a.max_shift);
    spec.shift_y = uniform_real(rng, -a.max_shift, a.max_shift);
    spec.hflip = uniform_real(rng, 0.0, 1.0) < a.flip_prob;
  }
  auto result = augment(img, boxes, spec);

  write_pgm_file(a.out, result.image);
  if (!a.boxes_out.empty()) write_file(a.boxes_out, write_boxes(result.boxes));
  out << result.image.width() << 'x' << result.image.height() << ' ' << result.boxes.size()
      << " boxes\n";
  return kOk;
}

struct FoldArgs {
  std::string ids;
  std::string gt;
  std::size_t k = 5;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_folds(const FoldArgs& a, std::ostream& out) {
  std::vector<std::string> ids;
  if (!a.ids.empty() == !a.gt.empty()) {
    throw std::invalid_argument("give exactly one of --ids or --gt");
  }
  if (!a.ids.empty()) {
    ids = read_id_list(read_file(a.ids));
  } else {
    for (const auto& img : join_images(read_ground_truth(read_file(a.gt)), {})) {
      ids.push_back(img.patient_id);
    }
  }
  emit(a.out, write_folds(kfold_split(ids, a.k, a.seed)), out);
  return kOk;
}

struct ClassifyArgs {
  std::string gt;
  std::string pred;
  double conf = 0.5;
  std::string out;
};

int cmd_classify(const ClassifyArgs& a, std::ostream& out) {
  if (!(a.conf >= 0.0 && a.conf <= 1.0)) throw std::invalid_argument("--conf must be in [0,1]");
  const auto images = join_images(read_ground_truth(read_file(a.gt)),
                                  read_predictions(read_file(a.pred)));
  std::vector<bool> actual;
  std::vector<bool> predicted;
  for (const auto& img : images) {
    actual.push_back(!img.gt.empty());
    predicted.push_back(std::any_of(img.preds.begin(), img.preds.end(),
                                    [&](const Detection& d) { return d.score >= a.conf; }));
  }
  const auto counts = confusion_counts(actual, predicted);
  emit(a.out, write_classification_report(counts, confusion_metrics(counts)), out);
  return kOk;
}

}  // namespace

ThresholdSet parse_thresholds(const std::string& spec) {
  const auto parts = text::split(spec, ':');
  if (parts.size() == 1) return ThresholdSet(parse_real_list(spec, "--thresholds"));
  if (parts.size() != 3) throw std::invalid_argument("thresholds must be lo:hi:step or a list");
  const auto lo = text::try_parse_real(parts[0]);
  const auto hi = text::try_parse_real(parts[1]);
  const auto step = text::try_parse_real(parts[2]);
  if (!lo || !hi || !step || !(*step > 0.0) || *hi < *lo) {
    throw std::invalid_argument("bad threshold range '" + spec + "'");
  }
  const auto n = static_cast<std::size_t>(std::floor((*hi - *lo) / *step + 1e-9)) + 1;
  std::vector<double> values;
  values.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Snap to 1e-9 so 0.4 + 7 * 0.05 is exactly the double nearest 0.75.
    values.push_back(std::round((*lo + static_cast<double>(i) * *step) * 1e9) / 1e9);
  }
  return ThresholdSet(std::move(values));
}

std::pair<std::size_t, std::size_t> parse_dims(const std::string& spec) {
  const auto x = spec.find_first_of("xX");
  if (x == std::string::npos) throw std::invalid_argument("expected WxH, got '" + spec + "'");
  const auto w = text::parse_int(std::string_view(spec).substr(0, x), 0, "width");
  const auto h = text::parse_int(std::string_view(spec).substr(x + 1), 0, "height");
  if (w < 1 || h < 1) throw std::invalid_argument("dimensions must be >= 1");
  return {static_cast<std::size_t>(w), static_cast<std::size_t>(h)};
}

std::vector<ImageScore> score_images(const std::vector<ImageRecord>& images,
                                     const ThresholdSet& thresholds, HitRule rule,
                                     std::size_t workers) {
  std::vector<ImageScore> scores(images.size());
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(images.size(), 1));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < images.size(); i = next++) {
      scores[i] = score_image(images[i].preds, images[i].gt, thresholds, rule);
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  return scores;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lung-opacity detection toolkit: scoring, NMS, anchors, preprocessing"};
  app.require_subcommand(1);

  ScoreArgs score;
  auto* sc = app.add_subcommand("score", "Score predictions against ground truth (mAP over IoU thresholds)");
  sc->add_option("--gt", score.gt, "Ground-truth CSV")->required();
  sc->add_option("--pred", score.pred, "Predictions CSV")->required();
  sc->add_option("--thresholds", score.thresholds, "lo:hi:step or comma list")->capture_default_str();
  sc->add_option("--out", score.out, "Report JSON path");
  sc->add_option("--workers", score.workers, "Scoring threads")->capture_default_str();
  sc->add_flag("--inclusive", score.inclusive, "Count IoU >= t as a hit (default IoU > t)");

  NmsArgs nms_args;
  auto* nc = app.add_subcommand("nms", "Per-image (Soft-)NMS over a detection CSV");
  nc->add_option("--in", nms_args.in, "Detection CSV")->required();
  nc->add_option("--out", nms_args.out, "Output CSV (default stdout)");
  nc->add_option("--mode", nms_args.mode, "hard|soft-linear|soft-gaussian")->capture_default_str();
  nc->add_option("--iou", nms_args.iou, "IoU threshold")->capture_default_str();
  nc->add_option("--sigma", nms_args.sigma, "Gaussian sigma")->capture_default_str();
  nc->add_option("--score-cut", nms_args.score_cut, "Final score cutoff")->capture_default_str();

  AnchorArgs anchor;
  auto* ac = app.add_subcommand("anchors", "Emit anchors for one feature-map level as CSV");
  ac->add_option("--base", anchor.base, "Base size (px)")->capture_default_str();
  ac->add_option("--scales", anchor.scales, "Comma list of scales")->capture_default_str();
  ac->add_option("--ratios", anchor.ratios, "Comma list of h/w ratios")->capture_default_str();
  ac->add_option("--stride", anchor.stride, "Stride (px)")->capture_default_str();
  ac->add_option("--grid", anchor.grid, "Feature-map size WxH")->capture_default_str();
  ac->add_option("--out", anchor.out, "Output CSV (default stdout)");

  PreprocessArgs pre;
  auto* pc = app.add_subcommand("preprocess", "CLAHE, resize and augment a P5 PGM image");
  pc->add_option("--in", pre.in, "Input PGM")->required();
  pc->add_option("--out", pre.out, "Output PGM")->required();
  pc->add_flag("--clahe", pre.clahe, "Apply CLAHE");
  pc->add_option("--clip", pre.clip, "CLAHE clip limit")->capture_default_str();
  pc->add_option("--tiles", pre.tiles, "CLAHE tile grid WxH")->capture_default_str();
  pc->add_option("--resize", pre.resize, "Resize to NxN (0 = keep)")->capture_default_str();
  pc->add_option("--rotate", pre.rotate, "Rotation in degrees");
  pc->add_option("--shift-x", pre.shift_x, "Horizontal shift (px)");
  pc->add_option("--shift-y", pre.shift_y, "Vertical shift (px)");
  pc->add_flag("--hflip", pre.hflip, "Mirror horizontally");
  pc->add_flag("--random-augment", pre.random_augment, "Sample rotation/shift/flip from --seed");
  pc->add_option("--max-rotate", pre.max_rotate, "Random rotation range (deg)");
  pc->add_option("--max-shift", pre.max_shift, "Random shift range (px)");
  pc->add_option("--flip-prob", pre.flip_prob, "Random flip probability")->capture_default_str();
  pc->add_option("--seed", pre.seed, "Random seed")->capture_default_str();
  pc->add_option("--boxes", pre.boxes, "Box CSV to transform alongside the image");
  pc->add_option("--boxes-out", pre.boxes_out, "Transformed box CSV");

  FoldArgs fold;
  auto* fc = app.add_subcommand("folds", "Seeded k-fold assignment of ids");
  fc->add_option("--ids", fold.ids, "File with one id per line");
  fc->add_option("--gt", fold.gt, "Take patient ids from a ground-truth CSV");
  fc->add_option("--k", fold.k, "Number of folds")->capture_default_str();
  fc->add_option("--seed", fold.seed, "Shuffle seed")->capture_default_str();
  fc->add_option("--out", fold.out, "Output CSV (default stdout)");

  ClassifyArgs cls;
  auto* cc = app.add_subcommand("classify", "Per-image opacity classification metrics");
  cc->add_option("--gt", cls.gt, "Ground-truth CSV")->required();
  cc->add_option("--pred", cls.pred, "Predictions CSV")->required();
  cc->add_option("--conf", cls.conf, "Confidence for a positive image")->capture_default_str();
  cc->add_option("--out", cls.out, "Report JSON path (default stdout)");

  std::vector<const char*> argv{"lungdet"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kBadInput;
  }

  try {
    if (sc->parsed()) return cmd_score(score, out);
    if (nc->parsed()) return cmd_nms(nms_args, out);
    if (ac->parsed()) return cmd_anchors(anchor, out);
    if (pc->parsed()) return cmd_preprocess(pre, out);
    if (fc->parsed()) return cmd_folds(fold, out);
    if (cc->parsed()) return cmd_classify(cls, out);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const std::ios_base::failure& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const std::domain_error& e) {
    err << "error: " << e.what() << '\n';
    return kBadInput;
  }
  return kBadInput;
}

}  // namespace lungdet::cli
