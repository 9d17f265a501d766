#include "plopt/cli.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "plopt/combined.hpp"
#include "plopt/dataset_io.hpp"
#include "plopt/harness.hpp"
#include "plopt/synth.hpp"
#include "plopt/version.hpp"

namespace plopt {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t hash = 0xCBF29CE484222325ull;
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 0x100000001B3ull;
  }
  return hash;
}

std::string hash_hex(const std::string& data) {
  std::ostringstream out;
  out << "fnv1a:" << std::hex << std::setfill('0') << std::setw(16)
      << fnv1a64(data);
  return out.str();
}

std::string format_double(double value) {
  std::ostringstream out;
  out << std::setprecision(17) << value;
  return out.str();
}

void print_findings(const std::vector<Finding>& findings) {
  for (const auto& f : findings) {
    std::cerr << (f.severity == Severity::kError ? "error: " : "warning: ")
              << f.message << "\n";
  }
}

// ---------------------------------------------------------------------------
// Output handling: confinement to --output-dir, atomic writes, run manifest.

class RunOutputs {
 public:
  RunOutputs(fs::path output_dir, std::string command)
      : output_dir_(std::move(output_dir)), command_(std::move(command)) {
    fs::create_directories(output_dir_);
  }

  void set_config_hash(const std::string& raw) { config_hash_ = hash_hex(raw); }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void add_input(const fs::path& path) { inputs_.push_back(path.string()); }

  fs::path confine(const std::string& name) const {
    fs::path rel(name);
    if (rel.empty() || rel.is_absolute()) {
      throw ValidationError("output name '" + name +
                            "' must be a relative path");
    }
    for (const auto& part : rel) {
      if (part == "..") {
        throw ValidationError("output name '" + name +
                              "' escapes the output directory");
      }
    }
    return output_dir_ / rel;
  }

  void write(const std::string& name, const std::string& content) {
    const fs::path target = confine(name);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    atomic_write_text(target, content);
    outputs_.push_back(name);
  }

  // Writes <stem of primary>.manifest.json listing every output of the run.
  void finalize(const std::string& primary) {
    json manifest;
    manifest["command"] = command_;
    manifest["tool"] = "plopt";
    manifest["version"] = kVersion;
    if (seed_) {
      manifest["seed"] = *seed_;
    } else {
      manifest["seed"] = nullptr;
    }
    manifest["config_hash"] = config_hash_;
    manifest["inputs"] = inputs_;
    manifest["outputs"] = outputs_;
    fs::path stem(primary);
    stem.replace_extension();
    const std::string name = stem.string() + ".manifest.json";
    atomic_write_text(confine(name), manifest.dump(2) + "\n");
  }

 private:
  fs::path output_dir_;
  std::string command_;
  std::string config_hash_ = "fnv1a:0000000000000000";
  std::optional<std::uint64_t> seed_;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
};

// ---------------------------------------------------------------------------
// Config documents.

struct ConfigDoc {
  json root;
  fs::path dir;   // paths inside the document resolve against this
  std::string raw;
  fs::path path;
};

ConfigDoc load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open config file");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  ConfigDoc doc;
  doc.raw = buffer.str();
  doc.path = path;
  doc.dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  try {
    doc.root = json::parse(doc.raw);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (!doc.root.is_object()) {
    throw ParseError(path.string() + ": config root must be an object");
  }
  return doc;
}

fs::path resolve_path(const ConfigDoc& doc, const std::string& value) {
  fs::path p(value);
  return p.is_absolute() ? p : doc.dir / p;
}

const json& require_key(const json& node, const std::string& key,
                        const std::string& context) {
  auto it = node.find(key);
  if (it == node.end()) {
    throw ValidationError(context + ": missing required key '" + key + "'");
  }
  return *it;
}

std::string require_string(const json& node, const std::string& key,
                           const std::string& context) {
  const json& value = require_key(node, key, context);
  if (!value.is_string()) {
    throw ValidationError(context + ": key '" + key + "' must be a string");
  }
  return value.get<std::string>();
}

double get_number(const json& node, const std::string& key, double fallback,
                  const std::string& context) {
  auto it = node.find(key);
  if (it == node.end()) return fallback;
  if (!it->is_number()) {
    throw ValidationError(context + ": key '" + key + "' must be a number");
  }
  return it->get<double>();
}

std::int64_t get_int(const json& node, const std::string& key,
                     std::int64_t fallback, const std::string& context) {
  auto it = node.find(key);
  if (it == node.end()) return fallback;
  if (!it->is_number_integer()) {
    throw ValidationError(context + ": key '" + key + "' must be an integer");
  }
  return it->get<std::int64_t>();
}

std::string get_string(const json& node, const std::string& key,
                       const std::string& fallback,
                       const std::string& context) {
  auto it = node.find(key);
  if (it == node.end()) return fallback;
  if (!it->is_string()) {
    throw ValidationError(context + ": key '" + key + "' must be a string");
  }
  return it->get<std::string>();
}

BetaSettings betas_from_config(const json& root, const std::string& context) {
  BetaSettings betas;
  auto it = root.find("betas");
  if (it == root.end()) return betas;
  if (!it->is_object()) {
    throw ValidationError(context + ": key 'betas' must be an object");
  }
  betas.single = get_number(*it, "single", betas.single, context + ": betas");
  betas.high = get_number(*it, "high", betas.high, context + ": betas");
  betas.low = get_number(*it, "low", betas.low, context + ": betas");
  return betas;
}

// ---------------------------------------------------------------------------
// Match-records document (the `match` output / `pr-curve` input).

std::string match_records_to_json(
    const std::map<ClassId, MatchResult>& by_class, double iou_threshold) {
  json doc;
  doc["iou_threshold"] = iou_threshold;
  doc["classes"] = json::array();
  for (const auto& [class_id, result] : by_class) {
    json entry;
    entry["class_id"] = class_id;
    entry["n_gt"] = result.n_gt;
    entry["records"] = json::array();
    for (const auto& record : result.records) {
      json r;
      r["image_id"] = record.image_id;
      r["score"] = record.score;
      r["tp"] = record.is_tp;
      entry["records"].push_back(std::move(r));
    }
    doc["classes"].push_back(std::move(entry));
  }
  return doc.dump(2) + "\n";
}

std::map<ClassId, MatchResult> match_records_from_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open match-records file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  const std::string context = path.string();
  const json& classes = require_key(doc, "classes", context);
  if (!classes.is_array()) {
    throw ParseError(context + ": 'classes' must be an array");
  }
  std::map<ClassId, MatchResult> by_class;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const json& entry = classes[i];
    const std::string entry_ctx =
        context + ": classes[" + std::to_string(i) + "]";
    const ClassId class_id =
        require_key(entry, "class_id", entry_ctx).get<ClassId>();
    MatchResult result;
    result.n_gt = require_key(entry, "n_gt", entry_ctx).get<std::int64_t>();
    if (result.n_gt < 0) {
      throw ValidationError(entry_ctx + ": n_gt must be >= 0");
    }
    const json& records = require_key(entry, "records", entry_ctx);
    if (!records.is_array()) {
      throw ParseError(entry_ctx + ": 'records' must be an array");
    }
    for (std::size_t k = 0; k < records.size(); ++k) {
      const json& r = records[k];
      const std::string r_ctx = entry_ctx + ": records[" + std::to_string(k) + "]";
      MatchRecord record;
      record.class_id = class_id;
      record.image_id = get_int(r, "image_id", 0, r_ctx);
      record.score = require_key(r, "score", r_ctx).get<double>();
      if (record.score < 0.0 || record.score > 1.0) {
        throw ValidationError(r_ctx + ": score must be in [0,1]");
      }
      record.is_tp = require_key(r, "tp", r_ctx).get<bool>();
      result.records.push_back(std::move(record));
    }
    if (!by_class.emplace(class_id, std::move(result)).second) {
      throw ValidationError(entry_ctx + ": duplicate class_id");
    }
  }
  return by_class;
}

// Per-class greedy matching over every class the truth declares.
std::map<ClassId, MatchResult> match_all_classes(
    std::span<const DetectionRecord> detections, const Dataset& truth,
    double iou_threshold, const std::string& det_name) {
  std::map<ClassId, std::vector<DetectionRecord>> dets_by;
  for (const auto& det : detections) {
    if (!truth.class_set.contains(det.class_id)) {
      throw ValidationError(det_name + ": detection class " +
                            std::to_string(det.class_id) +
                            " is not in the ground-truth class set");
    }
    if (!truth.has_image(det.image_id)) {
      throw ValidationError(det_name + ": detection references unknown image " +
                            std::to_string(det.image_id));
    }
    dets_by[det.class_id].push_back(det);
  }
  std::map<ClassId, std::vector<GroundTruthLabel>> gts_by;
  for (const auto& label : truth.labels) gts_by[label.class_id].push_back(label);

  std::map<ClassId, MatchResult> by_class;
  for (ClassId class_id : truth.class_set) {
    by_class[class_id] =
        match_class(dets_by[class_id], gts_by[class_id], iou_threshold);
  }
  return by_class;
}

std::map<ClassId, PRCurve> curves_from_matches(
    const std::map<ClassId, MatchResult>& by_class) {
  std::map<ClassId, PRCurve> curves;
  for (const auto& [class_id, result] : by_class) {
    PRCurve curve = pr_curve(result.records, result.n_gt);
    curve.class_id = class_id;
    curves[class_id] = std::move(curve);
  }
  return curves;
}

// ---------------------------------------------------------------------------
// Curve documents.

std::string curves_to_json(const std::map<ClassId, PRCurve>& curves) {
  json doc;
  doc["combined"] = false;
  doc["classes"] = json::array();
  for (const auto& [class_id, curve] : curves) {
    json entry;
    entry["class_id"] = class_id;
    entry["n_gt"] = curve.n_gt;
    entry["points"] = json::array();
    for (const auto& point : curve.points) {
      json p;
      p["threshold"] = point.threshold;
      p["tp"] = point.tp;
      p["fp"] = point.fp;
      p["precision"] = point.precision;
      p["recall"] = point.recall;
      entry["points"].push_back(std::move(p));
    }
    doc["classes"].push_back(std::move(entry));
  }
  return doc.dump(2) + "\n";
}

std::string curves_to_tsv(const std::map<ClassId, PRCurve>& curves) {
  std::ostringstream out;
  out << "class_id\tthreshold\ttp\tfp\tprecision\trecall\n";
  for (const auto& [class_id, curve] : curves) {
    for (const auto& point : curve.points) {
      out << class_id << '\t' << format_double(point.threshold) << '\t'
          << point.tp << '\t' << point.fp << '\t'
          << format_double(point.precision) << '\t'
          << format_double(point.recall) << '\n';
    }
  }
  return out.str();
}

std::string combined_curves_to_json(
    const std::map<ClassId, std::vector<CombinedPoint>>& curves,
    const LabelRatioTable& ratios) {
  json doc;
  doc["combined"] = true;
  doc["classes"] = json::array();
  for (const auto& [class_id, points] : curves) {
    json entry;
    entry["class_id"] = class_id;
    entry["x"] = ratios.x(class_id);
    entry["points"] = json::array();
    for (const auto& point : points) {
      json p;
      p["threshold"] = point.threshold;
      p["p_ds"] = point.p_ds;
      p["r_ds"] = point.r_ds;
      entry["points"].push_back(std::move(p));
    }
    doc["classes"].push_back(std::move(entry));
  }
  return doc.dump(2) + "\n";
}

std::string combined_curves_to_tsv(
    const std::map<ClassId, std::vector<CombinedPoint>>& curves) {
  std::ostringstream out;
  out << "class_id\tthreshold\tp_ds\tr_ds\n";
  for (const auto& [class_id, points] : curves) {
    for (const auto& point : points) {
      out << class_id << '\t' << format_double(point.threshold) << '\t'
          << format_double(point.p_ds) << '\t' << format_double(point.r_ds)
          << '\n';
    }
  }
  return out.str();
}

// Minimal static curve plot: one polyline per class in PR space.
std::string curves_to_svg(
    const std::vector<std::pair<ClassId, std::vector<std::pair<double, double>>>>&
        per_class_xy,
    const std::string& x_label, const std::string& y_label) {
  constexpr double kW = 640.0, kH = 480.0, kPad = 48.0;
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};
  auto px = [&](double x) { return kPad + x * (kW - 2 * kPad); };
  auto py = [&](double y) { return kH - kPad - y * (kH - 2 * kPad); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW
      << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW << " " << kH
      << "\">\n";
  out << "<rect width=\"" << kW << "\" height=\"" << kH
      << "\" fill=\"white\"/>\n";
  out << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1)
      << "\" y2=\"" << py(0) << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(0)
      << "\" y2=\"" << py(1) << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 12
      << "\" text-anchor=\"middle\" font-size=\"14\">" << x_label
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << kH / 2
      << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 16 "
      << kH / 2 << ")\">" << y_label << "</text>\n";

  std::size_t color = 0;
  for (const auto& [class_id, xy] : per_class_xy) {
    out << "<polyline fill=\"none\" stroke=\""
        << kPalette[color++ % std::size(kPalette)] << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : xy) {
      out << format_double(px(x)) << "," << format_double(py(y)) << " ";
    }
    out << "\"/>\n";
    out << "<text x=\"" << kW - kPad + 4 << "\" y=\"" << kPad + 16.0 * color
        << "\" font-size=\"12\">" << class_id << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Shared loaders for config-driven commands.

struct BundleInputs {
  DatasetBundle bundle;
  std::vector<std::string> dataset_paths;
};

BundleInputs load_bundle_from_config(const ConfigDoc& doc, const json& section,
                                     const std::string& context,
                                     RunOutputs& outputs) {
  const json& list = require_key(section, "datasets", context);
  if (!list.is_array() || list.empty()) {
    throw ValidationError(context + ": 'datasets' must be a non-empty array");
  }
  BundleInputs result;
  std::vector<Dataset> datasets;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (!list[i].is_string()) {
      throw ValidationError(context + ": datasets[" + std::to_string(i) +
                            "] must be a path string");
    }
    const fs::path path = resolve_path(doc, list[i].get<std::string>());
    outputs.add_input(path);
    result.dataset_paths.push_back(path.string());
    datasets.push_back(load_ground_truth(path));
  }
  result.bundle = make_bundle(std::move(datasets));
  return result;
}

std::vector<std::vector<DetectionRecord>> load_detection_lists(
    const ConfigDoc& doc, const json& section, const std::string& key,
    std::size_t expected, const std::string& context, RunOutputs& outputs) {
  const json& list = require_key(section, key, context);
  if (!list.is_array() || list.size() != expected) {
    throw ValidationError(context + ": '" + key + "' must list one file per dataset (" +
                          std::to_string(expected) + " expected)");
  }
  std::vector<std::vector<DetectionRecord>> result;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (!list[i].is_string()) {
      throw ValidationError(context + ": " + key + "[" + std::to_string(i) +
                            "] must be a path string");
    }
    const fs::path path = resolve_path(doc, list[i].get<std::string>());
    outputs.add_input(path);
    result.push_back(load_detections(path));
  }
  return result;
}

std::vector<Dataset> load_dataset_lists(const ConfigDoc& doc,
                                        const json& section,
                                        const std::string& key,
                                        std::size_t expected,
                                        const std::string& context,
                                        RunOutputs& outputs) {
  const json& list = require_key(section, key, context);
  if (!list.is_array() || list.size() != expected) {
    throw ValidationError(context + ": '" + key + "' must list one file per dataset (" +
                          std::to_string(expected) + " expected)");
  }
  std::vector<Dataset> result;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (!list[i].is_string()) {
      throw ValidationError(context + ": " + key + "[" + std::to_string(i) +
                            "] must be a path string");
    }
    const fs::path path = resolve_path(doc, list[i].get<std::string>());
    outputs.add_input(path);
    result.push_back(load_ground_truth(path));
  }
  return result;
}

GridSpec grid_spec_from_config(const json& root, PolicyMode mode,
                               const std::string& context) {
  auto it = root.find("grid");
  if (it == root.end()) {
    return mode == PolicyMode::kSingle ? GridSpec::default_single_pool()
                                       : GridSpec::default_dual_pool();
  }
  const json& grid = *it;
  if (!grid.is_object()) {
    throw ValidationError(context + ": key 'grid' must be an object");
  }
  GridSpec spec;
  spec.mode = mode;
  if (mode == PolicyMode::kSingle) {
    const json& list = require_key(grid, "candidates", context + ": grid");
    if (!list.is_array() || list.empty()) {
      throw ValidationError(context + ": grid.candidates must be a non-empty array");
    }
    for (const auto& value : list) {
      if (!value.is_number()) {
        throw ValidationError(context + ": grid.candidates must hold numbers");
      }
      const double tau = value.get<double>();
      spec.candidates.push_back({tau, tau});
    }
  } else {
    const json& list = require_key(grid, "pairs", context + ": grid");
    if (!list.is_array() || list.empty()) {
      throw ValidationError(context + ": grid.pairs must be a non-empty array");
    }
    for (const auto& value : list) {
      if (!value.is_array() || value.size() != 2 || !value[0].is_number() ||
          !value[1].is_number()) {
        throw ValidationError(context +
                              ": grid.pairs entries must be [tau_h, tau_l]");
      }
      spec.candidates.push_back({value[0].get<double>(), value[1].get<double>()});
    }
  }
  return spec;
}

synth::WorldConfig world_from_json(const json& node, const std::string& context) {
  synth::WorldConfig config;
  config.n_images = get_int(node, "n_images", config.n_images, context);
  config.n_classes = get_int(node, "n_classes", config.n_classes, context);
  config.objects_per_image_mean = get_number(
      node, "objects_per_image_mean", config.objects_per_image_mean, context);
  config.objects_per_image_dispersion =
      get_number(node, "objects_per_image_dispersion",
                 config.objects_per_image_dispersion, context);
  config.image_width = get_number(node, "image_width", config.image_width, context);
  config.image_height =
      get_number(node, "image_height", config.image_height, context);
  config.box_min_size = get_number(node, "box_min_size", config.box_min_size, context);
  config.box_max_size = get_number(node, "box_max_size", config.box_max_size, context);
  config.seed = static_cast<std::uint64_t>(get_int(node, "seed", 0, context));
  return config;
}

synth::DetectorProfile profile_from_json(const json& node,
                                         const std::string& context) {
  synth::DetectorProfile profile;
  profile.recall_rate = get_number(node, "recall_rate", profile.recall_rate, context);
  profile.fp_per_image = get_number(node, "fp_per_image", profile.fp_per_image, context);
  profile.tp_score_a = get_number(node, "tp_score_a", profile.tp_score_a, context);
  profile.tp_score_b = get_number(node, "tp_score_b", profile.tp_score_b, context);
  profile.fp_score_a = get_number(node, "fp_score_a", profile.fp_score_a, context);
  profile.fp_score_b = get_number(node, "fp_score_b", profile.fp_score_b, context);
  profile.localization_jitter = get_number(node, "localization_jitter",
                                           profile.localization_jitter, context);
  profile.fp_box_min_size =
      get_number(node, "fp_box_min_size", profile.fp_box_min_size, context);
  profile.fp_box_max_size =
      get_number(node, "fp_box_max_size", profile.fp_box_max_size, context);
  return profile;
}

// ---------------------------------------------------------------------------
// Subcommand bodies.

struct CommonArgs {
  std::string output_dir = ".";
  int jobs = 1;
};

void cmd_match(const CommonArgs& common, const std::string& gt_path,
               const std::string& det_path, double iou_threshold,
               const std::string& out_name) {
  RunOutputs outputs(common.output_dir, "match");
  outputs.add_input(gt_path);
  outputs.add_input(det_path);
  outputs.set_config_hash("match|" + gt_path + "|" + det_path + "|" +
                          format_double(iou_threshold));

  const Dataset truth = load_ground_truth(gt_path);
  const auto detections = load_detections(det_path);
  const auto by_class =
      match_all_classes(detections, truth, iou_threshold, det_path);

  outputs.write(out_name, match_records_to_json(by_class, iou_threshold));
  outputs.finalize(out_name);
}

void cmd_pr_curve(const CommonArgs& common, const std::string& records_path,
                  bool combined, const std::string& ratios_path,
                  const std::string& out_stem, const std::string& plot_name) {
  RunOutputs outputs(common.output_dir, "pr-curve");
  outputs.add_input(records_path);
  std::string hash_src = "pr-curve|" + records_path;

  const auto by_class = match_records_from_file(records_path);
  const auto curves = curves_from_matches(by_class);

  std::vector<std::pair<ClassId, std::vector<std::pair<double, double>>>> plot_xy;
  if (combined) {
    if (ratios_path.empty()) {
      throw ValidationError("--combined requires --ratios");
    }
    outputs.add_input(ratios_path);
    hash_src += "|combined|" + ratios_path;
    const LabelRatioTable ratios = load_ratio_table(ratios_path);
    std::map<ClassId, std::vector<CombinedPoint>> combined_curves;
    for (const auto& [class_id, curve] : curves) {
      combined_curves[class_id] = combined_curve(curve, ratios.x(class_id));
    }
    outputs.set_config_hash(hash_src);
    outputs.write(out_stem + ".json",
                  combined_curves_to_json(combined_curves, ratios));
    outputs.write(out_stem + ".tsv", combined_curves_to_tsv(combined_curves));
    for (const auto& [class_id, points] : combined_curves) {
      std::vector<std::pair<double, double>> xy;
      for (const auto& p : points) xy.emplace_back(p.r_ds, p.p_ds);
      plot_xy.emplace_back(class_id, std::move(xy));
    }
  } else {
    outputs.set_config_hash(hash_src);
    outputs.write(out_stem + ".json", curves_to_json(curves));
    outputs.write(out_stem + ".tsv", curves_to_tsv(curves));
    for (const auto& [class_id, curve] : curves) {
      std::vector<std::pair<double, double>> xy;
      for (const auto& p : curve.points) xy.emplace_back(p.recall, p.precision);
      plot_xy.emplace_back(class_id, std::move(xy));
    }
  }
  if (!plot_name.empty()) {
    outputs.write(plot_name, curves_to_svg(plot_xy, "recall", "precision"));
  }
  outputs.finalize(out_stem + ".json");
}

void cmd_optimize(const CommonArgs& common, const std::string& method_name,
                  const std::string& mode_name, const std::string& config_path,
                  const std::string& out_stem) {
  const ConfigDoc doc = load_config(config_path);
  const std::string context = doc.path.string();
  RunOutputs outputs(common.output_dir, "optimize");
  outputs.add_input(config_path);
  outputs.set_config_hash(doc.raw);
  if (doc.root.contains("seed")) {
    outputs.set_seed(static_cast<std::uint64_t>(get_int(doc.root, "seed", 0, context)));
  }

  const PolicyMethod method = policy_method_from_string(method_name);
  if (method != PolicyMethod::kFmaxPl && method != PolicyMethod::kFmaxDs) {
    throw ValidationError("optimize supports methods fmax-pl and fmax-ds");
  }
  const PolicyMode mode = policy_mode_from_string(
      !mode_name.empty() ? mode_name
                         : get_string(doc.root, "mode", "single", context));
  const BetaSettings betas = betas_from_config(doc.root, context);
  const double iou_threshold =
      get_number(doc.root, "iou_threshold", kDefaultIouThreshold, context);

  const json& validation = require_key(doc.root, "validation", context);
  const fs::path gt_path =
      resolve_path(doc, require_string(validation, "gt", context + ": validation"));
  const fs::path det_path = resolve_path(
      doc, require_string(validation, "detections", context + ": validation"));
  outputs.add_input(gt_path);
  outputs.add_input(det_path);

  const Dataset truth = load_ground_truth(gt_path);
  const auto detections = load_detections(det_path);
  const auto curves = curves_from_matches(
      match_all_classes(detections, truth, iou_threshold, det_path.string()));

  PolicySelection selection;
  if (method == PolicyMethod::kFmaxPl) {
    selection = select_policy(curves, mode, betas);
  } else {
    LabelRatioTable ratios;
    const json& ratios_cfg = require_key(doc.root, "ratios", context);
    const std::string ratio_mode =
        get_string(ratios_cfg, "mode", "estimate", context + ": ratios");
    if (ratio_mode == "exact") {
      const fs::path ratios_path = resolve_path(
          doc, require_string(ratios_cfg, "path", context + ": ratios"));
      outputs.add_input(ratios_path);
      ratios = load_ratio_table(ratios_path);
    } else if (ratio_mode == "estimate") {
      const json& bundle_cfg = require_key(doc.root, "bundle", context);
      BundleInputs inputs = load_bundle_from_config(doc, bundle_cfg,
                                                    context + ": bundle", outputs);
      print_findings(validate_bundle(inputs.bundle));
      ratios = estimate_ratio_table(inputs.bundle);
    } else {
      throw ValidationError(context + ": ratios.mode must be 'estimate' or 'exact'");
    }
    selection = select_policy_ds(curves, ratios, mode, betas);
  }
  print_findings(selection.findings);

  outputs.write(out_stem + ".json", policy_to_json(selection.policy));
  outputs.write(out_stem + ".tsv", policy_to_tsv(selection.policy));
  outputs.finalize(out_stem + ".json");
}

void cmd_pseudo_label(const CommonArgs& common, const std::string& policy_path,
                      const std::string& det_path, const std::string& gt_path,
                      bool emit_background, const std::string& detector_id,
                      const std::string& out_name) {
  RunOutputs outputs(common.output_dir, "pseudo-label");
  outputs.add_input(policy_path);
  outputs.add_input(det_path);
  outputs.add_input(gt_path);
  outputs.set_config_hash("pseudo-label|" + policy_path + "|" + det_path +
                          "|" + gt_path + "|" +
                          (emit_background ? "bg" : "nobg") + "|" + detector_id);

  const ThresholdPolicy policy = load_policy(policy_path);
  const auto detections = load_detections(det_path);
  const Dataset target = load_ground_truth(gt_path);

  GenerateOptions options;
  options.emit_background_records = emit_background;
  options.detector_id = detector_id;
  const PseudoLabelSet set = generate(detections, policy, target, options);

  outputs.write(out_name, pseudo_set_to_json(set));
  outputs.finalize(out_name);
}

void cmd_merge(const CommonArgs& common, const std::string& bundle_path,
               const std::vector<std::string>& pseudo_paths,
               const std::string& out_name) {
  RunOutputs outputs(common.output_dir, "merge");
  outputs.add_input(bundle_path);
  std::string hash_src = "merge|" + bundle_path;
  for (const auto& p : pseudo_paths) hash_src += "|" + p;
  outputs.set_config_hash(hash_src);

  const ConfigDoc doc = load_config(bundle_path);
  const std::string context = doc.path.string();
  BundleInputs inputs =
      load_bundle_from_config(doc, doc.root, context, outputs);
  print_findings(validate_bundle(inputs.bundle));

  std::vector<PseudoLabelSet> pseudo_sets;
  for (const auto& path : pseudo_paths) {
    outputs.add_input(path);
    pseudo_sets.push_back(load_pseudo_set(path));
  }
  if (!pseudo_sets.empty() &&
      pseudo_sets.size() != inputs.bundle.datasets.size()) {
    throw ValidationError("merge: got " + std::to_string(pseudo_sets.size()) +
                          " pseudo sets for " +
                          std::to_string(inputs.bundle.datasets.size()) +
                          " datasets (need none or one per dataset)");
  }

  const Dataset merged = merge_bundle(inputs.bundle, pseudo_sets);
  outputs.write(out_name, dataset_to_json(merged));
  outputs.finalize(out_name);
}

void cmd_grid_search(const CommonArgs& common, const std::string& mode_name,
                     const std::string& config_path,
                     const std::string& out_stem) {
  const ConfigDoc doc = load_config(config_path);
  const std::string context = doc.path.string();
  RunOutputs outputs(common.output_dir, "grid-search");
  outputs.add_input(config_path);
  outputs.set_config_hash(doc.raw);
  if (doc.root.contains("seed")) {
    outputs.set_seed(static_cast<std::uint64_t>(get_int(doc.root, "seed", 0, context)));
  }

  const PolicyMode mode = policy_mode_from_string(
      !mode_name.empty() ? mode_name
                         : get_string(doc.root, "mode", "single", context));
  const double iou_threshold =
      get_number(doc.root, "iou_threshold", kDefaultIouThreshold, context);
  const GridSpec spec = grid_spec_from_config(doc.root, mode, context);

  const json& bundle_cfg = require_key(doc.root, "bundle", context);
  BundleInputs inputs =
      load_bundle_from_config(doc, bundle_cfg, context + ": bundle", outputs);
  print_findings(validate_bundle(inputs.bundle));
  const auto detections = load_detection_lists(
      doc, bundle_cfg, "detections", inputs.bundle.datasets.size(),
      context + ": bundle", outputs);
  const auto full_truth = load_dataset_lists(
      doc, bundle_cfg, "full_truth", inputs.bundle.datasets.size(),
      context + ": bundle", outputs);
  const PseudoQualityEvaluator evaluator =
      make_pseudo_quality_evaluator(inputs.bundle, full_truth, iou_threshold);

  auto table_json = [&](const std::vector<GridSearchRow>& table) {
    json rows = json::array();
    for (const auto& row : table) {
      json r;
      r["tau_h"] = row.candidate.tau_h;
      r["tau_l"] = row.candidate.tau_l;
      r["score"] = row.score;
      rows.push_back(std::move(r));
    }
    return rows;
  };
  auto table_tsv = [](const std::vector<GridSearchRow>& table) {
    std::ostringstream out;
    out << "tau_h\ttau_l\tscore\n";
    for (const auto& row : table) {
      out << format_double(row.candidate.tau_h) << '\t'
          << format_double(row.candidate.tau_l) << '\t'
          << format_double(row.score) << '\n';
    }
    return out.str();
  };

  try {
    const GridSearchResult result =
        grid_search(inputs.bundle, detections, spec, evaluator, common.jobs);
    json doc_out;
    doc_out["mode"] = to_string(mode);
    doc_out["table"] = table_json(result.table);
    doc_out["best"] = {{"tau_h", result.best.tau_h},
                       {"tau_l", result.best.tau_l},
                       {"score", result.best_score}};
    doc_out["policy"] = json::parse(policy_to_json(result.best_policy));
    outputs.write(out_stem + ".json", doc_out.dump(2) + "\n");
    outputs.write(out_stem + ".tsv", table_tsv(result.table));
    outputs.finalize(out_stem + ".json");
  } catch (const GridSearchError& e) {
    json doc_out;
    doc_out["mode"] = to_string(mode);
    doc_out["error"] = e.what();
    doc_out["table"] = table_json(e.partial_table);
    outputs.write(out_stem + ".json", doc_out.dump(2) + "\n");
    outputs.write(out_stem + ".tsv", table_tsv(e.partial_table));
    outputs.finalize(out_stem + ".json");
    throw ValidationError(std::string("grid-search: ") + e.what() +
                          " (partial table written)");
  }
}

void cmd_synth_world(const CommonArgs& common, const std::string& config_path) {
  const ConfigDoc doc = load_config(config_path);
  const std::string context = doc.path.string();
  const json& synth_cfg = require_key(doc.root, "synth", context);
  const json& world_cfg = require_key(synth_cfg, "world", context + ": synth");
  const synth::WorldConfig config =
      world_from_json(world_cfg, context + ": synth.world");

  RunOutputs outputs(common.output_dir, "synth world");
  outputs.add_input(config_path);
  outputs.set_config_hash(doc.raw);
  outputs.set_seed(config.seed);

  const Dataset world = synth::generate_world(config, common.jobs);
  const std::string out_name =
      get_string(world_cfg, "out", "world.json", context + ": synth.world");
  outputs.write(out_name, dataset_to_json(world));
  outputs.finalize(out_name);
}

void cmd_synth_partition(const CommonArgs& common,
                         const std::string& config_path) {
  const ConfigDoc doc = load_config(config_path);
  const std::string context = doc.path.string();
  const json& synth_cfg = require_key(doc.root, "synth", context);
  const json& part_cfg =
      require_key(synth_cfg, "partition", context + ": synth");
  const std::string part_ctx = context + ": synth.partition";

  const fs::path world_path =
      resolve_path(doc, require_string(part_cfg, "world", part_ctx));
  const int n_splits = static_cast<int>(get_int(part_cfg, "n_splits", 2, part_ctx));
  const auto seed = static_cast<std::uint64_t>(get_int(part_cfg, "seed", 0, part_ctx));
  const std::string prefix = get_string(part_cfg, "prefix", "", part_ctx);

  RunOutputs outputs(common.output_dir, "synth partition");
  outputs.add_input(config_path);
  outputs.add_input(world_path);
  outputs.set_config_hash(doc.raw);
  outputs.set_seed(seed);

  const Dataset world = load_ground_truth(world_path);
  const synth::PartitionResult result =
      synth::partition_classes(world, n_splits, seed);

  json bundle_doc;
  bundle_doc["datasets"] = json::array();
  bundle_doc["full_truth"] = json::array();
  for (int i = 0; i < n_splits; ++i) {
    const std::string ds_name =
        prefix + "dataset_" + std::to_string(i) + ".json";
    const std::string ft_name =
        prefix + "full_truth_" + std::to_string(i) + ".json";
    outputs.write(ds_name, dataset_to_json(result.bundle.datasets[i]));
    outputs.write(ft_name, dataset_to_json(result.full_truth[i]));
    bundle_doc["datasets"].push_back(ds_name);
    bundle_doc["full_truth"].push_back(ft_name);
  }
  const std::string bundle_name = prefix + "bundle.json";
  outputs.write(bundle_name, bundle_doc.dump(2) + "\n");
  outputs.finalize(bundle_name);
}

void cmd_synth_detect(const CommonArgs& common, const std::string& config_path) {
  const ConfigDoc doc = load_config(config_path);
  const std::string context = doc.path.string();
  const json& synth_cfg = require_key(doc.root, "synth", context);
  const json& det_cfg = require_key(synth_cfg, "detect", context + ": synth");
  const std::string det_ctx = context + ": synth.detect";

  const fs::path truth_path =
      resolve_path(doc, require_string(det_cfg, "full_truth", det_ctx));
  const auto seed = static_cast<std::uint64_t>(get_int(det_cfg, "seed", 0, det_ctx));
  const synth::DetectorProfile profile = profile_from_json(
      det_cfg.contains("profile") ? det_cfg["profile"] : json::object(),
      det_ctx + ": profile");

  RunOutputs outputs(common.output_dir, "synth detect");
  outputs.add_input(config_path);
  outputs.add_input(truth_path);
  outputs.set_config_hash(doc.raw);
  outputs.set_seed(seed);

  const Dataset truth = load_ground_truth(truth_path);
  std::set<ClassId> targets;
  auto targets_it = det_cfg.find("target_classes");
  if (targets_it == det_cfg.end() ||
      (targets_it->is_string() && *targets_it == "all")) {
    targets = truth.class_set;
  } else if (targets_it->is_array()) {
    for (const auto& value : *targets_it) {
      if (!value.is_number_integer()) {
        throw ValidationError(det_ctx + ": target_classes must hold integers");
      }
      targets.insert(value.get<ClassId>());
    }
  } else {
    throw ValidationError(det_ctx +
                          ": target_classes must be an array or \"all\"");
  }

  const auto detections =
      synth::simulate_detector(truth, targets, profile, seed, common.jobs);
  const std::string out_name =
      get_string(det_cfg, "out", "detections.json", det_ctx);
  outputs.write(out_name, detections_to_json(detections));
  outputs.finalize(out_name);
}

void cmd_eval_map50(const CommonArgs& common, const std::string& gt_path,
                    const std::string& pred_path, const std::string& out_name) {
  RunOutputs outputs(common.output_dir, "eval map50");
  outputs.add_input(gt_path);
  outputs.add_input(pred_path);
  outputs.set_config_hash("eval map50|" + gt_path + "|" + pred_path);

  const Dataset truth = load_ground_truth(gt_path);
  const auto detections = load_detections(pred_path);
  const Map50Result result = map_50(detections, truth);

  json doc;
  doc["map50"] = result.map;
  doc["classes"] = json::object();
  for (const auto& [class_id, ap] : result.per_class) {
    doc["classes"][std::to_string(class_id)] = ap;
  }
  outputs.write(out_name, doc.dump(2) + "\n");
  outputs.finalize(out_name);
}

void cmd_eval_pl_quality(const CommonArgs& common, const std::string& gt_path,
                         const std::string& pred_path, double iou_threshold,
                         const std::string& out_name) {
  RunOutputs outputs(common.output_dir, "eval pl-quality");
  outputs.add_input(gt_path);
  outputs.add_input(pred_path);
  outputs.set_config_hash("eval pl-quality|" + gt_path + "|" + pred_path +
                          "|" + format_double(iou_threshold));

  const Dataset truth = load_ground_truth(gt_path);
  const PseudoLabelSet pseudo = load_pseudo_set(pred_path);
  const QualityReport report =
      evaluate_pseudo_quality(pseudo, truth, iou_threshold);
  print_findings(report.findings);

  json doc;
  doc["precision"] = report.precision;
  doc["recall"] = report.recall;
  doc["f1"] = report.f1;
  doc["tp"] = report.tp;
  doc["fp"] = report.fp;
  doc["n_gt"] = report.n_gt;
  outputs.write(out_name, doc.dump(2) + "\n");
  outputs.finalize(out_name);
}

// Schema walk for `config check`: types and referenced-path existence.
int cmd_config_check(const std::string& config_path) {
  const ConfigDoc doc = load_config(config_path);
  const std::string context = doc.path.string();
  std::vector<Finding> findings;
  auto check_path = [&](const json& node, const std::string& key,
                        const std::string& ctx) {
    auto it = node.find(key);
    if (it == node.end()) return;
    if (!it->is_string()) {
      findings.push_back({Severity::kError, ctx + ": '" + key + "' must be a path string"});
      return;
    }
    const fs::path path = resolve_path(doc, it->get<std::string>());
    if (!fs::exists(path)) {
      findings.push_back({Severity::kError, ctx + ": " + path.string() + " does not exist"});
    }
  };
  auto check_path_list = [&](const json& node, const std::string& key,
                             const std::string& ctx) {
    auto it = node.find(key);
    if (it == node.end()) return;
    if (!it->is_array()) {
      findings.push_back({Severity::kError, ctx + ": '" + key + "' must be an array of paths"});
      return;
    }
    for (std::size_t i = 0; i < it->size(); ++i) {
      if (!(*it)[i].is_string()) {
        findings.push_back({Severity::kError, ctx + ": " + key + "[" +
                                                  std::to_string(i) +
                                                  "] must be a path string"});
        continue;
      }
      const fs::path path = resolve_path(doc, (*it)[i].get<std::string>());
      if (!fs::exists(path)) {
        findings.push_back({Severity::kError, ctx + ": " + path.string() + " does not exist"});
      }
    }
  };

  static const std::set<std::string> kKnown = {
      "seed",   "iou_threshold", "mode",  "betas",
      "ratios", "validation",    "bundle", "grid",
      "synth",  "pseudo_label"};
  for (const auto& [key, value] : doc.root.items()) {
    if (!kKnown.contains(key)) {
      findings.push_back({Severity::kWarning, context + ": unknown key '" + key + "'"});
    }
  }
  if (doc.root.contains("mode")) {
    const std::string mode = get_string(doc.root, "mode", "single", context);
    if (mode != "single" && mode != "dual") {
      findings.push_back({Severity::kError, context + ": mode must be 'single' or 'dual'"});
    }
  }
  if (doc.root.contains("iou_threshold")) {
    const double iou = get_number(doc.root, "iou_threshold", 0.5, context);
    if (iou <= 0.0 || iou > 1.0) {
      findings.push_back({Severity::kError, context + ": iou_threshold must be in (0,1]"});
    }
  }
  if (auto it = doc.root.find("validation"); it != doc.root.end()) {
    if (!it->is_object()) {
      findings.push_back({Severity::kError, context + ": 'validation' must be an object"});
    } else {
      check_path(*it, "gt", context + ": validation");
      check_path(*it, "detections", context + ": validation");
    }
  }
  if (auto it = doc.root.find("ratios"); it != doc.root.end()) {
    if (!it->is_object()) {
      findings.push_back({Severity::kError, context + ": 'ratios' must be an object"});
    } else {
      const std::string mode = get_string(*it, "mode", "estimate", context + ": ratios");
      if (mode != "estimate" && mode != "exact") {
        findings.push_back({Severity::kError, context + ": ratios.mode must be 'estimate' or 'exact'"});
      }
      if (mode == "exact") check_path(*it, "path", context + ": ratios");
    }
  }
  if (auto it = doc.root.find("bundle"); it != doc.root.end()) {
    if (!it->is_object()) {
      findings.push_back({Severity::kError, context + ": 'bundle' must be an object"});
    } else {
      check_path_list(*it, "datasets", context + ": bundle");
      check_path_list(*it, "detections", context + ": bundle");
      check_path_list(*it, "full_truth", context + ": bundle");
    }
  }
  if (auto it = doc.root.find("synth"); it != doc.root.end()) {
    if (!it->is_object()) {
      findings.push_back({Severity::kError, context + ": 'synth' must be an object"});
    } else {
      if (auto part = it->find("partition"); part != it->end() && part->is_object()) {
        check_path(*part, "world", context + ": synth.partition");
      }
      if (auto det = it->find("detect"); det != it->end() && det->is_object()) {
        check_path(*det, "full_truth", context + ": synth.detect");
      }
      if (auto world = it->find("world"); world != it->end() && world->is_object()) {
        try {
          world_from_json(*world, context + ": synth.world").validate();
        } catch (const std::exception& e) {
          findings.push_back({Severity::kError, std::string(e.what())});
        }
      }
    }
  }
  if (auto it = doc.root.find("grid"); it != doc.root.end()) {
    if (!it->is_object()) {
      findings.push_back({Severity::kError, context + ": 'grid' must be an object"});
    }
  }

  print_findings(findings);
  if (has_error(findings)) return 1;
  std::cout << context << ": ok\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Pseudo-label threshold optimization for multi-dataset object detection"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.fallthrough();

  CommonArgs common;
  app.add_option("--output-dir", common.output_dir,
                 "Directory all output files are written to")
      ->capture_default_str();
  app.add_option("--jobs", common.jobs, "Worker thread bound")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  int exit_code = 0;
  auto guard = [&](auto&& body) {
    return [&, body]() {
      try {
        body();
      } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        exit_code = 1;
      } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        exit_code = 1;
      } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        exit_code = 1;
      } catch (const ContractViolation& e) {
        std::cerr << "error: " << e.what() << "\n";
        exit_code = 1;
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        exit_code = 1;
      }
    };
  };

  // match
  {
    auto* cmd = app.add_subcommand("match", "Greedy IoU matching of detections to ground truth");
    auto gt = std::make_shared<std::string>();
    auto det = std::make_shared<std::string>();
    auto iou = std::make_shared<double>(kDefaultIouThreshold);
    auto out = std::make_shared<std::string>("match_records.json");
    cmd->add_option("--gt", *gt, "Ground-truth annotation file")->required();
    cmd->add_option("--det", *det, "Detection-results file")->required();
    cmd->add_option("--iou", *iou, "IoU matching threshold")->capture_default_str();
    cmd->add_option("--out", *out, "Output file name")->capture_default_str();
    cmd->callback(guard([&common, gt, det, iou, out] {
      cmd_match(common, *gt, *det, *iou, *out);
    }));
  }

  // pr-curve
  {
    auto* cmd = app.add_subcommand("pr-curve", "Precision/recall curve from match records");
    auto records = std::make_shared<std::string>();
    auto combined = std::make_shared<bool>(false);
    auto ratios = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto plot = std::make_shared<std::string>();
    cmd->add_option("--records", *records, "Match-records file")->required();
    cmd->add_flag("--combined", *combined,
                  "Emit the combined human+pseudo label-set curve");
    cmd->add_option("--ratios", *ratios, "Label-ratio table file (for --combined)");
    cmd->add_option("--out", *out, "Output stem (default pr_curve / combined_curve)");
    cmd->add_option("--plot", *plot, "Also render the curves to this SVG file");
    cmd->callback(guard([&common, records, combined, ratios, out, plot] {
      const std::string stem =
          !out->empty() ? *out : (*combined ? "combined_curve" : "pr_curve");
      cmd_pr_curve(common, *records, *combined, *ratios, stem, *plot);
    }));
  }

  // optimize
  {
    auto* cmd = app.add_subcommand("optimize", "Select per-class thresholds by F-beta maximization");
    auto method = std::make_shared<std::string>();
    auto mode = std::make_shared<std::string>();
    auto config = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>("policy");
    cmd->add_option("--method", *method, "fmax-pl or fmax-ds")
        ->required()
        ->check(CLI::IsMember({"fmax-pl", "fmax-ds"}));
    cmd->add_option("--mode", *mode, "single or dual (default: config, then single)")
        ->check(CLI::IsMember({"single", "dual"}));
    cmd->add_option("--config", *config, "Run-config file")->required();
    cmd->add_option("--out", *out, "Output stem")->capture_default_str();
    cmd->callback(guard([&common, method, mode, config, out] {
      cmd_optimize(common, *method, *mode, *config, *out);
    }));
  }

  // pseudo-label
  {
    auto* cmd = app.add_subcommand("pseudo-label", "Apply a threshold policy to teacher detections");
    auto policy = std::make_shared<std::string>();
    auto det = std::make_shared<std::string>();
    auto gt = std::make_shared<std::string>();
    auto background = std::make_shared<bool>(false);
    auto detector_id = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>("pseudo_labels.json");
    cmd->add_option("--policy", *policy, "Threshold-policy file")->required();
    cmd->add_option("--det", *det, "Teacher detections file")->required();
    cmd->add_option("--target-gt", *gt, "Target dataset annotation file")->required();
    cmd->add_flag("--emit-background", *background,
                  "Emit explicit whole-image pseudo-background records");
    cmd->add_option("--detector-id", *detector_id, "Provenance tag for the teacher");
    cmd->add_option("--out", *out, "Output file name")->capture_default_str();
    cmd->callback(guard([&common, policy, det, gt, background, detector_id, out] {
      cmd_pseudo_label(common, *policy, *det, *gt, *background, *detector_id, *out);
    }));
  }

  // merge
  {
    auto* cmd = app.add_subcommand("merge", "Merge a dataset bundle (plus optional pseudo sets)");
    auto bundle = std::make_shared<std::string>();
    auto pseudo = std::make_shared<std::vector<std::string>>();
    auto out = std::make_shared<std::string>("merged.json");
    cmd->add_option("--bundle", *bundle, "Bundle document listing dataset files")->required();
    cmd->add_option("--pseudo", *pseudo, "Pseudo-label set files, one per dataset");
    cmd->add_option("--out", *out, "Output file name")->capture_default_str();
    cmd->callback(guard([&common, bundle, pseudo, out] {
      cmd_merge(common, *bundle, *pseudo, *out);
    }));
  }

  // grid-search
  {
    auto* cmd = app.add_subcommand("grid-search", "Exhaustive threshold search with the oracle evaluator");
    auto mode = std::make_shared<std::string>();
    auto config = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>("grid_report");
    cmd->add_option("--mode", *mode, "single or dual (default: config, then single)")
        ->check(CLI::IsMember({"single", "dual"}));
    cmd->add_option("--config", *config, "Run-config file")->required();
    cmd->add_option("--out", *out, "Output stem")->capture_default_str();
    cmd->callback(guard([&common, mode, config, out] {
      cmd_grid_search(common, *mode, *config, *out);
    }));
  }

  // synth
  {
    auto* cmd = app.add_subcommand("synth", "Synthetic worlds, bundles, and teacher detections");
    cmd->require_subcommand(1);
    auto config = std::make_shared<std::string>();
    cmd->add_option("--config", *config, "Run-config file with a 'synth' section")
        ->required();
    auto* world = cmd->add_subcommand("world", "Generate a fully annotated world");
    world->callback(guard([&common, config] { cmd_synth_world(common, *config); }));
    auto* partition = cmd->add_subcommand("partition", "Split a world into a disjoint-class bundle");
    partition->callback(guard([&common, config] { cmd_synth_partition(common, *config); }));
    auto* detect = cmd->add_subcommand("detect", "Simulate a teacher detector");
    detect->callback(guard([&common, config] { cmd_synth_detect(common, *config); }));
  }

  // eval
  {
    auto* cmd = app.add_subcommand("eval", "Evaluation metrics");
    cmd->require_subcommand(1);

    auto* map50 = cmd->add_subcommand("map50", "Mean average precision at IoU 0.5");
    auto gt = std::make_shared<std::string>();
    auto pred = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>("map50.json");
    map50->add_option("--gt", *gt, "Ground-truth annotation file")->required();
    map50->add_option("--pred", *pred, "Detection-results file")->required();
    map50->add_option("--out", *out, "Output file name")->capture_default_str();
    map50->callback(guard([&common, gt, pred, out] {
      cmd_eval_map50(common, *gt, *pred, *out);
    }));

    auto* quality = cmd->add_subcommand("pl-quality", "Pseudo-label precision/recall/F1 against full truth");
    auto q_gt = std::make_shared<std::string>();
    auto q_pred = std::make_shared<std::string>();
    auto q_iou = std::make_shared<double>(kDefaultIouThreshold);
    auto q_out = std::make_shared<std::string>("pl_quality.json");
    quality->add_option("--gt", *q_gt, "Fully annotated truth file")->required();
    quality->add_option("--pred", *q_pred, "Pseudo-label set file")->required();
    quality->add_option("--iou", *q_iou, "IoU matching threshold")->capture_default_str();
    quality->add_option("--out", *q_out, "Output file name")->capture_default_str();
    quality->callback(guard([&common, q_gt, q_pred, q_iou, q_out] {
      cmd_eval_pl_quality(common, *q_gt, *q_pred, *q_iou, *q_out);
    }));
  }

  // config
  {
    auto* cmd = app.add_subcommand("config", "Run-config utilities");
    cmd->require_subcommand(1);
    auto* check = cmd->add_subcommand("check", "Validate a run-config document");
    auto config = std::make_shared<std::string>();
    check->add_option("--config", *config, "Run-config file")->required();
    check->callback(guard([config, &exit_code] {
      exit_code = cmd_config_check(*config);
    }));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message and usage hint to the right stream
    return 2;
  }
  return exit_code;
}

}  // namespace plopt
