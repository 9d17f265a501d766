#include "plopt/dataset_io.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace plopt {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

json parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open '" + path.string() + "'");
  }
  json doc = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) {
    throw ParseError("invalid JSON in '" + path.string() + "'");
  }
  return doc;
}

double require_number(const json& obj, const char* key,
                      const std::string& context) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number()) {
    throw ParseError(context + ": missing or non-numeric field '" +
                     std::string(key) + "'");
  }
  return it->get<double>();
}

std::int64_t require_int(const json& obj, const char* key,
                         const std::string& context) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number_integer()) {
    throw ParseError(context + ": missing or non-integer field '" +
                     std::string(key) + "'");
  }
  return it->get<std::int64_t>();
}

Box parse_bbox(const json& obj, const std::string& context) {
  auto it = obj.find("bbox");
  if (it == obj.end() || !it->is_array() || it->size() != 4) {
    throw ParseError(context + ": 'bbox' must be a 4-element array");
  }
  for (const auto& v : *it) {
    if (!v.is_number()) {
      throw ParseError(context + ": 'bbox' has a non-numeric element");
    }
  }
  Box box{(*it)[0].get<double>(), (*it)[1].get<double>(),
          (*it)[2].get<double>(), (*it)[3].get<double>()};
  if (!box.valid()) {
    throw ValidationError(context + ": box must have finite coordinates and positive size");
  }
  return box;
}

ordered_json bbox_to_json(const Box& box) {
  return ordered_json::array({box.x, box.y, box.w, box.h});
}

}  // namespace

Dataset load_ground_truth(const std::filesystem::path& path) {
  const json doc = parse_file(path);
  if (!doc.is_object()) {
    throw ParseError("'" + path.string() + "': top level must be an object");
  }

  Dataset dataset;
  std::unordered_set<std::int64_t> image_ids;

  const auto images = doc.find("images");
  if (images == doc.end() || !images->is_array()) {
    throw ParseError("'" + path.string() + "': missing 'images' array");
  }
  for (std::size_t i = 0; i < images->size(); ++i) {
    const auto& img = (*images)[i];
    const std::string context =
        path.string() + ": images[" + std::to_string(i) + "]";
    ImageInfo info;
    info.id = require_int(img, "id", context);
    info.width = require_number(img, "width", context);
    info.height = require_number(img, "height", context);
    if (info.id < 0) {
      throw ValidationError(context + ": image id must be non-negative");
    }
    if (auto it = img.find("file_name"); it != img.end() && it->is_string()) {
      info.file_name = it->get<std::string>();
    }
    if (!image_ids.insert(info.id).second) {
      throw ValidationError(context + ": duplicate image id " +
                            std::to_string(info.id));
    }
    dataset.images.push_back(std::move(info));
  }

  const auto categories = doc.find("categories");
  if (categories == doc.end() || !categories->is_array()) {
    throw ParseError("'" + path.string() + "': missing 'categories' array");
  }
  for (std::size_t i = 0; i < categories->size(); ++i) {
    const std::string context =
        path.string() + ": categories[" + std::to_string(i) + "]";
    dataset.class_set.insert(require_int((*categories)[i], "id", context));
  }

  const auto annotations = doc.find("annotations");
  if (annotations == doc.end() || !annotations->is_array()) {
    throw ParseError("'" + path.string() + "': missing 'annotations' array");
  }
  for (std::size_t i = 0; i < annotations->size(); ++i) {
    const auto& ann = (*annotations)[i];
    const std::string context =
        path.string() + ": annotations[" + std::to_string(i) + "]";
    GroundTruthLabel label;
    label.image_id = require_int(ann, "image_id", context);
    label.class_id = require_int(ann, "category_id", context);
    label.box = parse_bbox(ann, context);
    if (auto it = ann.find("source"); it != ann.end()) {
      if (!it->is_string()) {
        throw ParseError(context + ": 'source' must be a string");
      }
      label.source = label_source_from_string(it->get<std::string>());
    } else if (auto ig = ann.find("ignore");
               ig != ann.end() && ig->is_boolean() && ig->get<bool>()) {
      label.source = LabelSource::kIgnore;
    }
    if (auto it = ann.find("score"); it != ann.end() && it->is_number()) {
      label.score = it->get<double>();
      if (label.score < 0.0 || label.score > 1.0) {
        throw ValidationError(context + ": score must be in [0,1]");
      }
    }
    if (!image_ids.contains(label.image_id)) {
      throw ValidationError(context + ": annotation references unknown image " +
                            std::to_string(label.image_id));
    }
    if (label.class_id != kBackgroundClassId &&
        !dataset.class_set.contains(label.class_id)) {
      throw ValidationError(context + ": annotation references undeclared category " +
                            std::to_string(label.class_id));
    }
    dataset.labels.push_back(std::move(label));
  }

  return dataset;
}

std::vector<DetectionRecord> load_detections(
    const std::filesystem::path& path) {
  const json doc = parse_file(path);
  if (!doc.is_array()) {
    throw ParseError("'" + path.string() + "': top level must be an array");
  }
  std::vector<DetectionRecord> records;
  records.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& entry = doc[i];
    const std::string context = path.string() + ": [" + std::to_string(i) + "]";
    DetectionRecord record;
    record.image_id = require_int(entry, "image_id", context);
    record.class_id = require_int(entry, "category_id", context);
    record.box = parse_bbox(entry, context);
    record.score = require_number(entry, "score", context);
    if (record.score < 0.0 || record.score > 1.0) {
      throw ValidationError(context + ": score " +
                            std::to_string(record.score) +
                            " outside [0,1]");
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::string dataset_to_json(const Dataset& dataset) {
  ordered_json doc;
  doc["images"] = ordered_json::array();
  for (const auto& img : dataset.images) {
    ordered_json j;
    j["id"] = img.id;
    j["width"] = img.width;
    j["height"] = img.height;
    j["file_name"] = img.file_name;
    doc["images"].push_back(std::move(j));
  }
  doc["annotations"] = ordered_json::array();
  std::int64_t next_id = 1;
  for (const auto& label : dataset.labels) {
    ordered_json j;
    j["id"] = next_id++;
    j["image_id"] = label.image_id;
    j["category_id"] = label.class_id;
    j["bbox"] = bbox_to_json(label.box);
    j["source"] = to_string(label.source);
    if (label.source == LabelSource::kIgnore) j["ignore"] = true;
    if (label.source != LabelSource::kHuman) j["score"] = label.score;
    doc["annotations"].push_back(std::move(j));
  }
  doc["categories"] = ordered_json::array();
  for (ClassId id : dataset.class_set) {
    ordered_json j;
    j["id"] = id;
    j["name"] = "class_" + std::to_string(id);
    doc["categories"].push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

std::string detections_to_json(const std::vector<DetectionRecord>& detections) {
  ordered_json doc = ordered_json::array();
  for (const auto& det : detections) {
    ordered_json j;
    j["image_id"] = det.image_id;
    j["category_id"] = det.class_id;
    j["bbox"] = bbox_to_json(det.box);
    j["score"] = det.score;
    doc.push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  atomic_write_text(path, dataset_to_json(dataset));
}

void save_detections(const std::vector<DetectionRecord>& detections,
                     const std::filesystem::path& path) {
  atomic_write_text(path, detections_to_json(detections));
}

std::vector<Finding> validate_bundle(const DatasetBundle& bundle) {
  std::vector<Finding> findings;

  std::set<ClassId> union_set;
  for (std::size_t i = 0; i < bundle.datasets.size(); ++i) {
    const auto& dataset = bundle.datasets[i];
    union_set.insert(dataset.class_set.begin(), dataset.class_set.end());
    if (dataset.images.empty()) {
      findings.push_back({Severity::kWarning,
                          "dataset " + std::to_string(i) + " has no images"});
    }
    for (std::size_t j = i + 1; j < bundle.datasets.size(); ++j) {
      for (ClassId id : dataset.class_set) {
        if (bundle.datasets[j].class_set.contains(id)) {
          findings.push_back(
              {Severity::kWarning,
               "class " + std::to_string(id) + " appears in datasets " +
                   std::to_string(i) + " and " + std::to_string(j)});
        }
      }
    }
  }

  std::unordered_map<std::int64_t, std::size_t> image_owner;
  for (std::size_t i = 0; i < bundle.datasets.size(); ++i) {
    for (const auto& img : bundle.datasets[i].images) {
      auto [it, inserted] = image_owner.emplace(img.id, i);
      if (!inserted && it->second != i) {
        findings.push_back(
            {Severity::kWarning,
             "image id " + std::to_string(img.id) + " appears in datasets " +
                 std::to_string(it->second) + " and " + std::to_string(i)});
      }
    }
  }

  if (union_set != bundle.full_class_set) {
    findings.push_back({Severity::kError,
                        "full_class_set differs from the union of member "
                        "class sets"});
  }
  return findings;
}

LabelRatioTable load_ratio_table(const std::filesystem::path& path) {
  const json doc = parse_file(path);
  const json* ratios = &doc;
  if (doc.is_object() && doc.contains("ratios")) ratios = &doc.at("ratios");
  if (!ratios->is_object()) {
    throw ParseError("'" + path.string() +
                     "': expected an object mapping class_id -> {x, mode}");
  }
  LabelRatioTable table;
  for (const auto& [key, value] : ratios->items()) {
    ClassId class_id = 0;
    try {
      class_id = std::stoll(key);
    } catch (const std::exception&) {
      throw ParseError("'" + path.string() + "': class key '" + key +
                       "' is not an integer");
    }
    LabelRatioEntry entry;
    if (value.is_number()) {
      entry.x = value.get<double>();
    } else if (value.is_object()) {
      entry.x = require_number(value, "x", path.string() + ": class " + key);
      if (auto it = value.find("mode"); it != value.end() && it->is_string()) {
        entry.mode = ratio_mode_from_string(it->get<std::string>());
      }
    } else {
      throw ParseError("'" + path.string() + "': class " + key +
                       " must map to a number or an object");
    }
    if (entry.x < 0.0 || entry.x > 1.0) {
      throw ValidationError("'" + path.string() + "': x for class " + key +
                            " outside [0,1]");
    }
    table.entries[class_id] = entry;
  }
  return table;
}

std::string ratio_table_to_json(const LabelRatioTable& table) {
  ordered_json ratios = ordered_json::object();
  for (const auto& [class_id, entry] : table.entries) {
    ordered_json j;
    j["x"] = entry.x;
    j["mode"] = to_string(entry.mode);
    ratios[std::to_string(class_id)] = std::move(j);
  }
  ordered_json doc;
  doc["ratios"] = std::move(ratios);
  return doc.dump(2) + "\n";
}

void save_ratio_table(const LabelRatioTable& table,
                      const std::filesystem::path& path) {
  atomic_write_text(path, ratio_table_to_json(table));
}

void atomic_write_text(const std::filesystem::path& path,
                       const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot write '" + tmp.string() + "'");
    }
    out << content;
    out.flush();
    if (!out) {
      throw IoError("write failed for '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() +
                  "': " + ec.message());
  }
}

}  // namespace plopt
