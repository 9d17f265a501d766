#include "plopt/matching.hpp"

#include <algorithm>
#include <unordered_map>

namespace plopt {

double iou(const Box& a, const Box& b) {
  const double ix = std::max(a.x, b.x);
  const double iy = std::max(a.y, b.y);
  const double ix2 = std::min(a.x + a.w, b.x + b.w);
  const double iy2 = std::min(a.y + a.h, b.y + b.h);
  const double iw = ix2 - ix;
  const double ih = iy2 - iy;
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

MatchResult match_class(std::span<const DetectionRecord> detections,
                        std::span<const GroundTruthLabel> gts,
                        double iou_threshold) {
  if (iou_threshold <= 0.0 || iou_threshold > 1.0) {
    throw ContractViolation("iou_threshold must be in (0,1]");
  }
  ClassId class_id = 0;
  bool have_class = false;
  auto check_class = [&](ClassId id) {
    if (!have_class) {
      class_id = id;
      have_class = true;
    } else if (id != class_id) {
      throw ContractViolation("match_class inputs mix class ids " +
                              std::to_string(class_id) + " and " +
                              std::to_string(id));
    }
  };
  for (const auto& det : detections) check_class(det.class_id);
  for (const auto& gt : gts) check_class(gt.class_id);

  // gt indices per image, split into matchable and ignore regions
  std::unordered_map<ImageId, std::vector<std::size_t>> gt_by_image;
  std::unordered_map<ImageId, std::vector<std::size_t>> ignore_by_image;
  std::int64_t n_gt = 0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (gts[i].source == LabelSource::kIgnore) {
      ignore_by_image[gts[i].image_id].push_back(i);
    } else {
      gt_by_image[gts[i].image_id].push_back(i);
      ++n_gt;
    }
  }

  std::vector<std::size_t> order(detections.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return detections[a].score > detections[b].score;
                   });

  std::vector<bool> matched(gts.size(), false);
  MatchResult result;
  result.n_gt = n_gt;
  result.records.reserve(detections.size());

  for (std::size_t idx : order) {
    const auto& det = detections[idx];

    double best_iou = 0.0;
    std::size_t best_gt = 0;
    bool found = false;
    if (auto it = gt_by_image.find(det.image_id); it != gt_by_image.end()) {
      for (std::size_t gi : it->second) {
        if (matched[gi]) continue;
        const double overlap = iou(det.box, gts[gi].box);
        if (overlap > best_iou) {  // equal IoU keeps the lowest gt index
          best_iou = overlap;
          best_gt = gi;
          found = true;
        }
      }
    }

    double best_ignore = 0.0;
    if (auto it = ignore_by_image.find(det.image_id);
        it != ignore_by_image.end()) {
      for (std::size_t gi : it->second) {
        best_ignore = std::max(best_ignore, iou(det.box, gts[gi].box));
      }
    }

    MatchRecord record;
    record.class_id = det.class_id;
    record.score = det.score;
    record.image_id = det.image_id;
    if (found && best_iou >= iou_threshold && best_iou >= best_ignore) {
      record.is_tp = true;
      record.matched_gt = best_gt;
      matched[best_gt] = true;
    } else if (best_ignore >= iou_threshold) {
      continue;  // overlaps an ignore region: neither TP nor FP
    }
    result.records.push_back(std::move(record));
  }
  return result;
}

}  // namespace plopt
