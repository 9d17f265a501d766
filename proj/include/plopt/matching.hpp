#pragma once

#include <optional>
#include <span>
#include <vector>

#include "plopt/types.hpp"

namespace plopt {

// One detection after TP/FP assignment. matched_gt indexes into the
// ground-truth span passed to match_class; it is set iff is_tp.
struct MatchRecord {
  ClassId class_id = 0;
  double score = 0.0;
  bool is_tp = false;
  ImageId image_id = 0;
  std::optional<std::size_t> matched_gt;
};

struct MatchResult {
  std::vector<MatchRecord> records;
  std::int64_t n_gt = 0;  // matchable (non-ignore) ground-truth count
};

// Intersection over union of two boxes; 0 when disjoint.
double iou(const Box& a, const Box& b);

inline constexpr double kDefaultIouThreshold = 0.5;

// Greedy per-image matching of one class: detections are processed in
// descending score order (ties keep input order) and claim the unmatched
// ground-truth box of highest IoU when that IoU >= iou_threshold. Equal-IoU
// candidates resolve to the lowest ground-truth index. Ignore-flagged
// ground truth is never matchable; a detection whose best overlap (at or
// above the threshold) is with an ignore region is dropped entirely.
// Records come back in processing order.
MatchResult match_class(std::span<const DetectionRecord> detections,
                        std::span<const GroundTruthLabel> gts,
                        double iou_threshold = kDefaultIouThreshold);

}  // namespace plopt
