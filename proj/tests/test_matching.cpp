#include <doctest.h>

#include <random>

#include "oracle_helpers.hpp"
#include "plopt/matching.hpp"

using namespace plopt;
using namespace plopt::testing;

TEST_CASE("iou basics") {
  const Box a = box_at(0, 0, 10, 10);
  CHECK(iou(a, a) == 1.0);
  // 5px horizontal shift: intersection 50, union 150
  CHECK(iou(a, box_at(5, 0, 10, 10)) == doctest::Approx(1.0 / 3.0));
  CHECK(iou(box_at(0, 0, 1, 1), box_at(5, 5, 1, 1)) == 0.0);
  // shared edge only: zero-width intersection
  CHECK(iou(a, box_at(10, 0, 10, 10)) == 0.0);
  CHECK(iou(a, box_at(0, 0, 10, 8)) == doctest::Approx(0.8));
}

TEST_CASE("iou is scale invariant") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pos(0.0, 100.0);
  std::uniform_real_distribution<double> size(1.0, 50.0);
  for (int i = 0; i < 100; ++i) {
    const Box a = box_at(pos(rng), pos(rng), size(rng), size(rng));
    const Box b = box_at(pos(rng), pos(rng), size(rng), size(rng));
    const double k = 7.5;
    const Box as = box_at(a.x * k, a.y * k, a.w * k, a.h * k);
    const Box bs = box_at(b.x * k, b.y * k, b.w * k, b.h * k);
    CHECK(iou(as, bs) == doctest::Approx(iou(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("greedy matching hand traces") {
  SUBCASE("single overlapping detection is a TP") {
    std::vector<GroundTruthLabel> gts = {gt_label(0, 0, box_at(0, 0, 10, 10))};
    std::vector<DetectionRecord> dets = {
        detection(0, 0, box_at(0, 0, 10, 8), 0.9)};  // IoU 0.8
    const MatchResult result = match_class(dets, gts);
    REQUIRE(result.records.size() == 1);
    CHECK(result.records[0].is_tp);
    CHECK(result.records[0].score == 0.9);
    CHECK(result.records[0].matched_gt == 0);
    CHECK(result.n_gt == 1);
  }

  SUBCASE("second detection on an already-matched box is an FP") {
    std::vector<GroundTruthLabel> gts = {gt_label(0, 0, box_at(0, 0, 10, 10))};
    std::vector<DetectionRecord> dets = {
        detection(0, 0, box_at(0, 0, 10, 9), 0.9),
        detection(0, 0, box_at(0, 1, 10, 9), 0.8)};
    const MatchResult result = match_class(dets, gts);
    REQUIRE(result.records.size() == 2);
    CHECK(result.records[0].is_tp);
    CHECK(result.records[0].score == 0.9);
    CHECK(!result.records[1].is_tp);
    CHECK(!result.records[1].matched_gt.has_value());
  }

  SUBCASE("overlap below the threshold is an FP") {
    std::vector<GroundTruthLabel> gts = {gt_label(0, 0, box_at(0, 0, 10, 10))};
    std::vector<DetectionRecord> dets = {
        detection(0, 0, box_at(5, 0, 10, 10), 0.9)};  // IoU 1/3
    const MatchResult result = match_class(dets, gts);
    REQUIRE(result.records.size() == 1);
    CHECK(!result.records[0].is_tp);
  }

  SUBCASE("no cross-image matches") {
    std::vector<GroundTruthLabel> gts = {gt_label(1, 0, box_at(0, 0, 10, 10))};
    std::vector<DetectionRecord> dets = {
        detection(0, 0, box_at(0, 0, 10, 10), 0.9)};
    const MatchResult result = match_class(dets, gts);
    REQUIRE(result.records.size() == 1);
    CHECK(!result.records[0].is_tp);
  }
}

TEST_CASE("equal-IoU candidates resolve to the lowest ground-truth index") {
  std::vector<GroundTruthLabel> gts = {gt_label(0, 0, box_at(0, 0, 10, 10)),
                                       gt_label(0, 0, box_at(0, 0, 10, 10))};
  std::vector<DetectionRecord> dets = {
      detection(0, 0, box_at(0, 0, 10, 10), 0.9),
      detection(0, 0, box_at(0, 0, 10, 10), 0.8)};
  const MatchResult result = match_class(dets, gts);
  REQUIRE(result.records.size() == 2);
  CHECK(result.records[0].matched_gt == 0);
  CHECK(result.records[1].matched_gt == 1);
  CHECK(result.records[0].is_tp);
  CHECK(result.records[1].is_tp);
}

TEST_CASE("ignore regions") {
  SUBCASE("detection over an ignore region is dropped") {
    std::vector<GroundTruthLabel> gts = {
        gt_label(0, 0, box_at(0, 0, 10, 10), LabelSource::kIgnore)};
    std::vector<DetectionRecord> dets = {
        detection(0, 0, box_at(0, 0, 10, 10), 0.9)};
    const MatchResult result = match_class(dets, gts);
    CHECK(result.records.empty());
    CHECK(result.n_gt == 0);  // ignore labels are not matchable ground truth
  }

  SUBCASE("real match wins when its overlap is at least the ignore overlap") {
    std::vector<GroundTruthLabel> gts = {
        gt_label(0, 0, box_at(0, 0, 10, 9)),  // IoU .9 with det
        gt_label(0, 0, box_at(0, 0, 10, 6), LabelSource::kIgnore)};  // IoU .6
    std::vector<DetectionRecord> dets = {
        detection(0, 0, box_at(0, 0, 10, 10), 0.9)};
    const MatchResult result = match_class(dets, gts);
    REQUIRE(result.records.size() == 1);
    CHECK(result.records[0].is_tp);
    CHECK(result.n_gt == 1);
  }

  SUBCASE("ignore region outranking the best real match drops the detection") {
    std::vector<GroundTruthLabel> gts = {
        gt_label(0, 0, box_at(0, 0, 10, 6)),  // IoU .6 with det
        gt_label(0, 0, box_at(0, 0, 10, 9), LabelSource::kIgnore)};  // IoU .9
    std::vector<DetectionRecord> dets = {
        detection(0, 0, box_at(0, 0, 10, 10), 0.9)};
    const MatchResult result = match_class(dets, gts);
    CHECK(result.records.empty());
  }
}

TEST_CASE("match_class contract checks") {
  std::vector<GroundTruthLabel> gts = {gt_label(0, 1, box_at(0, 0))};
  std::vector<DetectionRecord> dets = {detection(0, 0, box_at(0, 0), 0.5)};
  CHECK_THROWS_AS(match_class(dets, gts), ContractViolation);

  std::vector<GroundTruthLabel> same = {gt_label(0, 0, box_at(0, 0))};
  CHECK_THROWS_AS(match_class(dets, same, 0.0), ContractViolation);
  CHECK_THROWS_AS(match_class(dets, same, 1.5), ContractViolation);
}

namespace {

struct RandomWorld {
  std::vector<GroundTruthLabel> gts;
  std::vector<DetectionRecord> dets;
};

// Clustered random boxes so overlaps (and contention) actually happen.
RandomWorld random_world(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_images(1, 3);
  std::uniform_int_distribution<int> n_gt(0, 5);
  std::uniform_int_distribution<int> n_det(0, 8);
  std::uniform_real_distribution<double> grid(0.0, 40.0);
  std::uniform_real_distribution<double> size(5.0, 20.0);
  std::uniform_real_distribution<double> jitter(-4.0, 4.0);

  RandomWorld world;
  const int images = n_images(rng);
  for (int img = 0; img < images; ++img) {
    const int gts = n_gt(rng);
    for (int i = 0; i < gts; ++i) {
      world.gts.push_back(
          gt_label(img, 0, box_at(grid(rng), grid(rng), size(rng), size(rng))));
    }
    const int dets = n_det(rng);
    for (int i = 0; i < dets; ++i) {
      Box box;
      if (!world.gts.empty() && i % 2 == 0) {
        const auto& base =
            world.gts[std::uniform_int_distribution<std::size_t>(
                0, world.gts.size() - 1)(rng)];
        box = box_at(base.box.x + jitter(rng), base.box.y + jitter(rng),
                     base.box.w, base.box.h);
      } else {
        box = box_at(grid(rng), grid(rng), size(rng), size(rng));
      }
      world.dets.push_back(detection(img, 0, box, 0.0));
    }
  }
  // distinct scores so order-invariance is well-defined
  std::vector<double> scores(world.dets.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = static_cast<double>(i + 1) /
                static_cast<double>(scores.size() + 1);
  }
  std::shuffle(scores.begin(), scores.end(), rng);
  for (std::size_t i = 0; i < world.dets.size(); ++i) {
    world.dets[i].score = scores[i];
  }
  return world;
}

}  // namespace

TEST_CASE("matching properties on random worlds") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    RandomWorld world = random_world(rng);
    const MatchResult result = match_class(world.dets, world.gts);

    // #TP bounded by the ground truth, every gt claimed at most once
    std::int64_t tp = 0;
    std::set<std::size_t> claimed;
    for (const auto& r : result.records) {
      CHECK(r.is_tp == r.matched_gt.has_value());
      if (r.is_tp) {
        ++tp;
        CHECK(claimed.insert(*r.matched_gt).second);
      }
    }
    CHECK(tp <= result.n_gt);

    // cumulative precision/recall over descending score
    std::vector<MatchRecord> ordered = result.records;
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const MatchRecord& a, const MatchRecord& b) {
                       return a.score > b.score;
                     });
    std::int64_t ctp = 0;
    std::int64_t cfp = 0;
    double prev_recall = 0.0;
    for (const auto& r : ordered) {
      if (r.is_tp) {
        ++ctp;
      } else {
        ++cfp;
      }
      const double prec =
          static_cast<double>(ctp) / static_cast<double>(ctp + cfp);
      CHECK(prec >= 0.0);
      CHECK(prec <= 1.0);
      const double recall =
          result.n_gt > 0
              ? static_cast<double>(ctp) / static_cast<double>(result.n_gt)
              : 0.0;
      CHECK(recall >= prev_recall);
      CHECK(recall <= 1.0);
      prev_recall = recall;
    }

    // permuting detections never changes the (score, is_tp) multiset
    std::vector<DetectionRecord> shuffled = world.dets;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const MatchResult again = match_class(shuffled, world.gts);
    auto signature = [](const MatchResult& m) {
      std::vector<std::pair<double, bool>> sig;
      for (const auto& r : m.records) sig.emplace_back(r.score, r.is_tp);
      std::sort(sig.begin(), sig.end());
      return sig;
    };
    CHECK(signature(result) == signature(again));

    // scaling every box by a common factor changes nothing
    RandomWorld scaled = world;
    for (auto& g : scaled.gts) {
      g.box = box_at(g.box.x * 3.0, g.box.y * 3.0, g.box.w * 3.0, g.box.h * 3.0);
    }
    for (auto& d : scaled.dets) {
      d.box = box_at(d.box.x * 3.0, d.box.y * 3.0, d.box.w * 3.0, d.box.h * 3.0);
    }
    const MatchResult scaled_result = match_class(scaled.dets, scaled.gts);
    REQUIRE(scaled_result.records.size() == result.records.size());
    for (std::size_t i = 0; i < result.records.size(); ++i) {
      CHECK(scaled_result.records[i].score == result.records[i].score);
      CHECK(scaled_result.records[i].is_tp == result.records[i].is_tp);
    }
  }
}
