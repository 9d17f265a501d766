#include <doctest.h>

#include "oracle_helpers.hpp"
#include "plopt/dataset_io.hpp"

using namespace plopt;
using namespace plopt::testing;

namespace {

const char* kSmallGt = R"({
  "images": [
    {"id": 0, "width": 640, "height": 480, "file_name": "a.png"},
    {"id": 1, "width": 640, "height": 480, "file_name": "b.png"}
  ],
  "annotations": [
    {"id": 1, "image_id": 0, "category_id": 1, "bbox": [10, 10, 50, 40]},
    {"id": 2, "image_id": 0, "category_id": 2, "bbox": [100, 10, 30, 30]},
    {"id": 3, "image_id": 1, "category_id": 1, "bbox": [5, 5, 20, 20]}
  ],
  "categories": [{"id": 1, "name": "cat"}, {"id": 2, "name": "dog"}]
})";

}  // namespace

TEST_CASE("load_ground_truth parses a small annotation file") {
  TempDir dir;
  write_file(dir / "gt.json", kSmallGt);
  const Dataset ds = load_ground_truth(dir / "gt.json");

  CHECK(ds.images.size() == 2);
  CHECK(ds.labels.size() == 3);
  CHECK(ds.class_set == std::set<ClassId>{1, 2});
  CHECK(ds.images[0].file_name == "a.png");
  CHECK(ds.labels[0].source == LabelSource::kHuman);
  CHECK(ds.labels[0].score == 1.0);
  CHECK(ds.labels[1].box.w == 30.0);
  CHECK(ds.has_image(1));
  CHECK(!ds.has_image(7));
}

TEST_CASE("load_ground_truth with zero annotations keeps declared classes") {
  TempDir dir;
  write_file(dir / "gt.json", R"({
    "images": [{"id": 0, "width": 10, "height": 10}],
    "annotations": [],
    "categories": [{"id": 3}, {"id": 9}]
  })");
  const Dataset ds = load_ground_truth(dir / "gt.json");
  CHECK(ds.labels.empty());
  CHECK(ds.class_set == std::set<ClassId>{3, 9});
}

TEST_CASE("load_ground_truth error paths") {
  TempDir dir;

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_ground_truth(dir / "nope.json"), IoError);
  }
  SUBCASE("malformed json") {
    write_file(dir / "bad.json", "{not json");
    CHECK_THROWS_AS(load_ground_truth(dir / "bad.json"), ParseError);
  }
  SUBCASE("annotation cites unknown image") {
    write_file(dir / "gt.json", R"({
      "images": [{"id": 0, "width": 10, "height": 10}],
      "annotations": [
        {"image_id": 5, "category_id": 1, "bbox": [0, 0, 2, 2]}
      ],
      "categories": [{"id": 1}]
    })");
    CHECK_THROWS_AS(load_ground_truth(dir / "gt.json"), ValidationError);
  }
  SUBCASE("annotation cites undeclared category") {
    write_file(dir / "gt.json", R"({
      "images": [{"id": 0, "width": 10, "height": 10}],
      "annotations": [
        {"image_id": 0, "category_id": 4, "bbox": [0, 0, 2, 2]}
      ],
      "categories": [{"id": 1}]
    })");
    CHECK_THROWS_AS(load_ground_truth(dir / "gt.json"), ValidationError);
  }
  SUBCASE("non-positive box size") {
    write_file(dir / "gt.json", R"({
      "images": [{"id": 0, "width": 10, "height": 10}],
      "annotations": [
        {"image_id": 0, "category_id": 1, "bbox": [0, 0, 0, 2]}
      ],
      "categories": [{"id": 1}]
    })");
    CHECK_THROWS_AS(load_ground_truth(dir / "gt.json"), ValidationError);
  }
  SUBCASE("duplicate image id") {
    write_file(dir / "gt.json", R"({
      "images": [{"id": 0, "width": 10, "height": 10},
                 {"id": 0, "width": 10, "height": 10}],
      "annotations": [],
      "categories": []
    })");
    CHECK_THROWS_AS(load_ground_truth(dir / "gt.json"), ValidationError);
  }
}

TEST_CASE("label source attributes round-trip through the annotation format") {
  Dataset ds;
  ds.images.push_back(image(0));
  ds.class_set = {1, 2};
  ds.labels.push_back(gt_label(0, 1, box_at(0, 0)));
  auto pseudo = gt_label(0, 2, box_at(20, 0), LabelSource::kPseudo);
  pseudo.score = 0.75;
  ds.labels.push_back(pseudo);
  ds.labels.push_back(gt_label(0, 1, box_at(40, 0), LabelSource::kIgnore));
  auto bg = gt_label(0, kBackgroundClassId, box_at(0, 0, 640, 640),
                     LabelSource::kPseudoBackground);
  ds.labels.push_back(bg);

  TempDir dir;
  save_dataset(ds, dir / "ds.json");
  const Dataset back = load_ground_truth(dir / "ds.json");

  REQUIRE(back.labels.size() == 4);
  CHECK(back.labels[0].source == LabelSource::kHuman);
  CHECK(back.labels[1].source == LabelSource::kPseudo);
  CHECK(back.labels[1].score == 0.75);
  CHECK(back.labels[2].source == LabelSource::kIgnore);
  CHECK(back.labels[3].source == LabelSource::kPseudoBackground);
  CHECK(back.labels[3].class_id == kBackgroundClassId);
  CHECK(back.class_set == ds.class_set);

  // canonical serialization is a fixed point
  CHECK(dataset_to_json(back) == dataset_to_json(ds));
}

TEST_CASE("dataset round-trip is structurally exact") {
  TempDir dir;
  write_file(dir / "gt.json", kSmallGt);
  const Dataset first = load_ground_truth(dir / "gt.json");
  save_dataset(first, dir / "copy.json");
  const Dataset second = load_ground_truth(dir / "copy.json");

  CHECK(dataset_to_json(first) == dataset_to_json(second));
  CHECK(first.images.size() == second.images.size());
  REQUIRE(first.labels.size() == second.labels.size());
  for (std::size_t i = 0; i < first.labels.size(); ++i) {
    CHECK(first.labels[i].image_id == second.labels[i].image_id);
    CHECK(first.labels[i].class_id == second.labels[i].class_id);
    CHECK(first.labels[i].box.x == second.labels[i].box.x);
    CHECK(first.labels[i].box.w == second.labels[i].box.w);
  }
}

TEST_CASE("load_detections preserves order and multiplicity") {
  TempDir dir;
  write_file(dir / "det.json", R"([
    {"image_id": 0, "category_id": 1, "bbox": [0, 0, 5, 5], "score": 0.9},
    {"image_id": 0, "category_id": 1, "bbox": [0, 0, 5, 5], "score": 0.9},
    {"image_id": 1, "category_id": 2, "bbox": [1, 1, 5, 5], "score": 0.3},
    {"image_id": 0, "category_id": 1, "bbox": [2, 2, 5, 5], "score": 0.5},
    {"image_id": 2, "category_id": 1, "bbox": [3, 3, 5, 5], "score": 0.1}
  ])");
  const auto dets = load_detections(dir / "det.json");
  REQUIRE(dets.size() == 5);
  CHECK(dets[0].score == 0.9);
  CHECK(dets[1].score == 0.9);  // duplicate row stays duplicated
  CHECK(dets[2].class_id == 2);
  CHECK(dets[4].image_id == 2);

  // second parse of the canonical form gives the same records
  save_detections(dets, dir / "copy.json");
  const auto again = load_detections(dir / "copy.json");
  REQUIRE(again.size() == dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    CHECK(again[i].score == dets[i].score);
    CHECK(again[i].image_id == dets[i].image_id);
  }
}

TEST_CASE("load_detections rejects invalid rows") {
  TempDir dir;
  SUBCASE("score above one") {
    write_file(dir / "det.json",
               R"([{"image_id": 0, "category_id": 1, "bbox": [0,0,5,5], "score": 1.3}])");
    CHECK_THROWS_AS(load_detections(dir / "det.json"), ValidationError);
  }
  SUBCASE("negative score") {
    write_file(dir / "det.json",
               R"([{"image_id": 0, "category_id": 1, "bbox": [0,0,5,5], "score": -0.1}])");
    CHECK_THROWS_AS(load_detections(dir / "det.json"), ValidationError);
  }
  SUBCASE("negative box height") {
    write_file(dir / "det.json",
               R"([{"image_id": 0, "category_id": 1, "bbox": [0,0,5,-5], "score": 0.5}])");
    CHECK_THROWS_AS(load_detections(dir / "det.json"), ValidationError);
  }
  SUBCASE("empty array is fine") {
    write_file(dir / "det.json", "[]");
    CHECK(load_detections(dir / "det.json").empty());
  }
}

TEST_CASE("validate_bundle reports overlaps and broken unions") {
  Dataset a;
  a.images.push_back(image(0));
  a.class_set = {1, 2};
  a.labels.push_back(gt_label(0, 1, box_at(0, 0)));
  Dataset b;
  b.images.push_back(image(10));
  b.class_set = {3};
  b.labels.push_back(gt_label(10, 3, box_at(0, 0)));

  SUBCASE("disjoint sets produce no findings") {
    const auto bundle = make_bundle({a, b});
    CHECK(validate_bundle(bundle).empty());
    CHECK(bundle.full_class_set == std::set<ClassId>{1, 2, 3});
    CHECK(bundle.complement(0) == std::set<ClassId>{3});
    CHECK(bundle.complement(1) == std::set<ClassId>{1, 2});
  }

  SUBCASE("overlapping class sets warn, naming the class") {
    Dataset c = b;
    c.class_set = {2, 3};
    const auto findings = validate_bundle(make_bundle({a, c}));
    REQUIRE(!findings.empty());
    CHECK(!has_error(findings));
    bool mentions = false;
    for (const auto& f : findings) {
      if (f.message.find('2') != std::string::npos) mentions = true;
    }
    CHECK(mentions);
  }

  SUBCASE("tampered full_class_set is an error") {
    auto bundle = make_bundle({a, b});
    bundle.full_class_set.erase(3);
    CHECK(has_error(validate_bundle(bundle)));
  }

  SUBCASE("report is pure") {
    Dataset c = b;
    c.class_set = {2, 3};
    const auto bundle = make_bundle({a, c});
    const auto first = validate_bundle(bundle);
    const auto second = validate_bundle(bundle);
    REQUIRE(first.size() == second.size());
    for (std::size_t i = 0; i < first.size(); ++i) {
      CHECK(first[i].message == second[i].message);
      CHECK((first[i].severity == second[i].severity));
    }
  }
}

TEST_CASE("ratio table serialization") {
  LabelRatioTable table;
  table.entries[0] = {0.6, RatioMode::kImageCountEstimate};
  table.entries[7] = {1.0, RatioMode::kExact};

  TempDir dir;
  save_ratio_table(table, dir / "ratios.json");
  const LabelRatioTable back = load_ratio_table(dir / "ratios.json");

  REQUIRE(back.entries.size() == 2);
  CHECK(back.x(0) == 0.6);
  CHECK(back.x(7) == 1.0);
  CHECK(back.entries.at(0).mode == RatioMode::kImageCountEstimate);
  CHECK(back.entries.at(7).mode == RatioMode::kExact);
  CHECK(back.contains(7));
  CHECK(!back.contains(3));
  CHECK_THROWS_AS(back.x(3), ContractViolation);
}

TEST_CASE("atomic_write_text leaves no temp file behind") {
  TempDir dir;
  atomic_write_text(dir / "out.txt", "payload\n");
  CHECK(read_file(dir / "out.txt") == "payload\n");
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e :
       std::filesystem::directory_iterator(dir.path())) {
    ++entries;
  }
  CHECK(entries == 1);

  // overwrite goes through the same path
  atomic_write_text(dir / "out.txt", "second\n");
  CHECK(read_file(dir / "out.txt") == "second\n");
}
