#include <doctest.h>

#include <json.hpp>

#include "oracle_helpers.hpp"

using namespace plopt::testing;
using nlohmann::json;

namespace {

json parse_file(const std::filesystem::path& path) {
  return json::parse(read_file(path));
}

bool file_exists(const std::filesystem::path& p) {
  return std::filesystem::exists(p);
}

constexpr const char* kTinyGt = R"({
  "images": [{"id": 1, "width": 100, "height": 100}],
  "annotations": [{"image_id": 1, "category_id": 0, "bbox": [10, 10, 20, 20]}],
  "categories": [{"id": 0}]
})";

constexpr const char* kTinyPred =
    R"([{"image_id": 1, "category_id": 0, "bbox": [10, 10, 20, 20], "score": 0.9}])";

}  // namespace

TEST_CASE("cli usage errors exit with 2") {
  TempDir dir;
  CHECK(run_tool({}, dir.path()).exit_code == 2);
  CHECK(run_tool({"frobnicate"}, dir.path()).exit_code == 2);
  CHECK(run_tool({"match"}, dir.path()).exit_code == 2);  // missing --gt/--det
  CHECK(run_tool({"optimize", "--config", "x.json"}, dir.path()).exit_code ==
        2);  // missing --method
}

TEST_CASE("cli version and help") {
  TempDir dir;
  const ToolRun version = run_tool({"--version"}, dir.path());
  CHECK(version.exit_code == 0);
  CHECK(version.out.find("0.1.0") != std::string::npos);

  const ToolRun help = run_tool({"--help"}, dir.path());
  CHECK(help.exit_code == 0);
  CHECK(help.out.find("match") != std::string::npos);
  CHECK(help.out.find("optimize") != std::string::npos);
  CHECK(help.out.find("grid-search") != std::string::npos);
}

TEST_CASE("cli input errors exit with 1 and name the file") {
  TempDir dir;
  const ToolRun run =
      run_tool({"match", "--gt", "nope.json", "--det", "also.json"},
               dir.path());
  CHECK(run.exit_code == 1);
  CHECK(run.err.find("error:") != std::string::npos);
  CHECK(run.err.find("nope.json") != std::string::npos);

  write_file(dir / "broken.json", "{not json");
  const ToolRun parse =
      run_tool({"match", "--gt", "broken.json", "--det", "broken.json"},
               dir.path());
  CHECK(parse.exit_code == 1);
  CHECK(parse.err.find("broken.json") != std::string::npos);
}

TEST_CASE("cli output confinement") {
  TempDir dir;
  write_file(dir / "gt.json", kTinyGt);
  write_file(dir / "pred.json", kTinyPred);

  const ToolRun escape = run_tool(
      {"match", "--gt", "gt.json", "--det", "pred.json", "--out",
       "../escape.json"},
      dir.path());
  CHECK(escape.exit_code == 1);
  CHECK(escape.err.find("escapes the output directory") != std::string::npos);

  const ToolRun absolute = run_tool(
      {"match", "--gt", "gt.json", "--det", "pred.json", "--out",
       "/tmp/abs.json"},
      dir.path());
  CHECK(absolute.exit_code == 1);
  CHECK(absolute.err.find("must be a relative path") != std::string::npos);

  // relative subdirectories inside the output dir are fine
  const ToolRun nested = run_tool(
      {"match", "--gt", "gt.json", "--det", "pred.json", "--out",
       "nested/records.json"},
      dir.path());
  CHECK(nested.exit_code == 0);
  CHECK(file_exists(dir / "nested/records.json"));
  CHECK(file_exists(dir / "nested/records.manifest.json"));

  const ToolRun redirected = run_tool(
      {"--output-dir", "sub", "match", "--gt", "gt.json", "--det",
       "pred.json"},
      dir.path());
  CHECK(redirected.exit_code == 0);
  CHECK(file_exists(dir / "sub/match_records.json"));
}

TEST_CASE("cli synthetic workflow end to end") {
  TempDir dir;
  write_file(dir / "config.json", R"({
    "synth": {
      "world": {
        "n_images": 30, "n_classes": 2, "seed": 5,
        "objects_per_image_mean": 2.0, "objects_per_image_dispersion": 1.0,
        "out": "world.json"
      },
      "partition": {"world": "world.json", "n_splits": 2, "seed": 3},
      "detect": {
        "full_truth": "full_truth_0.json", "seed": 9,
        "target_classes": [1], "out": "det0.json"
      }
    }
  })");
  write_file(dir / "config2.json", R"({
    "synth": {
      "detect": {
        "full_truth": "full_truth_1.json", "seed": 10,
        "target_classes": [0], "out": "det1.json"
      }
    }
  })");

  // world
  const ToolRun world =
      run_tool({"synth", "world", "--config", "config.json"}, dir.path());
  REQUIRE(world.exit_code == 0);
  REQUIRE(file_exists(dir / "world.json"));
  const json manifest = parse_file(dir / "world.manifest.json");
  CHECK(manifest.at("command") == "synth world");
  CHECK(manifest.at("tool") == "plopt");
  CHECK(manifest.at("version") == "0.1.0");
  CHECK(manifest.at("seed") == 5);
  CHECK(manifest.at("config_hash").get<std::string>().rfind("fnv1a:", 0) == 0);
  CHECK(manifest.at("outputs") == json::array({"world.json"}));

  // partition
  const ToolRun partition =
      run_tool({"synth", "partition", "--config", "config.json"}, dir.path());
  REQUIRE(partition.exit_code == 0);
  for (const char* name :
       {"dataset_0.json", "dataset_1.json", "full_truth_0.json",
        "full_truth_1.json", "bundle.json", "bundle.manifest.json"}) {
    CHECK(file_exists(dir / name));
  }
  const json bundle = parse_file(dir / "bundle.json");
  CHECK(bundle.at("datasets").size() == 2);
  CHECK(bundle.at("full_truth").size() == 2);

  // detect (one teacher per dataset)
  REQUIRE(run_tool({"synth", "detect", "--config", "config.json"}, dir.path())
              .exit_code == 0);
  REQUIRE(run_tool({"synth", "detect", "--config", "config2.json"}, dir.path())
              .exit_code == 0);
  const json det0 = parse_file(dir / "det0.json");
  REQUIRE(det0.is_array());
  REQUIRE(!det0.empty());
  for (const auto& det : det0) CHECK(det.at("category_id") == 1);

  // match + pr-curve
  const ToolRun match = run_tool({"match", "--gt", "full_truth_0.json",
                                  "--det", "det0.json", "--out",
                                  "records.json"},
                                 dir.path());
  REQUIRE(match.exit_code == 0);
  const json records = parse_file(dir / "records.json");
  CHECK(records.at("classes").size() == 2);  // class 0 has no detections

  REQUIRE(run_tool({"pr-curve", "--records", "records.json", "--out", "curve",
                    "--plot", "curve.svg"},
                   dir.path())
              .exit_code == 0);
  CHECK(file_exists(dir / "curve.json"));
  CHECK(file_exists(dir / "curve.tsv"));
  CHECK(file_exists(dir / "curve.svg"));
  CHECK(read_file(dir / "curve.tsv").rfind(
            "class_id\tthreshold\ttp\tfp\tprecision\trecall\n", 0) == 0);
  CHECK(read_file(dir / "curve.svg").find("<svg") != std::string::npos);

  const ToolRun no_ratios = run_tool(
      {"pr-curve", "--records", "records.json", "--combined"}, dir.path());
  CHECK(no_ratios.exit_code == 1);
  CHECK(no_ratios.err.find("--combined requires --ratios") !=
        std::string::npos);

  // optimize, both methods
  write_file(dir / "opt.json", R"({
    "mode": "single",
    "validation": {"gt": "full_truth_0.json", "detections": "det0.json"}
  })");
  const ToolRun optimize = run_tool(
      {"optimize", "--method", "fmax-pl", "--config", "opt.json"}, dir.path());
  REQUIRE(optimize.exit_code == 0);
  const json policy = parse_file(dir / "policy.json");
  CHECK(policy.at("method") == "fmax_pl");
  CHECK(policy.at("mode") == "single");
  CHECK(policy.at("classes").size() == 2);
  CHECK(file_exists(dir / "policy.tsv"));

  write_file(dir / "optds.json", R"({
    "mode": "single",
    "validation": {"gt": "full_truth_0.json", "detections": "det0.json"},
    "ratios": {"mode": "estimate"},
    "bundle": {"datasets": ["dataset_0.json", "dataset_1.json"]}
  })");
  const ToolRun optimize_ds =
      run_tool({"optimize", "--method", "fmax-ds", "--config", "optds.json",
                "--out", "policy_ds"},
               dir.path());
  REQUIRE(optimize_ds.exit_code == 0);
  CHECK(parse_file(dir / "policy_ds.json").at("method") == "fmax_ds");

  // pseudo-label per dataset, then merge
  REQUIRE(run_tool({"pseudo-label", "--policy", "policy.json", "--det",
                    "det0.json", "--target-gt", "dataset_0.json", "--out",
                    "pseudo0.json", "--detector-id", "t0"},
                   dir.path())
              .exit_code == 0);
  REQUIRE(run_tool({"pseudo-label", "--policy", "policy.json", "--det",
                    "det1.json", "--target-gt", "dataset_1.json", "--out",
                    "pseudo1.json"},
                   dir.path())
              .exit_code == 0);
  const json pseudo0 = parse_file(dir / "pseudo0.json");
  CHECK(pseudo0.at("provenance").at("detector_id") == "t0");
  for (const auto& label : pseudo0.at("labels")) {
    CHECK(label.at("category_id") == 1);
    CHECK(label.at("source") == "pseudo");
  }

  const ToolRun baseline = run_tool(
      {"merge", "--bundle", "bundle.json", "--out", "baseline.json"},
      dir.path());
  REQUIRE(baseline.exit_code == 0);
  const ToolRun merged_run =
      run_tool({"merge", "--bundle", "bundle.json", "--pseudo", "pseudo0.json",
                "pseudo1.json", "--out", "merged.json"},
               dir.path());
  REQUIRE(merged_run.exit_code == 0);
  const json base_doc = parse_file(dir / "baseline.json");
  const json merged_doc = parse_file(dir / "merged.json");
  CHECK(merged_doc.at("images").size() == base_doc.at("images").size());
  CHECK(merged_doc.at("annotations").size() >=
        base_doc.at("annotations").size());

  const ToolRun bad_merge = run_tool(
      {"merge", "--bundle", "bundle.json", "--pseudo", "pseudo0.json",
       "--out", "broken_merge.json"},
      dir.path());
  CHECK(bad_merge.exit_code == 1);
  CHECK(bad_merge.err.find("one per dataset") != std::string::npos);

  // grid-search over an explicit pool
  write_file(dir / "grid.json", R"({
    "mode": "single",
    "iou_threshold": 0.5,
    "grid": {"candidates": [0.2, 0.5, 1.0]},
    "bundle": {
      "datasets": ["dataset_0.json", "dataset_1.json"],
      "detections": ["det0.json", "det1.json"],
      "full_truth": ["full_truth_0.json", "full_truth_1.json"]
    }
  })");
  const ToolRun grid =
      run_tool({"grid-search", "--config", "grid.json"}, dir.path());
  REQUIRE(grid.exit_code == 0);
  const json report = parse_file(dir / "grid_report.json");
  CHECK(report.at("table").size() == 3);
  CHECK(report.at("best").contains("score"));
  CHECK(report.at("policy").at("method") == "grid");
  double best = -1.0;
  for (const auto& row : report.at("table")) {
    best = std::max(best, row.at("score").get<double>());
  }
  CHECK(report.at("best").at("score") == best);

  // config check accepts the configs this run used
  const ToolRun check =
      run_tool({"config", "check", "--config", "grid.json"}, dir.path());
  CHECK(check.exit_code == 0);
  CHECK(check.out.find(": ok") != std::string::npos);
}

TEST_CASE("cli eval commands on hand-checkable inputs") {
  TempDir dir;
  write_file(dir / "gt.json", kTinyGt);
  write_file(dir / "pred.json", kTinyPred);
  write_file(dir / "pseudo.json", R"({
    "labels": [{"image_id": 1, "category_id": 0, "bbox": [10, 10, 20, 20],
                "source": "pseudo", "score": 0.9}]
  })");

  const ToolRun map50 = run_tool(
      {"eval", "map50", "--gt", "gt.json", "--pred", "pred.json"}, dir.path());
  REQUIRE(map50.exit_code == 0);
  const json map_doc = parse_file(dir / "map50.json");
  CHECK(map_doc.at("map50") == 1.0);
  CHECK(map_doc.at("classes").at("0") == 1.0);

  const ToolRun quality =
      run_tool({"eval", "pl-quality", "--gt", "gt.json", "--pred",
                "pseudo.json"},
               dir.path());
  REQUIRE(quality.exit_code == 0);
  const json q_doc = parse_file(dir / "pl_quality.json");
  CHECK(q_doc.at("precision") == 1.0);
  CHECK(q_doc.at("recall") == 1.0);
  CHECK(q_doc.at("f1") == 1.0);
  CHECK(q_doc.at("tp") == 1);
  CHECK(q_doc.at("n_gt") == 1);
}

TEST_CASE("cli config check diagnostics") {
  TempDir dir;
  write_file(dir / "gt.json", kTinyGt);

  write_file(dir / "warn.json", R"({"seeed": 1})");
  const ToolRun warn =
      run_tool({"config", "check", "--config", "warn.json"}, dir.path());
  CHECK(warn.exit_code == 0);  // unknown keys warn but do not fail
  CHECK(warn.err.find("unknown key 'seeed'") != std::string::npos);
  CHECK(warn.out.find(": ok") != std::string::npos);

  write_file(dir / "dangling.json", R"({
    "validation": {"gt": "gt.json", "detections": "missing_dets.json"}
  })");
  const ToolRun dangling =
      run_tool({"config", "check", "--config", "dangling.json"}, dir.path());
  CHECK(dangling.exit_code == 1);
  CHECK(dangling.err.find("missing_dets.json") != std::string::npos);
  CHECK(dangling.err.find("does not exist") != std::string::npos);

  write_file(dir / "badmode.json", R"({"mode": "both"})");
  const ToolRun badmode =
      run_tool({"config", "check", "--config", "badmode.json"}, dir.path());
  CHECK(badmode.exit_code == 1);
  CHECK(badmode.err.find("mode must be") != std::string::npos);

  write_file(dir / "badworld.json",
             R"({"synth": {"world": {"n_images": 0}}})");
  const ToolRun badworld =
      run_tool({"config", "check", "--config", "badworld.json"}, dir.path());
  CHECK(badworld.exit_code == 1);
  CHECK(badworld.err.find("n_images") != std::string::npos);
}

TEST_CASE("cli runs are deterministic across invocations and job counts") {
  const char* config = R"({
    "synth": {
      "world": {"n_images": 20, "n_classes": 3, "seed": 123,
                "out": "world.json"}
    }
  })";
  TempDir a;
  TempDir b;
  write_file(a / "config.json", config);
  write_file(b / "config.json", config);
  REQUIRE(run_tool({"synth", "world", "--config", "config.json"}, a.path())
              .exit_code == 0);
  REQUIRE(run_tool({"--jobs", "3", "synth", "world", "--config",
                    "config.json"},
                   b.path())
              .exit_code == 0);
  CHECK(read_file(a / "world.json") == read_file(b / "world.json"));
  CHECK(read_file(a / "world.manifest.json") ==
        read_file(b / "world.manifest.json"));
}
