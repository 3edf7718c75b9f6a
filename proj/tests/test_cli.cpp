#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "semfusion/cli/config.hpp"
#include "semfusion/cli/pipeline.hpp"
#include "semfusion/core/errors.hpp"
#include "semfusion/ingest/dataset.hpp"

using namespace semfusion;
using cli::PipelineConfig;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / ("semfusion_cli_" + leaf);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  return path;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Two boxes and a sphere are overkill for a smoke run; one of each is enough
// to exercise labels, GT sampling and the propagation path.
const char* kSmokeScene = R"json({
  "frame_count": 4,
  "seed": 7,
  "sample_spacing": 0.05,
  "intrinsics": {"fx": 130.0, "fy": 130.0, "cx": 79.5, "cy": 59.5,
                 "width": 160, "height": 120},
  "primitives": [
    {"type": "sphere", "class_id": 3, "instance_id": 1,
     "center": [0.55, 0.0, 0.0], "radius": 0.4},
    {"type": "box", "class_id": 5, "instance_id": 2,
     "min": [-0.95, -0.4, -0.35], "max": [-0.15, 0.4, 0.35]}
  ],
  "waypoints": [
    {"eye": [2.6, 0.0, 1.3], "target": [0, 0, 0]},
    {"eye": [0.0, 2.6, 1.3], "target": [0, 0, 0]},
    {"eye": [-2.6, 0.0, 1.3], "target": [0, 0, 0]},
    {"eye": [0.0, -2.6, 1.3], "target": [0, 0, 0]}
  ]
})json";

PipelineConfig smoke_config(const fs::path& dataset, const fs::path& out) {
  PipelineConfig c;
  c.dataset = dataset;
  c.out = out;
  c.segment.min_area = 30;
  c.semmap.t_iou = 0.2;
  c.semmap.max_support = 1024;
  c.semmap.splat_radius = 2;
  c.fusion.voxel_size = 0.06f;
  c.eps_occ_scale = 2.5;
  return c;
}

}  // namespace

TEST_CASE("config dump/load round trip and hashing") {
  PipelineConfig def;
  CHECK_NOTHROW(def.validate());

  const std::string dump = cli::dump_config(def);
  CHECK(dump.find("[dataset]") == 0);
  CHECK(dump.find("[propagation]") != std::string::npos);
  CHECK(dump.find("enable = true") != std::string::npos);

  const fs::path dir = scratch_dir("cfg");
  const fs::path file = write_file(dir / "pipeline.cfg", dump);
  PipelineConfig back = cli::load_config(file);
  CHECK(cli::dump_config(back) == dump);
  CHECK(cli::config_hash(back) == cli::config_hash(def));

  const std::string h = cli::config_hash(def);
  REQUIRE(h.size() == 16);
  for (char c : h) CHECK(std::isxdigit(static_cast<unsigned char>(c)));

  // Any field change must move the hash.
  PipelineConfig other = def;
  cli::apply_override(other, "fusion.voxel_size", "0.02");
  CHECK(cli::config_hash(other) != h);

  // Comments, blank lines and inline comments are all tolerated.
  const fs::path noisy = write_file(dir / "noisy.cfg",
                                    "# top comment\n\n[fusion]\n"
                                    "voxel_size = 0.03   # inline\n"
                                    "\n[output]\nseed = 9\n");
  PipelineConfig n = cli::load_config(noisy);
  CHECK(n.fusion.voxel_size == doctest::Approx(0.03));
  CHECK(n.seed == 9);
}

TEST_CASE("config overrides: types, unknown keys, bad values") {
  PipelineConfig c;

  cli::apply_override(c, "dataset.root", "/data/scans/a1");
  CHECK(c.dataset == fs::path("/data/scans/a1"));
  cli::apply_override(c, "dataset.keyframe_stride", "5");
  CHECK(c.keyframe_stride == 5);
  cli::apply_override(c, "propagation.t_p1", "0.85");
  CHECK(c.semmap.t_p1 == doctest::Approx(0.85));
  cli::apply_override(c, "propagation.enable", "off");
  CHECK_FALSE(c.propagation);
  cli::apply_override(c, "propagation.enable", "1");
  CHECK(c.propagation);
  cli::apply_override(c, "project.feature_provider", "file");
  CHECK(c.feature_provider == "file");

  CHECK_THROWS_WITH_AS(cli::apply_override(c, "semmap.t_iou", "0.3"),
                       "unknown config key 'semmap.t_iou'", ConfigError);
  CHECK_THROWS_WITH_AS(cli::apply_override(c, "fusion.voxel_size", "tiny"),
                       "fusion.voxel_size: 'tiny' is not a number", ConfigError);
  CHECK_THROWS_WITH_AS(cli::apply_override(c, "dataset.max_frames", "2.5"),
                       "dataset.max_frames: '2.5' is not an integer", ConfigError);
  CHECK_THROWS_WITH_AS(cli::apply_override(c, "propagation.enable", "maybe"),
                       "propagation.enable: 'maybe' is not a boolean", ConfigError);
}

TEST_CASE("config file errors carry file and line") {
  const fs::path dir = scratch_dir("cfgerr");

  const fs::path bad_key =
      write_file(dir / "a.cfg", "[fusion]\nvoxel_size = 0.05\nvortex = 3\n");
  try {
    cli::load_config(bad_key);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("a.cfg:3: ") != std::string::npos);
    CHECK(msg.find("unknown config key 'fusion.vortex'") != std::string::npos);
  }

  const fs::path no_eq = write_file(dir / "b.cfg", "[output]\nseed 4\n");
  CHECK_THROWS_AS(cli::load_config(no_eq), ConfigError);
  try {
    cli::load_config(no_eq);
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find(":2: expected key = value") !=
          std::string::npos);
  }

  const fs::path unterminated = write_file(dir / "c.cfg", "[fusion\n");
  CHECK_THROWS_AS(cli::load_config(unterminated), ConfigError);

  CHECK_THROWS_AS(cli::load_config(dir / "missing.cfg"), ConfigError);
}

TEST_CASE("config validation reports dotted field paths") {
  PipelineConfig c;

  c.semmap.t_p1 = 1.5;
  CHECK_THROWS_WITH_AS(c.validate(), "propagation.t_p1: must be in (0, 1]",
                       ConfigError);
  c.semmap.t_p1 = 0.9;

  c.fusion.voxel_size = 0.0f;
  CHECK_THROWS_WITH_AS(c.validate(), "fusion.voxel_size: must be > 0",
                       ConfigError);
  c.fusion.voxel_size = 0.05f;

  c.keyframe_stride = 0;
  CHECK_THROWS_WITH_AS(c.validate(), "dataset.keyframe_stride: must be >= 1",
                       ConfigError);
  c.keyframe_stride = 1;

  c.feature_provider = "learned";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.feature_provider = "file";
  c.feature_dir.clear();
  CHECK_THROWS_WITH_AS(c.validate(),
                       "project.feature_dir: required when feature_provider = file",
                       ConfigError);
}

TEST_CASE("pipeline commands on a small synthetic dataset") {
  const fs::path dir = scratch_dir("pipe");
  const fs::path spec = write_file(dir / "scene.json", kSmokeScene);
  const fs::path dataset = cli::run_synth(spec, dir / "ds");

  SUBCASE("synth output round trips through the reader") {
    ingest::SequenceReader reader(dataset, {});
    CHECK(reader.size() == 4);
    CHECK(reader.intrinsics().width == 160);
    CHECK(reader.intrinsics().fx == doctest::Approx(130.0));
    auto frame = reader.frame(0);
    CHECK(frame.depth.width() == 160);
    CHECK(reader.detections(0).detections.size() == 2);
    CHECK(fs::exists(dataset / "gt_samples.ply"));
  }

  SUBCASE("reconstruct writes deterministic artifacts") {
    PipelineConfig c = smoke_config(dataset, dir / "recon");
    auto out = cli::run_reconstruct(c);
    CHECK(out.frames == 4);
    CHECK(out.mesh.vertices.size() > 200);
    REQUIRE(fs::exists(out.mesh_ply));
    REQUIRE(fs::exists(c.out / "manifest.json"));
    REQUIRE(fs::exists(c.out / "config.txt"));
    REQUIRE(fs::exists(c.out / "run.log"));

    auto manifest = nlohmann::json::parse(slurp(c.out / "manifest.json"));
    CHECK(manifest.at("command") == "reconstruct");
    CHECK(manifest.at("config_hash") == cli::config_hash(c));
    CHECK(manifest.at("stats").at("frames") == 4);

    // Byte-for-byte reproducibility, manifest included.
    const std::string mesh_bytes = slurp(out.mesh_ply);
    const std::string manifest_bytes = slurp(c.out / "manifest.json");
    fs::remove_all(c.out);
    auto again = cli::run_reconstruct(c);
    CHECK(slurp(again.mesh_ply) == mesh_bytes);
    CHECK(slurp(c.out / "manifest.json") == manifest_bytes);
  }

  SUBCASE("propagate writes masks and provenance records") {
    PipelineConfig c = smoke_config(dataset, dir / "prop");
    auto out = cli::run_propagate(c);
    CHECK(out.keyframes == 4);
    CHECK(out.map_objects == 2);
    REQUIRE(fs::exists(out.masks_dir / "000000.png"));
    REQUIRE(fs::exists(out.masks_dir / "000003.json"));
    REQUIRE(fs::exists(out.checkpoint));

    auto record = nlohmann::json::parse(slurp(out.masks_dir / "000000.json"));
    CHECK(record.at("frame") == 0);
    const auto& records = record.at("instances");
    REQUIRE(records.is_array());
    REQUIRE(records.size() == 2);
    for (const auto& r : records) {
      CHECK(r.contains("class_id"));
      CHECK(r.contains("probability"));
      CHECK(r.contains("provenance"));
      CHECK(r.at("pixel_count").get<int>() > 0);
    }

    // A fresh run resumed from the checkpoint starts with the saved objects.
    PipelineConfig c2 = smoke_config(dataset, dir / "prop2");
    auto resumed = cli::run_propagate(c2, out.checkpoint);
    CHECK(resumed.map_objects == out.map_objects);
  }

  SUBCASE("semantic labels the mesh and evaluates against GT") {
    PipelineConfig c = smoke_config(dataset, dir / "sem");
    auto out = cli::run_semantic(c);
    REQUIRE(out.evaluated);
    CHECK(out.report.miou > 0.5);
    CHECK(out.report.recon_error_cm >= 0.0);
    CHECK(out.report.recon_error_cm < 100.0 * c.fusion.voxel_size);
    REQUIRE(fs::exists(out.mesh_ply));
    REQUIRE(fs::exists(out.report_json));

    size_t labeled = 0;
    for (uint16_t l : out.mesh.labels) labeled += l != 0;
    CHECK(labeled > 100);

    // Feeding the labeled mesh back through eval reproduces the report.
    auto re = cli::run_eval(out.mesh_ply, dataset / "gt_samples.ply",
                            c.num_classes, false, dir / "ev");
    CHECK(re.miou == doctest::Approx(out.report.miou).epsilon(1e-12));
    CHECK(re.recon_error_cm ==
          doctest::Approx(out.report.recon_error_cm).epsilon(1e-12));
  }

  SUBCASE("empty dataset fails before writing output") {
    const fs::path empty = dir / "empty_ds";
    fs::create_directories(empty);
    PipelineConfig c = smoke_config(empty, dir / "empty_out");
    CHECK_THROWS_AS(cli::run_reconstruct(c), DataError);
    CHECK_FALSE(fs::exists(c.out / "mesh.ply"));
  }
}
