#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "semfusion/core/errors.hpp"
#include "semfusion/fusion/mesh.hpp"
#include "semfusion/ingest/dataset.hpp"
#include "semfusion/synth/scene.hpp"
#include "testing.hpp"

using namespace semfusion;
using namespace semfusion::synth;
using semfusion::testing::TempDir;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

SceneSpec basic_scene() {
  SceneSpec spec;
  spec.primitives.push_back(
      {BoxPrim{{-0.5, -0.5, 2.0}, {0.5, 0.5, 2.5}}, 7, 1});
  spec.primitives.push_back({SpherePrim{{1.2, 0.3, 3.0}, 0.4}, 9, 2});
  spec.primitives.push_back(
      {PlanePrim{{0.0, 0.0, 4.0}, {0.0, -std::sin(M_PI / 6), -std::cos(M_PI / 6)}, 3.0},
       1, 3});
  spec.waypoints.push_back(
      Pose::identity(PoseFrame::kCameraFromWorld).flipped());
  spec.frame_count = 3;
  spec.seed = 17;
  return spec;
}

}  // namespace

TEST_CASE("mesh ply round trip") {
  TempDir dir("ply");
  fusion::Mesh mesh;
  mesh.vertices = {{0.f, 0.f, 0.f}, {1.f, 0.f, 0.f}, {0.f, 1.f, 0.5f}, {1.f, 1.f, -2.f}};
  mesh.triangles = {{0, 1, 2}, {1, 3, 2}};
  mesh.colors = {{255, 0, 0}, {0, 255, 0}, {0, 0, 255}, {7, 8, 9}};
  mesh.labels = {1, 2, 3, 40};
  const auto path = dir / "mesh.ply";
  fusion::write_ply(mesh, path);

  fusion::Mesh back = fusion::read_ply(path);
  REQUIRE(back.vertices.size() == 4);
  REQUIRE(back.triangles.size() == 2);
  CHECK(back.vertices[3] == mesh.vertices[3]);
  CHECK(back.triangles[1] == mesh.triangles[1]);
  CHECK(back.colors == mesh.colors);
  CHECK(back.labels == mesh.labels);

  SUBCASE("vertex-only cloud") {
    fusion::Mesh cloud;
    cloud.vertices = {{1.f, 2.f, 3.f}};
    cloud.labels = {5};
    fusion::write_ply(cloud, dir / "cloud.ply");
    fusion::Mesh cback = fusion::read_ply(dir / "cloud.ply");
    CHECK(cback.triangles.empty());
    CHECK_FALSE(cback.has_colors());
    CHECK(cback.labels == cloud.labels);
  }

  SUBCASE("truncation reported with byte offset") {
    std::string bytes = slurp(path);
    std::ofstream out(dir / "cut.ply", std::ios::binary);
    out.write(bytes.data(), static_cast<long>(bytes.size()) - 9);
    out.close();
    CHECK_THROWS_WITH_AS(fusion::read_ply(dir / "cut.ply"),
                         doctest::Contains("byte"), DataError);
  }

  SUBCASE("bad face index rejected") {
    fusion::Mesh bad = mesh;
    bad.triangles[0] = {0, 1, 9};
    CHECK_THROWS_AS(fusion::write_ply(bad, dir / "bad.ply"), DataError);
  }

  SUBCASE("degenerate triangle rejected") {
    fusion::Mesh bad = mesh;
    bad.triangles[0] = {1, 1, 2};
    CHECK_THROWS_AS(bad.validate(), DataError);
  }
}

TEST_CASE("fronto-parallel plane renders constant depth") {
  SceneSpec spec;
  spec.primitives.push_back(
      {PlanePrim{{0.0, 0.0, 2.0}, {0.0, 0.0, -1.0}, 50.0}, 2, 1});
  spec.waypoints.push_back(Pose::identity(PoseFrame::kCameraFromWorld).flipped());
  RenderResult r = render(spec);
  REQUIRE(r.frames.size() == 1);
  const DepthImage& d = r.frames[0].depth;
  for (int v = 0; v < d.height(); v += 31) {
    for (int u = 0; u < d.width(); u += 37) {
      CHECK(d.at(u, v) == doctest::Approx(2.0).epsilon(1e-9));
      CHECK(r.frames[0].gt_class.at(u, v) == 2);
    }
  }
}

TEST_CASE("empty scene renders all-invalid depth") {
  SceneSpec spec;
  spec.waypoints.push_back(Pose::identity(PoseFrame::kCameraFromWorld).flipped());
  RenderResult r = render(spec);
  CHECK(count_nonzero(r.frames[0].depth) == 0);
  CHECK(count_nonzero(r.frames[0].gt_instance) == 0);
}

TEST_CASE("box silhouette matches corner projection") {
  SceneSpec spec;
  spec.primitives.push_back({BoxPrim{{-0.5, -0.5, 2.0}, {0.5, 0.5, 2.5}}, 5, 1});
  spec.waypoints.push_back(Pose::identity(PoseFrame::kCameraFromWorld).flipped());
  RenderResult r = render(spec);
  const int rendered = count_nonzero(r.frames[0].gt_instance);

  // Silhouette equals the front face: count pixel centers inside its projection.
  const Intrinsics& K = spec.intrinsics;
  const double z = 2.0;
  const double u_lo = K.cx - K.fx * 0.5 / z, u_hi = K.cx + K.fx * 0.5 / z;
  const double v_lo = K.cy - K.fy * 0.5 / z, v_hi = K.cy + K.fy * 0.5 / z;
  const int nu = static_cast<int>(std::floor(u_hi)) - static_cast<int>(std::ceil(u_lo)) + 1;
  const int nv = static_cast<int>(std::floor(v_hi)) - static_cast<int>(std::ceil(v_lo)) + 1;
  CHECK(rendered == nu * nv);

  const double analytic_area = (K.fx * 1.0 / z) * (K.fy * 1.0 / z);
  CHECK(std::abs(rendered - analytic_area) / analytic_area < 0.01);
}

TEST_CASE("raycast depth satisfies implicit surface equations") {
  SceneSpec spec = basic_scene();
  spec.waypoints.clear();
  spec.waypoints.push_back(look_at({0.4, -0.3, -0.5}, {0.3, 0.1, 2.5}));
  spec.frame_count = 2;
  RenderResult r = render(spec);

  for (const RenderedFrame& frame : r.frames) {
    const Pose world_from_camera = frame.camera_from_world.inverse();
    double worst = 0.0;
    for (int v = 0; v < frame.depth_clean.height(); ++v) {
      for (int u = 0; u < frame.depth_clean.width(); ++u) {
        const float d = frame.depth_clean.at(u, v);
        if (d <= 0) continue;
        const Eigen::Vector3d p_world =
            world_from_camera.apply(unproject(spec.intrinsics, u, v, d));
        const int inst = frame.gt_instance.at(u, v);
        double best = 1e9;
        for (const Primitive& prim : spec.primitives) {
          if (prim.instance_id == inst)
            best = std::min(best, surface_residual(prim, p_world));
        }
        worst = std::max(worst, best);
      }
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("render is deterministic") {
  SceneSpec spec = basic_scene();
  spec.noise.depth_sigma = 0.01;
  RenderResult a = render(spec);
  RenderResult b = render(spec);
  REQUIRE(a.frames.size() == b.frames.size());
  for (size_t i = 0; i < a.frames.size(); ++i) {
    CHECK(a.frames[i].depth == b.frames[i].depth);
    CHECK(a.frames[i].gt_instance == b.frames[i].gt_instance);
  }
  CHECK(a.gt_samples.vertices.size() == b.gt_samples.vertices.size());
}

TEST_CASE("camera inside a primitive is reported") {
  SceneSpec spec;
  spec.primitives.push_back({SpherePrim{{0.0, 0.0, 0.0}, 1.0}, 3, 1});
  spec.waypoints.push_back(Pose::identity(PoseFrame::kCameraFromWorld).flipped());
  CHECK_THROWS_WITH_AS(render(spec), doctest::Contains("inside"), DataError);
}

TEST_CASE("scene validation rejects degenerate specs") {
  SceneSpec ok = basic_scene();
  CHECK_NOTHROW(ok.validate());

  SceneSpec s = ok;
  s.frame_count = 0;
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("frame_count"), ConfigError);

  s = ok;
  s.primitives[0] = {BoxPrim{{0.5, 0, 0}, {0.5, 1, 1}}, 2, 9};
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("primitives[0]"), ConfigError);

  s = ok;
  s.primitives.push_back({SpherePrim{{0, 0, 0}, 1.0}, 2, 1});  // instance 1 is class 7
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("different class"), ConfigError);

  s = ok;
  s.noise.flip_prob = 1.0;
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("flip_prob"), ConfigError);
}

TEST_CASE("gt samples lie on their primitives") {
  SceneSpec spec = basic_scene();
  spec.sample_spacing = 0.1;
  RenderResult r = render(spec);
  REQUIRE(!r.gt_samples.vertices.empty());
  REQUIRE(r.gt_samples.labels.size() == r.gt_samples.vertices.size());
  for (size_t i = 0; i < r.gt_samples.vertices.size(); ++i) {
    const Eigen::Vector3d p = r.gt_samples.vertices[i].cast<double>();
    double best = 1e9;
    for (const Primitive& prim : spec.primitives) {
      if (prim.class_id == r.gt_samples.labels[i])
        best = std::min(best, surface_residual(prim, p));
    }
    CHECK(best < 1e-6);
  }
}

TEST_CASE("corrupt_detections flips per the noise model") {
  SceneSpec spec = basic_scene();
  RenderResult r = render(spec);

  SUBCASE("flip probability 0 keeps GT classes") {
    NoiseModel noise;
    auto sets = corrupt_detections(r.frames, noise, 1);
    REQUIRE(sets.size() == r.frames.size());
    for (const auto& set : sets) {
      REQUIRE(set.detections.size() == 3);
      CHECK(set.detections[0].class_id == 7);
      CHECK(set.detections[1].class_id == 9);
      CHECK(set.detections[2].class_id == 1);
      for (const auto& det : set.detections) {
        CHECK(det.score >= noise.score_lo);
        CHECK(det.score <= noise.score_hi);
      }
    }
  }

  SUBCASE("flip probability near 1 mislabels everything") {
    NoiseModel noise;
    noise.flip_prob = 0.999999;
    noise.confusable = {{7, 12}, {9, 4}};
    auto sets = corrupt_detections(r.frames, noise, 1);
    for (const auto& set : sets) {
      CHECK(set.detections[0].class_id == 12);
      CHECK(set.detections[1].class_id == 4);
      CHECK(set.detections[2].class_id == 2);  // default confusion: class + 1
    }
  }

  SUBCASE("masks partition the instance raster") {
    auto sets = corrupt_detections(r.frames, NoiseModel{}, 1);
    const auto& frame = r.frames[0];
    const auto& dets = sets[0].detections;
    for (size_t i = 0; i < frame.gt_instance.size(); ++i) {
      const int id = frame.gt_instance.data()[i];
      CHECK(dets[0].mask.data()[i] == (id == 1 ? 1 : 0));
      CHECK(dets[1].mask.data()[i] == (id == 2 ? 1 : 0));
    }
  }

  SUBCASE("deterministic under a fixed seed") {
    NoiseModel noise;
    noise.flip_prob = 0.3;
    auto a = corrupt_detections(r.frames, noise, 99);
    auto b = corrupt_detections(r.frames, noise, 99);
    for (size_t f = 0; f < a.size(); ++f) {
      for (size_t i = 0; i < a[f].detections.size(); ++i) {
        CHECK(a[f].detections[i].class_id == b[f].detections[i].class_id);
        CHECK(a[f].detections[i].score == b[f].detections[i].score);
      }
    }
  }
}

TEST_CASE("flip rate concentrates around flip_prob") {
  // 1000 single-instance frames; mislabel rate should land at 0.2 +- 0.03.
  SceneSpec spec;
  spec.primitives.push_back({BoxPrim{{-0.5, -0.5, 2.0}, {0.5, 0.5, 2.5}}, 6, 1});
  spec.waypoints.push_back(Pose::identity(PoseFrame::kCameraFromWorld).flipped());
  spec.intrinsics = Intrinsics{20, 20, 7.5, 7.5, 16, 16};
  spec.frame_count = 1000;
  RenderResult r = render(spec);

  NoiseModel noise;
  noise.flip_prob = 0.2;
  auto sets = corrupt_detections(r.frames, noise, 2024);
  int flips = 0;
  for (const auto& set : sets) {
    REQUIRE(set.detections.size() == 1);
    if (set.detections[0].class_id != 6) ++flips;
  }
  const double rate = flips / 1000.0;
  CHECK(rate > 0.17);
  CHECK(rate < 0.23);
}

TEST_CASE("partial-only flips spare the best view") {
  SceneSpec spec;
  spec.primitives.push_back({BoxPrim{{-0.4, -0.4, 2.0}, {0.4, 0.4, 2.6}}, 6, 1});
  // Dolly out: frame 0 sees the largest silhouette.
  spec.waypoints.push_back(look_at({0, 0, 0}, {0, 0, 2}));
  spec.waypoints.push_back(look_at({0, 0, -3}, {0, 0, 2}));
  spec.frame_count = 20;
  RenderResult r = render(spec);

  NoiseModel noise;
  noise.flip_prob = 0.999999;
  noise.flip_partial_only = true;
  auto sets = corrupt_detections(r.frames, noise, 5);
  CHECK(sets[0].detections[0].class_id == 6);      // largest view never flips
  CHECK(sets.back().detections[0].class_id == 7);  // far view flips
}

TEST_CASE("dataset round-trips through the sequence reader") {
  SceneSpec spec = basic_scene();
  spec.sample_spacing = 0.25;
  RenderResult r = render(spec);
  auto dets = corrupt_detections(r.frames, spec.noise, spec.seed);

  TempDir dir("synthds");
  write_dataset(spec, r, dets, dir.path());

  ingest::SequenceReader reader(dir.path(), {});
  REQUIRE(reader.size() == r.frames.size());
  CHECK(reader.warnings().empty());
  CHECK(reader.intrinsics().fx == spec.intrinsics.fx);

  for (size_t i = 0; i < reader.size(); ++i) {
    CHECK(reader.pose(i).approx_equal(r.frames[i].camera_from_world, 1e-9));
    ingest::FrameRecord rec = reader.frame(i);
    REQUIRE(rec.depth.same_size(r.frames[i].depth));
    // Depth survives 16-bit quantization to half a count.
    for (int v = 0; v < rec.depth.height(); v += 17) {
      for (int u = 0; u < rec.depth.width(); u += 13) {
        CHECK(std::abs(rec.depth.at(u, v) - r.frames[i].depth.at(u, v)) <=
              0.5 / 5000.0 + 1e-9);
      }
    }
    ingest::DetectionSet set = reader.detections(i);
    REQUIRE(set.detections.size() == dets[i].detections.size());
    for (size_t k = 0; k < set.detections.size(); ++k) {
      CHECK(set.detections[k].class_id == dets[i].detections[k].class_id);
      CHECK(set.detections[k].mask == dets[i].detections[k].mask);
    }
  }

  fusion::Mesh samples = fusion::read_ply(dir / "gt_samples.ply");
  CHECK(samples.vertices.size() == r.gt_samples.vertices.size());

  SUBCASE("writer output is byte-identical across runs") {
    TempDir dir2("synthds2");
    write_dataset(spec, r, dets, dir2.path());
    for (const char* rel :
         {"trajectory.txt", "associations.txt", "depth/000001.png",
          "detections/000002.json", "gt_samples.ply", "scene.json"}) {
      CHECK(slurp(dir / rel) == slurp(dir2 / rel));
    }
  }

  SUBCASE("scene.json reloads and re-renders identically") {
    SceneSpec back = load_scene_spec(dir / "scene.json");
    RenderResult r2 = render(back);
    REQUIRE(r2.frames.size() == r.frames.size());
    CHECK(r2.frames[1].depth == r.frames[1].depth);
    CHECK(r2.frames[1].gt_class == r.frames[1].gt_class);
  }
}

TEST_CASE("look_at points the optical axis at the target") {
  const Eigen::Vector3d eye(1.0, -2.0, 0.5);
  const Eigen::Vector3d target(0.0, 1.0, 2.0);
  Pose wc = look_at(eye, target);
  REQUIRE(wc.frame() == PoseFrame::kWorldFromCamera);
  const Eigen::Vector3d fwd = wc.rotation() * Eigen::Vector3d::UnitZ();
  CHECK((fwd - (target - eye).normalized()).norm() < 1e-12);
  CHECK((wc.translation() - eye).norm() == 0.0);
  // Image up (-y) has a positive world-up component.
  const Eigen::Vector3d up_img = wc.rotation() * Eigen::Vector3d(0, -1, 0);
  CHECK(up_img.z() > 0);
}
