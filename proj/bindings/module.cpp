#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <filesystem>

#include "semfusion/cli/config.hpp"
#include "semfusion/cli/pipeline.hpp"
#include "semfusion/core/errors.hpp"
#include "semfusion/eval/metrics.hpp"
#include "semfusion/fusion/mesh.hpp"
#include "semfusion/fusion/tsdf.hpp"
#include "semfusion/segment2d/segment.hpp"
#include "semfusion/semmap/semantic_map.hpp"

namespace py = pybind11;
using namespace semfusion;
namespace fs = std::filesystem;

namespace {

py::dict report_to_dict(const eval::EvalReport& r) {
  py::dict d;
  d["recon_error_cm"] =
      r.recon_error_cm >= 0.0 ? py::cast(r.recon_error_cm) : py::none();
  d["miou"] = r.miou;
  d["macc"] = r.macc;
  d["iou"] = r.iou;
  d["gt_count"] = r.gt_count;
  d["pred_count"] = r.pred_count;
  d["tp_count"] = r.tp_count;
  py::dict meta;
  for (const auto& [k, v] : r.metadata) meta[py::str(k)] = v;
  d["metadata"] = meta;
  return d;
}

fusion::Mesh mesh_from_points(const py::array_t<float, py::array::c_style |
                                                           py::array::forcecast>& pts) {
  if (pts.ndim() != 2 || pts.shape(1) != 3)
    throw py::value_error("expected an (N, 3) float array");
  fusion::Mesh mesh;
  mesh.vertices.resize(pts.shape(0));
  std::memcpy(mesh.vertices.data(), pts.data(),
              sizeof(float) * 3 * mesh.vertices.size());
  return mesh;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dense semantic RGB-D reconstruction: fusion, propagation, labeling.";
  m.attr("__version__") = "0.1.0";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<DataError>(m, "DataError");

  py::class_<segment2d::SegParams>(m, "SegParams")
      .def(py::init<>())
      .def_readwrite("theta_edge_deg", &segment2d::SegParams::theta_edge_deg)
      .def_readwrite("delta_depth", &segment2d::SegParams::delta_depth)
      .def_readwrite("min_area", &segment2d::SegParams::min_area);

  py::class_<semmap::PropagationParams>(m, "PropagationParams")
      .def(py::init<>())
      .def_readwrite("t_iou", &semmap::PropagationParams::t_iou)
      .def_readwrite("t_p1", &semmap::PropagationParams::t_p1)
      .def_readwrite("t_p2", &semmap::PropagationParams::t_p2)
      .def_readwrite("delta_up", &semmap::PropagationParams::delta_up)
      .def_readwrite("delta_down", &semmap::PropagationParams::delta_down)
      .def_readwrite("max_support", &semmap::PropagationParams::max_support)
      .def_readwrite("splat_radius", &semmap::PropagationParams::splat_radius)
      .def("validate", &semmap::PropagationParams::validate);

  py::class_<fusion::TsdfVolume::Params>(m, "TsdfParams")
      .def(py::init<>())
      .def_readwrite("voxel_size", &fusion::TsdfVolume::Params::voxel_size)
      .def_readwrite("truncation", &fusion::TsdfVolume::Params::truncation)
      .def_readwrite("max_weight", &fusion::TsdfVolume::Params::max_weight)
      .def_readwrite("max_depth", &fusion::TsdfVolume::Params::max_depth)
      .def_readwrite("threads", &fusion::TsdfVolume::Params::threads);

  py::class_<cli::PipelineConfig>(m, "PipelineConfig")
      .def(py::init<>())
      .def_readwrite("dataset", &cli::PipelineConfig::dataset)
      .def_readwrite("depth_scale", &cli::PipelineConfig::depth_scale)
      .def_readwrite("keyframe_stride", &cli::PipelineConfig::keyframe_stride)
      .def_readwrite("max_frames", &cli::PipelineConfig::max_frames)
      .def_readwrite("segment", &cli::PipelineConfig::segment)
      .def_readwrite("semmap", &cli::PipelineConfig::semmap)
      .def_readwrite("propagation", &cli::PipelineConfig::propagation)
      .def_readwrite("fusion", &cli::PipelineConfig::fusion)
      .def_readwrite("eps_occ_scale", &cli::PipelineConfig::eps_occ_scale)
      .def_readwrite("feature_level", &cli::PipelineConfig::feature_level)
      .def_readwrite("feature_provider", &cli::PipelineConfig::feature_provider)
      .def_readwrite("feature_dir", &cli::PipelineConfig::feature_dir)
      .def_readwrite("num_classes", &cli::PipelineConfig::num_classes)
      .def_readwrite("out", &cli::PipelineConfig::out)
      .def_readwrite("seed", &cli::PipelineConfig::seed)
      .def_readwrite("brute_force_oracles", &cli::PipelineConfig::brute_force_oracles)
      .def("validate", &cli::PipelineConfig::validate);

  m.def("load_config", &cli::load_config, py::arg("path"));
  m.def("apply_override", &cli::apply_override, py::arg("config"), py::arg("key"),
        py::arg("value"));
  m.def("dump_config", &cli::dump_config, py::arg("config"));
  m.def("config_hash", &cli::config_hash, py::arg("config"));

  m.def(
      "reconstruct",
      [](const cli::PipelineConfig& c) {
        auto out = cli::run_reconstruct(c);
        py::dict d;
        d["mesh_ply"] = out.mesh_ply.string();
        d["frames"] = out.frames;
        d["vertices"] = out.mesh.vertices.size();
        d["triangles"] = out.mesh.triangles.size();
        return d;
      },
      py::arg("config"), "Fuse every frame and write mesh.ply under config.out.");

  m.def(
      "propagate",
      [](const cli::PipelineConfig& c, const std::optional<fs::path>& resume) {
        // pathlib turns "" into "."; an optional keeps "no checkpoint" distinct
        auto out = cli::run_propagate(c, resume.value_or(fs::path()));
        py::dict d;
        d["keyframes"] = out.keyframes;
        d["corrected"] = out.corrected;
        d["map_objects"] = out.map_objects;
        d["masks_dir"] = out.masks_dir.string();
        d["checkpoint"] = out.checkpoint.string();
        return d;
      },
      py::arg("config"), py::arg("resume") = py::none(),
      "Run the keyframe label-propagation state machine and dump masks.");

  m.def(
      "semantic",
      [](const cli::PipelineConfig& c) {
        auto out = cli::run_semantic(c);
        py::dict d;
        d["mesh_ply"] = out.mesh_ply.string();
        d["report_json"] = out.report_json.string();
        d["evaluated"] = out.evaluated;
        d["report"] = out.evaluated ? py::object(report_to_dict(out.report))
                                    : py::object(py::none());
        size_t labeled = 0;
        for (uint16_t l : out.mesh.labels) labeled += l != 0;
        d["vertices"] = out.mesh.vertices.size();
        d["labeled"] = labeled;
        return d;
      },
      py::arg("config"), "Full pipeline: fuse, propagate, project, label, eval.");

  m.def(
      "evaluate",
      [](const fs::path& pred, const fs::path& gt, int num_classes, bool brute_force,
         const fs::path& out) {
        return report_to_dict(cli::run_eval(pred, gt, num_classes, brute_force, out));
      },
      py::arg("pred"), py::arg("gt"), py::arg("num_classes") = 41,
      py::arg("brute_force") = false, py::arg("out") = fs::path("out"),
      "Compare a labeled PLY against a GT sample cloud.");

  m.def(
      "synth",
      [](const fs::path& spec, const fs::path& out, double depth_scale) {
        return cli::run_synth(spec, out, depth_scale).string();
      },
      py::arg("spec"), py::arg("out"), py::arg("depth_scale") = 5000.0,
      "Render a scene spec into an ingest-ready dataset; returns its root.");

  m.def(
      "read_ply",
      [](const fs::path& path) {
        const auto mesh = fusion::read_ply(path);
        const py::ssize_t n = static_cast<py::ssize_t>(mesh.vertices.size());
        const py::ssize_t t = static_cast<py::ssize_t>(mesh.triangles.size());
        py::array_t<float> vertices({n, py::ssize_t(3)});
        std::memcpy(vertices.mutable_data(), mesh.vertices.data(),
                    sizeof(float) * 3 * mesh.vertices.size());
        py::array_t<int32_t> triangles({t, py::ssize_t(3)});
        std::memcpy(triangles.mutable_data(), mesh.triangles.data(),
                    sizeof(int32_t) * 3 * mesh.triangles.size());
        py::dict d;
        d["vertices"] = vertices;
        d["triangles"] = triangles;
        if (!mesh.labels.empty()) {
          py::array_t<uint16_t> labels(n);
          std::memcpy(labels.mutable_data(), mesh.labels.data(),
                      sizeof(uint16_t) * mesh.labels.size());
          d["labels"] = labels;
        }
        return d;
      },
      py::arg("path"), "Load a PLY as numpy arrays (labels only when present).");

  m.def(
      "recon_error_cm",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& pred,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& gt,
         bool brute_force) {
        return eval::recon_error_cm(mesh_from_points(pred), mesh_from_points(gt),
                                    std::nullopt, brute_force);
      },
      py::arg("pred"), py::arg("gt"), py::arg("brute_force") = false,
      "Mean nearest-neighbor distance (cm) from pred points to gt points.");

  m.def(
      "semantic_scores",
      [](const std::vector<uint16_t>& pred, const std::vector<uint16_t>& gt,
         int num_classes) {
        return report_to_dict(eval::semantic_scores(pred, gt, num_classes));
      },
      py::arg("pred"), py::arg("gt"), py::arg("num_classes"),
      "Per-class IoU / mIoU / mAcc over paired labels (0 = unannotated).");
}
