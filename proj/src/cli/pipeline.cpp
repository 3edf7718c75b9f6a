#include "semfusion/cli/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "semfusion/core/errors.hpp"
#include "semfusion/fusion/tsdf.hpp"
#include "semfusion/ingest/dataset.hpp"
#include "semfusion/project/features.hpp"
#include "semfusion/project/spblock.hpp"
#include "semfusion/segment2d/segment.hpp"
#include "semfusion/semmap/semantic_map.hpp"
#include "semfusion/synth/scene.hpp"

namespace semfusion::cli {

namespace {

using json = nlohmann::json;

ingest::SequenceReader open_reader(const PipelineConfig& config) {
  if (config.dataset.empty()) throw ConfigError("dataset.root: required");
  ingest::SequenceConfig sc;
  sc.depth_scale = config.depth_scale;
  return ingest::SequenceReader(config.dataset, sc);
}

size_t frame_limit(const PipelineConfig& config, size_t available) {
  if (config.max_frames <= 0) return available;
  return std::min(available, static_cast<size_t>(config.max_frames));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);  // binary: identical bytes everywhere
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

/// manifest.json + config.txt + run.log; keys sorted, no timestamps, so a
/// rerun with the same config writes the same bytes.
void write_run_records(const PipelineConfig& config, const std::string& command,
                       const std::map<std::string, std::string>& artifacts,
                       const json& stats) {
  const std::string hash = config_hash(config);
  json manifest;
  manifest["command"] = command;
  manifest["config_hash"] = hash;
  manifest["seed"] = config.seed;
  manifest["artifacts"] = artifacts;
  manifest["stats"] = stats;
  write_text(config.out / "manifest.json", manifest.dump(2) + "\n");
  write_text(config.out / "config.txt", dump_config(config));

  std::string log = "command: " + command + "\nconfig_hash: " + hash + "\n";
  for (const auto& [key, value] : stats.items())
    log += key + ": " + value.dump() + "\n";
  write_text(config.out / "run.log", log);
}

segment2d::FilteredSeg segment_frame(const PipelineConfig& config,
                                     const ingest::FrameRecord& frame,
                                     const ingest::DetectionSet& detections,
                                     const Intrinsics& K) {
  const segment2d::NormalMap normals = segment2d::compute_normals(frame.depth, K);
  const segment2d::GeomSegmentation geom =
      segment2d::geometric_segment(normals, frame.depth, config.segment);
  return segment2d::filter_semantic(detections, geom);
}

fusion::TsdfVolume integrate_all(const PipelineConfig& config,
                                 const ingest::SequenceReader& reader, size_t count) {
  fusion::TsdfVolume vol(config.fusion);
  for (size_t i = 0; i < count; ++i) {
    const ingest::FrameRecord frame = reader.frame(i);
    vol.integrate(frame.depth, frame.pose, reader.intrinsics());
  }
  return vol;
}

/// GT label per query vertex = label of the nearest GT sample.
std::vector<uint16_t> labels_from_nearest(const std::vector<Eigen::Vector3f>& queries,
                                          const fusion::Mesh& gt, bool brute_force) {
  std::vector<uint16_t> out(queries.size(), 0);
  if (brute_force) {
    for (size_t i = 0; i < queries.size(); ++i) {
      double best = std::numeric_limits<double>::max();
      size_t arg = 0;
      for (size_t s = 0; s < gt.vertices.size(); ++s) {
        const double d2 =
            (gt.vertices[s].cast<double>() - queries[i].cast<double>()).squaredNorm();
        if (d2 < best) {
          best = d2;
          arg = s;
        }
      }
      out[i] = gt.labels[arg];
    }
    return out;
  }
  const eval::KdTree3 tree(gt.vertices);
  for (size_t i = 0; i < queries.size(); ++i)
    out[i] = gt.labels[tree.nearest(queries[i]).first];
  return out;
}

}  // namespace

ReconstructOutput run_reconstruct(const PipelineConfig& config) {
  config.validate();
  const ingest::SequenceReader reader = open_reader(config);
  const size_t count = frame_limit(config, reader.size());
  if (count == 0) throw DataError(config.dataset.string() + ": no frames to fuse");

  fusion::TsdfVolume vol = integrate_all(config, reader, count);
  ReconstructOutput out;
  out.mesh = vol.extract_mesh();
  out.frames = static_cast<int>(count);
  if (out.mesh.vertices.empty())
    throw DataError(config.dataset.string() + ": no surface extracted");

  std::filesystem::create_directories(config.out);
  out.mesh_ply = config.out / "mesh.ply";
  fusion::write_ply(out.mesh, out.mesh_ply);
  write_run_records(config, "reconstruct", {{"mesh", "mesh.ply"}},
                    {{"frames", out.frames},
                     {"blocks", vol.block_count()},
                     {"vertices", out.mesh.vertices.size()},
                     {"triangles", out.mesh.triangles.size()}});
  return out;
}

PropagateOutput run_propagate(const PipelineConfig& config,
                              const std::filesystem::path& resume) {
  config.validate();
  const ingest::SequenceReader reader = open_reader(config);
  const size_t count = frame_limit(config, reader.size());
  if (count == 0) throw DataError(config.dataset.string() + ": no frames");

  semmap::SparseSemanticMap map = resume.empty()
                                      ? semmap::SparseSemanticMap(config.semmap)
                                      : semmap::SparseSemanticMap::load(resume);
  PropagateOutput out;
  out.masks_dir = config.out / "masks";
  std::filesystem::create_directories(out.masks_dir);

  for (size_t i = 0; i < count; i += config.keyframe_stride) {
    const ingest::FrameRecord frame = reader.frame(i);
    const int frame_id = reader.frame_id(i);
    try {
      const segment2d::FilteredSeg seg =
          segment_frame(config, frame, reader.detections(i), reader.intrinsics());
      const semmap::ConsistentMasks cm = semmap::propagate(
          map, seg, frame.depth, frame.pose, reader.intrinsics(), frame_id);

      const std::string stem = ingest::frame_name(frame_id);
      segment2d::write_instance_debug(out.masks_dir / (stem + ".png"),
                                      cm.seg.instances);
      json rec;
      rec["frame"] = frame_id;
      rec["instances"] = json::array();
      for (size_t k = 0; k < cm.seg.records.size(); ++k) {
        const auto& r = cm.seg.records[k];
        const auto& oc = cm.outcomes[k];
        rec["instances"].push_back({{"class_id", r.class_id},
                                    {"probability", r.probability},
                                    {"pixel_count", r.pixel_count},
                                    {"provenance", semmap::provenance_name(oc.provenance)},
                                    {"object_id", oc.object_id}});
        if (oc.provenance == semmap::Provenance::kCorrectedByMap) ++out.corrected;
      }
      write_text(out.masks_dir / (stem + ".json"), rec.dump(2) + "\n");
      ++out.keyframes;
    } catch (const std::invalid_argument& e) {
      throw DataError("frame " + ingest::frame_name(frame_id) + ": " + e.what());
    }
  }

  out.checkpoint = config.out / "map.json";
  map.save(out.checkpoint);
  out.map_objects = static_cast<int>(map.objects().size());
  write_run_records(config, "propagate",
                    {{"masks", "masks"}, {"checkpoint", "map.json"}},
                    {{"keyframes", out.keyframes},
                     {"corrected", out.corrected},
                     {"objects", out.map_objects}});
  return out;
}

SemanticOutput run_semantic(const PipelineConfig& config) {
  config.validate();
  const ingest::SequenceReader reader = open_reader(config);
  const size_t count = frame_limit(config, reader.size());
  if (count == 0) throw DataError(config.dataset.string() + ": no frames");
  const Intrinsics& K = reader.intrinsics();

  fusion::TsdfVolume vol = integrate_all(config, reader, count);
  SemanticOutput out;
  out.mesh = vol.extract_mesh();
  if (out.mesh.vertices.empty())
    throw DataError(config.dataset.string() + ": no surface extracted");
  const spblock::VoxelSet set = spblock::voxel_set_from_mesh(
      out.mesh, config.fusion.voxel_size, config.fusion.origin);

  std::unique_ptr<spblock::FeatureProvider> provider;
  if (config.feature_provider == "file")
    provider = std::make_unique<spblock::FileFeatureProvider>(config.feature_dir,
                                                              config.feature_level);

  semmap::SparseSemanticMap map(config.semmap);
  spblock::FeatureSlab votes =
      spblock::FeatureSlab::zeros(set.size(), config.num_classes);
  std::vector<spblock::FeatureSlab> feature_slabs;
  int keyframes = 0;
  for (size_t i = 0; i < count; i += config.keyframe_stride) {
    const ingest::FrameRecord frame = reader.frame(i);
    const int frame_id = reader.frame_id(i);
    try {
      segment2d::FilteredSeg seg =
          segment_frame(config, frame, reader.detections(i), K);
      if (config.propagation)
        seg = semmap::propagate(map, seg, frame.depth, frame.pose, K, frame_id).seg;

      const spblock::IntersectionMask mask = spblock::intersection_mask(
          set.points, frame.pose, K, frame.depth, seg.instances,
          config.eps_occ_scale * config.fusion.voxel_size);
      const spblock::FeatureImage prob =
          spblock::class_probability_image(seg, config.num_classes);
      spblock::add_votes(votes, spblock::project_features(prob, mask, K));
      if (provider)
        feature_slabs.push_back(
            spblock::project_features(provider->features(frame_id, seg), mask, K));
      ++keyframes;
    } catch (const std::invalid_argument& e) {
      throw DataError("frame " + ingest::frame_name(frame_id) + ": " + e.what());
    }
  }
  spblock::normalize_votes(votes);
  fusion::transfer_labels(out.mesh, spblock::to_label_votes(votes, set.grid),
                          config.fusion.voxel_size, config.fusion.origin);

  std::filesystem::create_directories(config.out);
  out.mesh_ply = config.out / "labeled.ply";
  fusion::write_ply(out.mesh, out.mesh_ply);

  std::map<std::string, std::string> artifacts = {{"labeled_mesh", "labeled.ply"}};
  json stats = {{"frames", count},
                {"keyframes", keyframes},
                {"voxels", set.size()},
                {"vertices", out.mesh.vertices.size()}};

  // aggregation artifact for externally exported feature rasters
  if (provider && !feature_slabs.empty()) {
    const spblock::AggregatedVolume agg = spblock::aggregate_dot(
        spblock::stack_views(feature_slabs), set.grid,
        spblock::DoTWeights::identity_profile(config.feature_level));
    std::ofstream bin(config.out / "aggregated.bin", std::ios::binary);
    const uint32_t n = static_cast<uint32_t>(set.size());
    const uint32_t c = static_cast<uint32_t>(agg.channels);
    bin.write(reinterpret_cast<const char*>(&n), 4);
    bin.write(reinterpret_cast<const char*>(&c), 4);
    bin.write(reinterpret_cast<const char*>(agg.occupied.data()),
              static_cast<std::streamsize>(agg.occupied.size()));
    bin.write(reinterpret_cast<const char*>(agg.data.data()),
              static_cast<std::streamsize>(agg.data.size() * sizeof(float)));
    if (!bin) throw DataError("cannot write aggregated.bin");
    artifacts["aggregated"] = "aggregated.bin";
  }

  const auto gt_path = config.dataset / "gt_samples.ply";
  if (std::filesystem::exists(gt_path)) {
    const fusion::Mesh gt = fusion::read_ply(gt_path);
    out.report.recon_error_cm = eval::recon_error_cm(
        out.mesh, gt, std::nullopt, config.brute_force_oracles);
    if (gt.has_labels()) {
      const std::vector<uint16_t> gt_labels = labels_from_nearest(
          out.mesh.vertices, gt, config.brute_force_oracles);
      const double recon = out.report.recon_error_cm;
      out.report = eval::semantic_scores(out.mesh.labels, gt_labels,
                                         config.num_classes);
      out.report.recon_error_cm = recon;
    }
    out.report.metadata["config_hash"] = config_hash(config);
    out.report.metadata["error_metric"] = "mean NN distance reconstruction->GT (cm)";
    out.evaluated = true;
    out.report_json = config.out / "report.json";
    write_text(out.report_json, eval::to_json(out.report) + "\n");
    write_text(config.out / "report.txt", eval::to_table(out.report));
    artifacts["report"] = "report.json";
    stats["recon_error_cm"] = out.report.recon_error_cm;
    stats["miou"] = out.report.miou;
    stats["macc"] = out.report.macc;
  }
  write_run_records(config, "semantic", artifacts, stats);
  return out;
}

eval::EvalReport run_eval(const std::filesystem::path& pred_ply,
                          const std::filesystem::path& gt_ply, int num_classes,
                          bool brute_force, const std::filesystem::path& out_dir) {
  const fusion::Mesh pred = fusion::read_ply(pred_ply);
  const fusion::Mesh gt = fusion::read_ply(gt_ply);

  eval::EvalReport report;
  if (pred.has_labels() && gt.has_labels()) {
    const std::vector<uint16_t> gt_labels =
        labels_from_nearest(pred.vertices, gt, brute_force);
    report = eval::semantic_scores(pred.labels, gt_labels, num_classes);
  }
  report.recon_error_cm =
      eval::recon_error_cm(pred, gt, std::nullopt, brute_force);
  report.metadata["pred"] = pred_ply.filename().string();
  report.metadata["gt"] = gt_ply.filename().string();
  report.metadata["error_metric"] = "mean NN distance reconstruction->GT (cm)";

  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "report.json", eval::to_json(report) + "\n");
  write_text(out_dir / "report.txt", eval::to_table(report));
  return report;
}

std::filesystem::path run_synth(const std::filesystem::path& spec_json,
                                const std::filesystem::path& out_root,
                                double depth_scale) {
  const synth::SceneSpec spec = synth::load_scene_spec(spec_json);
  spec.validate();
  const synth::RenderResult result = synth::render(spec);
  const std::vector<ingest::DetectionSet> detections =
      synth::corrupt_detections(result.frames, spec.noise, spec.seed);
  synth::write_dataset(spec, result, detections, out_root, depth_scale);
  return out_root;
}

}  // namespace semfusion::cli
