#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "semfusion/cli/config.hpp"
#include "semfusion/cli/pipeline.hpp"
#include "semfusion/core/errors.hpp"
#include "semfusion/eval/metrics.hpp"

using namespace semfusion;

namespace {

// Flags shared by the dataset-driven subcommands. Values land in `overrides`
// only when the user passes the flag, so config-file values survive.
struct CommonFlags {
  std::string config_file;
  std::string dataset, out;
  double voxel_size = 0.0, t_iou = 0.0, t_p1 = 0.0, t_p2 = 0.0;
  int keyframe_stride = 0, threads = 0;
  uint64_t seed = 0;
  bool brute_force = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "config file (TOML-like sections)");
    dataset_opt = cmd->add_option("--dataset", dataset, "dataset root directory");
    out_opt = cmd->add_option("--out", out, "output directory");
    voxel_opt = cmd->add_option("--voxel-size", voxel_size, "TSDF voxel size (m)");
    stride_opt =
        cmd->add_option("--keyframe-stride", keyframe_stride, "keyframe stride");
    t_iou_opt = cmd->add_option("--t-iou", t_iou, "mask-matching IoU threshold");
    t_p1_opt = cmd->add_option("--t-p1", t_p1, "new-object probability threshold");
    t_p2_opt = cmd->add_option("--t-p2", t_p2, "object removal weight threshold");
    seed_opt = cmd->add_option("--seed", seed, "run seed (recorded in outputs)");
    threads_opt = cmd->add_option("--threads", threads, "fusion worker threads");
    bf_opt = cmd->add_flag("--brute-force-oracles", brute_force,
                           "use exhaustive reference paths instead of kd-tree");
  }

  cli::PipelineConfig resolve() const {
    cli::PipelineConfig c =
        config_file.empty() ? cli::PipelineConfig{} : cli::load_config(config_file);
    if (*dataset_opt) c.dataset = dataset;
    if (*out_opt) c.out = out;
    if (*voxel_opt) cli::apply_override(c, "fusion.voxel_size", std::to_string(voxel_size));
    if (*stride_opt) c.keyframe_stride = keyframe_stride;
    if (*t_iou_opt) c.semmap.t_iou = t_iou;
    if (*t_p1_opt) c.semmap.t_p1 = t_p1;
    if (*t_p2_opt) c.semmap.t_p2 = t_p2;
    if (*seed_opt) c.seed = seed;
    if (*threads_opt) c.fusion.threads = threads;
    if (*bf_opt) c.brute_force_oracles = true;
    return c;
  }

 private:
  CLI::Option *dataset_opt = nullptr, *out_opt = nullptr, *voxel_opt = nullptr,
              *stride_opt = nullptr, *t_iou_opt = nullptr, *t_p1_opt = nullptr,
              *t_p2_opt = nullptr, *seed_opt = nullptr, *threads_opt = nullptr,
              *bf_opt = nullptr;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semfusion: RGB-D reconstruction with consistent semantics"};
  app.require_subcommand(1);

  CommonFlags rec_flags, prop_flags, sem_flags;
  std::string resume, pred_ply, gt_ply, spec_json, eval_out = "out", synth_out;
  int eval_classes = 41;
  bool eval_brute = false, no_propagation = false;
  double synth_depth_scale = 5000.0;

  CLI::App* rec = app.add_subcommand("reconstruct", "fuse depth into a mesh PLY");
  rec_flags.attach(rec);

  CLI::App* prop =
      app.add_subcommand("propagate", "run the semantic map over keyframes");
  prop_flags.attach(prop);
  prop->add_option("--resume", resume, "map checkpoint to continue from");

  CLI::App* sem =
      app.add_subcommand("semantic", "reconstruct + label fusion + evaluation");
  sem_flags.attach(sem);
  sem->add_flag("--no-propagation", no_propagation,
                "use raw detector labels (skip the semantic map)");

  CLI::App* ev = app.add_subcommand("eval", "compare a mesh PLY against GT samples");
  ev->add_option("--pred", pred_ply, "reconstructed PLY")->required();
  ev->add_option("--gt", gt_ply, "GT sample cloud PLY")->required();
  ev->add_option("--out", eval_out, "output directory");
  ev->add_option("--classes", eval_classes, "number of classes incl. background");
  ev->add_flag("--brute-force-oracles", eval_brute);

  CLI::App* syn = app.add_subcommand("synth", "render a scene spec into a dataset");
  syn->add_option("--spec", spec_json, "scene spec JSON")->required();
  syn->add_option("--out", synth_out, "dataset root to write")->required();
  syn->add_option("--depth-scale", synth_depth_scale, "depth counts per meter");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // 1 = usage error
  }

  try {
    if (rec->parsed()) {
      const auto out = cli::run_reconstruct(rec_flags.resolve());
      std::cout << "wrote " << out.mesh_ply.string() << " ("
                << out.mesh.vertices.size() << " vertices, " << out.frames
                << " frames)\n";
    } else if (prop->parsed()) {
      const auto out = cli::run_propagate(prop_flags.resolve(), resume);
      std::cout << "wrote " << out.masks_dir.string() << " (" << out.keyframes
                << " keyframes, " << out.corrected << " corrected, "
                << out.map_objects << " objects)\n";
    } else if (sem->parsed()) {
      cli::PipelineConfig c = sem_flags.resolve();
      if (no_propagation) c.propagation = false;
      const auto out = cli::run_semantic(c);
      std::cout << "wrote " << out.mesh_ply.string() << "\n";
      if (out.evaluated) std::cout << eval::to_table(out.report);
    } else if (ev->parsed()) {
      const auto report =
          cli::run_eval(pred_ply, gt_ply, eval_classes, eval_brute, eval_out);
      std::cout << eval::to_table(report);
    } else if (syn->parsed()) {
      const auto root = cli::run_synth(spec_json, synth_out, synth_depth_scale);
      std::cout << "wrote dataset " << root.string() << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
