#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "nrf/dataset_io.hpp"
#include "nrf/pipeline.hpp"

namespace fs = std::filesystem;
using namespace nrf;

namespace {

void add_config_flags(CLI::App* cmd, RunConfig& cfg, std::string& config_path) {
  cmd->add_option("--config", config_path, "JSON config file (defaults < file < flags)");
  cmd->add_option("--scene", cfg.dataset.scene, "synthetic scene preset");
  cmd->add_option("--trajectory", cfg.dataset.trajectory, "orbit | line | square");
  cmd->add_option("--frames", cfg.dataset.frames, "frame count");
  cmd->add_option("--source", cfg.dataset.source, "'synthetic' or a sequence directory");
  cmd->add_option("--linear-speed", cfg.dataset.linear_speed, "m/s");
  cmd->add_option("--angular-speed", cfg.dataset.angular_speed, "rad/s");
  cmd->add_option("--render-width", cfg.dataset.render_width);
  cmd->add_option("--render-height", cfg.dataset.render_height);
  cmd->add_option("--depth-scale", cfg.dataset.depth_scale, "meters per stored unit");
  cmd->add_flag("--no-depth-noise{false}", cfg.dataset.depth_noise, "disable synthetic depth noise");
  cmd->add_option("--seed", cfg.seed, "run seed");
  cmd->add_option("--output", cfg.output_dir, "output directory");
  cmd->add_flag("--single-threaded", cfg.single_threaded, "deterministic single-worker mode");
  cmd->add_option("--particles", cfg.tracking.num_particles);
  cmd->add_option("--ro-iterations", cfg.tracking.ro_iterations);
  cmd->add_option("--go-epochs", cfg.tracking.go_epochs);
  cmd->add_option("--map-iterations", cfg.manager.map_iterations);
  cmd->add_option("--init-epochs", cfg.manager.init_epochs);
  cmd->add_option("--mesh-voxel", cfg.mesh_voxel);
  cmd->add_flag("--no-mesh{false}", cfg.export_mesh, "skip mesh export");
  cmd->add_flag("--no-c", cfg.no_c, "ablation: regression TSDF head");
  cmd->add_flag("--no-ro", cfg.no_ro, "ablation: disable randomized optimization");
  cmd->add_flag("--no-go", cfg.no_go, "ablation: disable gradient refinement");
  cmd->add_flag("--no-u", cfg.no_u, "ablation: unweighted fitness");
  cmd->add_flag("--no-si", cfg.no_si, "ablation: skip submap initialization");
  cmd->add_flag("--no-sr", cfg.no_sr, "ablation: no smooth revisit");
  cmd->add_flag("--no-lc", cfg.no_lc, "ablation: no loop closure / inactive BA");
}

RunConfig merge_config(const std::string& config_path, const RunConfig& flags,
                       const CLI::App* cmd) {
  if (config_path.empty()) {
    RunConfig cfg = flags;
    cfg.finalize();
    return cfg;
  }
  // Layering: defaults < file < explicit command-line flags.
  RunConfig cfg = RunConfig::load_file(config_path);
  RunConfig out = cfg;
  const RunConfig defaults;
  auto overridden = [&](const char* name) { return cmd->count(name) > 0; };
  if (overridden("--scene")) out.dataset.scene = flags.dataset.scene;
  if (overridden("--trajectory")) out.dataset.trajectory = flags.dataset.trajectory;
  if (overridden("--frames")) out.dataset.frames = flags.dataset.frames;
  if (overridden("--source")) out.dataset.source = flags.dataset.source;
  if (overridden("--linear-speed")) out.dataset.linear_speed = flags.dataset.linear_speed;
  if (overridden("--angular-speed")) out.dataset.angular_speed = flags.dataset.angular_speed;
  if (overridden("--render-width")) out.dataset.render_width = flags.dataset.render_width;
  if (overridden("--render-height")) out.dataset.render_height = flags.dataset.render_height;
  if (overridden("--depth-scale")) out.dataset.depth_scale = flags.dataset.depth_scale;
  if (overridden("--no-depth-noise")) out.dataset.depth_noise = flags.dataset.depth_noise;
  if (overridden("--seed")) out.seed = flags.seed;
  if (overridden("--output")) out.output_dir = flags.output_dir;
  if (overridden("--single-threaded")) out.single_threaded = flags.single_threaded;
  if (overridden("--particles")) out.tracking.num_particles = flags.tracking.num_particles;
  if (overridden("--ro-iterations")) out.tracking.ro_iterations = flags.tracking.ro_iterations;
  if (overridden("--go-epochs")) out.tracking.go_epochs = flags.tracking.go_epochs;
  if (overridden("--map-iterations")) out.manager.map_iterations = flags.manager.map_iterations;
  if (overridden("--init-epochs")) out.manager.init_epochs = flags.manager.init_epochs;
  if (overridden("--mesh-voxel")) out.mesh_voxel = flags.mesh_voxel;
  if (overridden("--no-mesh")) out.export_mesh = flags.export_mesh;
  if (overridden("--no-c")) out.no_c = flags.no_c;
  if (overridden("--no-ro")) out.no_ro = flags.no_ro;
  if (overridden("--no-go")) out.no_go = flags.no_go;
  if (overridden("--no-u")) out.no_u = flags.no_u;
  if (overridden("--no-si")) out.no_si = flags.no_si;
  if (overridden("--no-sr")) out.no_sr = flags.no_sr;
  if (overridden("--no-lc")) out.no_lc = flags.no_lc;
  out.finalize();
  return out;
}

int cmd_run(const RunConfig& cfg) {
  Pipeline pipeline(cfg);
  const RunOutputs out = pipeline.run();
  std::printf("frames:          %zu\n", out.trajectory.size());
  std::printf("submaps:         %d\n", out.submap_count);
  std::printf("keyframes:       %d\n", out.keyframe_count);
  std::printf("reactivations:   %d\n", out.reactivations);
  std::printf("loop closures:   %d\n", out.loop_closures);
  if (out.has_groundtruth) {
    std::printf("ATE RMSE:        %.4f m\n", out.traj_report.ate_rmse);
  }
  if (out.recon_valid) {
    std::printf("completeness:    %.3f\n", out.recon.completeness);
    std::printf("accuracy RMS:    %.4f m\n", out.recon.accuracy_rms);
  }
  std::printf("wall time:       %.1f s\n", out.total_seconds);
  std::printf("outputs in:      %s\n", cfg.output_dir.c_str());
  if (out.aborted) {
    std::fprintf(stderr, "tracking aborted: unreliable fitness streak\n");
    return 2;
  }
  return 0;
}

int cmd_export_mesh(const std::string& store_dir, const std::string& out_path,
                    double voxel, const RunConfig& cfg) {
  std::vector<SubmapPtr> submaps;
  for (int id = 0;; ++id) {
    char name[64];
    std::snprintf(name, sizeof(name), "submap_%03d.bin", id);
    const fs::path p = fs::path(store_dir) / name;
    if (!fs::exists(p)) break;
    std::ifstream is(p, std::ios::binary);
    submaps.push_back(NeuralSubmap::load(is, cfg.manager.field));
  }
  if (submaps.empty()) {
    std::fprintf(stderr, "no submap blobs found in %s; writing empty mesh\n",
                 store_dir.c_str());
  }
  const TriangleMesh mesh = Pipeline::extract_mesh(submaps, voxel);
  save_obj(out_path, mesh);
  std::printf("submaps:   %zu\nvertices:  %zu\ntriangles: %zu\nmesh:      %s\n",
              submaps.size(), mesh.vertices.size(), mesh.triangles.size(),
              out_path.c_str());
  return 0;
}

int cmd_evaluate(const std::string& est_path, const std::string& gt_path,
                 int rpe_delta, const std::string& report_prefix) {
  const auto est_entries = read_trajectory(est_path);
  const auto gt_entries = read_trajectory(gt_path);
  if (est_entries.size() != gt_entries.size()) {
    std::fprintf(stderr, "trajectory lengths differ: %zu vs %zu\n",
                 est_entries.size(), gt_entries.size());
    return 1;
  }
  std::vector<Pose> est, gt;
  for (const auto& e : est_entries) est.push_back(e.pose);
  for (const auto& e : gt_entries) gt.push_back(e.pose);
  const TrajectoryReport rep = evaluate_trajectory(est, gt, rpe_delta);
  write_metrics_report(report_prefix + ".txt", report_prefix + ".json", rep,
                       nullptr);
  std::printf("ate_rmse_m=%.6f\nte_mean_m=%.6f\nrpe_mean_m=%.6f\n",
              rep.ate_rmse, mean(rep.te), mean(rep.rpe_values));
  std::printf("report: %s.txt / %s.json\n", report_prefix.c_str(),
              report_prefix.c_str());
  return 0;
}

int cmd_synth(const RunConfig& cfg, const std::string& out_dir) {
  std::vector<Pose> gt;
  const std::vector<FramePtr> frames = Pipeline::make_dataset(cfg, &gt);
  for (size_t i = 0; i < frames.size() && i < gt.size(); ++i)
    frames[i]->pose = gt[i];
  SequenceOptions opts;
  opts.depth_scale = cfg.dataset.depth_scale;
  export_sequence(out_dir, frames, /*with_groundtruth=*/true, opts);
  std::printf("wrote %zu frames to %s\n", frames.size(), out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online RGB-D reconstruction with neural implicit submaps"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path;

  CLI::App* run = app.add_subcommand("run", "track and map a sequence");
  add_config_flags(run, cfg, config_path);

  CLI::App* mesh = app.add_subcommand("export-mesh", "marching cubes over a submap store");
  std::string store_dir, mesh_out = "mesh.obj";
  double mesh_voxel = 0.02;
  mesh->add_option("store", store_dir, "submap store directory")->required();
  mesh->add_option("--output", mesh_out, "output OBJ path");
  mesh->add_option("--voxel", mesh_voxel, "voxel size in meters");
  mesh->add_option("--config", config_path, "config used for network shapes");

  CLI::App* eval = app.add_subcommand("evaluate", "trajectory metrics (ATE/TE/RPE)");
  std::string est_path, gt_path, report_prefix = "metrics";
  int rpe_delta = 1;
  eval->add_option("estimated", est_path)->required();
  eval->add_option("groundtruth", gt_path)->required();
  eval->add_option("--rpe-delta", rpe_delta, "RPE frame interval");
  eval->add_option("--report", report_prefix, "report path prefix");

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic RGB-D sequence");
  std::string synth_out = "sequence";
  add_config_flags(synth, cfg, config_path);
  synth->add_option("--sequence-dir", synth_out, "output sequence directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(merge_config(config_path, cfg, run));
    if (mesh->parsed()) {
      RunConfig mesh_cfg;
      if (!config_path.empty()) mesh_cfg = RunConfig::load_file(config_path);
      return cmd_export_mesh(store_dir, mesh_out, mesh_voxel, mesh_cfg);
    }
    if (eval->parsed())
      return cmd_evaluate(est_path, gt_path, rpe_delta, report_prefix);
    if (synth->parsed())
      return cmd_synth(merge_config(config_path, cfg, synth), synth_out);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
  return 0;
}
