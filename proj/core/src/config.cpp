#include "nrf/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace nrf {

using nlohmann::json;

void RunConfig::finalize() {
  tracking.no_ro = no_ro;
  tracking.no_go = no_go;
  tracking.no_uncertainty = no_u;
  manager.no_submap_init = no_si;
  manager.field.classification = !no_c;
  backend.no_smooth_revisit = no_sr;
  backend.no_loop_closure = no_lc;
  manager.seed = seed;
  tracking.num_particles = tracking.num_particles;
  backend.seed = seed;
  manager.rays.far_clip = intrinsics.far_clip;
  manager.rays.near_clip = manager.near_clip;
  manager.rays.tau = manager.field.tau;
}

namespace {

json vec6_json(const Vec6& v) {
  return json::array({v[0], v[1], v[2], v[3], v[4], v[5]});
}

Vec6 vec6_from(const json& j, const Vec6& fallback) {
  if (!j.is_array() || j.size() != 6) return fallback;
  Vec6 v;
  for (int i = 0; i < 6; ++i) v[i] = j[i].get<double>();
  return v;
}

}  // namespace

std::string RunConfig::to_json() const {
  json j;
  j["dataset"] = {{"source", dataset.source},
                  {"scene", dataset.scene},
                  {"trajectory", dataset.trajectory},
                  {"frames", dataset.frames},
                  {"linear_speed", dataset.linear_speed},
                  {"angular_speed", dataset.angular_speed},
                  {"frame_rate", dataset.frame_rate},
                  {"depth_noise", dataset.depth_noise},
                  {"render_width", dataset.render_width},
                  {"render_height", dataset.render_height},
                  {"depth_scale", dataset.depth_scale}};
  j["intrinsics"] = {{"fx", intrinsics.fx},     {"fy", intrinsics.fy},
                     {"cx", intrinsics.cx},     {"cy", intrinsics.cy},
                     {"width", intrinsics.width}, {"height", intrinsics.height},
                     {"far_clip", intrinsics.far_clip}};
  j["tracking"] = {{"ro_iterations", tracking.ro_iterations},
                   {"go_epochs", tracking.go_epochs},
                   {"rgb_weight", tracking.rgb_weight},
                   {"go_learning_rate", tracking.go_learning_rate},
                   {"momentum_alpha", tracking.momentum_alpha},
                   {"num_particles", tracking.num_particles},
                   {"h_floor", tracking.h_floor},
                   {"use_fast_eval", tracking.use_fast_eval},
                   {"pst_weighted_average", tracking.pst_weighted_average},
                   {"pst_initial_axes", vec6_json(tracking.pst_initial_axes)}};
  j["manager"] = {{"overlap_threshold", manager.overlap_threshold},
                  {"kf_mapped_fraction", manager.kf_mapped_fraction},
                  {"kf_sdf_threshold", manager.kf_sdf_threshold},
                  {"kf_spacing", manager.kf_spacing},
                  {"max_side", manager.max_side},
                  {"near_clip", manager.near_clip},
                  {"init_epochs", manager.init_epochs},
                  {"map_iterations", manager.map_iterations},
                  {"lr_net", manager.lr_net},
                  {"lr_pose", manager.lr_pose},
                  {"map_random_keyframes", manager.map_random_keyframes},
                  {"kf_check_all_submaps", manager.kf_check_all_submaps},
                  {"pixel_rows", manager.pixel_rows},
                  {"pixel_cols", manager.pixel_cols},
                  {"w_tr", manager.weights.w_tr},
                  {"w_fs", manager.weights.w_fs},
                  {"w_rgb", manager.weights.w_rgb},
                  {"w_emd", manager.weights.w_emd},
                  {"enable_rgb", manager.weights.enable_rgb},
                  {"tau", manager.field.tau},
                  {"beta", manager.field.beta},
                  {"pe_frequencies", manager.field.pe_frequencies},
                  {"hidden", manager.field.hidden},
                  {"ray_band", manager.rays.n_band},
                  {"ray_trunc", manager.rays.n_trunc},
                  {"ray_refine", manager.rays.n_refine}};
  j["backend"] = {{"refine_iterations", backend.refine_iterations},
                  {"refine_keyframes", backend.refine_keyframes},
                  {"revisit_epochs", backend.revisit_epochs},
                  {"revisit_lr", backend.revisit_lr},
                  {"min_correspondences", backend.min_correspondences},
                  {"corr_grid", backend.corr_grid},
                  {"corr_refine_steps", backend.corr_refine_steps},
                  {"max_surface_points", backend.max_surface_points},
                  {"min_loop_chain", backend.min_loop_chain},
                  {"icp_iterations", backend.icp_iterations}};
  j["metrics_inlier_distance"] = metrics_inlier_distance;
  j["gt_surface_density"] = gt_surface_density;
  j["mesh_voxel"] = mesh_voxel;
  j["rpe_delta"] = rpe_delta;
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  j["single_threaded"] = single_threaded;
  j["export_mesh"] = export_mesh;
  j["abort_after_unreliable"] = abort_after_unreliable;
  j["ablation"] = {{"no_c", no_c}, {"no_ro", no_ro}, {"no_go", no_go},
                   {"no_u", no_u}, {"no_si", no_si}, {"no_sr", no_sr},
                   {"no_lc", no_lc}};
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  RunConfig cfg;
  const json j = json::parse(text);
  auto get = [](const json& node, const char* key, auto fallback) {
    using T = decltype(fallback);
    if (node.contains(key)) return node[key].template get<T>();
    return fallback;
  };
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    cfg.dataset.source = get(d, "source", cfg.dataset.source);
    cfg.dataset.scene = get(d, "scene", cfg.dataset.scene);
    cfg.dataset.trajectory = get(d, "trajectory", cfg.dataset.trajectory);
    cfg.dataset.frames = get(d, "frames", cfg.dataset.frames);
    cfg.dataset.linear_speed = get(d, "linear_speed", cfg.dataset.linear_speed);
    cfg.dataset.angular_speed = get(d, "angular_speed", cfg.dataset.angular_speed);
    cfg.dataset.frame_rate = get(d, "frame_rate", cfg.dataset.frame_rate);
    cfg.dataset.depth_noise = get(d, "depth_noise", cfg.dataset.depth_noise);
    cfg.dataset.render_width = get(d, "render_width", cfg.dataset.render_width);
    cfg.dataset.render_height = get(d, "render_height", cfg.dataset.render_height);
    cfg.dataset.depth_scale = get(d, "depth_scale", cfg.dataset.depth_scale);
  }
  if (j.contains("intrinsics")) {
    const json& d = j["intrinsics"];
    cfg.intrinsics.fx = get(d, "fx", cfg.intrinsics.fx);
    cfg.intrinsics.fy = get(d, "fy", cfg.intrinsics.fy);
    cfg.intrinsics.cx = get(d, "cx", cfg.intrinsics.cx);
    cfg.intrinsics.cy = get(d, "cy", cfg.intrinsics.cy);
    cfg.intrinsics.width = get(d, "width", cfg.intrinsics.width);
    cfg.intrinsics.height = get(d, "height", cfg.intrinsics.height);
    cfg.intrinsics.far_clip = get(d, "far_clip", cfg.intrinsics.far_clip);
  }
  if (j.contains("tracking")) {
    const json& d = j["tracking"];
    cfg.tracking.ro_iterations = get(d, "ro_iterations", cfg.tracking.ro_iterations);
    cfg.tracking.go_epochs = get(d, "go_epochs", cfg.tracking.go_epochs);
    cfg.tracking.rgb_weight = get(d, "rgb_weight", cfg.tracking.rgb_weight);
    cfg.tracking.go_learning_rate =
        get(d, "go_learning_rate", cfg.tracking.go_learning_rate);
    cfg.tracking.momentum_alpha = get(d, "momentum_alpha", cfg.tracking.momentum_alpha);
    cfg.tracking.num_particles = get(d, "num_particles", cfg.tracking.num_particles);
    cfg.tracking.h_floor = get(d, "h_floor", cfg.tracking.h_floor);
    cfg.tracking.use_fast_eval = get(d, "use_fast_eval", cfg.tracking.use_fast_eval);
    cfg.tracking.pst_weighted_average =
        get(d, "pst_weighted_average", cfg.tracking.pst_weighted_average);
    if (d.contains("pst_initial_axes"))
      cfg.tracking.pst_initial_axes =
          vec6_from(d["pst_initial_axes"], cfg.tracking.pst_initial_axes);
  }
  if (j.contains("manager")) {
    const json& d = j["manager"];
    cfg.manager.overlap_threshold = get(d, "overlap_threshold", cfg.manager.overlap_threshold);
    cfg.manager.kf_mapped_fraction = get(d, "kf_mapped_fraction", cfg.manager.kf_mapped_fraction);
    cfg.manager.kf_sdf_threshold = get(d, "kf_sdf_threshold", cfg.manager.kf_sdf_threshold);
    cfg.manager.kf_spacing = get(d, "kf_spacing", cfg.manager.kf_spacing);
    cfg.manager.max_side = get(d, "max_side", cfg.manager.max_side);
    cfg.manager.near_clip = get(d, "near_clip", cfg.manager.near_clip);
    cfg.manager.init_epochs = get(d, "init_epochs", cfg.manager.init_epochs);
    cfg.manager.map_iterations = get(d, "map_iterations", cfg.manager.map_iterations);
    cfg.manager.lr_net = get(d, "lr_net", cfg.manager.lr_net);
    cfg.manager.lr_pose = get(d, "lr_pose", cfg.manager.lr_pose);
    cfg.manager.map_random_keyframes =
        get(d, "map_random_keyframes", cfg.manager.map_random_keyframes);
    cfg.manager.kf_check_all_submaps =
        get(d, "kf_check_all_submaps", cfg.manager.kf_check_all_submaps);
    cfg.manager.pixel_rows = get(d, "pixel_rows", cfg.manager.pixel_rows);
    cfg.manager.pixel_cols = get(d, "pixel_cols", cfg.manager.pixel_cols);
    cfg.manager.weights.w_tr = get(d, "w_tr", cfg.manager.weights.w_tr);
    cfg.manager.weights.w_fs = get(d, "w_fs", cfg.manager.weights.w_fs);
    cfg.manager.weights.w_rgb = get(d, "w_rgb", cfg.manager.weights.w_rgb);
    cfg.manager.weights.w_emd = get(d, "w_emd", cfg.manager.weights.w_emd);
    cfg.manager.weights.enable_rgb = get(d, "enable_rgb", cfg.manager.weights.enable_rgb);
    cfg.manager.field.tau = get(d, "tau", cfg.manager.field.tau);
    cfg.manager.field.beta = get(d, "beta", cfg.manager.field.beta);
    cfg.manager.field.pe_frequencies =
        get(d, "pe_frequencies", cfg.manager.field.pe_frequencies);
    if (d.contains("hidden"))
      cfg.manager.field.hidden = d["hidden"].get<std::vector<int>>();
    cfg.manager.rays.n_band = get(d, "ray_band", cfg.manager.rays.n_band);
    cfg.manager.rays.n_trunc = get(d, "ray_trunc", cfg.manager.rays.n_trunc);
    cfg.manager.rays.n_refine = get(d, "ray_refine", cfg.manager.rays.n_refine);
  }
  if (j.contains("backend")) {
    const json& d = j["backend"];
    cfg.backend.refine_iterations = get(d, "refine_iterations", cfg.backend.refine_iterations);
    cfg.backend.refine_keyframes = get(d, "refine_keyframes", cfg.backend.refine_keyframes);
    cfg.backend.revisit_epochs = get(d, "revisit_epochs", cfg.backend.revisit_epochs);
    cfg.backend.revisit_lr = get(d, "revisit_lr", cfg.backend.revisit_lr);
    cfg.backend.min_correspondences =
        get(d, "min_correspondences", cfg.backend.min_correspondences);
    cfg.backend.corr_grid = get(d, "corr_grid", cfg.backend.corr_grid);
    cfg.backend.corr_refine_steps =
        get(d, "corr_refine_steps", cfg.backend.corr_refine_steps);
    cfg.backend.max_surface_points =
        get(d, "max_surface_points", cfg.backend.max_surface_points);
    cfg.backend.min_loop_chain = get(d, "min_loop_chain", cfg.backend.min_loop_chain);
    cfg.backend.icp_iterations = get(d, "icp_iterations", cfg.backend.icp_iterations);
  }
  cfg.metrics_inlier_distance =
      get(j, "metrics_inlier_distance", cfg.metrics_inlier_distance);
  cfg.gt_surface_density = get(j, "gt_surface_density", cfg.gt_surface_density);
  cfg.mesh_voxel = get(j, "mesh_voxel", cfg.mesh_voxel);
  cfg.rpe_delta = get(j, "rpe_delta", cfg.rpe_delta);
  cfg.seed = get(j, "seed", cfg.seed);
  cfg.output_dir = get(j, "output_dir", cfg.output_dir);
  cfg.single_threaded = get(j, "single_threaded", cfg.single_threaded);
  cfg.export_mesh = get(j, "export_mesh", cfg.export_mesh);
  cfg.abort_after_unreliable =
      get(j, "abort_after_unreliable", cfg.abort_after_unreliable);
  if (j.contains("ablation")) {
    const json& d = j["ablation"];
    cfg.no_c = get(d, "no_c", cfg.no_c);
    cfg.no_ro = get(d, "no_ro", cfg.no_ro);
    cfg.no_go = get(d, "no_go", cfg.no_go);
    cfg.no_u = get(d, "no_u", cfg.no_u);
    cfg.no_si = get(d, "no_si", cfg.no_si);
    cfg.no_sr = get(d, "no_sr", cfg.no_sr);
    cfg.no_lc = get(d, "no_lc", cfg.no_lc);
  }
  cfg.finalize();
  return cfg;
}

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_json(ss.str());
}

void RunConfig::save_file(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write config " + path);
  os << to_json() << "\n";
}

}  // namespace nrf
