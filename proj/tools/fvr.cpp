// SPDX-License-Identifier: Apache-2.0
//
// Single-binary pipeline driver: synth -> fit -> segment/retrieve -> eval,
// plus reducer workflows and a finite-difference gradient check.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fvr/bundle.hpp"
#include "fvr/camera.hpp"
#include "fvr/core.hpp"
#include "fvr/feature_map.hpp"
#include "fvr/gradcheck.hpp"
#include "fvr/grid.hpp"
#include "fvr/inference.hpp"
#include "fvr/losses.hpp"
#include "fvr/optimizer.hpp"
#include "fvr/reducer.hpp"
#include "fvr/renderer.hpp"
#include "fvr/scene_synth.hpp"
#include "fvr/trainer.hpp"
#include "fvr/vocabulary.hpp"

namespace {

using nlohmann::json;

void write_report(const std::string& path, const json& j) {
  if (path.empty()) return;
  std::ofstream out(path);
  if (!out) throw fvr::io_error("cannot write report: " + path);
  out << j.dump(2) << "\n";
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir,
              int64_t seed_override, int target_samples) {
  fvr::SceneSpec spec = fvr::load_scene_spec(spec_path);
  if (seed_override >= 0) spec.seed = static_cast<uint64_t>(seed_override);
  fvr::GroundTruthBundle bundle = fvr::build_scene(spec, target_samples);
  fvr::save_bundle(bundle, out_dir);
  size_t occupied = 0;
  for (int l : bundle.semantic.labels)
    if (l != fvr::kFreeLabel) ++occupied;
  std::cout << "synth: wrote bundle to " << out_dir << " (occupied voxels "
            << occupied << "/" << bundle.semantic.labels.size() << ")\n";
  return 0;
}

int cmd_fit(const std::string& scene_dir, const std::string& out_grid,
            const std::string& report_path, const std::string& opt_out,
            fvr::FitConfig cfg, const std::string& loss_name, bool uniform,
            const std::string& init_grid_path, bool scale_given,
            bool deterministic) {
  cfg.loss = fvr::parse_loss_kind(loss_name);
  if (uniform) cfg.sample_mode = fvr::SampleMode::kUniform;
  fvr::LoadedBundle bundle = fvr::load_bundle(scene_dir);
  if (cfg.near <= 0.0) cfg.near = bundle.near;
  if (cfg.far <= 0.0) cfg.far = bundle.far;
  if (!scale_given) cfg.density_scale = bundle.density_scale;

  const bool photometric = cfg.loss == fvr::LossKind::kPhotometric;
  const auto& targets =
      photometric ? bundle.rgb_targets : bundle.feature_targets;
  if (targets.empty())
    throw fvr::config_error(photometric
                                ? "scene bundle carries no rgb target maps"
                                : "scene bundle carries no feature targets");

  fvr::VoxelGrid init;
  if (!init_grid_path.empty()) {
    init = fvr::load_grid(init_grid_path);
  } else {
    init = fvr::VoxelGrid::create(bundle.gt_grid.geometry,
                                  bundle.gt_grid.feature_dim, photometric,
                                  -2.0, 0.01, cfg.rng_seed);
  }

  fvr::FitReport report = fvr::fit_scene(bundle.track, targets, cfg, init);
  fvr::save_grid(report.grid, out_grid);
  if (!opt_out.empty()) fvr::save_optimizer_state(report.optimizer, opt_out);

  json cfg_json = {{"steps", cfg.steps},
                   {"rays", cfg.n_rays_per_step},
                   {"samples", cfg.n_samples_per_ray},
                   {"horizon", cfg.horizon},
                   {"lr", cfg.learning_rate},
                   {"loss", loss_name},
                   {"near", cfg.near},
                   {"far", cfg.far},
                   {"density_scale", cfg.density_scale},
                   {"tv", cfg.tv_weight},
                   {"scene", scene_dir}};
  fvr::write_manifest(out_grid + ".manifest.json", cfg_json, cfg.rng_seed,
                      {out_grid});

  json rep = {{"loss_first", report.loss_curve.empty() ? 0.0
                                                       : report.loss_curve.front()},
              {"loss_last", report.loss_curve.empty() ? 0.0
                                                      : report.loss_curve.back()},
              // wall clock would break bit-identical reports across runs
              {"wall_seconds", deterministic ? 0.0 : report.wall_seconds},
              {"zero_norm_hits", report.zero_norm_hits},
              {"out_of_grid_fraction", report.out_of_grid_fraction},
              {"loss_curve", report.loss_curve}};
  write_report(report_path, rep);
  std::printf("fit: %d steps, loss %.6g -> %.6g, %.1fs, oob %.3f\n",
              cfg.steps,
              report.loss_curve.empty() ? 0.0 : report.loss_curve.front(),
              report.loss_curve.empty() ? 0.0 : report.loss_curve.back(),
              report.wall_seconds, report.out_of_grid_fraction);
  return 0;
}

int cmd_render(const std::string& grid_path, const std::string& track_path,
               int frame, int camera, const std::string& out_map,
               const std::string& out_depth, const std::string& out_rgb,
               double near, double far, int samples, double density_scale) {
  fvr::VoxelGrid grid = fvr::load_grid(grid_path);
  fvr::FramePoseTrack track = fvr::load_track(track_path);
  const auto* fr = track.find(frame);
  if (fr == nullptr)
    throw fvr::config_error("frame offset not present in track: " +
                            std::to_string(frame));
  if (camera < 0 || camera >= static_cast<int>(fr->cameras.size()))
    throw fvr::config_error("camera index out of range");
  if (far <= 0.0)
    far = near + fvr::norm(grid.geometry.max_corner - grid.geometry.min_corner);
  fvr::RenderedMaps maps = fvr::render_feature_map(
      grid, fr->cameras[camera], near, far, samples, density_scale);
  fvr::save_feature_map(maps.feature, out_map);
  if (!out_depth.empty()) fvr::save_feature_map(maps.depth, out_depth);
  if (!out_rgb.empty()) {
    if (!grid.has_rgb())
      throw fvr::config_error("grid has no rgb channels to render");
    fvr::save_feature_map(maps.rgb, out_rgb);
  }
  std::cout << "render: wrote " << out_map << "\n";
  return 0;
}

int cmd_reduce(const std::string& vocab_path, int target_dim, int steps,
               double lr, int64_t seed, const std::string& out_reducer,
               const std::string& apply_in, const std::string& apply_out,
               const std::string& report_path) {
  if (!apply_in.empty()) {
    fvr::Reducer r = fvr::load_reducer(out_reducer);
    fvr::FeatureMap in = fvr::load_feature_map(apply_in);
    fvr::ReduceMapResult res = fvr::reduce_feature_map(r, in);
    fvr::save_feature_map(res.map, apply_out);
    std::printf("reduce: applied %dx%d -> L'=%d (%d zero-norm pixels)\n",
                in.height, in.width, r.target_dim, res.zero_norm_pixels);
    return 0;
  }
  fvr::Vocabulary vocab = fvr::load_vocabulary(vocab_path);
  fvr::ReducerTrainResult res = fvr::train_reducer(
      vocab.all_prompts(), target_dim, steps, lr,
      seed >= 0 ? static_cast<uint64_t>(seed) : 0);
  fvr::save_reducer(res.reducer, out_reducer);
  json cfg_json = {{"vocab", vocab_path},
                   {"target_dim", target_dim},
                   {"steps", steps},
                   {"lr", lr}};
  fvr::write_manifest(out_reducer + ".manifest.json", cfg_json,
                      seed >= 0 ? static_cast<uint64_t>(seed) : 0,
                      {out_reducer});
  json rep = {{"final_loss_rad", res.final_loss},
              {"orthogonality_error", res.orthogonality_error},
              {"normalized_inputs", res.normalized_inputs}};
  write_report(report_path, rep);
  std::printf("reduce: L=%d -> L'=%d, mean arccos %.6g rad, |U^T U - I| %.3g\n",
              res.reducer.source_dim, res.reducer.target_dim, res.final_loss,
              res.orthogonality_error);
  return 0;
}

int cmd_segment(const std::string& grid_path, const std::string& vocab_path,
                double tau, const std::string& out_path, bool raw_dot) {
  fvr::VoxelGrid grid = fvr::load_grid(grid_path);
  fvr::Vocabulary vocab = fvr::load_vocabulary(vocab_path);
  fvr::SemanticGrid sem = fvr::segment(grid, vocab, tau, raw_dot);
  fvr::save_semantic_grid(sem, out_path);
  json cfg_json = {{"grid", grid_path}, {"vocab", vocab_path}, {"tau", tau},
                   {"raw_dot", raw_dot}};
  fvr::write_manifest(out_path + ".manifest.json", cfg_json, 0, {out_path});
  size_t occ = 0;
  for (int l : sem.labels)
    if (l != fvr::kFreeLabel) ++occ;
  std::printf("segment: %zu/%zu voxels occupied at tau=%.3g\n", occ,
              sem.labels.size(), tau);
  return 0;
}

int cmd_retrieve(const std::string& grid_path, const std::string& vocab_path,
                 const std::string& class_name, const std::string& out_path,
                 double mask_threshold, double density_min, bool raw_dot) {
  fvr::VoxelGrid grid = fvr::load_grid(grid_path);
  fvr::Vocabulary vocab = fvr::load_vocabulary(vocab_path);
  int ci = vocab.find_class(class_name);
  if (ci < 0) throw fvr::config_error("unknown class: " + class_name);
  const auto& query = vocab.classes[ci].prompts[0].embedding;
  fvr::RetrievalResult res =
      fvr::retrieve(grid, query, mask_threshold, raw_dot);
  if (density_min > 0.0) {
    for (size_t i = 0; i < res.similarity.size(); ++i)
      if (fvr::sigmoid(grid.density_logits[i]) < density_min)
        res.similarity[i] = -1.0;
  }
  // Heatmap export: L=1 feature-map with rows = x slices, columns = (y,z).
  fvr::FeatureMap heat = fvr::FeatureMap::zeros(
      grid.geometry.nx, grid.geometry.ny * grid.geometry.nz, 1);
  for (int z = 0; z < grid.geometry.nz; ++z)
    for (int y = 0; y < grid.geometry.ny; ++y)
      for (int x = 0; x < grid.geometry.nx; ++x)
        heat.at(x, y + grid.geometry.ny * z)[0] =
            res.similarity[grid.geometry.index(x, y, z)];
  fvr::save_feature_map(heat, out_path);
  double best = -1.0;
  for (double s : res.similarity) best = std::max(best, s);
  std::printf("retrieve: class '%s', max similarity %.4f, wrote %s\n",
              class_name.c_str(), best, out_path.c_str());
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path,
             const std::string& report_path) {
  fvr::SemanticGrid pred = fvr::load_semantic_grid(pred_path);
  fvr::SemanticGrid gt = fvr::load_semantic_grid(gt_path);
  int classes = std::max(pred.class_count, gt.class_count);
  fvr::IouReport rep = fvr::iou_miou(pred, gt, classes);
  double acc = fvr::occupied_accuracy(pred, gt);
  std::printf("IoU %.4f\n", rep.geometric_iou);
  std::printf("mIoU %.4f\n", rep.miou);
  std::printf("accuracy %.4f\n", acc);
  for (int c = 0; c < classes; ++c)
    if (rep.per_class_iou[c] >= 0.0)
      std::printf("class %d IoU %.4f%s\n", c, rep.per_class_iou[c],
                  rep.class_in_gt[c] ? "" : " (absent in gt, excluded)");
  json j = {{"iou", rep.geometric_iou},
            {"miou", rep.miou},
            {"accuracy", acc},
            {"per_class_iou", rep.per_class_iou}};
  write_report(report_path, j);
  return 0;
}

int cmd_gradcheck(int grid_res, int n_rays, int n_samples, int feature_dim,
                  int64_t seed, double step, const std::string& loss_name) {
  fvr::GradCheckConfig cfg;
  cfg.grid_res = grid_res;
  cfg.n_rays = n_rays;
  cfg.n_samples = n_samples;
  cfg.feature_dim = feature_dim;
  cfg.seed = seed >= 0 ? static_cast<uint64_t>(seed) : 0;
  cfg.fd_step = step;
  cfg.loss = fvr::parse_loss_kind(loss_name);
  fvr::GradCheckResult res = fvr::run_gradcheck(cfg);
  std::printf("gradcheck: %zu params, max rel error %.3e, max abs error %.3e\n",
              res.checked_params, res.max_rel_error, res.max_abs_error);
  if (!std::isfinite(res.max_rel_error))
    throw fvr::numeric_error("gradcheck produced non-finite errors");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feature-field volume rendering pipeline"};
  app.require_subcommand(1);
  bool deterministic = false;
  app.add_flag("--deterministic", deterministic,
               "make written reports bit-identical across runs (omits wall "
               "clock); computation is deterministic either way");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a ground-truth scene bundle");
  std::string spec_path, out_dir;
  int64_t synth_seed = -1;
  int target_samples = 192;
  synth->add_option("--spec", spec_path, "scene spec file")->required();
  synth->add_option("--out", out_dir, "output bundle directory")->required();
  synth->add_option("--seed", synth_seed, "override spec seed");
  synth->add_option("--target-samples", target_samples,
                    "oracle samples per target ray");

  // fit
  auto* fit = app.add_subcommand("fit", "fit a grid to target feature maps");
  std::string scene_dir, out_grid, fit_report, opt_out, loss_name =
      "cos_guided_mse";
  std::string init_grid;
  fvr::FitConfig fcfg;
  bool uniform = false;
  fit->set_config("--config", "", "text config overriding flag defaults");
  fit->add_option("--scene", scene_dir, "scene bundle directory")->required();
  fit->add_option("--out", out_grid, "output grid file")->required();
  fit->add_option("--report", fit_report, "JSON fit report path");
  fit->add_option("--optimizer-out", opt_out, "optimizer state checkpoint");
  fit->add_option("--init", init_grid, "initial grid checkpoint");
  fit->add_option("--steps", fcfg.steps, "optimization steps");
  fit->add_option("--rays", fcfg.n_rays_per_step, "rays per step");
  fit->add_option("--samples", fcfg.n_samples_per_ray, "samples per ray");
  fit->add_option("--horizon", fcfg.horizon, "temporal horizon");
  fit->add_option("--lr", fcfg.learning_rate, "learning rate");
  fit->add_option("--loss", loss_name,
                  "cos_guided_mse | mse | cosine | photometric");
  fit->add_option("--near", fcfg.near, "near plane (<=0: bundle default)");
  fit->add_option("--far", fcfg.far, "far plane (<=0: bundle default)");
  fit->add_option("--seed", fcfg.rng_seed, "rng seed");
  auto* fit_scale_opt =
      fit->add_option("--density-scale", fcfg.density_scale,
                      "density scale constant k (default: bundle value)");
  fit->add_option("--tv", fcfg.tv_weight, "total-variation weight on density");
  fit->add_flag("--uniform-samples", uniform,
                "uniform instead of stratified ray samples");

  // render
  auto* render = app.add_subcommand("render", "render feature/depth maps");
  std::string rgrid, rtrack, rout, rdepth, rrgb;
  int rframe = 0, rcam = 0, rsamples = 100;
  double rnear = 0.5, rfar = 0.0, rscale = 1.0;
  render->add_option("--grid", rgrid)->required();
  render->add_option("--track", rtrack)->required();
  render->add_option("--frame", rframe);
  render->add_option("--camera", rcam);
  render->add_option("--out", rout)->required();
  render->add_option("--depth", rdepth, "also write expected-depth map");
  render->add_option("--rgb", rrgb, "also write rgb map");
  render->add_option("--near", rnear);
  render->add_option("--far", rfar);
  render->add_option("--samples", rsamples);
  render->add_option("--density-scale", rscale);

  // reduce
  auto* reduce = app.add_subcommand("reduce", "train or apply a reducer");
  std::string red_vocab, red_out, red_apply_in, red_apply_out, red_report;
  int red_dim = 16, red_steps = 3000;
  double red_lr = 3e-3;
  int64_t red_seed = 0;
  reduce->add_option("--vocab", red_vocab, "vocabulary with prompt embeddings");
  reduce->add_option("--ldim", red_dim, "target dimension L'");
  reduce->add_option("--steps", red_steps);
  reduce->add_option("--lr", red_lr);
  reduce->add_option("--seed", red_seed);
  reduce->add_option("--reducer", red_out, "reducer file (output, or input with --apply)")
      ->required();
  reduce->add_option("--apply", red_apply_in, "feature map to encode");
  reduce->add_option("--apply-out", red_apply_out, "encoded map output");
  reduce->add_option("--report", red_report, "JSON report path");

  // segment
  auto* seg = app.add_subcommand("segment", "zero-shot semantic occupancy");
  std::string sgrid, svocab, sout;
  double tau = 0.5;
  bool raw_dot = false;
  seg->add_option("--grid", sgrid)->required();
  seg->add_option("--vocab", svocab)->required();
  seg->add_option("--tau", tau, "free-class density threshold");
  seg->add_option("--out", sout)->required();
  seg->add_flag("--raw-dot", raw_dot, "raw dot product instead of cosine");

  // retrieve
  auto* ret = app.add_subcommand("retrieve", "open-vocabulary retrieval heatmap");
  std::string tgrid, tvocab, tclass, tout;
  double tthresh = 2.0, tdensity = 0.0;
  bool traw = false;
  ret->add_option("--grid", tgrid)->required();
  ret->add_option("--vocab", tvocab)->required();
  ret->add_option("--class", tclass, "query class name")->required();
  ret->add_option("--out", tout)->required();
  ret->add_option("--mask-threshold", tthresh, "<=1 adds a binary mask");
  ret->add_option("--density-min", tdensity,
                  "clamp similarity to -1 below this density");
  ret->add_flag("--raw-dot", traw);

  // eval
  auto* ev = app.add_subcommand("eval", "IoU/mIoU between semantic grids");
  std::string epred, egt, ereport;
  ev->add_option("--pred", epred)->required();
  ev->add_option("--gt", egt)->required();
  ev->add_option("--report", ereport, "JSON report path");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
  int gc_grid = 4, gc_rays = 8, gc_samples = 8, gc_dim = 8;
  int64_t gc_seed = 0;
  double gc_step = 1e-4;
  std::string gc_loss = "cos_guided_mse";
  gc->add_option("--grid", gc_grid, "grid resolution per axis");
  gc->add_option("--rays", gc_rays);
  gc->add_option("--samples", gc_samples);
  gc->add_option("--l", gc_dim, "feature dimension");
  gc->add_option("--seed", gc_seed);
  gc->add_option("--step", gc_step, "finite-difference step");
  gc->add_option("--loss", gc_loss);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed())
      return cmd_synth(spec_path, out_dir, synth_seed, target_samples);
    if (fit->parsed())
      return cmd_fit(scene_dir, out_grid, fit_report, opt_out, fcfg, loss_name,
                     uniform, init_grid, fit_scale_opt->count() > 0,
                     deterministic);
    if (render->parsed())
      return cmd_render(rgrid, rtrack, rframe, rcam, rout, rdepth, rrgb, rnear,
                        rfar, rsamples, rscale);
    if (reduce->parsed())
      return cmd_reduce(red_vocab, red_dim, red_steps, red_lr, red_seed,
                        red_out, red_apply_in, red_apply_out, red_report);
    if (seg->parsed()) return cmd_segment(sgrid, svocab, tau, sout, raw_dot);
    if (ret->parsed())
      return cmd_retrieve(tgrid, tvocab, tclass, tout, tthresh, tdensity,
                          traw);
    if (ev->parsed()) return cmd_eval(epred, egt, ereport);
    if (gc->parsed())
      return cmd_gradcheck(gc_grid, gc_rays, gc_samples, gc_dim, gc_seed,
                           gc_step, gc_loss);
  } catch (const fvr::numeric_error& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const fvr::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const fvr::io_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const fvr::domain_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
