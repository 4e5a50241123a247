#pragma once

// Command-line front end. run_cli() takes the output streams explicitly so
// it can be driven in-process.
//
// Exit codes: 0 success, 1 validation or input error, 2 numerical failure.
// Failures print one JSON object {"error": kind, "message": text} to stderr.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "skelsplat/config.hpp"
#include "skelsplat/eval.hpp"
#include "skelsplat/io.hpp"
#include "skelsplat/optim.hpp"
#include "skelsplat/scene.hpp"

namespace skelsplat {

inline constexpr const char* kConfigEnvVar = "SKELSPLAT_CONFIG";

namespace cli {

/// Flags that override OptimConfig keys when given.
struct OptimFlags {
  std::optional<int> max_iters;
  std::optional<double> lr_mean;
  std::optional<double> lambda_sym;
  std::optional<std::string> symm;
  std::optional<double> occ_scale;
  std::optional<std::string> accumulate;
  std::optional<double> resolution_scale;
  bool freeze_covariance = false;

  void add_to(CLI::App* app) {
    app->add_option("--max-iters", max_iters, "maximum iterations (optim.max_iters)");
    app->add_option("--lr-mean", lr_mean, "learning rate of joint means, mm/step (optim.lr_mean)");
    app->add_option("--lambda-sym", lambda_sym, "symmetry loss weight, 1/mm^2 (optim.lambda_sym)");
    app->add_option("--symm", symm, "symmetric limb set: none, 1, 2, 3 (optim.symm)")
        ->check(CLI::IsMember({"none", "1", "2", "3"}));
    app->add_option("--occ-scale", occ_scale, "occlusion-prone variance multiplier (optim.occ_scale)");
    app->add_option("--accumulate", accumulate,
                    "views per optimizer step: a positive count or 'all' (optim.accumulation_views)");
    app->add_option("--resolution-scale", resolution_scale,
                    "render resolution multiplier (optim.resolution_scale)");
    app->add_flag("--freeze-covariance", freeze_covariance,
                  "optimize means only (optim.freeze_covariance)");
  }

  void apply(OptimConfig& c) const {
    if (max_iters) c.max_iters = *max_iters;
    if (lr_mean) c.lr_mean = *lr_mean;
    if (lambda_sym) c.lambda_sym = *lambda_sym;
    if (symm) c.symm_set = *symm == "none" ? SymmSet::None : symm_set_from_int(std::stoi(*symm));
    if (occ_scale) c.occ_scale = *occ_scale;
    if (accumulate) {
      if (*accumulate == "all") {
        c.accumulation_views = 0;
      } else {
        int v = 0;
        std::size_t used = 0;
        try {
          v = std::stoi(*accumulate, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != accumulate->size() || v <= 0) {
          throw Error(ErrorKind::InvalidArgument, "--accumulate expects a positive view count or 'all'");
        }
        c.accumulation_views = v;
      }
    }
    if (resolution_scale) c.resolution_scale = *resolution_scale;
    if (freeze_covariance) c.freeze_covariance = true;
    c.validate();
  }
};

inline std::vector<double> parse_grid(const std::string& text, AblationAxis axis) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "all" && axis == AblationAxis::Accumulation) {
      out.push_back(0.0);
    } else if (item == "none" && axis == AblationAxis::Symm) {
      out.push_back(0.0);
    } else {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(item, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != item.size()) throw Error(ErrorKind::InvalidArgument, "--grid: cannot parse '" + item + "'");
      out.push_back(v);
    }
  }
  return out;
}

inline std::vector<int> parse_index_list(const std::string& text, const std::string& flag) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw Error(ErrorKind::InvalidArgument, flag + ": cannot parse '" + item + "'");
    out.push_back(v);
  }
  return out;
}

inline void print_error(std::ostream& err, const std::string& kind, const std::string& message) {
  err << Json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace cli

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-view 3D human pose refinement with one Gaussian per joint."};
  app.require_subcommand(1);
  app.footer(config_help() + "\nThe default config file path may be given in $" +
             kConfigEnvVar + ". Precedence: built-in defaults < config file < flags.");

  std::string config_path;
  int verbosity = 0;
  app.add_option("-c,--config", config_path, "JSON config file")->envname(kConfigEnvVar);
  app.add_flag("-v,--verbose", verbosity, "log progress to stderr");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic scene with exact detections");
  std::optional<int> synth_views;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  bool synth_force = false;
  synth->add_option("--views", synth_views, "number of cameras (synth.n_views)");
  synth->add_option("--seed", synth_seed, "random seed");
  synth->add_option("-o,--output", synth_out, "scene file to write")->required();
  synth->add_flag("--force", synth_force, "overwrite an existing output file");

  // corrupt
  auto* corr = app.add_subcommand("corrupt", "apply detection noise, occlusion and init-pose noise");
  std::string corr_in, corr_out, corr_views, corr_joints, corr_mode = "displace";
  std::uint64_t corr_seed = 0;
  std::optional<double> corr_noise2d, corr_noise3d, corr_displace, corr_rate;
  bool corr_force = false;
  corr->add_option("scene", corr_in, "input scene")->required();
  corr->add_option("--seed", corr_seed, "random seed");
  corr->add_option("--noise-2d", corr_noise2d, "detection noise sigma, px");
  corr->add_option("--noise-3d", corr_noise3d, "init-pose perturbation RMS length, mm");
  corr->add_option("--occlude-views", corr_views, "comma-separated view indices to occlude");
  corr->add_option("--occlude-joints", corr_joints,
                   "comma-separated joint indices (default: the skeleton's occlusion-prone joints)");
  corr->add_option("--mode", corr_mode, "occlusion mode: drop or displace")
      ->check(CLI::IsMember({"drop", "displace"}));
  corr->add_option("--displace-sigma", corr_displace, "displacement of occluded detections, px");
  corr->add_option("--occlusion-rate", corr_rate, "probability each listed pair is occluded");
  corr->add_option("-o,--output", corr_out, "scene file to write")->required();
  corr->add_flag("--force", corr_force, "overwrite an existing output file");

  // optimize
  auto* opt = app.add_subcommand("optimize", "refine the pose of a scene");
  std::string opt_in, opt_out;
  bool opt_force = false, opt_timing = false;
  cli::OptimFlags opt_flags;
  opt->add_option("scene", opt_in, "input scene")->required();
  opt->add_option("-o,--output", opt_out, "results file to write")->required();
  opt->add_flag("--force", opt_force, "overwrite an existing output file");
  opt->add_flag("--timing", opt_timing, "record wall time in the results (breaks byte determinism)");
  opt_flags.add_to(opt);

  // eval
  auto* ev = app.add_subcommand("eval", "score a results file against a scene's ground truth");
  std::string ev_results, ev_scene, ev_out;
  bool ev_force = false;
  ev->add_option("results", ev_results, "results file")->required();
  ev->add_option("scene", ev_scene, "scene with gt_pose")->required();
  ev->add_option("-o,--output", ev_out, "also write the metrics JSON here");
  ev->add_flag("--force", ev_force, "overwrite an existing output file");

  // ablate
  auto* abl = app.add_subcommand("ablate", "sweep one ablation axis over seeded synthetic scenes");
  std::string abl_axis, abl_grid, abl_out;
  std::optional<int> abl_views, abl_seeds, abl_workers;
  std::uint64_t abl_seed = 0;
  bool abl_force = false, abl_timing = false;
  cli::OptimFlags abl_flags;
  abl->add_option("--axis", abl_axis, "noise, accumulation, occ_scale, symm, resolution or n_views")
      ->required();
  abl->add_option("--grid", abl_grid, "comma-separated axis values (default: ablation.<axis>)");
  abl->add_option("--views", abl_views, "cameras per scene (synth.n_views)");
  abl->add_option("--seeds", abl_seeds, "scenes per grid point, >= 20 (ablation.seeds)");
  abl->add_option("--seed", abl_seed, "first scene seed");
  abl->add_option("--workers", abl_workers, "concurrent trials (ablation.workers)");
  abl->add_option("-o,--output", abl_out, "CSV file to write (default: stdout)");
  abl->add_flag("--force", abl_force, "overwrite an existing output file");
  abl->add_flag("--timing", abl_timing, "append runtime columns (breaks byte determinism)");
  abl_flags.add_to(abl);

  // dump-heatmaps
  auto* dump = app.add_subcommand("dump-heatmaps", "write pseudo ground-truth and rendered heatmaps as PGM");
  std::string dump_scene, dump_results, dump_dir;
  bool dump_force = false;
  dump->add_option("scene", dump_scene, "input scene")->required();
  dump->add_option("--results", dump_results, "results file whose skeleton is rendered");
  dump->add_option("-o,--output", dump_dir, "output directory")->required();
  dump->add_flag("--force", dump_force, "overwrite existing files");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return 0;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::ParseError& e) {
      cli::print_error(err, "UsageError", e.what());
      return 1;
    }

    ToolConfig cfg;
    if (!config_path.empty()) overlay(cfg, parse_json(read_text_file(config_path), config_path), config_path);

    if (synth->parsed()) {
      SynthOptions so = cfg.synth;
      if (synth_views) so.n_views = *synth_views;
      so.seed = synth_seed;
      save_scene(synth_out, synth_scene(so), synth_force);
      return 0;
    }

    if (corr->parsed()) {
      const Scene scene = load_scene(corr_in);
      CorruptionSpec spec;
      spec.seed = corr_seed;
      spec.noise_sigma_2d = corr_noise2d.value_or(cfg.scenario.noise_sigma_2d);
      spec.noise_sigma_3d_init = corr_noise3d.value_or(cfg.scenario.noise_sigma_3d_init);
      spec.occluded_views = cli::parse_index_list(corr_views, "--occlude-views");
      spec.occluded_joints = corr_joints.empty() ? scene.skeleton.occlusion_prone
                                                 : cli::parse_index_list(corr_joints, "--occlude-joints");
      spec.occlusion_mode = occlusion_mode_from_string(corr_mode);
      spec.displace_sigma = corr_displace.value_or(cfg.scenario.displace_sigma);
      spec.occlusion_rate = corr_rate.value_or(cfg.scenario.occlusion_rate);
      Scene c = corrupt(scene, spec);
      c.meta["corruption_seed"] = std::to_string(corr_seed);
      save_scene(corr_out, c, corr_force);
      return 0;
    }

    if (opt->parsed()) {
      opt_flags.apply(cfg.optim);
      if (!opt_force && std::filesystem::exists(opt_out)) {
        throw Error(ErrorKind::Io, "'" + opt_out + "' exists; pass --force to overwrite");
      }
      const Scene scene = load_scene(opt_in);
      scene.validate();
      const GaussianSkeleton init = initial_skeleton(scene, cfg.optim);
      const OptimResult r = optimize(scene, init, cfg.optim);
      if (verbosity > 0) {
        for (std::size_t i = 0; i < r.trace.iterations.size(); ++i) {
          err << "iter " << i << " loss " << r.trace.iterations[i].total << "\n";
        }
      }
      std::optional<Metrics> metrics;
      if (scene.gt_pose) metrics = compute_metrics(r.skeleton, *scene.gt_pose, init.means());
      save_results(opt_out, r.skeleton, r.trace, cfg.optim, metrics, true, opt_timing);
      return 0;
    }

    if (ev->parsed()) {
      const Results res = load_results(ev_results);
      const Scene scene = load_scene(ev_scene);
      if (!scene.gt_pose) throw Error(ErrorKind::Schema, ev_scene + ": scene has no gt_pose");
      std::optional<Pose> init = scene.init_pose;
      if (!init) {
        try {
          init = triangulate_pose(scene);
        } catch (const Error&) {
          init.reset();
        }
      }
      const Metrics m = compute_metrics(res.skeleton, *scene.gt_pose, init);
      const std::string text = to_json(m).dump(2) + "\n";
      out << "MPJPE " << m.mpjpe << " mm\n" << text;
      if (!ev_out.empty()) write_text_file(ev_out, text, ev_force);
      return 0;
    }

    if (abl->parsed()) {
      abl_flags.apply(cfg.optim);
      AblationConfig ac;
      ac.axis = ablation_axis_from_string(abl_axis);
      ac.grid = abl_grid.empty() ? cfg.ablation.grid(ac.axis) : cli::parse_grid(abl_grid, ac.axis);
      ac.scenario = cfg.scenario;
      ac.scenario.n_views = abl_views.value_or(cfg.synth.n_views);
      ac.optim = cfg.optim;
      ac.seeds = abl_seeds.value_or(cfg.ablation.seeds);
      ac.seed = abl_seed;
      ac.workers = abl_workers.value_or(cfg.ablation.workers);
      ac.timing = abl_timing;
      if (!abl_out.empty() && !abl_force && std::filesystem::exists(abl_out)) {
        throw Error(ErrorKind::Io, "'" + abl_out + "' exists; pass --force to overwrite");
      }
      const std::string csv = ablation_csv(run_ablation(ac));
      if (abl_out.empty()) out << csv;
      else write_text_file(abl_out, csv, true);
      return 0;
    }

    if (dump->parsed()) {
      const Scene scene = load_scene(dump_scene);
      scene.validate();
      const GaussianSkeleton init = initial_skeleton(scene, cfg.optim);
      std::optional<GaussianSkeleton> fitted;
      if (!dump_results.empty()) {
        fitted = load_results(dump_results).skeleton;
        if (fitted->size() != scene.num_joints()) {
          throw Error(ErrorKind::DimensionMismatch, "results and scene have different joint counts");
        }
      }
      std::filesystem::create_directories(dump_dir);
      const auto targets = build_pseudo_targets(scene.cameras, scene.detections, init);
      auto write = [&](const std::string& name, int w, int h, const std::vector<double>& px) {
        write_text_file((std::filesystem::path(dump_dir) / name).string(), encode_pgm16(w, h, px),
                        dump_force);
      };
      for (int i = 0; i < scene.num_views(); ++i) {
        const Camera& cam = scene.cameras[i];
        const std::string view = "view" + std::to_string(i);
        for (int j = 0; j < scene.num_joints(); ++j) {
          const Heatmap& t = targets[i][j];
          if (!t.missing) write(view + "_joint" + std::to_string(j) + "_pseudo.pgm", cam.width, cam.height, t.dense());
        }
        write(view + "_pseudo_all.pgm", cam.width, cam.height,
              aggregate_channels(targets[i], cam.width, cam.height));
        if (fitted) {
          const std::vector<Heatmap> rendered = render_skeleton(cam, *fitted);
          for (int j = 0; j < scene.num_joints(); ++j) {
            write(view + "_joint" + std::to_string(j) + "_render.pgm", cam.width, cam.height,
                  rendered[j].dense());
          }
          write(view + "_render_all.pgm", cam.width, cam.height,
                aggregate_channels(rendered, cam.width, cam.height));
        }
      }
      return 0;
    }
  } catch (const NonFiniteLossError& e) {
    cli::print_error(err, to_string(e.kind()), e.what());
    return 2;
  } catch (const Error& e) {
    cli::print_error(err, to_string(e.kind()), e.what());
    return e.kind() == ErrorKind::NonFiniteLoss ? 2 : 1;
  } catch (const std::filesystem::filesystem_error& e) {
    cli::print_error(err, to_string(ErrorKind::Io), e.what());
    return 1;
  }
  return 1;
}

}  // namespace skelsplat
