// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "support.hpp"

using namespace skelsplat;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

constexpr int kScenes = 50;

std::vector<TrialResult> run_trials(const ScenarioConfig& sc, const OptimConfig& oc, int n,
                                    std::uint64_t first_seed = 0) {
  std::vector<TrialResult> out;
  for (int s = 0; s < n; ++s) out.push_back(run_trial(sc, oc, first_seed + s));
  return out;
}

std::vector<double> final_errors(const std::vector<TrialResult>& t) {
  std::vector<double> v;
  for (const TrialResult& r : t) v.push_back(r.metrics.mpjpe);
  return v;
}

ScenarioConfig noisy_scenario() {
  ScenarioConfig sc;
  sc.noise_sigma_2d = 2.0;
  sc.noise_sigma_3d_init = 40.0;
  return sc;
}

ScenarioConfig occlusion_scenario() {
  ScenarioConfig sc;
  sc.noise_sigma_2d = 2.0;
  sc.occluded_views = 2;
  sc.occlusion_mode = OcclusionMode::Displace;
  sc.displace_sigma = 20.0;
  sc.occlusion_rate = 0.5;
  return sc;
}

// 1. Analytic gradients of the full objective against central differences.
Outcome gradient_exactness() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  int components = 0, unresolved = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scene scene = test_support::noisy_scene(100 + seed);
    const GaussianSkeleton init = init_skeleton(scene.skeleton, triangulate_pose(scene), 300.0, 1.25);
    const auto targets = build_pseudo_targets(scene.cameras, scene.detections, init);
    GaussianSkeleton sk = init;
    std::mt19937_64 rng(seed);
    test_support::scramble(sk, rng, 6.0);
    const auto gc = test_support::check_gradient(scene.cameras, targets, sk, sk.model.symm3, 1e-5);
    worst = std::max(worst, gc.max_rel_error);
    components += gc.components;
    unresolved += gc.unresolved;
  }
  const double t = seconds_since(t0);
  return {worst < 1e-5 && unresolved == 0 && t < 60.0,
          fmt("max relative error %.3g over %d components (%d unresolved), %.1f s", worst, components,
              unresolved, t)};
}

// Symmetric 2x2 eigenvalues by Jacobi rotation in extended precision.
std::pair<long double, long double> jacobi_eigen(const Mat2& m) {
  const long double a = m(0, 0), b = m(0, 1), c = m(1, 1);
  const long double theta = 0.5L * std::atan2(2.0L * b, a - c);
  const long double cs = std::cos(theta), sn = std::sin(theta);
  const long double l1 = cs * cs * a + 2.0L * cs * sn * b + sn * sn * c;
  const long double l2 = sn * sn * a - 2.0L * cs * sn * b + cs * cs * c;
  return {std::max(l1, l2), std::min(l1, l2)};
}

// 2. Projection Jacobian, covariance reprojection and eigenvalues.
Outcome jacobian_oracles() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double jac_err = 0.0, cov_err = 0.0, eig_err = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const double ang = 3.14159 * u(rng);
    const Vec3 pos(4000.0 * std::cos(ang), 4000.0 * std::sin(ang), 1500.0 + 500.0 * u(rng));
    Camera cam = look_at_camera(t, pos, Vec3(300 * u(rng), 300 * u(rng), 1000), 1000, 1.0 + 0.5 * std::abs(u(rng)));
    cam.fy = cam.fx * (1.0 + 0.2 * u(rng));
    const Vec3 p(600 * u(rng), 600 * u(rng), 1000 + 700 * u(rng));
    Mat3 a;
    for (int k = 0; k < 9; ++k) a(k) = 15.0 * n(rng);
    const Mat3 cov = a * a.transpose() + Mat3::Identity();

    // Jacobian with respect to camera-frame coordinates.
    const Mat23 jac = projection_jacobian(cam, p);
    const Vec3 pc = cam.to_camera(p);
    Mat23 fd_cam, fd_world;
    for (int k = 0; k < 3; ++k) {
      const double h = 1e-3;
      Vec3 e = Vec3::Zero();
      e[k] = h;
      auto proj_cam = [&](const Vec3& q) {
        return Vec2(cam.fx * q.x() / q.z() + cam.cx, cam.fy * q.y() / q.z() + cam.cy);
      };
      fd_cam.col(k) = (proj_cam(pc + e) - proj_cam(pc - e)) / (2 * h);
      fd_world.col(k) = (project_point(cam, p + e).pixel - project_point(cam, p - e).pixel) / (2 * h);
    }
    jac_err = std::max(jac_err, (jac - fd_cam).norm() / fd_cam.norm());

    const Mat2 fd_cov = fd_world * cov * fd_world.transpose() + kCovarianceStabilizer * Mat2::Identity();
    cov_err = std::max(cov_err, (reproject_covariance(cam, p, cov) - fd_cov).norm() / fd_cov.norm());

    const Mat2 c2 = reproject_covariance(cam, p, cov);
    const auto [l1, l2] = covariance_eigenvalues(c2);
    const auto [r1, r2] = jacobi_eigen(c2);
    const double scale = std::max(1.0L, std::abs(r1));
    eig_err = std::max({eig_err, double(std::abs(l1 - r1) / scale), double(std::abs(l2 - r2) / scale)});
  }
  const double t = seconds_since(t0);
  return {jac_err < 1e-6 && cov_err < 1e-6 && eig_err < 1e-12 && t < 5.0,
          fmt("jacobian %.2g, covariance %.2g, eigenvalues %.2g, %.2f s", jac_err, cov_err, eig_err, t)};
}

// 3. Exact detections: the optimizer stays at the ground truth.
Outcome noiseless_consistency() {
  const auto t0 = Clock::now();
  ScenarioConfig sc;
  sc.noise_sigma_2d = 0.0;
  const auto trials = run_trials(sc, OptimConfig{}, kScenes);
  int early = 0;
  for (const TrialResult& r : trials) early += r.iterations < 125 ? 1 : 0;
  const double med = median(final_errors(trials));
  const double t = seconds_since(t0);
  return {med < 1.0 && early >= 0.9 * kScenes && t < 600.0,
          fmt("median MPJPE %.3f mm, early stop in %d/%d scenes, %.0f s", med, early, kScenes, t)};
}

// 4 and 11. Noisy detections and perturbed initialization.
Outcome noisy_improvement(const std::vector<TrialResult>& trials) {
  std::vector<double> init;
  for (const TrialResult& r : trials) init.push_back(r.init_mpjpe);
  const double mi = median(init), mf = median(final_errors(trials));
  const double gain = (mi - mf) / mi;
  return {mf < mi && gain >= 0.10,
          fmt("median init %.2f mm -> optimized %.2f mm (%.1f%% better)", mi, mf, 100.0 * gain)};
}

Outcome sigma_coverage_structure(const std::vector<TrialResult>& trials) {
  bool nested = true;
  std::vector<double> c1, c2, c3;
  for (const TrialResult& r : trials) {
    const auto& c = r.metrics.coverage;
    nested = nested && c[0] <= c[1] && c[1] <= c[2];
    c1.push_back(c[0]);
    c2.push_back(c[1]);
    c3.push_back(c[2]);
  }
  const double m3 = median(c3);
  return {nested && m3 >= 0.9,
          fmt("nested in every run: %s; median coverage 1/2/3 sigma = %.3f/%.3f/%.3f", nested ? "yes" : "no",
              median(c1), median(c2), m3)};
}

// 5. Initialization noise sweep.
Outcome noise_trend() {
  const std::vector<double> grid{0, 10, 20, 40, 60, 80, 100};
  std::vector<double> med;
  for (double s : grid) {
    ScenarioConfig sc = noisy_scenario();
    sc.noise_sigma_3d_init = s;
    med.push_back(median(final_errors(run_trials(sc, OptimConfig{}, 20))));
  }
  int inversions = 0;
  for (std::size_t i = 1; i < med.size(); ++i) inversions += med[i] < med[i - 1] ? 1 : 0;
  double worst = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (grid[i] <= 40.0) worst = std::max(worst, (med[i] - med[0]) / med[0]);
  std::string row;
  for (std::size_t i = 0; i < grid.size(); ++i) row += fmt("%g:%.2f ", grid[i], med[i]);
  return {inversions <= 1 && worst < 0.30,
          fmt("medians %s| inversions %d, degradation at <=40 mm %.1f%%", row.c_str(), inversions,
              100.0 * worst)};
}

// 6. Cross-view accumulation ablation.
Outcome accumulation_order() {
  double med[3];
  const int groups[3] = {0, 2, 1};
  for (int k = 0; k < 3; ++k) {
    OptimConfig oc;
    oc.accumulation_views = groups[k];
    med[k] = median(final_errors(run_trials(noisy_scenario(), oc, kScenes)));
  }
  return {med[0] <= med[1] && med[1] <= med[2],
          fmt("median MPJPE all %.3f, 2 %.3f, 1 %.3f mm", med[0], med[1], med[2])};
}

// 7 and 8. Displacement occlusion on two of four views.
Outcome occlusion_vs_dlt(const std::vector<TrialResult>& trials) {
  int wins = 0;
  std::vector<double> dlt;
  for (const TrialResult& r : trials) {
    wins += r.metrics.mpjpe < r.dlt_mpjpe ? 1 : 0;
    dlt.push_back(r.dlt_mpjpe);
  }
  return {wins >= 0.8 * static_cast<double>(trials.size()),
          fmt("optimized beats DLT in %d/%zu scenes (median %.2f vs %.2f mm)", wins, trials.size(),
              median(final_errors(trials)), median(dlt))};
}

Outcome occ_scale_order(const std::vector<TrialResult>& base) {
  OptimConfig oc;
  oc.occ_scale = 2.0;
  const double m2 = median(final_errors(run_trials(occlusion_scenario(), oc, kScenes)));
  const double m125 = median(final_errors(base));
  return {m2 > m125, fmt("median MPJPE occ_scale 1.25: %.3f mm, 2.0: %.3f mm", m125, m2)};
}

// 9. Perturbing one joint changes no other channel.
Outcome channel_isolation() {
  SynthOptions so;
  so.seed = 77;
  const Scene scene = synth_scene(so);
  const GaussianSkeleton sk = init_skeleton(scene.skeleton, *scene.gt_pose, 300.0, 1.25);
  std::vector<std::vector<Heatmap>> base;
  for (const Camera& c : scene.cameras) base.push_back(render_skeleton(c, sk));
  int violations = 0, checked = 0;
  for (int k = 0; k < sk.size(); ++k) {
    GaussianSkeleton moved = sk;
    moved.joints[k].mean += Vec3(25.0, -15.0, 30.0);
    moved.joints[k].factors.log_scale += Vec3(0.2, -0.1, 0.3);
    moved.joints[k].factors.quat = Vec4(0.9, 0.1, -0.3, 0.2);
    for (std::size_t i = 0; i < scene.cameras.size(); ++i) {
      const auto r = render_skeleton(scene.cameras[i], moved);
      for (int j = 0; j < sk.size(); ++j) {
        const bool same = r[j].values == base[i][j].values && r[j].bbox == base[i][j].bbox;
        if (j != k) {
          ++checked;
          violations += same ? 0 : 1;
        } else {
          violations += same ? 1 : 0;
        }
      }
    }
  }
  return {violations == 0, fmt("%d channel pairs compared across views, %d violations", checked, violations)};
}

// 10. Shipped configuration snapshot.
Outcome constants_conformance() {
  const std::string path = std::string(SKELSPLAT_SOURCE_DIR) + "/config/default.json";
  ToolConfig c;
  overlay(c, parse_json(read_text_file(path), path), path);
  const bool ok = c.optim.base_sigma2 == 3.0 && c.optim.lambda_sym == 1e-5 && c.optim.max_iters == 125 &&
                  c.optim.early_stop_delta == 1e-6 && c.optim.occ_scale == 1.25 &&
                  c.ablation.noise == std::vector<double>{10, 20, 40, 60, 80, 100};
  return {ok, fmt("base_sigma2 %g cm^2, lambda_sym %g, max_iters %d, delta %g, occ_scale %g, noise grid size %zu",
                  c.optim.base_sigma2, c.optim.lambda_sym, c.optim.max_iters, c.optim.early_stop_delta,
                  c.optim.occ_scale, c.ablation.noise.size())};
}

// 12. Every CLI subcommand twice with identical inputs.
std::string slurp_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string all;
  for (const fs::path& f : files) all += f.filename().string() + "\n" + read_text_file(f.string());
  return all;
}

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / "skelsplat_acceptance_cli";
  fs::remove_all(root);
  const std::string cli = SKELSPLAT_CLI_PATH;
  std::vector<std::string> failed;
  for (int run = 0; run < 2; ++run) {
    const fs::path d = root / std::to_string(run);
    fs::create_directories(d);
    auto p = [&](const std::string& n) { return (d / n).string(); };
    const std::vector<std::pair<std::string, std::string>> cmds = {
        {"synth", cli + " synth --views 4 --seed 7 -o " + p("scene.json")},
        {"corrupt", cli + " corrupt " + p("scene.json") + " --seed 3 --noise-2d 2 --noise-3d 40 "
                    "--occlude-views 0,1 -o " + p("noisy.json")},
        {"optimize", cli + " optimize " + p("noisy.json") + " -o " + p("result.json")},
        {"eval", cli + " eval " + p("result.json") + " " + p("noisy.json") + " > " + p("eval.txt")},
        {"ablate", cli + " ablate --axis accumulation --grid 1,2,all --seeds 20 --max-iters 3 -o " +
                   p("ablation.csv")},
        {"dump-heatmaps", cli + " dump-heatmaps " + p("noisy.json") + " --results " + p("result.json") +
                          " -o " + p("maps")},
    };
    for (const auto& [name, cmd] : cmds) {
      if (std::system(cmd.c_str()) != 0) failed.push_back(name + " (run " + std::to_string(run) + " failed)");
    }
  }
  const fs::path a = root / "0", b = root / "1";
  for (const char* f : {"scene.json", "noisy.json", "result.json", "eval.txt", "ablation.csv"}) {
    if (!fs::exists(a / f) || read_text_file((a / f).string()) != read_text_file((b / f).string())) {
      failed.push_back(f);
    }
  }
  if (!fs::exists(a / "maps") || slurp_dir(a / "maps") != slurp_dir(b / "maps")) failed.push_back("maps");
  std::string detail = failed.empty() ? "6 subcommands byte-identical across two runs" : "differs:";
  for (const std::string& f : failed) detail += " " + f;
  return {failed.empty(), detail};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  std::vector<TrialResult> noisy, occluded;
  auto noisy_runs = [&]() -> const std::vector<TrialResult>& {
    if (noisy.empty()) noisy = run_trials(noisy_scenario(), OptimConfig{}, kScenes);
    return noisy;
  };
  auto occluded_runs = [&]() -> const std::vector<TrialResult>& {
    if (occluded.empty()) occluded = run_trials(occlusion_scenario(), OptimConfig{}, kScenes);
    return occluded;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient exactness", gradient_exactness},
      {2, "jacobian/covariance oracles", jacobian_oracles},
      {3, "noiseless consistency", noiseless_consistency},
      {4, "noisy improvement", [&] { return noisy_improvement(noisy_runs()); }},
      {5, "noise-robustness trend", noise_trend},
      {6, "accumulation ablation", accumulation_order},
      {7, "occlusion robustness", [&] { return occlusion_vs_dlt(occluded_runs()); }},
      {8, "covariance-scaling ablation", [&] { return occ_scale_order(occluded_runs()); }},
      {9, "channel isolation", channel_isolation},
      {10, "constants conformance", constants_conformance},
      {11, "sigma-coverage structure", [&] { return sigma_coverage_structure(noisy_runs()); }},
      {12, "determinism", cli_determinism},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("[%s] %2d %-28s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
