#pragma once

// Pose metrics and the ablation harness. Every ablation point is evaluated
// over a set of seeded synthetic scenes and summarized by median and
// interquartile range.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "skelsplat/optim.hpp"
#include "skelsplat/scene.hpp"

namespace skelsplat {

inline std::vector<double> per_joint_error(const Pose& pred, const Pose& gt) {
  if (pred.size() != gt.size()) {
    throw Error(ErrorKind::DimensionMismatch, "mpjpe: " + std::to_string(pred.size()) +
                                                  " predicted joints vs " +
                                                  std::to_string(gt.size()) + " ground-truth joints");
  }
  std::vector<double> e(pred.size());
  for (std::size_t j = 0; j < pred.size(); ++j) e[j] = (pred[j] - gt[j]).norm();
  return e;
}

/// Absolute mean per-joint position error in mm, without root alignment.
inline double mpjpe(const Pose& pred, const Pose& gt) {
  const std::vector<double> e = per_joint_error(pred, gt);
  if (e.empty()) throw Error(ErrorKind::DimensionMismatch, "mpjpe: empty pose");
  double s = 0.0;
  for (double v : e) s += v;
  return s / static_cast<double>(e.size());
}

/// Fraction of joints whose ground truth lies within k standard deviations of
/// the joint Gaussian: (gt - mu)^T Sigma^-1 (gt - mu) <= k^2.
inline double sigma_coverage(const GaussianSkeleton& sk, const Pose& gt, double k) {
  if (static_cast<std::size_t>(sk.size()) != gt.size()) {
    throw Error(ErrorKind::DimensionMismatch, "sigma_coverage: joint count mismatch");
  }
  if (gt.empty()) return 0.0;
  int inside = 0;
  for (int j = 0; j < sk.size(); ++j) {
    const Vec3 d = gt[j] - sk.joints[j].mean;
    const double m2 = d.dot(sk.joints[j].covariance().ldlt().solve(d));
    inside += m2 <= k * k ? 1 : 0;
  }
  return static_cast<double>(inside) / static_cast<double>(gt.size());
}

struct Metrics {
  double mpjpe = 0.0;  // mm
  std::vector<double> per_joint_error;
  std::array<double, 3> coverage{};  // within 1, 2, 3 sigma
  std::optional<double> improvement_vs_init;  // percent
};

inline Metrics compute_metrics(const GaussianSkeleton& sk, const Pose& gt,
                               const std::optional<Pose>& init = std::nullopt) {
  Metrics m;
  m.per_joint_error = per_joint_error(sk.means(), gt);
  m.mpjpe = mpjpe(sk.means(), gt);
  for (int k = 1; k <= 3; ++k) m.coverage[k - 1] = sigma_coverage(sk, gt, k);
  if (init) {
    const double e0 = mpjpe(*init, gt);
    if (e0 > 0.0) m.improvement_vs_init = 100.0 * (e0 - m.mpjpe) / e0;
  }
  return m;
}

/// Linear-interpolated quantile of an unsorted sample, q in [0, 1].
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(const std::vector<double>& v) { return quantile(v, 0.5); }

/// Synthetic experiment: scene generation and corruption around one seed.
struct ScenarioConfig {
  int n_views = 4;
  double noise_sigma_2d = 2.0;       // px
  double noise_sigma_3d_init = 0.0;  // mm
  int occluded_views = 0;            // the first k views are occluded
  OcclusionMode occlusion_mode = OcclusionMode::Displace;
  double displace_sigma = 20.0;      // px
  double occlusion_rate = 0.5;

  void validate() const {
    if (n_views < 2) throw Error(ErrorKind::InvalidArgument, "scenario: n_views must be >= 2");
    if (occluded_views < 0 || occluded_views > n_views) {
      throw Error(ErrorKind::InvalidArgument, "scenario: occluded_views must lie in [0, n_views]");
    }
  }
};

/// Builds the corrupted scene of `seed`. Occlusion covers the skeleton's
/// occlusion-prone joints in the first `occluded_views` views.
inline Scene scenario_scene(const ScenarioConfig& sc, std::uint64_t seed) {
  sc.validate();
  SynthOptions so;
  so.n_views = sc.n_views;
  so.seed = seed;
  const Scene clean = synth_scene(so);
  CorruptionSpec cs;
  cs.noise_sigma_2d = sc.noise_sigma_2d;
  cs.noise_sigma_3d_init = sc.noise_sigma_3d_init;
  for (int v = 0; v < sc.occluded_views; ++v) cs.occluded_views.push_back(v);
  cs.occluded_joints = clean.skeleton.occlusion_prone;
  cs.occlusion_mode = sc.occlusion_mode;
  cs.displace_sigma = sc.displace_sigma;
  cs.occlusion_rate = sc.occlusion_rate;
  cs.seed = seed ^ 0x9e3779b97f4a7c15ULL;
  return corrupt(clean, cs);
}

struct TrialResult {
  std::uint64_t seed = 0;
  double init_mpjpe = 0.0;
  double dlt_mpjpe = 0.0;
  Metrics metrics;
  int iterations = 0;
  bool converged = false;
  double wall_time = 0.0;  // seconds
};

inline TrialResult run_trial(const ScenarioConfig& sc, const OptimConfig& cfg, std::uint64_t seed) {
  const Scene scene = scenario_scene(sc, seed);
  const GaussianSkeleton init = initial_skeleton(scene, cfg);
  const OptimResult r = optimize(scene, init, cfg);
  TrialResult t;
  t.seed = seed;
  t.init_mpjpe = mpjpe(init.means(), *scene.gt_pose);
  t.dlt_mpjpe = mpjpe(triangulate_pose(scene), *scene.gt_pose);
  t.metrics = compute_metrics(r.skeleton, *scene.gt_pose, init.means());
  t.iterations = r.trace.iterations_run;
  t.converged = r.trace.stop_reason == StopReason::Converged;
  t.wall_time = r.trace.wall_time;
  return t;
}

/// Runs `count` independent jobs on up to `workers` threads. Results are
/// written by index, so their order never depends on scheduling.
template <typename Fn>
void parallel_for(std::size_t count, int workers, Fn&& fn) {
  const std::size_t n_threads = std::min<std::size_t>(std::max(workers, 1), count);
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n_threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

enum class AblationAxis { Noise, Accumulation, OccScale, Symm, Resolution, NViews };

inline const char* to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::Noise: return "noise";
    case AblationAxis::Accumulation: return "accumulation";
    case AblationAxis::OccScale: return "occ_scale";
    case AblationAxis::Symm: return "symm";
    case AblationAxis::Resolution: return "resolution";
    case AblationAxis::NViews: return "n_views";
  }
  return "?";
}

inline AblationAxis ablation_axis_from_string(const std::string& s) {
  for (AblationAxis a : {AblationAxis::Noise, AblationAxis::Accumulation, AblationAxis::OccScale,
                         AblationAxis::Symm, AblationAxis::Resolution, AblationAxis::NViews}) {
    if (s == to_string(a)) return a;
  }
  throw Error(ErrorKind::InvalidArgument,
              "unknown ablation axis '" + s +
                  "' (expected noise, accumulation, occ_scale, symm, resolution or n_views)");
}

struct AblationConfig {
  AblationAxis axis = AblationAxis::Noise;
  std::vector<double> grid;  // accumulation: 0 = all views; symm: 0 = none
  ScenarioConfig scenario;
  OptimConfig optim;
  int seeds = 20;
  std::uint64_t seed = 0;
  int workers = 1;
  bool timing = false;

  void validate() const {
    if (seeds < 20) throw Error(ErrorKind::InvalidArgument, "ablation: at least 20 seeds are required");
    if (workers < 1) throw Error(ErrorKind::InvalidArgument, "ablation: workers must be >= 1");
    if (grid.empty()) throw Error(ErrorKind::InvalidArgument, "ablation: empty grid");
    for (double v : grid) {
      bool ok = std::isfinite(v);
      const bool integral = ok && v == std::floor(v);
      switch (axis) {
        case AblationAxis::Noise: ok = ok && v >= 0.0; break;
        case AblationAxis::Accumulation: ok = integral && v >= 0.0; break;
        case AblationAxis::OccScale: ok = ok && v >= 1.0; break;
        case AblationAxis::Symm: ok = integral && v >= 0.0 && v <= 3.0; break;
        case AblationAxis::Resolution: ok = ok && v > 0.0; break;
        case AblationAxis::NViews: ok = integral && v >= 2.0; break;
      }
      if (!ok) {
        std::ostringstream os;
        os << "ablation: grid value " << v << " is invalid for axis " << to_string(axis);
        throw Error(ErrorKind::InvalidArgument, os.str());
      }
    }
    scenario.validate();
    optim.validate();
  }

  /// Axis value of the unmodified base configuration.
  double baseline_value() const {
    switch (axis) {
      case AblationAxis::Noise: return scenario.noise_sigma_3d_init;
      case AblationAxis::Accumulation: return optim.accumulation_views;
      case AblationAxis::OccScale: return optim.occ_scale;
      case AblationAxis::Symm: return static_cast<double>(optim.symm_set);
      case AblationAxis::Resolution: return optim.resolution_scale;
      case AblationAxis::NViews: return scenario.n_views;
    }
    return 0.0;
  }

  /// Base configuration with the axis set to `value`.
  std::pair<ScenarioConfig, OptimConfig> at(double value) const {
    ScenarioConfig s = scenario;
    OptimConfig o = optim;
    switch (axis) {
      case AblationAxis::Noise: s.noise_sigma_3d_init = value; break;
      case AblationAxis::Accumulation: o.accumulation_views = static_cast<int>(value); break;
      case AblationAxis::OccScale: o.occ_scale = value; break;
      case AblationAxis::Symm: o.symm_set = symm_set_from_int(static_cast<int>(value)); break;
      case AblationAxis::Resolution: o.resolution_scale = value; break;
      case AblationAxis::NViews: s.n_views = static_cast<int>(value); break;
    }
    return {s, o};
  }
};

struct AblationRow {
  double value = 0.0;
  bool baseline = false;
  std::vector<TrialResult> trials;  // in seed order

  std::vector<double> collect(double (*f)(const TrialResult&)) const {
    std::vector<double> v;
    v.reserve(trials.size());
    for (const TrialResult& t : trials) v.push_back(f(t));
    return v;
  }
};

struct AblationTable {
  AblationAxis axis = AblationAxis::Noise;
  bool timing = false;
  std::vector<AblationRow> rows;  // baseline first, then grid order
};

inline std::string format_axis_value(AblationAxis axis, double v) {
  if (axis == AblationAxis::Accumulation && v == 0.0) return "all";
  if (axis == AblationAxis::Symm && v == 0.0) return "none";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

/// Baseline row plus one row per grid value, each over the same seeds
/// seed, seed + 1, ..., seed + seeds - 1.
inline AblationTable run_ablation(const AblationConfig& cfg) {
  cfg.validate();
  AblationTable table;
  table.axis = cfg.axis;
  table.timing = cfg.timing;
  table.rows.push_back({cfg.baseline_value(), true, {}});
  for (double v : cfg.grid) table.rows.push_back({v, false, {}});
  for (AblationRow& r : table.rows) r.trials.resize(cfg.seeds);

  const std::size_t n_seeds = static_cast<std::size_t>(cfg.seeds);
  parallel_for(table.rows.size() * n_seeds, cfg.workers, [&](std::size_t job) {
    AblationRow& row = table.rows[job / n_seeds];
    const std::size_t s = job % n_seeds;
    const auto [sc, oc] = cfg.at(row.value);
    row.trials[s] = run_trial(sc, oc, cfg.seed + s);
  });
  return table;
}

/// CSV with one line per ablation row. Timing columns are appended only when
/// the table was run with timing enabled, so default output is reproducible
/// byte for byte.
inline std::string ablation_csv(const AblationTable& t) {
  std::ostringstream os;
  os.precision(10);
  os << "axis,value,baseline,seeds,mpjpe_median,mpjpe_q1,mpjpe_q3,init_mpjpe_median,"
        "dlt_mpjpe_median,improvement_pct_median,coverage1_median,coverage2_median,"
        "coverage3_median,iterations_median,converged_fraction";
  if (t.timing) os << ",sec_per_iter_median,runtime_s_total";
  os << "\n";
  for (const AblationRow& r : t.rows) {
    const auto fin = r.collect([](const TrialResult& x) { return x.metrics.mpjpe; });
    const auto init = r.collect([](const TrialResult& x) { return x.init_mpjpe; });
    const auto dlt = r.collect([](const TrialResult& x) { return x.dlt_mpjpe; });
    const auto imp = r.collect([](const TrialResult& x) {
      return x.metrics.improvement_vs_init.value_or(std::nan(""));
    });
    std::array<std::vector<double>, 3> cov;
    for (const TrialResult& x : r.trials)
      for (int k = 0; k < 3; ++k) cov[k].push_back(x.metrics.coverage[k]);
    const auto iters = r.collect([](const TrialResult& x) { return double(x.iterations); });
    double converged = 0.0;
    for (const TrialResult& x : r.trials) converged += x.converged ? 1.0 : 0.0;
    std::vector<double> imp_finite;
    for (double v : imp)
      if (std::isfinite(v)) imp_finite.push_back(v);

    os << to_string(t.axis) << ',' << format_axis_value(t.axis, r.value) << ','
       << (r.baseline ? 1 : 0) << ',' << r.trials.size() << ',' << median(fin) << ','
       << quantile(fin, 0.25) << ',' << quantile(fin, 0.75) << ',' << median(init) << ','
       << median(dlt) << ',' << median(imp_finite) << ',' << median(cov[0]) << ','
       << median(cov[1]) << ',' << median(cov[2]) << ',' << median(iters) << ','
       << converged / static_cast<double>(r.trials.size());
    if (t.timing) {
      std::vector<double> per_iter;
      double total = 0.0;
      for (const TrialResult& x : r.trials) {
        total += x.wall_time;
        if (x.iterations > 0) per_iter.push_back(x.wall_time / x.iterations);
      }
      os << ',' << median(per_iter) << ',' << total;
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace skelsplat
