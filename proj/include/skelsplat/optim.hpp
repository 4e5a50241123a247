#pragma once

// Adam refinement of a Gaussian skeleton against fixed pseudo ground-truth
// heatmaps, with cross-view gradient accumulation and windowed early
// stopping. The Gaussian count never changes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "skelsplat/loss.hpp"
#include "skelsplat/render.hpp"
#include "skelsplat/scene.hpp"
#include "skelsplat/skeleton.hpp"

namespace skelsplat {

inline constexpr double kMm2PerCm2 = 100.0;

struct OptimConfig {
  int max_iters = 125;
  double early_stop_delta = 1e-6;
  int window = 0;              // 0: number of views
  double lr_mean = 2.0;        // mm per step
  double lr_logscale = 5e-3;
  double lr_quat = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-15;
  int accumulation_views = 0;  // 0: all views
  double lambda_sym = 1e-5;
  SymmSet symm_set = SymmSet::Symm1;
  double base_sigma2 = 3.0;    // cm^2
  double occ_scale = 1.25;
  double resolution_scale = 1.0;
  bool freeze_covariance = false;
  bool refresh_pseudo_covariance = false;

  int resolved_window(int n_views) const { return window > 0 ? window : n_views; }
  int resolved_accumulation(int n_views) const {
    return accumulation_views > 0 ? std::min(accumulation_views, n_views) : n_views;
  }

  void validate() const {
    if (max_iters < 0) throw Error(ErrorKind::InvalidArgument, "max_iters must be >= 0");
    if (!(lr_mean > 0.0) || !(lr_logscale > 0.0) || !(lr_quat > 0.0)) {
      throw Error(ErrorKind::InvalidArgument, "learning rates must be positive");
    }
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
      throw Error(ErrorKind::InvalidArgument, "Adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw Error(ErrorKind::InvalidArgument, "adam_eps must be positive");
    if (accumulation_views < 0) throw Error(ErrorKind::InvalidArgument, "accumulation_views must be >= 0");
    if (window < 0) throw Error(ErrorKind::InvalidArgument, "window must be >= 0");
    if (!(early_stop_delta >= 0.0)) throw Error(ErrorKind::InvalidArgument, "early_stop_delta must be >= 0");
    if (!(lambda_sym >= 0.0)) throw Error(ErrorKind::InvalidArgument, "lambda_sym must be >= 0");
    if (!(base_sigma2 > 0.0)) throw Error(ErrorKind::InvalidArgument, "base_sigma2 must be positive");
    if (!(occ_scale >= 1.0)) throw Error(ErrorKind::InvalidArgument, "occ_scale must be >= 1");
    if (!(resolution_scale > 0.0)) throw Error(ErrorKind::InvalidArgument, "resolution_scale must be positive");
  }
};

enum class StopReason { Converged, MaxIters };

inline const char* to_string(StopReason r) {
  return r == StopReason::Converged ? "converged" : "max_iters";
}

struct OptimTrace {
  std::vector<LossReport> iterations;
  StopReason stop_reason = StopReason::MaxIters;
  int iterations_run = 0;
  double wall_time = 0.0;  // seconds
};

struct OptimResult {
  GaussianSkeleton skeleton;
  OptimTrace trace;
};

/// Raised when the loss or a gradient stops being finite; carries the trace
/// up to and including the offending iteration.
class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(const std::string& message, OptimTrace trace)
      : Error(ErrorKind::NonFiniteLoss, message), trace_(std::move(trace)) {}

  const OptimTrace& trace() const noexcept { return trace_; }

 private:
  OptimTrace trace_;
};

/// True iff the history spans two full windows and the minima of the last
/// window and the one before it differ by less than `delta`.
inline bool early_stop_check(std::span<const double> history, int window, double delta) {
  if (window <= 0 || history.size() < 2 * static_cast<std::size_t>(window)) return false;
  const auto last = history.end() - window;
  const auto prev = last - window;
  const double min_last = *std::min_element(last, history.end());
  const double min_prev = *std::min_element(prev, last);
  return std::abs(min_last - min_prev) < delta;
}

/// First and second moments of every optimized parameter.
struct AdamState {
  std::vector<Vec3> m_mean, v_mean, m_logscale, v_logscale;
  std::vector<Vec4> m_quat, v_quat;
  int step = 0;

  explicit AdamState(std::size_t n = 0)
      : m_mean(n, Vec3::Zero()), v_mean(n, Vec3::Zero()), m_logscale(n, Vec3::Zero()),
        v_logscale(n, Vec3::Zero()), m_quat(n, Vec4::Zero()), v_quat(n, Vec4::Zero()) {}
};

namespace detail {

template <typename V>
void adam_update(V& param, V& m, V& v, const V& g, double lr, const OptimConfig& cfg, int step) {
  m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
  v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, step);
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, step);
  param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_eps);
}

}  // namespace detail

/// Sums the per-view render gradients of one accumulation group, adds the
/// symmetry gradient (scaled by lambda_sym) once, and applies a single Adam
/// step. Quaternions are renormalized afterwards. Returns the summed
/// gradient that was applied.
inline RenderGrad accumulate_step(GaussianSkeleton& sk, AdamState& state,
                                  std::span<const RenderGrad> view_grads,
                                  const std::vector<Vec3>& sym_grad, const OptimConfig& cfg) {
  const std::size_t n = sk.joints.size();
  RenderGrad total(n);
  for (const RenderGrad& g : view_grads) total += g;
  for (std::size_t j = 0; j < n && j < sym_grad.size(); ++j) {
    total.joints[j].d_mean += cfg.lambda_sym * sym_grad[j];
  }

  ++state.step;
  for (std::size_t j = 0; j < n; ++j) {
    JointGaussian& g = sk.joints[j];
    const JointGrad& d = total.joints[j];
    detail::adam_update(g.mean, state.m_mean[j], state.v_mean[j], d.d_mean, cfg.lr_mean, cfg, state.step);
    if (!cfg.freeze_covariance) {
      detail::adam_update(g.factors.log_scale, state.m_logscale[j], state.v_logscale[j],
                          d.d_logscale, cfg.lr_logscale, cfg, state.step);
      detail::adam_update(g.factors.quat, state.m_quat[j], state.v_quat[j], d.d_quat, cfg.lr_quat,
                          cfg, state.step);
    }
    g.factors.normalize();
  }
  return total;
}

/// Pseudo ground-truth targets [view][joint] built from the detections and
/// the skeleton's current means and covariances.
inline std::vector<std::vector<Heatmap>> build_pseudo_targets(std::span<const Camera> cams,
                                                             const Detections& detections,
                                                             const GaussianSkeleton& sk) {
  std::vector<std::vector<Heatmap>> targets(cams.size());
  for (std::size_t i = 0; i < cams.size(); ++i) {
    targets[i].reserve(sk.joints.size());
    for (std::size_t j = 0; j < sk.joints.size(); ++j) {
      const JointGaussian& g = sk.joints[j];
      targets[i].push_back(pseudo_gt(cams[i], detections[i][j], g.covariance(), g.mean,
                                     cams[i].width, cams[i].height, static_cast<int>(j)));
    }
  }
  return targets;
}

/// Gradient of a render loss with respect to every joint, one RenderGrad per
/// camera in `cams`.
inline std::vector<RenderGrad> render_backward(std::span<const Camera> cams,
                                               const GaussianSkeleton& sk,
                                               const RenderLossResult& loss) {
  std::vector<RenderGrad> grads(cams.size(), RenderGrad(sk.joints.size()));
  for (const PixelGrad& pg : loss.pixel_grads) {
    std::size_t vi = 0;
    while (vi < cams.size() && cams[vi].id != pg.view) ++vi;
    grads.at(vi).joints[pg.joint] += splat_gradients(cams[vi], sk.joints[pg.joint], pg);
  }
  return grads;
}

/// Refines `initial` so its renderings match the pseudo ground truth built
/// from `detections` at the initial skeleton.
///
/// Views are split into consecutive groups of cfg.accumulation_views; each
/// group is rendered with the current parameters and yields one Adam step.
/// An iteration is one pass over all groups. The loss recorded for an
/// iteration is the pooled masked L2 over all groups plus the weighted
/// symmetry term at the start of the iteration.
inline OptimResult optimize(std::span<const Camera> cameras_in, const Detections& detections,
                            const GaussianSkeleton& initial, const OptimConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const int m = static_cast<int>(cameras_in.size());
  if (static_cast<int>(detections.size()) != m) {
    throw Error(ErrorKind::DimensionMismatch, "optimize: detections must have one row per camera");
  }

  std::vector<Camera> cams(cameras_in.begin(), cameras_in.end());
  Detections dets = detections;
  if (cfg.resolution_scale != 1.0) {
    for (Camera& c : cams) c = c.scaled(cfg.resolution_scale);
    for (auto& view : dets)
      for (auto& d : view)
        if (d) *d *= cfg.resolution_scale;
  }

  OptimResult result{initial, {}};
  GaussianSkeleton& sk = result.skeleton;
  OptimTrace& trace = result.trace;

  std::vector<std::vector<Heatmap>> targets = build_pseudo_targets(cams, dets, initial);
  const bool any_target = std::any_of(targets.begin(), targets.end(), [](const auto& view) {
    return std::any_of(view.begin(), view.end(), [](const Heatmap& h) { return !h.missing; });
  });
  if (!any_target) throw Error(ErrorKind::EmptyMask, "optimize: no usable detection in any view");

  const int group_size = cfg.resolved_accumulation(m);
  const int window = cfg.resolved_window(m);
  const std::vector<LimbPair>& pairs = sk.model.pairs(cfg.symm_set);
  AdamState adam(sk.joints.size());
  std::vector<double> history;

  auto fail = [&](const std::string& what) {
    trace.iterations_run = static_cast<int>(trace.iterations.size());
    trace.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    throw NonFiniteLossError("optimize: non-finite " + what + " at iteration " +
                                 std::to_string(trace.iterations.size()),
                             trace);
  };

  trace.stop_reason = StopReason::MaxIters;
  for (int it = 0; it < cfg.max_iters; ++it) {
    if (cfg.refresh_pseudo_covariance && it > 0) {
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < sk.size(); ++j) {
          const JointGaussian& g = sk.joints[j];
          targets[i][j] = pseudo_gt(cams[i], dets[i][j], g.covariance(), g.mean, cams[i].width,
                                    cams[i].height, j);
        }
      }
    }

    const double sym_start = symmetry_loss(sk, pairs).value;
    double sq_sum = 0.0;
    std::size_t count = 0;
    std::vector<double> per_view_sq(m, 0.0);

    for (int g0 = 0; g0 < m; g0 += group_size) {
      const int g1 = std::min(m, g0 + group_size);
      const std::span<const Camera> group_cams(cams.data() + g0, g1 - g0);
      std::vector<std::vector<Heatmap>> rendered, pseudo;
      bool group_has_target = false;
      for (int i = g0; i < g1; ++i) {
        rendered.push_back(render_skeleton(cams[i], sk));
        pseudo.push_back(targets[i]);
        for (const Heatmap& h : targets[i]) group_has_target |= !h.missing;
      }

      std::vector<RenderGrad> grads;
      if (group_has_target) {
        const RenderLossResult rl = render_loss(rendered, pseudo);
        sq_sum += rl.sq_sum;
        count += rl.count;
        for (int i = g0; i < g1; ++i) per_view_sq[i] = rl.per_view[i - g0] * static_cast<double>(rl.count);
        if (!std::isfinite(rl.value)) fail("render loss");
        grads = render_backward(group_cams, sk, rl);
      }
      const SymmetryResult sym = symmetry_loss(sk, pairs);
      for (const RenderGrad& g : grads)
        if (!g.all_finite()) fail("render gradient");
      for (const Vec3& g : sym.d_mean)
        if (!g.allFinite()) fail("symmetry gradient");
      accumulate_step(sk, adam, grads, sym.d_mean, cfg);
    }

    const double render_term = count > 0 ? sq_sum / static_cast<double>(count) : 0.0;
    LossReport report = total_loss(render_term, sym_start, cfg.lambda_sym);
    report.masked_pixel_count = count;
    report.per_view_render.resize(m);
    for (int i = 0; i < m; ++i) {
      report.per_view_render[i] = count > 0 ? per_view_sq[i] / static_cast<double>(count) : 0.0;
    }
    trace.iterations.push_back(report);
    if (!std::isfinite(report.total)) fail("loss");
    for (const JointGaussian& g : sk.joints) {
      if (!g.mean.allFinite() || !g.factors.log_scale.allFinite() || !g.factors.quat.allFinite()) {
        fail("parameter");
      }
    }

    history.push_back(report.total);
    if (early_stop_check(history, window, cfg.early_stop_delta)) {
      trace.stop_reason = StopReason::Converged;
      break;
    }
  }

  trace.iterations_run = static_cast<int>(trace.iterations.size());
  trace.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

/// Initial skeleton for a scene: its init_pose when present, DLT
/// triangulation of the detections otherwise. Throws EmptyMask when the
/// scene has no detection at all.
inline GaussianSkeleton initial_skeleton(const Scene& scene, const OptimConfig& cfg) {
  if (scene.detection_count() == 0) {
    throw Error(ErrorKind::EmptyMask, "scene has no detections in any view");
  }
  const Pose init = scene.init_pose ? *scene.init_pose : triangulate_pose(scene);
  return init_skeleton(scene.skeleton, init, cfg.base_sigma2 * kMm2PerCm2, cfg.occ_scale);
}

inline OptimResult optimize(const Scene& scene, const GaussianSkeleton& initial, const OptimConfig& cfg) {
  scene.validate();
  return optimize(scene.cameras, scene.detections, initial, cfg);
}

}  // namespace skelsplat
