#pragma once

// Shared fixtures: randomized skeletons and a reference evaluation of the
// full objective with its gradient.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "skelsplat/skelsplat.hpp"

namespace skelsplat::test_support {

/// Synthetic 4-view scene with 2 px detection noise.
inline Scene noisy_scene(std::uint64_t seed, int n_views = 4) {
  SynthOptions o;
  o.seed = seed;
  o.n_views = n_views;
  CorruptionSpec c;
  c.noise_sigma_2d = 2.0;
  c.seed = seed + 7;
  return corrupt(synth_scene(o), c);
}

/// Moves every joint of `sk` by up to `shift` mm and gives it a random
/// anisotropic covariance.
inline void scramble(GaussianSkeleton& sk, std::mt19937_64& rng, double shift) {
  std::normal_distribution<double> n01(0.0, 1.0);
  for (JointGaussian& g : sk.joints) {
    g.mean += shift * Vec3(n01(rng), n01(rng), n01(rng));
    g.factors.log_scale += 0.25 * Vec3(n01(rng), n01(rng), n01(rng));
    g.factors.quat = Vec4(n01(rng), n01(rng), n01(rng), n01(rng));
    g.factors.quat *= 1.0 + 0.3 * std::abs(n01(rng));  // off the unit sphere on purpose
  }
}

struct Objective {
  double value = 0.0;
  double render = 0.0;
  double sym = 0.0;
  std::size_t count = 0;
  RenderGrad grad;
  // Discrete structure of the loss: mask size and every residual box.
  std::vector<long long> signature;
};

/// Render loss plus lambda times the symmetry loss, with its analytic
/// gradient, over all views at once.
inline Objective objective(std::span<const Camera> cams,
                           const std::vector<std::vector<Heatmap>>& targets,
                           const GaussianSkeleton& sk, const std::vector<LimbPair>& pairs,
                           double lambda) {
  std::vector<std::vector<Heatmap>> rendered;
  for (const Camera& c : cams) rendered.push_back(render_skeleton(c, sk));
  const RenderLossResult rl = render_loss(rendered, targets);
  const SymmetryResult sym = symmetry_loss(sk, pairs);
  Objective o;
  o.render = rl.value;
  o.sym = sym.value;
  o.count = rl.count;
  o.value = rl.value + lambda * sym.value;
  o.grad = RenderGrad(sk.joints.size());
  for (const RenderGrad& g : render_backward(cams, sk, rl)) o.grad += g;
  for (std::size_t j = 0; j < sk.joints.size(); ++j) o.grad.joints[j].d_mean += lambda * sym.d_mean[j];
  o.signature.push_back(static_cast<long long>(rl.count));
  for (const PixelGrad& p : rl.pixel_grads) {
    o.signature.insert(o.signature.end(), {p.view, p.joint, p.box.x0, p.box.y0, p.box.x1, p.box.y1});
  }
  return o;
}

/// Change of the render loss between two skeletons that differ only in
/// joint `j`, summed pixel by pixel over that joint's channels. Every other
/// channel renders identically, so leaving it out avoids cancelling two
/// large, nearly equal totals. `count` is the shared mask size.
inline double channel_delta(std::span<const Camera> cams,
                            const std::vector<std::vector<Heatmap>>& targets,
                            const GaussianSkeleton& plus, const GaussianSkeleton& minus, int j,
                            std::size_t count) {
  double delta = 0.0;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const Heatmap& t = targets[i][j];
    if (t.missing) continue;
    const Heatmap p = splat_joint(cams[i], plus.joints[j]);
    const Heatmap m = splat_joint(cams[i], minus.joints[j]);
    const PixelRect box = unite(unite(p.bbox, m.bbox), t.bbox);
    for (int y = box.y0; y <= box.y1; ++y) {
      for (int x = box.x0; x <= box.x1; ++x) {
        const double a = p.at(x, y), b = m.at(x, y), g = t.at(x, y);
        const bool in_p = a > kActivityThreshold || g > kActivityThreshold;
        const bool in_m = b > kActivityThreshold || g > kActivityThreshold;
        if (in_p && in_m) {
          delta += (a - b) * (a + b - 2.0 * g);
        } else {
          delta += (in_p ? (a - g) * (a - g) : 0.0) - (in_m ? (b - g) * (b - g) : 0.0);
        }
      }
    }
  }
  return delta / static_cast<double>(count);
}

struct GradientCheck {
  double max_rel_error = 0.0;
  int components = 0;
  int unresolved = 0;  // components whose finite difference always crossed a mask change
};

/// Compares the analytic gradient of `objective` at `sk` with central
/// differences of the objective itself, one raw parameter at a time. A
/// difference whose three evaluations disagree on the mask or a residual box
/// straddles a discontinuity and is retried with a smaller step. The relative
/// error of a component is |a - d| / max(|a|, |d|, floor) where floor is
/// 1e-6 of the largest analytic component of the same parameter kind.
inline GradientCheck check_gradient(std::span<const Camera> cams,
                                    const std::vector<std::vector<Heatmap>>& targets,
                                    const GaussianSkeleton& sk,
                                    const std::vector<LimbPair>& pairs, double lambda) {
  const Objective base = objective(cams, targets, sk, pairs, lambda);
  double scale[3] = {0.0, 0.0, 0.0};
  for (const JointGrad& g : base.grad.joints) {
    scale[0] = std::max(scale[0], g.d_mean.cwiseAbs().maxCoeff());
    scale[1] = std::max(scale[1], g.d_logscale.cwiseAbs().maxCoeff());
    scale[2] = std::max(scale[2], g.d_quat.cwiseAbs().maxCoeff());
  }
  GradientCheck out;
  for (int j = 0; j < sk.size(); ++j) {
    for (int p = 0; p < 10; ++p) {
      const int kind = p < 3 ? 0 : (p < 6 ? 1 : 2);
      const double h0[3] = {1e-3, 1e-5, 1e-5};
      auto param = [&](GaussianSkeleton& s) -> double& {
        JointGaussian& g = s.joints[j];
        if (p < 3) return g.mean[p];
        if (p < 6) return g.factors.log_scale[p - 3];
        return g.factors.quat[p - 6];
      };
      const JointGrad& ga = base.grad.joints[j];
      const double analytic = p < 3 ? ga.d_mean[p] : (p < 6 ? ga.d_logscale[p - 3] : ga.d_quat[p - 6]);
      double h = h0[kind];
      bool resolved = false;
      double fd = 0.0;
      for (int attempt = 0; attempt < 12 && !resolved; ++attempt, h *= 0.25) {
        GaussianSkeleton plus = sk, minus = sk;
        param(plus) += h;
        param(minus) -= h;
        const Objective fp = objective(cams, targets, plus, pairs, lambda);
        const Objective fm = objective(cams, targets, minus, pairs, lambda);
        if (fp.signature != base.signature || fm.signature != base.signature) continue;
        const double render_delta = channel_delta(cams, targets, plus, minus, j, base.count);
        fd = (render_delta + lambda * (fp.sym - fm.sym)) / (2.0 * h);
        resolved = true;
      }
      ++out.components;
      if (!resolved) {
        ++out.unresolved;
        continue;
      }
      const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-6 * scale[kind]});
      if (denom > 0.0) out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic - fd) / denom);
    }
  }
  return out;
}

}  // namespace skelsplat::test_support
