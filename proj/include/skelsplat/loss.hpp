#pragma once

#include <cmath>
#include <vector>

#include "skelsplat/render.hpp"
#include "skelsplat/skeleton.hpp"

namespace skelsplat {

/// One evaluation of the objective.
struct LossReport {
  double render_term = 0.0;
  double sym_term = 0.0;
  double total = 0.0;
  std::vector<double> per_view_render;
  std::size_t masked_pixel_count = 0;
};

/// Masked multi-view L2 term plus the per-channel upstream gradients
/// dL/d(rendered pixel) needed by splat_gradients.
struct RenderLossResult {
  double value = 0.0;
  double sq_sum = 0.0;
  std::size_t count = 0;
  std::vector<double> per_view;
  std::vector<PixelGrad> pixel_grads;
};

/// Sum over views and joints of the masked squared difference between
/// rendered and pseudo ground-truth channels, divided by the total number of
/// masked pixels. Missing targets are skipped. `rendered[i][j]` and
/// `pseudo[i][j]` are view i, joint j.
///
/// Throws EmptyMask when every target is missing.
inline RenderLossResult render_loss(const std::vector<std::vector<Heatmap>>& rendered,
                                    const std::vector<std::vector<Heatmap>>& pseudo) {
  if (rendered.size() != pseudo.size()) {
    throw Error(ErrorKind::DimensionMismatch, "render_loss: view count mismatch");
  }
  RenderLossResult out;
  out.per_view.assign(rendered.size(), 0.0);
  std::vector<MaskedResidual> residuals;
  bool any_target = false;
  for (std::size_t i = 0; i < rendered.size(); ++i) {
    if (rendered[i].size() != pseudo[i].size()) {
      throw Error(ErrorKind::DimensionMismatch, "render_loss: joint count mismatch");
    }
    for (std::size_t j = 0; j < rendered[i].size(); ++j) {
      if (pseudo[i][j].missing) continue;
      any_target = true;
      MaskedResidual r = masked_pair(rendered[i][j], pseudo[i][j]);
      out.per_view[i] += r.sq_sum;
      out.sq_sum += r.sq_sum;
      out.count += r.count;
      residuals.push_back(std::move(r));
    }
  }
  if (!any_target) {
    throw Error(ErrorKind::EmptyMask, "render_loss: every detection is missing");
  }
  if (out.count == 0) return out;

  const double inv = 1.0 / static_cast<double>(out.count);
  out.value = out.sq_sum * inv;
  for (double& v : out.per_view) v *= inv;
  out.pixel_grads.reserve(residuals.size());
  for (const MaskedResidual& r : residuals) {
    PixelGrad g;
    g.view = r.view;
    g.joint = r.joint;
    g.box = r.box;
    g.values.resize(r.diff.size());
    for (std::size_t k = 0; k < r.diff.size(); ++k) g.values[k] = 2.0 * inv * r.diff[k];
    out.pixel_grads.push_back(std::move(g));
  }
  return out;
}

struct SymmetryResult {
  double value = 0.0;
  std::vector<Vec3> d_mean;
};

/// Sum over limb pairs of (|left| - |right|)^2 with its gradient on the joint
/// means. A zero-length limb contributes the subgradient 0 to its endpoints.
inline SymmetryResult symmetry_loss(const GaussianSkeleton& sk, const std::vector<LimbPair>& pairs) {
  SymmetryResult out;
  out.d_mean.assign(sk.joints.size(), Vec3::Zero());
  for (const LimbPair& p : pairs) {
    const Vec3 l = sk.joints.at(p.left[0]).mean - sk.joints.at(p.left[1]).mean;
    const Vec3 r = sk.joints.at(p.right[0]).mean - sk.joints.at(p.right[1]).mean;
    const double ll = l.norm();
    const double lr = r.norm();
    const double diff = ll - lr;
    out.value += diff * diff;
    if (ll > 0.0) {
      const Vec3 g = (2.0 * diff / ll) * l;
      out.d_mean[p.left[0]] += g;
      out.d_mean[p.left[1]] -= g;
    }
    if (lr > 0.0) {
      const Vec3 g = (-2.0 * diff / lr) * r;
      out.d_mean[p.right[0]] += g;
      out.d_mean[p.right[1]] -= g;
    }
  }
  return out;
}

inline LossReport total_loss(double render_term, double sym_term, double lambda_sym) {
  if (!(lambda_sym >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "total_loss: lambda_sym must be non-negative");
  }
  LossReport r;
  r.render_term = render_term;
  r.sym_term = sym_term;
  r.total = render_term + lambda_sym * sym_term;
  return r;
}

}  // namespace skelsplat
