#pragma once

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "skelsplat/errors.hpp"
#include "skelsplat/geometry.hpp"

namespace skelsplat {

/// A 3D pose: one point per joint, in millimeters.
using Pose = std::vector<Vec3>;

/// Two joint indices; its length is the distance between the joints.
using Limb = std::array<int, 2>;

struct LimbPair {
  Limb left;
  Limb right;

  friend bool operator==(const LimbPair&, const LimbPair&) = default;
};

/// Which symmetric-limb set feeds the symmetry loss.
enum class SymmSet { None = 0, Symm1 = 1, Symm2 = 2, Symm3 = 3 };

inline SymmSet symm_set_from_int(int level) {
  if (level < 0 || level > 3) {
    throw Error(ErrorKind::InvalidArgument, "symmetry set must be one of none, 1, 2, 3");
  }
  return static_cast<SymmSet>(level);
}

/// Skeleton topology. The three symmetric sets are nested (symm1 is a subset
/// of symm2, symm2 of symm3).
struct SkeletonModel {
  std::vector<std::string> joint_names;
  std::vector<Limb> edges;
  std::vector<LimbPair> symm1;
  std::vector<LimbPair> symm2;
  std::vector<LimbPair> symm3;
  std::vector<int> occlusion_prone;

  int size() const { return static_cast<int>(joint_names.size()); }

  int index_of(const std::string& name) const {
    const auto it = std::find(joint_names.begin(), joint_names.end(), name);
    if (it == joint_names.end()) {
      throw Error(ErrorKind::InvalidArgument, "unknown joint '" + name + "'");
    }
    return static_cast<int>(it - joint_names.begin());
  }

  bool is_occlusion_prone(int j) const {
    return std::find(occlusion_prone.begin(), occlusion_prone.end(), j) != occlusion_prone.end();
  }

  const std::vector<LimbPair>& pairs(SymmSet set) const {
    static const std::vector<LimbPair> kEmpty;
    switch (set) {
      case SymmSet::Symm1: return symm1;
      case SymmSet::Symm2: return symm2;
      case SymmSet::Symm3: return symm3;
      case SymmSet::None: break;
    }
    return kEmpty;
  }

  void validate() const {
    const int n = size();
    if (n == 0) throw Error(ErrorKind::Schema, "skeleton: no joints");
    auto check_limb = [n](const Limb& l, const std::string& where) {
      for (int j : l) {
        if (j < 0 || j >= n) {
          throw Error(ErrorKind::Bounds, where + ": joint index " + std::to_string(j) +
                                             " out of range [0, " + std::to_string(n) + ")");
        }
      }
    };
    for (const Limb& e : edges) check_limb(e, "skeleton.edges");
    const std::array<const std::vector<LimbPair>*, 3> sets{&symm1, &symm2, &symm3};
    for (std::size_t s = 0; s < sets.size(); ++s) {
      const std::string where = "skeleton.symm" + std::to_string(s + 1);
      for (const LimbPair& p : *sets[s]) {
        check_limb(p.left, where);
        check_limb(p.right, where);
        const bool same = (p.left == p.right) ||
                          (p.left[0] == p.right[1] && p.left[1] == p.right[0]);
        if (same) throw Error(ErrorKind::InvalidArgument, where + ": left and right limb coincide");
      }
      if (s > 0) {
        for (const LimbPair& p : *sets[s - 1]) {
          if (std::find(sets[s]->begin(), sets[s]->end(), p) == sets[s]->end()) {
            throw Error(ErrorKind::InvalidArgument,
                        where + ": must contain every pair of symm" + std::to_string(s));
          }
        }
      }
    }
    for (int j : occlusion_prone) {
      if (j < 0 || j >= n) {
        throw Error(ErrorKind::Bounds, "skeleton.occlusion_prone: joint index out of range");
      }
    }
  }
};

/// 17-joint Human3.6M-style skeleton.
///
/// Order: root, r_hip, r_knee, r_ankle, l_hip, l_knee, l_ankle, spine, neck,
/// nose, head_top, l_shoulder, l_elbow, l_wrist, r_shoulder, r_elbow, r_wrist.
/// symm1 pairs the lower arms and lower legs, symm2 adds upper arms and upper
/// legs, symm3 adds root-hip and neck-shoulder.
inline SkeletonModel default_skeleton_17() {
  SkeletonModel m;
  m.joint_names = {"root",    "r_hip",      "r_knee",  "r_ankle",  "l_hip",   "l_knee",
                   "l_ankle", "spine",      "neck",    "nose",     "head_top", "l_shoulder",
                   "l_elbow", "l_wrist",    "r_shoulder", "r_elbow", "r_wrist"};
  m.edges = {{0, 1},  {1, 2},  {2, 3},   {0, 4},   {4, 5},   {5, 6},   {0, 7},   {7, 8},
             {8, 9},  {9, 10}, {8, 11},  {11, 12}, {12, 13}, {8, 14},  {14, 15}, {15, 16}};

  const LimbPair lower_arm{{12, 13}, {15, 16}};
  const LimbPair lower_leg{{5, 6}, {2, 3}};
  const LimbPair upper_arm{{11, 12}, {14, 15}};
  const LimbPair upper_leg{{4, 5}, {1, 2}};
  const LimbPair root_hip{{0, 4}, {0, 1}};
  const LimbPair neck_shoulder{{8, 11}, {8, 14}};

  m.symm1 = {lower_arm, lower_leg};
  m.symm2 = {lower_arm, lower_leg, upper_arm, upper_leg};
  m.symm3 = {lower_arm, lower_leg, upper_arm, upper_leg, root_hip, neck_shoulder};
  m.occlusion_prone = {2, 3, 5, 6, 12, 13, 15, 16};
  return m;
}

/// One joint as a Gaussian primitive. Its rendering is routed to channel
/// `channel` only; opacity is fixed at 1 and never optimized.
struct JointGaussian {
  Vec3 mean = Vec3::Zero();
  CovarianceFactors factors;
  int channel = 0;
  double opacity = 1.0;

  Mat3 covariance() const { return factors.covariance(); }

  /// Joint identity vector of length n: 1 at `channel`, 0 elsewhere.
  Eigen::VectorXd one_hot(int n) const {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
    c(channel) = 1.0;
    return c;
  }
};

struct GaussianSkeleton {
  SkeletonModel model;
  std::vector<JointGaussian> joints;

  int size() const { return static_cast<int>(joints.size()); }

  Pose means() const {
    Pose p;
    p.reserve(joints.size());
    for (const auto& g : joints) p.push_back(g.mean);
    return p;
  }
};

/// Builds the Gaussian skeleton at `means` with isotropic covariance
/// base_sigma2 * I, enlarged by occ_scale for occlusion-prone joints.
inline GaussianSkeleton init_skeleton(const SkeletonModel& model, const Pose& means,
                                      double base_sigma2, double occ_scale) {
  if (static_cast<int>(means.size()) != model.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                "init_skeleton: " + std::to_string(means.size()) + " means for " +
                    std::to_string(model.size()) + " joints");
  }
  if (!(base_sigma2 > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "init_skeleton: base_sigma2 must be positive");
  }
  if (!(occ_scale >= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "init_skeleton: occ_scale must be >= 1");
  }
  GaussianSkeleton sk;
  sk.model = model;
  sk.joints.resize(means.size());
  for (int j = 0; j < model.size(); ++j) {
    JointGaussian& g = sk.joints[j];
    g.mean = means[j];
    g.channel = j;
    const double var = model.is_occlusion_prone(j) ? occ_scale * base_sigma2 : base_sigma2;
    g.factors = CovarianceFactors::isotropic(var);
  }
  return sk;
}

inline double limb_length(const GaussianSkeleton& sk, const Limb& limb) {
  return (sk.joints.at(limb[0]).mean - sk.joints.at(limb[1]).mean).norm();
}

}  // namespace skelsplat
