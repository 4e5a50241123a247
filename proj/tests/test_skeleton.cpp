#include <gtest/gtest.h>

#include "skelsplat/skeleton.hpp"

using namespace skelsplat;

TEST(Skeleton, DefaultModelIsValidAndNested) {
  const SkeletonModel m = default_skeleton_17();
  EXPECT_EQ(m.size(), 17);
  EXPECT_NO_THROW(m.validate());
  EXPECT_EQ(m.symm1.size(), 2u);
  EXPECT_EQ(m.symm2.size(), 4u);
  EXPECT_EQ(m.symm3.size(), 6u);
  EXPECT_TRUE(m.pairs(SymmSet::None).empty());
  EXPECT_EQ(m.index_of("l_wrist"), 13);
  EXPECT_THROW(m.index_of("tail"), Error);
  EXPECT_TRUE(m.is_occlusion_prone(m.index_of("l_wrist")));
  EXPECT_FALSE(m.is_occlusion_prone(m.index_of("root")));
}

TEST(Skeleton, ValidationRejectsBadTopology) {
  SkeletonModel m = default_skeleton_17();
  m.edges.push_back({0, 17});
  EXPECT_THROW(m.validate(), Error);

  m = default_skeleton_17();
  m.symm1.push_back({{1, 2}, {2, 1}});
  EXPECT_THROW(m.validate(), Error);

  m = default_skeleton_17();
  m.symm2.erase(m.symm2.begin());  // symm1 no longer contained in symm2
  EXPECT_THROW(m.validate(), Error);
}

TEST(Skeleton, SymmSetParsing) {
  EXPECT_EQ(symm_set_from_int(0), SymmSet::None);
  EXPECT_EQ(symm_set_from_int(3), SymmSet::Symm3);
  EXPECT_THROW(symm_set_from_int(4), Error);
}

TEST(Skeleton, InitializationScalesOcclusionProneJoints) {
  const SkeletonModel m = default_skeleton_17();
  Pose p(17, Vec3(0, 0, 1000));
  const GaussianSkeleton sk = init_skeleton(m, p, 300.0, 1.25);
  ASSERT_EQ(sk.size(), 17);
  for (int j = 0; j < 17; ++j) {
    const double expect = m.is_occlusion_prone(j) ? 375.0 : 300.0;
    EXPECT_NEAR((sk.joints[j].covariance() - expect * Mat3::Identity()).norm(), 0.0, 1e-9);
    EXPECT_EQ(sk.joints[j].channel, j);
    EXPECT_EQ(sk.joints[j].opacity, 1.0);
    const Eigen::VectorXd c = sk.joints[j].one_hot(17);
    EXPECT_EQ(c.sum(), 1.0);
    EXPECT_EQ(c(j), 1.0);
  }
  EXPECT_THROW(init_skeleton(m, Pose(3), 300.0, 1.25), Error);
  EXPECT_THROW(init_skeleton(m, p, 0.0, 1.25), Error);
  EXPECT_THROW(init_skeleton(m, p, 300.0, 0.5), Error);
}

TEST(Skeleton, LimbLength) {
  const SkeletonModel m = default_skeleton_17();
  Pose p(17, Vec3::Zero());
  p[12] = Vec3(3, 4, 0);
  const GaussianSkeleton sk = init_skeleton(m, p, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(limb_length(sk, {11, 12}), 5.0);
}
