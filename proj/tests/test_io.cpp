#include <gtest/gtest.h>

#include <filesystem>

#include "skelsplat/io.hpp"

using namespace skelsplat;

namespace {

std::filesystem::path temp_dir() {
  const auto d = std::filesystem::temp_directory_path() / "skelsplat_test_io";
  std::filesystem::create_directories(d);
  return d;
}

Scene sample_scene() {
  SynthOptions o;
  o.seed = 21;
  CorruptionSpec c;
  c.noise_sigma_2d = 1.5;
  c.noise_sigma_3d_init = 20.0;
  c.occluded_views = {1};
  c.occluded_joints = {13};
  c.seed = 3;
  Scene s = corrupt(synth_scene(o), c);
  s.meta["note"] = "sample";
  return s;
}

std::string error_message(const std::function<void()>& f, ErrorKind expected) {
  try {
    f();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), expected) << e.what();
    return e.what();
  }
  ADD_FAILURE() << "no exception";
  return {};
}

}  // namespace

TEST(Io, SceneRoundTripIsLossless) {
  const Scene s = sample_scene();
  const auto path = (temp_dir() / "scene.json").string();
  save_scene(path, s, true);
  const Scene r = load_scene(path);
  ASSERT_EQ(r.num_views(), s.num_views());
  for (int i = 0; i < s.num_views(); ++i) {
    EXPECT_LT((r.cameras[i].rotation - s.cameras[i].rotation).norm(), 1e-12);
    EXPECT_LT((r.cameras[i].translation - s.cameras[i].translation).norm(), 1e-12);
    EXPECT_EQ(r.cameras[i].fx, s.cameras[i].fx);
    EXPECT_EQ(r.cameras[i].width, s.cameras[i].width);
    for (int j = 0; j < s.num_joints(); ++j) {
      ASSERT_EQ(r.detections[i][j].has_value(), s.detections[i][j].has_value());
      if (s.detections[i][j]) EXPECT_LT((*r.detections[i][j] - *s.detections[i][j]).norm(), 1e-12);
    }
  }
  EXPECT_FALSE(r.detections[1][13].has_value());
  for (int j = 0; j < s.num_joints(); ++j) {
    EXPECT_LT(((*r.gt_pose)[j] - (*s.gt_pose)[j]).norm(), 1e-12);
    EXPECT_LT(((*r.init_pose)[j] - (*s.init_pose)[j]).norm(), 1e-12);
  }
  EXPECT_EQ(r.skeleton.joint_names, s.skeleton.joint_names);
  EXPECT_EQ(r.skeleton.symm3, s.skeleton.symm3);
  EXPECT_EQ(r.skeleton.occlusion_prone, s.skeleton.occlusion_prone);
  EXPECT_EQ(r.meta, s.meta);
  // Serializing the loaded scene reproduces the same document.
  EXPECT_EQ(scene_to_json(r).dump(), scene_to_json(s).dump());
}

TEST(Io, CustomSkeletonLoadsThroughTheSamePath) {
  Json j = scene_to_json(sample_scene());
  j["skeleton"] = {{"joints", {"a", "b", "c"}}, {"edges", {{0, 1}, {1, 2}}}};
  j["detections"] = {{{"view", 0}, {"joint", 2}, {"uv", {10.0, 20.0}}}};
  j.erase("gt_pose");
  j.erase("init_pose");
  const Scene s = scene_from_json(j);
  EXPECT_EQ(s.num_joints(), 3);
  EXPECT_TRUE(s.detections[0][2].has_value());
  EXPECT_EQ(s.detection_count(), 1u);
}

TEST(Io, MissingCamerasKeyIsNamed) {
  Json j = scene_to_json(sample_scene());
  j.erase("cameras");
  const std::string msg = error_message([&] { scene_from_json(j); }, ErrorKind::Schema);
  EXPECT_NE(msg.find("cameras"), std::string::npos);
}

TEST(Io, SchemaErrorsCarryFieldPaths) {
  Json j = scene_to_json(sample_scene());
  j["cameras"][2]["fx"] = "wide";
  EXPECT_NE(error_message([&] { scene_from_json(j); }, ErrorKind::Schema).find("$.cameras[2].fx"),
            std::string::npos);

  j = scene_to_json(sample_scene());
  j["units"]["length"] = "m";
  EXPECT_NE(error_message([&] { scene_from_json(j); }, ErrorKind::Schema).find("units.length"),
            std::string::npos);

  j = scene_to_json(sample_scene());
  j["gt_pose"].erase(0);
  EXPECT_NE(error_message([&] { scene_from_json(j); }, ErrorKind::Schema).find("gt_pose"),
            std::string::npos);

  j = scene_to_json(sample_scene());
  j["camreas"] = Json::array();
  EXPECT_NE(error_message([&] { scene_from_json(j); }, ErrorKind::Schema).find("camreas"),
            std::string::npos);

  error_message([] { parse_json("{ not json", "inline"); }, ErrorKind::Schema);
}

TEST(Io, DetectionIndicesAreBoundsChecked) {
  Json j = scene_to_json(sample_scene());
  j["detections"].push_back({{"view", 4}, {"joint", 0}, {"uv", {1.0, 2.0}}});
  const std::string msg = error_message([&] { scene_from_json(j); }, ErrorKind::Bounds);
  EXPECT_NE(msg.find("view"), std::string::npos);

  j = scene_to_json(sample_scene());
  j["detections"].push_back({{"view", 0}, {"joint", 17}, {"uv", {1.0, 2.0}}});
  error_message([&] { scene_from_json(j); }, ErrorKind::Bounds);

  j = scene_to_json(sample_scene());
  j["detections"].push_back(j["detections"][0]);
  error_message([&] { scene_from_json(j); }, ErrorKind::Schema);
}

TEST(Io, ResultsRoundTrip) {
  const Scene s = sample_scene();
  OptimConfig cfg;
  cfg.max_iters = 4;
  cfg.symm_set = SymmSet::Symm2;
  cfg.accumulation_views = 2;
  const GaussianSkeleton init = initial_skeleton(s, cfg);
  const OptimResult r = optimize(s, init, cfg);
  const Metrics m = compute_metrics(r.skeleton, *s.gt_pose, init.means());
  const auto path = (temp_dir() / "results.json").string();
  save_results(path, r.skeleton, r.trace, cfg, m, true);
  const Results back = load_results(path);
  ASSERT_EQ(back.skeleton.size(), r.skeleton.size());
  for (int j = 0; j < r.skeleton.size(); ++j) {
    EXPECT_LT((back.skeleton.joints[j].mean - r.skeleton.joints[j].mean).norm(), 1e-12);
    EXPECT_LT((back.skeleton.joints[j].covariance() - r.skeleton.joints[j].covariance()).norm(),
              1e-12 * r.skeleton.joints[j].covariance().norm());
  }
  EXPECT_EQ(back.trace.iterations_run, r.trace.iterations_run);
  EXPECT_EQ(back.trace.stop_reason, r.trace.stop_reason);
  ASSERT_EQ(back.trace.iterations.size(), r.trace.iterations.size());
  for (std::size_t i = 0; i < r.trace.iterations.size(); ++i) {
    EXPECT_EQ(back.trace.iterations[i].total, r.trace.iterations[i].total);
    EXPECT_EQ(back.trace.iterations[i].per_view_render, r.trace.iterations[i].per_view_render);
  }
  EXPECT_EQ(back.config.symm_set, SymmSet::Symm2);
  EXPECT_EQ(back.config.accumulation_views, 2);
  ASSERT_TRUE(back.metrics.has_value());
  EXPECT_EQ(back.metrics->mpjpe, m.mpjpe);
  EXPECT_EQ(back.metrics->coverage, m.coverage);
  // No wall time unless requested.
  EXPECT_EQ(read_text_file(path).find("wall_time"), std::string::npos);
}

TEST(Io, RefusesToOverwriteWithoutForce) {
  const auto path = (temp_dir() / "exists.txt").string();
  write_text_file(path, "a", true);
  error_message([&] { write_text_file(path, "b", false); }, ErrorKind::Io);
  EXPECT_EQ(read_text_file(path), "a");
  write_text_file(path, "c", true);
  EXPECT_EQ(read_text_file(path), "c");
}

TEST(Io, Pgm16EncodingIsBigEndianAndClamped) {
  const std::string pgm = encode_pgm16(2, 1, {1.0, 2.0});
  const std::string header = "P5\n2 1\n65535\n";
  ASSERT_EQ(pgm.size(), header.size() + 4);
  EXPECT_EQ(pgm.substr(0, header.size()), header);
  EXPECT_EQ(static_cast<unsigned char>(pgm[header.size()]), 0xff);
  EXPECT_EQ(static_cast<unsigned char>(pgm[header.size() + 3]), 0xff);
  const std::string half = encode_pgm16(1, 1, {0.5});
  EXPECT_EQ(static_cast<unsigned char>(half[half.size() - 2]), 0x80);
  EXPECT_THROW(encode_pgm16(2, 2, {0.0}), Error);
}

TEST(Io, AggregateIsClampedSum) {
  const Heatmap a = rasterize_gaussian(Vec2(5, 5), 2.0 * Mat2::Identity(), 12, 12);
  const Heatmap b = rasterize_gaussian(Vec2(5, 5), 2.0 * Mat2::Identity(), 12, 12);
  const std::vector<double> img = aggregate_channels({a, b}, 12, 12);
  EXPECT_DOUBLE_EQ(img[5 * 12 + 5], 1.0);
  EXPECT_NEAR(img[5 * 12 + 7], std::min(1.0, 2.0 * a.at(7, 5)), 1e-15);
}
