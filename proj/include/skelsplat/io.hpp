#pragma once

// File formats. Scenes and results are JSON documents tagged with a format
// name, a version and their units; heatmaps are dumped as 16-bit PGM.
//
// Scene document:
//   format      "skelsplat-scene"
//   version     1
//   units       {"length": "mm", "image": "px"}
//   skeleton    {joints: [name], edges: [[a, b]], symm1/symm2/symm3:
//                [[[a, b], [c, d]]] (left limb, right limb), occlusion_prone: [j]}
//   cameras     [{id, fx, fy, cx, cy, width, height, rotation: 3x3, translation: [3]}]
//   detections  [{view, joint, uv: [u, v]}]  (absent pairs are missing)
//   gt_pose     optional [[x, y, z]] per joint
//   init_pose   optional [[x, y, z]] per joint
//   meta        optional {string: string}

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "skelsplat/config.hpp"
#include "skelsplat/eval.hpp"
#include "skelsplat/optim.hpp"
#include "skelsplat/scene.hpp"

namespace skelsplat {

inline constexpr const char* kSceneFormat = "skelsplat-scene";
inline constexpr const char* kResultsFormat = "skelsplat-results";
inline constexpr int kFormatVersion = 1;

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "' for reading");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Writes `text` to `path`. Refuses to replace an existing file unless
/// `overwrite` is set.
inline void write_text_file(const std::string& path, const std::string& text, bool overwrite) {
  if (!overwrite && std::filesystem::exists(path)) {
    throw Error(ErrorKind::Io, "'" + path + "' exists; pass --force to overwrite");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write to '" + path + "' failed");
}

namespace detail {

inline Json limb_to_json(const Limb& l) { return Json::array({l[0], l[1]}); }

inline Limb limb_from_json(const JsonNode& n) {
  if (n.size() != 2) n.fail("expected a pair of joint indices");
  return {n[0].integer(), n[1].integer()};
}

inline Json pairs_to_json(const std::vector<LimbPair>& pairs) {
  Json a = Json::array();
  for (const LimbPair& p : pairs) a.push_back({limb_to_json(p.left), limb_to_json(p.right)});
  return a;
}

inline std::vector<LimbPair> pairs_from_json(const JsonNode& n) {
  std::vector<LimbPair> out;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const JsonNode p = n[i];
    if (p.size() != 2) p.fail("expected [left limb, right limb]");
    out.push_back({limb_from_json(p[0]), limb_from_json(p[1])});
  }
  return out;
}

inline Json pose_to_json(const Pose& p) {
  Json a = Json::array();
  for (const Vec3& v : p) a.push_back(to_json(v));
  return a;
}

inline Pose pose_from_json(const JsonNode& n, int n_joints) {
  if (n.size() != static_cast<std::size_t>(n_joints)) {
    n.fail("expected " + std::to_string(n_joints) + " joints, got " + std::to_string(n.size()));
  }
  Pose p(n_joints);
  for (int j = 0; j < n_joints; ++j) p[j] = n[j].vec<3>();
  return p;
}

inline void check_header(const JsonNode& root, const char* format) {
  const std::string f = root.at("format").str();
  if (f != format) root.at("format").fail("expected \"" + std::string(format) + "\", got \"" + f + "\"");
  const int v = root.at("version").integer();
  if (v != kFormatVersion) root.at("version").fail("unsupported version " + std::to_string(v));
}

inline void check_units(const JsonNode& root, bool with_covariance) {
  const JsonNode u = root.at("units");
  if (u.at("length").str() != "mm") u.at("length").fail("only \"mm\" is supported");
  if (u.at("image").str() != "px") u.at("image").fail("only \"px\" is supported");
  if (with_covariance && u.at("covariance").str() != "mm^2") {
    u.at("covariance").fail("only \"mm^2\" is supported");
  }
}

}  // namespace detail

inline Json to_json(const SkeletonModel& m) {
  Json edges = Json::array();
  for (const Limb& e : m.edges) edges.push_back(detail::limb_to_json(e));
  return {{"joints", m.joint_names},
          {"edges", edges},
          {"symm1", detail::pairs_to_json(m.symm1)},
          {"symm2", detail::pairs_to_json(m.symm2)},
          {"symm3", detail::pairs_to_json(m.symm3)},
          {"occlusion_prone", m.occlusion_prone}};
}

inline SkeletonModel skeleton_from_json(const JsonNode& n) {
  n.only_keys({"joints", "edges", "symm1", "symm2", "symm3", "occlusion_prone"});
  SkeletonModel m;
  const JsonNode names = n.at("joints");
  for (std::size_t i = 0; i < names.size(); ++i) m.joint_names.push_back(names[i].str());
  const JsonNode edges = n.at("edges");
  for (std::size_t i = 0; i < edges.size(); ++i) m.edges.push_back(detail::limb_from_json(edges[i]));
  if (auto s = n.find("symm1")) m.symm1 = detail::pairs_from_json(*s);
  if (auto s = n.find("symm2")) m.symm2 = detail::pairs_from_json(*s);
  if (auto s = n.find("symm3")) m.symm3 = detail::pairs_from_json(*s);
  if (auto o = n.find("occlusion_prone")) m.occlusion_prone = o->integers();
  try {
    m.validate();
  } catch (const Error& e) {
    throw Error(e.kind(), n.path() + ": " + e.what());
  }
  return m;
}

inline Json to_json(const Camera& c) {
  return {{"id", c.id},       {"fx", c.fx},         {"fy", c.fy},
          {"cx", c.cx},       {"cy", c.cy},         {"width", c.width},
          {"height", c.height}, {"rotation", to_json(c.rotation)},
          {"translation", to_json(c.translation)}};
}

inline Camera camera_from_json(const JsonNode& n) {
  n.only_keys({"id", "fx", "fy", "cx", "cy", "width", "height", "rotation", "translation"});
  Camera c;
  c.id = n.at("id").integer();
  c.fx = n.at("fx").number();
  c.fy = n.at("fy").number();
  c.cx = n.at("cx").number();
  c.cy = n.at("cy").number();
  c.width = n.at("width").integer();
  c.height = n.at("height").integer();
  c.rotation = n.at("rotation").mat3();
  c.translation = n.at("translation").vec<3>();
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::Schema, n.path() + ": " + e.what());
  }
  return c;
}

inline Json scene_to_json(const Scene& s) {
  Json cams = Json::array();
  for (const Camera& c : s.cameras) cams.push_back(to_json(c));
  Json dets = Json::array();
  for (std::size_t i = 0; i < s.detections.size(); ++i) {
    for (std::size_t j = 0; j < s.detections[i].size(); ++j) {
      if (const auto& d = s.detections[i][j]) {
        dets.push_back({{"view", i}, {"joint", j}, {"uv", to_json(*d)}});
      }
    }
  }
  Json out = {{"format", kSceneFormat},
              {"version", kFormatVersion},
              {"units", {{"length", "mm"}, {"image", "px"}}},
              {"skeleton", to_json(s.skeleton)},
              {"cameras", cams},
              {"detections", dets},
              {"meta", s.meta}};
  if (s.gt_pose) out["gt_pose"] = detail::pose_to_json(*s.gt_pose);
  if (s.init_pose) out["init_pose"] = detail::pose_to_json(*s.init_pose);
  return out;
}

inline Scene scene_from_json(const Json& j, const std::string& source = "$") {
  const JsonNode root(j, source);
  root.only_keys({"format", "version", "units", "skeleton", "cameras", "detections", "gt_pose",
                  "init_pose", "meta"});
  detail::check_header(root, kSceneFormat);
  detail::check_units(root, false);

  Scene s;
  s.skeleton = skeleton_from_json(root.at("skeleton"));
  const int n_joints = s.skeleton.size();

  const JsonNode cams = root.at("cameras");
  for (std::size_t i = 0; i < cams.size(); ++i) s.cameras.push_back(camera_from_json(cams[i]));
  const int n_views = s.num_views();

  s.detections.assign(n_views, std::vector<std::optional<Vec2>>(n_joints));
  const JsonNode dets = root.at("detections");
  for (std::size_t k = 0; k < dets.size(); ++k) {
    const JsonNode d = dets[k];
    d.only_keys({"view", "joint", "uv"});
    const int v = d.at("view").integer();
    const int jn = d.at("joint").integer();
    if (v < 0 || v >= n_views) {
      throw Error(ErrorKind::Bounds, d.path() + ".view: index " + std::to_string(v) +
                                         " out of range [0, " + std::to_string(n_views) + ")");
    }
    if (jn < 0 || jn >= n_joints) {
      throw Error(ErrorKind::Bounds, d.path() + ".joint: index " + std::to_string(jn) +
                                         " out of range [0, " + std::to_string(n_joints) + ")");
    }
    if (s.detections[v][jn]) d.fail("duplicate detection for view " + std::to_string(v) +
                                    ", joint " + std::to_string(jn));
    s.detections[v][jn] = d.at("uv").vec<2>();
  }

  if (auto p = root.find("gt_pose")) s.gt_pose = detail::pose_from_json(*p, n_joints);
  if (auto p = root.find("init_pose")) s.init_pose = detail::pose_from_json(*p, n_joints);
  if (auto m = root.find("meta")) {
    if (!m->is_object()) m->fail("expected an object");
    for (const auto& [k, v] : m->raw().items()) {
      s.meta[k] = JsonNode(v, m->path() + "." + k).str();
    }
  }
  return s;
}

inline Scene load_scene(const std::string& path) {
  return scene_from_json(parse_json(read_text_file(path), path), path);
}

inline void save_scene(const std::string& path, const Scene& s, bool overwrite = false) {
  write_text_file(path, scene_to_json(s).dump(2) + "\n", overwrite);
}

inline Json to_json(const Metrics& m) {
  Json out = {{"mpjpe", m.mpjpe},
              {"per_joint_error", m.per_joint_error},
              {"coverage", {{"1", m.coverage[0]}, {"2", m.coverage[1]}, {"3", m.coverage[2]}}}};
  out["improvement_vs_init_pct"] = m.improvement_vs_init ? Json(*m.improvement_vs_init) : Json(nullptr);
  return out;
}

inline Metrics metrics_from_json(const JsonNode& n) {
  n.only_keys({"mpjpe", "per_joint_error", "coverage", "improvement_vs_init_pct"});
  Metrics m;
  m.mpjpe = n.at("mpjpe").number();
  m.per_joint_error = n.at("per_joint_error").numbers();
  const JsonNode c = n.at("coverage");
  for (int k = 0; k < 3; ++k) m.coverage[k] = c.at(std::to_string(k + 1)).number();
  if (auto v = n.find("improvement_vs_init_pct")) m.improvement_vs_init = v->number();
  return m;
}

struct Results {
  OptimConfig config;
  GaussianSkeleton skeleton;
  OptimTrace trace;
  std::optional<Metrics> metrics;
};

/// Results document. Wall time is written only when `with_timing` is set so
/// that repeated runs produce identical files.
inline Json results_to_json(const GaussianSkeleton& sk, const OptimTrace& trace,
                            const OptimConfig& cfg, const std::optional<Metrics>& metrics,
                            bool with_timing = false) {
  Json joints = Json::array();
  for (int j = 0; j < sk.size(); ++j) {
    const JointGaussian& g = sk.joints[j];
    joints.push_back({{"name", sk.model.joint_names[j]},
                      {"mean", to_json(g.mean)},
                      {"covariance", to_json(g.covariance())},
                      {"log_scale", to_json(g.factors.log_scale)},
                      {"quat", to_json(g.factors.quat)}});
  }
  Json iters = Json::array();
  for (const LossReport& r : trace.iterations) {
    iters.push_back({{"render", r.render_term},
                     {"sym", r.sym_term},
                     {"total", r.total},
                     {"masked_pixels", r.masked_pixel_count},
                     {"per_view_render", r.per_view_render}});
  }
  Json tr = {{"stop_reason", to_string(trace.stop_reason)},
             {"iterations_run", trace.iterations_run},
             {"iterations", iters}};
  if (with_timing) tr["wall_time_s"] = trace.wall_time;
  Json out = {{"format", kResultsFormat},
              {"version", kFormatVersion},
              {"units", {{"length", "mm"}, {"image", "px"}, {"covariance", "mm^2"}}},
              {"config", to_json(cfg)},
              {"skeleton", to_json(sk.model)},
              {"joints", joints},
              {"trace", tr}};
  if (metrics) out["metrics"] = to_json(*metrics);
  return out;
}

inline Results results_from_json(const Json& j, const std::string& source = "$") {
  const JsonNode root(j, source);
  root.only_keys({"format", "version", "units", "config", "skeleton", "joints", "trace", "metrics"});
  detail::check_header(root, kResultsFormat);
  detail::check_units(root, true);
  Results r;
  overlay(r.config, root.at("config"));
  r.skeleton.model = skeleton_from_json(root.at("skeleton"));
  const JsonNode joints = root.at("joints");
  if (joints.size() != static_cast<std::size_t>(r.skeleton.model.size())) {
    joints.fail("expected one entry per skeleton joint");
  }
  for (std::size_t i = 0; i < joints.size(); ++i) {
    const JsonNode n = joints[i];
    n.only_keys({"name", "mean", "covariance", "log_scale", "quat"});
    JointGaussian g;
    g.channel = static_cast<int>(i);
    g.mean = n.at("mean").vec<3>();
    g.factors.log_scale = n.at("log_scale").vec<3>();
    g.factors.quat = n.at("quat").vec<4>();
    if (!(g.factors.quat.norm() > 0.0)) n.at("quat").fail("zero quaternion");
    n.at("covariance").mat3();
    r.skeleton.joints.push_back(g);
  }
  const JsonNode tr = root.at("trace");
  tr.only_keys({"stop_reason", "iterations_run", "iterations", "wall_time_s"});
  const std::string reason = tr.at("stop_reason").str();
  if (reason == "converged") r.trace.stop_reason = StopReason::Converged;
  else if (reason == "max_iters") r.trace.stop_reason = StopReason::MaxIters;
  else tr.at("stop_reason").fail("expected \"converged\" or \"max_iters\"");
  r.trace.iterations_run = tr.at("iterations_run").integer();
  if (auto w = tr.find("wall_time_s")) r.trace.wall_time = w->number();
  const JsonNode iters = tr.at("iterations");
  for (std::size_t i = 0; i < iters.size(); ++i) {
    const JsonNode n = iters[i];
    n.only_keys({"render", "sym", "total", "masked_pixels", "per_view_render"});
    LossReport l;
    l.render_term = n.at("render").number();
    l.sym_term = n.at("sym").number();
    l.total = n.at("total").number();
    l.masked_pixel_count = n.at("masked_pixels").uinteger();
    l.per_view_render = n.at("per_view_render").numbers();
    r.trace.iterations.push_back(l);
  }
  if (auto m = root.find("metrics")) r.metrics = metrics_from_json(*m);
  return r;
}

inline void save_results(const std::string& path, const GaussianSkeleton& sk,
                         const OptimTrace& trace, const OptimConfig& cfg,
                         const std::optional<Metrics>& metrics, bool overwrite = false,
                         bool with_timing = false) {
  write_text_file(path, results_to_json(sk, trace, cfg, metrics, with_timing).dump(2) + "\n",
                  overwrite);
}

inline Results load_results(const std::string& path) {
  return results_from_json(parse_json(read_text_file(path), path), path);
}

/// Binary 16-bit PGM (P5, maxval 65535, big-endian) of a row-major image with
/// values in [0, 1]; values outside are clamped.
inline std::string encode_pgm16(int width, int height, const std::vector<double>& pixels) {
  if (width <= 0 || height <= 0 || pixels.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorKind::DimensionMismatch, "encode_pgm16: pixel count does not match image size");
  }
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n65535\n";
  out.reserve(out.size() + 2 * pixels.size());
  for (double v : pixels) {
    const double c = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
    const auto q = static_cast<std::uint16_t>(std::lround(c * 65535.0));
    out.push_back(static_cast<char>(q >> 8));
    out.push_back(static_cast<char>(q & 0xff));
  }
  return out;
}

/// Per-view aggregate of a set of channels: pixelwise sum clamped to 1.
inline std::vector<double> aggregate_channels(const std::vector<Heatmap>& channels, int width,
                                              int height) {
  std::vector<double> img(static_cast<std::size_t>(width) * height, 0.0);
  for (const Heatmap& h : channels) {
    if (h.missing || h.bbox.empty()) continue;
    for (int y = h.bbox.y0; y <= h.bbox.y1; ++y) {
      for (int x = h.bbox.x0; x <= h.bbox.x1; ++x) {
        double& p = img[static_cast<std::size_t>(y) * width + x];
        p = std::min(1.0, p + h.values[h.bbox.offset(x, y)]);
      }
    }
  }
  return img;
}

}  // namespace skelsplat
