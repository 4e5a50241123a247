#pragma once

// Tool configuration: optimizer, synthetic rig, corruption scenario and
// ablation grids. Loaded as built-in defaults overlaid by a JSON file; every
// key is optional in the file and unknown keys are rejected.

#include <string>
#include <vector>

#include "skelsplat/eval.hpp"
#include "skelsplat/json_node.hpp"

namespace skelsplat {

struct AblationGrids {
  int seeds = 20;
  int workers = 1;
  std::vector<double> noise{10, 20, 40, 60, 80, 100};       // mm
  std::vector<double> accumulation{1, 2, 0};                // views, 0 = all
  std::vector<double> occ_scale{1.25, 1.5, 2.0};
  std::vector<double> symm{0, 1, 2, 3};                     // 0 = none
  std::vector<double> resolution{0.25, 0.5, 1.0};
  std::vector<double> n_views{4, 5, 6, 7, 8};

  const std::vector<double>& grid(AblationAxis a) const {
    switch (a) {
      case AblationAxis::Noise: return noise;
      case AblationAxis::Accumulation: return accumulation;
      case AblationAxis::OccScale: return occ_scale;
      case AblationAxis::Symm: return symm;
      case AblationAxis::Resolution: return resolution;
      case AblationAxis::NViews: return n_views;
    }
    return noise;
  }
};

struct ToolConfig {
  OptimConfig optim;
  SynthOptions synth;
  ScenarioConfig scenario;
  AblationGrids ablation;
};

/// One documented configuration key.
struct ConfigKey {
  const char* key;
  const char* unit;
  const char* description;
};

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"optim.max_iters", "iterations", "upper bound on optimization iterations"},
      {"optim.early_stop_delta", "loss", "stop when consecutive window minima differ by less"},
      {"optim.window", "iterations", "early-stop window size; 0 = number of views"},
      {"optim.lr_mean", "mm/step", "Adam learning rate of joint means"},
      {"optim.lr_logscale", "log(mm)/step", "Adam learning rate of covariance log-scales"},
      {"optim.lr_quat", "1/step", "Adam learning rate of covariance quaternions"},
      {"optim.adam_beta1", "-", "Adam first-moment decay"},
      {"optim.adam_beta2", "-", "Adam second-moment decay"},
      {"optim.adam_eps", "-", "Adam denominator epsilon"},
      {"optim.accumulation_views", "views", "views per optimizer step; \"all\" or 0 = every view"},
      {"optim.lambda_sym", "1/mm^2", "weight of the limb symmetry loss"},
      {"optim.symm", "-", "symmetric limb set: \"none\", 1, 2 or 3"},
      {"optim.base_sigma2", "cm^2", "initial isotropic joint variance"},
      {"optim.occ_scale", "-", "variance multiplier for occlusion-prone joints"},
      {"optim.resolution_scale", "-", "image resolution multiplier for rendering"},
      {"optim.freeze_covariance", "bool", "optimize joint means only"},
      {"optim.refresh_pseudo_covariance", "bool",
       "rebuild pseudo ground truth from the current covariances every iteration"},
      {"synth.n_views", "views", "cameras on the synthetic rig"},
      {"synth.circle_radius", "mm", "radius of the camera circle"},
      {"synth.camera_height", "mm", "camera height above the ground plane"},
      {"synth.image_size", "px", "square image side"},
      {"synth.focal_factor", "image sizes", "focal length divided by image size"},
      {"synth.subject", "-", "\"canonical\" or \"articulated\""},
      {"scenario.noise_sigma_2d", "px", "detection noise standard deviation"},
      {"scenario.noise_sigma_3d_init", "mm", "RMS length of the initial-pose perturbation"},
      {"scenario.occluded_views", "views", "occlusion hits the first k views"},
      {"scenario.occlusion_mode", "-", "\"drop\" or \"displace\""},
      {"scenario.displace_sigma", "px", "displacement magnitude of occluded detections"},
      {"scenario.occlusion_rate", "-", "probability that an occlusion-prone joint is hit per view"},
      {"ablation.seeds", "scenes", "seeds per ablation point (>= 20)"},
      {"ablation.workers", "threads", "concurrent trials"},
      {"ablation.noise", "mm", "grid of initial-pose noise levels"},
      {"ablation.accumulation", "views", "grid of accumulation group sizes; 0 = all"},
      {"ablation.occ_scale", "-", "grid of occlusion covariance multipliers"},
      {"ablation.symm", "-", "grid of symmetric limb sets; 0 = none"},
      {"ablation.resolution", "-", "grid of resolution multipliers"},
      {"ablation.n_views", "views", "grid of camera counts"},
  };
  return keys;
}

inline std::string config_help() {
  std::string s = "Configuration keys (JSON sections.key, unit, meaning):\n";
  for (const ConfigKey& k : config_keys()) {
    s += "  " + std::string(k.key) + " [" + k.unit + "]  " + k.description + "\n";
  }
  return s;
}

inline Json accumulation_to_json(int views) { return views == 0 ? Json("all") : Json(views); }

inline int accumulation_from_json(const JsonNode& n) {
  if (n.raw().is_string()) {
    if (n.str() != "all") n.fail("expected \"all\" or a view count");
    return 0;
  }
  const int v = n.integer();
  if (v < 0) n.fail("must be >= 0");
  return v;
}

inline Json symm_to_json(SymmSet s) { return s == SymmSet::None ? Json("none") : Json(int(s)); }

inline SymmSet symm_from_json(const JsonNode& n) {
  if (n.raw().is_string()) {
    if (n.str() != "none") n.fail("expected \"none\", 1, 2 or 3");
    return SymmSet::None;
  }
  const int v = n.integer();
  if (v < 0 || v > 3) n.fail("expected \"none\", 1, 2 or 3");
  return symm_set_from_int(v);
}

inline const char* to_string(OcclusionMode m) { return m == OcclusionMode::Drop ? "drop" : "displace"; }

inline OcclusionMode occlusion_mode_from_string(const std::string& s) {
  if (s == "drop") return OcclusionMode::Drop;
  if (s == "displace") return OcclusionMode::Displace;
  throw Error(ErrorKind::InvalidArgument, "occlusion mode must be \"drop\" or \"displace\"");
}

inline Json to_json(const OptimConfig& c) {
  return {{"max_iters", c.max_iters},
          {"early_stop_delta", c.early_stop_delta},
          {"window", c.window},
          {"lr_mean", c.lr_mean},
          {"lr_logscale", c.lr_logscale},
          {"lr_quat", c.lr_quat},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"accumulation_views", accumulation_to_json(c.accumulation_views)},
          {"lambda_sym", c.lambda_sym},
          {"symm", symm_to_json(c.symm_set)},
          {"base_sigma2", c.base_sigma2},
          {"occ_scale", c.occ_scale},
          {"resolution_scale", c.resolution_scale},
          {"freeze_covariance", c.freeze_covariance},
          {"refresh_pseudo_covariance", c.refresh_pseudo_covariance}};
}

inline void overlay(OptimConfig& c, const JsonNode& n) {
  n.only_keys({"max_iters", "early_stop_delta", "window", "lr_mean", "lr_logscale", "lr_quat",
               "adam_beta1", "adam_beta2", "adam_eps", "accumulation_views", "lambda_sym", "symm",
               "base_sigma2", "occ_scale", "resolution_scale", "freeze_covariance",
               "refresh_pseudo_covariance"});
  if (auto v = n.find("max_iters")) c.max_iters = v->integer();
  if (auto v = n.find("early_stop_delta")) c.early_stop_delta = v->number();
  if (auto v = n.find("window")) c.window = v->integer();
  if (auto v = n.find("lr_mean")) c.lr_mean = v->number();
  if (auto v = n.find("lr_logscale")) c.lr_logscale = v->number();
  if (auto v = n.find("lr_quat")) c.lr_quat = v->number();
  if (auto v = n.find("adam_beta1")) c.adam_beta1 = v->number();
  if (auto v = n.find("adam_beta2")) c.adam_beta2 = v->number();
  if (auto v = n.find("adam_eps")) c.adam_eps = v->number();
  if (auto v = n.find("accumulation_views")) c.accumulation_views = accumulation_from_json(*v);
  if (auto v = n.find("lambda_sym")) c.lambda_sym = v->number();
  if (auto v = n.find("symm")) c.symm_set = symm_from_json(*v);
  if (auto v = n.find("base_sigma2")) c.base_sigma2 = v->number();
  if (auto v = n.find("occ_scale")) c.occ_scale = v->number();
  if (auto v = n.find("resolution_scale")) c.resolution_scale = v->number();
  if (auto v = n.find("freeze_covariance")) c.freeze_covariance = v->boolean();
  if (auto v = n.find("refresh_pseudo_covariance")) c.refresh_pseudo_covariance = v->boolean();
}

inline Json to_json(const SynthOptions& s) {
  return {{"n_views", s.n_views},
          {"circle_radius", s.circle_radius},
          {"camera_height", s.camera_height},
          {"image_size", s.image_size},
          {"focal_factor", s.focal_factor},
          {"subject", s.subject == SubjectPose::Canonical ? "canonical" : "articulated"}};
}

inline void overlay(SynthOptions& s, const JsonNode& n) {
  n.only_keys({"n_views", "circle_radius", "camera_height", "image_size", "focal_factor", "subject"});
  if (auto v = n.find("n_views")) s.n_views = v->integer();
  if (auto v = n.find("circle_radius")) s.circle_radius = v->number();
  if (auto v = n.find("camera_height")) s.camera_height = v->number();
  if (auto v = n.find("image_size")) s.image_size = v->integer();
  if (auto v = n.find("focal_factor")) s.focal_factor = v->number();
  if (auto v = n.find("subject")) {
    const std::string p = v->str();
    if (p == "canonical") s.subject = SubjectPose::Canonical;
    else if (p == "articulated") s.subject = SubjectPose::RandomArticulated;
    else v->fail("expected \"canonical\" or \"articulated\"");
  }
}

inline Json to_json(const ScenarioConfig& s) {
  return {{"noise_sigma_2d", s.noise_sigma_2d},
          {"noise_sigma_3d_init", s.noise_sigma_3d_init},
          {"occluded_views", s.occluded_views},
          {"occlusion_mode", to_string(s.occlusion_mode)},
          {"displace_sigma", s.displace_sigma},
          {"occlusion_rate", s.occlusion_rate}};
}

inline void overlay(ScenarioConfig& s, const JsonNode& n) {
  n.only_keys({"noise_sigma_2d", "noise_sigma_3d_init", "occluded_views", "occlusion_mode",
               "displace_sigma", "occlusion_rate"});
  if (auto v = n.find("noise_sigma_2d")) s.noise_sigma_2d = v->number();
  if (auto v = n.find("noise_sigma_3d_init")) s.noise_sigma_3d_init = v->number();
  if (auto v = n.find("occluded_views")) s.occluded_views = v->integer();
  if (auto v = n.find("occlusion_mode")) {
    const std::string m = v->str();
    if (m != "drop" && m != "displace") v->fail("expected \"drop\" or \"displace\"");
    s.occlusion_mode = occlusion_mode_from_string(m);
  }
  if (auto v = n.find("displace_sigma")) s.displace_sigma = v->number();
  if (auto v = n.find("occlusion_rate")) s.occlusion_rate = v->number();
}

inline Json to_json(const AblationGrids& a) {
  return {{"seeds", a.seeds},         {"workers", a.workers},     {"noise", a.noise},
          {"accumulation", a.accumulation}, {"occ_scale", a.occ_scale}, {"symm", a.symm},
          {"resolution", a.resolution}, {"n_views", a.n_views}};
}

inline void overlay(AblationGrids& a, const JsonNode& n) {
  n.only_keys({"seeds", "workers", "noise", "accumulation", "occ_scale", "symm", "resolution",
               "n_views"});
  if (auto v = n.find("seeds")) a.seeds = v->integer();
  if (auto v = n.find("workers")) a.workers = v->integer();
  if (auto v = n.find("noise")) a.noise = v->numbers();
  if (auto v = n.find("accumulation")) a.accumulation = v->numbers();
  if (auto v = n.find("occ_scale")) a.occ_scale = v->numbers();
  if (auto v = n.find("symm")) a.symm = v->numbers();
  if (auto v = n.find("resolution")) a.resolution = v->numbers();
  if (auto v = n.find("n_views")) a.n_views = v->numbers();
}

inline Json to_json(const ToolConfig& c) {
  return {{"optim", to_json(c.optim)},
          {"synth", to_json(c.synth)},
          {"scenario", to_json(c.scenario)},
          {"ablation", to_json(c.ablation)}};
}

/// Overlays the sections present in `j` onto `c`.
inline void overlay(ToolConfig& c, const Json& j, const std::string& source = "$") {
  const JsonNode n(j, source);
  n.only_keys({"optim", "synth", "scenario", "ablation"});
  if (auto v = n.find("optim")) overlay(c.optim, *v);
  if (auto v = n.find("synth")) overlay(c.synth, *v);
  if (auto v = n.find("scenario")) overlay(c.scenario, *v);
  if (auto v = n.find("ablation")) overlay(c.ablation, *v);
}

}  // namespace skelsplat
