#include "occgeom/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "occgeom/image_io.hpp"
#include "occgeom/metrics.hpp"
#include "occgeom/serialization.hpp"

namespace occgeom::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

void check_known_keys(const ojson& defaults, const ojson& user, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!defaults.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (defaults[key].is_object()) check_known_keys(defaults[key], value, path);
  }
}

void apply_override(ojson& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  ojson* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("unknown config key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw ConfigError("override '" + key + "' names a section, not a value");
  ojson value = ojson::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  *node = value;
}

template <typename T>
T field(const ojson& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config value ") + section + "." + key + " is missing or has the wrong type");
  }
}

ojson j9(double v) { return std::isfinite(v) ? ojson(round9(v)) : ojson(nullptr); }

void write_json(const fs::path& path, const ojson& j) { io::write_text(path, j.dump(2) + "\n"); }

void prepare_output(const ExperimentConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.output_dir.string() + ": " + ec.message());
  write_json(cfg.output_dir / "config.json", cfg.to_json());
}

void check_resolution(const ExperimentConfig& cfg, const SceneBundle& scene) {
  if (scene.options.height != cfg.render.height || scene.options.width != cfg.render.width)
    throw ConfigError("render.resolution " + std::to_string(cfg.render.height) + "x" +
                      std::to_string(cfg.render.width) + " differs from the scene's " +
                      std::to_string(scene.options.height) + "x" + std::to_string(scene.options.width));
}

void write_depth(const fs::path& dir, const std::string& stem, const DepthMap& d) {
  io::write_pfm(dir / (stem + ".pfm"), d.depth);
  io::write_pgm16_millimetres(dir / (stem + "_mm.pgm"), d.depth);
  io::write_mask_pgm(dir / (stem + "_valid.pgm"), d.valid, d.height(), d.width());
}

ojson loss_json(const TraceRow& r) {
  ojson j;
  j["L_ed"] = j9(r.loss.l_ed);
  j["L_rd"] = j9(r.loss.l_rd);
  j["cast"] = r.loss.cast.to_json();
  j["total"] = j9(r.loss.total);
  j["depth_mae"] = j9(r.depth_mae);
  return j;
}

std::string shape_string(const std::array<Index, 3>& d) {
  return "(" + std::to_string(d[0]) + ", " + std::to_string(d[1]) + ", " + std::to_string(d[2]) + ")";
}

}  // namespace

VoxelGridSpec ExperimentConfig::grid_spec() const {
  VoxelGridSpec s;
  s.dims = dims;
  s.voxel_size = voxel_size;
  s.origin = Eigen::Vector3d(-0.5 * dims[0] * voxel_size, -0.5 * dims[1] * voxel_size, -1.0);
  return s;
}

SceneOptions ExperimentConfig::scene_options() const {
  return {num_cameras, sigma_occ, render.height, render.width};
}

SelftrainOptions ExperimentConfig::selftrain_options() const {
  SelftrainOptions o = optimize;
  o.render = render;
  o.cast = cast;
  o.seed = seed;
  return o;
}

void ExperimentConfig::validate() const {
  grid_spec().validate();
  if (num_cameras < 1 || num_cameras > 6) throw ConfigError("scene.num_cameras must be in 1..6");
  if (!(sigma_occ > 0.0)) throw ConfigError("scene.sigma_occ must be positive");
  try {
    render.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("render: ") + e.what());
  }
  cast.validate();
  selftrain_options().validate();
}

nlohmann::ordered_json ExperimentConfig::to_json() const {
  ojson j;
  j["scene"]["seed"] = seed;
  j["scene"]["preset"] = to_string(preset);
  j["scene"]["dims"] = {dims[0], dims[1], dims[2]};
  j["scene"]["voxel_size"] = voxel_size;
  j["scene"]["num_cameras"] = num_cameras;
  j["scene"]["sigma_occ"] = sigma_occ;
  j["render"]["S"] = render.samples;
  j["render"]["t_near"] = render.t_near;
  j["render"]["t_far"] = render.t_far;
  j["render"]["resolution"] = {render.height, render.width};
  j["cast"]["alpha"] = cast.alpha;
  j["cast"]["ssim_window"] = cast.ssim_window;
  j["cast"]["lambda_t"] = cast.lambda_t;
  j["cast"]["lambda_sp"] = cast.lambda_sp;
  j["cast"]["lambda_spt"] = cast.lambda_spt;
  j["optimize"]["steps"] = optimize.steps;
  j["optimize"]["step_size"] = optimize.step_size;
  j["optimize"]["logit_step_size"] = optimize.logit_step_size;
  j["optimize"]["init"] = to_string(optimize.init);
  j["optimize"]["perturbation"] = optimize.perturbation;
  j["optimize"]["depth_bins"] = optimize.depth_bins;
  j["optimize"]["lidar_points"] = optimize.lidar_points;
  j["output_dir"] = output_dir.string();
  return j;
}

nlohmann::ordered_json default_config_json() {
  return ExperimentConfig{}.to_json();
}

ExperimentConfig config_from_json(const nlohmann::ordered_json& j) {
  ExperimentConfig c;
  c.seed = field<std::uint64_t>(j, "scene", "seed");
  c.preset = preset_from_string(field<std::string>(j, "scene", "preset"));
  const auto dims = field<std::vector<Index>>(j, "scene", "dims");
  if (dims.size() != 3) throw ConfigError("scene.dims must have three entries");
  c.dims = {dims[0], dims[1], dims[2]};
  c.voxel_size = field<double>(j, "scene", "voxel_size");
  c.num_cameras = field<int>(j, "scene", "num_cameras");
  c.sigma_occ = field<double>(j, "scene", "sigma_occ");
  c.render.samples = field<int>(j, "render", "S");
  c.render.t_near = field<double>(j, "render", "t_near");
  c.render.t_far = field<double>(j, "render", "t_far");
  const auto res = field<std::vector<int>>(j, "render", "resolution");
  if (res.size() != 2) throw ConfigError("render.resolution must be [rows, columns]");
  c.render.height = res[0];
  c.render.width = res[1];
  c.cast.alpha = field<double>(j, "cast", "alpha");
  c.cast.ssim_window = field<int>(j, "cast", "ssim_window");
  c.cast.lambda_t = field<double>(j, "cast", "lambda_t");
  c.cast.lambda_sp = field<double>(j, "cast", "lambda_sp");
  c.cast.lambda_spt = field<double>(j, "cast", "lambda_spt");
  c.optimize.steps = field<int>(j, "optimize", "steps");
  c.optimize.step_size = field<double>(j, "optimize", "step_size");
  c.optimize.logit_step_size = field<double>(j, "optimize", "logit_step_size");
  c.optimize.init = init_mode_from_string(field<std::string>(j, "optimize", "init"));
  c.optimize.perturbation = field<double>(j, "optimize", "perturbation");
  c.optimize.depth_bins = field<int>(j, "optimize", "depth_bins");
  c.optimize.lidar_points = field<Index>(j, "optimize", "lidar_points");
  if (!j.contains("output_dir") || !j["output_dir"].is_string()) throw ConfigError("output_dir must be a string");
  c.output_dir = j["output_dir"].get<std::string>();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::optional<fs::path>& file, const std::vector<std::string>& overrides) {
  ojson cfg = default_config_json();
  if (file) {
    ojson user = ojson::parse(io::read_text(*file), nullptr, false);
    if (user.is_discarded()) throw ConfigError("config file " + file->string() + " is not valid JSON");
    check_known_keys(cfg, user, "");
    cfg.merge_patch(user);
  }
  for (const auto& o : overrides) apply_override(cfg, o);
  return config_from_json(cfg);
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw DomainError("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

int cmd_gen(const ExperimentConfig& cfg, std::ostream& out) {
  const SceneBundle scene = build_scene(cfg.seed, cfg.grid_spec(), cfg.preset, cfg.scene_options());
  prepare_output(cfg);
  save_scene(scene, cfg.output_dir);

  const auto& names = scene_class_names();
  std::vector<Index> counts(names.size(), 0);
  for (auto l : scene.grid.labels)
    if (l < counts.size()) ++counts[l];
  ojson stats;
  stats["seed"] = cfg.seed;
  stats["preset"] = to_string(cfg.preset);
  stats["total_voxels"] = scene.grid.spec.num_voxels();
  stats["occupied_voxels"] = scene.grid.occupied_count();
  stats["occupied_fraction"] = j9(static_cast<double>(scene.grid.occupied_count()) / scene.grid.spec.num_voxels());
  ojson present = ojson::array();
  for (std::size_t k = 0; k < names.size(); ++k) {
    stats["class_counts"][names[k]] = counts[k];
    if (counts[k] > 0) present.push_back(names[k]);
  }
  stats["classes_present"] = present;
  Index visible = 0;
  for (auto v : scene.visible) visible += v;
  stats["visible_voxels"] = visible;
  write_json(cfg.output_dir / "stats.json", stats);
  out << stats.dump(2) << "\n";
  return kOk;
}

int cmd_render(const ExperimentConfig& cfg, const fs::path& scene_dir, std::ostream& out) {
  const SceneBundle scene = load_scene(scene_dir);
  check_resolution(cfg, scene);
  prepare_output(cfg);
  std::vector<double> errors;
  Index valid = 0, pixels = 0;
  ojson views = ojson::array();
  for (const auto& [key, gt] : scene.gt_depths) {
    const DepthMap d = render_view(scene.density_gt, scene.rig.camera_at(key.first, key.second), cfg.render);
    const std::string stem = view_stem(key.first, key.second);
    write_depth(cfg.output_dir / "depths", stem, d);
    double sum = 0.0;
    Index n = 0;
    for (Index p = 0; p < d.depth.size(); ++p) {
      if (!d.valid[static_cast<std::size_t>(p)] || !gt.valid[static_cast<std::size_t>(p)]) continue;
      const double e = std::abs(d.depth.data()[p] - gt.depth.data()[p]);
      errors.push_back(e);
      sum += e;
      ++n;
    }
    valid += d.valid_count();
    pixels += d.depth.size();
    ojson v;
    v["view"] = stem;
    v["mean_abs_err"] = n ? j9(sum / static_cast<double>(n)) : ojson(nullptr);
    v["valid_fraction"] = j9(static_cast<double>(d.valid_count()) / static_cast<double>(d.depth.size()));
    views.push_back(v);
  }
  ojson report;
  report["S"] = cfg.render.samples;
  report["sample_spacing"] = j9(cfg.render.spacing());
  double mean = 0.0;
  for (double e : errors) mean += e;
  report["mean_abs_err"] = errors.empty() ? ojson(nullptr) : j9(mean / static_cast<double>(errors.size()));
  report["p95_err"] = errors.empty() ? ojson(nullptr) : j9(percentile(errors, 0.95));
  report["valid_fraction"] = j9(pixels ? static_cast<double>(valid) / static_cast<double>(pixels) : 0.0);
  report["compared_pixels"] = errors.size();
  report["views"] = views;
  write_json(cfg.output_dir / "report.json", report);
  out << report.dump(2) << "\n";
  return kOk;
}

int cmd_selftrain(const ExperimentConfig& cfg, const fs::path& scene_dir, std::ostream& out) {
  const SceneBundle scene = load_scene(scene_dir);
  check_resolution(cfg, scene);
  prepare_output(cfg);
  const SelftrainResult res = selftrain(scene, cfg.selftrain_options());
  io::write_text(cfg.output_dir / "trace.csv", trace_csv(res.trace));
  for (std::size_t i = 0; i < res.depths.size(); ++i)
    write_depth(cfg.output_dir / "depths", view_stem(i, scene.current_time()), res.depths[i]);

  const TraceRow& first = res.trace.front();
  const TraceRow& last = res.trace.back();
  const bool monotone = trailing_monotone(res.trace, 10);
  ojson report;
  report["init"] = to_string(cfg.optimize.init);
  report["steps"] = cfg.optimize.steps;
  report["initial"] = loss_json(first);
  report["final"] = loss_json(last);
  report["total_reduction"] = first.loss.total > 0 ? j9(1.0 - last.loss.total / first.loss.total) : ojson(nullptr);
  report["depth_mae_reduction"] = first.depth_mae > 0 ? j9(1.0 - last.depth_mae / first.depth_mae) : ojson(nullptr);
  report["monotone_tail"] = monotone;
  write_json(cfg.output_dir / "report.json", report);
  out << report.dump(2) << "\n";
  if (!monotone) {
    out << "total loss increased within the last 10 steps\n";
    return kAssertionFailed;
  }
  return kOk;
}

int cmd_eval(const ExperimentConfig& cfg, const fs::path& pred_path, const fs::path& scene_dir, bool visible_only,
             const std::optional<std::array<Index, 3>>& pred_dims, std::ostream& out) {
  const SceneBundle scene = load_scene(scene_dir);
  const auto& gt = scene.grid;
  SemanticOccupancy pred = SemanticOccupancy::AllFree(gt.spec, gt.num_classes);
  pred.labels = io::read_bytes(pred_path);
  const auto n = static_cast<Index>(pred.labels.size());
  if (pred_dims) {
    const auto& d = *pred_dims;
    if (d[0] * d[1] * d[2] != n)
      throw DimensionError("prediction file holds " + std::to_string(n) + " labels but --pred-dims is " +
                           shape_string(d));
    if (d != gt.spec.dims)
      throw DimensionError("prediction grid " + shape_string(d) + " does not match ground truth grid " +
                           shape_string(gt.spec.dims));
  } else if (n != gt.spec.num_voxels()) {
    throw DimensionError("prediction holds " + std::to_string(n) + " labels; ground truth grid " +
                         shape_string(gt.spec.dims) + " has " + std::to_string(gt.spec.num_voxels()));
  }
  prepare_output(cfg);
  const std::span<const std::uint8_t> mask =
      visible_only ? std::span<const std::uint8_t>(scene.visible) : std::span<const std::uint8_t>();
  const EvalResult r = evaluate(pred, gt, mask);
  const std::string csv = metrics_csv(r, scene_class_names());
  io::write_text(cfg.output_dir / "metrics.csv", csv);
  out << csv;
  return kOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Occupancy geometry toolkit: synthetic scenes, depth rendering, self-training and evaluation"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  std::vector<std::string> args;
  bool visible = false;
  std::vector<Index> pred_dims;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON experiment config");
    sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "scene and optimisation seed (overrides scene.seed)");
  };
  auto* gen = app.add_subcommand("gen", "build and save a synthetic scene");
  add_common(gen);
  gen->add_option("overrides", args, "key.path=value config overrides");
  auto* render = app.add_subcommand("render", "render ground-truth density and compare with the ray-march oracle");
  add_common(render);
  render->add_option("args", args, "<scene_dir> [key.path=value ...]")->required();
  auto* train = app.add_subcommand("selftrain", "optimise density with the pretraining loss");
  add_common(train);
  train->add_option("args", args, "<scene_dir> [key.path=value ...]")->required();
  auto* eval = app.add_subcommand("eval", "score a predicted label grid against a scene");
  add_common(eval);
  eval->add_option("args", args, "<pred.raw> <scene_dir> [key.path=value ...]")->required();
  eval->add_flag("--visible", visible, "restrict to voxels visible from the cameras");
  eval->add_option("--pred-dims", pred_dims, "prediction grid extents X,Y,Z")->delimiter(',')->expected(3);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << ojson({{"error", "usage"}, {"message", e.what()}}).dump() << "\n";
    return kUsageError;
  }

  auto fail = [&](const char* kind, const std::exception& e, int code) {
    err << ojson({{"error", kind}, {"message", e.what()}}).dump() << "\n";
    return code;
  };
  try {
    std::vector<std::string> overrides, positional;
    for (const auto& a : args) (a.find('=') != std::string::npos ? overrides : positional).push_back(a);
    CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--seed")) overrides.push_back("scene.seed=" + std::to_string(seed));
    if (sub->count("--out")) overrides.push_back("output_dir=" + ojson(out_dir).dump());
    const ExperimentConfig cfg =
        load_config(config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path), overrides);

    auto expect = [&](std::size_t k, const char* usage) {
      if (positional.size() != k) throw ConfigError(std::string("usage: occgeom ") + usage);
    };
    if (sub == gen) {
      expect(0, "gen [--config f] [--out dir] [--seed n] [key=value ...]");
      return cmd_gen(cfg, out);
    }
    if (sub == render) {
      expect(1, "render <scene_dir> [options]");
      return cmd_render(cfg, positional[0], out);
    }
    if (sub == train) {
      expect(1, "selftrain <scene_dir> [options]");
      return cmd_selftrain(cfg, positional[0], out);
    }
    expect(2, "eval <pred.raw> <scene_dir> [--visible] [--pred-dims X,Y,Z]");
    std::optional<std::array<Index, 3>> dims;
    if (!pred_dims.empty()) dims = std::array<Index, 3>{pred_dims[0], pred_dims[1], pred_dims[2]};
    return cmd_eval(cfg, positional[0], positional[1], visible, dims, out);
  } catch (const ConfigError& e) {
    return fail("config", e, kUsageError);
  } catch (const IoError& e) {
    return fail("io", e, kIoFailure);
  } catch (const NumericError& e) {
    return fail("numeric", e, kNumericFailure);
  } catch (const DimensionError& e) {
    return fail("dimension", e, kUsageError);
  } catch (const DomainError& e) {
    return fail("domain", e, kUsageError);
  } catch (const LookupError& e) {
    return fail("lookup", e, kUsageError);
  } catch (const std::exception& e) {
    return fail("internal", e, kInternalError);
  }
}

}  // namespace occgeom::cli
