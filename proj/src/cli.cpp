#include "splatprobe/cli.hpp"

#include "splatprobe/evaluate.hpp"
#include "splatprobe/gradcheck.hpp"
#include "splatprobe/io.hpp"
#include "splatprobe/synth.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <sstream>

namespace splatprobe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Manifest {
  std::string command;
  json config = json::object();
  std::vector<std::string> outputs;

  void write(const fs::path& dir) const {
    json j;
    j["tool"] = "splatprobe";
    j["command"] = command;
    j["config"] = config;
    j["outputs"] = outputs;
    write_file(dir / "manifest.json", j.dump(2) + "\n");
  }
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::size_t find_view(const SceneBundle& scene, const std::string& key) {
  for (std::size_t i = 0; i < scene.views.size(); ++i) {
    if (scene.views[i].name == key) return i;
  }
  throw UsageError("scene has no view named '" + key + "'");
}

// Per-training-view maps at image resolution, ready for the readout.
std::vector<FeatureMap> probe_inputs(const SceneBundle& scene, const std::string& name, int pca_k) {
  const auto train = scene.train_indices();
  if (train.empty()) throw DataError("scene has no training views");
  const int h = scene.views[train.front()].image.height, w = scene.views[train.front()].image.width;
  std::vector<FeatureMap> raw;
  bool reduced = false;
  if (auto it = scene.feature_files.find(name); it != scene.feature_files.end()) {
    raw = load_feature_set(scene, name);
    reduced = it->second.reduced;
  } else if (name == "iuvrgb") {
    raw = iuvrgb_features(scene.training_images());
  } else {
    throw DataError("scene has no feature set '" + name + "'");
  }
  if (!reduced) return prepare_features(raw, pca_k, h, w).maps;
  for (auto& m : raw) {
    if (m.height != h || m.width != w) m = upsample_bilinear(m, h, w);
  }
  return raw;
}

ProbeModel& snapshot(TrainedState& state, const std::string& which) {
  if (which == "final") return state.model;
  if (which == "warm") return state.warm;
  if (which == "initial") return state.initial;
  throw UsageError("unknown snapshot '" + which + "'");
}

Image gray_image(const std::vector<double>& values, int h, int w) {
  Image img(h, w);
  for (std::size_t p = 0; p < values.size(); ++p) {
    for (int c = 0; c < 3; ++c) img.rgb[p * 3 + c] = values[p];
  }
  return img;
}

// ------------------------------------------------------------------ commands

int cmd_synth(const fs::path& out, const SynthConfig& cfg, std::ostream& os) {
  const SynthScene s = gen_scene(cfg);
  save_scene(s.bundle, out);
  Manifest m;
  m.command = "synth";
  m.config = {{"seed", cfg.seed},          {"gaussians", cfg.n_gaussians}, {"train", cfg.n_train},
              {"test", cfg.n_test},        {"size", cfg.image_size},       {"noise", cfg.init_noise},
              {"outliers", cfg.outlier_frac}, {"radius", cfg.radius},      {"fov", cfg.fov_deg},
              {"elevation", cfg.elevation_deg}};
  for (const auto& e : fs::recursive_directory_iterator(out)) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") {
      m.outputs.push_back(fs::relative(e.path(), out).generic_string());
    }
  }
  std::sort(m.outputs.begin(), m.outputs.end());
  m.write(out);
  os << "synth: " << s.bundle.views.size() << " views, " << s.bundle.init.points.size() << " init points -> "
     << out.string() << "\n";
  return kExitOk;
}

struct FeaturesArgs {
  fs::path scene;
  std::string name;
  bool iuvrgb = false;
  std::vector<std::string> ftz;
  std::string concat;
  std::string order = "desc";
  int pca_k = 0;
};

int cmd_features(const FeaturesArgs& a, std::ostream& os) {
  const int sources = (a.iuvrgb ? 1 : 0) + (a.ftz.empty() ? 0 : 1) + (a.concat.empty() ? 0 : 1);
  if (sources != 1) throw UsageError("features: give exactly one of --iuvrgb, --ftz or --concat");
  SceneBundle scene = load_scene(a.scene);
  const auto train = scene.train_indices();
  const int h = scene.views.at(train.at(0)).image.height, w = scene.views.at(train.at(0)).image.width;
  std::vector<FeatureMap> maps;
  std::vector<std::string> order;
  if (a.iuvrgb) {
    maps = iuvrgb_features(scene.training_images());
  } else if (!a.ftz.empty()) {
    if (a.ftz.size() != train.size()) {
      throw DataError("features: " + std::to_string(a.ftz.size()) + " FTZ files for " +
                      std::to_string(train.size()) + " training views");
    }
    for (std::size_t k = 0; k < a.ftz.size(); ++k) {
      maps.push_back(feature_from_tensor(ftz_read(a.ftz[k]), static_cast<int>(k), a.name));
    }
  } else {
    const ConcatOrder co = a.order == "asc" ? ConcatOrder::Ascending : ConcatOrder::Descending;
    order = order_for_concat(split_list(a.concat), co);
    if (order.size() < 2) throw UsageError("features: --concat needs at least two feature sets");
    std::vector<std::vector<FeatureMap>> sets;
    for (const auto& n : order) sets.push_back(probe_inputs(scene, n, 0));
    for (std::size_t k = 0; k < train.size(); ++k) {
      std::vector<FeatureMap> parts;
      for (const auto& s : sets) parts.push_back(s.at(k));
      maps.push_back(concat_features(parts));
    }
  }
  bool reduced = false;
  if (a.pca_k > 0) {
    PreparedFeatures prep = prepare_features(maps, a.pca_k, h, w);
    maps = std::move(prep.maps);
    reduced = true;
  }
  const fs::path rel_dir = fs::path("features") / a.name;
  fs::create_directories(scene.root / rel_dir);
  FeatureSetRef ref;
  ref.reduced = reduced;
  Manifest m;
  m.command = "features";
  m.config = {{"name", a.name}, {"pca_k", a.pca_k}, {"reduced", reduced}};
  if (a.iuvrgb) m.config["source"] = "iuvrgb";
  if (!a.ftz.empty()) m.config["source"] = "ftz";
  if (!order.empty()) {
    m.config["source"] = "concat";
    m.config["concat"] = order;
    m.config["order"] = a.order;
  }
  for (std::size_t k = 0; k < maps.size(); ++k) {
    const std::string rel = (rel_dir / (scene.views[train[k]].name + ".ftz")).generic_string();
    ftz_write(scene.root / rel, to_tensor(maps[k]));
    ref.files.push_back(rel);
    m.outputs.push_back(rel);
  }
  scene.feature_files[a.name] = ref;
  save_scene_config(scene);
  m.write(scene.root / rel_dir);
  os << "features: '" << a.name << "' " << maps.size() << " views x " << maps.front().channels << " channels"
     << (reduced ? " (reduced)" : "") << "\n";
  return kExitOk;
}

struct ProbeArgs {
  fs::path scene;
  fs::path out;
  std::string features = "iuvrgb";
  std::string mode = "A";
  int warm_iters = 1000;
  int main_iters = 2000;
  bool finetune = false;
  bool fixed_poses = false;
  std::uint64_t seed = 0;
  int pca_k = 16;
  int hidden = kDefaultHidden;
  int threads = 1;
};

int cmd_probe(const ProbeArgs& a, std::ostream& os) {
  const SceneBundle scene = load_scene(a.scene);
  TrainConfig cfg;
  cfg.mode = parse_probe_mode(a.mode);
  cfg.warm_iters = a.warm_iters;
  cfg.main_iters = a.main_iters;
  cfg.finetune_features = a.finetune;
  cfg.optimize_poses = !a.fixed_poses;
  cfg.seed = a.seed;
  cfg.hidden = a.hidden;
  cfg.threads = a.threads;
  cfg.background = scene.background;
  cfg.validate();
  const auto inputs = probe_inputs(scene, a.features, a.pca_k);
  const TrainedState state = train(scene, inputs, cfg, a.features);
  save_state(state, a.out);
  Manifest m;
  m.command = "probe";
  m.config = json::parse(train_config_json(cfg));
  m.config.erase("threads");
  m.config["features"] = a.features;
  m.config["pca_k"] = a.pca_k;
  m.outputs = {"state.json", "history.csv"};
  for (const char* tag : {"initial", "warm", "final"}) {
    for (const char* part : {"mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2", "bank", "features", "twists"}) {
      m.outputs.push_back(std::string(tag) + "." + part + ".ftz");
    }
  }
  m.write(a.out);
  const double last = state.history.empty() ? state.warm_final_loss : state.history.back().loss;
  os << "probe: mode " << mode_letter(cfg.mode) << ", " << state.model.size() << " Gaussians, warm loss "
     << state.warm_initial_loss << " -> " << state.warm_final_loss << ", last loss " << last << " -> "
     << a.out.string() << "\n";
  return kExitOk;
}

struct RenderArgs {
  fs::path state;
  fs::path scene;
  fs::path out;
  std::string view;
  std::string snapshot = "final";
  int threads = 1;
};

int cmd_render(const RenderArgs& a, std::ostream& os) {
  const SceneBundle scene = load_scene(a.scene);
  TrainedState state = load_state(a.state);
  const ProbeModel& model = snapshot(state, a.snapshot);
  const std::size_t vi = find_view(scene, a.view);
  CameraModel cam = scene.views[vi].camera;
  if (scene.views[vi].train) {
    const auto train = scene.train_indices();
    const auto pos = static_cast<std::size_t>(std::find(train.begin(), train.end(), vi) - train.begin());
    cam = training_camera(model, cam, pos);
  }
  const GaussianCloud cloud = decode_cloud(model, a.threads);
  const RenderOutput r = rasterize(cloud, cam, state.config.background, a.threads);
  const DepthNormal dn = render_depth_normal(r, cam);

  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (std::size_t p = 0; p < dn.depth.size(); ++p) {
    if (r.alpha_accum[p] < 0.5) continue;
    lo = any ? std::min(lo, dn.depth[p]) : dn.depth[p];
    hi = any ? std::max(hi, dn.depth[p]) : dn.depth[p];
    any = true;
  }
  std::vector<double> depth01(dn.depth.size(), 0.0);
  for (std::size_t p = 0; p < dn.depth.size(); ++p) {
    if (r.alpha_accum[p] >= 0.5 && hi > lo) depth01[p] = 1.0 - (dn.depth[p] - lo) / (hi - lo);
  }
  Image normal(r.height, r.width);
  for (std::size_t p = 0; p < dn.normals.size(); ++p) {
    for (int c = 0; c < 3; ++c) normal.rgb[p * 3 + c] = r.alpha_accum[p] >= 0.5 ? 0.5 * (dn.normals[p][c] + 1.0) : 0.0;
  }
  fs::create_directories(a.out);
  const std::string base = scene.views[vi].name;
  const std::vector<std::string> files = {base + "_rgb.png", base + "_depth.png", base + "_normal.png"};
  image_write(a.out / files[0], to_image(r));
  image_write(a.out / files[1], gray_image(depth01, r.height, r.width));
  image_write(a.out / files[2], normal);
  Manifest m;
  m.command = "render";
  m.config = {{"view", a.view}, {"snapshot", a.snapshot}, {"depth_near", lo}, {"depth_far", hi}};
  m.outputs = files;
  m.write(a.out);
  os << "render: " << base << " -> " << a.out.string() << "\n";
  return kExitOk;
}

struct EvalArgs {
  fs::path state;
  fs::path scene;
  fs::path out;
  bool refine_pose = false;
  int refine_iters = 500;
  std::string pre_state = "warm";
  std::string scene_name;
  int threads = 1;
};

int cmd_eval(const EvalArgs& a, std::ostream& os) {
  const SceneBundle scene = load_scene(a.scene);
  const TrainedState state = load_state(a.state);
  EvalOptions eo;
  eo.refine_pose = a.refine_pose;
  eo.refine.iters = a.refine_iters;
  eo.refine.lr.horizon = a.refine_iters;
  eo.refine.background = state.config.background;
  eo.refine.threads = a.threads;
  eo.threads = a.threads;
  eo.pre_state = a.pre_state == "initial" ? PreState::Initial : PreState::WarmStarted;
  eo.scene_name = a.scene_name.empty() ? scene.root.filename().string() : a.scene_name;
  const MetricReport report = evaluate(scene, state, eo);
  fs::create_directories(a.out);
  write_file(a.out / "metrics.csv", report_csv(report));
  write_file(a.out / "metrics.json", report_json(report));
  Manifest m;
  m.command = "eval";
  m.config = {{"refine_pose", a.refine_pose}, {"refine_iters", a.refine_iters}, {"pre_state", a.pre_state},
              {"scene_name", eo.scene_name}, {"feature", state.feature_tag}, {"mode", to_string(state.config.mode)}};
  m.outputs = {"metrics.csv", "metrics.json"};
  m.write(a.out);
  char line[160];
  std::snprintf(line, sizeof line, "eval: %zu test views, PSNR %.3f dB (pre %.3f), SSIM %.4f\n", report.views.size(),
                report.mean_psnr, report.mean_psnr_pre, report.mean_ssim);
  os << line;
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& runs, const fs::path& out, std::ostream& os) {
  std::vector<ViewMetrics> rows;
  for (const auto& r : runs) {
    fs::path p = r;
    if (fs::is_directory(p)) p /= "metrics.csv";
    const auto part = parse_report_csv(read_file(p));
    rows.insert(rows.end(), part.begin(), part.end());
  }
  const AggregateTable table = aggregate_reports(rows);
  fs::create_directories(out);
  const std::vector<std::string> files = {"table.csv", "ranks.csv", "correlation.csv", "spider.csv"};
  write_file(out / files[0], table_csv(table));
  write_file(out / files[1], ranks_csv(table));
  write_file(out / files[2], correlation_csv(table));
  write_file(out / files[3], spider_csv(table));
  Manifest m;
  m.command = "report";
  m.config = {{"runs", runs.size()}, {"rows", rows.size()}};
  m.outputs = files;
  m.write(out);
  os << "report: " << table.features.size() << " features x " << table.metrics.size() << " metrics -> "
     << out.string() << "\n";
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, int count, std::ostream& os) {
  bool ok = true;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
    const GradCheckReport rep = gradcheck_scene(s);
    char line[160];
    std::snprintf(line, sizeof line, "gradcheck seed %llu: max relative error %.3e, %s\n",
                  static_cast<unsigned long long>(s), rep.max_rel_error(), rep.passed() ? "pass" : "FAIL");
    os << line;
    if (!rep.passed()) {
      for (const auto& g : rep.groups) {
        if (g.failures == 0) continue;
        os << "  " << g.name << ": " << g.failures << "/" << g.checked << " entries, max " << g.max_rel_error << "\n";
      }
    }
    ok = ok && rep.passed();
  }
  return ok ? kExitOk : kExitNumerical;
}

}  // namespace

int default_threads() {
  const char* env = std::getenv("SPLATPROBE_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw UsageError(std::string("SPLATPROBE_THREADS must be a positive integer, got '") + env + "'");
  return static_cast<int>(v);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Probe per-pixel visual features by reading them out into Gaussian splats."};
  app.name(args.empty() ? "splatprobe" : fs::path(args.front()).filename().string());
  app.require_subcommand(1);

  int threads = 1;
  try {
    threads = default_threads();
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  const auto threads_opt = [&](CLI::App* sub) {
    sub->add_option("--threads", threads, "Renderer workers (SPLATPROBE_THREADS)")->check(CLI::PositiveNumber);
  };

  fs::path synth_out;
  SynthConfig synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate an oracle scene bundle");
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--gaussians", synth.n_gaussians)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--train", synth.n_train)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--test", synth.n_test)->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--size", synth.image_size)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--noise", synth.init_noise, "Init-point noise std-dev")->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--outliers", synth.outlier_frac)->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--radius", synth.radius)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--fov", synth.fov_deg)->check(CLI::Range(1.0, 179.0));
  synth_cmd->add_option("--elevation", synth.elevation_deg);

  FeaturesArgs feat;
  auto* feat_cmd = app.add_subcommand("features", "Register a feature set with a scene");
  feat_cmd->add_option("--scene", feat.scene)->required();
  feat_cmd->add_option("--name", feat.name, "Feature-set name")->required();
  feat_cmd->add_flag("--iuvrgb", feat.iuvrgb, "Image index, pixel coordinates and colour");
  feat_cmd->add_option("--ftz", feat.ftz, "One H x W x C FTZ per training view");
  feat_cmd->add_option("--concat", feat.concat, "Registered sets, best first: a,b,c");
  feat_cmd->add_option("--order", feat.order)->check(CLI::IsMember({"desc", "asc"}));
  feat_cmd->add_option("--pca-k", feat.pca_k, "Standardize and reduce to k channels")->check(CLI::PositiveNumber);

  ProbeArgs probe;
  auto* probe_cmd = app.add_subcommand("probe", "Warm-start and train a readout");
  probe_cmd->add_option("--scene", probe.scene)->required();
  probe_cmd->add_option("--out", probe.out, "State directory")->required();
  probe_cmd->add_option("--features", probe.features);
  probe_cmd->add_option("--mode", probe.mode)->check(CLI::IsMember({"G", "T", "A"}));
  probe_cmd->add_option("--warm-iters", probe.warm_iters)->check(CLI::NonNegativeNumber);
  probe_cmd->add_option("--main-iters", probe.main_iters)->check(CLI::NonNegativeNumber);
  probe_cmd->add_flag("--finetune-features", probe.finetune);
  probe_cmd->add_flag("--fixed-poses", probe.fixed_poses, "Do not refine training poses");
  probe_cmd->add_option("--seed", probe.seed);
  probe_cmd->add_option("--pca-k", probe.pca_k)->check(CLI::PositiveNumber);
  probe_cmd->add_option("--hidden", probe.hidden)->check(CLI::PositiveNumber);
  threads_opt(probe_cmd);

  RenderArgs render;
  auto* render_cmd = app.add_subcommand("render", "Write rgb, depth and normal PNGs for one view");
  render_cmd->add_option("--state", render.state)->required();
  render_cmd->add_option("--scene", render.scene)->required();
  render_cmd->add_option("--view", render.view)->required();
  render_cmd->add_option("--out", render.out)->required();
  render_cmd->add_option("--snapshot", render.snapshot)->check(CLI::IsMember({"initial", "warm", "final"}));
  threads_opt(render_cmd);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score held-out views");
  eval_cmd->add_option("--state", ev.state)->required();
  eval_cmd->add_option("--scene", ev.scene)->required();
  eval_cmd->add_option("--out", ev.out)->required();
  eval_cmd->add_flag("--refine-pose", ev.refine_pose);
  eval_cmd->add_option("--refine-iters", ev.refine_iters)->check(CLI::NonNegativeNumber);
  eval_cmd->add_option("--pre-state", ev.pre_state)->check(CLI::IsMember({"initial", "warm"}));
  eval_cmd->add_option("--scene-name", ev.scene_name);
  threads_opt(eval_cmd);

  std::vector<std::string> runs;
  fs::path report_out;
  auto* report_cmd = app.add_subcommand("report", "Aggregate metric CSVs");
  report_cmd->add_option("--runs", runs, "metrics.csv files or eval directories")->required();
  report_cmd->add_option("--out", report_out)->required();

  std::uint64_t gc_seed = 0;
  int gc_count = 1;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gc_cmd->add_option("--seed", gc_seed);
  gc_cmd->add_option("--count", gc_count, "Consecutive seeds")->check(CLI::PositiveNumber);

  std::vector<const char*> argv;
  argv.push_back(args.empty() ? "splatprobe" : args.front().c_str());
  for (std::size_t i = 1; i < args.size(); ++i) argv.push_back(args[i].c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    CLI::App* failed = &app;
    for (auto* sub : app.get_subcommands()) failed = sub;
    err << failed->help();
    return kExitUsage;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(synth_out, synth, out);
    if (feat_cmd->parsed()) return cmd_features(feat, out);
    if (probe_cmd->parsed()) {
      probe.threads = threads;
      return cmd_probe(probe, out);
    }
    if (render_cmd->parsed()) {
      render.threads = threads;
      return cmd_render(render, out);
    }
    if (eval_cmd->parsed()) {
      ev.threads = threads;
      return cmd_eval(ev, out);
    }
    if (report_cmd->parsed()) return cmd_report(runs, report_out, out);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc_seed, gc_count, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace splatprobe
