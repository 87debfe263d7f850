#include "splatprobe/evaluate.hpp"

#include "splatprobe/loss.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace splatprobe {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::vector<std::vector<double>> init_depth_maps(const SceneBundle& scene) {
  std::vector<std::vector<double>> out;
  std::size_t offset = 0;
  for (const auto& cam : scene.training_cameras()) {
    const std::size_t pixels = static_cast<std::size_t>(cam.width) * cam.height;
    std::vector<double> depth(pixels);
    for (std::size_t p = 0; p < pixels; ++p) depth[p] = cam.to_camera(scene.init.points.at(offset + p)).z();
    offset += pixels;
    out.push_back(std::move(depth));
  }
  return out;
}

Mask build_valid_mask(const std::vector<CameraModel>& train_cams, const std::vector<std::vector<double>>& ref_depth,
                      const CameraModel& view, const RenderOutput& render, double alpha_min, double depth_tolerance) {
  Mask mask(render.height, render.width, false);
  for (int y = 0; y < render.height; ++y) {
    for (int x = 0; x < render.width; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * render.width + x;
      if (render.alpha_accum[p] < alpha_min) continue;
      const Vec3 world = view.unproject(x + 0.5, y + 0.5, render.expected_depth[p]);
      for (std::size_t k = 0; k < train_cams.size(); ++k) {
        const CameraModel& cam = train_cams[k];
        const Vec3 t = cam.to_camera(world);
        if (t.z() <= cam.near) continue;
        const double u = cam.fx * t.x() / t.z() + cam.cx;
        const double v = cam.fy * t.y() / t.z() + cam.cy;
        if (!(u >= 0.0 && u < cam.width && v >= 0.0 && v < cam.height)) continue;
        if (k < ref_depth.size() && !ref_depth[k].empty()) {
          const std::size_t q = static_cast<std::size_t>(std::floor(v)) * cam.width + static_cast<std::size_t>(std::floor(u));
          const double ref = ref_depth[k][q];
          if (!(ref > 0.0) || std::abs(t.z() - ref) > depth_tolerance * ref) continue;
        }
        mask.valid[p] = 1;
        break;
      }
    }
  }
  return mask;
}

MetricReport evaluate(const SceneBundle& scene, const TrainedState& state, const EvalOptions& options) {
  MetricReport report;
  const auto tests = scene.test_indices();
  if (tests.empty()) throw DataError("scene has no test views");
  if (!options.test_cameras.empty() && options.test_cameras.size() != tests.size()) {
    throw DataError("replacement test cameras do not match the test split");
  }
  const GaussianCloud cloud = decode_cloud(state.model, options.threads);
  const GaussianCloud pre_cloud =
      decode_cloud(options.pre_state == PreState::Initial ? state.initial : state.warm, options.threads);
  const auto bases = scene.training_cameras();
  std::vector<CameraModel> train_cams;
  for (std::size_t v = 0; v < bases.size(); ++v) train_cams.push_back(training_camera(state.model, bases[v], v));
  const auto ref_depth = init_depth_maps(scene);
  const Vec3 bg = state.config.background;

  for (std::size_t k = 0; k < tests.size(); ++k) {
    const SceneView& view = scene.views[tests[k]];
    const CameraModel given = options.test_cameras.empty() ? view.camera : options.test_cameras[k];
    ViewMetrics m;
    m.scene = options.scene_name;
    m.feature = state.feature_tag;
    m.mode = std::string(1, mode_letter(state.config.mode));
    m.view = view.name;
    CameraModel cam = given;
    const RenderOutput unrefined = rasterize(cloud, given, bg, options.threads);
    if (options.refine_pose) {
      PoseRefineConfig rc = options.refine;
      rc.background = bg;
      rc.threads = options.threads;
      cam = pose_refine_test(cloud, given, view.image, rc).camera;
    }
    m.pose_rotation_deg = rotation_angle_deg(cam, view.camera);
    const RenderOutput render = options.refine_pose ? rasterize(cloud, cam, bg, options.threads) : unrefined;
    const Mask mask = build_valid_mask(train_cams, ref_depth, cam, render);
    m.mask_coverage = mask.coverage();
    const Image img = to_image(render);
    m.psnr_db = psnr(img, view.image, &mask);
    m.ssim = ssim(img, view.image, &mask);
    m.psnr_unrefined_db = psnr(to_image(unrefined), view.image, &mask);
    const Image pre = to_image(rasterize(pre_cloud, cam, bg, options.threads));
    m.psnr_pre_db = psnr(pre, view.image, &mask);
    m.ssim_pre = ssim(pre, view.image, &mask);
    report.views.push_back(m);
  }
  for (const auto& v : report.views) {
    report.mean_psnr += v.psnr_db / report.views.size();
    report.mean_ssim += v.ssim / report.views.size();
    report.mean_psnr_pre += v.psnr_pre_db / report.views.size();
  }
  if (!scene.gt_points.empty()) {
    std::vector<std::int64_t> matching(cloud.size());
    for (std::size_t i = 0; i < matching.size(); ++i) matching[i] = static_cast<std::int64_t>(i);
    report.cloud = cloud_metrics(cloud.positions, scene.gt_points, matching, options.threads);
  }
  return report;
}

std::string report_csv(const MetricReport& report) {
  std::string out = "scene,feature,mode,view,psnr_db,ssim,lpips,mask_coverage\n";
  for (const auto& v : report.views) {
    out += v.scene + "," + v.feature + "," + v.mode + "," + v.view + "," + num(v.psnr_db) + "," + num(v.ssim) + "," +
           (v.lpips ? num(*v.lpips) : "") + "," + num(v.mask_coverage) + "\n";
  }
  return out;
}

std::string report_json(const MetricReport& report) {
  nlohmann::json j;
  j["mean_psnr_db"] = report.mean_psnr;
  j["mean_ssim"] = report.mean_ssim;
  j["mean_psnr_pre_db"] = report.mean_psnr_pre;
  j["views"] = nlohmann::json::array();
  for (const auto& v : report.views) {
    j["views"].push_back({{"scene", v.scene}, {"feature", v.feature}, {"mode", v.mode}, {"view", v.view},
                          {"psnr_db", v.psnr_db}, {"ssim", v.ssim}, {"mask_coverage", v.mask_coverage},
                          {"psnr_pre_db", v.psnr_pre_db}, {"ssim_pre", v.ssim_pre},
                          {"psnr_unrefined_db", v.psnr_unrefined_db}, {"pose_rotation_deg", v.pose_rotation_deg}});
  }
  if (report.cloud) {
    j["cloud"] = {{"accuracy", report.cloud->accuracy}, {"completeness", report.cloud->completeness}};
    if (report.cloud->distance) j["cloud"]["distance"] = *report.cloud->distance;
  }
  return j.dump(2) + "\n";
}

std::vector<ViewMetrics> parse_report_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("report CSV is empty");
  const auto header = split_csv(line);
  auto col = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    throw DataError("report CSV lacks column '" + name + "'");
  };
  const int c_scene = col("scene"), c_feature = col("feature"), c_mode = col("mode"), c_view = col("view"),
            c_psnr = col("psnr_db"), c_ssim = col("ssim"), c_lpips = col("lpips"), c_cov = col("mask_coverage");
  std::vector<ViewMetrics> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size()) throw DataError("report CSV line " + std::to_string(line_no) + " has the wrong field count");
    ViewMetrics m;
    try {
      m.scene = f[c_scene];
      m.feature = f[c_feature];
      m.mode = f[c_mode];
      m.view = f[c_view];
      m.psnr_db = std::stod(f[c_psnr]);
      m.ssim = std::stod(f[c_ssim]);
      if (!f[c_lpips].empty()) m.lpips = std::stod(f[c_lpips]);
      m.mask_coverage = std::stod(f[c_cov]);
    } catch (const std::logic_error&) {
      throw DataError("report CSV line " + std::to_string(line_no) + ": malformed number");
    }
    rows.push_back(m);
  }
  return rows;
}

AggregateTable aggregate_reports(const std::vector<ViewMetrics>& rows) {
  AggregateTable t;
  std::set<std::string> features, modes;
  struct Acc {
    double psnr = 0, ssim = 0, lpips = 0;
    int n = 0, n_lpips = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> acc;
  for (const auto& r : rows) {
    features.insert(r.feature);
    modes.insert(r.mode);
    Acc& a = acc[{r.feature, r.mode}];
    a.psnr += r.psnr_db;
    a.ssim += r.ssim;
    ++a.n;
    if (r.lpips) {
      a.lpips += *r.lpips;
      ++a.n_lpips;
    }
  }
  t.features.assign(features.begin(), features.end());
  bool all_lpips = !rows.empty();
  for (const auto& r : rows) all_lpips = all_lpips && r.lpips.has_value();
  for (const auto& m : modes) {
    t.metrics.push_back(m + ".psnr_db");
    t.metrics.push_back(m + ".ssim");
    if (all_lpips) t.metrics.push_back(m + ".lpips");
  }
  for (const auto& f : t.features) {
    std::vector<double> row;
    for (const auto& m : modes) {
      const auto it = acc.find({f, m});
      if (it == acc.end()) throw DataError("report: feature '" + f + "' has no runs in mode " + m);
      row.push_back(it->second.psnr / it->second.n);
      row.push_back(it->second.ssim / it->second.n);
      if (all_lpips) row.push_back(it->second.lpips / it->second.n_lpips);
    }
    t.values.push_back(row);
  }
  std::vector<MetricDirection> dirs;
  for (const auto& m : t.metrics) dirs.push_back(metric_direction(m));
  t.ranks = rank_cells(t.values, dirs);
  if (t.features.size() >= 2) {
    std::vector<LabeledVector> cols;
    for (std::size_t c = 0; c < t.metrics.size(); ++c) {
      LabeledVector v{t.metrics[c], {}};
      for (const auto& row : t.values) v.values.push_back(row[c]);
      cols.push_back(v);
    }
    t.correlation = pearson_matrix(cols);
  }
  return t;
}

std::string table_csv(const AggregateTable& t) {
  std::string out = "feature";
  for (const auto& m : t.metrics) out += "," + m;
  out += "\n";
  for (std::size_t r = 0; r < t.features.size(); ++r) {
    out += t.features[r];
    for (double v : t.values[r]) out += "," + num(v);
    out += "\n";
  }
  return out;
}

std::string ranks_csv(const AggregateTable& t) {
  std::string out = "feature";
  for (const auto& m : t.metrics) out += "," + m;
  out += "\n";
  for (std::size_t r = 0; r < t.features.size(); ++r) {
    out += t.features[r];
    for (int v : t.ranks[r]) out += "," + std::to_string(v);
    out += "\n";
  }
  return out;
}

std::string correlation_csv(const AggregateTable& t) {
  std::string out = "metric";
  for (const auto& l : t.correlation.labels) out += "," + l;
  out += "\n";
  for (std::size_t r = 0; r < t.correlation.labels.size(); ++r) {
    out += t.correlation.labels[r];
    for (std::size_t c = 0; c < t.correlation.labels.size(); ++c) {
      out += "," + num(t.correlation.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
    }
    out += "\n";
  }
  return out;
}

std::string spider_csv(const AggregateTable& t) {
  std::string out = "feature,metric,value,score\n";
  for (std::size_t c = 0; c < t.metrics.size(); ++c) {
    double lo = t.values.empty() ? 0.0 : t.values[0][c], hi = lo;
    for (const auto& row : t.values) {
      lo = std::min(lo, row[c]);
      hi = std::max(hi, row[c]);
    }
    const bool higher = metric_direction(t.metrics[c]) == MetricDirection::HigherIsBetter;
    for (std::size_t r = 0; r < t.features.size(); ++r) {
      const double v = t.values[r][c];
      double score = hi > lo ? (v - lo) / (hi - lo) : 1.0;
      if (!higher && hi > lo) score = 1.0 - score;
      out += t.features[r] + "," + t.metrics[c] + "," + num(v) + "," + num(score) + "\n";
    }
  }
  return out;
}

}  // namespace splatprobe
