#include "splatprobe/io.hpp"

#include "json.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace splatprobe {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

// ---------------------------------------------------------------- FTZ

namespace {

constexpr char kMagic[4] = {'F', '2', 'G', 'S'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= static_cast<std::size_t>(d);
  return n;
}

std::string ftz_encode(const Tensor& t) {
  if (t.dims.size() > 255) throw DataError("ftz: at most 255 dimensions");
  if (t.data.size() != t.element_count()) throw DataError("ftz: data length does not match dims");
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(kFtzVersion));
  out.push_back(static_cast<char>(t.dtype));
  out.push_back(static_cast<char>(t.dims.size()));
  for (auto d : t.dims) put_u64(out, d);
  const std::size_t width = t.dtype == FtzDtype::F32 ? 4 : 8;
  out.reserve(out.size() + width * t.data.size());
  for (double v : t.data) {
    if (t.dtype == FtzDtype::F32) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    } else {
      put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  return out;
}

Tensor ftz_decode(const std::string& in) {
  if (in.size() < 7) throw FormatError("ftz: header truncated at offset " + std::to_string(in.size()) + " (need 7 bytes)");
  if (std::memcmp(in.data(), kMagic, 4) != 0) throw FormatError("ftz: bad magic at offset 0 (expected \"F2GS\")");
  const auto version = static_cast<std::uint8_t>(in[4]);
  if (version != kFtzVersion) throw FormatError("ftz: unsupported version " + std::to_string(version) + " at offset 4");
  const auto dtype = static_cast<std::uint8_t>(in[5]);
  if (dtype > 1) throw FormatError("ftz: unknown dtype " + std::to_string(dtype) + " at offset 5");
  const std::size_t ndim = static_cast<std::uint8_t>(in[6]);
  const std::size_t header = 7 + 8 * ndim;
  if (in.size() < header) {
    throw FormatError("ftz: dims truncated at offset " + std::to_string(in.size()) + " (need " + std::to_string(header) +
                      " header bytes)");
  }
  Tensor t;
  t.dtype = static_cast<FtzDtype>(dtype);
  for (std::size_t i = 0; i < ndim; ++i) t.dims.push_back(get_u64(in, 7 + 8 * i));
  const std::size_t width = t.dtype == FtzDtype::F32 ? 4 : 8;
  const std::size_t expected = width * t.element_count();
  const std::size_t actual = in.size() - header;
  if (actual != expected) {
    throw FormatError("ftz: payload at offset " + std::to_string(header) + " has " + std::to_string(actual) +
                      " bytes, expected " + std::to_string(expected));
  }
  t.data.resize(t.element_count());
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    const std::size_t at = header + width * i;
    if (t.dtype == FtzDtype::F32) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
      t.data[i] = std::bit_cast<float>(bits);
    } else {
      t.data[i] = std::bit_cast<double>(get_u64(in, at));
    }
  }
  return t;
}

void ftz_write(const fs::path& path, const Tensor& t) { write_file(path, ftz_encode(t)); }

Tensor ftz_read(const fs::path& path) {
  try {
    return ftz_decode(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Tensor to_tensor(const FeatureMap& map, FtzDtype dtype) {
  Tensor t;
  t.dtype = dtype;
  t.dims = {static_cast<std::uint64_t>(map.height), static_cast<std::uint64_t>(map.width),
            static_cast<std::uint64_t>(map.channels)};
  t.data = map.data;
  return t;
}

FeatureMap feature_from_tensor(const Tensor& t, int view_id, const std::string& source_tag) {
  if (t.dims.size() != 3) throw FormatError("feature tensor must be H x W x C, got " + std::to_string(t.dims.size()) + " dims");
  FeatureMap m;
  m.view_id = view_id;
  m.height = static_cast<int>(t.dims[0]);
  m.width = static_cast<int>(t.dims[1]);
  m.channels = static_cast<int>(t.dims[2]);
  m.data = t.data;
  m.source_tag = source_tag;
  m.validate();
  return m;
}

Tensor to_tensor(const RowMatrix& m) {
  Tensor t;
  t.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  t.data.assign(m.data(), m.data() + m.size());
  return t;
}

RowMatrix matrix_from_tensor(const Tensor& t) {
  if (t.dims.size() != 2) throw FormatError("expected a 2-d tensor");
  RowMatrix m(static_cast<Eigen::Index>(t.dims[0]), static_cast<Eigen::Index>(t.dims[1]));
  std::copy(t.data.begin(), t.data.end(), m.data());
  return m;
}

Tensor to_tensor(const Vector& v) {
  Tensor t;
  t.dims = {static_cast<std::uint64_t>(v.size())};
  t.data.assign(v.data(), v.data() + v.size());
  return t;
}

Vector vector_from_tensor(const Tensor& t) {
  if (t.dims.size() != 1) throw FormatError("expected a 1-d tensor");
  Vector v(static_cast<Eigen::Index>(t.dims[0]));
  std::copy(t.data.begin(), t.data.end(), v.data());
  return v;
}

// ---------------------------------------------------------------- PLY

namespace {

std::string format_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string ply_encode(const std::vector<Vec3>& points, const std::vector<Vec3>& colors) {
  if (colors.size() != points.size()) throw DataError("ply: point and colour counts differ");
  std::string out = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(points.size()) +
                    "\nproperty double x\nproperty double y\nproperty double z\n"
                    "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    out += format_coord(points[i].x()) + " " + format_coord(points[i].y()) + " " + format_coord(points[i].z());
    for (int c = 0; c < 3; ++c) out += " " + std::to_string(static_cast<int>(to_byte(colors[i][c])));
    out += "\n";
  }
  return out;
}

PlyCloud ply_decode(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "ply") throw FormatError("ply: missing 'ply' magic line");
  std::size_t count = 0;
  bool have_vertex = false, in_vertex = false;
  std::vector<std::string> props;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      std::string kind, ver;
      ls >> kind >> ver;
      if (kind != "ascii") throw FormatError("ply: only ascii format is supported (line " + std::to_string(line_no) + ")");
    } else if (key == "comment" || key == "obj_info" || key.empty()) {
      continue;
    } else if (key == "element") {
      std::string name;
      std::size_t n = 0;
      ls >> name >> n;
      if (name != "vertex") {
        throw FormatError("ply: unsupported element '" + name + "' (line " + std::to_string(line_no) + ")");
      }
      have_vertex = true;
      in_vertex = true;
      count = n;
    } else if (key == "property") {
      std::string type, name;
      ls >> type >> name;
      if (!in_vertex) throw FormatError("ply: property outside an element (line " + std::to_string(line_no) + ")");
      if (type == "list") throw FormatError("ply: list properties are not supported (line " + std::to_string(line_no) + ")");
      props.push_back(name);
    } else if (key == "end_header") {
      break;
    } else {
      throw FormatError("ply: unexpected header line " + std::to_string(line_no) + ": " + line);
    }
  }
  if (!have_vertex) throw FormatError("ply: no vertex element");
  auto index_of = [&](const std::string& n) -> int {
    for (std::size_t i = 0; i < props.size(); ++i) {
      if (props[i] == n) return static_cast<int>(i);
    }
    return -1;
  };
  const int ix = index_of("x"), iy = index_of("y"), iz = index_of("z");
  if (ix < 0 || iy < 0 || iz < 0) throw FormatError("ply: vertex element lacks x/y/z");
  const int ir = index_of("red"), ig = index_of("green"), ib = index_of("blue");
  PlyCloud out;
  out.missing_color = ir < 0 || ig < 0 || ib < 0;
  out.points.reserve(count);
  out.colors.reserve(count);
  std::vector<double> values(props.size());
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) {
      throw FormatError("ply: expected " + std::to_string(count) + " vertices, found " + std::to_string(i));
    }
    std::istringstream ls(line);
    for (auto& v : values) {
      if (!(ls >> v)) throw FormatError("ply: malformed vertex " + std::to_string(i));
    }
    out.points.emplace_back(values[ix], values[iy], values[iz]);
    if (out.missing_color) {
      out.colors.emplace_back(0.5, 0.5, 0.5);
    } else {
      out.colors.emplace_back(values[ir] / 255.0, values[ig] / 255.0, values[ib] / 255.0);
    }
  }
  return out;
}

void ply_write(const fs::path& path, const std::vector<Vec3>& points, const std::vector<Vec3>& colors) {
  write_file(path, ply_encode(points, colors));
}

PlyCloud ply_read(const fs::path& path) {
  try {
    return ply_decode(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- images

std::uint8_t to_byte(double value) {
  const double v = std::clamp(value, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

Image quantize(const Image& image) {
  Image out = image;
  for (double& v : out.rgb) v = to_byte(v) / 255.0;
  return out;
}

namespace {

bool is_ppm(const fs::path& path) {
  const auto ext = path.extension().string();
  return ext == ".ppm" || ext == ".PPM";
}

Image read_ppm(const fs::path& path) {
  const std::string bytes = read_file(path);
  std::istringstream in(bytes);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w < 1 || h < 1) throw FormatError(path.string() + ": not a binary PPM");
  if (maxval != 255) throw FormatError(path.string() + ": unsupported PPM depth (maxval " + std::to_string(maxval) + ")");
  in.get();
  const std::size_t start = static_cast<std::size_t>(in.tellg());
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() < start + need) throw FormatError(path.string() + ": PPM payload truncated");
  Image img(h, w);
  for (std::size_t i = 0; i < need; ++i) img.rgb[i] = static_cast<unsigned char>(bytes[start + i]) / 255.0;
  return img;
}

void write_ppm(const fs::path& path, const Image& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  for (double v : img.rgb) out.push_back(static_cast<char>(to_byte(v)));
  write_file(path, out);
}

}  // namespace

Image image_read(const fs::path& path) {
  if (is_ppm(path)) return read_ppm(path);
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.string().c_str())) {
    throw FormatError(path.string() + ": " + png.message);
  }
  if (png.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&png);
    throw FormatError(path.string() + ": unsupported bit depth 16 (8-bit images only)");
  }
  png.format = PNG_FORMAT_RGBA;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    throw FormatError(path.string() + ": " + png.message);
  }
  Image img(static_cast<int>(png.height), static_cast<int>(png.width));
  const std::size_t pixels = static_cast<std::size_t>(img.height) * img.width;
  for (std::size_t p = 0; p < pixels; ++p) {
    for (int c = 0; c < 3; ++c) img.rgb[p * 3 + c] = buf[p * 4 + c] / 255.0;
  }
  return img;
}

void image_write(const fs::path& path, const Image& img) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (is_ppm(path)) return write_ppm(path, img);
  std::vector<png_byte> buf(img.rgb.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_byte(img.rgb[i]);
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
    throw DataError(path.string() + ": " + png.message);
  }
}

// ---------------------------------------------------------------- scene JSON

namespace {

json camera_json(const CameraModel& c) {
  return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width}, {"height", c.height},
          {"rotation", {c.rotation[0], c.rotation[1], c.rotation[2], c.rotation[3]}},
          {"translation", {c.translation[0], c.translation[1], c.translation[2]}}, {"near", c.near}};
}

CameraModel camera_from_json(const json& j) {
  CameraModel c;
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  const auto q = j.at("rotation").get<std::vector<double>>();
  const auto t = j.at("translation").get<std::vector<double>>();
  if (q.size() != 4 || t.size() != 3) throw FormatError("camera rotation/translation have the wrong length");
  c.rotation = Vec4(q[0], q[1], q[2], q[3]);
  c.translation = Vec3(t[0], t[1], t[2]);
  c.near = j.value("near", 0.01);
  c.validate();
  return c;
}

json scene_json(const SceneBundle& b) {
  json j;
  j["format"] = "splatprobe-scene";
  j["version"] = kSceneVersion;
  j["background"] = {b.background[0], b.background[1], b.background[2]};
  j["views"] = json::array();
  for (const auto& v : b.views) {
    j["views"].push_back({{"name", v.name}, {"image", v.image_path}, {"split", v.train ? "train" : "test"},
                          {"camera", camera_json(v.camera)}});
  }
  j["init_cloud"] = b.init_path;
  json feats = json::object();
  for (const auto& [name, ref] : b.feature_files) feats[name] = {{"files", ref.files}, {"reduced", ref.reduced}};
  j["features"] = feats;
  if (!b.gt_points_path.empty()) j["gt_cloud"] = b.gt_points_path;
  if (!b.gt_depth_paths.empty()) j["gt_depth"] = b.gt_depth_paths;
  return j;
}

}  // namespace

SceneBundle load_scene(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "scene.json" : path;
  if (!fs::exists(file)) throw DataError("scene config not found: " + file.string());
  SceneBundle b;
  b.root = file.parent_path();
  json j;
  try {
    j = json::parse(read_file(file));
  } catch (const json::exception& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
  try {
    const int version = j.at("version").get<int>();
    if (version != kSceneVersion) throw FormatError(file.string() + ": unsupported scene version " + std::to_string(version));
    if (j.contains("background")) {
      const auto bg = j["background"].get<std::vector<double>>();
      if (bg.size() != 3) throw FormatError("background must have three entries");
      b.background = Vec3(bg[0], bg[1], bg[2]);
    }
    for (const auto& jv : j.at("views")) {
      SceneView v;
      v.name = jv.at("name").get<std::string>();
      v.image_path = jv.at("image").get<std::string>();
      const std::string split = jv.at("split").get<std::string>();
      if (split != "train" && split != "test") throw FormatError("view '" + v.name + "': split must be train or test");
      v.train = split == "train";
      v.camera = camera_from_json(jv.at("camera"));
      const fs::path img = b.root / v.image_path;
      if (!fs::exists(img)) throw DataError("view '" + v.name + "': image file missing: " + img.string());
      v.image = image_read(img);
      b.views.push_back(std::move(v));
    }
    b.init_path = j.at("init_cloud").get<std::string>();
    PlyCloud init = ply_read(b.root / b.init_path);
    if (init.missing_color) b.warnings.push_back("init cloud has no colour properties; using mid-gray");
    b.init.points = std::move(init.points);
    b.init.colors = std::move(init.colors);
    const auto train = b.train_indices();
    if (j.contains("features")) {
      for (const auto& [name, jf] : j["features"].items()) {
        FeatureSetRef ref;
        if (jf.is_array()) {
          ref.files = jf.get<std::vector<std::string>>();
        } else {
          ref.files = jf.at("files").get<std::vector<std::string>>();
          ref.reduced = jf.value("reduced", false);
        }
        for (std::size_t k = 0; k < ref.files.size(); ++k) {
          if (!fs::exists(b.root / ref.files[k])) {
            const std::string view = k < train.size() ? b.views[train[k]].name : std::to_string(k);
            throw DataError("feature set '" + name + "': file for view '" + view + "' missing: " + ref.files[k]);
          }
        }
        b.feature_files[name] = ref;
      }
    }
    if (j.contains("gt_cloud")) {
      b.gt_points_path = j["gt_cloud"].get<std::string>();
      b.gt_points = ply_read(b.root / b.gt_points_path).points;
    }
    if (j.contains("gt_depth")) {
      b.gt_depth_paths = j["gt_depth"].get<std::vector<std::string>>();
      for (std::size_t k = 0; k < b.gt_depth_paths.size(); ++k) {
        const Tensor t = ftz_read(b.root / b.gt_depth_paths[k]);
        if (k < train.size()) {
          const auto& cam = b.views[train[k]].camera;
          if (t.dims.size() != 2 || t.dims[0] != static_cast<std::uint64_t>(cam.height) ||
              t.dims[1] != static_cast<std::uint64_t>(cam.width)) {
            throw DataError("GT depth for view '" + b.views[train[k]].name + "' does not match the image size");
          }
        }
        b.gt_depth.push_back(t.data);
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
  b.validate();
  return b;
}

void save_scene(const SceneBundle& bundle, const fs::path& dir) {
  SceneBundle b = bundle;
  b.root = dir;
  fs::create_directories(dir);
  for (auto& v : b.views) {
    if (v.image_path.empty()) v.image_path = "images/" + v.name + ".png";
    image_write(dir / v.image_path, v.image);
  }
  if (b.init_path.empty()) b.init_path = "init_cloud.ply";
  ply_write(dir / b.init_path, b.init.points, b.init.colors);
  if (!b.gt_points.empty()) {
    if (b.gt_points_path.empty()) b.gt_points_path = "gt_cloud.ply";
    ply_write(dir / b.gt_points_path, b.gt_points, b.init.colors);
  }
  if (!b.gt_depth.empty()) {
    const auto train = b.train_indices();
    b.gt_depth_paths.clear();
    for (std::size_t k = 0; k < b.gt_depth.size(); ++k) {
      const auto& cam = b.views[train[k]].camera;
      const std::string rel = "depth/" + b.views[train[k]].name + ".ftz";
      Tensor t;
      t.dims = {static_cast<std::uint64_t>(cam.height), static_cast<std::uint64_t>(cam.width)};
      t.data = b.gt_depth[k];
      ftz_write(dir / rel, t);
      b.gt_depth_paths.push_back(rel);
    }
  }
  save_scene_config(b);
}

void save_scene_config(const SceneBundle& b) { write_file(b.root / "scene.json", scene_json(b).dump(2) + "\n"); }

std::vector<FeatureMap> load_feature_set(const SceneBundle& b, const std::string& name) {
  const auto it = b.feature_files.find(name);
  if (it == b.feature_files.end()) throw DataError("scene has no feature set '" + name + "'");
  const auto train = b.train_indices();
  std::vector<FeatureMap> out;
  for (std::size_t k = 0; k < it->second.files.size(); ++k) {
    const fs::path p = b.root / it->second.files[k];
    if (!fs::exists(p)) throw DataError("feature set '" + name + "': file for view '" + b.views[train[k]].name + "' missing");
    out.push_back(feature_from_tensor(ftz_read(p), static_cast<int>(k), name));
  }
  return out;
}

// ---------------------------------------------------------------- state archive

namespace {

json config_json(const TrainConfig& c) {
  return {{"mode", to_string(c.mode)},
          {"warm_iters", c.warm_iters},
          {"main_iters", c.main_iters},
          {"dssim_weight", c.dssim_weight},
          {"seed", c.seed},
          {"finetune_features", c.finetune_features},
          {"optimize_poses", c.optimize_poses},
          {"background", {c.background[0], c.background[1], c.background[2]}},
          {"threads", c.threads},
          {"hidden", c.hidden},
          {"warm_batch", c.warm_batch},
          {"warm_lr_init", c.warm_lr_init},
          {"warm_lr_final", c.warm_lr_final},
          {"camera_lr", {c.camera_lr.lr_init, c.camera_lr.lr_final, c.camera_lr.horizon}},
          {"position_lr", c.position_lr},
          {"position_lr_final_ratio", c.position_lr_final_ratio},
          {"opacity_lr", c.opacity_lr},
          {"scale_lr", c.scale_lr},
          {"rotation_lr", c.rotation_lr},
          {"sh_lr", c.sh_lr},
          {"sh_rest_ratio", c.sh_rest_ratio},
          {"mlp_lr_ratio", c.mlp_lr_ratio},
          {"shared_lr", c.shared_lr},
          {"base_scale_ratio", c.base_scale_ratio},
          {"complement_check_every", c.complement_check_every}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.mode = parse_probe_mode(j.at("mode").get<std::string>());
  c.warm_iters = j.at("warm_iters");
  c.main_iters = j.at("main_iters");
  c.dssim_weight = j.at("dssim_weight");
  c.seed = j.at("seed");
  c.finetune_features = j.at("finetune_features");
  c.optimize_poses = j.at("optimize_poses");
  const auto bg = j.at("background").get<std::vector<double>>();
  c.background = Vec3(bg.at(0), bg.at(1), bg.at(2));
  c.threads = j.at("threads");
  c.hidden = j.at("hidden");
  c.warm_batch = j.at("warm_batch");
  c.warm_lr_init = j.at("warm_lr_init");
  c.warm_lr_final = j.at("warm_lr_final");
  const auto cam = j.at("camera_lr");
  c.camera_lr = {cam.at(0).get<double>(), cam.at(1).get<double>(), cam.at(2).get<int>()};
  c.position_lr = j.at("position_lr");
  c.position_lr_final_ratio = j.at("position_lr_final_ratio");
  c.opacity_lr = j.at("opacity_lr");
  c.scale_lr = j.at("scale_lr");
  c.rotation_lr = j.at("rotation_lr");
  c.sh_lr = j.at("sh_lr");
  c.sh_rest_ratio = j.at("sh_rest_ratio");
  c.mlp_lr_ratio = j.at("mlp_lr_ratio");
  c.shared_lr = j.at("shared_lr");
  c.base_scale_ratio = j.at("base_scale_ratio");
  c.complement_check_every = j.at("complement_check_every");
  return c;
}

void save_model(const ProbeModel& m, const fs::path& dir, const std::string& tag) {
  ftz_write(dir / (tag + ".mlp_w1.ftz"), to_tensor(m.mlp.w1));
  ftz_write(dir / (tag + ".mlp_b1.ftz"), to_tensor(m.mlp.b1));
  ftz_write(dir / (tag + ".mlp_w2.ftz"), to_tensor(m.mlp.w2));
  ftz_write(dir / (tag + ".mlp_b2.ftz"), to_tensor(m.mlp.b2));
  ftz_write(dir / (tag + ".bank.ftz"), to_tensor(m.bank.raw));
  ftz_write(dir / (tag + ".features.ftz"), to_tensor(m.features));
  RowMatrix tw(static_cast<Eigen::Index>(m.twists.size()), 6);
  for (std::size_t v = 0; v < m.twists.size(); ++v) tw.row(static_cast<Eigen::Index>(v)) = m.twists[v].transpose();
  ftz_write(dir / (tag + ".twists.ftz"), to_tensor(tw));
}

ProbeModel load_model(const fs::path& dir, const std::string& tag, ProbeMode mode, double base_scale,
                      const std::vector<std::size_t>& offsets) {
  ProbeModel m;
  m.mode = mode;
  m.base_scale = base_scale;
  m.mlp.w1 = matrix_from_tensor(ftz_read(dir / (tag + ".mlp_w1.ftz")));
  m.mlp.b1 = vector_from_tensor(ftz_read(dir / (tag + ".mlp_b1.ftz")));
  m.mlp.w2 = matrix_from_tensor(ftz_read(dir / (tag + ".mlp_w2.ftz")));
  m.mlp.b2 = vector_from_tensor(ftz_read(dir / (tag + ".mlp_b2.ftz")));
  m.bank.layout = HeadLayout::for_attributes(free_attributes(mode));
  m.bank.raw = matrix_from_tensor(ftz_read(dir / (tag + ".bank.ftz")));
  m.features = matrix_from_tensor(ftz_read(dir / (tag + ".features.ftz")));
  const RowMatrix tw = matrix_from_tensor(ftz_read(dir / (tag + ".twists.ftz")));
  if (tw.cols() != 6) throw FormatError("twist table must have six columns");
  for (Eigen::Index v = 0; v < tw.rows(); ++v) m.twists.push_back(tw.row(v).transpose());
  m.view_offsets = offsets;
  m.validate();
  return m;
}

}  // namespace

std::string train_config_json(const TrainConfig& config) { return config_json(config).dump(2); }

std::string history_csv(const std::vector<HistoryRow>& history) {
  std::ostringstream out;
  out << "phase,iteration,view,loss,lr_shared,lr_position,lr_camera\n";
  out << std::setprecision(17);
  for (const auto& h : history) {
    out << h.phase << ',' << h.iteration << ',' << h.view << ',' << h.loss << ',' << h.lr_shared << ','
        << h.lr_position << ',' << h.lr_camera << '\n';
  }
  return out.str();
}

void save_state(const TrainedState& s, const fs::path& dir) {
  fs::create_directories(dir);
  json j;
  j["format"] = "splatprobe-state";
  j["version"] = 1;
  j["feature_tag"] = s.feature_tag;
  j["extent"] = s.extent;
  j["base_scale"] = s.model.base_scale;
  j["warm_initial_loss"] = s.warm_initial_loss;
  j["warm_final_loss"] = s.warm_final_loss;
  j["complement_checks"] = s.complement_checks;
  j["view_offsets"] = s.model.view_offsets;
  j["config"] = config_json(s.config);
  write_file(dir / "state.json", j.dump(2) + "\n");
  save_model(s.initial, dir, "initial");
  save_model(s.warm, dir, "warm");
  save_model(s.model, dir, "final");
  write_file(dir / "history.csv", history_csv(s.history));
}

TrainedState load_state(const fs::path& dir) {
  TrainedState s;
  json j;
  try {
    j = json::parse(read_file(dir / "state.json"));
    s.config = config_from_json(j.at("config"));
    s.feature_tag = j.at("feature_tag");
    s.extent = j.at("extent");
    s.warm_initial_loss = j.at("warm_initial_loss");
    s.warm_final_loss = j.at("warm_final_loss");
    s.complement_checks = j.at("complement_checks");
    const double base_scale = j.at("base_scale");
    const auto offsets = j.at("view_offsets").get<std::vector<std::size_t>>();
    s.initial = load_model(dir, "initial", s.config.mode, base_scale, offsets);
    s.warm = load_model(dir, "warm", s.config.mode, base_scale, offsets);
    s.model = load_model(dir, "final", s.config.mode, base_scale, offsets);
  } catch (const json::exception& e) {
    throw FormatError((dir / "state.json").string() + ": " + e.what());
  }
  std::istringstream hist(read_file(dir / "history.csv"));
  std::string line;
  std::getline(hist, line);
  while (std::getline(hist, line)) {
    std::istringstream ls(line);
    HistoryRow h;
    std::string field;
    std::getline(ls, h.phase, ',');
    std::getline(ls, field, ',');
    h.iteration = std::stoi(field);
    std::getline(ls, field, ',');
    h.view = std::stoi(field);
    std::getline(ls, field, ',');
    h.loss = std::stod(field);
    std::getline(ls, field, ',');
    h.lr_shared = std::stod(field);
    std::getline(ls, field, ',');
    h.lr_position = std::stod(field);
    std::getline(ls, field, ',');
    h.lr_camera = std::stod(field);
    s.history.push_back(h);
  }
  return s;
}

}  // namespace splatprobe
