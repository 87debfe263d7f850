#pragma once

#include "splatprobe/features.hpp"
#include "splatprobe/optimizer.hpp"
#include "splatprobe/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace splatprobe {

/// Malformed or unsupported file content; `offset` is the byte position when known.
class FormatError : public DataError {
 public:
  explicit FormatError(const std::string& what) : DataError(what) {}
};

// ---- FTZ tensors: "F2GS", u8 version, u8 dtype, u8 ndim, u64 dims, LE payload.

enum class FtzDtype : std::uint8_t { F32 = 0, F64 = 1 };

struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
  FtzDtype dtype = FtzDtype::F64;

  std::size_t element_count() const;
};

inline constexpr std::uint8_t kFtzVersion = 1;

std::string ftz_encode(const Tensor& tensor);
Tensor ftz_decode(const std::string& bytes);
void ftz_write(const std::filesystem::path& path, const Tensor& tensor);
Tensor ftz_read(const std::filesystem::path& path);

Tensor to_tensor(const FeatureMap& map, FtzDtype dtype = FtzDtype::F64);
/// Accepts H x W x C tensors.
FeatureMap feature_from_tensor(const Tensor& tensor, int view_id, const std::string& source_tag);
Tensor to_tensor(const RowMatrix& m);
RowMatrix matrix_from_tensor(const Tensor& t);
Tensor to_tensor(const Vector& v);
Vector vector_from_tensor(const Tensor& t);

// ---- ASCII PLY (vertex x y z red green blue).

struct PlyCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> colors;  // [0,1]
  bool missing_color = false;
};

std::string ply_encode(const std::vector<Vec3>& points, const std::vector<Vec3>& colors);
PlyCloud ply_decode(const std::string& text);
void ply_write(const std::filesystem::path& path, const std::vector<Vec3>& points, const std::vector<Vec3>& colors);
PlyCloud ply_read(const std::filesystem::path& path);

// ---- 8-bit images (PNG, or binary PPM by extension), byte / 255.

Image image_read(const std::filesystem::path& path);
void image_write(const std::filesystem::path& path, const Image& image);
std::uint8_t to_byte(double value);
/// Rounds every channel to the nearest 8-bit level.
Image quantize(const Image& image);

// ---- Scene bundle JSON.

inline constexpr int kSceneVersion = 1;

/// `path` is scene.json or the directory containing it.
SceneBundle load_scene(const std::filesystem::path& path);
/// Writes scene.json plus every image, PLY and depth file into `dir`.
void save_scene(const SceneBundle& bundle, const std::filesystem::path& dir);
/// Rewrites scene.json only (used when registering feature sets).
void save_scene_config(const SceneBundle& bundle);
std::vector<FeatureMap> load_feature_set(const SceneBundle& bundle, const std::string& name);

// ---- Trained-state archive.

void save_state(const TrainedState& state, const std::filesystem::path& dir);
TrainedState load_state(const std::filesystem::path& dir);
/// Every TrainConfig field as a JSON object.
std::string train_config_json(const TrainConfig& config);
std::string history_csv(const std::vector<HistoryRow>& history);

/// Whole-file helpers.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace splatprobe
