#pragma once

#include <string>
#include <utility>
#include <vector>

namespace fixtures {

/// LLFF geometry-mode PSNR per feature set, in listed order.
inline const std::vector<std::pair<std::string, double>> kLlffGeometryPsnr = {
    {"DUSt3R", 19.88}, {"MASt3R", 19.89}, {"MiDaS", 19.81}, {"DINOv2", 19.77}, {"DINO", 19.81}, {"SAM", 19.72},
    {"CLIP", 19.78},   {"RADIO", 19.73},  {"MAE", 19.75},   {"SD", 19.62},     {"IUVRGB", 15.55},
};

/// Expected dense ranks (1 = best) for kLlffGeometryPsnr.
inline const std::vector<int> kLlffGeometryRanks = {2, 1, 3, 5, 3, 8, 4, 7, 6, 9, 10};

/// DTU accuracy (lower is better) per feature set.
inline const std::vector<std::pair<std::string, double>> kDtuAccuracy = {
    {"DUSt3R", 2.439}, {"MASt3R", 2.321}, {"MiDaS", 2.934}, {"DINOv2", 3.101}, {"DINO", 2.440},
    {"SAM", 3.176},    {"CLIP", 2.357},   {"RADIO", 1.886}, {"MAE", 2.963},    {"SD", 4.334},
};

}  // namespace fixtures
