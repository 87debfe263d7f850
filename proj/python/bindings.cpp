#include "splatprobe/cli.hpp"
#include "splatprobe/evaluate.hpp"
#include "splatprobe/features.hpp"
#include "splatprobe/gradcheck.hpp"
#include "splatprobe/io.hpp"
#include "splatprobe/metrics.hpp"
#include "splatprobe/synth.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace splatprobe;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Image to_image_checked(const Array& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw py::value_error("image must be H x W x 3");
  Image img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), img.rgb.begin());
  return img;
}

std::optional<Mask> to_mask(const std::optional<py::array_t<bool, py::array::c_style | py::array::forcecast>>& m) {
  if (!m) return std::nullopt;
  if (m->ndim() != 2) throw py::value_error("mask must be H x W");
  Mask mask(static_cast<int>(m->shape(0)), static_cast<int>(m->shape(1)), false);
  for (py::ssize_t i = 0; i < m->size(); ++i) mask.valid[i] = m->data()[i] ? 1 : 0;
  return mask;
}

Array matrix_to_array(const RowMatrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data(), m.data() + m.size(), out.mutable_data());
  return out;
}

RowMatrix array_to_matrix(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-d array");
  RowMatrix m(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), m.data());
  return m;
}

std::vector<Vec3> to_points(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw py::value_error("points must be N x 3");
  std::vector<Vec3> pts(a.shape(0));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) pts[i] = Vec3(a.at(i, 0), a.at(i, 1), a.at(i, 2));
  return pts;
}

Array from_points(const std::vector<Vec3>& pts) {
  Array out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
  auto r = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int c = 0; c < 3; ++c) r(i, c) = pts[i][c];
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Gaussian-splat read-out of per-pixel features";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);

  m.def(
      "psnr",
      [](const Array& img, const Array& ref, std::optional<py::array_t<bool, py::array::c_style | py::array::forcecast>> mask) {
        const auto mk = to_mask(mask);
        return psnr(to_image_checked(img), to_image_checked(ref), mk ? &*mk : nullptr);
      },
      py::arg("img"), py::arg("ref"), py::arg("mask") = py::none());
  m.def(
      "ssim",
      [](const Array& img, const Array& ref, std::optional<py::array_t<bool, py::array::c_style | py::array::forcecast>> mask) {
        const auto mk = to_mask(mask);
        return ssim(to_image_checked(img), to_image_checked(ref), mk ? &*mk : nullptr);
      },
      py::arg("img"), py::arg("ref"), py::arg("mask") = py::none());

  m.def(
      "cloud_metrics",
      [](const Array& recon, const Array& gt, std::optional<std::vector<std::int64_t>> matching) {
        const auto r = to_points(recon), g = to_points(gt);
        const std::vector<std::int64_t> match = matching.value_or(std::vector<std::int64_t>{});
        const CloudMetrics c = cloud_metrics(r, g, match);
        py::dict d;
        d["accuracy"] = c.accuracy;
        d["completeness"] = c.completeness;
        d["distance"] = c.distance ? py::cast(*c.distance) : py::none();
        return d;
      },
      py::arg("recon"), py::arg("gt"), py::arg("matching") = py::none());

  m.def(
      "pearson_matrix",
      [](const std::vector<std::pair<std::string, std::vector<double>>>& vectors) {
        std::vector<LabeledVector> v;
        for (const auto& [label, values] : vectors) v.push_back({label, values});
        const CorrMatrix c = pearson_matrix(v);
        return py::make_tuple(c.labels, matrix_to_array(c.values), c.zero_variance);
      },
      py::arg("vectors"));

  m.def(
      "rank_cells",
      [](const std::vector<std::vector<double>>& table, const std::vector<std::string>& metrics) {
        std::vector<MetricDirection> dirs;
        for (const auto& name : metrics) dirs.push_back(metric_direction(name));
        return rank_cells(table, dirs);
      },
      py::arg("table"), py::arg("metrics"));

  m.def(
      "pca_fit",
      [](const Array& samples, int k) {
        const PcaBasis b = pca_fit(array_to_matrix(samples), k);
        return py::make_tuple(std::vector<double>(b.mean.data(), b.mean.data() + b.mean.size()),
                              matrix_to_array(b.components),
                              std::vector<double>(b.explained_variance.data(),
                                                  b.explained_variance.data() + b.explained_variance.size()));
      },
      py::arg("samples"), py::arg("k"));

  m.def(
      "ftz_read",
      [](const std::filesystem::path& path) {
        const Tensor t = ftz_read(path);
        std::vector<py::ssize_t> shape(t.dims.begin(), t.dims.end());
        Array out(shape);
        std::copy(t.data.begin(), t.data.end(), out.mutable_data());
        return out;
      },
      py::arg("path"));
  m.def(
      "ftz_write",
      [](const std::filesystem::path& path, const Array& a, bool f32) {
        Tensor t;
        for (py::ssize_t d = 0; d < a.ndim(); ++d) t.dims.push_back(static_cast<std::uint64_t>(a.shape(d)));
        t.data.assign(a.data(), a.data() + a.size());
        t.dtype = f32 ? FtzDtype::F32 : FtzDtype::F64;
        ftz_write(path, t);
      },
      py::arg("path"), py::arg("array"), py::arg("f32") = false);

  m.def(
      "ply_read",
      [](const std::filesystem::path& path) {
        const PlyCloud c = ply_read(path);
        return py::make_tuple(from_points(c.points), from_points(c.colors));
      },
      py::arg("path"));
  m.def(
      "ply_write",
      [](const std::filesystem::path& path, const Array& points, const Array& colors) {
        ply_write(path, to_points(points), to_points(colors));
      },
      py::arg("path"), py::arg("points"), py::arg("colors"));

  m.def(
      "synth",
      [](const std::filesystem::path& out, std::uint64_t seed, int gaussians, int train, int test, int size) {
        SynthConfig cfg;
        cfg.seed = seed;
        cfg.n_gaussians = gaussians;
        cfg.n_train = train;
        cfg.n_test = test;
        cfg.image_size = size;
        save_scene(gen_scene(cfg).bundle, out);
      },
      py::arg("out"), py::arg("seed") = 1, py::arg("gaussians") = 256, py::arg("train") = 8, py::arg("test") = 4,
      py::arg("size") = 64);

  m.def(
      "gradcheck",
      [](std::uint64_t seed) {
        const GradCheckReport r = gradcheck_scene(seed);
        return py::make_tuple(r.max_rel_error(), r.passed());
      },
      py::arg("seed"));

  m.def(
      "run",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> full = {"splatprobe"};
        full.insert(full.end(), args.begin(), args.end());
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run(full, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one CLI command; returns (exit code, stdout, stderr).");
}
