#include "splatprobe/loss.hpp"

#include <cmath>

namespace splatprobe {

LossResult photometric_loss(std::span<const double> rgb, const Image& target, const Mask* mask, double lambda) {
  const std::size_t pixels = static_cast<std::size_t>(target.height) * target.width;
  if (rgb.size() != pixels * 3) throw DataError("photometric_loss: render and target sizes differ");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("photometric_loss: dssim weight must lie in [0, 1]");
  if (mask && (mask->height != target.height || mask->width != target.width)) {
    throw DataError("photometric_loss: mask shape mismatch");
  }
  const std::size_t valid = mask ? mask->count() : pixels;
  if (valid == 0) throw DataError("photometric_loss: mask selects no pixels");

  LossResult out;
  out.adjoint.assign(pixels * 3, 0.0);
  const double w = 1.0 / (static_cast<double>(valid) * 3.0);
  for (std::size_t p = 0; p < pixels; ++p) {
    if (mask && !mask->valid[p]) continue;
    for (int c = 0; c < 3; ++c) {
      const double d = rgb[p * 3 + c] - target.rgb[p * 3 + c];
      out.l1 += std::abs(d) * w;
      out.adjoint[p * 3 + c] = (1.0 - lambda) * w * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0));
    }
  }
  out.value = (1.0 - lambda) * out.l1;
  if (lambda > 0.0) {
    Image img(target.height, target.width);
    img.rgb.assign(rgb.begin(), rgb.end());
    std::vector<double> grad;
    out.ssim = ssim_with_gradient(img, target, mask, &grad);
    out.value += lambda * (1.0 - out.ssim) / 2.0;
    for (std::size_t i = 0; i < grad.size(); ++i) out.adjoint[i] -= 0.5 * lambda * grad[i];
  }
  if (!std::isfinite(out.value)) throw NumericalError("photometric_loss: non-finite loss");
  return out;
}

LossResult photometric_loss(const RenderOutput& render, const Image& target, const Mask* mask, double lambda) {
  if (render.height != target.height || render.width != target.width) {
    throw DataError("photometric_loss: render and target shapes differ");
  }
  return photometric_loss(render.rgb, target, mask, lambda);
}

Image to_image(const RenderOutput& render) {
  Image img(render.height, render.width);
  img.rgb = render.rgb;
  return img;
}

}  // namespace splatprobe
