#include "splatprobe/model.hpp"

namespace splatprobe {

void ProbeModel::check_complement() const {
  const HeadLayout readout = readout_layout();
  if ((readout.attributes & bank.layout.attributes) != 0) {
    throw ConfigError("mode " + to_string(mode) + ": read-out and free bank supply the same attribute");
  }
  if ((readout.attributes | bank.layout.attributes) != kAllAttributes) {
    throw ConfigError("mode " + to_string(mode) + ": an attribute has no source");
  }
  if (mlp.out_dim() != readout.width) throw ConfigError("readout width does not match mode " + to_string(mode));
  if (bank.raw.cols() != bank.layout.width) throw ConfigError("free bank width does not match its layout");
}

void ProbeModel::validate() const {
  check_complement();
  mlp.validate();
  if (features.cols() != mlp.in_dim()) throw DataError("feature channels do not match the readout input");
  if (bank.size() != size()) throw DataError("free bank size does not match the Gaussian count");
  if (view_offsets.size() != twists.size() + 1 || view_offsets.back() != size()) {
    throw DataError("view offsets do not cover the Gaussian count");
  }
  if (!features.allFinite() || !bank.raw.allFinite()) throw NumericalError("model parameters contain non-finite values");
}

ModelForward model_forward(const ProbeModel& model, int threads) {
  ModelForward fwd;
  fwd.raw = mlp_forward(model.mlp, model.features, nullptr, threads);
  const GaussianCloud readout = heads_decode(fwd.raw, model.readout_layout(), model.base_scale);
  const GaussianCloud free = heads_decode(model.bank.raw, model.bank.layout, model.base_scale);
  fwd.cloud = assemble_cloud(model.mode, readout, model.readout_layout(), free, model.bank.layout);
  return fwd;
}

GaussianCloud decode_cloud(const ProbeModel& model, int threads) { return model_forward(model, threads).cloud; }

CameraModel training_camera(const ProbeModel& model, const CameraModel& base, std::size_t view) {
  return se3_exp_apply(model.twists.at(view), base);
}

ModelGradients model_backward(const ProbeModel& model, const ModelForward& fwd, const RenderGradients& grads,
                              const CameraModel& base, std::size_t view, bool want_feature_grad, int threads) {
  ModelGradients out;
  const HeadLayout readout = model.readout_layout();
  const RowMatrix grad_raw = heads_backward(fwd.raw, readout, model.base_scale, grads.cloud);
  out.mlp = mlp_backward(model.mlp, model.features, grad_raw, want_feature_grad, threads);
  if (want_feature_grad) out.features = std::move(out.mlp.inputs);
  out.bank = heads_backward(model.bank.raw, model.bank.layout, model.base_scale, grads.cloud);
  out.twists.assign(model.twists.size(), Twist::Zero());
  out.twists.at(view) = se3_pullback(model.twists[view], base, grads.camera_rotation, grads.camera_translation);
  return out;
}

}  // namespace splatprobe
