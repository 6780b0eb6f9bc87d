#include "nrf/fields.hpp"

#include <cmath>

namespace nrf {

TsdfField TsdfField::create(const FieldConfig& cfg, Rng& rng) {
  TsdfField f;
  f.enc_.num_frequencies = cfg.pe_frequencies;
  f.tau_ = cfg.tau;
  f.beta_ = cfg.beta;
  f.levels_ = class_levels(cfg.tau);
  f.classification_ = cfg.classification;
  const int out = cfg.classification ? 5 : 1;
  f.net_ = Mlp::create(f.enc_.output_dim(), cfg.hidden, out, rng);
  if (cfg.classification) {
    // Small initial logits keep the class distribution near uniform, which
    // stabilizes early soft-argmax learning and starts uncertainty honest.
    f.net_.layers().back().W *= 0.3;
  }
  return f;
}

TsdfSample TsdfField::sample(const Vec3& x_local) const {
  Eigen::VectorXd enc;
  enc_.encode(x_local, enc);
  const Eigen::VectorXd raw = net_.forward(enc);
  TsdfSample s;
  s.classification = classification_;
  if (classification_) {
    const Vec5 z = normalize_logits(Vec5(raw));
    const TsdfClassOutput out = decode_sdf(z, beta_, levels_);
    s.sdf = out.sdf;
    s.entropy = out.entropy;
    s.logits = z;
  } else {
    s.sdf = tau_ * std::tanh(raw[0]);
    s.entropy = 1.0;  // no class distribution; neutral uncertainty
  }
  return s;
}

TsdfField::Eval TsdfField::eval(const Vec3& x_local) const {
  Eval e;
  e.x_local = x_local;
  enc_.encode(x_local, e.encoded);
  e.raw = net_.forward_cached(e.encoded, e.cache);
  e.value.classification = classification_;
  if (classification_) {
    const Vec5 z = normalize_logits(Vec5(e.raw));
    const TsdfClassOutput out = decode_sdf(z, beta_, levels_);
    e.value.sdf = out.sdf;
    e.value.entropy = out.entropy;
    e.value.logits = z;
  } else {
    e.value.sdf = tau_ * std::tanh(e.raw[0]);
    e.value.entropy = 1.0;
  }
  return e;
}

void TsdfField::backward(const Eval& e, double d_sdf, const Vec5* d_logits,
                         const GradSink& sink) const {
  Eigen::VectorXd d_raw;
  if (classification_) {
    const Vec5& z = e.value.logits;
    TsdfClassOutput out;
    out.logits = z;
    out.probs = softmax((beta_ * z).eval());
    out.sdf = e.value.sdf;
    out.entropy = e.value.entropy;
    const DecodeJacobian jac = decode_sdf_jacobian(out, beta_, levels_);
    Vec5 dz = d_sdf * jac.dsdf_dz;
    if (d_logits) dz += *d_logits;
    d_raw = normalize_logits_backward(Vec5(e.raw), dz);
  } else {
    const double t = std::tanh(e.raw[0]);
    d_raw = Eigen::VectorXd::Constant(1, d_sdf * tau_ * (1.0 - t * t));
  }
  if (sink.input_grad) {
    Eigen::VectorXd denc = Eigen::VectorXd::Zero(e.encoded.size());
    net_.backward(e.cache, d_raw, sink.param_grad, &denc);
    enc_.backward(e.x_local, denc, *sink.input_grad);
  } else {
    net_.backward(e.cache, d_raw, sink.param_grad, nullptr);
  }
}

Vec3 TsdfField::sdf_gradient(const Vec3& x_local) const {
  Eval e = eval(x_local);
  Vec3 g = Vec3::Zero();
  GradSink sink;
  sink.input_grad = &g;
  backward(e, 1.0, nullptr, sink);
  return g;
}

void TsdfField::serialize(std::ostream& os) const { net_.serialize(os); }

TsdfField TsdfField::deserialize(std::istream& is, const FieldConfig& cfg) {
  TsdfField f;
  f.enc_.num_frequencies = cfg.pe_frequencies;
  f.tau_ = cfg.tau;
  f.beta_ = cfg.beta;
  f.levels_ = class_levels(cfg.tau);
  f.classification_ = cfg.classification;
  f.net_ = Mlp::deserialize(is);
  return f;
}

RadianceField RadianceField::create(const FieldConfig& cfg, Rng& rng) {
  RadianceField f;
  f.enc_.num_frequencies = cfg.pe_frequencies;
  f.net_ = Mlp::create(f.enc_.output_dim(), cfg.hidden, 3, rng);
  return f;
}

namespace {
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

Vec3 RadianceField::sample(const Vec3& x_local) const {
  Eigen::VectorXd enc;
  enc_.encode(x_local, enc);
  const Eigen::VectorXd raw = net_.forward(enc);
  return Vec3(sigmoid(raw[0]), sigmoid(raw[1]), sigmoid(raw[2]));
}

RadianceField::Eval RadianceField::eval(const Vec3& x_local) const {
  Eval e;
  e.x_local = x_local;
  enc_.encode(x_local, e.encoded);
  const Eigen::VectorXd raw = net_.forward_cached(e.encoded, e.cache);
  e.rgb = Vec3(sigmoid(raw[0]), sigmoid(raw[1]), sigmoid(raw[2]));
  return e;
}

void RadianceField::backward(const Eval& e, const Vec3& d_rgb,
                             const GradSink& sink) const {
  Eigen::VectorXd d_raw(3);
  for (int i = 0; i < 3; ++i)
    d_raw[i] = d_rgb[i] * e.rgb[i] * (1.0 - e.rgb[i]);
  if (sink.input_grad) {
    Eigen::VectorXd denc = Eigen::VectorXd::Zero(e.encoded.size());
    net_.backward(e.cache, d_raw, sink.param_grad, &denc);
    enc_.backward(e.x_local, denc, *sink.input_grad);
  } else {
    net_.backward(e.cache, d_raw, sink.param_grad, nullptr);
  }
}

void RadianceField::serialize(std::ostream& os) const { net_.serialize(os); }

RadianceField RadianceField::deserialize(std::istream& is,
                                         const FieldConfig& cfg) {
  RadianceField f;
  f.enc_.num_frequencies = cfg.pe_frequencies;
  f.net_ = Mlp::deserialize(is);
  return f;
}

}  // namespace nrf
