#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

#include "nrf/encoding.hpp"
#include "nrf/geometry.hpp"
#include "nrf/heads.hpp"
#include "nrf/mlp.hpp"
#include "nrf/rng.hpp"

namespace nrf {

struct FieldConfig {
  double tau = 0.1;
  double beta = 10.0;
  int pe_frequencies = 6;
  std::vector<int> hidden = {64, 64, 64, 64};
  bool classification = true;  // regression head when false ("no_c" ablation)
  /// Optional decay on the classification head, relative to the learning
  /// rate. The unit-sphere logit normalization already bounds the logits;
  /// this stays available as a stabilization knob.
  double head_decay = 0.0;
};

struct TsdfSample {
  double sdf = 0.0;
  double entropy = 0.0;
  Vec5 logits = Vec5::Zero();  // z, meaningful only for the classification head
  bool classification = true;
};

/// Gradient request for a field evaluation. Any pointer may be null.
struct GradSink {
  std::vector<Mlp::Layer>* param_grad = nullptr;
  Vec3* input_grad = nullptr;
};

/// Local TSDF network: sinusoidal encoding, MLP trunk, and either a
/// 5-class softmax head decoded by soft-argmax or a tau*tanh regression head.
class TsdfField {
 public:
  TsdfField() = default;
  static TsdfField create(const FieldConfig& cfg, Rng& rng);

  TsdfSample sample(const Vec3& x_local) const;

  struct Eval {
    TsdfSample value;
    Mlp::Cache cache;
    Eigen::VectorXd encoded;
    Vec3 x_local;
    Eigen::VectorXd raw;  // network output before the head
  };

  Eval eval(const Vec3& x_local) const;

  /// Backpropagates d_sdf (dL/dsdf) and optionally dL/dz into the sink.
  void backward(const Eval& e, double d_sdf, const Vec5* d_logits,
                const GradSink& sink) const;

  /// Spatial gradient of the signed distance at a point.
  Vec3 sdf_gradient(const Vec3& x_local) const;

  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }
  const PositionalEncoding& encoding() const { return enc_; }
  double tau() const { return tau_; }
  double beta() const { return beta_; }
  const Vec5& levels() const { return levels_; }
  bool classification() const { return classification_; }

  void serialize(std::ostream& os) const;
  static TsdfField deserialize(std::istream& is, const FieldConfig& cfg);

 private:
  PositionalEncoding enc_;
  Mlp net_;
  double tau_ = 0.1, beta_ = 10.0;
  Vec5 levels_ = Vec5::Zero();
  bool classification_ = true;
};

/// Radiance network: position-only input, sigmoid-squashed RGB output.
class RadianceField {
 public:
  RadianceField() = default;
  static RadianceField create(const FieldConfig& cfg, Rng& rng);

  Vec3 sample(const Vec3& x_local) const;

  struct Eval {
    Vec3 rgb;
    Mlp::Cache cache;
    Eigen::VectorXd encoded;
    Vec3 x_local;
  };

  Eval eval(const Vec3& x_local) const;
  void backward(const Eval& e, const Vec3& d_rgb, const GradSink& sink) const;

  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }

  void serialize(std::ostream& os) const;
  static RadianceField deserialize(std::istream& is, const FieldConfig& cfg);

 private:
  PositionalEncoding enc_;
  Mlp net_;
};

}  // namespace nrf
