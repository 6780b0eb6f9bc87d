#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

#include "nrf/rng.hpp"

namespace nrf {

/// Fully-connected network with tanh hidden activations and a linear output
/// layer. Forward/backward are written out by hand; evaluation is strictly
/// sample-at-a-time in a fixed operation order so batched calls are bitwise
/// identical to single calls.
class Mlp {
 public:
  struct Layer {
    Eigen::MatrixXd W;  // out x in, row-major semantics
    Eigen::VectorXd b;
  };

  struct Cache {
    std::vector<Eigen::VectorXd> acts;  // acts[0] = input, acts.back() = output
    std::vector<Eigen::VectorXd> pre;   // pre-activation per hidden layer
  };

  Mlp() = default;

  static Mlp create(int input_dim, const std::vector<int>& hidden,
                    int output_dim, Rng& rng);

  int input_dim() const { return layers_.empty() ? 0 : (int)layers_.front().W.cols(); }
  int output_dim() const { return layers_.empty() ? 0 : (int)layers_.back().W.rows(); }
  int num_layers() const { return (int)layers_.size(); }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  size_t num_params() const;

  Eigen::VectorXd forward(const Eigen::VectorXd& in) const;
  const Eigen::VectorXd& forward_cached(const Eigen::VectorXd& in, Cache& cache) const;

  /// Backpropagates dL/d(output). Accumulates parameter gradients into
  /// `grad` (if non-null) and dL/d(input) into `dinput` (if non-null).
  void backward(const Cache& cache, const Eigen::VectorXd& dout,
                std::vector<Layer>* grad, Eigen::VectorXd* dinput) const;

  /// Zero-initialized gradient buffers matching this network's shapes.
  std::vector<Layer> make_grad() const;

  void serialize(std::ostream& os) const;
  static Mlp deserialize(std::istream& is);

 private:
  std::vector<Layer> layers_;
};

/// ADAM over a network's parameters, moments mirroring the layer shapes.
/// Steps with non-finite gradients are skipped and counted.
class Adam {
 public:
  Adam() = default;
  explicit Adam(const Mlp& net, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);

  /// Applies one update; returns false if the gradient was non-finite.
  bool step(Mlp& net, const std::vector<Mlp::Layer>& grad, double lr_scale = 1.0);

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  int64_t steps_taken() const { return t_; }
  int64_t steps_skipped() const { return skipped_; }

 private:
  double lr_ = 1e-2, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  int64_t t_ = 0, skipped_ = 0;
  std::vector<Mlp::Layer> m_, v_;
};

/// ADAM over a fixed-size vector (pose increments and similar).
template <int N>
class AdamVec {
 public:
  AdamVec() = default;
  explicit AdamVec(double lr, double beta1 = 0.9, double beta2 = 0.999,
                   double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  bool step(Eigen::Matrix<double, N, 1>& x,
            const Eigen::Matrix<double, N, 1>& g, double lr_scale = 1.0) {
    if (!g.allFinite()) {
      ++skipped_;
      return false;
    }
    ++t_;
    m_ = beta1_ * m_ + (1 - beta1_) * g;
    v_ = beta2_ * v_ + (1 - beta2_) * g.cwiseProduct(g);
    const double bc1 = 1.0 - std::pow(beta1_, (double)t_);
    const double bc2 = 1.0 - std::pow(beta2_, (double)t_);
    x -= (lr_ * lr_scale / bc1) * m_.cwiseQuotient(
             ((v_ / bc2).cwiseSqrt().array() + eps_).matrix());
    return true;
  }

 private:
  double lr_ = 1e-2, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  int64_t t_ = 0, skipped_ = 0;
  Eigen::Matrix<double, N, 1> m_ = Eigen::Matrix<double, N, 1>::Zero();
  Eigen::Matrix<double, N, 1> v_ = Eigen::Matrix<double, N, 1>::Zero();
};

}  // namespace nrf
