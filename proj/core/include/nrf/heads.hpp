#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace nrf {

using Vec5 = Eigen::Matrix<double, 5, 1>;

/// Five signed-distance class levels, uniform over [-tau, tau].
inline Vec5 class_levels(double tau) {
  if (tau <= 0) throw std::invalid_argument("truncation distance must be > 0");
  Vec5 l;
  l << -tau, -tau / 2, 0.0, tau / 2, tau;
  return l;
}

/// Numerically stable softmax.
template <typename Derived>
Eigen::Matrix<double, Derived::RowsAtCompileTime, 1> softmax(
    const Eigen::MatrixBase<Derived>& x) {
  auto shifted = (x.array() - x.maxCoeff()).exp();
  return (shifted / shifted.sum()).matrix();
}

struct TsdfClassOutput {
  Vec5 logits = Vec5::Zero();  // the network's normalized class vector z
  Vec5 probs = Vec5::Zero();   // softmax(beta * z)
  double sdf = 0.0;            // meters
  double entropy = 0.0;        // nats, in [0, ln 5]
};

/// Soft-argmax decoding of class logits into a signed distance plus the
/// Shannon entropy of the tempered class distribution.
inline TsdfClassOutput decode_sdf(const Vec5& logits, double beta,
                                  const Vec5& levels) {
  TsdfClassOutput out;
  out.logits = logits;
  out.probs = softmax((beta * logits).eval());
  out.sdf = out.probs.dot(levels);
  double h = 0.0;
  for (int i = 0; i < 5; ++i) {
    if (out.probs[i] > 0) h -= out.probs[i] * std::log(out.probs[i]);
  }
  out.entropy = h;
  return out;
}

struct DecodeJacobian {
  Vec5 dsdf_dz = Vec5::Zero();
  Vec5 dentropy_dz = Vec5::Zero();
};

inline DecodeJacobian decode_sdf_jacobian(const TsdfClassOutput& out,
                                          double beta, const Vec5& levels) {
  DecodeJacobian jac;
  for (int j = 0; j < 5; ++j) {
    jac.dsdf_dz[j] = beta * out.probs[j] * (levels[j] - out.sdf);
    const double logp = out.probs[j] > 0 ? std::log(out.probs[j]) : -745.0;
    jac.dentropy_dz[j] = -beta * out.probs[j] * (logp + out.entropy);
  }
  return jac;
}

/// Backprop through y -> softmax(y): given dL/dz returns dL/dy.
template <int N>
Eigen::Matrix<double, N, 1> softmax_backward(
    const Eigen::Matrix<double, N, 1>& z,
    const Eigen::Matrix<double, N, 1>& dz) {
  const double dot = dz.dot(z);
  return z.cwiseProduct(dz - Eigen::Matrix<double, N, 1>::Constant(dot));
}

/// Unit-sphere normalization of the class scores: z = y / sqrt(|y|^2 + eps^2).
/// Keeps the distribution loss bounded and leaves no absorbing one-hot state.
constexpr double kLogitNormEps = 1e-3;

inline Vec5 normalize_logits(const Vec5& y) {
  const double n = std::sqrt(y.squaredNorm() + kLogitNormEps * kLogitNormEps);
  return y / n;
}

/// Given dL/dz for z = normalize_logits(y), returns dL/dy.
inline Vec5 normalize_logits_backward(const Vec5& y, const Vec5& dz) {
  const double n2 = y.squaredNorm() + kLogitNormEps * kLogitNormEps;
  const double n = std::sqrt(n2);
  return dz / n - y * (y.dot(dz) / (n2 * n));
}

}  // namespace nrf
