#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "nrf/geometry.hpp"

namespace nrf {

/// Sinusoidal positional encoding of a 3D position:
/// per coordinate [x, sin(2^0 x), cos(2^0 x), ..., sin(2^{L-1} x), cos(2^{L-1} x)].
struct PositionalEncoding {
  int num_frequencies = 6;
  bool include_input = true;

  int output_dim() const {
    return 3 * ((include_input ? 1 : 0) + 2 * num_frequencies);
  }

  void encode(const Vec3& x, Eigen::VectorXd& out) const {
    out.resize(output_dim());
    int idx = 0;
    for (int c = 0; c < 3; ++c) {
      if (include_input) out[idx++] = x[c];
      double f = 1.0;
      for (int k = 0; k < num_frequencies; ++k) {
        out[idx++] = std::sin(f * x[c]);
        out[idx++] = std::cos(f * x[c]);
        f *= 2.0;
      }
    }
  }

  /// Accumulates dL/dx given dL/d(encoding). `enc` is the stored encoding of x.
  void backward(const Vec3& x, const Eigen::VectorXd& dout, Vec3& dx) const {
    int idx = 0;
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      if (include_input) acc += dout[idx++];
      double f = 1.0;
      for (int k = 0; k < num_frequencies; ++k) {
        const double s = std::sin(f * x[c]);
        const double co = std::cos(f * x[c]);
        acc += dout[idx++] * f * co;
        acc -= dout[idx++] * f * s;
        f *= 2.0;
      }
      dx[c] += acc;
    }
  }
};

}  // namespace nrf
