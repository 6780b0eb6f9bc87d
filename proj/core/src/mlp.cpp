#include "nrf/mlp.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace nrf {

namespace {

constexpr char kMagic[8] = {'N', 'R', 'F', 'W', '0', '0', '0', '1'};

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)((v >> 8) & 0xff),
                        (unsigned char)((v >> 16) & 0xff), (unsigned char)(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
         (uint32_t(b[3]) << 24);
}

void put_f64(std::ostream& os, double v) {
  uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (unsigned char)((u >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= uint64_t(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

}  // namespace

Mlp Mlp::create(int input_dim, const std::vector<int>& hidden, int output_dim,
                Rng& rng) {
  Mlp net;
  std::vector<int> dims;
  dims.push_back(input_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(output_dim);
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer;
    const int nin = dims[l], nout = dims[l + 1];
    const double bound = std::sqrt(6.0 / (nin + nout));  // Glorot uniform
    layer.W.resize(nout, nin);
    for (int r = 0; r < nout; ++r)
      for (int c = 0; c < nin; ++c) layer.W(r, c) = rng.uniform(-bound, bound);
    layer.b = Eigen::VectorXd::Zero(nout);
    net.layers_.push_back(std::move(layer));
  }
  return net;
}

size_t Mlp::num_params() const {
  size_t n = 0;
  for (const Layer& l : layers_) n += l.W.size() + l.b.size();
  return n;
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& in) const {
  Eigen::VectorXd a = in;
  for (size_t l = 0; l < layers_.size(); ++l) {
    a = (layers_[l].W * a + layers_[l].b).eval();
    if (l + 1 < layers_.size()) a = a.array().tanh().matrix();
  }
  return a;
}

const Eigen::VectorXd& Mlp::forward_cached(const Eigen::VectorXd& in,
                                           Cache& cache) const {
  cache.acts.resize(layers_.size() + 1);
  cache.pre.resize(layers_.size());
  cache.acts[0] = in;
  for (size_t l = 0; l < layers_.size(); ++l) {
    cache.pre[l] = layers_[l].W * cache.acts[l] + layers_[l].b;
    if (l + 1 < layers_.size()) {
      cache.acts[l + 1] = cache.pre[l].array().tanh().matrix();
    } else {
      cache.acts[l + 1] = cache.pre[l];
    }
  }
  return cache.acts.back();
}

void Mlp::backward(const Cache& cache, const Eigen::VectorXd& dout,
                   std::vector<Layer>* grad, Eigen::VectorXd* dinput) const {
  Eigen::VectorXd delta = dout;
  for (int l = (int)layers_.size() - 1; l >= 0; --l) {
    if (l != (int)layers_.size() - 1) {
      // tanh'(z) = 1 - tanh(z)^2; acts[l+1] holds tanh(z)
      delta = delta.cwiseProduct(
          (1.0 - cache.acts[l + 1].array().square()).matrix());
    }
    if (grad) {
      (*grad)[l].W.noalias() += delta * cache.acts[l].transpose();
      (*grad)[l].b += delta;
    }
    if (l > 0 || dinput) {
      Eigen::VectorXd prev = layers_[l].W.transpose() * delta;
      if (l == 0) {
        if (dinput) *dinput += prev;
      } else {
        delta = std::move(prev);
      }
    }
  }
}

std::vector<Mlp::Layer> Mlp::make_grad() const {
  std::vector<Layer> g;
  g.reserve(layers_.size());
  for (const Layer& l : layers_) {
    Layer z;
    z.W = Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols());
    z.b = Eigen::VectorXd::Zero(l.b.size());
    g.push_back(std::move(z));
  }
  return g;
}

void Mlp::serialize(std::ostream& os) const {
  os.write(kMagic, 8);
  put_u32(os, (uint32_t)layers_.size());
  for (const Layer& l : layers_) {
    put_u32(os, (uint32_t)l.W.rows());
    put_u32(os, (uint32_t)l.W.cols());
  }
  for (const Layer& l : layers_) {
    for (int r = 0; r < l.W.rows(); ++r)
      for (int c = 0; c < l.W.cols(); ++c) put_f64(os, l.W(r, c));
    for (int i = 0; i < l.b.size(); ++i) put_f64(os, l.b[i]);
  }
}

Mlp Mlp::deserialize(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("bad network blob magic");
  const uint32_t n = get_u32(is);
  if (n > 64) throw std::runtime_error("implausible layer count");
  std::vector<std::pair<uint32_t, uint32_t>> shapes(n);
  for (auto& s : shapes) {
    s.first = get_u32(is);
    s.second = get_u32(is);
  }
  Mlp net;
  for (auto& s : shapes) {
    Layer l;
    l.W.resize(s.first, s.second);
    for (uint32_t r = 0; r < s.first; ++r)
      for (uint32_t c = 0; c < s.second; ++c) l.W(r, c) = get_f64(is);
    l.b.resize(s.first);
    for (uint32_t i = 0; i < s.first; ++i) l.b[i] = get_f64(is);
    net.layers_.push_back(std::move(l));
  }
  if (!is) throw std::runtime_error("truncated network blob");
  return net;
}

Adam::Adam(const Mlp& net, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_ = net.make_grad();
  v_ = net.make_grad();
}

bool Adam::step(Mlp& net, const std::vector<Mlp::Layer>& grad, double lr_scale) {
  for (const auto& g : grad) {
    if (!g.W.allFinite() || !g.b.allFinite()) {
      ++skipped_;
      return false;
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, (double)t_);
  const double bc2 = 1.0 - std::pow(beta2_, (double)t_);
  const double alpha = lr_ * lr_scale / bc1;
  for (size_t l = 0; l < grad.size(); ++l) {
    auto& lay = net.layers()[l];
    m_[l].W = beta1_ * m_[l].W + (1 - beta1_) * grad[l].W;
    v_[l].W = beta2_ * v_[l].W + (1 - beta2_) * grad[l].W.cwiseProduct(grad[l].W);
    lay.W -= alpha * m_[l].W.cwiseQuotient(
                         ((v_[l].W / bc2).cwiseSqrt().array() + eps_).matrix());
    m_[l].b = beta1_ * m_[l].b + (1 - beta1_) * grad[l].b;
    v_[l].b = beta2_ * v_[l].b + (1 - beta2_) * grad[l].b.cwiseProduct(grad[l].b);
    lay.b -= alpha * m_[l].b.cwiseQuotient(
                         ((v_[l].b / bc2).cwiseSqrt().array() + eps_).matrix());
  }
  return true;
}

}  // namespace nrf
