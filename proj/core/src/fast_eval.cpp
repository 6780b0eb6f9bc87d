#include "nrf/fast_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

#include "nrf/fields.hpp"

namespace nrf {
namespace {

typedef float v16 __attribute__((vector_size(64), aligned(64)));
typedef int v16i __attribute__((vector_size(64), aligned(64)));

inline v16 vmin(v16 a, v16 b) { return a < b ? a : b; }
inline v16 vmax(v16 a, v16 b) { return a > b ? a : b; }

// Cephes-style exp, valid over the clamped range, |rel err| ~ 2e-7.
inline v16 vexp(v16 x) {
  x = vmin(x, v16{} + 88.3762626647950f);
  x = vmax(x, v16{} + -87.3365478515625f);
  v16 fx = x * 1.44269504088896341f + 0.5f;
  v16 tmp = __builtin_convertvector(__builtin_convertvector(fx, v16i), v16);
  v16 mask = tmp > fx ? (v16{} + 1.0f) : v16{};
  fx = tmp - mask;
  x -= fx * 0.693359375f;
  x -= fx * -2.12194440e-4f;
  v16 z = x * x;
  v16 y = v16{} + 1.9875691500e-4f;
  y = y * x + 1.3981999507e-3f;
  y = y * x + 8.3334519073e-3f;
  y = y * x + 4.1665795894e-2f;
  y = y * x + 1.6666665459e-1f;
  y = y * x + 5.0000001201e-1f;
  y = y * z + x + 1.0f;
  v16i n = __builtin_convertvector(fx, v16i);
  n = (n + 127) << 23;
  return y * (v16)n;
}

// Cephes-style natural log for positive x.
inline v16 vlog(v16 x) {
  x = vmax(x, (v16)(v16i{} + 0x00800000));
  v16i xi = (v16i)x;
  v16i emm0 = (xi >> 23) - 127;
  xi = (xi & 0x007fffff) | 0x3f000000;
  v16 e = __builtin_convertvector(emm0, v16) + 1.0f;
  v16 m = (v16)xi;
  v16i ltmask = m < 0.707106781186547524f;
  e += (v16)(ltmask & (v16i)(v16{} - 1.0f));
  m = m - 1.0f + (v16)(ltmask & (v16i)m);
  v16 z = m * m;
  v16 y = v16{} + 7.0376836292e-2f;
  y = y * m + -1.1514610310e-1f;
  y = y * m + 1.1676998740e-1f;
  y = y * m + -1.2420140846e-1f;
  y = y * m + 1.4249322787e-1f;
  y = y * m + -1.6668057665e-1f;
  y = y * m + 2.0000714765e-1f;
  y = y * m + -2.4999993993e-1f;
  y = y * m + 3.3333331174e-1f;
  y = y * m * z;
  y += e * -2.12194440e-4f;
  y -= 0.5f * z;
  return m + y + e * 0.693359375f;
}

// sin and cos with Cephes range reduction; adequate to |x| ~ 1e4.
inline void vsincos(v16 x, v16& s_out, v16& c_out) {
  v16i sign_s = (v16i)(x < v16{});
  v16 ax = x < v16{} ? -x : x;
  v16 j = ax * 1.27323954473516f;
  v16i ji = __builtin_convertvector(j, v16i);
  ji = (ji + 1) & ~1;
  j = __builtin_convertvector(ji, v16);
  v16i octant = ji & 7;
  v16 y = ax - j * 0.78515625f - j * 2.4187564849853515625e-4f -
          j * 3.77489497744594108e-8f;
  v16 z = y * y;
  v16 ps = v16{} + -1.9515295891e-4f;
  ps = ps * z + 8.3321608736e-3f;
  ps = ps * z + -1.6666654611e-1f;
  ps = ps * z * y + y;
  v16 pc = v16{} + 2.443315711809948e-5f;
  pc = pc * z + -1.388731625493765e-3f;
  pc = pc * z + 4.166664568298827e-2f;
  pc = pc * z * z - 0.5f * z + 1.0f;
  v16i swap = (octant == 2) | (octant == 3) | (octant == 6) | (octant == 7);
  v16i negs = (octant == 4) | (octant == 5) | (octant == 6) | (octant == 7);
  v16i negc = (octant == 2) | (octant == 3) | (octant == 4) | (octant == 5);
  v16 ss = (v16)(((v16i)ps & ~swap) | ((v16i)pc & swap));
  v16 cc = (v16)(((v16i)pc & ~swap) | ((v16i)ps & swap));
  const v16i sign_bit = v16i{} + (int)0x80000000u;
  negs ^= sign_s;
  ss = (v16)((v16i)ss ^ (negs & sign_bit));
  cc = (v16)((v16i)cc ^ (negc & sign_bit));
  s_out = ss;
  c_out = cc;
}

inline v16 vtanh(v16 x) {
  x = vmax(vmin(x, v16{} + 4.97f), v16{} + -4.97f);
  v16 x2 = x * x;
  v16 num = x * (135135.f + x2 * (17325.f + x2 * (378.f + x2)));
  v16 den = 135135.f + x2 * (62370.f + x2 * (3150.f + x2 * 28.f));
  return num / den;
}

// Dense layer over a panel of nvecs 16-lane columns: out = act(W in + b).
// Output rows are padded to a multiple of 4 at build time.
void dense_panel(const float* __restrict wm, const float* __restrict bias,
                 int nin, int nout_padded, bool apply_tanh,
                 const v16* __restrict in, v16* __restrict out, int nvecs) {
  for (int o = 0; o < nout_padded; o += 4) {
    const float* w0 = wm + (size_t)(o + 0) * nin;
    const float* w1 = wm + (size_t)(o + 1) * nin;
    const float* w2 = wm + (size_t)(o + 2) * nin;
    const float* w3 = wm + (size_t)(o + 3) * nin;
    int v = 0;
    for (; v + 2 <= nvecs; v += 2) {
      v16 a00 = v16{} + bias[o], a01 = a00;
      v16 a10 = v16{} + bias[o + 1], a11 = a10;
      v16 a20 = v16{} + bias[o + 2], a21 = a20;
      v16 a30 = v16{} + bias[o + 3], a31 = a30;
      const v16* col = in + v;
      for (int i = 0; i < nin; ++i) {
        const v16 x0 = col[(size_t)i * nvecs];
        const v16 x1 = col[(size_t)i * nvecs + 1];
        a00 += w0[i] * x0;
        a01 += w0[i] * x1;
        a10 += w1[i] * x0;
        a11 += w1[i] * x1;
        a20 += w2[i] * x0;
        a21 += w2[i] * x1;
        a30 += w3[i] * x0;
        a31 += w3[i] * x1;
      }
      v16* os = out + (size_t)o * nvecs + v;
      if (apply_tanh) {
        os[0] = vtanh(a00);
        os[1] = vtanh(a01);
        os[(size_t)nvecs] = vtanh(a10);
        os[(size_t)nvecs + 1] = vtanh(a11);
        os[2 * (size_t)nvecs] = vtanh(a20);
        os[2 * (size_t)nvecs + 1] = vtanh(a21);
        os[3 * (size_t)nvecs] = vtanh(a30);
        os[3 * (size_t)nvecs + 1] = vtanh(a31);
      } else {
        os[0] = a00;
        os[1] = a01;
        os[(size_t)nvecs] = a10;
        os[(size_t)nvecs + 1] = a11;
        os[2 * (size_t)nvecs] = a20;
        os[2 * (size_t)nvecs + 1] = a21;
        os[3 * (size_t)nvecs] = a30;
        os[3 * (size_t)nvecs + 1] = a31;
      }
    }
    for (; v < nvecs; ++v) {
      v16 a0 = v16{} + bias[o], a1 = v16{} + bias[o + 1];
      v16 a2 = v16{} + bias[o + 2], a3 = v16{} + bias[o + 3];
      const v16* col = in + v;
      for (int i = 0; i < nin; ++i) {
        const v16 x = col[(size_t)i * nvecs];
        a0 += w0[i] * x;
        a1 += w1[i] * x;
        a2 += w2[i] * x;
        a3 += w3[i] * x;
      }
      v16* os = out + (size_t)o * nvecs + v;
      os[0] = apply_tanh ? vtanh(a0) : a0;
      os[(size_t)nvecs] = apply_tanh ? vtanh(a1) : a1;
      os[2 * (size_t)nvecs] = apply_tanh ? vtanh(a2) : a2;
      os[3 * (size_t)nvecs] = apply_tanh ? vtanh(a3) : a3;
    }
  }
}

struct Workspace {
  std::vector<v16> enc, h1, h2, head;
  void ensure(int input_dim, int max_width, int head_padded, int nvecs) {
    enc.resize((size_t)input_dim * nvecs);
    h1.resize((size_t)max_width * nvecs);
    h2.resize((size_t)max_width * nvecs);
    head.resize((size_t)head_padded * nvecs);
  }
};

}  // namespace

void FastTsdfEvaluator::build(const TsdfField& field) {
  layers_.clear();
  pe_frequencies_ = field.encoding().num_frequencies;
  input_dim_ = field.encoding().output_dim();
  tau_ = (float)field.tau();
  beta_ = (float)field.beta();
  classification_ = field.classification();
  for (int i = 0; i < 5; ++i) levels_[i] = (float)field.levels()[i];
  for (const auto& l : field.net().layers()) {
    LayerF lf;
    lf.nin = (int)l.W.cols();
    lf.nout = (int)l.W.rows();
    lf.nout_padded = (lf.nout + 3) & ~3;
    lf.w.assign((size_t)lf.nout_padded * lf.nin, 0.0f);
    lf.b.assign(lf.nout_padded, 0.0f);
    for (int r = 0; r < lf.nout; ++r) {
      for (int c = 0; c < lf.nin; ++c) lf.w[(size_t)r * lf.nin + c] = (float)l.W(r, c);
      lf.b[r] = (float)l.b[r];
    }
    layers_.push_back(std::move(lf));
  }
}

void FastTsdfEvaluator::eval_fitness(const FitnessJob& job,
                                     std::span<FitnessOut> out) const {
  const int npts = (int)job.cam_points.size();
  const int nvecs = (npts + 15) / 16;
  const int nhyp = (int)job.world_from_cam.size();
  int max_width = input_dim_;
  for (const auto& l : layers_) max_width = std::max(max_width, l.nout_padded);
  const int head_padded = layers_.back().nout_padded;
  const int nfreq = pe_frequencies_;

  #pragma omp parallel
  {
    Workspace ws;
    ws.ensure(input_dim_, max_width, head_padded, nvecs);
    #pragma omp for schedule(static)
    for (int hyp = 0; hyp < nhyp; ++hyp) {
      const Eigen::Matrix<float, 3, 4>& wc = job.world_from_cam[hyp];
      const Eigen::Matrix<float, 3, 4>& lw = job.local_from_world;
      v16* enc = ws.enc.data();
      // world coords + inside mask + local coords
      alignas(64) float wx[3][16];
      std::vector<v16> masks(nvecs);
      // Encoding rows follow the reference layout: per-coordinate blocks of
      // [raw, sin f0, cos f0, sin f1, ...]. lane > 0: in-volume, lane < 0:
      // real point outside the volume, lane == 0: padding.
      const int stride = 1 + 2 * nfreq;
      for (int v = 0; v < nvecs; ++v) {
        v16 mask;
        for (int k = 0; k < 16; ++k) {
          const int idx = std::min(npts - 1, 16 * v + k);
          const Eigen::Vector3f& p = job.cam_points[idx];
          const bool real = 16 * v + k < npts;
          bool inside = real;
          for (int c = 0; c < 3; ++c) {
            wx[c][k] = wc(c, 0) * p.x() + wc(c, 1) * p.y() + wc(c, 2) * p.z() + wc(c, 3);
            inside = inside && wx[c][k] >= job.vol_min[c] && wx[c][k] <= job.vol_max[c];
          }
          mask[k] = inside ? 1.0f : (real ? -1.0f : 0.0f);
          for (int c = 0; c < 3; ++c) {
            enc[(size_t)(c * stride) * nvecs + v][k] =
                lw(c, 0) * wx[0][k] + lw(c, 1) * wx[1][k] + lw(c, 2) * wx[2][k] +
                lw(c, 3);
          }
        }
        masks[v] = mask;
      }
      for (int c = 0; c < 3; ++c) {
        for (int v = 0; v < nvecs; ++v) {
          v16 s, co;
          vsincos(enc[(size_t)(c * stride) * nvecs + v], s, co);
          for (int f = 0; f < nfreq; ++f) {
            enc[(size_t)(c * stride + 1 + 2 * f) * nvecs + v] = s;
            enc[(size_t)(c * stride + 2 + 2 * f) * nvecs + v] = co;
            const v16 s2 = 2.0f * s * co;
            co = 1.0f - 2.0f * s * s;
            s = s2;
          }
        }
      }
      // trunk
      const v16* cur = enc;
      v16* buf_a = ws.h1.data();
      v16* buf_b = ws.h2.data();
      for (size_t l = 0; l + 1 < layers_.size(); ++l) {
        dense_panel(layers_[l].w.data(), layers_[l].b.data(), layers_[l].nin,
                    layers_[l].nout_padded, true, cur, buf_a, nvecs);
        cur = buf_a;
        std::swap(buf_a, buf_b);
      }
      const auto& head = layers_.back();
      dense_panel(head.w.data(), head.b.data(), head.nin, head.nout_padded,
                  false, cur, ws.head.data(), nvecs);

      double fit = 0.0, num = 0.0, den = 0.0;
      int inside_count = 0;
      const v16* hv = ws.head.data();
      for (int v = 0; v < nvecs; ++v) {
        v16 sdf, h;
        if (classification_) {
          v16 z0 = hv[v], z1 = hv[(size_t)nvecs + v],
              z2 = hv[2 * (size_t)nvecs + v], z3 = hv[3 * (size_t)nvecs + v],
              z4 = hv[4 * (size_t)nvecs + v];
          // unit-sphere logit normalization (matches the reference head)
          v16 n2 = z0 * z0 + z1 * z1 + z2 * z2 + z3 * z3 + z4 * z4 +
                   (1e-3f * 1e-3f);
          v16 inv_n;
          for (int k = 0; k < 16; ++k) inv_n[k] = 1.0f / std::sqrt(n2[k]);
          z0 *= inv_n; z1 *= inv_n; z2 *= inv_n; z3 *= inv_n; z4 *= inv_n;
          const v16 bm = vmax(vmax(vmax(z0, z1), vmax(z2, z3)), z4) * beta_;
          v16 p0 = vexp(beta_ * z0 - bm), p1 = vexp(beta_ * z1 - bm),
              p2 = vexp(beta_ * z2 - bm), p3 = vexp(beta_ * z3 - bm),
              p4 = vexp(beta_ * z4 - bm);
          const v16 ps = p0 + p1 + p2 + p3 + p4;
          const v16 pinv = 1.0f / ps;
          p0 *= pinv; p1 *= pinv; p2 *= pinv; p3 *= pinv; p4 *= pinv;
          sdf = p0 * levels_[0] + p1 * levels_[1] + p2 * levels_[2] +
                p3 * levels_[3] + p4 * levels_[4];
          const v16 pz = beta_ * (p0 * z0 + p1 * z1 + p2 * z2 + p3 * z3 + p4 * z4);
          h = vlog(ps) + bm - pz;
        } else {
          sdf = tau_ * vtanh(hv[v]);
          h = v16{} + 1.0f;
        }
        const v16 lane = masks[v];
        const v16i in_vol = lane > v16{};
        const v16i outside = lane < v16{};  // real points outside the volume
        if (job.entropy_gate > 0.0f) {
          // unknown map space scores as a tau-sized residual
          const v16i unknown = (h >= job.entropy_gate) | outside;
          sdf = (v16)(((v16i)sdf & ~unknown) | ((v16i)(v16{} + tau_) & unknown));
        } else {
          sdf = (v16)(((v16i)sdf & ~outside) | ((v16i)(v16{} + tau_) & outside));
        }
        if (job.uncertainty_weighted) {
          h = vmax(h, v16{} + job.h_floor);
        } else {
          h = v16{} + 1.0f;
        }
        // outside points use neutral weight 1
        h = (v16)(((v16i)h & ~outside) | ((v16i)(v16{} + 1.0f) & outside));
        const v16 contributing =
            (v16)((in_vol | outside) & (v16i)(v16{} + 1.0f));
        const v16 w = contributing / (h * h);
        const v16 term = sdf * sdf * w;
        const v16 norm = (sdf / tau_) * (sdf / tau_) * w;
        for (int k = 0; k < 16; ++k) {
          fit += (double)term[k];
          num += (double)norm[k];
          den += (double)w[k];
          inside_count += lane[k] > 0.5f ? 1 : 0;
        }
      }
      FitnessOut& o = out[hyp];
      o.inside_fraction = npts > 0 ? (float)inside_count / (float)npts : 0.0f;
      o.inside_count = inside_count;
      if (inside_count == 0) {
        o.fitness = std::numeric_limits<double>::infinity();
        o.scale = 1.0;
      } else {
        o.fitness = fit;
        o.scale = den > 0 ? num / den : 1.0;
      }
    }
  }
}

void FastTsdfEvaluator::batch_eval(std::span<const Eigen::Vector3f> local_points,
                                   std::span<float> sdf,
                                   std::span<float> entropy) const {
  const int npts = (int)local_points.size();
  if (npts == 0) return;
  const int nfreq = pe_frequencies_;
  int max_width = input_dim_;
  for (const auto& l : layers_) max_width = std::max(max_width, l.nout_padded);
  const int head_padded = layers_.back().nout_padded;

  constexpr int kChunk = 4096;  // points per parallel task
  const int nchunks = (npts + kChunk - 1) / kChunk;

  #pragma omp parallel
  {
    Workspace ws;
    #pragma omp for schedule(static)
    for (int chunk = 0; chunk < nchunks; ++chunk) {
      const int lo = chunk * kChunk;
      const int hi = std::min(npts, lo + kChunk);
      const int n = hi - lo;
      const int nvecs = (n + 15) / 16;
      ws.ensure(input_dim_, max_width, head_padded, nvecs);
      v16* enc = ws.enc.data();
      const int stride = 1 + 2 * nfreq;
      for (int v = 0; v < nvecs; ++v) {
        for (int k = 0; k < 16; ++k) {
          const int idx = lo + std::min(n - 1, 16 * v + k);
          const Eigen::Vector3f& p = local_points[idx];
          enc[v][k] = p.x();
          enc[(size_t)stride * nvecs + v][k] = p.y();
          enc[2 * (size_t)stride * nvecs + v][k] = p.z();
        }
      }
      for (int c = 0; c < 3; ++c) {
        for (int v = 0; v < nvecs; ++v) {
          v16 s, co;
          vsincos(enc[(size_t)(c * stride) * nvecs + v], s, co);
          for (int f = 0; f < nfreq; ++f) {
            enc[(size_t)(c * stride + 1 + 2 * f) * nvecs + v] = s;
            enc[(size_t)(c * stride + 2 + 2 * f) * nvecs + v] = co;
            const v16 s2 = 2.0f * s * co;
            co = 1.0f - 2.0f * s * s;
            s = s2;
          }
        }
      }
      const v16* cur = enc;
      v16* buf_a = ws.h1.data();
      v16* buf_b = ws.h2.data();
      for (size_t l = 0; l + 1 < layers_.size(); ++l) {
        dense_panel(layers_[l].w.data(), layers_[l].b.data(), layers_[l].nin,
                    layers_[l].nout_padded, true, cur, buf_a, nvecs);
        cur = buf_a;
        std::swap(buf_a, buf_b);
      }
      const auto& headl = layers_.back();
      dense_panel(headl.w.data(), headl.b.data(), headl.nin, headl.nout_padded,
                  false, cur, ws.head.data(), nvecs);
      const v16* hv = ws.head.data();
      for (int v = 0; v < nvecs; ++v) {
        v16 s_out, h_out;
        if (classification_) {
          v16 z0 = hv[v], z1 = hv[(size_t)nvecs + v],
              z2 = hv[2 * (size_t)nvecs + v], z3 = hv[3 * (size_t)nvecs + v],
              z4 = hv[4 * (size_t)nvecs + v];
          // unit-sphere logit normalization (matches the reference head)
          v16 n2 = z0 * z0 + z1 * z1 + z2 * z2 + z3 * z3 + z4 * z4 +
                   (1e-3f * 1e-3f);
          v16 inv_n;
          for (int k = 0; k < 16; ++k) inv_n[k] = 1.0f / std::sqrt(n2[k]);
          z0 *= inv_n; z1 *= inv_n; z2 *= inv_n; z3 *= inv_n; z4 *= inv_n;
          const v16 bm = vmax(vmax(vmax(z0, z1), vmax(z2, z3)), z4) * beta_;
          v16 p0 = vexp(beta_ * z0 - bm), p1 = vexp(beta_ * z1 - bm),
              p2 = vexp(beta_ * z2 - bm), p3 = vexp(beta_ * z3 - bm),
              p4 = vexp(beta_ * z4 - bm);
          const v16 ps = p0 + p1 + p2 + p3 + p4;
          const v16 pinv = 1.0f / ps;
          p0 *= pinv; p1 *= pinv; p2 *= pinv; p3 *= pinv; p4 *= pinv;
          s_out = p0 * levels_[0] + p1 * levels_[1] + p2 * levels_[2] +
                  p3 * levels_[3] + p4 * levels_[4];
          const v16 pz = beta_ * (p0 * z0 + p1 * z1 + p2 * z2 + p3 * z3 + p4 * z4);
          h_out = vlog(ps) + bm - pz;
        } else {
          s_out = tau_ * vtanh(hv[v]);
          h_out = v16{} + 1.0f;
        }
        for (int k = 0; k < 16 && 16 * v + k < n; ++k) {
          sdf[lo + 16 * v + k] = s_out[k];
          if (!entropy.empty()) entropy[lo + 16 * v + k] = h_out[k];
        }
      }
    }
  }
}

}  // namespace nrf
