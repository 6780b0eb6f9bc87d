#include <doctest.h>

#include <sstream>

#include "nrf/heads.hpp"
#include "nrf/scene.hpp"
#include "test_support.hpp"

using namespace nrf;
using namespace nrf::test;

TEST_CASE("class levels") {
  const Vec5 l = class_levels(0.1);
  CHECK(l[0] == doctest::Approx(-0.1));
  CHECK(l[1] == doctest::Approx(-0.05));
  CHECK(l[2] == doctest::Approx(0.0));
  CHECK(l[3] == doctest::Approx(0.05));
  CHECK(l[4] == doctest::Approx(0.1));

  const Vec5 l1 = class_levels(1.0);
  CHECK(l1[0] == doctest::Approx(-1.0));
  CHECK(l1[4] == doctest::Approx(1.0));

  for (int i = 0; i < 5; ++i) CHECK(l[i] == doctest::Approx(-l[4 - i]));

  CHECK_THROWS(class_levels(0.0));
  CHECK_THROWS(class_levels(-0.1));
}

TEST_CASE("decode_sdf symmetric and limit cases") {
  const Vec5 levels = class_levels(0.1);

  const TsdfClassOutput uniform = decode_sdf(Vec5::Zero(), 10.0, levels);
  CHECK(std::abs(uniform.sdf) < 1e-15);
  CHECK(uniform.entropy == doctest::Approx(std::log(5.0)).epsilon(1e-9));

  Vec5 hot = Vec5::Zero();
  hot[4] = 1000.0;
  const TsdfClassOutput extreme = decode_sdf(hot, 10.0, levels);
  CHECK(extreme.sdf == doctest::Approx(0.1));
  CHECK(extreme.entropy == doctest::Approx(0.0));

  Vec5 mid = Vec5::Zero();
  mid[2] = 1.0;
  const TsdfClassOutput m = decode_sdf(mid, 10.0, levels);
  CHECK(std::abs(m.sdf) < 1e-15);  // symmetric around the middle class
  // Direct-evaluation oracle for the entropy.
  double z[5] = {0, 0, 10, 0, 0};
  double zmax = 10, sum = 0, probs[5];
  for (int i = 0; i < 5; ++i) sum += std::exp(z[i] - zmax);
  double h = 0;
  for (int i = 0; i < 5; ++i) {
    probs[i] = std::exp(z[i] - zmax) / sum;
    h -= probs[i] * std::log(probs[i]);
  }
  CHECK(m.entropy == doctest::Approx(h).epsilon(1e-12));
}

TEST_CASE("softmax probabilities sum to one") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    Vec5 z;
    for (int k = 0; k < 5; ++k) z[k] = rng.uniform(-40, 40);
    const TsdfClassOutput out = decode_sdf(z, 10.0, class_levels(0.1));
    CHECK(std::abs(out.probs.sum() - 1.0) < 1e-9);
    CHECK(out.sdf >= -0.1);
    CHECK(out.sdf <= 0.1);
    CHECK(out.entropy >= -1e-12);
    CHECK(out.entropy <= std::log(5.0) + 1e-12);
  }
}

TEST_CASE("decode_sdf jacobian matches finite differences") {
  Rng rng(5);
  const Vec5 levels = class_levels(0.1);
  for (int trial = 0; trial < 20; ++trial) {
    Vec5 z;
    for (int k = 0; k < 5; ++k) z[k] = rng.uniform(-2, 2);
    const TsdfClassOutput out = decode_sdf(z, 10.0, levels);
    const DecodeJacobian jac = decode_sdf_jacobian(out, 10.0, levels);
    for (int k = 0; k < 5; ++k) {
      const double h = 1e-6;
      Vec5 zp = z, zm = z;
      zp[k] += h;
      zm[k] -= h;
      const TsdfClassOutput op = decode_sdf(zp, 10.0, levels);
      const TsdfClassOutput om = decode_sdf(zm, 10.0, levels);
      CHECK(jac.dsdf_dz[k] ==
            doctest::Approx((op.sdf - om.sdf) / (2 * h)).epsilon(1e-4));
      CHECK(jac.dentropy_dz[k] ==
            doctest::Approx((op.entropy - om.entropy) / (2 * h)).epsilon(1e-4));
    }
  }
}

TEST_CASE("field evaluation is deterministic and batched equals single") {
  Rng rng(7);
  TsdfField field = TsdfField::create(quick_field(), rng);
  const Vec3 x(0.3, -0.2, 1.4);
  const TsdfSample a = field.sample(x);
  const TsdfSample b = field.sample(x);
  CHECK(a.sdf == b.sdf);  // bitwise
  CHECK(a.entropy == b.entropy);

  // A batch is evaluated sample-at-a-time in the same operation order, so
  // results are bitwise equal to individual calls.
  std::vector<Vec3> pts;
  Rng prng(9);
  for (int i = 0; i < 50; ++i)
    pts.emplace_back(prng.uniform(-2, 2), prng.uniform(-2, 2), prng.uniform(-2, 2));
  std::vector<double> singles;
  for (const Vec3& p : pts) singles.push_back(field.sample(p).sdf);
  for (size_t i = 0; i < pts.size(); ++i) {
    CHECK(field.sample(pts[i]).sdf == singles[i]);
    CHECK(field.eval(pts[i]).value.sdf == singles[i]);
  }
}

TEST_CASE("field backward matches finite differences") {
  Rng rng(11);
  TsdfField field = TsdfField::create(quick_field(), rng);
  const Vec3 x(0.25, -0.6, 0.9);

  // Probe loss: 0.5 sdf^2 + 0.3 * emd-style linear term on the logits.
  Vec5 emd_w;
  emd_w << 0.1, 0.2, 0.0, 0.4, 0.3;
  auto loss_value = [&]() {
    const TsdfSample s = field.sample(x);
    return 0.5 * s.sdf * s.sdf + 0.3 * emd_w.dot(s.logits);
  };

  TsdfField::Eval e = field.eval(x);
  std::vector<Mlp::Layer> grad = field.net().make_grad();
  Vec3 dx = Vec3::Zero();
  GradSink sink;
  sink.param_grad = &grad;
  sink.input_grad = &dx;
  const Vec5 d_logits = 0.3 * emd_w;
  field.backward(e, e.value.sdf, &d_logits, sink);

  const FdReport rep =
      fd_check_params(field.net(), grad, loss_value, 25, 1e-5, 13);
  CHECK(rep.max_rel_err < 1e-4);

  // Spatial gradient against finite differences.
  for (int d = 0; d < 3; ++d) {
    Vec3 xp = x, xm = x;
    xp[d] += 1e-6;
    xm[d] -= 1e-6;
    const double fd = (0.5 * std::pow(field.sample(xp).sdf, 2) +
                       0.3 * emd_w.dot(field.sample(xp).logits) -
                       0.5 * std::pow(field.sample(xm).sdf, 2) -
                       0.3 * emd_w.dot(field.sample(xm).logits)) /
                      2e-6;
    CHECK(dx[d] == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("regression head backward matches finite differences") {
  Rng rng(17);
  TsdfField field = TsdfField::create(quick_field(false), rng);
  const Vec3 x(0.4, 0.1, -0.8);
  auto loss_value = [&]() {
    const double s = field.sample(x).sdf;
    return 0.5 * s * s;
  };
  TsdfField::Eval e = field.eval(x);
  std::vector<Mlp::Layer> grad = field.net().make_grad();
  GradSink sink;
  sink.param_grad = &grad;
  field.backward(e, e.value.sdf, nullptr, sink);
  const FdReport rep =
      fd_check_params(field.net(), grad, loss_value, 25, 1e-5, 19);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("radiance output bounds and backward") {
  Rng rng(23);
  RadianceField field = RadianceField::create(quick_field(), rng);
  Rng prng(29);
  for (int i = 0; i < 100; ++i) {
    const Vec3 c = field.sample(Vec3(prng.uniform(-3, 3), prng.uniform(-3, 3),
                                     prng.uniform(-3, 3)));
    CHECK(c.minCoeff() >= 0.0);
    CHECK(c.maxCoeff() <= 1.0);
  }

  const Vec3 x(0.2, 0.4, -0.3);
  const Vec3 target(0.2, 0.7, 0.4);
  auto loss_value = [&]() { return (field.sample(x) - target).squaredNorm(); };
  RadianceField::Eval e = field.eval(x);
  std::vector<Mlp::Layer> grad = field.net().make_grad();
  GradSink sink;
  sink.param_grad = &grad;
  field.backward(e, 2.0 * (e.rgb - target), sink);
  const FdReport rep =
      fd_check_params(field.net(), grad, loss_value, 25, 1e-5, 31);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("adam basics") {
  Rng rng(37);
  Mlp net = Mlp::create(2, {4}, 1, rng);
  Adam adam(net, 1e-2);

  const auto before = net.layers();
  std::vector<Mlp::Layer> zero = net.make_grad();
  adam.step(net, zero);
  for (size_t l = 0; l < before.size(); ++l) {
    CHECK((net.layers()[l].W - before[l].W).norm() == doctest::Approx(0.0));
  }

  // First-step magnitude is ~lr per coordinate when the gradient is nonzero.
  Adam fresh(net, 1e-2);
  std::vector<Mlp::Layer> g = net.make_grad();
  g[0].W(0, 0) = 0.37;
  const double w0 = net.layers()[0].W(0, 0);
  fresh.step(net, g);
  CHECK(std::abs(net.layers()[0].W(0, 0) - w0) == doctest::Approx(1e-2).epsilon(1e-5));

  // NaN gradients skip the step.
  g[0].W(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const auto saved = net.layers();
  CHECK_FALSE(adam.step(net, g));
  CHECK(net.layers()[0].W(0, 0) == saved[0].W(0, 0));
  CHECK(adam.steps_skipped() == 1);
}

TEST_CASE("adam converges on a scalar quadratic") {
  // f(w) = w^2 via a 1x1 network bias.
  AdamVec<1> adam(1e-2);
  Eigen::Matrix<double, 1, 1> w;
  w[0] = 0.8;
  for (int i = 0; i < 500; ++i) {
    Eigen::Matrix<double, 1, 1> g;
    g[0] = 2.0 * w[0];
    adam.step(w, g);
  }
  CHECK(std::abs(w[0]) < 1e-3);
}

TEST_CASE("network blob serialization round trip") {
  Rng rng(41);
  Mlp net = Mlp::create(7, {16, 8}, 5, rng);
  std::stringstream ss;
  net.serialize(ss);
  const Mlp copy = Mlp::deserialize(ss);
  REQUIRE(copy.num_layers() == net.num_layers());
  for (int l = 0; l < net.num_layers(); ++l) {
    CHECK((copy.layers()[l].W - net.layers()[l].W).norm() == 0.0);  // bitwise
    CHECK((copy.layers()[l].b - net.layers()[l].b).norm() == 0.0);
  }

  std::stringstream bad("not a network blob at all");
  CHECK_THROWS(Mlp::deserialize(bad));
}

TEST_CASE("field fits an analytic sphere") {
  const AnalyticScene scene = make_sphere_room(4.0, 0.8);
  Subvolume vol;
  vol.min_corner = Vec3(-1.6, -1.6, 0.4);
  vol.max_corner = Vec3(1.6, 1.6, 3.6);

  Rng rng(43);
  FieldConfig cfg = quick_field();
  cfg.pe_frequencies = 6;  // resolve truncation-scale features
  cfg.hidden = {48, 48};
  TsdfField field = TsdfField::create(cfg, rng);
  train_field_on_scene(field, scene, Pose::identity(), vol, 1500, 256, 43);

  Rng trng(47);
  double se = 0.0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    // Points in the truncation band around the sphere.
    Vec3 dir(trng.gaussian(), trng.gaussian(), trng.gaussian());
    dir.normalize();
    const double r = 0.8 + trng.uniform(-0.08, 0.08);
    const Vec3 x = Vec3(0, 0, 2.0) + r * dir;
    const double target = std::clamp(scene.sdf(x), -0.1, 0.1);
    const double err = field.sample(x).sdf - target;
    se += err * err;
  }
  CHECK(std::sqrt(se / n) < 0.025);  // tau / 4
}
