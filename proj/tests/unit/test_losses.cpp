#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "demix/losses.hpp"
#include "oracles.hpp"

using namespace demix;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

struct RandomCase {
  Vector z;
  int a;
  int b;
  double lambda;
};

RandomCase random_case(std::mt19937_64& rng, int classes) {
  std::normal_distribution<double> gauss(0.0, 2.0);
  std::uniform_int_distribution<int> cls(0, classes - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  RandomCase c{Vector(classes), cls(rng), 0, unit(rng)};
  for (auto& v : c.z) v = gauss(rng);
  do {
    c.b = cls(rng);
  } while (c.b == c.a);
  return c;
}

}  // namespace

TEST_CASE("softmax") {
  CHECK(softmax(vec({0, 0, 0})).isApprox(Vector::Constant(3, 1.0 / 3.0)));
  const Vector shifted = softmax(vec({7.5, 7.5, 7.5, 7.5}));
  for (double p : shifted) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));
  const Vector p = softmax(vec({1, 0, 0}));
  CHECK(p[0] == doctest::Approx(0.5761).epsilon(1e-4));
  CHECK(p[1] == doctest::Approx(0.2119).epsilon(1e-4));
  CHECK(p[2] == doctest::Approx(0.2119).epsilon(1e-4));
  // Large logits stay finite.
  const Vector big = softmax(vec({1000, 999, 0}));
  CHECK(std::isfinite(big.sum()));
  CHECK(big.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("decoupled softmax") {
  CHECK(decoupled_softmax(vec({0, 0, 0}), 2)[0] == doctest::Approx(0.5));
  CHECK(decoupled_softmax(vec({1, 0, 0}), 2)[0] == doctest::Approx(std::numbers::e / (std::numbers::e + 1)));
  CHECK_THROWS_AS(decoupled_softmax(vec({0, 0}), 2), std::out_of_range);
  CHECK_THROWS_AS(decoupled_softmax(vec({0, 0}), -1), std::out_of_range);

  SUBCASE("dominates the coupled softmax") {
    std::mt19937_64 rng(11);
    for (int k = 0; k < 200; ++k) {
      const int classes = 2 + k % 9;
      const RandomCase c = random_case(rng, classes);
      const Vector p = softmax(c.z);
      const Vector phi = decoupled_softmax(c.z, c.b);
      for (int i = 0; i < classes; ++i) {
        if (i != c.b) CHECK(phi[i] > p[i]);
      }
    }
  }
}

TEST_CASE("mce loss") {
  const Vector z = vec({0, 0, 0});
  const LossResult r = mce_loss(z, {0, 1, Lambda(0.7)});
  CHECK(r.value == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  CHECK(r.grad_logits[0] == doctest::Approx(1.0 / 3.0 - 0.7));
  CHECK(r.grad_logits[1] == doctest::Approx(1.0 / 3.0 - 0.3));
  CHECK(r.grad_logits[2] == doctest::Approx(1.0 / 3.0));

  SUBCASE("lambda = 1 is plain CE on a") {
    const Vector zz = vec({0.3, -1.2, 2.0});
    const LossResult mixed = mce_loss(zz, {2, 0, Lambda(1.0)});
    const LossResult plain = mce_loss(zz, MixedTarget::single(2));
    CHECK(mixed.value == doctest::Approx(plain.value).epsilon(1e-15));
    CHECK((mixed.grad_logits - plain.grad_logits).norm() < 1e-15);
    CHECK(plain.value == doctest::Approx(-std::log(oracle::direct_softmax(zz)[2])).epsilon(1e-14));
  }

  SUBCASE("same-class target puts all weight on a") {
    const LossResult same = mce_loss(vec({1, 2, 3}), {1, 1, Lambda(0.3)});
    const LossResult plain = mce_loss(vec({1, 2, 3}), MixedTarget::single(1));
    CHECK(same.value == plain.value);
  }

  CHECK_THROWS_AS(mce_loss(z, {0, 3, Lambda(0.5)}), std::out_of_range);
  CHECK_THROWS_AS(mce_loss(vec({1.0}), MixedTarget::single(0)), std::invalid_argument);
}

TEST_CASE("dm regularizer") {
  const Vector z = vec({0, 0, 0});
  const LossResult r = dm_regularizer(z, 0, 1);
  CHECK(r.value == doctest::Approx(-2.0 * std::log(0.5)).epsilon(1e-14));
  CHECK(r.grad_logits[0] == doctest::Approx(-0.5));
  CHECK(r.grad_logits[1] == doctest::Approx(-0.5));
  CHECK(r.grad_logits[2] == doctest::Approx(1.0));

  SUBCASE("degenerate pair is zero") {
    const LossResult zero = dm_regularizer(vec({1, 2, 3}), 2, 2);
    CHECK(zero.value == 0.0);
    CHECK(zero.grad_logits.isZero());
  }

  SUBCASE("lambda independence through dm_ce") {
    const Vector zz = vec({0.4, -0.2, 1.1, 0.0});
    const LossResult lo = dm_ce_loss(zz, {1, 2, Lambda(0.1)}, {1.0});
    const LossResult hi = dm_ce_loss(zz, {1, 2, Lambda(0.9)}, {1.0});
    const LossResult mce_lo = mce_loss(zz, {1, 2, Lambda(0.1)});
    const LossResult mce_hi = mce_loss(zz, {1, 2, Lambda(0.9)});
    CHECK((lo.value - mce_lo.value) == doctest::Approx(hi.value - mce_hi.value).epsilon(1e-14));
  }

  SUBCASE("matches the probability-ratio form") {
    std::mt19937_64 rng(5);
    for (int k = 0; k < 2000; ++k) {
      const RandomCase c = random_case(rng, 3 + k % 8);
      CHECK(std::abs(dm_regularizer(c.z, c.a, c.b).value - oracle::dm_probability_form(c.z, c.a, c.b)) < 1e-12);
    }
  }

  SUBCASE("confident logits stay finite") {
    const LossResult confident = dm_regularizer(vec({60, 55, -40}), 0, 1);
    CHECK(std::isfinite(confident.value));
    CHECK(confident.value >= 0.0);
    CHECK(confident.grad_logits.allFinite());
  }
}

TEST_CASE("gradients match closed forms and finite differences") {
  std::mt19937_64 rng(2022);
  for (int classes : {2, 3, 10}) {
    for (int k = 0; k < 50; ++k) {
      const RandomCase c = random_case(rng, classes);
      const MixedTarget t{c.a, c.b, Lambda(c.lambda)};

      const Vector g_mce = mce_loss(c.z, t).grad_logits;
      CHECK((g_mce - oracle::mce_gradient_closed_form(c.z, c.a, c.b, c.lambda)).cwiseAbs().maxCoeff() < 1e-14);
      CHECK(oracle::relative_error(g_mce, oracle::central_difference([&](const Vector& x) { return mce_loss(x, t).value; },
                                                                      c.z)) < 1e-6);

      const Vector g_dm = dm_regularizer(c.z, c.a, c.b).grad_logits;
      CHECK((g_dm - oracle::dm_gradient_closed_form(c.z, c.a, c.b)).cwiseAbs().maxCoeff() < 1e-13);
      if (classes > 2) {
        CHECK(oracle::relative_error(
                  g_dm, oracle::central_difference([&](const Vector& x) { return dm_regularizer(x, c.a, c.b).value; },
                                                   c.z)) < 1e-6);
      } else {
        CHECK(g_dm.cwiseAbs().maxCoeff() < 1e-15);
      }

      const Vector g_as = asymmetric_dm_loss(c.z, c.a, c.b).grad_logits;
      if (classes > 2) {
        CHECK(oracle::relative_error(
                  g_as, oracle::central_difference(
                            [&](const Vector& x) { return asymmetric_dm_loss(x, c.a, c.b).value; }, c.z)) < 1e-6);
      }
    }
  }
}

TEST_CASE("shift invariance") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> shift(0.0, 5.0);
  for (int k = 0; k < 200; ++k) {
    const RandomCase c = random_case(rng, 2 + k % 9);
    const MixedTarget t{c.a, c.b, Lambda(c.lambda)};
    const Vector moved = c.z.array() + shift(rng);
    const auto check = [&](const LossResult& x, const LossResult& y) {
      CHECK(std::abs(x.value - y.value) < 1e-10);
      CHECK((x.grad_logits - y.grad_logits).cwiseAbs().maxCoeff() < 1e-10);
      CHECK(std::abs(x.grad_logits.sum()) < 1e-10);
    };
    check(mce_loss(c.z, t), mce_loss(moved, t));
    check(dm_regularizer(c.z, c.a, c.b), dm_regularizer(moved, c.a, c.b));
    check(dm_ce_loss(c.z, t, {0.1}), dm_ce_loss(moved, t, {0.1}));
    check(asymmetric_dm_loss(c.z, c.a, c.b), asymmetric_dm_loss(moved, c.a, c.b));
  }
}

TEST_CASE("dm_ce combination") {
  const Vector z = vec({0, 0, 0});
  const MixedTarget t{0, 1, Lambda(0.7)};
  CHECK(dm_ce_loss(z, t, {0.1}).value == doctest::Approx(1.0986 + 0.1 * 1.3863).epsilon(1e-4));
  CHECK(dm_ce_loss(z, t, {0.1}).value == doctest::Approx(std::log(3.0) - 0.2 * std::log(0.5)).epsilon(1e-14));

  const Vector zz = vec({0.2, -0.7, 1.3, 0.05});
  const MixedTarget tt{3, 1, Lambda(0.35)};
  const LossResult eta0 = dm_ce_loss(zz, tt, {0.0});
  const LossResult mce = mce_loss(zz, tt);
  CHECK(eta0.value == mce.value);
  CHECK(eta0.grad_logits == mce.grad_logits);

  const MixedTarget same{2, 2, Lambda(0.4)};
  CHECK(dm_ce_loss(zz, same, {5.0}).value == mce_loss(zz, same).value);
  CHECK_THROWS(dm_ce_loss(zz, tt, {-1.0}));
}

TEST_CASE("asymmetric dm loss") {
  CHECK(asymmetric_dm_loss(vec({0, 0, 0}), 0, 1).value == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(asymmetric_dm_loss(vec({60, 0, 0}), 0, 1).value < 1e-20);
  CHECK(asymmetric_dm_loss(vec({1, 2, 3}), 1, 1).value == 0.0);
  CHECK(std::abs(asymmetric_dm_loss(vec({0.3, 0.1, -2.0, 1.0}), 2, 0).grad_logits.sum()) < 1e-14);
  // Only the labeled direction: half of the symmetric term.
  const Vector z = vec({0.3, 0.1, -2.0, 1.0});
  CHECK(asymmetric_dm_loss(z, 0, 1).value + asymmetric_dm_loss(z, 1, 0).value ==
        doctest::Approx(dm_regularizer(z, 0, 1).value).epsilon(1e-14));
}

TEST_CASE("rescale") {
  CHECK(rescale(Lambda(0.5), {1.0, 1.0}) == 0.5);
  CHECK(rescale(Lambda(0.3), {0.0, 0.0}) == 1.0);
  CHECK(rescale(Lambda(0.0), {0.0, 0.0}) == 0.0);
  CHECK(rescale(Lambda(0.0), {2.0, 0.5}) == 0.0);
  CHECK(rescale(Lambda(0.2), {3.0, 0.0}) == 1.0);
  CHECK(rescale(Lambda(0.2), {0.0, 0.7}) == 1.0);
  CHECK(rescale(Lambda(0.9), {1.0, 0.8}) == 1.0);
  CHECK(rescale(Lambda(0.4), {1.0, 0.8}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(rescale(Lambda(0.4), {0.5, 1.0}) == doctest::Approx(std::sqrt(0.4)).epsilon(1e-15));
  CHECK_THROWS(rescale(Lambda(0.4), {-1.0, 1.0}));
  CHECK_THROWS(rescale(Lambda(0.4), {1.0, 1.5}));

  SUBCASE("monotone and saturating") {
    for (double t : {0.0, 0.25, 0.5, 1.0, 2.0, 4.0}) {
      for (double xi : {0.0, 0.2, 0.5, 0.8, 1.0}) {
        double prev = -1.0;
        for (int k = 0; k <= 1000; ++k) {
          const double r = rescale(Lambda(k / 1000.0), {t, xi});
          CHECK(r >= prev);
          CHECK(r >= 0.0);
          CHECK(r <= 1.0);
          prev = r;
        }
        if (t > 0.0 && xi > 0.0) CHECK(rescale(Lambda(xi), {t, xi}) == 1.0);
      }
    }
  }
}

TEST_CASE("mbce loss") {
  CHECK(mbce_loss(vec({0, 0}), vec({1, 1})).value == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-14));
  const LossResult r = mbce_loss(vec({0, 0, 0}), vec({0.7, 0.3, 0.0}));
  CHECK(r.grad_logits[0] == doctest::Approx(-0.2));
  CHECK(r.grad_logits[1] == doctest::Approx(0.2));
  CHECK(r.grad_logits[2] == doctest::Approx(0.5));

  const Vector z = vec({0.5, -1.5, 2.0});
  Vector stationary(3);
  for (int i = 0; i < 3; ++i) stationary[i] = oracle::logistic(z[i]);
  CHECK(mbce_loss(z, stationary).grad_logits.cwiseAbs().maxCoeff() < 1e-15);

  std::mt19937_64 rng(9);
  std::normal_distribution<double> gauss(0.0, 3.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    Vector zz(6);
    Vector t(6);
    for (int i = 0; i < 6; ++i) {
      zz[i] = gauss(rng);
      t[i] = unit(rng);
    }
    const LossResult res = mbce_loss(zz, t);
    const Vector fd = oracle::central_difference([&](const Vector& x) { return mbce_loss(x, t).value; }, zz);
    CHECK(oracle::relative_error(res.grad_logits, fd) < 1e-8);
  }
  CHECK(std::isfinite(mbce_loss(vec({800, -800}), vec({0, 1})).value));
  CHECK_THROWS(mbce_loss(vec({0, 0}), vec({1.5, 0})));
}

TEST_CASE("bce target construction") {
  const MixedTarget t{0, 2, Lambda(0.4)};
  const Vector one = build_mixed_bce_targets(t, 4, BceTargetMode::one, {});
  CHECK(one[0] == 0.4);
  CHECK(one[2] == doctest::Approx(0.6));
  CHECK(one[1] == 0.0);
  const Vector two = build_mixed_bce_targets(t, 4, BceTargetMode::two, {});
  CHECK(two[0] == 1.0);
  CHECK(two[2] == 1.0);
  CHECK(two.sum() == 2.0);
  CHECK(build_mixed_bce_targets(t, 4, BceTargetMode::rescaled, {1.0, 1.0}) == one);
  const Vector rs = build_mixed_bce_targets(t, 4, BceTargetMode::rescaled, {0.5, 1.0});
  CHECK(rs[0] == doctest::Approx(0.6325).epsilon(1e-4));
  CHECK(rs[2] == doctest::Approx(0.7746).epsilon(1e-4));
  CHECK_THROWS_AS(build_mixed_bce_targets({0, 5, Lambda(0.5)}, 4, BceTargetMode::one, {}), std::out_of_range);
}

TEST_CASE("batch loss") {
  Matrix logits(3, 2);
  logits << 0.1, 0.1, -0.4, -0.4, 1.2, 1.2;
  const std::vector<MixedTarget> same{{0, 2, Lambda(0.6)}, {0, 2, Lambda(0.6)}};
  for (LossKind kind : {LossKind::mce, LossKind::dm_ce, LossKind::mbce_one, LossKind::mbce_two, LossKind::dm_bce}) {
    LossSpec spec;
    spec.kind = kind;
    const BatchLossResult b = batch_loss(logits, same, spec);
    const LossResult single = sample_loss(logits.col(0), same[0], spec);
    CHECK(b.value == doctest::Approx(single.value).epsilon(1e-15));
    CHECK((b.grad_logits.col(0) * 2.0 - single.grad_logits).norm() < 1e-15);
  }

  const std::vector<MixedTarget> mixed{{0, 2, Lambda(0.6)}, {1, 0, Lambda(0.2)}};
  logits(0, 1) = -1.0;
  const BatchLossResult b = batch_loss(logits, mixed, LossSpec{});
  CHECK(b.value == doctest::Approx(0.5 * (mce_loss(logits.col(0), mixed[0]).value + mce_loss(logits.col(1), mixed[1]).value)));

  SUBCASE("finite differences over every entry") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss(0.0, 1.5);
    for (LossKind kind : {LossKind::mce, LossKind::dm_ce, LossKind::mbce_one, LossKind::mbce_two, LossKind::dm_bce}) {
      LossSpec spec;
      spec.kind = kind;
      spec.rescale = {0.5, 1.0};
      spec.bce_eta = kind == LossKind::dm_bce ? 0.3 : 0.0;
      Matrix z(5, 4);
      for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = gauss(rng);
      const std::vector<MixedTarget> ts{{0, 1, Lambda(0.3)}, {2, 4, Lambda(0.8)}, {3, 3, Lambda(1.0)}, {4, 0, Lambda(0.5)}};
      const BatchLossResult r = batch_loss(z, ts, spec);
      Eigen::Map<const Vector> flat(z.data(), z.size());
      const Vector fd = oracle::central_difference(
          [&](const Vector& x) {
            const Matrix m = Eigen::Map<const Matrix>(x.data(), 5, 4);
            return batch_loss(m, ts, spec).value;
          },
          flat);
      const Vector analytic = Eigen::Map<const Vector>(r.grad_logits.data(), r.grad_logits.size());
      CHECK(oracle::relative_error(analytic, fd) < 1e-8);
    }
  }

  CHECK_THROWS(batch_loss(Matrix(3, 0), std::vector<MixedTarget>{}, LossSpec{}));
}

TEST_CASE("stationary points under gradient descent") {
  for (double lambda : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    Vector z = Vector::Zero(3);
    const MixedTarget t{0, 1, Lambda(lambda)};
    for (int it = 0; it < 20000; ++it) z -= 2.0 * mce_loss(z, t).grad_logits;
    const Vector p = oracle::direct_softmax(z);
    CHECK(std::abs(p[0] - lambda) < 1e-3);
    CHECK(std::abs(p[1] - (1.0 - lambda)) < 1e-3);
  }

  // The regularizer alone pushes all mass onto the pair, whatever lambda the
  // sample carried: the objective never sees lambda, so one trajectory suffices.
  Vector z = vec({0.2, -0.1, 0.4, 0.0});
  for (int it = 0; it < 5000; ++it) z -= 1.0 * dm_regularizer(z, 0, 1).grad_logits;
  const Vector p = oracle::direct_softmax(z);
  CHECK(p[0] + p[1] > 0.999);
  CHECK(std::abs(dm_ce_loss(z, {0, 1, Lambda(0.1)}, {1.0}).value - mce_loss(z, {0, 1, Lambda(0.1)}).value -
                 (dm_ce_loss(z, {0, 1, Lambda(0.9)}, {1.0}).value - mce_loss(z, {0, 1, Lambda(0.9)}).value)) < 1e-12);
}

TEST_CASE("validate loss spec") {
  LossSpec spec;
  CHECK_NOTHROW(validate(spec));
  spec.dm.eta = -0.1;
  CHECK_THROWS(validate(spec));
  spec.dm.eta = 0.1;
  spec.rescale.xi = 2.0;
  CHECK_THROWS(validate(spec));
  spec.rescale = {-1.0, 1.0};
  CHECK_THROWS(validate(spec));
}
