#include <doctest.h>

#include <cmath>
#include <numeric>

#include "demix/mixers.hpp"
#include "oracles.hpp"

using namespace demix;

namespace {

Vector random_vector(Rng& rng, Eigen::Index n) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector v(n);
  for (auto& x : v) x = unit(rng);
  return v;
}

}  // namespace

TEST_CASE("lambda type") {
  CHECK(Lambda(0.25).complement().value() == 0.75);
  CHECK_THROWS_AS(Lambda(-0.01), std::invalid_argument);
  CHECK_THROWS_AS(Lambda(1.01), std::invalid_argument);
  CHECK_THROWS_AS(Lambda(std::nan("")), std::invalid_argument);
}

TEST_CASE("sample_lambda") {
  Rng rng(1234);
  CHECK_THROWS(sample_lambda(0.0, rng));
  CHECK_THROWS(sample_lambda(-1.0, rng));

  SUBCASE("alpha 1 is uniform") {
    std::vector<double> xs(100000);
    for (auto& x : xs) x = sample_lambda(1.0, rng).value();
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    CHECK(std::abs(mean - 0.5) < 0.005);
    // 1% critical value for n = 1e5 is 1.628 / sqrt(n).
    CHECK(oracle::ks_uniform(xs) < 1.628 / std::sqrt(1e5));
  }

  SUBCASE("alpha 0.2 variance") {
    const int n = 100000;
    double sum = 0.0;
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = sample_lambda(0.2, rng).value();
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
      sum += x;
      sq += x * x;
    }
    const double mean = sum / n;
    const double variance = sq / n - mean * mean;
    CHECK(std::abs(variance - 1.0 / (4.0 * (2.0 * 0.2 + 1.0))) < 0.005);
    CHECK(std::abs(mean - 0.5) < 0.01);
  }

  SUBCASE("alpha 2 matches Beta(2,2) moments") {
    const int n = 100000;
    double sum = 0.0;
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = sample_lambda(2.0, rng).value();
      sum += x;
      sq += x * x;
    }
    const double mean = sum / n;
    CHECK(std::abs(sq / n - mean * mean - 0.05) < 0.002);
  }

  SUBCASE("tiny alpha still in range") {
    for (int i = 0; i < 2000; ++i) {
      const double x = sample_lambda(0.01, rng).value();
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
  }

  SUBCASE("seeded streams repeat") {
    Rng r1(5);
    Rng r2(5);
    for (int i = 0; i < 50; ++i) CHECK(sample_lambda(0.2, r1) == sample_lambda(0.2, r2));
  }
}

TEST_CASE("mix_linear") {
  Vector a(2);
  a << 0, 2;
  Vector b(2);
  b << 4, 0;
  const Vector m = mix_linear(a, b, Lambda(0.25));
  CHECK(m[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(m[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(mix_linear(a, b, Lambda(1.0)) == a);
  CHECK(mix_linear(a, b, Lambda(0.0)) == b);
  CHECK_THROWS_AS(mix_linear(a, Vector::Zero(3), Lambda(0.5)), std::invalid_argument);

  Rng rng(42);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const Vector x = random_vector(rng, 17);
    const Vector y = random_vector(rng, 17);
    const double l = unit(rng);
    // Exact symmetry and idempotence.
    CHECK(mix_linear(x, y, Lambda(l)) == mix_linear(y, x, Lambda(l).complement()));
    CHECK(mix_linear(x, x, Lambda(l)) == x);
    const auto [wa, wb] = mix_weights(Lambda(l));
    CHECK(wa + wb == 1.0);
    CHECK((mix_linear(x, y, Lambda(l)) - (l * x + (1.0 - l) * y)).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("cutmix mask") {
  Rng rng(7);
  const MaskedMix full = make_cutmix_mask(28, 28, Lambda(1.0), rng);
  CHECK(full.lambda.value() == 1.0);
  for (double v : full.mask.values) CHECK(v == 1.0);

  const MaskedMix centred = cutmix_mask_at(28, 28, Lambda(0.75), 14, 14);
  CHECK(centred.lambda.value() == 1.0 - 196.0 / 784.0);
  int zeros = 0;
  for (int y = 0; y < 28; ++y) {
    for (int x = 0; x < 28; ++x) {
      const bool inside = y >= 7 && y < 21 && x >= 7 && x < 21;
      CHECK(centred.mask.at(y, x) == (inside ? 0.0 : 1.0));
      zeros += centred.mask.at(y, x) == 0.0;
    }
  }
  CHECK(zeros == 196);

  // Corner centre clips to a quarter of the box.
  const MaskedMix corner = cutmix_mask_at(28, 28, Lambda(0.75), 0, 0);
  CHECK(corner.lambda.value() == 1.0 - 49.0 / 784.0);

  CHECK(cutmix_mask_at(28, 28, Lambda(0.0), 14, 14).lambda.value() == 0.0);
  CHECK_THROWS(make_cutmix_mask(0, 5, Lambda(0.5), rng));

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int k = 0; k < 500; ++k) {
    const int h = 1 + k % 31;
    const int w = 1 + (k * 7) % 29;
    const MaskedMix mm = make_cutmix_mask(h, w, Lambda(unit(rng)), rng);
    CHECK(mm.lambda.value() == mm.mask.mean());
    for (double v : mm.mask.values) CHECK((v == 0.0 || v == 1.0));
  }
}

TEST_CASE("apply_mask") {
  const ImageShape shape{2, 4, 4};
  Rng rng(3);
  const Vector a = random_vector(rng, shape.size());
  const Vector b = random_vector(rng, shape.size());
  MixMask ones{4, 4, std::vector<double>(16, 1.0)};
  MixMask zeros{4, 4, std::vector<double>(16, 0.0)};
  CHECK(apply_mask(a, b, ones, shape) == a);
  CHECK(apply_mask(a, b, zeros, shape) == b);

  MixMask checker{4, 4, std::vector<double>(16)};
  for (int i = 0; i < 16; ++i) checker.values[i] = ((i / 4 + i % 4) % 2) ? 1.0 : 0.0;
  const Vector out = apply_mask(Vector::Ones(shape.size()), Vector::Zero(shape.size()), checker, shape);
  CHECK(out.mean() == checker.mean());
  // Same mask on every channel.
  CHECK(out.head(16) == out.tail(16));

  CHECK_THROWS(apply_mask(a, b, MixMask{3, 4, std::vector<double>(12, 1.0)}, shape));
  CHECK_THROWS(apply_mask(a, Vector::Zero(3), ones, shape));
}

TEST_CASE("resizemix") {
  const ImageShape shape{1, 28, 28};
  Rng rng(19);
  const Vector a = random_vector(rng, shape.size());
  const Vector b = random_vector(rng, shape.size());

  const ResizeMixResult same = make_resizemix(a, b, shape, Lambda(1.0), rng);
  CHECK(same.image == a);
  CHECK(same.lambda.value() == 1.0);

  const ResizeMixResult whole = make_resizemix(a, b, shape, Lambda(0.0), rng);
  CHECK(whole.image == resize_nearest(b, shape, 28, 28));
  CHECK(whole.image == b);
  CHECK(whole.lambda.value() == 0.0);

  const ResizeMixResult quarter = resizemix_at(a, b, shape, Lambda(0.75), 3, 5);
  CHECK(quarter.lambda.value() == 0.75);
  for (int y = 0; y < 14; ++y) {
    for (int x = 0; x < 14; ++x) {
      // Nearest neighbour at factor 2 reads every other source pixel.
      CHECK(quarter.image[(3 + y) * 28 + 5 + x] == b[(2 * y) * 28 + 2 * x]);
    }
  }
  CHECK(quarter.image[0] == a[0]);
  CHECK_THROWS(resizemix_at(a, b, shape, Lambda(0.75), 20, 0));

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const ResizeMixResult r = make_resizemix(a, b, shape, Lambda(unit(rng)), rng);
    CHECK(r.lambda.value() == r.mask.mean());
    for (Eigen::Index i = 0; i < r.image.size(); ++i) {
      const double h = r.mask.values[static_cast<std::size_t>(i)];
      if (h == 1.0) CHECK(r.image[i] == a[i]);
    }
  }
}

TEST_CASE("mix_batch") {
  const ImageShape shape{1, 6, 6};
  Rng rng(100);
  Matrix x(shape.size(), 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = static_cast<double>(i % 97) / 97.0;
  const std::vector<int> labels{0, 1, 2, 1};

  SUBCASE("identity pairing gives same-class targets") {
    const std::vector<int> identity{0, 1, 2, 3};
    MixConfig config;
    const MixedBatch mb = mix_batch_with_pairing(x, labels, shape, config, identity, rng);
    for (const auto& t : mb.targets) CHECK(t.class_a == t.class_b);
    CHECK(mb.inputs == x);
  }

  SUBCASE("lambda 1 leaves inputs untouched") {
    for (MixPolicy p : {MixPolicy::linear, MixPolicy::cutmix, MixPolicy::resizemix, MixPolicy::manifold}) {
      MixConfig config{p, 0.2, true, 1.0};
      const MixedBatch mb = mix_batch(x, labels, shape, config, rng);
      CHECK(mb.inputs == x);
      for (const auto& t : mb.targets) CHECK(t.lambda.value() == 1.0);
    }
  }

  SUBCASE("recompute every mixed pixel") {
    MixConfig config{MixPolicy::linear, 0.2, true, std::nullopt};
    const MixedBatch mb = mix_batch(x, labels, shape, config, rng);
    CHECK(is_permutation(mb.pairing));
    for (int i = 0; i < 4; ++i) {
      const int j = mb.pairing[i];
      CHECK(mb.targets[i].class_a == labels[i]);
      CHECK(mb.targets[i].class_b == labels[j]);
      CHECK(mb.inputs.col(i) == mix_linear(x.col(i), x.col(j), mb.targets[i].lambda));
    }

    config.policy = MixPolicy::cutmix;
    const MixedBatch cut = mix_batch(x, labels, shape, config, rng);
    for (int i = 0; i < 4; ++i) {
      const Vector col = cut.inputs.col(i);
      const Vector xa = x.col(i);
      const Vector xb = x.col(cut.pairing[i]);
      int from_a = 0;
      for (int p = 0; p < shape.size(); ++p) {
        CHECK((col[p] == xa[p] || col[p] == xb[p]));
        from_a += col[p] == xa[p] && xa[p] != xb[p];
      }
      CHECK(cut.targets[i].lambda.value() >= 0.0);
    }
  }

  SUBCASE("per-sample lambdas differ") {
    MixConfig config{MixPolicy::linear, 1.0, false, std::nullopt};
    const MixedBatch mb = mix_batch(x, labels, shape, config, rng);
    CHECK(mb.targets[0].lambda != mb.targets[1].lambda);
    config.policy = MixPolicy::manifold;
    CHECK_THROWS(mix_batch(x, labels, shape, config, rng));
  }

  SUBCASE("manifold defers the mix") {
    MixConfig config{MixPolicy::manifold, 0.2, true, std::nullopt};
    const MixedBatch mb = mix_batch(x, labels, shape, config, rng);
    CHECK(mb.inputs == x);
    REQUIRE(mb.hidden_lambda.has_value());
    for (const auto& t : mb.targets) CHECK(t.lambda == *mb.hidden_lambda);
  }

  SUBCASE("none policy") {
    MixConfig config{MixPolicy::none, 0.2, true, std::nullopt};
    const MixedBatch mb = mix_batch(x, labels, shape, config, rng);
    CHECK(mb.inputs == x);
    for (int i = 0; i < 4; ++i) CHECK(mb.targets[i] == MixedTarget::single(labels[i]));
  }

  SUBCASE("errors") {
    MixConfig config;
    CHECK_THROWS(mix_batch(Matrix(shape.size(), 0), std::vector<int>{}, shape, config, rng));
    CHECK_THROWS(mix_batch(x, std::vector<int>{0, 1}, shape, config, rng));
    const std::vector<int> bad{0, 0, 1, 2};
    CHECK_THROWS(mix_batch_with_pairing(x, labels, shape, config, bad, rng));
    config.alpha = 0.0;
    CHECK_THROWS(mix_batch(x, labels, shape, config, rng));
  }

  SUBCASE("pairing is a bijection for many seeds") {
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
      Rng r(seed);
      const int n = 1 + static_cast<int>(seed % 40);
      Matrix xs = Matrix::Zero(shape.size(), n);
      std::vector<int> ls(static_cast<std::size_t>(n), 0);
      const MixedBatch mb = mix_batch(xs, ls, shape, MixConfig{}, r);
      CHECK(is_permutation(mb.pairing));
      CHECK(mb.targets.size() == static_cast<std::size_t>(n));
    }
  }
}

TEST_CASE("asymmetric_pair") {
  const Vector ones = Vector::Ones(5);
  const Vector zeros = Vector::Zero(5);
  CHECK(asymmetric_pair(ones, zeros, Lambda(0.9)).lambda.value() == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(asymmetric_pair(ones, zeros, Lambda(0.3)).lambda.value() == 0.3);
  const AsymmetricMix m = asymmetric_pair(ones, zeros, Lambda(0.8));
  for (double v : m.input) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
  CHECK_THROWS(asymmetric_pair(ones, Vector::Zero(4), Lambda(0.5)));

  Rng rng(8);
  for (int k = 0; k < 1000; ++k) CHECK(asymmetric_pair(ones, zeros, sample_lambda(0.5, rng)).lambda.value() <= 0.5);
}
