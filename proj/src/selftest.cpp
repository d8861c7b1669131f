#include "demix/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "demix/losses.hpp"

namespace demix {

double relative_error(const Vector& a, const Vector& b, double floor) {
  return (a - b).norm() / std::max({a.norm(), b.norm(), floor});
}

namespace {

CheckResult gradient_check(std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 2.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  int cases = 0;
  for (int classes : {2, 3, 10}) {
    std::uniform_int_distribution<int> cls(0, classes - 1);
    for (int k = 0; k < 40; ++k, ++cases) {
      Vector z(classes);
      for (auto& v : z) v = gauss(rng);
      const int a = cls(rng);
      int b = cls(rng);
      while (b == a) b = cls(rng);
      const MixedTarget t{a, b, Lambda(unit(rng))};
      const Vector fd_mce = central_difference([&](const Vector& x) { return mce_loss(x, t).value; }, z);
      const Vector fd_dm = central_difference([&](const Vector& x) { return dm_regularizer(x, a, b).value; }, z);
      worst = std::max(worst, relative_error(mce_loss(z, t).grad_logits, fd_mce));
      worst = std::max(worst, relative_error(dm_regularizer(z, a, b).grad_logits, fd_dm));
    }
  }
  std::ostringstream d;
  d << cases << " cases, worst relative error " << worst;
  return {"gradient_finite_difference", worst < 1e-6, d.str()};
}

CheckResult mce_stationarity() {
  double worst = 0.0;
  for (double l : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const MixedTarget t{0, 1, Lambda(l)};
    Vector z = Vector::Zero(3);
    for (int it = 0; it < 20000; ++it) z -= 2.0 * mce_loss(z, t).grad_logits;
    const Vector p = softmax(z);
    worst = std::max({worst, std::abs(p[0] - l), std::abs(p[1] - (1.0 - l))});
  }
  std::ostringstream d;
  d << "max |p - target| " << worst;
  return {"mce_stationarity", worst < 1e-3, d.str()};
}

CheckResult dm_stationarity() {
  Vector z = Vector::Zero(3);
  for (int it = 0; it < 20000; ++it) z -= 2.0 * dm_regularizer(z, 0, 1).grad_logits;
  const Vector p = softmax(z);
  std::ostringstream d;
  d << "p_a + p_b = " << p[0] + p[1];
  return {"dm_mutual_boost", p[0] + p[1] > 0.999, d.str()};
}

}  // namespace

std::vector<CheckResult> run_selftest(std::uint64_t seed) {
  return {gradient_check(seed), mce_stationarity(), dm_stationarity()};
}

}  // namespace demix
