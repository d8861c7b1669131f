#pragma once

#include <string>
#include <vector>

#include "demix/types.hpp"

namespace demix {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Central-difference gradient of a scalar function of the logits.
template <typename F>
Vector central_difference(F&& f, const Vector& z, double h = 1e-5) {
  Vector g(z.size());
  Vector probe = z;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    probe[i] = z[i] + h;
    const double up = f(probe);
    probe[i] = z[i] - h;
    const double down = f(probe);
    probe[i] = z[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||, floor).
double relative_error(const Vector& a, const Vector& b, double floor = 1e-12);

/// Finite-difference checks of the MCE and DM gradients plus gradient-descent
/// stationarity runs for both objectives.
std::vector<CheckResult> run_selftest(std::uint64_t seed = 2022);

}  // namespace demix
