#include "meissner/numerics.hpp"

#include "meissner/errors.hpp"

#include <numbers>

namespace meissner {

EllipticKE elliptic_ke(double m, double tol) {
  if (!(m >= 0.0 && m < 1.0)) {
    throw InvalidArgument("elliptic_ke: parameter must lie in [0, 1)");
  }
  double a = 1.0;
  double b = std::sqrt(1.0 - m);
  double c = std::sqrt(m);
  double weight = 0.5;
  double sum = weight * c * c;
  for (int iter = 0; iter < 64 && std::abs(a - b) > tol * a; ++iter) {
    c = 0.5 * (a - b);
    const double next_a = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = next_a;
    weight *= 2.0;
    sum += weight * c * c;
  }
  const double K = std::numbers::pi / (2.0 * a);
  return {K, K * (1.0 - sum)};
}

}  // namespace meissner
