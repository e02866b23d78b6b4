#include "dbdiag/kernels.hpp"

#include <cmath>

namespace dbdiag::kernels::scalar {

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

double sum_sq_diff(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

void adam_update(double* param, const double* grad, double* m, double* v, std::size_t n,
                 const AdamCoefficients& c) {
  const double oneMinusB1 = 1.0 - c.beta1;
  const double oneMinusB2 = 1.0 - c.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    m[i] = c.beta1 * m[i] + oneMinusB1 * g;
    v[i] = c.beta2 * v[i] + oneMinusB2 * (g * g);
    param[i] -= c.stepSize * m[i] / (std::sqrt(v[i] * c.vCorrection) + c.eps);
  }
}

}  // namespace dbdiag::kernels::scalar
