#pragma once

// Dense arithmetic kernels used by the network and the scorer.
//
// Every kernel has a portable scalar reference in kernels::scalar and, on
// x86-64, an AVX2/FMA variant in kernels::avx2. Callers go through active(),
// which picks the widest variant the CPU supports the first time it is used.
// Set DBDIAG_ISA=scalar in the environment to force the reference path.

#include <cstddef>
#include <string_view>

namespace dbdiag::kernels {

enum class Isa { Scalar, Avx2 };

struct AdamCoefficients {
  double stepSize;  // learning rate with both bias corrections folded in
  double beta1;
  double beta2;
  double eps;       // added to sqrt(v) after the v bias correction
  double vCorrection;  // 1 / (1 - beta2^t)
};

struct KernelTable {
  Isa isa;
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
  // sum_i (x_i - y_i)^2
  double (*sum_sq_diff)(const double* x, const double* y, std::size_t n);
  // In-place ADAM moment update and parameter step.
  void (*adam_update)(double* param, const double* grad, double* m, double* v, std::size_t n,
                      const AdamCoefficients& c);
};

namespace scalar {
void axpy(double a, const double* x, double* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
double sum_sq_diff(const double* x, const double* y, std::size_t n);
void adam_update(double* param, const double* grad, double* m, double* v, std::size_t n,
                 const AdamCoefficients& c);
}  // namespace scalar

namespace avx2 {
void axpy(double a, const double* x, double* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
double sum_sq_diff(const double* x, const double* y, std::size_t n);
void adam_update(double* param, const double* grad, double* m, double* v, std::size_t n,
                 const AdamCoefficients& c);
}  // namespace avx2

bool isa_supported(Isa isa);
const KernelTable& table(Isa isa);

/// The table in use by the library.
const KernelTable& active();

/// Overrides the runtime selection. Throws ConfigError when the CPU (or the
/// build) lacks the requested ISA.
void set_active(Isa isa);

std::string_view isa_name(Isa isa);

}  // namespace dbdiag::kernels
