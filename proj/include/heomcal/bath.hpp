#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

#include "heomcal/platform.hpp"

namespace heomcal::bath {

using cplx = std::complex<double>;

struct SpectralGrid {
  std::vector<double> omegas;  // rad/ns, strictly increasing
  std::vector<double> values;
};

struct CorrelationTrace {
  std::vector<double> times;  // ns, times[0] == 0
  std::vector<cplx> values;
  double quad_error = 0.0;  // largest absolute quadrature error estimate over the grid
};

struct ExpMode {
  cplx coeff;
  cplx decay;  // Re(decay) > 0
};

struct ExpDecomposition {
  std::vector<ExpMode> modes;
  double rel_rms_residual = 0.0;
  std::string method_tag;
  bool rank_deficient = false;  // fewer modes than requested were resolvable

  cplx evaluate(double t) const;
  ExpDecomposition scaled(double factor) const;
};

/// Soft rational cutoff window [1+(w_lc/w)^2]^-1 [1+(w/w_hc)^2]^-1.
double cutoff_window(const BathSpec& bath, double omega);

/// Windowed Burkard density 2*pi*A0/|w| * window(w). Even in omega; zero at w = 0.
double spectral_density(const BathSpec& bath, double omega);

SpectralGrid spectral_grid(const BathSpec& bath, std::size_t points);

/// Default correlation time grid: t = 0, logarithmic on [1e-3, 20] ns, then
/// linear up to 2000 ns. 2000 points total.
std::vector<double> default_correlation_grid(std::size_t points = 2000, double t_max = 2000.0);

/// C(t) = (1/pi) int_0^inf dw S(w) [coth(w/2kT) cos(wt) - i sin(wt)] by
/// adaptive quadrature. `rel_tol` is the target relative accuracy.
CorrelationTrace correlation_function(const BathSpec& bath, std::span<const double> times,
                                      double rel_tol = 1e-10);

/// Fit k complex exponentials sum_k c_k exp(-nu_k t) to a correlation trace.
/// Matrix-pencil seeding on several uniform resamplings, greedy mode
/// selection, then variable-projection Levenberg-Marquardt refinement of the
/// decay rates on the full grid. With `real_decays` the rates are kept real.
ExpDecomposition exp_decompose(const CorrelationTrace& corr, int k, bool real_decays = true);

/// ||sum c_k e^{-nu_k t} - C(t)||_2 / ||C(t)||_2 over the trace grid.
double decomposition_residual(const ExpDecomposition& decomp, const CorrelationTrace& corr);

/// Matrix pencil estimate of decay rates from uniformly sampled data.
std::vector<cplx> matrix_pencil_decays(std::span<const cplx> samples, double dt, int k);

/// Least-squares coefficients for fixed decay rates on an arbitrary grid.
std::vector<cplx> fit_coefficients(std::span<const double> times, std::span<const cplx> values,
                                   std::span<const cplx> decays);

}  // namespace heomcal::bath
