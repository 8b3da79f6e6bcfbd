#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rfrk/integrators.hpp"
#include "rfrk/tableau.hpp"
#include "rfrk/types.hpp"

namespace rfrk {

/// Sign of <u, f(t, u)>: zero for conservative, non-positive for
/// dissipative problems.
enum class ConservationClass { conservative, dissipative, generic };

std::string_view to_string(ConservationClass c);

/// A test ODE u' = rhs(t, u) with its default initial state. `exact` is
/// empty when no closed-form solution is known.
struct Problem {
  std::string name;
  int dimension = 0;
  Rhs<double> rhs;
  ConservationClass conservation = ConservationClass::generic;
  std::function<State<double>(double)> exact;
  State<double> initial;
  std::string description;
};

/// splitmix64; the seeded source for white-noise phases.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

// Periodic Fourier collocation on [-pi, pi).

struct SpectralGrid {
  int m = 0;
  Vector<double> x;  // x_j = -pi + 2 pi j / m
  Matrix<double> d;  // first-derivative matrix, skew-symmetric
};

/// Requires even m >= 4.
SpectralGrid fourier_grid(int m);

/// u' = -D u. The initial state is left empty; pick white_noise_init or
/// smooth_init.
Problem advection_problem(const SpectralGrid& g);

/// Real state whose modes 1..m/2-1 have unit amplitude and seeded random
/// phase; mode 0 is 1 and the Nyquist mode is 0.
State<double> white_noise_init(int m, std::uint64_t seed);

/// sech^2(7.5 (x + 1)) at the grid nodes.
State<double> smooth_init(const SpectralGrid& g);

/// All m coefficients of u_j = sum_k uhat_k exp(i k x_j), by direct summation.
std::vector<std::complex<double>> dft(const State<double>& u);

/// |uhat_k| for k = 0..m/2-1.
Vector<double> dft_amplitudes(const State<double>& u);

inline constexpr double kUndefinedModeTol = 1e-14;

/// (after - before)/before per mode; nullopt where |before| < 1e-14.
std::vector<std::optional<double>> relative_amplification(const Vector<double>& before,
                                                          const Vector<double>& after);

/// Largest linearly stable step for the m-point advection operator,
/// I(A,b)/(m/2 - 1). Propagates NoStableIntervalError.
double dt_max(const ButcherTableau<double>& t, int m);

/// The upper-triangular 3x3 generator with -1 on the diagonal and -2 above.
Matrix<double> dissipative_matrix();

/// u' = L u, starting from the dominant right singular vector of R(0.5 L)
/// for the classical RK(4,4) polynomial R.
Problem dissipative_system();

/// Dominant right singular vector of `m` by power iteration on m^T m from
/// the normalized ones vector. Sign fixed so the first nonzero entry is
/// positive. Throws SingularVectorError on non-convergence or when the two
/// leading singular values coincide.
Vector<double> right_singular_vector(const Matrix<double>& m);

/// u' = [-u2, u1] / ||u||^2 from [1, 0]; exact solution [cos t, sin t].
Problem oscillator_problem();

/// Two-point entropy-conservative flux (a^2 + ab + b^2)/6.
inline double burgers_flux(double a, double b) { return (a * a + a * b + b * b) / 6.0; }

/// Periodic inviscid Burgers on [-1, 1) with `n_points` cells and the
/// initial profile exp(-30 x^2).
Problem burgers_problem(int n_points = 50);

/// Grid spacing of burgers_problem(n_points).
inline double burgers_dx(int n_points = 50) { return 2.0 / n_points; }

/// Fine-step classical BSRK(8,5) solution of `p` from t = 0, landing exactly
/// on the requested time with steps no longer than `max_step`.
std::function<State<double>(double)> reference_solution(const Problem& p,
                                                        double max_step = 1e-4);

}  // namespace rfrk
