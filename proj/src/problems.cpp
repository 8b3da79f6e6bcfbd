#include "rfrk/problems.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "rfrk/stability.hpp"

namespace rfrk {

std::string_view to_string(ConservationClass c) {
  switch (c) {
    case ConservationClass::conservative: return "conservative";
    case ConservationClass::dissipative: return "dissipative";
    case ConservationClass::generic: return "generic";
  }
  return "?";
}

namespace {

Vector<double> periodic_nodes(int m) {
  Vector<double> x(m);
  for (int j = 0; j < m; ++j) x(j) = -std::numbers::pi + 2.0 * std::numbers::pi * j / m;
  return x;
}

}  // namespace

SpectralGrid fourier_grid(int m) {
  if (m < 4 || m % 2 != 0) {
    throw std::invalid_argument("fourier grid needs an even point count >= 4");
  }
  SpectralGrid g;
  g.m = m;
  g.x = periodic_nodes(m);
  g.d = Matrix<double>::Zero(m, m);
  // The entry depends on j - l only; evaluate it once per offset so that
  // D_jl = -D_lj holds bit for bit.
  const double h = 2.0 * std::numbers::pi / m;
  for (int j = 0; j < m; ++j) {
    for (int l = j + 1; l < m; ++l) {
      const int offset = j - l;  // negative
      const double sign = (offset % 2 == 0) ? 1.0 : -1.0;
      const double entry = 0.5 * sign / std::tan(offset * h / 2.0);
      g.d(j, l) = entry;
      g.d(l, j) = -entry;
    }
  }
  return g;
}

Problem advection_problem(const SpectralGrid& g) {
  Problem p;
  p.name = "advection";
  p.dimension = g.m;
  const Matrix<double> d = g.d;
  p.rhs = [d](double, const State<double>& u) -> State<double> { return -(d * u); };
  p.conservation = ConservationClass::conservative;
  p.description = "Fourier collocation of u_t + u_x = 0 on [-pi, pi), m = " +
                  std::to_string(g.m);
  return p;
}

State<double> white_noise_init(int m, std::uint64_t seed) {
  if (m < 4 || m % 2 != 0) throw std::invalid_argument("white noise needs an even m >= 4");
  SplitMix64 rng(seed);
  const auto x = periodic_nodes(m);
  State<double> u = State<double>::Ones(m);  // mode 0
  for (int k = 1; k < m / 2; ++k) {
    const double theta = 2.0 * std::numbers::pi * rng.uniform();
    // uhat_k e^{ikx} + conj(uhat_k) e^{-ikx} = 2 cos(kx + theta)
    for (int j = 0; j < m; ++j) u(j) += 2.0 * std::cos(k * x(j) + theta);
  }
  return u;
}

State<double> smooth_init(const SpectralGrid& g) {
  State<double> u(g.m);
  for (int j = 0; j < g.m; ++j) {
    const double s = 1.0 / std::cosh(7.5 * (g.x(j) + 1.0));
    u(j) = s * s;
  }
  return u;
}

std::vector<std::complex<double>> dft(const State<double>& u) {
  const auto m = static_cast<int>(u.size());
  const auto x = periodic_nodes(m);
  std::vector<std::complex<double>> out(m);
  for (int k = 0; k < m; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (int j = 0; j < m; ++j) acc += u(j) * std::polar(1.0, -k * x(j));
    out[k] = acc / static_cast<double>(m);
  }
  return out;
}

Vector<double> dft_amplitudes(const State<double>& u) {
  const auto coeffs = dft(u);
  const auto half = static_cast<int>(u.size()) / 2;
  Vector<double> amps(half);
  for (int k = 0; k < half; ++k) amps(k) = std::abs(coeffs[k]);
  return amps;
}

std::vector<std::optional<double>> relative_amplification(const Vector<double>& before,
                                                          const Vector<double>& after) {
  if (before.size() != after.size()) throw LengthMismatchError(before.size(), after.size());
  std::vector<std::optional<double>> out(before.size());
  for (Eigen::Index k = 0; k < before.size(); ++k) {
    if (std::abs(before(k)) >= kUndefinedModeTol) out[k] = (after(k) - before(k)) / before(k);
  }
  return out;
}

double dt_max(const ButcherTableau<double>& t, int m) {
  if (m < 4) throw std::invalid_argument("dt_max needs m >= 4");
  return imaginary_axis_limit(stability_polynomial(t)) / (m / 2 - 1);
}

Matrix<double> dissipative_matrix() {
  Matrix<double> l(3, 3);
  l << -1, -2, -2,
        0, -1, -2,
        0,  0, -1;
  return l;
}

Vector<double> right_singular_vector(const Matrix<double>& m) {
  const Matrix<double> b = m.transpose() * m;
  const auto n = b.rows();
  Vector<double> v = Vector<double>::Ones(n) / std::sqrt(static_cast<double>(n));
  bool converged = false;
  for (int iter = 0; iter < 100000; ++iter) {
    Vector<double> w = b * v;
    const double norm = w.norm();
    if (norm == 0.0) throw SingularVectorError("start vector lies in the null space");
    w /= norm;
    const double change = (w - v).norm();
    v = w;
    if (change <= 1e-14) {
      converged = true;
      break;
    }
  }
  if (!converged) throw SingularVectorError("power iteration did not converge");

  const double sigma2 = v.dot(b * v);
  if ((b * v - sigma2 * v).norm() > 1e-12 * sigma2) {
    throw SingularVectorError("singular vector residual too large");
  }

  // Deflate and look for a second singular value equal to the first.
  const Matrix<double> deflated = b - sigma2 * v * v.transpose();
  Vector<double> x = Vector<double>::LinSpaced(n, 1.0, 2.0);
  x -= x.dot(v) * v;
  double second = 0.0;
  if (x.norm() > 0.0) {
    x.normalize();
    for (int iter = 0; iter < 1000; ++iter) {
      Vector<double> y = deflated * x;
      second = x.dot(y);
      if (y.norm() == 0.0) break;
      x = y.normalized();
    }
  }
  if (second >= (1.0 - 1e-8) * sigma2) {
    throw SingularVectorError("leading singular value is not simple");
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(v(i)) > 1e-14) {
      if (v(i) < 0) v = -v;
      break;
    }
  }
  return v;
}

Problem dissipative_system() {
  const Matrix<double> l = dissipative_matrix();
  const auto poly = stability_polynomial(builtin_tableau("RK44"));
  const Matrix<double> z = 0.5 * l;
  Matrix<double> r = poly.coeffs(poly.degree()) * Matrix<double>::Identity(3, 3);
  for (int j = poly.degree() - 1; j >= 0; --j) {
    r = r * z + poly.coeffs(j) * Matrix<double>::Identity(3, 3);
  }

  Problem p;
  p.name = "dissipative";
  p.dimension = 3;
  p.rhs = [l](double, const State<double>& u) -> State<double> { return l * u; };
  p.conservation = ConservationClass::dissipative;
  p.initial = right_singular_vector(r);
  p.description = "u' = L u, L upper triangular with L + L^T negative definite";
  return p;
}

Problem oscillator_problem() {
  Problem p;
  p.name = "oscillator";
  p.dimension = 2;
  p.rhs = [](double, const State<double>& u) -> State<double> {
    const double n2 = u(0) * u(0) + u(1) * u(1);
    if (n2 == 0.0) throw NonFiniteError("oscillator right-hand side is undefined at u = 0");
    State<double> f(2);
    f << -u(1) / n2, u(0) / n2;
    return f;
  };
  p.conservation = ConservationClass::conservative;
  p.exact = [](double t) -> State<double> {
    State<double> e(2);
    e << std::cos(t), std::sin(t);
    return e;
  };
  p.initial = p.exact(0.0);
  p.description = "u' = [-u2, u1] / ||u||^2";
  return p;
}

Problem burgers_problem(int n_points) {
  if (n_points < 3) throw std::invalid_argument("burgers needs at least 3 points");
  const double dx = burgers_dx(n_points);
  Problem p;
  p.name = "burgers";
  p.dimension = n_points;
  p.rhs = [n_points, dx](double, const State<double>& u) -> State<double> {
    // flux(i) = F_{i+1/2}, with u_n == u_0
    Vector<double> flux(n_points);
    for (int i = 0; i < n_points; ++i) flux(i) = burgers_flux(u(i), u((i + 1) % n_points));
    State<double> f(n_points);
    for (int i = 0; i < n_points; ++i) {
      f(i) = -(flux(i) - flux((i + n_points - 1) % n_points)) / dx;
    }
    return f;
  };
  p.conservation = ConservationClass::conservative;
  p.initial.resize(n_points);
  for (int i = 0; i < n_points; ++i) {
    const double x = -1.0 + i * dx;
    p.initial(i) = std::exp(-30.0 * x * x);
  }
  p.description = "periodic inviscid Burgers, entropy-conservative flux, " +
                  std::to_string(n_points) + " points";
  return p;
}

std::function<State<double>(double)> reference_solution(const Problem& p, double max_step) {
  const auto tableau = builtin_tableau("BSRK85");
  return [rhs = p.rhs, u0 = p.initial, tableau, max_step](double t) -> State<double> {
    if (t <= 0.0) return u0;
    const auto n = static_cast<std::size_t>(std::ceil(t / max_step));
    const double h = t / static_cast<double>(n);
    State<double> u = u0;
    for (std::size_t i = 0; i < n; ++i) {
      u = step<double>(Method::classical, tableau, nullptr, rhs, i * h, u, h).state;
    }
    return u;
  };
}

}  // namespace rfrk
