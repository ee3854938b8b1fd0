#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "traplab/mittag_leffler.hpp"
#include "traplab/quadrature.hpp"
#include "traplab/rng.hpp"
#include "traplab/stable.hpp"
#include "traplab/walker.hpp"

// Fractional kinetics equation d^beta u / dt^beta = D Lap u (Caputo), solved
// three independent ways:
//   * L1 time discretization, implicit in the Laplacian, on periodic grids;
//   * spectral (Fourier mode) solution via Mittag-Leffler decay factors;
//   * stochastic subordination of the heat semigroup.

namespace traplab {

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Grid1D {
  double x0 = 0.0;
  double h = 1.0;
  int n = 2;
  double period() const { return h * n; }
  double x(int i) const { return x0 + h * i; }
};

struct Grid2D {
  double x0 = 0.0, y0 = 0.0;
  double h = 1.0;
  int nx = 2, ny = 2;
};

namespace detail {

// Thomas solve of a constant-coefficient cyclic tridiagonal system
// (d on the diagonal, o on the off-diagonals and corners).
inline void cyclic_tridiag_solve(double d, double o, std::vector<double>* rhs) {
  const std::size_t n = rhs->size();
  if (n < 3) throw SolverError("cyclic_tridiag_solve: need at least 3 nodes");
  std::vector<double>& x = *rhs;
  const double gamma = -d;
  std::vector<double> b(n, d), u(n, 0.0), z(n), y(n);
  b[0] = d - gamma;
  b[n - 1] = d - o * o / gamma;
  u[0] = gamma;
  u[n - 1] = o;

  auto thomas = [&](const std::vector<double>& diag, std::vector<double> r) {
    std::vector<double> c(n, 0.0);
    c[0] = o / diag[0];
    r[0] /= diag[0];
    for (std::size_t i = 1; i < n; ++i) {
      const double m = diag[i] - o * c[i - 1];
      c[i] = o / m;
      r[i] = (r[i] - o * r[i - 1]) / m;
    }
    for (std::size_t i = n - 1; i-- > 0;) r[i] -= c[i] * r[i + 1];
    return r;
  };

  y = thomas(b, x);
  z = thomas(b, u);
  const double num = y[0] + y[n - 1] * o / gamma;
  const double den = 1.0 + z[0] + z[n - 1] * o / gamma;
  for (std::size_t i = 0; i < n; ++i) x[i] = y[i] - z[i] * num / den;
}

// Conjugate gradient for (I - c Lap_h) on a periodic 2-D grid, matrix-free.
inline void cg_2d_solve(int nx, int ny, double c, std::vector<double>* rhs,
                        double tol = 1e-13, int max_iters = 100000) {
  const std::size_t n = static_cast<std::size_t>(nx) * ny;
  auto idx = [&](int i, int j) {
    return static_cast<std::size_t>(((i + nx) % nx) * ny + ((j + ny) % ny));
  };
  auto apply = [&](const std::vector<double>& v, std::vector<double>* out) {
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < ny; ++j) {
        const double lap = v[idx(i - 1, j)] + v[idx(i + 1, j)] + v[idx(i, j - 1)] +
                           v[idx(i, j + 1)] - 4.0 * v[idx(i, j)];
        (*out)[idx(i, j)] = v[idx(i, j)] - c * lap;
      }
  };
  std::vector<double> x(n, 0.0), r = *rhs, p = r, ap(n);
  double rr = 0.0, b2 = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    rr += r[k] * r[k];
    b2 += (*rhs)[k] * (*rhs)[k];
  }
  const double stop = tol * tol * std::max(b2, 1e-300);
  for (int it = 0; it < max_iters && rr > stop; ++it) {
    apply(p, &ap);
    double pap = 0.0;
    for (std::size_t k = 0; k < n; ++k) pap += p[k] * ap[k];
    const double alpha = rr / pap;
    double rr2 = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      x[k] += alpha * p[k];
      r[k] -= alpha * ap[k];
      rr2 += r[k] * r[k];
    }
    const double beta = rr2 / rr;
    rr = rr2;
    for (std::size_t k = 0; k < n; ++k) p[k] = r[k] + beta * p[k];
  }
  if (rr > stop) throw SolverError("cg_2d_solve: did not converge");
  *rhs = x;
}

inline void check_step_invariants(const std::vector<double>& u, double lo, double hi,
                                  double mass0, double scale, int step) {
  double mass = 0.0;
  for (double v : u) {
    if (v < lo - 1e-11 * scale || v > hi + 1e-11 * scale)
      throw SolverError("fke_solve_l1: discrete maximum principle violated at step " +
                        std::to_string(step));
    mass += v;
  }
  if (std::abs(mass - mass0) > 1e-10 * std::max(std::abs(mass0), 1.0))
    throw SolverError("fke_solve_l1: mass conservation violated at step " +
                      std::to_string(step));
}

}  // namespace detail

// L1 weights b_j = (j+1)^{1-beta} - j^{1-beta}; for beta = 1 they vanish for
// j >= 1 and the scheme collapses to backward Euler.
inline double l1_weight(double beta, int j) {
  return std::pow(static_cast<double>(j + 1), 1.0 - beta) -
         std::pow(static_cast<double>(j), 1.0 - beta);
}

// Implicit L1 march on a periodic 1-D grid. Returns steps+1 profiles, entry 0
// being the initial condition. Memory term is the full Caputo history.
inline std::vector<std::vector<double>> fke_solve_l1(const Grid1D& grid, double beta,
                                                     double d_eff,
                                                     const std::vector<double>& rho0,
                                                     double dt, int steps) {
  if (!(beta > 0.0 && beta <= 1.0))
    throw std::invalid_argument("fke_solve_l1: beta must be in (0,1]");
  if (!(dt > 0.0) || steps < 0) throw std::invalid_argument("fke_solve_l1: bad stepping");
  if (rho0.size() != static_cast<std::size_t>(grid.n))
    throw std::invalid_argument("fke_solve_l1: initial profile length mismatch");

  const double c = std::tgamma(2.0 - beta) * std::pow(dt, beta) * d_eff / (grid.h * grid.h);
  const std::size_t n = rho0.size();

  double lo = rho0[0], hi = rho0[0], mass0 = 0.0;
  for (double v : rho0) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    mass0 += v;
  }
  const double span = std::max({hi - lo, std::abs(hi), std::abs(lo), 1e-12});

  std::vector<double> b(static_cast<std::size_t>(steps));
  for (int j = 0; j < steps; ++j) b[static_cast<std::size_t>(j)] = l1_weight(beta, j);

  std::vector<std::vector<double>> u;
  u.reserve(static_cast<std::size_t>(steps) + 1);
  u.push_back(rho0);

  for (int m = 1; m <= steps; ++m) {
    std::vector<double> rhs = u[static_cast<std::size_t>(m - 1)];
    for (int j = 1; j < m; ++j) {
      const double bj = b[static_cast<std::size_t>(j)];
      if (bj == 0.0) break;  // beta = 1 collapses to backward Euler
      const std::vector<double>& ua = u[static_cast<std::size_t>(m - j)];
      const std::vector<double>& ub = u[static_cast<std::size_t>(m - j - 1)];
      for (std::size_t i = 0; i < n; ++i) rhs[i] -= bj * (ua[i] - ub[i]);
    }
    detail::cyclic_tridiag_solve(1.0 + 2.0 * c, -c, &rhs);
    detail::check_step_invariants(rhs, lo, hi, mass0, span, m);
    u.push_back(std::move(rhs));
  }
  return u;
}

inline std::vector<std::vector<double>> fke_solve_l1_2d(const Grid2D& grid, double beta,
                                                        double d_eff,
                                                        const std::vector<double>& rho0,
                                                        double dt, int steps) {
  if (!(beta > 0.0 && beta <= 1.0))
    throw std::invalid_argument("fke_solve_l1_2d: beta must be in (0,1]");
  const std::size_t n = static_cast<std::size_t>(grid.nx) * grid.ny;
  if (rho0.size() != n) throw std::invalid_argument("fke_solve_l1_2d: profile mismatch");
  const double c = std::tgamma(2.0 - beta) * std::pow(dt, beta) * d_eff / (grid.h * grid.h);

  double lo = rho0[0], hi = rho0[0], mass0 = 0.0;
  for (double v : rho0) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    mass0 += v;
  }
  const double span = std::max({hi - lo, std::abs(hi), std::abs(lo), 1e-12});

  std::vector<double> b(static_cast<std::size_t>(steps));
  for (int j = 0; j < steps; ++j) b[static_cast<std::size_t>(j)] = l1_weight(beta, j);

  std::vector<std::vector<double>> u;
  u.push_back(rho0);
  for (int m = 1; m <= steps; ++m) {
    std::vector<double> rhs = u[static_cast<std::size_t>(m - 1)];
    for (int j = 1; j < m; ++j) {
      const double bj = b[static_cast<std::size_t>(j)];
      if (bj == 0.0) break;
      const std::vector<double>& ua = u[static_cast<std::size_t>(m - j)];
      const std::vector<double>& ub = u[static_cast<std::size_t>(m - j - 1)];
      for (std::size_t i = 0; i < n; ++i) rhs[i] -= bj * (ua[i] - ub[i]);
    }
    detail::cg_2d_solve(grid.nx, grid.ny, c, &rhs);
    detail::check_step_invariants(rhs, lo, hi, mass0, span, m);
    u.push_back(std::move(rhs));
  }
  return u;
}

// ---------------------------------------------------------------------------
// Spectral reference: evolve samples on a periodic uniform grid by the exact
// Mittag-Leffler mode decay E_beta(-D |k|^2 t^beta).

inline std::vector<double> fke_spectral_periodic_1d(const std::vector<double>& vals,
                                                    double h, double beta, double d_eff,
                                                    double t) {
  const int m = static_cast<int>(vals.size());
  const double period = h * m;
  std::vector<std::complex<double>> f(m);
  for (int k = 0; k < m; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (int j = 0; j < m; ++j) {
      const double ph = -2.0 * M_PI * j * k / m;
      acc += vals[static_cast<std::size_t>(j)] * std::complex<double>(std::cos(ph), std::sin(ph));
    }
    f[static_cast<std::size_t>(k)] = acc;
  }
  for (int k = 0; k < m; ++k) {
    const int sk = k <= m / 2 ? k : k - m;
    const double k2 = std::pow(2.0 * M_PI * sk / period, 2);
    f[static_cast<std::size_t>(k)] *=
        (sk == 0) ? 1.0 : mittag_leffler(beta, -d_eff * k2 * std::pow(t, beta));
  }
  std::vector<double> out(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    std::complex<double> acc(0.0, 0.0);
    for (int k = 0; k < m; ++k) {
      const double ph = 2.0 * M_PI * j * k / m;
      acc += f[static_cast<std::size_t>(k)] * std::complex<double>(std::cos(ph), std::sin(ph));
    }
    out[static_cast<std::size_t>(j)] = acc.real() / m;
  }
  return out;
}

inline std::vector<double> fke_spectral_periodic_2d(const std::vector<double>& vals,
                                                    int nx, int ny, double h, double beta,
                                                    double d_eff, double t) {
  if (vals.size() != static_cast<std::size_t>(nx) * ny)
    throw std::invalid_argument("fke_spectral_periodic_2d: size mismatch");
  using C = std::complex<double>;
  auto dft_axis = [](std::vector<C>& data, int rows, int cols, bool inverse) {
    // transform along the fastest (col) axis, row by row
    std::vector<C> line(static_cast<std::size_t>(cols));
    const double sgn = inverse ? 1.0 : -1.0;
    for (int r = 0; r < rows; ++r) {
      C* base = data.data() + static_cast<std::size_t>(r) * cols;
      for (int k = 0; k < cols; ++k) {
        C acc(0.0, 0.0);
        for (int j = 0; j < cols; ++j) {
          const double ph = sgn * 2.0 * M_PI * j * k / cols;
          acc += base[j] * C(std::cos(ph), std::sin(ph));
        }
        line[static_cast<std::size_t>(k)] = inverse ? acc / static_cast<double>(cols) : acc;
      }
      for (int k = 0; k < cols; ++k) base[k] = line[static_cast<std::size_t>(k)];
    }
  };
  auto transpose = [](std::vector<C>& data, int rows, int cols) {
    std::vector<C> out(data.size());
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        out[static_cast<std::size_t>(c) * rows + r] = data[static_cast<std::size_t>(r) * cols + c];
    data.swap(out);
  };

  std::vector<C> f(vals.begin(), vals.end());
  dft_axis(f, nx, ny, false);
  transpose(f, nx, ny);
  dft_axis(f, ny, nx, false);
  transpose(f, ny, nx);

  const double px = h * nx, py = h * ny;
  std::unordered_map<std::int64_t, double> ml_cache;
  for (int kx = 0; kx < nx; ++kx)
    for (int ky = 0; ky < ny; ++ky) {
      const int sx = kx <= nx / 2 ? kx : kx - nx;
      const int sy = ky <= ny / 2 ? ky : ky - ny;
      if (sx == 0 && sy == 0) continue;
      const double k2 = std::pow(2.0 * M_PI * sx / px, 2) + std::pow(2.0 * M_PI * sy / py, 2);
      double factor;
      if (px == py) {
        const std::int64_t key = static_cast<std::int64_t>(sx) * sx +
                                 static_cast<std::int64_t>(sy) * sy;
        auto it = ml_cache.find(key);
        if (it == ml_cache.end()) {
          factor = mittag_leffler(beta, -d_eff * k2 * std::pow(t, beta));
          ml_cache.emplace(key, factor);
        } else {
          factor = it->second;
        }
      } else {
        factor = mittag_leffler(beta, -d_eff * k2 * std::pow(t, beta));
      }
      f[static_cast<std::size_t>(kx) * ny + ky] *= factor;
    }

  dft_axis(f, nx, ny, true);
  transpose(f, nx, ny);
  dft_axis(f, ny, nx, true);
  transpose(f, ny, nx);

  std::vector<double> out(vals.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f[i].real();
  return out;
}

// ---------------------------------------------------------------------------
// Stochastic representation: P_t rho0(x) = E[(e^{s Lap D} rho0)(x)] with
// s = V_beta^{-1}(t). The inner Gaussian convolution (variance 2 D s) is
// evaluated by adaptive quadrature over the support, optionally wrapped on a
// period for comparisons against the periodic grid solvers.

inline MeanSe fke_subordination(const std::function<double(double)>& rho0,
                                double support_lo, double support_hi, double beta,
                                double d_eff, double t, double x, int samples,
                                rng::Engine& eng, double period = 0.0) {
  if (samples < 1) throw std::invalid_argument("fke_subordination: samples >= 1");
  if (t == 0.0) return {rho0(x), 0.0, samples};
  std::vector<double> vals(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    const double s = sample_inverse_subordinator(beta, t, eng);
    const double var = 2.0 * d_eff * s;
    const double sd = std::sqrt(var);
    double acc = 0.0;
    int images = 0;
    if (period > 0.0) images = static_cast<int>(std::ceil(12.0 * sd / period)) + 1;
    for (int im = -images; im <= images; ++im) {
      const double shift = x + im * period;
      // restrict to the +-12 sd window so a kernel much narrower than the
      // support cannot slip between quadrature nodes
      const double wl = std::max(support_lo, shift - 12.0 * sd);
      const double wr = std::min(support_hi, shift + 12.0 * sd);
      if (!(wl < wr)) continue;
      acc += quad::adaptive_simpson(
          [&](double y) {
            const double z = shift - y;
            return rho0(y) * std::exp(-z * z / (2.0 * var)) / std::sqrt(2.0 * M_PI * var);
          },
          wl, wr, 1e-10, 44);
    }
    vals[static_cast<std::size_t>(i)] = acc;
  }
  return reduce_mean_se(vals);
}

}  // namespace traplab
