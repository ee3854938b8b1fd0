#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace traplab::quad {

struct NumericalError : std::runtime_error {
  double achieved;
  explicit NumericalError(const std::string& what, double achieved_tol)
      : std::runtime_error(what + " (achieved tolerance " + std::to_string(achieved_tol) + ")"),
        achieved(achieved_tol) {}
};

namespace detail {

template <typename F>
double simpson_rec(const F& f, double a, double m, double b, double fa, double fm,
                   double fb, double whole, double tol, int depth, double* worst) {
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double h6 = (b - a) / 12.0;
  const double left = h6 * (fa + 4.0 * flm + fm);
  const double right = h6 * (fm + 4.0 * frm + fb);
  const double err = (left + right - whole) / 15.0;
  if (std::abs(err) <= tol || depth <= 0) {
    if (depth <= 0 && std::abs(err) > *worst) *worst = std::abs(err);
    return left + right + err;
  }
  return simpson_rec(f, a, lm, m, fa, flm, fm, left, 0.5 * tol, depth - 1, worst) +
         simpson_rec(f, m, rm, b, fm, frm, fb, right, 0.5 * tol, depth - 1, worst);
}

}  // namespace detail

// Adaptive Simpson on [a, b]; throws NumericalError when the depth budget is
// exhausted with local error still above tolerance.
template <typename F>
double adaptive_simpson(const F& f, double a, double b, double tol = 1e-11,
                        int max_depth = 48) {
  if (!(b > a)) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  double worst = 0.0;
  const double v =
      detail::simpson_rec(f, a, m, b, fa, fm, fb, whole, tol, max_depth, &worst);
  if (worst > tol) throw NumericalError("adaptive_simpson did not converge", worst);
  return v;
}

// Nested adaptive quadrature over an axis-aligned box in up to 3 dimensions.
inline double integrate_box(const std::function<double(const std::array<double, 3>&)>& f,
                            int dim, const std::array<double, 3>& lo,
                            const std::array<double, 3>& hi, double tol = 1e-9) {
  std::array<double, 3> x = {0.0, 0.0, 0.0};
  std::function<double(int)> level = [&](int axis) -> double {
    return adaptive_simpson(
        [&](double t) {
          x[axis] = t;
          return axis + 1 == dim ? f(x) : level(axis + 1);
        },
        lo[axis], hi[axis], tol, axis == 0 ? 48 : 32);
  };
  return level(0);
}

}  // namespace traplab::quad
