#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

// Small dense matrices for the exact finite-state oracles, with two
// independent matrix-exponential algorithms (Pade scaling-and-squaring and
// uniformization) so oracle errors stay de-correlated.

namespace traplab {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), a_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

  Matrix operator*(const Matrix& o) const {
    if (cols_ != o.rows_) throw std::invalid_argument("Matrix: dimension mismatch");
    Matrix r(rows_, o.cols_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t k = 0; k < cols_; ++k) {
        const double aik = a_[i * cols_ + k];
        if (aik == 0.0) continue;
        const double* brow = &o.a_[k * o.cols_];
        double* rrow = &r.a_[i * o.cols_];
        for (std::size_t j = 0; j < o.cols_; ++j) rrow[j] += aik * brow[j];
      }
    return r;
  }

  std::vector<double> apply(const std::vector<double>& v) const {
    if (v.size() != cols_) throw std::invalid_argument("Matrix: apply size mismatch");
    std::vector<double> r(rows_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i) {
      double acc = 0.0;
      const double* row = &a_[i * cols_];
      for (std::size_t j = 0; j < cols_; ++j) acc += row[j] * v[j];
      r[i] = acc;
    }
    return r;
  }

  Matrix& operator+=(const Matrix& o) {
    for (std::size_t i = 0; i < a_.size(); ++i) a_[i] += o.a_[i];
    return *this;
  }
  Matrix operator+(const Matrix& o) const {
    Matrix r = *this;
    r += o;
    return r;
  }
  Matrix& operator*=(double s) {
    for (double& x : a_) x *= s;
    return *this;
  }

  double inf_norm() const {
    double best = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < cols_; ++j) s += std::abs(a_[i * cols_ + j]);
      if (s > best) best = s;
    }
    return best;
  }

  double max_abs_diff(const Matrix& o) const {
    double best = 0.0;
    for (std::size_t i = 0; i < a_.size(); ++i)
      best = std::max(best, std::abs(a_[i] - o.a_[i]));
    return best;
  }

  // Solve A X = B in place via LU with partial pivoting; returns X.
  static Matrix solve(Matrix a, Matrix b) {
    const std::size_t n = a.rows();
    if (a.cols() != n || b.rows() != n) throw std::invalid_argument("Matrix: solve shape");
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t piv = k;
      double best = std::abs(a(k, k));
      for (std::size_t i = k + 1; i < n; ++i)
        if (std::abs(a(i, k)) > best) {
          best = std::abs(a(i, k));
          piv = i;
        }
      if (best == 0.0) throw std::runtime_error("Matrix: singular system");
      if (piv != k) {
        for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
        for (std::size_t j = 0; j < b.cols(); ++j) std::swap(b(k, j), b(piv, j));
      }
      for (std::size_t i = k + 1; i < n; ++i) {
        const double f = a(i, k) / a(k, k);
        if (f == 0.0) continue;
        a(i, k) = 0.0;
        for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= f * a(k, j);
        for (std::size_t j = 0; j < b.cols(); ++j) b(i, j) -= f * b(k, j);
      }
    }
    for (std::size_t kk = n; kk-- > 0;) {
      for (std::size_t j = 0; j < b.cols(); ++j) {
        double acc = b(kk, j);
        for (std::size_t m = kk + 1; m < n; ++m) acc -= a(kk, m) * b(m, j);
        b(kk, j) = acc / a(kk, kk);
      }
    }
    return b;
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> a_;
};

// exp(A) by order-13 Pade with scaling and squaring (Higham 2005 flavor).
inline Matrix expm_pade(const Matrix& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw std::invalid_argument("expm_pade: square matrix required");
  static const double c[14] = {64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                               1187353796428800.0,  129060195264000.0,   10559470521600.0,
                               670442572800.0,      33522128640.0,       1323241920.0,
                               40840800.0,          960960.0,            16380.0,
                               182.0,               1.0};
  const double norm = a.inf_norm();
  int squarings = 0;
  double scale = 1.0;
  const double theta13 = 5.371920351148152;
  if (norm > theta13) {
    squarings = static_cast<int>(std::ceil(std::log2(norm / theta13)));
    scale = std::ldexp(1.0, -squarings);
  }
  Matrix as = a;
  as *= scale;

  const Matrix a2 = as * as;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a2 * a4;
  const Matrix id = Matrix::identity(n);

  auto lin = [&](double c6, double c4, double c2, double c0) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        m(i, j) = c6 * a6(i, j) + c4 * a4(i, j) + c2 * a2(i, j) + c0 * id(i, j);
    return m;
  };

  Matrix u = as * (a6 * lin(c[13], c[11], c[9], 0.0) + lin(c[7], c[5], c[3], c[1]));
  Matrix v = a6 * lin(c[12], c[10], c[8], 0.0) + lin(c[6], c[4], c[2], c[0]);

  Matrix num(n, n), den(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      num(i, j) = v(i, j) + u(i, j);
      den(i, j) = v(i, j) - u(i, j);
    }
  Matrix r = Matrix::solve(den, num);
  for (int s = 0; s < squarings; ++s) r = r * r;
  return r;
}

// exp(tG) for a CTMC generator G (off-diagonals >= 0, zero row sums) via
// uniformization: exp(tG) = e^{-Lt} sum_k (Lt)^k/k! P^k with P = I + G/L.
// Poisson weights are accumulated in chunks so arbitrarily large Lt stays
// representable.
inline Matrix expm_uniformization(const Matrix& g, double t, double tail_tol = 1e-14) {
  const std::size_t n = g.rows();
  if (g.cols() != n) throw std::invalid_argument("expm_uniformization: square required");
  if (t < 0.0) throw std::invalid_argument("expm_uniformization: t must be >= 0");
  double lambda = 0.0;
  for (std::size_t i = 0; i < n; ++i) lambda = std::max(lambda, -g(i, i));
  if (t == 0.0 || lambda == 0.0) return Matrix::identity(n);

  const double chunk_rate = 256.0;
  const int chunks = std::max(1, static_cast<int>(std::ceil(lambda * t / chunk_rate)));
  const double tau = t / chunks;
  const double lt = lambda * tau;

  Matrix p = g;
  p *= 1.0 / lambda;
  p += Matrix::identity(n);

  Matrix step(n, n);
  {
    Matrix term = Matrix::identity(n);
    double logw = -lt;  // log of e^{-lt} (lt)^k / k!
    double acc = 0.0;
    for (int k = 0;; ++k) {
      if (k > 0) {
        term = term * p;
        logw += std::log(lt) - std::log(static_cast<double>(k));
      }
      const double w = std::exp(logw);
      Matrix weighted = term;
      weighted *= w;
      step += weighted;
      acc += w;
      if (k > lt && 1.0 - acc < tail_tol) break;
      if (k > 4 * lt + 200) break;
    }
    step *= 1.0 / acc;  // renormalize the truncated Poisson weights
  }
  Matrix out = step;
  for (int c = 1; c < chunks; ++c) out = out * step;
  return out;
}

}  // namespace traplab
