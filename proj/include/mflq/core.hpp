#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace mflq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input lies outside the domain of an operation (negative penalty, t out of
/// range, non-PD weight where PD is required).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Shapes, symmetry, grids or file layouts that do not fit together.
class StructuralError : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be inverted is singular or too badly conditioned.
class IllConditionedError : public Error {
 public:
  IllConditionedError(const std::string& what, double time)
      : Error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

// ---------------------------------------------------------------------------
// Tolerances
// ---------------------------------------------------------------------------

inline constexpr double kSymmetryRelTol = 1e-12;
inline constexpr double kPsdRelTol = 1e-9;
inline constexpr double kMaxCondition = 1e12;
inline constexpr double kDefaultDelta = 1e-6;

inline double max_abs(const Matrix& M) {
  return M.size() == 0 ? 0.0 : M.cwiseAbs().maxCoeff();
}

/// tau_sym = 1e-12 * (1 + max |entry|)
inline double symmetry_tolerance(const Matrix& M) {
  return kSymmetryRelTol * (1.0 + max_abs(M));
}

inline bool is_symmetric(const Matrix& M) {
  if (M.rows() != M.cols()) return false;
  return max_abs(M - M.transpose()) <= symmetry_tolerance(M);
}

inline Matrix symmetrize(const Matrix& M) {
  return 0.5 * (M + M.transpose());
}

/// Eigenvalues of the symmetric part, ascending.
inline Vector sym_eigenvalues(const Matrix& M) {
  if (M.size() == 0) return Vector();
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(M), Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double min_eigenvalue(const Matrix& M) {
  Vector ev = sym_eigenvalues(M);
  return ev.size() == 0 ? 0.0 : ev(0);
}

inline double spectral_radius_sym(const Matrix& M) {
  Vector ev = sym_eigenvalues(M);
  return ev.size() == 0 ? 0.0 : ev.cwiseAbs().maxCoeff();
}

/// tau_psd = 1e-9 * (1 + spectral radius)
inline double psd_tolerance(const Matrix& M) {
  return kPsdRelTol * (1.0 + spectral_radius_sym(M));
}

inline bool is_psd(const Matrix& M) {
  return min_eigenvalue(M) >= -psd_tolerance(M);
}

/// Symmetric positive-definite factorization with a condition guard. Used
/// for every K0/K1 inverse along the Riccati flow.
class SpdSolver {
 public:
  SpdSolver(const Matrix& K, double time, const char* name) {
    Matrix Ks = symmetrize(K);
    Vector ev = sym_eigenvalues(Ks);
    if (ev.size() > 0) {
      const double lo = ev(0);
      const double hi = ev(ev.size() - 1);
      if (!(lo > 0.0) || !std::isfinite(hi) || hi / lo > kMaxCondition) {
        std::ostringstream os;
        os << name << " is singular or ill-conditioned at t = " << time
           << " (eigenvalues in [" << lo << ", " << hi << "])";
        throw IllConditionedError(os.str(), time);
      }
    }
    llt_.compute(Ks);
  }

  template <typename Rhs>
  Matrix solve(const Eigen::MatrixBase<Rhs>& b) const {
    return llt_.solve(b);
  }

 private:
  Eigen::LLT<Matrix> llt_;
};

/// Symmetric square root of a PSD matrix (negative round-off eigenvalues are
/// clipped to zero).
inline Matrix sym_sqrt(const Matrix& M) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(M));
  Vector d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

// ---------------------------------------------------------------------------
// Time grid
// ---------------------------------------------------------------------------

/// Uniform grid t_k = k*h on [0, T], N steps, N+1 nodes.
class TimeGrid {
 public:
  TimeGrid(double horizon, int steps) : horizon_(horizon), steps_(steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon))
      throw DomainError("time grid: horizon must be positive and finite");
    if (steps < 2) throw DomainError("time grid: need at least 2 steps");
  }

  double horizon() const { return horizon_; }
  int steps() const { return steps_; }
  int nodes() const { return steps_ + 1; }
  double step() const { return horizon_ / steps_; }
  double time(int k) const {
    return k == steps_ ? horizon_ : horizon_ * static_cast<double>(k) / steps_;
  }
  bool operator==(const TimeGrid&) const = default;

 private:
  double horizon_;
  int steps_;
};

inline void require_same_grid(const TimeGrid& a, const TimeGrid& b,
                              const char* what) {
  if (!(a == b))
    throw StructuralError(std::string(what) + ": grid mismatch");
}

// ---------------------------------------------------------------------------
// Quadrature on uniform nodes
// ---------------------------------------------------------------------------

/// Composite Simpson rule; requires an even number of intervals.
inline double simpson(std::span<const double> f, double h) {
  const std::size_t n = f.size();
  if (n < 3 || (n - 1) % 2 != 0)
    throw StructuralError("simpson: need an even number of intervals");
  double s = f[0] + f[n - 1];
  for (std::size_t k = 1; k + 1 < n; ++k) s += (k % 2 == 1 ? 4.0 : 2.0) * f[k];
  return s * h / 3.0;
}

/// Running integral I_k = int_0^{t_k} f, fourth order at every node. Even
/// nodes use composite Simpson; odd nodes add a four-point single-interval
/// rule to the preceding even node.
inline std::vector<double> cumulative_integral(std::span<const double> f,
                                               double h) {
  const std::size_t n = f.size();
  std::vector<double> out(n, 0.0);
  if (n < 4) {
    for (std::size_t k = 1; k < n; ++k)
      out[k] = out[k - 1] + 0.5 * h * (f[k - 1] + f[k]);
    return out;
  }
  for (std::size_t k = 2; k < n; k += 2)
    out[k] = out[k - 2] + h / 3.0 * (f[k - 2] + 4.0 * f[k - 1] + f[k]);
  for (std::size_t k = 1; k < n; k += 2) {
    double last;
    if (k == 1) {
      last = h / 24.0 * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]);
    } else if (k + 1 < n) {
      last = h / 24.0 * (-f[k - 2] + 13.0 * f[k - 1] + 13.0 * f[k] - f[k + 1]);
    } else {
      last = h / 24.0 * (f[k - 3] - 5.0 * f[k - 2] + 19.0 * f[k - 1] + 9.0 * f[k]);
    }
    out[k] = out[k - 1] + last;
  }
  return out;
}

/// Cubic (four-point Lagrange) value halfway between nodes k and k+1 of a
/// node-sampled sequence. Falls back to linear when fewer than 4 nodes exist.
template <typename T>
T midpoint_cubic(const std::vector<T>& v, int k) {
  const int n = static_cast<int>(v.size());
  if (n < 4) return T(0.5 * (v[k] + v[k + 1]));
  if (k == 0) {
    return T((5.0 * v[0] + 15.0 * v[1] - 5.0 * v[2] + v[3]) / 16.0);
  }
  if (k + 2 >= n) {
    return T((v[k - 2] - 5.0 * v[k - 1] + 15.0 * v[k] + 5.0 * v[k + 1]) / 16.0);
  }
  return T((-v[k - 1] + 9.0 * v[k] + 9.0 * v[k + 1] - v[k + 2]) / 16.0);
}

}  // namespace mflq
