#pragma once

#include <cstdint>

#include "mflq/core.hpp"
#include "mflq/problem.hpp"
#include "mflq/rng.hpp"

namespace mflq {

/// Knobs for random constant-coefficient problems satisfying the strongest
/// positivity level: Q, Q + Q_hat, G, G + G_hat PSD and R, R + R_hat >= I.
struct InstanceOptions {
  int max_n = 4;
  int max_m = 3;
  double T = 1.0;
  double drift_scale = 0.5;      // entries of A, A_hat, B, B_hat
  double diffusion_scale = 0.3;  // entries of A1, A1_hat, B1, B1_hat
  double weight_scale = 0.5;     // factors of the PSD weights
};

namespace instances_detail {

class Draws {
 public:
  Draws(std::uint64_t seed, std::uint64_t stream) : rng_(seed), stream_(stream) {}
  double normal() { return rng_(stream_, index_++); }
  double uniform() { return 0.5 * (1.0 + std::erf(normal() / std::sqrt(2.0))); }
  int integer(int lo, int hi) {
    const int v = lo + static_cast<int>(uniform() * (hi - lo + 1));
    return std::min(v, hi);
  }
  Matrix gaussian(int r, int c, double scale) {
    Matrix M(r, c);
    for (int j = 0; j < c; ++j)
      for (int i = 0; i < r; ++i) M(i, j) = scale * normal();
    return M;
  }
  Matrix psd(int n, double scale) {
    const Matrix L = gaussian(n, n, 1.0);
    return symmetrize(scale * L * L.transpose() / n);
  }

 private:
  NormalStream rng_;
  std::uint64_t stream_;
  std::uint64_t index_ = 0;
};

}  // namespace instances_detail

/// Deterministic random problem number `index` of the family keyed by `seed`.
inline ProblemDef random_instance(std::uint64_t seed, std::uint64_t index,
                                  const InstanceOptions& opt = {}) {
  instances_detail::Draws d(seed, index);
  const int n = d.integer(1, opt.max_n);
  const int m = d.integer(1, opt.max_m);
  ProblemDef p = ProblemDef::zeros(n, m, opt.T);
  p.A = d.gaussian(n, n, opt.drift_scale);
  p.A_hat = d.gaussian(n, n, opt.drift_scale);
  p.B = d.gaussian(n, m, opt.drift_scale);
  p.B_hat = d.gaussian(n, m, opt.drift_scale);
  p.A1 = d.gaussian(n, n, opt.diffusion_scale);
  p.A1_hat = d.gaussian(n, n, opt.diffusion_scale);
  p.B1 = d.gaussian(n, m, opt.diffusion_scale);
  p.B1_hat = d.gaussian(n, m, opt.diffusion_scale);

  const Matrix Q = d.psd(n, opt.weight_scale);
  const Matrix Q_sum = d.psd(n, opt.weight_scale);
  const Matrix I_m = Matrix::Identity(m, m);
  const Matrix R = I_m + d.psd(m, opt.weight_scale);
  const Matrix R_sum = I_m + d.psd(m, opt.weight_scale);
  const Matrix G = d.psd(n, opt.weight_scale);
  const Matrix G_sum = d.psd(n, opt.weight_scale);
  p.Q = Q;
  p.Q_hat = Matrix(Q_sum - Q);
  p.R = R;
  p.R_hat = Matrix(R_sum - R);
  p.G = G;
  p.G_hat = G_sum - G;

  p.x0 = d.gaussian(n, 1, 1.0);
  return p;
}

}  // namespace mflq
