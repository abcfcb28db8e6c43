#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

#include "mflq/core.hpp"
#include "mflq/feedback.hpp"
#include "mflq/moments.hpp"
#include "mflq/problem.hpp"
#include "mflq/rng.hpp"

namespace mflq {

/// How E[X] and E[u] in the dynamics are approximated.
enum class MeanClosure {
  empirical,  // ensemble averages (interacting particles)
  exact,      // mean path from the moment engine (independent particles)
};

struct SimulationOptions {
  int particles = 10000;
  std::uint64_t seed = 1;
  MeanClosure closure = MeanClosure::empirical;
  unsigned threads = 0;  // 0: hardware concurrency
};

/// Per-node ensemble statistics of an Euler-Maruyama particle simulation.
struct ParticleEnsemble {
  TimeGrid grid{1.0, 2};
  int particles = 0;
  std::uint64_t seed = 0;
  MeanClosure closure = MeanClosure::empirical;

  std::vector<Vector> mean;            // empirical mean per node
  std::vector<Matrix> cov;             // sample covariance per node
  std::vector<double> running_cost;    // running-cost estimate up to each node
  std::vector<double> running_stderr;  // its standard error given the realized mean path
  Matrix final_states;                 // n x particles

  double cost_estimate = 0.0;   // running + terminal
  double cost_std_error = 0.0;
  std::vector<double> particle_costs;

  Vector terminal_var;     // sample variance of each coordinate of X(T)
  Vector terminal_var_se;  // its standard error
};

namespace mcsim_detail {

inline constexpr int kChunk = 2048;

/// Runs fn(chunk_index, begin, end) over fixed-size particle chunks. The
/// chunk layout depends only on the particle count, never on the thread
/// count, so per-chunk partial results reduced in chunk order are
/// bit-reproducible.
class ChunkRunner {
 public:
  ChunkRunner(int particles, unsigned threads)
      : particles_(particles),
        chunks_((particles + kChunk - 1) / kChunk),
        threads_(threads == 0 ? std::max(1u, std::thread::hardware_concurrency())
                              : threads) {
    threads_ = std::min<unsigned>(threads_, static_cast<unsigned>(chunks_));
  }

  int chunks() const { return chunks_; }

  void run(const std::function<void(int, int, int)>& fn) const {
    auto work = [&](unsigned worker) {
      for (int c = static_cast<int>(worker); c < chunks_; c += static_cast<int>(threads_)) {
        const int b = c * kChunk;
        fn(c, b, std::min(particles_, b + kChunk));
      }
    };
    if (threads_ <= 1) {
      work(0);
      return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(threads_ - 1);
    for (unsigned w = 1; w < threads_; ++w) pool.emplace_back(work, w);
    work(0);
  }

 private:
  int particles_;
  int chunks_;
  unsigned threads_;
};

/// Common noise: xi[i] for step k is draw k of stream i.
class NoiseField {
 public:
  NoiseField(std::uint64_t seed, int particles)
      : normals_(seed), xi_(particles), spare_(particles) {}

  const Vector& at(int k, const ChunkRunner& runner) {
    if (k == cached_ + 1 && (k & 1)) {
      xi_.swap(spare_);
    } else {
      runner.run([&](int, int b, int e) {
        for (int i = b; i < e; ++i) {
          const auto z = normals_.pair(static_cast<std::uint64_t>(i),
                                       static_cast<std::uint64_t>(k) >> 1);
          xi_(i) = (k & 1) ? z[1] : z[0];
          spare_(i) = z[1];
        }
      });
    }
    cached_ = k;
    return xi_;
  }

 private:
  NormalStream normals_;
  Vector xi_;
  Vector spare_;
  int cached_ = -2;
};

/// First-order sensitivities used to correct standard errors for the
/// coupling through the empirical mean. With delta = (empirical mean) - m,
///   d delta = (A_sum + B_sum F_bar) delta ds + avg_i(D_i dW_i),
/// so a functional whose expectation responds to delta(t) with gradient
/// l(t) fluctuates by int kappa' avg_i(D_i dW_i), where
///   -kappa' = (A_sum + B_sum F_bar)' kappa + l,  kappa(T) = terminal gradient.
/// l collects the direct mean terms and 2 Cm' V psi, the response through
/// the centered covariance (V: backward Lyapunov weight of the functional,
/// Cm = A1_sum + B1_sum F_bar, psi = Cm m + B1_sum c).
///
/// Column 0 is for the total cost; column 1 + j for the variance of
/// coordinate j at T. Heun's method backward on the grid nodes.
inline std::vector<Matrix> mean_field_sensitivity(const ProblemDef& prob,
                                                  const AffinePolicy& pol,
                                                  const MomentTrajectory& tr) {
  const TimeGrid& grid = tr.grid;
  const int n = prob.n;
  const int N = grid.steps();
  const double h = grid.step();
  const int F = n + 1;  // functionals

  struct Frozen {
    Matrix Ac, Dc, Am, Cm, W;  // W = Q + F'RF
    Vector psi, lin;           // lin = 2 Q_sum m + 2 F_bar' R_sum mu
  };
  auto frozen = [&](int k) {
    const Coefficients c = prob.at(grid.time(k));
    Frozen f;
    f.Ac = c.A + c.B * pol.F[k];
    f.Dc = c.A1 + c.B1 * pol.F[k];
    f.Am = c.A_sum + c.B_sum * pol.F_bar[k];
    f.Cm = c.A1_sum + c.B1_sum * pol.F_bar[k];
    f.W = c.Q + pol.F[k].transpose() * c.R * pol.F[k];
    f.psi = f.Cm * tr.mean[k] + c.B1_sum * pol.c[k];
    const Vector mu = pol.F_bar[k] * tr.mean[k] + pol.c[k];
    f.lin = 2.0 * c.Q_sum * tr.mean[k] + 2.0 * pol.F_bar[k].transpose() * c.R_sum * mu;
    return f;
  };
  // State: V_f (n x n) and kappa_f (n) for each functional f.
  struct State {
    std::vector<Matrix> V;
    Matrix kappa;  // n x F
  };
  auto rate = [&](const Frozen& fr, const State& x) {  // returns -d/ds
    State d;
    d.V.resize(F);
    d.kappa.resize(n, F);
    for (int f = 0; f < F; ++f) {
      const Matrix& V = x.V[f];
      d.V[f] = fr.Ac.transpose() * V + V * fr.Ac + fr.Dc.transpose() * V * fr.Dc;
      if (f == 0) d.V[f] += fr.W;
      Vector l = 2.0 * fr.Cm.transpose() * (V * fr.psi);
      if (f == 0) l += fr.lin;
      d.kappa.col(f) = fr.Am.transpose() * x.kappa.col(f) + l;
    }
    return d;
  };

  std::vector<Matrix> out(grid.nodes());
  State x;
  x.V.assign(F, Matrix::Zero(n, n));
  x.V[0] = prob.G;
  for (int j = 0; j < n; ++j) x.V[1 + j](j, j) = 1.0;
  x.kappa = Matrix::Zero(n, F);
  x.kappa.col(0) = 2.0 * (prob.G + prob.G_hat) * tr.mean[N];
  out[N] = x.kappa;
  Frozen f1 = frozen(N);
  for (int k = N - 1; k >= 0; --k) {
    const Frozen f0 = frozen(k);
    const State d1 = rate(f1, x);
    State pred = x;
    for (int f = 0; f < F; ++f) pred.V[f] += h * d1.V[f];
    pred.kappa += h * d1.kappa;
    const State d0 = rate(f0, pred);
    for (int f = 0; f < F; ++f) x.V[f] += 0.5 * h * (d1.V[f] + d0.V[f]);
    x.kappa += 0.5 * h * (d1.kappa + d0.kappa);
    out[k] = x.kappa;
    f1 = f0;
  }
  return out;
}

/// One particle system of the mean-field SDE, advanced step by step under
/// an externally supplied control matrix.
class ParticleSystem {
 public:
  ParticleSystem(const ProblemDef& prob, const TimeGrid& grid, int particles,
                 const Vector& x0, const ChunkRunner& runner)
      : prob_(prob),
        grid_(grid),
        runner_(runner),
        N_(particles),
        X_(x0.replicate(1, particles)),
        cost_(Vector::Zero(particles)),
        prev_L_(Vector::Zero(particles)),
        influence_(Matrix::Zero(prob.n + 1, particles)),
        centered_(Vector::Zero(particles)),
        prev_Lc_(Vector::Zero(particles)) {}

  const Matrix& states() const { return X_; }
  const Vector& particle_costs() const { return cost_; }
  /// Per-particle sums int kappa' D_i dW_i (one row per sensitivity column).
  const Matrix& noise_influence() const { return influence_; }
  /// Per-particle cost with the terms linear in the deviation from the
  /// mean-field inputs removed (they cancel exactly in the ensemble average
  /// under the empirical closure). Accumulated only when `kappa` is passed.
  const Vector& centered_costs() const { return centered_; }

  /// Empirical mean and sample covariance of the current states.
  void moments(Vector& mean, Matrix& cov) const {
    const int n = prob_.n;
    const int C = runner_.chunks();
    std::vector<Vector> sums(C, Vector::Zero(n));
    runner_.run([&](int c, int b, int e) { sums[c] = X_.middleCols(b, e - b).rowwise().sum(); });
    Vector total = Vector::Zero(n);
    for (const auto& s : sums) total += s;
    mean = total / N_;
    std::vector<Matrix> outer(C, Matrix::Zero(n, n));
    runner_.run([&](int c, int b, int e) {
      const Matrix D = X_.middleCols(b, e - b).colwise() - mean;
      outer[c] = D * D.transpose();
    });
    Matrix S = Matrix::Zero(n, n);
    for (const auto& o : outer) S += o;
    cov = symmetrize(S / (N_ - 1));
  }

  /// Adds the trapezoid contribution of the running cost at node k, writes
  /// its cumulative mean / standard error, then (for k < N) takes one Euler
  /// step. mX, mU are the mean-field inputs used in both dynamics and cost.
  void advance(int k, const Matrix& U, const Vector& mX, const Vector& mU,
               const Vector* xi, double& cost_mean, double& cost_se,
               const Matrix* kappa = nullptr) {
    const Coefficients c = prob_.at(grid_.time(k));
    const double h = grid_.step();
    const double sqh = std::sqrt(h);
    const int C = runner_.chunks();
    // Mean-field cost terms with their first-order (delta-method) influence.
    const Vector qm = c.Q_hat * mX;
    const Vector rm = c.R_hat * mU;
    const double q0 = mX.dot(qm);
    const double r0 = mU.dot(rm);
    const Vector drift0 = c.A_hat * mX + c.B_hat * mU;
    const Vector diff0 = c.A1_hat * mX + c.B1_hat * mU;
    std::vector<double> s1(C, 0.0), s2(C, 0.0);

    const double offset = q0 - 2.0 * qm.dot(mX) + r0 - 2.0 * rm.dot(mU);

    const int n = prob_.n;
    const int m = prob_.m;
    const int F = static_cast<int>(influence_.rows());
    const bool centered = kappa != nullptr;

    const double *Q = c.Q.data(), *R = c.R.data(), *A = c.A.data(), *A1 = c.A1.data(),
                 *B = c.B.data(), *B1 = c.B1.data(), *K = centered ? kappa->data() : nullptr;
    const double *mx = mX.data(), *mu = mU.data(), *qmp = qm.data(), *rmp = rm.data(),
                 *d0 = drift0.data(), *f0 = diff0.data();
    const double* noise = xi != nullptr ? xi->data() : nullptr;
    double *X = X_.data(), *cost = cost_.data(), *prev = prev_L_.data(),
           *cent = centered_.data(), *prev_c = prev_Lc_.data(), *infl = influence_.data();
    const double* Ud = U.data();
    const Kernel kern{n, m, F, k, h, sqh, offset, Q, R, A, A1, B, B1, K, mx, mu, qmp, rmp,
                      d0, f0, noise, X, cost, prev, cent, prev_c, infl, Ud};
    const auto run = dispatch(n, m);
    runner_.run([&](int ci, int b, int e) {
      double a1 = 0.0, a2 = 0.0;
      run(kern, b, e, a1, a2);
      s1[ci] = a1;
      s2[ci] = a2;
    });
    double a1 = 0.0, a2 = 0.0;
    for (int ci = 0; ci < C; ++ci) {
      a1 += s1[ci];
      a2 += s2[ci];
    }
    stats(a1, a2, cost_mean, cost_se);
  }

  /// Adds <G X,X> + <G_hat m, m> (with influence term) to every particle.
  void terminal(const Vector& mX, double& cost_mean, double& cost_se) {
    const Vector gm = prob_.G_hat * mX;
    const double g0 = mX.dot(gm);
    const int C = runner_.chunks();
    std::vector<double> s1(C, 0.0), s2(C, 0.0);
    runner_.run([&](int ci, int b, int e) {
      const int w = e - b;
      const auto Xb = X_.middleCols(b, w);
      auto cost = cost_.segment(b, w);
      cost += ((Xb.cwiseProduct(prob_.G * Xb)).colwise().sum() + 2.0 * gm.transpose() * Xb)
                  .transpose();
      cost.array() += g0 - 2.0 * gm.dot(mX);
      const Matrix Y = Xb.colwise() - mX;
      centered_.segment(b, w) += (Y.cwiseProduct(prob_.G * Y)).colwise().sum().transpose();
      s1[ci] = cost.sum();
      s2[ci] = cost.squaredNorm();
    });
    double a1 = 0.0, a2 = 0.0;
    for (int ci = 0; ci < C; ++ci) {
      a1 += s1[ci];
      a2 += s2[ci];
    }
    stats(a1, a2, cost_mean, cost_se);
  }

 private:
  struct Kernel {
    int n, m, F, k;
    double h, sqh, offset;
    const double *Q, *R, *A, *A1, *B, *B1, *K, *mx, *mu, *qmp, *rmp, *d0, *f0, *noise;
    double *X, *cost, *prev, *cent, *prev_c, *infl;
    const double* Ud;
  };
  using KernelFn = void (*)(const Kernel&, int, int, double&, double&);

  // Fused per-particle kernel; the state dimensions are small, so plain
  // loops over raw column-major storage beat blocked products here. NN and
  // MM fix n and m at compile time when nonzero so the loops unroll.
  template <int NN, int MM>
  static void kernel(const Kernel& kp, int b, int e, double& a1, double& a2) {
    const int n = NN > 0 ? NN : kp.n;
    const int m = MM > 0 ? MM : kp.m;
    constexpr int cap_n = NN > 0 ? NN : 1;
    constexpr int cap_m = MM > 0 ? MM : 1;
    std::array<double, 4 * cap_n + cap_m> fixed{};
    std::vector<double> dyn(NN > 0 && MM > 0 ? 0 : 4 * kp.n + kp.m);
    double* y = NN > 0 && MM > 0 ? fixed.data() : dyn.data();
    double *drift = y + n, *diff = drift + n, *v = diff + n;
    const double *Q = kp.Q, *R = kp.R, *A = kp.A, *A1 = kp.A1, *B = kp.B, *B1 = kp.B1,
                 *K = kp.K, *mx = kp.mx, *mu = kp.mu, *qmp = kp.qmp, *rmp = kp.rmp,
                 *d0 = kp.d0, *f0 = kp.f0, *noise = kp.noise, *Ud = kp.Ud;
    double *X = kp.X, *cost = kp.cost, *prev = kp.prev, *cent = kp.cent, *prev_c = kp.prev_c,
           *infl = kp.infl;
    const int F = NN > 0 ? NN + 1 : kp.F;
    const int k = kp.k;
    const double h = kp.h, sqh = kp.sqh, offset = kp.offset, half_h = 0.5 * h;
    const bool centered = K != nullptr;
    for (int i = b; i < e; ++i) {
      double* x = X + static_cast<std::ptrdiff_t>(i) * n;
      const double* u = Ud + static_cast<std::ptrdiff_t>(i) * m;
      for (int r = 0; r < n; ++r) y[r] = x[r] - mx[r];
      for (int r = 0; r < m; ++r) v[r] = u[r] - mu[r];
      double L = offset, Lc = 0.0;
      for (int cc = 0; cc < n; ++cc) {
        double qx = 0.0, qy = 0.0;
        for (int r = 0; r < n; ++r) {
          qx += Q[r + cc * n] * x[r];
          qy += Q[r + cc * n] * y[r];
        }
        L += x[cc] * (qx + 2.0 * qmp[cc]);
        Lc += y[cc] * qy;
      }
      for (int cc = 0; cc < m; ++cc) {
        double ru = 0.0, rv = 0.0;
        for (int r = 0; r < m; ++r) {
          ru += R[r + cc * m] * u[r];
          rv += R[r + cc * m] * v[r];
        }
        L += u[cc] * (ru + 2.0 * rmp[cc]);
        Lc += v[cc] * rv;
      }
      if (k > 0) cost[i] += half_h * (prev[i] + L);
      prev[i] = L;
      a1 += cost[i];
      a2 += cost[i] * cost[i];
      if (centered) {
        if (k > 0) cent[i] += half_h * (prev_c[i] + Lc);
        prev_c[i] = Lc;
      }
      if (noise == nullptr) continue;
      const double dw = sqh * noise[i];
      for (int r = 0; r < n; ++r) {
        double dr = d0[r], df = f0[r];
        for (int cc = 0; cc < n; ++cc) {
          dr += A[r + cc * n] * x[cc];
          df += A1[r + cc * n] * x[cc];
        }
        for (int cc = 0; cc < m; ++cc) {
          dr += B[r + cc * n] * u[cc];
          df += B1[r + cc * n] * u[cc];
        }
        drift[r] = dr;
        diff[r] = df * dw;
      }
      if (centered) {
        double* g = infl + static_cast<std::ptrdiff_t>(i) * F;
        for (int f = 0; f < F; ++f) {
          double acc = 0.0;
          for (int r = 0; r < n; ++r) acc += K[r + f * n] * diff[r];
          g[f] += acc;
        }
      }
      for (int r = 0; r < n; ++r) x[r] += h * drift[r] + diff[r];
    }
  }

  static KernelFn dispatch(int n, int m) {
    switch (n * 8 + m) {
      case 9: return &kernel<1, 1>;
      case 17: return &kernel<2, 1>;
      case 18: return &kernel<2, 2>;
      case 25: return &kernel<3, 1>;
      case 26: return &kernel<3, 2>;
      case 27: return &kernel<3, 3>;
      case 33: return &kernel<4, 1>;
      case 34: return &kernel<4, 2>;
      default: return &kernel<0, 0>;
    }
  }

  void stats(double sum, double sumsq, double& mean, double& se) const {
    mean = sum / N_;
    const double var = std::max(0.0, (sumsq - N_ * mean * mean) / (N_ - 1));
    se = std::sqrt(var / N_);
  }

  const ProblemDef& prob_;
  TimeGrid grid_;
  const ChunkRunner& runner_;
  int N_;
  Matrix X_;
  Vector cost_;
  Vector prev_L_;
  Matrix influence_;
  Vector centered_;
  Vector prev_Lc_;
};

inline Matrix feedback_controls(const AffinePolicy& pol, int k, const Matrix& X,
                                const Vector& mX) {
  const Vector mu = pol.F_bar[k] * mX + pol.c[k];
  return (pol.F[k] * (X.colwise() - mX)).colwise() + mu;
}

inline double mean_of(const Vector& v) { return v.mean(); }

inline double stderr_of(const Vector& v) {
  const double m = v.mean();
  const double var = (v.array() - m).square().sum() / (v.size() - 1);
  return std::sqrt(var / v.size());
}

}  // namespace mcsim_detail

/// Interacting-particle Euler-Maruyama simulation of the controlled
/// mean-field SDE under an affine policy. Particle i draws its Gaussian
/// increments from stream i of a Philox generator keyed by `seed`, so the
/// result is independent of thread count and scheduling.
inline ParticleEnsemble simulate(const ProblemDef& prob, const AffinePolicy& pol,
                                 const TimeGrid& grid, const SimulationOptions& opt) {
  using namespace mcsim_detail;
  check_structure(prob);
  check_policy(pol, prob);
  require_same_grid(pol.grid, grid, "simulate");
  if (opt.particles < 2) throw DomainError("simulate: need at least 2 particles");

  const MomentTrajectory exact = propagate(prob, pol, grid);
  std::vector<Matrix> kappa;
  if (opt.closure == MeanClosure::empirical) kappa = mean_field_sensitivity(prob, pol, exact);

  const ChunkRunner runner(opt.particles, opt.threads);
  NoiseField noise(opt.seed, opt.particles);
  ParticleSystem sys(prob, grid, opt.particles, prob.x0, runner);

  ParticleEnsemble ens;
  ens.grid = grid;
  ens.particles = opt.particles;
  ens.seed = opt.seed;
  ens.closure = opt.closure;
  ens.mean.resize(grid.nodes());
  ens.cov.resize(grid.nodes());
  ens.running_cost.resize(grid.nodes());
  ens.running_stderr.resize(grid.nodes());

  const int N = grid.steps();
  for (int k = 0; k <= N; ++k) {
    sys.moments(ens.mean[k], ens.cov[k]);
    const Vector mX = opt.closure == MeanClosure::exact ? exact.mean[k] : ens.mean[k];
    const Matrix U = feedback_controls(pol, k, sys.states(), mX);
    const Vector mU = pol.F_bar[k] * mX + pol.c[k];
    const Vector* xi = k < N ? &noise.at(k, runner) : nullptr;
    sys.advance(k, U, mX, mU, xi, ens.running_cost[k], ens.running_stderr[k],
                kappa.empty() ? nullptr : &kappa[k]);
    if (k == N) sys.terminal(mX, ens.cost_estimate, ens.cost_std_error);
  }
  ens.final_states = sys.states();
  ens.particle_costs.assign(sys.particle_costs().data(),
                            sys.particle_costs().data() + opt.particles);

  // Under the empirical closure, standard errors come from per-particle
  // influence values: the centered own contribution plus the first-order
  // effect of the particle's noise on the empirical mean. Independent
  // particles (exact closure) need no correction.
  const Matrix& infl = sys.noise_influence();
  if (opt.closure == MeanClosure::empirical)
    ens.cost_std_error = stderr_of(sys.centered_costs() + infl.row(0).transpose());
  const int n = prob.n;
  ens.terminal_var.resize(n);
  ens.terminal_var_se.resize(n);
  const Matrix Y = ens.final_states.colwise() - ens.mean[N];
  for (int j = 0; j < n; ++j) {
    const Vector sq = Y.row(j).array().square().transpose();
    ens.terminal_var(j) = sq.sum() / (opt.particles - 1);
    ens.terminal_var_se(j) = stderr_of(sq + infl.row(1 + j).transpose());
  }
  return ens;
}

/// Result of the pathwise check J(x; u + w) - J(x; u*) = J(0; w) at the
/// optimal law u*, with a deterministic shift w.
struct IdentityCheck {
  double J_v = 0.0, J_v_se = 0.0;          // J(x; u* + w)
  double J_ubar = 0.0, J_ubar_se = 0.0;    // J(x; u*)
  double J0_w = 0.0, J0_w_se = 0.0;        // J(0; w)
  double difference = 0.0;                 // (J_v - J_ubar) - J0_w
  double difference_se = 0.0;              // standard error of the pathwise difference
  double J0_w_moments = 0.0;               // J(0; w) from the moment engine
  bool pass = false;
};

/// Deterministic control schedule sampled at grid nodes.
using ControlSchedule = std::vector<Vector>;

/// Runs three particle systems in lockstep on common noise: (a) the optimal
/// closed loop from x0, (b) the open-loop control v_i = u*_i + w from x0,
/// (c) the deterministic control w from 0.
inline IdentityCheck identity_check(const ProblemDef& prob, const RiccatiSolution& ric,
                                    const ControlSchedule& w, int particles,
                                    std::uint64_t seed, unsigned threads = 0) {
  using namespace mcsim_detail;
  const TimeGrid& grid = ric.grid;
  if (static_cast<int>(w.size()) != grid.nodes())
    throw StructuralError("identity_check: w must be sampled at every grid node");
  for (const auto& wk : w)
    if (wk.size() != prob.m) throw StructuralError("identity_check: w has wrong dimension");
  if (particles < 2) throw DomainError("identity_check: need at least 2 particles");

  const AffinePolicy opt = synthesize(prob, ric);
  const ChunkRunner runner(particles, threads);
  NoiseField noise(seed, particles);
  ParticleSystem a(prob, grid, particles, prob.x0, runner);
  ParticleSystem b(prob, grid, particles, prob.x0, runner);
  ParticleSystem c(prob, grid, particles, Vector::Zero(prob.n), runner);

  IdentityCheck out;
  Vector ma, mb, mc;
  Matrix cov;
  double cm, cse;
  const int N = grid.steps();
  for (int k = 0; k <= N; ++k) {
    a.moments(ma, cov);
    b.moments(mb, cov);
    c.moments(mc, cov);
    const Matrix Ua = feedback_controls(opt, k, a.states(), ma);
    const Vector mUa = opt.F_bar[k] * ma;
    const Matrix Ub = Ua.colwise() + w[k];
    const Vector mUb = mUa + w[k];
    const Matrix Uc = w[k].replicate(1, particles);
    const Vector* xi = k < N ? &noise.at(k, runner) : nullptr;
    a.advance(k, Ua, ma, mUa, xi, cm, cse);
    b.advance(k, Ub, mb, mUb, xi, cm, cse);
    c.advance(k, Uc, mc, w[k], xi, cm, cse);
  }
  a.terminal(ma, out.J_ubar, out.J_ubar_se);
  b.terminal(mb, out.J_v, out.J_v_se);
  c.terminal(mc, out.J0_w, out.J0_w_se);

  const Vector D = b.particle_costs() - a.particle_costs() - c.particle_costs();
  out.difference = mean_of(D);
  out.difference_se = stderr_of(D);

  ProblemDef from_zero = prob;
  from_zero.x0 = Vector::Zero(prob.n);
  AffinePolicy shift = AffinePolicy::zero(grid, prob.n, prob.m);
  shift.c = w;
  out.J0_w_moments = propagate(from_zero, shift, grid).total_cost;

  out.pass = std::abs(out.difference) <= 3.0 * out.difference_se + 1e-12;
  return out;
}

}  // namespace mflq
