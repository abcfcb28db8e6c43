#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "mflq/core.hpp"

namespace mflq {

/// A deterministic matrix-valued coefficient on [0, T]: either a constant or
/// a table of samples evaluated by piecewise-linear interpolation (clamped
/// outside the sampled range).
class CoefficientSchedule {
 public:
  enum class Kind { constant, sampled };

  CoefficientSchedule() : CoefficientSchedule(Matrix()) {}

  /* implicit */ CoefficientSchedule(Matrix value)
      : kind_(Kind::constant), values_{std::move(value)} {}

  static CoefficientSchedule constant(Matrix value) {
    return CoefficientSchedule(std::move(value));
  }

  static CoefficientSchedule sampled(std::vector<double> times,
                                     std::vector<Matrix> values) {
    if (times.empty() || times.size() != values.size())
      throw StructuralError("sampled schedule: times/values size mismatch");
    for (std::size_t i = 1; i < times.size(); ++i) {
      if (!(times[i] > times[i - 1]))
        throw StructuralError("sampled schedule: times must be strictly increasing");
      if (values[i].rows() != values[0].rows() ||
          values[i].cols() != values[0].cols())
        throw StructuralError("sampled schedule: inconsistent matrix dimensions");
    }
    CoefficientSchedule s;
    s.kind_ = Kind::sampled;
    s.times_ = std::move(times);
    s.values_ = std::move(values);
    return s;
  }

  static CoefficientSchedule zero(int rows, int cols) {
    return CoefficientSchedule(Matrix::Zero(rows, cols));
  }

  Kind kind() const { return kind_; }
  bool is_constant() const { return kind_ == Kind::constant; }
  const std::vector<double>& times() const { return times_; }
  const std::vector<Matrix>& values() const { return values_; }
  int rows() const { return static_cast<int>(values_.front().rows()); }
  int cols() const { return static_cast<int>(values_.front().cols()); }

  /// Value at t with no domain check.
  Matrix at(double t) const {
    if (kind_ == Kind::constant || values_.size() == 1) return values_.front();
    if (t <= times_.front()) return values_.front();
    if (t >= times_.back()) return values_.back();
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    const std::size_t i = static_cast<std::size_t>(it - times_.begin());
    const double t0 = times_[i - 1];
    const double t1 = times_[i];
    if (t == t0) return values_[i - 1];
    const double w = (t - t0) / (t1 - t0);
    return (1.0 - w) * values_[i - 1] + w * values_[i];
  }

  /// Applies f to every stored matrix.
  template <typename F>
  CoefficientSchedule map(F&& f) const {
    CoefficientSchedule out = *this;
    for (auto& v : out.values_) v = f(v);
    return out;
  }

  bool operator==(const CoefficientSchedule& o) const {
    if (kind_ != o.kind_ || times_ != o.times_ ||
        values_.size() != o.values_.size())
      return false;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (values_[i].rows() != o.values_[i].rows() ||
          values_[i].cols() != o.values_[i].cols() ||
          values_[i] != o.values_[i])
        return false;
    }
    return true;
  }

 private:
  Kind kind_;
  std::vector<double> times_;
  std::vector<Matrix> values_;
};

inline double time_tolerance(double horizon) {
  return 1e-9 * std::max(1.0, horizon);
}

/// Evaluates a schedule at t in [0, T]; t outside by more than the time
/// tolerance is a domain error.
inline Matrix eval_schedule(const CoefficientSchedule& sched, double t,
                            double horizon) {
  const double tol = time_tolerance(horizon);
  if (!(t >= -tol && t <= horizon + tol)) {
    throw DomainError("eval_schedule: t = " + std::to_string(t) +
                      " outside [0, " + std::to_string(horizon) + "]");
  }
  return sched.at(t);
}

/// Sum of two schedules; the result is sampled on the union of sample times
/// unless both are constant.
inline CoefficientSchedule add(const CoefficientSchedule& a,
                               const CoefficientSchedule& b) {
  if (a.is_constant() && b.is_constant())
    return CoefficientSchedule(a.values().front() + b.values().front());
  std::vector<double> ts = a.times();
  ts.insert(ts.end(), b.times().begin(), b.times().end());
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  std::vector<Matrix> vs;
  vs.reserve(ts.size());
  for (double t : ts) vs.push_back(a.at(t) + b.at(t));
  return CoefficientSchedule::sampled(std::move(ts), std::move(vs));
}

}  // namespace mflq
