#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace rankreg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Thrown for records or datasets that violate the observation invariants.
class DataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// One subject: event time bracketed by [lower, upper].
//   exact          lower == upper, delta = 1
//   interval       0 < lower < upper < inf
//   left-censored  lower == 0
//   right-censored upper == inf
struct IntervalObservation {
  double lower = 0.0;
  double upper = kInf;
  bool delta = false;
  Vector covariates;
  std::string cluster;

  // eta1: the lower bracket carries information (usable in the "at risk" role).
  bool eta1() const { return delta || lower > 0.0; }
  // eta2: the upper bracket is finite (usable in the "failing" role).
  bool eta2() const { return delta || upper < kInf; }
};

namespace detail {

inline void check_covariates(const Vector& x) {
  for (Eigen::Index k = 0; k < x.size(); ++k)
    if (!std::isfinite(x[k])) throw DataError("non-finite covariate value");
}

inline void check_observation(const IntervalObservation& o) {
  if (std::isnan(o.lower) || std::isnan(o.upper)) throw DataError("NaN time");
  if (o.lower < 0.0 || o.upper < 0.0) throw DataError("negative time");
  if (o.delta) {
    if (!(o.lower > 0.0) || !std::isfinite(o.lower))
      throw DataError("exact time must be finite and positive");
    if (o.lower != o.upper) throw DataError("exact observation needs lower == upper");
  } else {
    if (!(o.lower < o.upper)) throw DataError("censored observation needs lower < upper");
    if (o.upper <= 0.0) throw DataError("upper bound must be positive");
  }
  if (std::isinf(o.lower)) throw DataError("lower bound must be finite");
  check_covariates(o.covariates);
}

}  // namespace detail

// PIC encoding: delta = 1 gives [t, t]; otherwise [u, v].
inline IntervalObservation from_pic_record(bool delta, double t, double u, double v, Vector x,
                                           std::string cluster = {}) {
  IntervalObservation o;
  o.delta = delta;
  if (delta) {
    if (!std::isfinite(t) || !(t > 0.0)) throw DataError("exact time must be finite and positive");
    o.lower = o.upper = t;
  } else {
    if (u < 0.0 || v < 0.0) throw DataError("negative time");
    if (!(u < v)) throw DataError("censored record needs u < v");
    o.lower = u;
    o.upper = v;
  }
  o.covariates = std::move(x);
  o.cluster = std::move(cluster);
  detail::check_observation(o);
  return o;
}

// DC encoding: d1 exact, d2 right-censored at t, d3 left-censored at t.
inline IntervalObservation from_dc_record(double t_tilde, bool d1, bool d2, bool d3, Vector x,
                                          std::string cluster = {}) {
  if (int(d1) + int(d2) + int(d3) != 1)
    throw DataError("exactly one of d1, d2, d3 must be set");
  if (!std::isfinite(t_tilde) || !(t_tilde > 0.0))
    throw DataError("observed time must be finite and positive");
  if (d1) return from_pic_record(true, t_tilde, 0.0, 0.0, std::move(x), std::move(cluster));
  if (d2) return from_pic_record(false, 0.0, t_tilde, kInf, std::move(x), std::move(cluster));
  return from_pic_record(false, 0.0, 0.0, t_tilde, std::move(x), std::move(cluster));
}

struct ResidualBounds {
  double lower;
  double upper;
};

// (log lower - beta'x, log upper - beta'x) with -inf/+inf for the open ends.
inline ResidualBounds residual_bounds(const IntervalObservation& obs, const Vector& beta) {
  if (beta.size() != obs.covariates.size())
    throw DataError("coefficient length does not match covariate dimension");
  const double lin = beta.dot(obs.covariates);
  const double lo = obs.lower > 0.0 ? std::log(obs.lower) - lin : -kInf;
  const double hi = obs.upper < kInf ? std::log(obs.upper) - lin : kInf;
  return {lo, hi};
}

// Immutable, validated collection of observations.  Cluster ids are mapped
// to dense indices in order of first appearance; an empty id makes the row
// its own cluster.
class Dataset {
 public:
  Dataset() = default;

  explicit Dataset(std::vector<IntervalObservation> obs) : obs_(std::move(obs)) {
    if (obs_.empty()) throw DataError("empty dataset");
    p_ = obs_.front().covariates.size();
    const auto n = static_cast<Eigen::Index>(obs_.size());
    x_.resize(n, p_);
    log_lower_.resize(n);
    log_upper_.resize(n);
    eta1_.resize(obs_.size());
    eta2_.resize(obs_.size());
    cluster_of_.resize(obs_.size());

    std::map<std::string, int> ids;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& o = obs_[static_cast<std::size_t>(i)];
      detail::check_observation(o);
      if (o.covariates.size() != p_)
        throw DataError("row " + std::to_string(i) + ": covariate length differs from p");
      x_.row(i) = o.covariates.transpose();
      log_lower_[i] = o.lower > 0.0 ? std::log(o.lower) : -kInf;
      log_upper_[i] = o.upper < kInf ? std::log(o.upper) : kInf;
      eta1_[static_cast<std::size_t>(i)] = o.eta1();
      eta2_[static_cast<std::size_t>(i)] = o.eta2();

      int c;
      if (o.cluster.empty()) {
        c = static_cast<int>(members_.size());
        members_.emplace_back();
      } else {
        auto [it, fresh] = ids.emplace(o.cluster, static_cast<int>(members_.size()));
        if (fresh) members_.emplace_back();
        c = it->second;
      }
      cluster_of_[static_cast<std::size_t>(i)] = c;
      members_[static_cast<std::size_t>(c)].push_back(static_cast<std::size_t>(i));
    }
  }

  std::size_t size() const { return obs_.size(); }
  Eigen::Index p() const { return p_; }
  const IntervalObservation& operator[](std::size_t i) const { return obs_[i]; }
  const std::vector<IntervalObservation>& observations() const { return obs_; }

  const Matrix& covariates() const { return x_; }
  const Vector& log_lower() const { return log_lower_; }
  const Vector& log_upper() const { return log_upper_; }
  bool eta1(std::size_t i) const { return eta1_[i]; }
  bool eta2(std::size_t i) const { return eta2_[i]; }

  std::size_t n_clusters() const { return members_.size(); }
  int cluster_of(std::size_t i) const { return cluster_of_[i]; }
  const std::vector<std::size_t>& cluster_members(std::size_t c) const { return members_[c]; }
  std::size_t cluster_size(std::size_t c) const { return members_[c].size(); }

  // Number of ordered (i, j) pairs with eta2_i * eta1_j = 1 and i != j.
  std::size_t usable_pair_count() const {
    std::size_t n2 = 0, n1 = 0, both = 0;
    for (std::size_t i = 0; i < size(); ++i) {
      n2 += eta2_[i];
      n1 += eta1_[i];
      both += eta1_[i] && eta2_[i];
    }
    return n2 * n1 - both;
  }

  // Fraction of rows with delta == 0.
  double censored_fraction() const {
    std::size_t c = 0;
    for (const auto& o : obs_) c += !o.delta;
    return static_cast<double>(c) / static_cast<double>(size());
  }

 private:
  std::vector<IntervalObservation> obs_;
  Eigen::Index p_ = 0;
  Matrix x_;
  Vector log_lower_, log_upper_;
  std::vector<bool> eta1_, eta2_;
  std::vector<int> cluster_of_;
  std::vector<std::vector<std::size_t>> members_;
};

}  // namespace rankreg
