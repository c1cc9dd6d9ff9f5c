#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rankreg/data_model.hpp"
#include "rankreg/lad_solver.hpp"

namespace rankreg {

enum class WeightKind { Gehan, LogRank };

// Cluster-level weight m^-alpha: Unit is alpha = 0, InverseSize is alpha = 1.
class ClusterWeight {
 public:
  enum class Kind { Unit, InverseSize, Power };

  static ClusterWeight unit() { return ClusterWeight(Kind::Unit, 0.0); }
  static ClusterWeight inverse_size() { return ClusterWeight(Kind::InverseSize, 1.0); }
  static ClusterWeight power(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("cluster weight exponent must lie in [0, 1]");
    return ClusterWeight(Kind::Power, alpha);
  }

  Kind kind() const { return kind_; }
  double exponent() const { return alpha_; }
  double operator()(std::size_t cluster_size) const {
    if (alpha_ == 0.0) return 1.0;
    if (alpha_ == 1.0) return 1.0 / static_cast<double>(cluster_size);
    return std::pow(static_cast<double>(cluster_size), -alpha_);
  }
  bool operator==(const ClusterWeight& o) const { return alpha_ == o.alpha_; }

  std::string name() const {
    if (alpha_ == 0.0) return "unit";
    if (alpha_ == 1.0) return "inverse";
    char buf[40];
    std::snprintf(buf, sizeof buf, "power:%g", alpha_);
    return buf;
  }
  // Column labels used in the clustered simulation tables.
  std::string label() const { return alpha_ == 0.0 ? "Unadjusted" : "Adjusted"; }

 private:
  ClusterWeight(Kind k, double a) : kind_(k), alpha_(a) {}
  Kind kind_ = Kind::Unit;
  double alpha_ = 0.0;
};

struct WeightSpec {
  WeightKind kind = WeightKind::Gehan;
  ClusterWeight cluster_weight = ClusterWeight::unit();

  bool operator==(const WeightSpec& o) const { return kind == o.kind && cluster_weight == o.cluster_weight; }
  std::string kind_name() const { return kind == WeightKind::Gehan ? "gehan" : "logrank"; }
};

struct FitConfig {
  WeightSpec weight;
  std::optional<double> big_m;  // nullopt selects the automatic rule
  int max_outer_iter = 50;
  double outer_tol = 1e-4;
  std::uint64_t seed = 0;
  SolveOptions solver;
};

struct FitResult {
  Vector beta;
  std::optional<Matrix> covariance;
  int outer_iterations = 0;
  double score_norm = 0.0;  // sup-norm of the estimating function at beta
  WeightSpec weight;
  std::size_t n_pairs_used = 0;
  bool converged = true;
  SolveDiagnostics solver;
  double big_m = 0.0;
  int big_m_doublings = 0;
  std::vector<Vector> last_iterates;  // filled when the outer iteration does not settle
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// phi_{cluster(i)} for every observation.
inline std::vector<double> observation_weights(const Dataset& data, const ClusterWeight& cw) {
  std::vector<double> w(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    w[i] = cw(data.cluster_size(static_cast<std::size_t>(data.cluster_of(i))));
  return w;
}

// Per-observation risk-set sums at residual thresholds v_i(beta):
//   den_i = sum_j m_j eta1_j I{u_j >= v_i},  num_i = sum_j m_j eta1_j X_j I{u_j >= v_i}.
// Rows with eta2_i = 0 are left at zero.
// Covariates are taken relative to the first row; both score forms are
// invariant to that shift and identical covariates then cancel exactly.
struct RiskSets {
  Vector den;
  Matrix num;
  Matrix xc;  // centred covariates used for num
};

inline RiskSets risk_sets(const Dataset& data, const Vector& beta, const std::vector<double>& mult) {
  const std::size_t n = data.size();
  const Eigen::Index p = data.p();
  if (beta.size() != p) throw std::invalid_argument("coefficient length does not match covariate dimension");
  const Vector lin = data.covariates() * beta;
  const Matrix xc = data.covariates().rowwise() - data.covariates().row(0);

  std::vector<std::size_t> at_risk;
  at_risk.reserve(n);
  for (std::size_t j = 0; j < n; ++j)
    if (data.eta1(j)) at_risk.push_back(j);
  std::vector<double> u(n);
  for (std::size_t j : at_risk) u[j] = data.log_lower()[static_cast<Eigen::Index>(j)] - lin[static_cast<Eigen::Index>(j)];
  std::stable_sort(at_risk.begin(), at_risk.end(), [&](std::size_t a, std::size_t b) { return u[a] > u[b]; });

  // Compensated prefix sums over the descending order.
  const std::size_t m = at_risk.size();
  std::vector<double> sorted_u(m);
  Matrix prefix(static_cast<Eigen::Index>(m) + 1, p + 1);
  prefix.row(0).setZero();
  std::vector<lad_detail::Accumulator> acc(static_cast<std::size_t>(p) + 1);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t j = at_risk[k];
    sorted_u[k] = u[j];
    acc[0].add(mult[j]);
    for (Eigen::Index c = 0; c < p; ++c)
      acc[static_cast<std::size_t>(c) + 1].add(mult[j] * xc(static_cast<Eigen::Index>(j), c));
    for (Eigen::Index c = 0; c <= p; ++c) prefix(static_cast<Eigen::Index>(k) + 1, c) = acc[static_cast<std::size_t>(c)].value();
  }

  RiskSets rs{Vector::Zero(static_cast<Eigen::Index>(n)), Matrix::Zero(static_cast<Eigen::Index>(n), p), xc};
  for (std::size_t i = 0; i < n; ++i) {
    if (!data.eta2(i)) continue;
    const double v = data.log_upper()[static_cast<Eigen::Index>(i)] - lin[static_cast<Eigen::Index>(i)];
    // count of u_j >= v in a descending array
    const auto cnt = static_cast<Eigen::Index>(
        std::upper_bound(sorted_u.begin(), sorted_u.end(), v, [](double val, double e) { return val > e; }) -
        sorted_u.begin());
    rs.den[static_cast<Eigen::Index>(i)] = prefix(cnt, 0);
    rs.num.row(static_cast<Eigen::Index>(i)) = prefix.block(cnt, 1, 1, p);
  }
  return rs;
}

namespace estimators_detail {

inline std::vector<double> expand_cluster_values(const Dataset& data, const std::vector<double>& per_cluster) {
  if (per_cluster.size() != data.n_clusters()) throw std::invalid_argument("need one multiplier per cluster");
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = per_cluster[static_cast<std::size_t>(data.cluster_of(i))];
  return out;
}

// n^-1 sum_i a_i eta2_i w_i (den_i X_i - num_i) for Gehan-type weights, or
// n^-1 sum_i a_i eta2_i (X_i - num_i / den_i) for log-rank weights.
inline Vector assemble(const Dataset& data, const RiskSets& rs, const std::vector<double>& a, WeightKind kind) {
  const Eigen::Index p = data.p();
  std::vector<lad_detail::Accumulator> acc(static_cast<std::size_t>(p));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (!data.eta2(i) || a[i] == 0.0) continue;
    const double den = rs.den[ii];
    if (den <= 0.0) continue;
    for (Eigen::Index c = 0; c < p; ++c) {
      const double xi = rs.xc(ii, c);
      const double term = kind == WeightKind::Gehan ? den * xi - rs.num(ii, c) : xi - rs.num(ii, c) / den;
      acc[static_cast<std::size_t>(c)].add(a[i] * term);
    }
  }
  Vector s(p);
  for (Eigen::Index c = 0; c < p; ++c) s[c] = acc[static_cast<std::size_t>(c)].value();
  return s / static_cast<double>(data.n_clusters());
}

}  // namespace estimators_detail

// Estimating function S(beta): Gehan (pairwise definite orderings) or
// log-rank (risk-set centred covariates), each with cluster weights, and
// normalised by the number of clusters.
inline Vector score(const Dataset& data, const Vector& beta, const WeightSpec& wspec = {}) {
  const auto phi = observation_weights(data, wspec.cluster_weight);
  const RiskSets rs = risk_sets(data, beta, phi);
  return estimators_detail::assemble(data, rs, phi, wspec.kind);
}

// Score with cluster multipliers z entering both pair roles (z_i z_j for
// Gehan; numerator and denominator of the risk set for log-rank).  At z == 1
// this is exactly score().
inline Vector perturbed_score(const Dataset& data, const Vector& beta, const std::vector<double>& z,
                              const WeightSpec& wspec = {}) {
  for (double v : z)
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("perturbation multipliers must be finite and >= 0");
  auto m = estimators_detail::expand_cluster_values(data, z);
  const auto phi = observation_weights(data, wspec.cluster_weight);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] *= phi[i];
  const RiskSets rs = risk_sets(data, beta, m);
  return estimators_detail::assemble(data, rs, m, wspec.kind);
}

// Per-observation weights of the monotone surrogate at anchor b:
// 1 for Gehan, 1 / (weighted at-risk count at v_i(b)) for log-rank.
inline std::vector<double> iteration_weights(const Dataset& data, const WeightSpec& wspec, const std::optional<Vector>& anchor) {
  std::vector<double> w(data.size(), 1.0);
  if (wspec.kind == WeightKind::Gehan) return w;
  if (!anchor) throw std::invalid_argument("log-rank pseudo-observations need an anchor coefficient");
  const auto phi = observation_weights(data, wspec.cluster_weight);
  const RiskSets rs = risk_sets(data, *anchor, phi);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double den = rs.den[static_cast<Eigen::Index>(i)];
    w[i] = data.eta2(i) && den > 0.0 ? 1.0 / den : 0.0;
  }
  return w;
}

// Monotone surrogate S(beta, b) = n^-1 sum_i sum_j phi_i phi_j w_i(b) eta2_i eta1_j (X_i - X_j) I{v_i <= u_j}.
inline Vector monotone_score(const Dataset& data, const Vector& beta, const WeightSpec& wspec, const std::optional<Vector>& anchor) {
  const auto phi = observation_weights(data, wspec.cluster_weight);
  const auto w = iteration_weights(data, wspec, anchor);
  std::vector<double> a(data.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = phi[i] * w[i];
  const RiskSets rs = risk_sets(data, beta, phi);
  return estimators_detail::assemble(data, rs, a, WeightKind::Gehan);
}

// Pair rows of the L1 objective plus the artificial large-response row.
struct PseudoProblem {
  PseudoRows rows;
  std::size_t n_pairs = 0;  // rows before the artificial one
  Vector offset_design;     // design of the artificial row
  double big_m = 0.0;
  double pair_scale = 0.0;  // sum of weight * |response| over pair rows
};

inline double auto_big_m(double pair_scale) { return std::max(10.0 * pair_scale, 1.0); }

inline PseudoProblem build_gehan_pseudo(const Dataset& data, const WeightSpec& wspec,
                                        const std::optional<Vector>& anchor = std::nullopt,
                                        std::optional<double> big_m = std::nullopt) {
  const std::size_t n = data.size();
  const Eigen::Index p = data.p();
  const auto phi = observation_weights(data, wspec.cluster_weight);
  const auto w = iteration_weights(data, wspec, anchor);

  std::vector<std::size_t> fail, risk;
  for (std::size_t i = 0; i < n; ++i) {
    if (data.eta2(i)) fail.push_back(i);
    if (data.eta1(i)) risk.push_back(i);
  }
  if (fail.empty() || risk.empty())
    throw FitError("estimating function identically zero: no usable (finite upper, positive lower) pairs");

  PseudoProblem pp{PseudoRows(p), 0, Vector::Zero(p), 0.0, 0.0};
  pp.rows.reserve(fail.size() * risk.size() + 1);
  lad_detail::Accumulator scale;
  std::vector<lad_detail::Accumulator> off(static_cast<std::size_t>(p));
  bool any_ordered = false;
  const Matrix& x = data.covariates();
  Vector d(p);
  for (std::size_t i : fail) {
    const double vi = data.log_upper()[static_cast<Eigen::Index>(i)];
    for (std::size_t j : risk) {
      if (i == j) continue;
      const double wt = phi[i] * phi[j] * w[i];
      if (wt == 0.0) continue;
      const double c = vi - data.log_lower()[static_cast<Eigen::Index>(j)];
      d = x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j));
      pp.rows.add(c, d, wt);
      scale.add(wt * std::abs(c));
      any_ordered = any_ordered || c <= 0.0;
      for (Eigen::Index k = 0; k < p; ++k) off[static_cast<std::size_t>(k)].add(-wt * d[k]);
    }
  }
  if (pp.rows.empty()) throw FitError("estimating function identically zero: all pair weights vanish");
  if (!any_ordered)
    throw FitError("estimating function identically zero at the origin: no definitely ordered pair exists");
  pp.n_pairs = pp.rows.size();
  for (Eigen::Index k = 0; k < p; ++k) pp.offset_design[k] = off[static_cast<std::size_t>(k)].value();
  pp.pair_scale = scale.value();
  pp.big_m = big_m ? *big_m : auto_big_m(pp.pair_scale);
  if (!(pp.big_m > 0.0)) throw std::invalid_argument("big-M must be positive");
  pp.rows.add(pp.big_m, pp.offset_design, 1.0);
  return pp;
}

// n^-1 sum over pair rows of w d I{c - beta'd <= 0}; the gradient of the
// pairwise objective, computed from the materialised pair list.
inline Vector score_from_pseudo(const PseudoProblem& pp, const Vector& beta, std::size_t n_clusters) {
  const Eigen::Index p = pp.rows.p();
  std::vector<lad_detail::Accumulator> acc(static_cast<std::size_t>(p));
  for (std::size_t k = 0; k < pp.n_pairs; ++k) {
    double fit = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) fit += pp.rows.design(k, j) * beta[j];
    if (pp.rows.response(k) - fit <= 0.0)
      for (Eigen::Index j = 0; j < p; ++j) acc[static_cast<std::size_t>(j)].add(pp.rows.weight(k) * pp.rows.design(k, j));
  }
  Vector s(p);
  for (Eigen::Index j = 0; j < p; ++j) s[j] = acc[static_cast<std::size_t>(j)].value();
  return s / static_cast<double>(n_clusters);
}

namespace estimators_detail {

struct SurrogateSolve {
  LadResult lad;
  double big_m;
  int doublings;
  std::size_t n_pairs;
};

// Solves one L1 surrogate, doubling M until the artificial row sits on its
// positive side.
inline SurrogateSolve solve_surrogate(const Dataset& data, const WeightSpec& wspec, const std::optional<Vector>& anchor,
                                      const FitConfig& cfg, const Vector& init) {
  PseudoProblem pp = build_gehan_pseudo(data, wspec, anchor, cfg.big_m);
  constexpr int kMaxDoublings = 5;
  double m = pp.big_m;
  for (int dbl = 0;; ++dbl) {
    LadResult lr = minimize_lad(pp.rows, init, cfg.solver);
    if (m - lr.beta.dot(pp.offset_design) > 0.0) return {std::move(lr), m, dbl, pp.n_pairs};
    if (dbl == kMaxDoublings) throw FitError("big-M row remains active after repeated doubling");
    m *= 2.0;
    pp.rows = [&] {
      PseudoRows r(pp.rows.p());
      r.reserve(pp.rows.size());
      for (std::size_t k = 0; k < pp.n_pairs; ++k) {
        Vector d(pp.rows.p());
        for (Eigen::Index j = 0; j < d.size(); ++j) d[j] = pp.rows.design(k, j);
        r.add(pp.rows.response(k), d, pp.rows.weight(k));
      }
      r.add(m, pp.offset_design, 1.0);
      return r;
    }();
  }
}

}  // namespace estimators_detail

// Gehan estimator: minimiser of the pairwise L1 rank objective.
inline FitResult fit_gehan(const Dataset& data, const FitConfig& cfg) {
  WeightSpec ws = cfg.weight;
  ws.kind = WeightKind::Gehan;
  auto sol = estimators_detail::solve_surrogate(data, ws, std::nullopt, cfg, Vector::Zero(data.p()));
  FitResult fr;
  fr.beta = sol.lad.beta;
  fr.weight = ws;
  fr.n_pairs_used = sol.n_pairs;
  fr.solver = sol.lad.diag;
  fr.converged = sol.lad.diag.converged;
  fr.big_m = sol.big_m;
  fr.big_m_doublings = sol.doublings;
  fr.score_norm = score(data, fr.beta, ws).cwiseAbs().maxCoeff();
  return fr;
}

// Log-rank estimator by repeated minimisation of the monotone surrogate,
// starting from the Gehan estimate.
inline FitResult fit_logrank(const Dataset& data, const FitConfig& cfg) {
  if (cfg.max_outer_iter < 1) throw std::invalid_argument("max_outer_iter must be >= 1");
  FitResult fr = fit_gehan(data, cfg);
  WeightSpec ws = cfg.weight;
  ws.kind = WeightKind::LogRank;
  fr.weight = ws;
  fr.converged = false;
  Vector prev = fr.beta;
  std::vector<Vector> history;
  bool solver_ok = fr.solver.converged;
  for (int k = 1; k <= cfg.max_outer_iter; ++k) {
    auto sol = estimators_detail::solve_surrogate(data, ws, prev, cfg, prev);
    fr.beta = sol.lad.beta;
    fr.solver = sol.lad.diag;
    fr.n_pairs_used = sol.n_pairs;
    fr.big_m = sol.big_m;
    fr.big_m_doublings = sol.doublings;
    fr.outer_iterations = k;
    solver_ok = sol.lad.diag.converged;
    if ((fr.beta - prev).cwiseAbs().maxCoeff() < cfg.outer_tol) {
      fr.converged = solver_ok;
      break;
    }
    // The map b -> argmin L(., b) is deterministic, so a repeated iterate is a cycle.
    const bool cycled = std::find(history.begin(), history.end(), fr.beta) != history.end();
    if (cycled || k == cfg.max_outer_iter) {
      fr.last_iterates = {prev, fr.beta};
      break;
    }
    history.push_back(prev);
    prev = fr.beta;
  }
  fr.score_norm = score(data, fr.beta, ws).cwiseAbs().maxCoeff();
  return fr;
}

inline FitResult fit(const Dataset& data, const FitConfig& cfg) {
  return cfg.weight.kind == WeightKind::Gehan ? fit_gehan(data, cfg) : fit_logrank(data, cfg);
}

}  // namespace rankreg
