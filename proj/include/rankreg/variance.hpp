#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "rankreg/data_model.hpp"
#include "rankreg/estimators.hpp"
#include "rankreg/parallel.hpp"
#include "rankreg/rng.hpp"

namespace rankreg {

struct ResampleConfig {
  int R = 200;
  std::uint64_t seed = 0;
  double k_scale = 1.0;  // standard deviation of each coordinate of K_r
  unsigned threads = 1;
};

struct CovarianceEstimate {
  Matrix gamma;     // covariance of sqrt(n) (beta_hat - beta)
  Matrix omega;     // covariance of the perturbed score
  Matrix a_matrix;  // slope of the score
  bool condition_flag = false;  // slope matrix singular; covariance absent
  std::optional<Matrix> covariance;  // gamma / n
  double clipped = 0.0;  // negative eigenvalue mass removed, relative to trace
  std::string warning;
};

namespace variance_detail {

inline Matrix empirical_covariance(const Matrix& rows) {
  const Eigen::Index r = rows.rows();
  const Eigen::RowVectorXd mean = rows.colwise().mean();
  const Matrix centered = rows.rowwise() - mean;
  return centered.transpose() * centered / static_cast<double>(r - 1);
}

}  // namespace variance_detail

// Resampling sandwich estimate A^-1 Omega A^-T.
//   perturbed(r) -> sqrt(n) S*(beta_hat) for perturbation draw r
//   shifted(K)   -> sqrt(n) S(beta_hat + K / sqrt(n))
// Omega is the empirical covariance of the perturbed draws; row j of A is the
// least-squares slope of coordinate j of the shifted scores on K (an
// intercept column is fitted and discarded).
template <class Perturbed, class Shifted>
CovarianceEstimate resampling_sandwich(Eigen::Index p, double n, const ResampleConfig& rc, Perturbed&& perturbed,
                                       Shifted&& shifted) {
  if (rc.R < 2 || rc.R < p + 1) throw std::invalid_argument("resample count R must be at least max(2, p + 1)");
  if (!(rc.k_scale > 0.0) || !std::isfinite(rc.k_scale)) throw std::invalid_argument("k_scale must be positive");
  if (!(n > 0.0)) throw std::invalid_argument("sample size must be positive");
  const auto R = static_cast<Eigen::Index>(rc.R);

  Matrix pert(R, p), shift(R, p), design(R, p + 1);
  parallel_for(static_cast<std::size_t>(rc.R), rc.threads, [&](std::size_t r) {
    const auto rr = static_cast<Eigen::Index>(r);
    pert.row(rr) = perturbed(r).transpose();
    Engine eng = make_stream(rc.seed, r, StreamTag::Shift);
    std::normal_distribution<double> nd(0.0, rc.k_scale);
    Vector k(p);
    for (Eigen::Index j = 0; j < p; ++j) k[j] = nd(eng);
    design(rr, 0) = 1.0;
    design.block(rr, 1, 1, p) = k.transpose();
    shift.row(rr) = shifted(k).transpose();
  });

  CovarianceEstimate ce;
  ce.omega = variance_detail::empirical_covariance(pert);
  ce.omega = 0.5 * (ce.omega + ce.omega.transpose());

  const Matrix coef = design.colPivHouseholderQr().solve(shift);  // (p+1) x p
  ce.a_matrix = coef.bottomRows(p).transpose();

  Eigen::FullPivLU<Matrix> lu(ce.a_matrix);
  const Eigen::JacobiSVD<Matrix> svd(ce.a_matrix);
  const Vector sv = svd.singularValues();
  if (!lu.isInvertible() || sv[p - 1] <= 1e-10 * sv[0] || !std::isfinite(sv[0])) {
    ce.condition_flag = true;
    ce.warning = "slope matrix is singular; increase the resample count R";
    ce.gamma = Matrix::Constant(p, p, std::numeric_limits<double>::quiet_NaN());
    return ce;
  }
  const Matrix ainv = lu.inverse();
  Matrix gamma = ainv * ce.omega * ainv.transpose();
  gamma = 0.5 * (gamma + gamma.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> es(gamma);
  Vector ev = es.eigenvalues();
  double neg = 0.0;
  for (Eigen::Index j = 0; j < p; ++j)
    if (ev[j] < 0.0) {
      neg -= ev[j];
      ev[j] = 0.0;
    }
  if (neg > 0.0) {
    gamma = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    gamma = 0.5 * (gamma + gamma.transpose());
    const double tr = std::abs(ev.sum()) + neg;
    ce.clipped = neg / tr;
    if (ce.clipped > 1e-8) ce.warning = "negative eigenvalues clipped from the sandwich covariance";
  }
  ce.gamma = gamma;
  ce.covariance = gamma / n;
  return ce;
}

// Resampling covariance of beta_hat for the given weight specification, with
// one unit-mean exponential multiplier per cluster.
inline CovarianceEstimate estimate_covariance(const Dataset& data, const Vector& beta_hat, const WeightSpec& wspec,
                                              const ResampleConfig& rc) {
  if (beta_hat.size() != data.p()) throw std::invalid_argument("coefficient length does not match covariate dimension");
  const double n = static_cast<double>(data.n_clusters());
  const double rn = std::sqrt(n);
  const std::size_t nc = data.n_clusters();
  auto perturbed = [&](std::size_t r) {
    Engine eng = make_stream(rc.seed, r, StreamTag::Perturbation);
    std::exponential_distribution<double> ed(1.0);
    std::vector<double> z(nc);
    for (auto& v : z) v = ed(eng);
    return Vector(rn * perturbed_score(data, beta_hat, z, wspec));
  };
  auto shifted = [&](const Vector& k) { return Vector(rn * score(data, beta_hat + k / rn, wspec)); };
  return resampling_sandwich(data.p(), n, rc, perturbed, shifted);
}

// Same as above, checking that the fit is usable and matches wspec.
inline CovarianceEstimate estimate_covariance(const Dataset& data, const FitResult& fit, const WeightSpec& wspec,
                                              const ResampleConfig& rc) {
  if (!(fit.weight == wspec)) throw std::invalid_argument("weight specification differs from the one used to fit");
  if (!fit.converged) throw std::invalid_argument("fit did not converge; covariance not estimated");
  return estimate_covariance(data, fit.beta, wspec, rc);
}

struct Interval {
  double lower;
  double upper;
};

// Wald intervals beta_j +- z_{(1+level)/2} * se_j.
inline std::vector<Interval> wald_ci(const Vector& beta, const Matrix& covariance, double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must lie in (0, 1)");
  const double z = boost::math::quantile(boost::math::normal(), 0.5 * (1.0 + level));
  std::vector<Interval> out;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double se = std::sqrt(std::max(0.0, covariance(j, j)));
    out.push_back({beta[j] - z * se, beta[j] + z * se});
  }
  return out;
}

inline std::vector<Interval> wald_ci(const FitResult& fit, double level) {
  if (!fit.covariance) throw std::invalid_argument("fit has no covariance estimate");
  return wald_ci(fit.beta, *fit.covariance, level);
}

}  // namespace rankreg
