#pragma once

// Test-only reference computations.  Nothing here calls into the code paths
// it is used to check.

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "rankreg/data_model.hpp"

namespace oracle {

struct LadRow {
  double c;
  Eigen::VectorXd d;
  double w;
};

inline double lad_objective(const std::vector<LadRow>& rows, const Eigen::VectorXd& beta) {
  long double s = 0.0L;
  for (const auto& r : rows) s += static_cast<long double>(r.w) * std::fabs(r.c - r.d.dot(beta));
  return static_cast<double>(s);
}

// Exhaustive vertex enumeration: a weighted LAD problem with a full-rank
// design attains its minimum where p rows have zero residual.
inline double lad_minimum(const std::vector<LadRow>& rows, int p) {
  const int n = static_cast<int>(rows.size());
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> idx(p);
  for (int k = 0; k < p; ++k) idx[k] = k;
  while (true) {
    Eigen::MatrixXd a(p, p);
    Eigen::VectorXd b(p);
    for (int k = 0; k < p; ++k) {
      a.row(k) = rows[idx[k]].d.transpose();
      b[k] = rows[idx[k]].c;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (lu.rank() == p) best = std::min(best, lad_objective(rows, lu.solve(b)));
    int k = p - 1;
    while (k >= 0 && idx[k] == n - p + k) --k;
    if (k < 0) break;
    ++idx[k];
    for (int m = k + 1; m < p; ++m) idx[m] = idx[m - 1] + 1;
  }
  return best;
}

// Direct double sum n^-1 sum_i sum_j eta2_i eta1_j (X_i - X_j) I{v_i <= u_j},
// with pair multipliers a_i * b_j.
inline Eigen::VectorXd gehan_double_sum(const rankreg::Dataset& data, const Eigen::VectorXd& beta,
                                        const std::vector<double>& mult, double n_norm) {
  const auto n = data.size();
  Eigen::VectorXd s = Eigen::VectorXd::Zero(data.p());
  for (std::size_t i = 0; i < n; ++i) {
    if (!data.eta2(i)) continue;
    const double vi = std::log(data[i].upper) - beta.dot(data[i].covariates);
    for (std::size_t j = 0; j < n; ++j) {
      if (!data.eta1(j)) continue;
      const double uj = std::log(data[j].lower) - beta.dot(data[j].covariates);
      if (vi <= uj) s += mult[i] * mult[j] * (data[i].covariates - data[j].covariates);
    }
  }
  return s / n_norm;
}

}  // namespace oracle
