#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rankreg/data_model.hpp"

namespace rankreg {

// One term w * |response - beta'design| of a weighted LAD objective.
struct PseudoObservation {
  double response = 0.0;
  Vector design;
  double weight = 1.0;
};

// Row storage for large LAD problems (row-major design, one allocation).
class PseudoRows {
 public:
  using DesignMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  explicit PseudoRows(Eigen::Index p = 0) : p_(p) {}

  void reserve(std::size_t n) {
    response_.reserve(n);
    weight_.reserve(n);
    design_.reserve(n * static_cast<std::size_t>(p_));
  }

  template <class Derived>
  void add(double response, const Eigen::MatrixBase<Derived>& design, double weight) {
    if (design.size() != p_) throw std::invalid_argument("pseudo-observation design has wrong length");
    if (!(weight >= 0.0) || !std::isfinite(weight)) throw std::invalid_argument("weight must be finite and >= 0");
    if (!std::isfinite(response)) throw std::invalid_argument("non-finite pseudo response");
    response_.push_back(response);
    weight_.push_back(weight);
    for (Eigen::Index j = 0; j < p_; ++j) {
      if (!std::isfinite(design(j))) throw std::invalid_argument("non-finite pseudo design");
      design_.push_back(design(j));
    }
  }

  void add(const PseudoObservation& o) { add(o.response, o.design, o.weight); }

  std::size_t size() const { return response_.size(); }
  bool empty() const { return response_.empty(); }
  Eigen::Index p() const { return p_; }

  double response(std::size_t k) const { return response_[k]; }
  double weight(std::size_t k) const { return weight_[k]; }
  double design(std::size_t k, Eigen::Index j) const { return design_[k * static_cast<std::size_t>(p_) + static_cast<std::size_t>(j)]; }
  DesignMap design_matrix() const { return DesignMap(design_.data(), static_cast<Eigen::Index>(size()), p_); }

  PseudoObservation operator[](std::size_t k) const {
    PseudoObservation o;
    o.response = response_[k];
    o.weight = weight_[k];
    o.design.resize(p_);
    for (Eigen::Index j = 0; j < p_; ++j) o.design[j] = design(k, j);
    return o;
  }

 private:
  Eigen::Index p_;
  std::vector<double> response_, weight_, design_;
};

// The weighted design does not determine every coefficient.
class UnidentifiedDirection : public std::runtime_error {
 public:
  UnidentifiedDirection(const std::string& what, Vector direction)
      : std::runtime_error(what), direction_(std::move(direction)) {}
  const Vector& direction() const { return direction_; }

 private:
  Vector direction_;
};

struct SolveOptions {
  double tol = 1e-7;  // relative objective accuracy
  int max_iter = 200;
};

struct SolveDiagnostics {
  double objective = 0.0;
  int iterations = 0;
  double subgradient_gap = 0.0;  // min-norm subgradient, relative to sum of row norms
  double duality_gap = 0.0;      // (objective - dual bound) / objective scale
  bool converged = false;
};

struct LadResult {
  Vector beta;
  SolveDiagnostics diag;
};

namespace lad_detail {

// Neumaier-compensated accumulator.
struct Accumulator {
  double sum = 0.0, comp = 0.0;
  void add(double v) {
    const double t = sum + v;
    comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

// Minimizer of sum_k wt_k * |t_k - x|.
inline double weighted_median(std::vector<std::pair<double, double>>& pts) {
  std::sort(pts.begin(), pts.end());
  double total = 0.0;
  for (const auto& q : pts) total += q.second;
  double cum = 0.0;
  for (const auto& q : pts) {
    cum += q.second;
    if (cum >= 0.5 * total) return q.first;
  }
  return pts.back().first;
}

// Active problem: sum_k |y_k - X_k beta| with weights folded into rows.
struct ScaledProblem {
  Matrix x;
  Vector y;
  double constant = 0.0;  // contribution of rows with zero design
};

inline ScaledProblem scale_rows(const PseudoRows& rows) {
  const Eigen::Index p = rows.p();
  std::size_t active = 0;
  bool any_weight = false;
  ScaledProblem sp;
  Accumulator cst;
  std::vector<char> use(rows.size(), 0);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const double w = rows.weight(k);
    if (w <= 0.0) continue;
    any_weight = true;
    bool zero = true;
    for (Eigen::Index j = 0; j < p; ++j) zero = zero && rows.design(k, j) == 0.0;
    if (zero) {
      cst.add(w * std::abs(rows.response(k)));
    } else {
      use[k] = 1;
      ++active;
    }
  }
  if (!any_weight) throw std::invalid_argument("LAD problem needs at least one row with positive weight");
  sp.constant = cst.value();
  sp.x.resize(static_cast<Eigen::Index>(active), p);
  sp.y.resize(static_cast<Eigen::Index>(active));
  Eigen::Index r = 0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (!use[k]) continue;
    const double w = rows.weight(k);
    sp.y[r] = w * rows.response(k);
    for (Eigen::Index j = 0; j < p; ++j) sp.x(r, j) = w * rows.design(k, j);
    ++r;
  }
  return sp;
}

inline double l1(const ScaledProblem& sp, const Vector& beta) {
  Accumulator acc;
  const Vector r = sp.y - sp.x * beta;
  for (Eigen::Index k = 0; k < r.size(); ++k) acc.add(std::abs(r[k]));
  return acc.value();
}

inline void check_rank(const Matrix& x) {
  const Eigen::Index p = x.cols();
  if (x.rows() == 0) {
    Vector e = Vector::Zero(p);
    if (p > 0) e[0] = 1.0;
    throw UnidentifiedDirection("unidentified direction: no rows with a non-zero design", e);
  }
  // Column-equilibrate so the test is scale-free.
  Vector cn = x.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < p; ++j) {
    if (cn[j] == 0.0) {
      Vector e = Vector::Zero(p);
      e[j] = 1.0;
      throw UnidentifiedDirection("unidentified direction: coefficient " + std::to_string(j) + " never enters the design", e);
    }
  }
  const Matrix xs = x * cn.cwiseInverse().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> es(xs.transpose() * xs);
  const Vector ev = es.eigenvalues();
  if (ev[0] <= 1e-12 * ev[p - 1]) {
    Vector dir = cn.cwiseInverse().asDiagonal() * es.eigenvectors().col(0);
    dir /= dir.norm();
    throw UnidentifiedDirection("unidentified direction: weighted design is rank deficient", dir);
  }
}

struct IpmOutcome {
  Vector beta;
  double objective = 0.0;
  double lower_bound = 0.0;
  int iterations = 0;
  bool certified = false;
};

inline double max_step(const Vector& v, const Vector& dv) {
  double a = 1.0;
  for (Eigen::Index k = 0; k < v.size(); ++k)
    if (dv[k] < 0.0) a = std::min(a, -v[k] / dv[k]);
  return a;
}

// Mehrotra predictor-corrector on the bounded dual
//   max y'a  s.t. X'a = X'1/2, 0 <= a <= 1,
// whose multipliers are the LAD coefficients.  Every iterate keeps a feasible,
// so d = 2a - 1 gives the lower bound y'd on the LAD objective.
inline IpmOutcome interior_point(const ScaledProblem& sp, double gap_tol, int max_iter) {
  const Matrix& x = sp.x;
  const Vector& y = sp.y;
  const Eigen::Index n = x.rows();
  constexpr double kStep = 0.99995;

  Vector a = Vector::Constant(n, 0.5), s = Vector::Constant(n, 0.5);
  const Vector b = 0.5 * x.transpose() * Vector::Ones(n);
  Vector beta = (x.transpose() * x).ldlt().solve(x.transpose() * y);
  Vector r = y - x * beta;
  const double shift = 0.5 * r.cwiseAbs().mean() + 1e-12 * (y.cwiseAbs().mean() + 1.0);
  Vector w = r.cwiseMax(0.0).array() + shift;
  Vector z = (-r).cwiseMax(0.0).array() + shift;

  IpmOutcome out;
  const double yscale = y.cwiseAbs().sum();
  for (int it = 0;; ++it) {
    r = y - x * beta;
    out.objective = r.cwiseAbs().sum();
    out.lower_bound = y.dot(2.0 * a - Vector::Ones(n));
    out.iterations = it;
    const double denom = std::max(std::abs(out.objective), 1e-9 * yscale) + 1e-300;
    if (out.objective - out.lower_bound <= gap_tol * denom) {
      out.certified = true;
      break;
    }
    if (it >= max_iter) break;

    const Vector rp = b - x.transpose() * a;
    const Vector rd = w - z - r;
    const Vector d = ((z.array() / a.array()) + (w.array() / s.array())).inverse().matrix();
    const Matrix xd = x.array().colwise() * d.array();
    const Eigen::LDLT<Matrix> normal(x.transpose() * xd);

    auto direction = [&](const Vector& q, Vector& dbeta, Vector& da) {
      dbeta = normal.solve(xd.transpose() * q - rp);
      da = d.cwiseProduct(q - x * dbeta);
    };

    // Predictor.
    Vector q = -rd - z + w;
    Vector dbeta, da;
    direction(q, dbeta, da);
    Vector dz = -z - z.cwiseProduct(da).cwiseQuotient(a);
    Vector dw = -w + w.cwiseProduct(da).cwiseQuotient(s);
    double ap = std::min(max_step(a, da), max_step(s, -da));
    double ad = std::min(max_step(z, dz), max_step(w, dw));
    const double g = a.dot(z) + s.dot(w);
    const double g_aff = (a + ap * da).dot(z + ad * dz) + (s - ap * da).dot(w + ad * dw);
    const double sigma = std::pow(std::max(g_aff, 0.0) / g, 3);
    const double mu = sigma * g / (2.0 * static_cast<double>(n));

    // Corrector.
    const Vector raz = (mu - a.cwiseProduct(z).array()).matrix() - da.cwiseProduct(dz);
    const Vector rsw = (mu - s.cwiseProduct(w).array()).matrix() + da.cwiseProduct(dw);
    q = -rd + raz.cwiseQuotient(a) - rsw.cwiseQuotient(s);
    direction(q, dbeta, da);
    dz = (raz - z.cwiseProduct(da)).cwiseQuotient(a);
    dw = (rsw + w.cwiseProduct(da)).cwiseQuotient(s);
    ap = std::min(1.0, kStep * std::min(max_step(a, da), max_step(s, -da)));
    ad = std::min(1.0, kStep * std::min(max_step(z, dz), max_step(w, dw)));
    if (ap < 1e-14 && ad < 1e-14) break;

    a += ap * da;
    s -= ap * da;
    beta += ad * dbeta;
    z += ad * dz;
    w += ad * dw;
  }
  out.beta = beta;
  return out;
}

// Tries to land on an optimal vertex: solve the p rows with the smallest
// relative residuals that are linearly independent.
inline bool round_to_vertex(const ScaledProblem& sp, Vector& beta) {
  const Eigen::Index n = sp.x.rows(), p = sp.x.cols();
  const Vector r = sp.y - sp.x * beta;
  std::vector<std::pair<double, Eigen::Index>> order;
  order.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) {
    const double scale = std::abs(sp.y[k]) + sp.x.row(k).cwiseAbs().dot(beta.cwiseAbs()) + 1e-300;
    order.emplace_back(std::abs(r[k]) / scale, k);
  }
  const auto take = std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::max<Eigen::Index>(64 * p, 256)));
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end());

  Matrix basis(p, 0);
  std::vector<Eigen::Index> chosen;
  for (std::size_t t = 0; t < take && static_cast<Eigen::Index>(chosen.size()) < p; ++t) {
    Vector v = sp.x.row(order[t].second).transpose();
    const double nv = v.norm();
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index c = 0; c < basis.cols(); ++c) v -= basis.col(c).dot(v) * basis.col(c);
    if (v.norm() > 1e-8 * nv) {
      basis.conservativeResize(p, basis.cols() + 1);
      basis.col(basis.cols() - 1) = v / v.norm();
      chosen.push_back(order[t].second);
    }
  }
  if (static_cast<Eigen::Index>(chosen.size()) < p) return false;
  Matrix xb(p, p);
  Vector yb(p);
  for (Eigen::Index c = 0; c < p; ++c) {
    xb.row(c) = sp.x.row(chosen[static_cast<std::size_t>(c)]);
    yb[c] = sp.y[chosen[static_cast<std::size_t>(c)]];
  }
  beta = xb.colPivHouseholderQr().solve(yb);
  return beta.allFinite();
}

// Exact coordinate-wise weighted-median moves; accepts strict improvements only.
inline double coordinate_polish(const ScaledProblem& sp, Vector& beta, double f, int sweeps) {
  const Eigen::Index n = sp.x.rows(), p = sp.x.cols();
  std::vector<std::pair<double, double>> pts;
  pts.reserve(static_cast<std::size_t>(n));
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    bool improved = false;
    for (Eigen::Index j = 0; j < p; ++j) {
      const Vector r = sp.y - sp.x * beta;
      pts.clear();
      for (Eigen::Index k = 0; k < n; ++k) {
        const double xj = sp.x(k, j);
        if (xj != 0.0) pts.emplace_back(r[k] / xj, std::abs(xj));
      }
      if (pts.empty()) continue;
      const double step = weighted_median(pts);
      if (step == 0.0) continue;
      Vector trial = beta;
      trial[j] += step;
      const double ft = l1(sp, trial);
      if (ft < f) {
        beta = trial;
        f = ft;
        improved = true;
      }
    }
    if (!improved) break;
  }
  return f;
}

// Norm of the minimum-norm element of the subdifferential of sum|y - X beta|,
// treating rows with relatively negligible residuals as kinks.
inline double subgradient_gap(const ScaledProblem& sp, const Vector& beta) {
  const Eigen::Index n = sp.x.rows(), p = sp.x.cols();
  const Vector r = sp.y - sp.x * beta;
  Vector h = Vector::Zero(p);
  std::vector<Eigen::Index> kinks;
  double scale = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    scale += sp.x.row(k).norm();
    const double tol = 1e-9 * (std::abs(sp.y[k]) + sp.x.row(k).cwiseAbs().dot(beta.cwiseAbs()));
    if (std::abs(r[k]) <= tol)
      kinks.push_back(k);
    else
      h -= (r[k] > 0.0 ? 1.0 : -1.0) * sp.x.row(k).transpose();
  }
  if (scale == 0.0) return 0.0;
  // Box-constrained least squares over the kink multipliers t in [-1, 1].
  std::vector<double> t(kinks.size(), 0.0);
  for (int sweep = 0; sweep < 500 && !kinks.empty(); ++sweep) {
    double moved = 0.0;
    for (std::size_t m = 0; m < kinks.size(); ++m) {
      const auto xk = sp.x.row(kinks[m]).transpose();
      const double nn = xk.squaredNorm();
      const double tn = std::clamp(t[m] + h.dot(xk) / nn, -1.0, 1.0);
      const double delta = tn - t[m];
      if (delta != 0.0) {
        h -= delta * xk;
        t[m] = tn;
        moved = std::max(moved, std::abs(delta));
      }
    }
    if (moved < 1e-14) break;
  }
  return h.norm() / scale;
}

}  // namespace lad_detail

// sum_k w_k |c_k - beta'd_k|, compensated summation in row order.
inline double objective_value(const PseudoRows& rows, const Vector& beta) {
  if (beta.size() != rows.p()) throw std::invalid_argument("coefficient length does not match design");
  lad_detail::Accumulator acc;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    double fit = 0.0;
    for (Eigen::Index j = 0; j < rows.p(); ++j) fit += rows.design(k, j) * beta[j];
    acc.add(rows.weight(k) * std::abs(rows.response(k) - fit));
  }
  return acc.value();
}

inline double objective_value(const std::vector<PseudoObservation>& rows, const Vector& beta) {
  lad_detail::Accumulator acc;
  for (const auto& o : rows) acc.add(o.weight * std::abs(o.response - beta.dot(o.design)));
  return acc.value();
}

// Weighted least absolute deviations: interior point to near optimality,
// then vertex rounding and coordinate polishing.  Never returns a point
// worse than `init`.
inline LadResult minimize_lad(const PseudoRows& rows, const Vector& init, const SolveOptions& opt = {}) {
  using namespace lad_detail;
  if (init.size() != rows.p()) throw std::invalid_argument("initial value has wrong length");
  if (!(opt.tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  const ScaledProblem sp = scale_rows(rows);
  check_rank(sp.x);

  const double gap_tol = std::max(1e-13, opt.tol * 1e-4);
  IpmOutcome ipm = interior_point(sp, gap_tol, opt.max_iter);

  Vector beta = ipm.beta;
  double f = ipm.objective;
  if (Vector v = beta; round_to_vertex(sp, v)) {
    const double fv = l1(sp, v);
    if (fv <= f * (1.0 + 1e-12)) {
      beta = v;
      f = fv;
    }
  }
  f = coordinate_polish(sp, beta, f, 20);

  double reported = objective_value(rows, beta);
  if (const double f_init = objective_value(rows, init); f_init <= reported) {
    beta = init;
    reported = f_init;
    f = l1(sp, init);
  }

  LadResult res;
  res.beta = beta;
  res.diag.iterations = ipm.iterations;
  res.diag.objective = reported;
  const double yscale = sp.y.cwiseAbs().sum();
  const double denom = std::max(std::abs(f), 1e-9 * yscale) + 1e-300;
  res.diag.duality_gap = std::max(0.0, f - ipm.lower_bound) / denom;
  res.diag.subgradient_gap = subgradient_gap(sp, beta);
  res.diag.converged = ipm.certified && res.diag.duality_gap <= opt.tol &&
                       res.diag.subgradient_gap <= opt.tol;
  return res;
}

inline LadResult minimize_lad(const std::vector<PseudoObservation>& rows, const Vector& init,
                              const SolveOptions& opt = {}) {
  PseudoRows pr(init.size());
  pr.reserve(rows.size());
  for (const auto& o : rows) pr.add(o);
  return minimize_lad(pr, init, opt);
}

}  // namespace rankreg
