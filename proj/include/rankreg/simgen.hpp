#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "rankreg/data_model.hpp"
#include "rankreg/estimators.hpp"
#include "rankreg/parallel.hpp"
#include "rankreg/rng.hpp"
#include "rankreg/variance.hpp"

namespace rankreg {

enum class ScenarioKind { Pic1, Dc1, PicClustered, DcClustered };
enum class ErrorDist { Normal, ExtremeValue, Exp1 };

// Data-generating design: log T = 2 + X1 + X2 + e (times nu_i when clustered),
// X1 ~ N(0,1), X2 ~ Bernoulli(0.5).
struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::Pic1;
  int n = 200;  // subjects, or clusters for the clustered kinds
  ErrorDist error = ErrorDist::Normal;
  double censoring = 0.3;     // PIC: overall fraction with delta == 0
  double left_rate = 0.15;    // DC: fraction left-censored
  double right_rate = 0.15;   // DC: fraction right-censored
  double theta = 1.0;         // clustered: gamma frailty variance
  std::uint64_t seed = 1;

  bool clustered() const { return kind == ScenarioKind::PicClustered || kind == ScenarioKind::DcClustered; }
  bool doubly_censored() const { return kind == ScenarioKind::Dc1 || kind == ScenarioKind::DcClustered; }
};

inline constexpr double kFollowUp = 100.0;    // tau
inline constexpr double kIntercept = 2.0;
inline const Vector& true_coefficients() {
  static const Vector b = (Vector(2) << 1.0, 1.0).finished();
  return b;
}

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void validate(const ScenarioConfig& c) {
  if (c.n < 20) throw std::invalid_argument("scenario needs n >= 20");
  if (c.doubly_censored()) {
    if (!(c.left_rate > 0.0 && c.left_rate < 1.0) || !(c.right_rate > 0.0 && c.right_rate < 1.0))
      throw std::invalid_argument("censoring rates must lie in (0, 1)");
    if (c.left_rate + c.right_rate >= 1.0) throw std::invalid_argument("left + right censoring must be below 1");
  } else if (!(c.censoring > 0.0 && c.censoring < 1.0)) {
    throw std::invalid_argument("censoring rate must lie in (0, 1)");
  }
  if (c.clustered() && !(c.theta > 0.0)) throw std::invalid_argument("theta must be positive");
}

// Calibrated constants of the censoring mechanisms.
struct CensoringParams {
  double p0 = 0.0;       // PIC: exact-observation probability for X2 = 0
  double c_left = 0.0;   // DC: upper limit of the uniform in log L
  double c_right = 0.0;  // DC: limit of the uniform gap between log L and log R
};

namespace simgen_detail {

struct Latent {
  double x1, x2, log_t;
  int cluster;  // -1 for independent subjects
};

inline double draw_error(ErrorDist e, Engine& eng) {
  switch (e) {
    case ErrorDist::Normal:
      return std::normal_distribution<double>(0.0, 1.0)(eng);
    case ErrorDist::ExtremeValue:  // standard Gumbel (minimum): log of a unit exponential
      return std::log(std::exponential_distribution<double>(1.0)(eng));
    case ErrorDist::Exp1:
      return std::exponential_distribution<double>(1.0)(eng);
  }
  return 0.0;
}

// Decile-based cluster size: 2 + floor(10 F(nu)), F the gamma(1/theta, theta) cdf.
inline int cluster_size_for(double nu, double theta) {
  const double f = boost::math::gamma_p(1.0 / theta, nu / theta);
  return 2 + std::clamp(static_cast<int>(std::floor(10.0 * f)), 0, 9);
}

struct ClusterDraw {
  double nu;
  int size;
};

inline ClusterDraw draw_cluster(double theta, Engine& eng) {
  std::gamma_distribution<double> gd(1.0 / theta, theta);
  const double nu = gd(eng);
  return {nu, cluster_size_for(nu, theta)};
}

inline Latent draw_subject(ErrorDist e, double scale, int cluster, Engine& eng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::bernoulli_distribution bd(0.5);
  Latent l;
  l.x1 = nd(eng);
  l.x2 = bd(eng) ? 1.0 : 0.0;
  l.log_t = kIntercept + l.x1 + l.x2 + scale * draw_error(e, eng);
  l.cluster = cluster;
  return l;
}

inline std::vector<Latent> draw_latent(const ScenarioConfig& c, Engine& eng, std::size_t min_subjects = 0) {
  std::vector<Latent> out;
  if (!c.clustered()) {
    const auto n = std::max<std::size_t>(static_cast<std::size_t>(c.n), min_subjects);
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(draw_subject(c.error, 1.0, -1, eng));
    return out;
  }
  for (int k = 0; k < c.n || out.size() < min_subjects; ++k) {
    const ClusterDraw cd = draw_cluster(c.theta, eng);
    for (int m = 0; m < cd.size; ++m) out.push_back(draw_subject(c.error, cd.nu, k, eng));
  }
  return out;
}

// Uniform on the interval spanned by a and b.
inline double uniform_between(double a, double b, double u01) { return std::min(a, b) + std::abs(b - a) * u01; }

inline IntervalObservation censor_pic(const Latent& l, double p0, Engine& eng) {
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  Vector x(2);
  x << l.x1, l.x2;
  std::string cl = l.cluster >= 0 ? std::to_string(l.cluster) : std::string{};
  const double t = std::exp(l.log_t);
  const double p_exact = p0 - 0.1 * l.x2;
  if (ud(eng) < p_exact) return from_pic_record(true, t, 0.0, 0.0, std::move(x), std::move(cl));
  // Examination times with Uniform(0.1, 1) gaps, all below the follow-up limit.
  std::uniform_real_distribution<double> gap(0.1, 1.0);
  double prev = 0.0;
  while (true) {
    const double next = prev + gap(eng);
    if (next >= kFollowUp) return from_pic_record(false, 0.0, prev, kInf, std::move(x), std::move(cl));
    if (next >= t) return from_pic_record(false, 0.0, prev, next, std::move(x), std::move(cl));
    prev = next;
  }
}

struct DcRecord {
  double t_tilde;
  int type;  // 1 exact, 2 right, 3 left
};

inline DcRecord dc_outcome(const Latent& l, double c_left, double c_right, double u1, double u2) {
  const double log_l = (1.0 - 0.25 * l.x1) * uniform_between(-6.0, c_left, u1);
  const double log_r = log_l + (1.0 - 0.5 * l.x2) * uniform_between(6.0, c_right, u2);
  if (l.log_t <= log_l) return {std::exp(log_l), 3};
  if (l.log_t > log_r) return {std::exp(log_r), 2};
  return {std::exp(l.log_t), 1};
}

inline IntervalObservation censor_dc(const Latent& l, double c_left, double c_right, Engine& eng) {
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  const double u1 = ud(eng), u2 = ud(eng);
  const DcRecord r = dc_outcome(l, c_left, c_right, u1, u2);
  Vector x(2);
  x << l.x1, l.x2;
  return from_dc_record(r.t_tilde, r.type == 1, r.type == 2, r.type == 3, std::move(x),
                        l.cluster >= 0 ? std::to_string(l.cluster) : std::string{});
}

// Root of a monotone function on [lo, hi] by bisection.
inline double bisect(const std::function<double(double)>& f, double lo, double hi, int iters = 80) {
  double flo = f(lo), fhi = f(hi);
  if (flo * fhi > 0.0) throw CalibrationError("calibration target not bracketed");
  for (int k = 0; k < iters; ++k) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm <= 0.0) == (flo <= 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

inline constexpr std::size_t kPilotSize = 10000;
inline constexpr double kCalibrationTolerance = 0.03;

}  // namespace simgen_detail

// Calibrates p0 (PIC) or (c_left, c_right) (DC) by bisection on a pilot sample.
inline CensoringParams calibrate(const ScenarioConfig& c) {
  using namespace simgen_detail;
  validate(c);
  Engine eng = make_stream(c.seed, 0, StreamTag::Calibration);
  const auto pilot = draw_latent(c, eng, kPilotSize);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::vector<double> u1(pilot.size()), u2(pilot.size());
  for (std::size_t i = 0; i < pilot.size(); ++i) {
    u1[i] = ud(eng);
    u2[i] = ud(eng);
  }
  const double m = static_cast<double>(pilot.size());
  CensoringParams prm;
  if (!c.doubly_censored()) {
    auto frac = [&](double p0) {
      double cens = 0.0;
      for (std::size_t i = 0; i < pilot.size(); ++i) cens += u1[i] >= p0 - 0.1 * pilot[i].x2;
      return cens / m - c.censoring;
    };
    prm.p0 = bisect(frac, 0.1, 1.0);
    if (std::abs(frac(prm.p0)) > kCalibrationTolerance)
      throw CalibrationError("PIC censoring rate not reachable with p0 in (0.1, 1)");
    return prm;
  }
  auto left = [&](double cl) {
    double k = 0.0;
    for (std::size_t i = 0; i < pilot.size(); ++i) k += dc_outcome(pilot[i], cl, 1e9, u1[i], u2[i]).type == 3;
    return k / m - c.left_rate;
  };
  prm.c_left = bisect(left, -6.0, 60.0);
  auto right = [&](double cr) {
    double k = 0.0;
    for (std::size_t i = 0; i < pilot.size(); ++i) k += dc_outcome(pilot[i], prm.c_left, cr, u1[i], u2[i]).type == 2;
    return c.right_rate - k / m;
  };
  prm.c_right = bisect(right, -60.0, 80.0);
  if (std::abs(left(prm.c_left)) > kCalibrationTolerance || std::abs(right(prm.c_right)) > kCalibrationTolerance)
    throw CalibrationError("DC censoring rates not reachable");
  return prm;
}

// One dataset for `replicate` under the scenario's seed.
inline Dataset generate(const ScenarioConfig& c, const CensoringParams& prm, std::uint64_t replicate = 0) {
  using namespace simgen_detail;
  validate(c);
  Engine eng = make_stream(c.seed, replicate, StreamTag::Data);
  const auto latent = draw_latent(c, eng);
  std::vector<IntervalObservation> obs;
  obs.reserve(latent.size());
  for (const auto& l : latent)
    obs.push_back(c.doubly_censored() ? censor_dc(l, prm.c_left, prm.c_right, eng) : censor_pic(l, prm.p0, eng));
  return Dataset(std::move(obs));
}

inline Dataset gen_pic(const ScenarioConfig& c, std::uint64_t replicate = 0) {
  if (c.kind != ScenarioKind::Pic1) throw std::invalid_argument("gen_pic needs a Pic1 scenario");
  return generate(c, calibrate(c), replicate);
}

inline Dataset gen_dc(const ScenarioConfig& c, std::uint64_t replicate = 0) {
  if (c.kind != ScenarioKind::Dc1) throw std::invalid_argument("gen_dc needs a Dc1 scenario");
  return generate(c, calibrate(c), replicate);
}

inline Dataset gen_clustered(const ScenarioConfig& c, std::uint64_t replicate = 0) {
  if (!c.clustered()) throw std::invalid_argument("gen_clustered needs a clustered scenario");
  return generate(c, calibrate(c), replicate);
}

// Fractions of exact, left-, right- and interval-censored rows.
struct CensoringComposition {
  double exact = 0.0, left = 0.0, right = 0.0, interval = 0.0;
};

inline CensoringComposition composition(const Dataset& d) {
  CensoringComposition c;
  for (const auto& o : d.observations()) {
    if (o.delta)
      c.exact += 1;
    else if (o.lower == 0.0)
      c.left += 1;
    else if (o.upper == kInf)
      c.right += 1;
    else
      c.interval += 1;
  }
  const double n = static_cast<double>(d.size());
  c.exact /= n;
  c.left /= n;
  c.right /= n;
  c.interval /= n;
  return c;
}

// ---------------------------------------------------------------------------
// Monte Carlo studies

struct FitOption {
  WeightSpec weight;
  std::string label() const {
    std::string s = weight.kind_name();
    if (!(weight.cluster_weight == ClusterWeight::unit())) s += "/" + weight.cluster_weight.name();
    return s;
  }
};

struct StudyConfig {
  ScenarioConfig scenario;
  std::vector<FitOption> fits{FitOption{}};
  int replicates = 200;
  bool estimate_variance = true;
  ResampleConfig resample;  // seed is combined with the replicate index
  double ci_level = 0.95;
  FitConfig fit;            // tolerances; weight is overridden per option
  unsigned threads = 1;
};

struct ParameterRow {
  std::string parameter;
  double bias = 0.0, ese = 0.0, ase = 0.0, cp = 0.0, mse = 0.0;
};

struct ReplicateRecord {
  std::uint64_t replicate = 0;
  Vector estimate;
  Vector se;  // NaN when variance is not estimated
  bool covered_all = false;
  int outer_iterations = 0;
};

struct MethodReport {
  FitOption option;
  std::vector<ParameterRow> rows;
  std::vector<ReplicateRecord> replicates;  // successful replicates, in index order
};

struct RelativeEfficiency {
  std::string numerator;    // reference (MSE in the numerator)
  std::string denominator;  // method being compared
  std::vector<double> values;
};

struct McStudyReport {
  StudyConfig config;
  CensoringParams params;
  std::vector<MethodReport> methods;
  std::vector<RelativeEfficiency> efficiencies;
  int replicates = 0;
  int failures = 0;
  std::vector<std::uint64_t> failed_replicates;
  CensoringComposition composition;  // averaged over successful replicates
  double wall_time = 0.0;            // seconds
};

class StudyAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::vector<double> relative_efficiency(const MethodReport& reference, const MethodReport& other) {
  std::vector<double> re;
  for (std::size_t j = 0; j < reference.rows.size(); ++j) re.push_back(reference.rows[j].mse / other.rows[j].mse);
  return re;
}

inline McStudyReport run_mc_study(const StudyConfig& sc) {
  const auto t0 = std::chrono::steady_clock::now();
  if (sc.replicates < 1) throw std::invalid_argument("replicates must be positive");
  if (sc.fits.empty()) throw std::invalid_argument("at least one fit option is required");
  McStudyReport rep;
  rep.config = sc;
  rep.params = calibrate(sc.scenario);
  const Vector& truth = true_coefficients();
  const std::size_t nm = sc.fits.size();
  const auto R = static_cast<std::size_t>(sc.replicates);

  struct Slot {
    bool ok = false;
    std::vector<ReplicateRecord> per_method;
    CensoringComposition comp;
  };
  std::vector<Slot> slots(R);
  parallel_for(R, resolve_threads(sc.threads), [&](std::size_t r) {
    Slot s;
    try {
      const Dataset data = generate(sc.scenario, rep.params, r);
      s.comp = composition(data);
      for (const auto& opt : sc.fits) {
        FitConfig fc = sc.fit;
        fc.weight = opt.weight;
        const FitResult fr = fit(data, fc);
        if (!fr.converged) throw FitError("replicate fit did not converge");
        ReplicateRecord rec;
        rec.replicate = r;
        rec.estimate = fr.beta;
        rec.outer_iterations = fr.outer_iterations;
        rec.se = Vector::Constant(fr.beta.size(), std::numeric_limits<double>::quiet_NaN());
        if (sc.estimate_variance) {
          ResampleConfig rc = sc.resample;
          rc.seed = splitmix64(sc.resample.seed ^ splitmix64(r));
          rc.threads = 1;
          const auto ce = estimate_covariance(data, fr, opt.weight, rc);
          if (!ce.covariance) throw FitError("singular slope matrix");
          rec.se = ce.covariance->diagonal().cwiseMax(0.0).cwiseSqrt();
          const auto ci = wald_ci(fr.beta, *ce.covariance, sc.ci_level);
          rec.covered_all = true;
          for (std::size_t j = 0; j < ci.size(); ++j)
            rec.covered_all = rec.covered_all && ci[j].lower <= truth[static_cast<Eigen::Index>(j)] &&
                              truth[static_cast<Eigen::Index>(j)] <= ci[j].upper;
        }
        s.per_method.push_back(std::move(rec));
      }
      s.ok = true;
    } catch (const std::exception&) {
      s.ok = false;
    }
    slots[r] = std::move(s);
  });

  rep.methods.resize(nm);
  for (std::size_t m = 0; m < nm; ++m) rep.methods[m].option = sc.fits[m];
  for (std::size_t r = 0; r < R; ++r) {
    if (!slots[r].ok) {
      ++rep.failures;
      rep.failed_replicates.push_back(r);
      continue;
    }
    ++rep.replicates;
    rep.composition.exact += slots[r].comp.exact;
    rep.composition.left += slots[r].comp.left;
    rep.composition.right += slots[r].comp.right;
    rep.composition.interval += slots[r].comp.interval;
    for (std::size_t m = 0; m < nm; ++m) rep.methods[m].replicates.push_back(std::move(slots[r].per_method[m]));
  }
  if (static_cast<double>(rep.failures) > 0.05 * static_cast<double>(R))
    throw StudyAborted("more than 5% of replicates failed (" + std::to_string(rep.failures) + " of " +
                       std::to_string(R) + ")");
  const double ok = static_cast<double>(rep.replicates);
  rep.composition.exact /= ok;
  rep.composition.left /= ok;
  rep.composition.right /= ok;
  rep.composition.interval /= ok;

  for (auto& mr : rep.methods) {
    for (Eigen::Index j = 0; j < truth.size(); ++j) {
      ParameterRow row;
      row.parameter = "beta" + std::to_string(j + 1);
      double mean = 0.0, ase = 0.0, cover = 0.0, mse = 0.0;
      for (const auto& rr : mr.replicates) {
        mean += rr.estimate[j];
        ase += rr.se[j];
        mse += (rr.estimate[j] - truth[j]) * (rr.estimate[j] - truth[j]);
      }
      mean /= ok;
      double ss = 0.0;
      for (const auto& rr : mr.replicates) {
        ss += (rr.estimate[j] - mean) * (rr.estimate[j] - mean);
        if (sc.estimate_variance) {
          const double z = boost::math::quantile(boost::math::normal(), 0.5 * (1.0 + sc.ci_level));
          cover += std::abs(rr.estimate[j] - truth[j]) <= z * rr.se[j];
        }
      }
      row.bias = mean - truth[j];
      row.ese = ok > 1 ? std::sqrt(ss / (ok - 1.0)) : 0.0;
      row.ase = sc.estimate_variance ? ase / ok : std::numeric_limits<double>::quiet_NaN();
      row.cp = sc.estimate_variance ? cover / ok : std::numeric_limits<double>::quiet_NaN();
      row.mse = mse / ok;
      mr.rows.push_back(row);
    }
  }
  // Adjusted-over-unadjusted efficiency for every weighted option with a unit-weight twin.
  for (const auto& a : rep.methods) {
    if (a.option.weight.cluster_weight == ClusterWeight::unit()) continue;
    for (const auto& u : rep.methods)
      if (u.option.weight.kind == a.option.weight.kind && u.option.weight.cluster_weight == ClusterWeight::unit())
        rep.efficiencies.push_back({u.option.label(), a.option.label(), relative_efficiency(u, a)});
  }
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace rankreg
