#pragma once

#include <cmath>
#include <vector>

#include "rankreg/data_model.hpp"

namespace rankreg {

enum class Ordering { DefinitelyLess, DefinitelyGreater, Indeterminate };

// a < b is certain when a's upper bracket does not exceed b's lower bracket.
// Touching brackets count as ordered unless both sides are the same exact
// value, which is a tie.
inline Ordering definite_ordering(const IntervalObservation& a, const IntervalObservation& b) {
  if (a.delta && b.delta && a.lower == b.lower) return Ordering::Indeterminate;
  if (a.upper <= b.lower) return Ordering::DefinitelyLess;
  if (b.upper <= a.lower) return Ordering::DefinitelyGreater;
  return Ordering::Indeterminate;
}

// G_i = #{j definitely below i} - #{j definitely above i}.
inline std::vector<double> gehan_scores(const std::vector<IntervalObservation>& pooled) {
  const std::size_t n = pooled.size();
  std::vector<double> g(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      switch (definite_ordering(pooled[i], pooled[j])) {
        case Ordering::DefinitelyLess:
          g[i] -= 1.0;
          g[j] += 1.0;
          break;
        case Ordering::DefinitelyGreater:
          g[i] += 1.0;
          g[j] -= 1.0;
          break;
        case Ordering::Indeterminate:
          break;
      }
    }
  return g;
}

inline std::vector<double> gehan_scores(const Dataset& pooled) {
  return gehan_scores(pooled.observations());
}

struct GehanTestResult {
  double statistic = 0.0;
  double variance = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  bool degenerate = false;  // variance == 0; z is 0 and p_value is 1
  std::vector<double> per_subject_scores;
  std::size_t n1 = 0, n2 = 0;
};

// Two-sample Gehan test with the permutation variance and a normal approximation.
// Covariates are ignored.
inline GehanTestResult two_sample_test(const std::vector<IntervalObservation>& group1,
                                       const std::vector<IntervalObservation>& group2) {
  if (group1.empty() || group2.empty()) throw DataError("both groups must be non-empty");
  std::vector<IntervalObservation> pooled;
  pooled.reserve(group1.size() + group2.size());
  pooled.insert(pooled.end(), group1.begin(), group1.end());
  pooled.insert(pooled.end(), group2.begin(), group2.end());

  GehanTestResult r;
  r.n1 = group1.size();
  r.n2 = group2.size();
  r.per_subject_scores = gehan_scores(pooled);
  double ss = 0.0;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    if (i < r.n1) r.statistic += r.per_subject_scores[i];
    ss += r.per_subject_scores[i] * r.per_subject_scores[i];
  }
  const double m = static_cast<double>(r.n1), n = static_cast<double>(r.n2);
  r.variance = m * n / ((m + n) * (m + n - 1.0)) * ss;
  if (r.variance > 0.0) {
    r.z = r.statistic / std::sqrt(r.variance);
    r.p_value = std::erfc(std::abs(r.z) / std::sqrt(2.0));
  } else {
    r.degenerate = true;
  }
  return r;
}

inline GehanTestResult two_sample_test(const Dataset& group1, const Dataset& group2) {
  return two_sample_test(group1.observations(), group2.observations());
}

}  // namespace rankreg
