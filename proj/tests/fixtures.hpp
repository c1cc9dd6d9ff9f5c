#pragma once

// Random mixed-censoring datasets for property tests.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "rankreg/data_model.hpp"

namespace fixture {

struct Options {
  int n = 30;
  int p = 2;
  int clusters = 0;       // 0: independent rows
  bool dyadic_x = false;  // covariates on a 1/8 grid so shifts are exact
};

inline rankreg::Dataset random_dataset(std::mt19937_64& rng, const Options& o) {
  using namespace rankreg;
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::uniform_int_distribution<int> kind(0, 3);
  std::uniform_int_distribution<int> cl(0, std::max(o.clusters - 1, 0));
  std::vector<IntervalObservation> obs;
  for (int i = 0; i < o.n; ++i) {
    Vector x(o.p);
    for (int j = 0; j < o.p; ++j) x[j] = o.dyadic_x ? std::round(8.0 * nd(rng)) / 8.0 : nd(rng);
    const double lt = 1.0 + x.sum() + nd(rng);
    const double t = std::exp(lt);
    const double lo = t * (0.3 + 0.7 * ud(rng)), hi = t * (1.0 + 2.0 * ud(rng));
    std::string c = o.clusters > 0 ? std::to_string(cl(rng)) : std::string{};
    switch (kind(rng)) {
      case 0: obs.push_back(from_pic_record(true, t, 0, 0, x, c)); break;
      case 1: obs.push_back(from_pic_record(false, 0, lo, hi, x, c)); break;
      case 2: obs.push_back(from_pic_record(false, 0, 0.0, hi, x, c)); break;
      default: obs.push_back(from_pic_record(false, 0, lo, kInf, x, c)); break;
    }
  }
  return Dataset(std::move(obs));
}

inline rankreg::Vector random_beta(std::mt19937_64& rng, int p, double scale = 1.5) {
  std::normal_distribution<double> nd(0.0, scale);
  rankreg::Vector b(p);
  for (int j = 0; j < p; ++j) b[j] = nd(rng);
  return b;
}

}  // namespace fixture
