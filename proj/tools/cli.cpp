#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <boost/version.hpp>
#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#ifdef RANKREG_HAVE_OPENSSL
#include <openssl/evp.h>
#include <openssl/opensslv.h>
#endif

#include "rankreg/rankreg.hpp"

namespace rankreg::cli {

namespace {

using Json = nlohmann::ordered_json;

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(number(v[k]));
  return a;
}

Json matrix_json(const Matrix& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vector_json(m.row(r).transpose()));
  return a;
}

std::string fmt(double v) { return csv_detail::format_real(v); }

std::string sha256_file(const std::string& path) {
#ifdef RANKREG_HAVE_OPENSSL
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char b[3];
  for (unsigned int k = 0; k < len; ++k) {
    std::snprintf(b, sizeof b, "%02x", md[k]);
    hex += b;
  }
  return hex;
#else
  (void)path;
  return {};
#endif
}

Json versions() {
  Json v;
  v["rankreg"] = RANKREG_VERSION;
  v["compiler"] = __VERSION__;
  v["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  v["boost"] = BOOST_LIB_VERSION;
#ifdef RANKREG_HAVE_OPENSSL
  v["openssl"] = OPENSSL_VERSION_TEXT;
#endif
  return v;
}

// Run metadata kept apart from the primary output so that the latter is
// byte-identical between runs.
struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  Json config = Json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  unsigned threads = 1;

  Json to_json(double wall) const {
    Json m;
    m["command"] = command;
    m["argv"] = argv;
    m["config"] = config;
    m["seed"] = seed;
    m["threads"] = threads;
    m["versions"] = versions();
    Json d = Json::object();
    for (const auto& p : inputs) d[p] = sha256_file(p);
    m["input_digests"] = d;
    m["wall_time_seconds"] = wall;
    return m;
  }
};

void write_text(const std::string& path, const std::string& text, std::ostream& fallback) {
  if (path.empty() || path == "-") {
    fallback << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << text;
}

void emit_manifest(const Manifest& m, double wall, const std::string& manifest_path, const std::string& output_path) {
  std::string path = manifest_path;
  if (path.empty() && !output_path.empty() && output_path != "-") path = output_path + ".manifest.json";
  if (path.empty()) return;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << m.to_json(wall).dump(2) << '\n';
}

ClusterWeight parse_cluster_weight(const std::string& s) {
  if (s == "none" || s == "unit") return ClusterWeight::unit();
  if (s == "inverse") return ClusterWeight::inverse_size();
  if (s.rfind("power:", 0) == 0) {
    try {
      std::size_t used = 0;
      const double a = std::stod(s.substr(6), &used);
      if (used != s.size() - 6) throw std::invalid_argument("trailing");
      return ClusterWeight::power(a);
    } catch (const std::exception&) {
      throw UsageError("cluster weight exponent must be a number in [0, 1]: '" + s + "'");
    }
  }
  throw UsageError("unknown cluster weight '" + s + "' (none | inverse | power:alpha)");
}

WeightKind parse_weight_kind(const std::string& s) {
  if (s == "gehan") return WeightKind::Gehan;
  if (s == "logrank") return WeightKind::LogRank;
  throw UsageError("unknown weight '" + s + "' (gehan | logrank)");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = csv_detail::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct InputOptions {
  std::string format = "pic";
  std::string covariates;
  std::string cluster_column = "cluster";

  void add(CLI::App* app) {
    app->add_option("--format", format, "record layout: pic (lower,upper,delta) or dc (time,d1,d2,d3)")
        ->check(CLI::IsMember({"pic", "dc"}));
    app->add_option("--covariates", covariates, "comma-separated covariate columns (default: x1..xp)");
    app->add_option("--cluster-column", cluster_column, "cluster id column (optional in the file)");
  }
  CsvSchema schema() const {
    CsvSchema s;
    s.format = format == "dc" ? RecordFormat::Dc : RecordFormat::Pic;
    s.covariates = split_list(covariates);
    s.cluster = cluster_column;
    return s;
  }
};

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string input, output, residuals, manifest;
  InputOptions io;
  std::string weight = "gehan", cluster_weight = "none";
  double big_m = 0.0, tol = 1e-7, outer_tol = 1e-4, k_scale = 1.0, ci_level = 0.95;
  int max_iter = 200, max_outer_iter = 50, resamples = 200;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

Json fit_report(const LoadedTable& t, const FitResult& fr, const CovarianceEstimate* ce, const FitArgs& a) {
  Json r;
  r["command"] = "fit";
  Json w;
  w["kind"] = fr.weight.kind_name();
  w["cluster_weight"] = fr.weight.cluster_weight.name();
  w["label"] = fr.weight.cluster_weight.label();
  r["weight"] = w;
  r["n"] = t.data.size();
  r["n_clusters"] = t.data.n_clusters();
  r["p"] = t.data.p();
  r["covariates"] = t.covariate_names;
  r["beta"] = vector_json(fr.beta);
  r["ci_level"] = a.ci_level;
  Json coefs = Json::array();
  std::vector<Interval> ci;
  if (fr.covariance) ci = wald_ci(fr.beta, *fr.covariance, a.ci_level);
  for (Eigen::Index j = 0; j < fr.beta.size(); ++j) {
    Json c;
    c["name"] = t.covariate_names[static_cast<std::size_t>(j)];
    c["estimate"] = number(fr.beta[j]);
    if (fr.covariance) {
      const double se = std::sqrt(std::max(0.0, (*fr.covariance)(j, j)));
      c["se"] = number(se);
      const double z = se > 0 ? fr.beta[j] / se : std::numeric_limits<double>::quiet_NaN();
      c["z"] = number(z);
      c["p_value"] = number(std::isfinite(z) ? std::erfc(std::abs(z) / std::sqrt(2.0)) : z);
      c["ci_lower"] = number(ci[static_cast<std::size_t>(j)].lower);
      c["ci_upper"] = number(ci[static_cast<std::size_t>(j)].upper);
    } else {
      c["se"] = nullptr;
      c["z"] = nullptr;
      c["p_value"] = nullptr;
      c["ci_lower"] = nullptr;
      c["ci_upper"] = nullptr;
    }
    coefs.push_back(c);
  }
  r["coefficients"] = coefs;
  r["covariance"] = fr.covariance ? matrix_json(*fr.covariance) : Json(nullptr);

  Json d;
  d["converged"] = fr.converged;
  d["outer_iterations"] = fr.outer_iterations;
  d["score_norm"] = number(fr.score_norm);
  d["n_pairs_used"] = fr.n_pairs_used;
  d["big_m"] = number(fr.big_m);
  d["big_m_doublings"] = fr.big_m_doublings;
  Json s;
  s["objective"] = number(fr.solver.objective);
  s["iterations"] = fr.solver.iterations;
  s["subgradient_gap"] = number(fr.solver.subgradient_gap);
  s["duality_gap"] = number(fr.solver.duality_gap);
  s["converged"] = fr.solver.converged;
  d["solver"] = s;
  Json li = Json::array();
  for (const auto& v : fr.last_iterates) li.push_back(vector_json(v));
  d["last_iterates"] = li;
  Json v;
  v["resamples"] = a.resamples;
  v["k_scale"] = a.k_scale;
  v["seed"] = a.seed;
  if (ce) {
    v["condition_flag"] = ce->condition_flag;
    v["clipped"] = number(ce->clipped);
    v["warning"] = ce->warning;
    v["omega"] = matrix_json(ce->omega);
    v["slope"] = matrix_json(ce->a_matrix);
  } else {
    v["condition_flag"] = nullptr;
    v["warning"] = a.resamples == 0 ? "variance not requested" : "fit did not converge; covariance not estimated";
  }
  d["variance"] = v;
  r["diagnostics"] = d;
  return r;
}

int cmd_fit(const FitArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  FitConfig cfg;
  cfg.weight = {parse_weight_kind(a.weight), parse_cluster_weight(a.cluster_weight)};
  if (a.big_m > 0.0) cfg.big_m = a.big_m;
  cfg.solver.tol = a.tol;
  cfg.solver.max_iter = a.max_iter;
  cfg.outer_tol = a.outer_tol;
  cfg.max_outer_iter = a.max_outer_iter;
  cfg.seed = a.seed;
  if (a.resamples != 0 && a.resamples < 2) throw UsageError("--resamples must be 0 (off) or at least 2");

  const LoadedTable t = load_csv(a.input, a.io.schema());
  FitResult fr = fit(t.data, cfg);
  std::optional<CovarianceEstimate> ce;
  if (a.resamples > 0 && fr.converged) {
    ResampleConfig rc;
    rc.R = a.resamples;
    rc.seed = a.seed;
    rc.k_scale = a.k_scale;
    rc.threads = resolve_threads(a.threads);
    ce = estimate_covariance(t.data, fr, cfg.weight, rc);
    fr.covariance = ce->covariance;
    if (!ce->warning.empty()) err << "warning: " << ce->warning << '\n';
  }
  if (!fr.converged) err << "warning: fit did not converge\n";
  write_text(a.output, fit_report(t, fr, ce ? &*ce : nullptr, a).dump(2) + "\n", out);

  if (!a.residuals.empty()) {
    std::ostringstream rs;
    rs << "row,cluster,delta,lower_residual,upper_residual\n";
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const auto rb = residual_bounds(t.data[i], fr.beta);
      rs << i + 1 << ',' << t.data[i].cluster << ',' << (t.data[i].delta ? 1 : 0) << ',' << fmt(rb.lower) << ','
         << fmt(rb.upper) << '\n';
    }
    write_text(a.residuals, rs.str(), out);
  }

  Manifest m;
  m.command = "fit";
  m.argv = argv;
  m.seed = a.seed;
  m.inputs = {a.input};
  m.threads = resolve_threads(a.threads);
  m.config = {{"input", a.input},          {"format", a.io.format},       {"covariates", t.covariate_names},
              {"cluster_column", a.io.cluster_column}, {"weight", a.weight}, {"cluster_weight", a.cluster_weight},
              {"big_m", a.big_m > 0 ? Json(a.big_m) : Json("auto")}, {"tol", a.tol}, {"max_iter", a.max_iter},
              {"outer_tol", a.outer_tol}, {"max_outer_iter", a.max_outer_iter}, {"resamples", a.resamples},
              {"k_scale", a.k_scale},   {"ci_level", a.ci_level}};
  emit_manifest(m, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), a.manifest, a.output);
  return kOk;
}

// ---------------------------------------------------------------------------
// test

struct TestArgs {
  std::string input, input2, group_column, output, manifest;
  InputOptions io;
};

int cmd_test(const TestArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  CsvSchema schema = a.io.schema();
  schema.require_covariates = false;
  std::vector<IntervalObservation> g1, g2;
  std::string label1 = "1", label2 = "2";
  if (!a.input2.empty() == !a.group_column.empty())
    throw UsageError("give either --input2 or --group-column (exactly one)");
  if (!a.input2.empty()) {
    g1 = load_csv(a.input, schema).data.observations();
    g2 = load_csv(a.input2, schema).data.observations();
    label1 = a.input;
    label2 = a.input2;
  } else {
    schema.group = a.group_column;
    const LoadedTable t = load_csv(a.input, schema);
    std::vector<std::string> labels;
    for (const auto& g : t.group)
      if (std::find(labels.begin(), labels.end(), g) == labels.end()) labels.push_back(g);
    if (labels.size() > 2) throw SchemaError("group column has more than two distinct values");
    if (labels.size() < 2) throw DataError("one of the two groups is empty");
    label1 = labels[0];
    label2 = labels[1];
    for (std::size_t i = 0; i < t.data.size(); ++i) (t.group[i] == label1 ? g1 : g2).push_back(t.data[i]);
  }
  const auto r = two_sample_test(g1, g2);
  Json j;
  j["command"] = "test";
  j["groups"] = {label1, label2};
  j["n1"] = r.n1;
  j["n2"] = r.n2;
  j["statistic"] = r.statistic;
  j["variance"] = r.variance;
  j["z"] = r.z;
  j["p_value"] = r.p_value;
  j["degenerate"] = r.degenerate;
  j["scores"] = r.per_subject_scores;
  write_text(a.output, j.dump(2) + "\n", out);

  Manifest m;
  m.command = "test";
  m.argv = argv;
  m.inputs = {a.input};
  if (!a.input2.empty()) m.inputs.push_back(a.input2);
  m.config = {{"format", a.io.format}, {"group_column", a.group_column}};
  emit_manifest(m, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), a.manifest, a.output);
  return kOk;
}

// ---------------------------------------------------------------------------
// convert

struct ConvertArgs {
  std::string input, output, manifest;
  InputOptions io{"dc"};
};

int cmd_convert(const ConvertArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const LoadedTable t = load_csv(a.input, a.io.schema());
  std::ostringstream s;
  write_pic_csv(s, t.data, t.covariate_names, t.has_cluster);
  write_text(a.output, s.str(), out);
  Manifest m;
  m.command = "convert";
  m.argv = argv;
  m.inputs = {a.input};
  m.config = {{"format", a.io.format}};
  emit_manifest(m, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), a.manifest, a.output);
  return kOk;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string config, output_json, output_csv, replicates_csv, manifest;
  std::uint64_t seed = 0;
  bool seed_given = false;
  unsigned threads = 0;
};

const char* kind_name(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::Pic1: return "pic";
    case ScenarioKind::Dc1: return "dc";
    case ScenarioKind::PicClustered: return "pic_clustered";
    case ScenarioKind::DcClustered: return "dc_clustered";
  }
  return "";
}

const char* error_name(ErrorDist e) {
  switch (e) {
    case ErrorDist::Normal: return "normal";
    case ErrorDist::ExtremeValue: return "ev";
    case ErrorDist::Exp1: return "exp1";
  }
  return "";
}

Json study_json(const McStudyReport& r) {
  Json j;
  j["command"] = "simulate";
  const auto& sc = r.config.scenario;
  Json s;
  s["kind"] = kind_name(sc.kind);
  s["n"] = sc.n;
  s["error"] = error_name(sc.error);
  if (sc.doubly_censored()) {
    s["left_rate"] = sc.left_rate;
    s["right_rate"] = sc.right_rate;
  } else {
    s["censoring"] = sc.censoring;
  }
  if (sc.clustered()) s["theta"] = sc.theta;
  s["seed"] = sc.seed;
  j["scenario"] = s;
  Json cal;
  if (sc.doubly_censored()) {
    cal["c_left"] = r.params.c_left;
    cal["c_right"] = r.params.c_right;
  } else {
    cal["p0"] = r.params.p0;
  }
  j["calibration"] = cal;
  j["replicates_requested"] = r.config.replicates;
  j["replicates"] = r.replicates;
  j["failures"] = r.failures;
  j["failed_replicates"] = r.failed_replicates;
  Json comp;
  comp["exact"] = r.composition.exact;
  comp["left"] = r.composition.left;
  comp["right"] = r.composition.right;
  comp["interval"] = r.composition.interval;
  j["censoring_composition"] = comp;
  j["resamples"] = r.config.estimate_variance ? r.config.resample.R : 0;
  j["ci_level"] = r.config.ci_level;
  Json methods = Json::array();
  for (const auto& m : r.methods) {
    Json mj;
    mj["method"] = m.option.label();
    mj["weight"] = m.option.weight.kind_name();
    mj["cluster_weight"] = m.option.weight.cluster_weight.name();
    mj["label"] = m.option.weight.cluster_weight.label();
    Json rows = Json::array();
    for (const auto& row : m.rows)
      rows.push_back({{"parameter", row.parameter},
                      {"bias", number(row.bias)},
                      {"ese", number(row.ese)},
                      {"ase", number(row.ase)},
                      {"cp", number(row.cp)},
                      {"mse", number(row.mse)}});
    mj["rows"] = rows;
    std::vector<int> its;
    for (const auto& rr : m.replicates) its.push_back(rr.outer_iterations);
    mj["outer_iterations"] = its;
    methods.push_back(mj);
  }
  j["methods"] = methods;
  Json re = Json::array();
  for (const auto& e : r.efficiencies) {
    Json v = Json::array();
    for (double x : e.values) v.push_back(number(x));
    re.push_back({{"reference", e.numerator}, {"method", e.denominator}, {"values", v}});
  }
  j["relative_efficiency"] = re;
  return j;
}

std::string study_csv(const McStudyReport& r) {
  std::ostringstream s;
  s << "method,weight,cluster_weight,label,parameter,bias,ese,ase,cp,mse,re\n";
  for (const auto& m : r.methods)
    for (std::size_t k = 0; k < m.rows.size(); ++k) {
      const auto& row = m.rows[k];
      std::string re;
      for (const auto& e : r.efficiencies)
        if (e.denominator == m.option.label()) re = fmt(e.values[k]);
      s << m.option.label() << ',' << m.option.weight.kind_name() << ',' << m.option.weight.cluster_weight.name()
        << ',' << m.option.weight.cluster_weight.label() << ',' << row.parameter << ',' << fmt(row.bias) << ','
        << fmt(row.ese) << ',' << fmt(row.ase) << ',' << fmt(row.cp) << ',' << fmt(row.mse) << ',' << re << '\n';
    }
  return s.str();
}

std::string replicates_csv(const McStudyReport& r) {
  std::ostringstream s;
  s << "replicate,method";
  const std::size_t p = r.methods.empty() || r.methods[0].replicates.empty()
                            ? 0
                            : static_cast<std::size_t>(r.methods[0].replicates[0].estimate.size());
  for (std::size_t j = 1; j <= p; ++j) s << ",beta" << j;
  for (std::size_t j = 1; j <= p; ++j) s << ",se" << j;
  s << ",outer_iterations\n";
  for (const auto& m : r.methods)
    for (const auto& rr : m.replicates) {
      s << rr.replicate << ',' << m.option.label();
      for (Eigen::Index j = 0; j < rr.estimate.size(); ++j) s << ',' << fmt(rr.estimate[j]);
      for (Eigen::Index j = 0; j < rr.se.size(); ++j) s << ',' << fmt(rr.se[j]);
      s << ',' << rr.outer_iterations << '\n';
    }
  return s.str();
}

int cmd_simulate(const SimulateArgs& a, const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  std::ifstream in(a.config);
  if (!in) throw SchemaError("cannot open config '" + a.config + "'");
  SimulateSpec spec = parse_simulate_config(in);
  if (a.seed_given) {
    spec.study.scenario.seed = a.seed;
    spec.study.resample.seed = a.seed;
    spec.resolved["seed"] = std::to_string(a.seed);
  }
  spec.study.threads = resolve_threads(a.threads);
  const McStudyReport rep = run_mc_study(spec.study);
  if (rep.failures > 0) err << "warning: " << rep.failures << " replicate(s) failed and were excluded\n";

  const bool any_file = !a.output_json.empty() || !a.output_csv.empty();
  if (!a.output_json.empty() || !any_file) write_text(a.output_json, study_json(rep).dump(2) + "\n", out);
  if (!a.output_csv.empty()) write_text(a.output_csv, study_csv(rep), out);
  if (!a.replicates_csv.empty()) write_text(a.replicates_csv, replicates_csv(rep), out);

  Manifest m;
  m.command = "simulate";
  m.argv = argv;
  m.seed = spec.study.scenario.seed;
  m.inputs = {a.config};
  m.threads = spec.study.threads;
  m.config = spec.resolved;
  const std::string primary = !a.output_json.empty() ? a.output_json : a.output_csv;
  emit_manifest(m, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), a.manifest, primary);
  return kOk;
}

// ---------------------------------------------------------------------------

int report_error(std::ostream& err, const std::string& type, const std::string& message, int code,
                 const std::vector<RowError>* rows = nullptr) {
  Json e;
  e["type"] = type;
  e["message"] = message;
  if (rows) {
    Json r = Json::array();
    for (const auto& row : *rows) r.push_back({{"line", row.line}, {"message", row.message}});
    e["rows"] = r;
  }
  Json j;
  j["error"] = e;
  j["exit_code"] = code;
  err << j.dump() << '\n';
  return code;
}

}  // namespace

SimulateSpec parse_simulate_config(std::istream& in) {
  SimulateSpec spec;
  auto& sc = spec.study;
  sc.scenario.seed = 1;
  sc.resample.seed = 1;
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = csv_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw SchemaError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = csv_detail::trim(line.substr(0, eq));
    const std::string val = csv_detail::trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw SchemaError("config line " + std::to_string(lineno) + ": empty key or value");
    if (!kv.emplace(key, val).second) throw SchemaError("config key '" + key + "' given twice");
  }

  auto take = [&](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto real = [&](const std::string& key, double& dst) {
    if (auto v = take(key)) {
      try {
        dst = csv_detail::parse_real(*v);
      } catch (const DataError&) {
        throw SchemaError("config key '" + key + "' needs a number, got '" + *v + "'");
      }
    }
  };
  auto integer = [&](const std::string& key, auto& dst) {
    if (auto v = take(key)) {
      try {
        std::size_t used = 0;
        const long long x = std::stoll(*v, &used);
        if (used != v->size() || x < 0) throw std::invalid_argument("bad");
        dst = static_cast<std::remove_reference_t<decltype(dst)>>(x);
      } catch (const std::exception&) {
        throw SchemaError("config key '" + key + "' needs a non-negative integer, got '" + *v + "'");
      }
    }
  };

  if (auto v = take("kind")) {
    if (*v == "pic") sc.scenario.kind = ScenarioKind::Pic1;
    else if (*v == "dc") sc.scenario.kind = ScenarioKind::Dc1;
    else if (*v == "pic_clustered") sc.scenario.kind = ScenarioKind::PicClustered;
    else if (*v == "dc_clustered") sc.scenario.kind = ScenarioKind::DcClustered;
    else throw SchemaError("unknown kind '" + *v + "' (pic | dc | pic_clustered | dc_clustered)");
  }
  if (sc.scenario.clustered()) sc.scenario.n = 150;
  if (auto v = take("error")) {
    if (*v == "normal") sc.scenario.error = ErrorDist::Normal;
    else if (*v == "ev") sc.scenario.error = ErrorDist::ExtremeValue;
    else if (*v == "exp1") sc.scenario.error = ErrorDist::Exp1;
    else throw SchemaError("unknown error '" + *v + "' (normal | ev | exp1)");
  }
  integer("n", sc.scenario.n);
  real("censoring", sc.scenario.censoring);
  real("left_rate", sc.scenario.left_rate);
  real("right_rate", sc.scenario.right_rate);
  real("theta", sc.scenario.theta);
  integer("seed", sc.scenario.seed);
  sc.resample.seed = sc.scenario.seed;
  integer("replicates", sc.replicates);
  integer("resamples", sc.resample.R);
  real("k_scale", sc.resample.k_scale);
  real("ci_level", sc.ci_level);
  real("outer_tol", sc.fit.outer_tol);
  integer("max_outer_iter", sc.fit.max_outer_iter);
  real("tol", sc.fit.solver.tol);
  if (auto v = take("variance")) {
    if (*v == "true" || *v == "1") sc.estimate_variance = true;
    else if (*v == "false" || *v == "0") sc.estimate_variance = false;
    else throw SchemaError("variance must be true or false");
  }
  if (auto v = take("methods")) {
    sc.fits.clear();
    for (const auto& item : split_list(*v)) {
      const auto slash = item.find('/');
      FitOption fo;
      try {
        fo.weight.kind = parse_weight_kind(item.substr(0, slash));
        if (slash != std::string::npos) fo.weight.cluster_weight = parse_cluster_weight(item.substr(slash + 1));
      } catch (const UsageError& e) {
        throw SchemaError(std::string("methods: ") + e.what());
      }
      sc.fits.push_back(fo);
    }
    if (sc.fits.empty()) throw SchemaError("methods list is empty");
  }
  if (!kv.empty()) throw SchemaError("unknown config key '" + kv.begin()->first + "'");
  if (!(sc.ci_level > 0.0 && sc.ci_level < 1.0)) throw SchemaError("ci_level must lie in (0, 1)");
  if (sc.replicates < 1) throw SchemaError("replicates must be positive");
  validate(sc.scenario);

  auto& r = spec.resolved;
  r["kind"] = kind_name(sc.scenario.kind);
  r["n"] = std::to_string(sc.scenario.n);
  r["error"] = error_name(sc.scenario.error);
  r["censoring"] = fmt(sc.scenario.censoring);
  r["left_rate"] = fmt(sc.scenario.left_rate);
  r["right_rate"] = fmt(sc.scenario.right_rate);
  r["theta"] = fmt(sc.scenario.theta);
  r["seed"] = std::to_string(sc.scenario.seed);
  r["replicates"] = std::to_string(sc.replicates);
  r["resamples"] = std::to_string(sc.resample.R);
  r["k_scale"] = fmt(sc.resample.k_scale);
  r["ci_level"] = fmt(sc.ci_level);
  r["outer_tol"] = fmt(sc.fit.outer_tol);
  r["max_outer_iter"] = std::to_string(sc.fit.max_outer_iter);
  r["tol"] = fmt(sc.fit.solver.tol);
  r["variance"] = sc.estimate_variance ? "true" : "false";
  std::string methods;
  for (const auto& f : sc.fits) methods += (methods.empty() ? "" : ",") + f.label();
  r["methods"] = methods;
  return spec;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rank-based AFT regression for partly interval-censored and doubly-censored data", "rankreg-cli"};
  app.set_version_flag("--version", std::string(RANKREG_VERSION));
  app.require_subcommand(1);

  FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "fit a Gehan or log-rank AFT model");
  fit_cmd->add_option("-i,--input", fa.input, "input CSV")->required()->check(CLI::ExistingFile);
  fa.io.add(fit_cmd);
  fit_cmd->add_option("--weight", fa.weight, "gehan | logrank")->check(CLI::IsMember({"gehan", "logrank"}));
  fit_cmd->add_option("--cluster-weight", fa.cluster_weight, "none | inverse | power:alpha");
  fit_cmd->add_option("--big-m", fa.big_m, "artificial row response (default: automatic)");
  fit_cmd->add_option("--tol", fa.tol, "solver tolerance")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--max-iter", fa.max_iter, "solver iteration cap")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--outer-tol", fa.outer_tol, "log-rank outer tolerance")->check(CLI::PositiveNumber);
  fit_cmd->add_option("--max-outer-iter", fa.max_outer_iter, "log-rank outer iteration cap")->check(CLI::PositiveNumber);
  fit_cmd->add_option("-R,--resamples", fa.resamples, "resampling draws for the covariance (0: skip)")
      ->check(CLI::NonNegativeNumber);
  fit_cmd->add_option("--k-scale", fa.k_scale, "standard deviation of the slope perturbations")
      ->check(CLI::PositiveNumber);
  fit_cmd->add_option("--seed", fa.seed, "random seed");
  fit_cmd->add_option("--ci-level", fa.ci_level, "Wald interval level")->check(CLI::Range(0.0, 1.0));
  fit_cmd->add_option("--threads", fa.threads, "worker threads (default: RANKREG_THREADS or all cores)");
  fit_cmd->add_option("-o,--output", fa.output, "JSON report path (default: stdout)");
  fit_cmd->add_option("--residuals", fa.residuals, "CSV of residual brackets at the estimate");
  fit_cmd->add_option("--manifest", fa.manifest, "run manifest path (default: <output>.manifest.json)");

  TestArgs ta;
  auto* test_cmd = app.add_subcommand("test", "two-sample Gehan test");
  test_cmd->add_option("-i,--input", ta.input, "input CSV (group 1, or both groups)")->required()->check(CLI::ExistingFile);
  test_cmd->add_option("--input2", ta.input2, "second-group CSV")->check(CLI::ExistingFile);
  test_cmd->add_option("--group-column", ta.group_column, "column holding two group labels");
  ta.io.add(test_cmd);
  test_cmd->add_option("-o,--output", ta.output, "JSON report path (default: stdout)");
  test_cmd->add_option("--manifest", ta.manifest, "run manifest path");

  ConvertArgs ca;
  auto* conv_cmd = app.add_subcommand("convert", "rewrite a DC-layout CSV in PIC layout");
  conv_cmd->add_option("-i,--input", ca.input, "input CSV")->required()->check(CLI::ExistingFile);
  ca.io.add(conv_cmd);
  conv_cmd->add_option("-o,--output", ca.output, "output CSV (default: stdout)");
  conv_cmd->add_option("--manifest", ca.manifest, "run manifest path");

  SimulateArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "run a Monte Carlo study from a key = value config");
  sim_cmd->add_option("-c,--config", sa.config, "scenario config file")->required()->check(CLI::ExistingFile);
  auto* seed_opt = sim_cmd->add_option("--seed", sa.seed, "override the config seed");
  sim_cmd->add_option("--threads", sa.threads, "worker threads (default: RANKREG_THREADS or all cores)");
  sim_cmd->add_option("--output-json", sa.output_json, "JSON report path");
  sim_cmd->add_option("--output-csv", sa.output_csv, "CSV table path");
  sim_cmd->add_option("--replicates-csv", sa.replicates_csv, "per-replicate estimates CSV");
  sim_cmd->add_option("--manifest", sa.manifest, "run manifest path");

  std::vector<std::string> argv = args;
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << RANKREG_VERSION << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    return report_error(err, "usage", e.what(), kUsageError);
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(fa, argv, out, err);
    if (test_cmd->parsed()) return cmd_test(ta, argv, out);
    if (conv_cmd->parsed()) return cmd_convert(ca, argv, out);
    if (sim_cmd->parsed()) {
      sa.seed_given = seed_opt->count() > 0;
      return cmd_simulate(sa, argv, out, err);
    }
    return report_error(err, "usage", "no subcommand", kUsageError);
  } catch (const CsvError& e) {
    return report_error(err, "data", e.what(), kUsageError, &e.errors());
  } catch (const SchemaError& e) {
    return report_error(err, "schema", e.what(), kUsageError);
  } catch (const DataError& e) {
    return report_error(err, "data", e.what(), kUsageError);
  } catch (const UnidentifiedDirection& e) {
    return report_error(err, "identifiability", e.what(), kRuntimeFailure);
  } catch (const FitError& e) {
    return report_error(err, "fit", e.what(), kRuntimeFailure);
  } catch (const CalibrationError& e) {
    return report_error(err, "calibration", e.what(), kRuntimeFailure);
  } catch (const StudyAborted& e) {
    return report_error(err, "study", e.what(), kRuntimeFailure);
  } catch (const std::invalid_argument& e) {
    return report_error(err, "usage", e.what(), kUsageError);
  } catch (const std::exception& e) {
    return report_error(err, "runtime", e.what(), kRuntimeFailure);
  }
}

}  // namespace rankreg::cli
