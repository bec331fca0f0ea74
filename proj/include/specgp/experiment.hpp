#pragma once

// Config-driven experiments: run, sweep and compare. Everything here writes
// plain files (CSV and JSON) into a per-run directory.
//
// Config files are flat `key = value` lines; '#' starts a comment. See
// README.md for the full key list.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "specgp/data.hpp"
#include "specgp/error.hpp"
#include "specgp/kernel_expr.hpp"
#include "specgp/metrics.hpp"
#include "specgp/training.hpp"

namespace specgp {

// ---------------------------------------------------------------------------
// Raw key/value config

class Config {
 public:
  static Config parse(std::string_view text) {
    Config c;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
      const std::size_t end = std::min(text.find('\n', start), text.size());
      std::string_view line = text.substr(start, end - start);
      start = end + 1;
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
      const std::string key(detail::trim(line.substr(0, eq)));
      if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
      c.set(key, std::string(detail::trim(line.substr(eq + 1))));
    }
    return c;
  }

  static Config load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    Config c = parse(ss.str());
    c.source_ = path;
    return c;
  }

  void set(const std::string& key, std::string value) {
    if (!known_key(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = std::move(value);
  }
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::map<std::string, std::string>& values() const { return values_; }
  const std::filesystem::path& source() const { return source_; }

  std::string str(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double number(const std::string& key, double fallback) const {
    return has(key) ? to_number(key, values_.at(key)) : fallback;
  }

  long integer(const std::string& key, long fallback) const {
    if (!has(key)) return fallback;
    const double v = number(key, 0.0);
    if (v != std::floor(v)) throw ConfigError(key + ": expected an integer, got '" + values_.at(key) + "'");
    return static_cast<long>(v);
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string& v = values_.at(key);
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
  }

  /// Comma-separated numbers.
  std::vector<double> numbers(const std::string& key) const {
    std::vector<double> out;
    if (!has(key)) return out;
    for (auto f : detail::split_fields(values_.at(key), ',')) out.push_back(to_number(key, std::string(f)));
    return out;
  }

  static const std::set<std::string>& keys() {
    static const std::set<std::string> k = {
        "name",          "dataset",          "dataset.x",      "dataset.y",
        "dataset.n",     "dataset.noise",    "dataset.seed",   "split",
        "split.window",  "split.n_train",    "split.fraction", "split.ranges",
        "split.dim",     "split.rows",       "seed",           "standardize",
        "model",         "kernel",           "kernel.starts",  "noise",
        "basis.m",       "basis.domain",     "basis.augment",  "basis.alpha",
        "basis.beta",    "train.regime",     "train.init_from_full",
        "vfe.m",         "vfe.optimize_inducing",
        "opt.max_iter",  "opt.grad_tol",     "opt.rel_tol",    "grid.n",
        "out"};
    return k;
  }

 private:
  static bool known_key(const std::string& key) { return keys().count(key) > 0; }

  static double to_number(const std::string& key, const std::string& text) {
    const auto v = detail::parse_double(text);
    if (!v) throw ConfigError(key + ": expected a number, got '" + text + "'");
    return *v;
  }

  std::map<std::string, std::string> values_;
  std::filesystem::path source_;
};

// ---------------------------------------------------------------------------
// Resolved experiment

struct ExperimentConfig {
  Config raw;
  std::string name;
  std::string dataset;
  std::vector<std::string> dataset_x;
  std::string dataset_y;
  int dataset_n = 0;
  double dataset_noise = -1.0;  // < 0: generator default
  std::uint64_t dataset_seed = 0;
  std::string split_kind;
  std::uint64_t seed = 0;
  bool standardize = true;
  ModelKind model = ModelKind::Full;
  std::string kernel;
  std::vector<std::string> kernel_starts;
  std::optional<double> noise;
  std::vector<int> m;                // per input dimension
  std::vector<double> domain;        // lb, ub per dimension (empty: augment)
  double augment = 0.1;
  std::vector<double> alpha;         // per dimension (empty: 1 / knot spacing)
  std::vector<double> beta;
  TrainRegime regime = TrainRegime::All;
  bool init_from_full = false;
  std::vector<int> vfe_m;            // per dimension
  bool optimize_inducing = true;
  MinimizeOptions opt;
  int grid_n = 0;                    // 0: 200 in 1-D, 40 per axis in 2-D
  std::filesystem::path out;

  /// Identity of the data and split, used by compare.
  std::string data_key() const {
    std::ostringstream os;
    os << dataset << '|' << dataset_n << '|' << dataset_seed << '|' << dataset_noise << '|' << split_kind;
    for (const auto& k : {"split.window", "split.n_train", "split.fraction", "split.ranges", "split.dim",
                          "split.rows", "dataset.x", "dataset.y"})
      os << '|' << raw.str(k, "");
    os << '|' << seed;
    return os.str();
  }
};

namespace detail {

inline std::vector<int> to_counts(const std::string& key, const std::vector<double>& v) {
  std::vector<int> out;
  for (double x : v) {
    if (x != std::floor(x) || x < 1) throw ConfigError(key + ": counts must be positive integers");
    out.push_back(static_cast<int>(x));
  }
  return out;
}

inline std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  for (auto f : split_fields(s, sep)) {
    auto t = trim(f);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

}  // namespace detail

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "full") return ModelKind::Full;
  if (s == "tl") return ModelKind::TL;
  if (s == "hilbert") return ModelKind::Hilbert;
  if (s == "vfe") return ModelKind::VFE;
  throw ConfigError("model must be one of full, tl, hilbert, vfe; got '" + s + "'");
}

inline ExperimentConfig resolve(const Config& c) {
  ExperimentConfig e;
  e.raw = c;
  e.dataset = c.str("dataset", "");
  if (e.dataset.empty()) throw ConfigError("config needs a dataset");
  e.model = parse_model_kind(c.str("model", "full"));
  e.name = c.str("name", model_name(e.model));
  e.dataset_x = detail::split_list(c.str("dataset.x", ""), ',');
  e.dataset_y = c.str("dataset.y", "");
  e.dataset_n = static_cast<int>(c.integer("dataset.n", 0));
  e.dataset_noise = c.number("dataset.noise", -1.0);
  e.dataset_seed = static_cast<std::uint64_t>(c.integer("dataset.seed", 0));
  e.split_kind = c.str("split", "random");
  e.seed = static_cast<std::uint64_t>(c.integer("seed", 0));
  e.standardize = c.boolean("standardize", true);
  e.kernel = c.str("kernel", "se");
  e.kernel_starts = detail::split_list(c.str("kernel.starts", ""), ';');
  if (c.has("noise")) {
    e.noise = c.number("noise", 0.0);
    if (!(*e.noise > 0.0)) throw ConfigError("noise must be positive");
  }
  e.m = detail::to_counts("basis.m", c.numbers("basis.m"));
  e.domain = c.numbers("basis.domain");
  e.augment = c.number("basis.augment", 0.1);
  if (!(e.augment >= 0.0)) throw ConfigError("basis.augment must be non-negative");
  e.alpha = c.numbers("basis.alpha");
  e.beta = c.numbers("basis.beta");
  const std::string regime = c.str("train.regime", "all");
  if (regime == "all")
    e.regime = TrainRegime::All;
  else if (regime == "fixed_basis")
    e.regime = TrainRegime::FixedBasis;
  else if (regime == "basis_only")
    e.regime = TrainRegime::BasisOnly;
  else
    throw ConfigError("train.regime must be all, fixed_basis or basis_only");
  e.init_from_full = c.boolean("train.init_from_full", false);
  e.vfe_m = c.has("vfe.m") ? detail::to_counts("vfe.m", c.numbers("vfe.m")) : e.m;
  e.optimize_inducing = c.boolean("vfe.optimize_inducing", true);
  e.opt.max_iter = static_cast<int>(c.integer("opt.max_iter", 200));
  e.opt.grad_tol = c.number("opt.grad_tol", 1e-5);
  e.opt.rel_f_tol = c.number("opt.rel_tol", 1e-9);
  if (e.opt.max_iter < 0) throw ConfigError("opt.max_iter must be non-negative");
  e.grid_n = static_cast<int>(c.integer("grid.n", 0));
  if (e.grid_n < 0) throw ConfigError("grid.n must be non-negative");
  e.out = c.str("out", "out/" + e.name);

  if (e.domain.size() % 2 != 0) throw ConfigError("basis.domain needs lb,ub pairs");
  for (std::size_t i = 0; i + 1 < e.domain.size(); i += 2)
    if (!(e.domain[i] < e.domain[i + 1])) throw ConfigError("basis.domain needs lb < ub");
  if ((e.model == ModelKind::TL || e.model == ModelKind::Hilbert) && e.m.empty())
    throw ConfigError(std::string(model_name(e.model)) + " model requires basis.m");
  if (e.model == ModelKind::VFE && e.vfe_m.empty()) throw ConfigError("vfe model requires vfe.m (or basis.m)");
  // Catch malformed expressions before any data is touched.
  parse_kernel(e.kernel, KernelDefaults{1.0, {1.0, 1.0}, 1.0});
  for (const auto& s : e.kernel_starts) parse_kernel(s, KernelDefaults{1.0, {1.0, 1.0}, 1.0});
  return e;
}

// ---------------------------------------------------------------------------
// Datasets

/// Directory searched for named datasets: explicit > $SPECGP_DATA > fallback.
inline std::filesystem::path data_directory(const std::string& explicit_dir, const std::filesystem::path& fallback) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv("SPECGP_DATA"); env && *env) return env;
  return fallback;
}

inline Dataset load_dataset(const ExperimentConfig& e, const std::filesystem::path& data_dir) {
  const std::string& d = e.dataset;
  const auto noise_or = [&](double dflt) { return e.dataset_noise >= 0.0 ? e.dataset_noise : dflt; };
  Dataset ds;
  if (d == "synthetic:snelson") {
    ds = synth_snelson_like(e.dataset_n > 0 ? e.dataset_n : 200, e.dataset_seed, noise_or(0.3));
  } else if (d == "synthetic:solar") {
    ds = synth_solar_like(e.dataset_seed);
  } else if (d == "synthetic:field2d") {
    ds = synth_field_2d(e.dataset_n > 0 ? e.dataset_n : 1000, e.dataset_seed, noise_or(0.1));
  } else if (d.rfind("synthetic:", 0) == 0) {
    throw ConfigError("unknown synthetic dataset '" + d + "'");
  } else if (d == "sunspots") {
    ds = load_table(data_dir / "sunspots.csv", {"year"}, "activity");
    ds.name = "sunspots";
  } else if (d == "precipitation") {
    ds = load_table(data_dir / "precipitation.csv", {"lon", "lat"}, "precip");
    ds.name = "precipitation";
  } else {
    if (e.dataset_x.empty() || e.dataset_y.empty())
      throw ConfigError("dataset '" + d + "' needs dataset.x and dataset.y column names");
    std::filesystem::path p = d;
    if (p.is_relative() && !std::filesystem::exists(p)) p = data_dir / p;
    ds = load_table(p, e.dataset_x, e.dataset_y);
  }
  ds.validate();
  return ds;
}

/// Three evenly spaced gap windows covering about 20% of the input span.
inline std::vector<std::pair<double, double>> default_gap_windows(const Eigen::MatrixXd& X) {
  const double lo = X.col(0).minCoeff(), hi = X.col(0).maxCoeff();
  const double width = (hi - lo) * 0.2 / 3.0;
  std::vector<std::pair<double, double>> out;
  for (int k = 1; k <= 3; ++k) {
    const double c = lo + (hi - lo) * k / 4.0;
    out.emplace_back(c - 0.5 * width, c + 0.5 * width);
  }
  return out;
}

inline SplitRule split_rule(const ExperimentConfig& e, const Dataset& ds) {
  const Config& c = e.raw;
  if (e.split_kind == "random") return RandomFraction{c.number("split.fraction", 0.2)};
  if (e.split_kind == "window") {
    const auto w = c.numbers("split.window");
    if (w.size() != 2 || !(w[0] < w[1])) throw ConfigError("split.window needs lo,hi");
    const long n = c.integer("split.n_train", 0);
    if (n < 1) throw ConfigError("window split needs split.n_train");
    return WindowSample{w[0], w[1], static_cast<std::size_t>(n)};
  }
  if (e.split_kind == "range") {
    RangeRule r;
    r.dim = static_cast<int>(c.integer("split.dim", 0));
    const auto v = c.numbers("split.ranges");
    if (v.size() % 2 != 0) throw ConfigError("split.ranges needs lo,hi pairs");
    for (std::size_t i = 0; i + 1 < v.size(); i += 2) r.test_ranges.emplace_back(v[i], v[i + 1]);
    if (r.test_ranges.empty()) r.test_ranges = default_gap_windows(ds.X);
    return r;
  }
  if (e.split_kind == "index") {
    IndexList l;
    for (double v : c.numbers("split.rows")) {
      if (v < 0 || v != std::floor(v)) throw ConfigError("split.rows must be row indices");
      l.test.push_back(static_cast<std::size_t>(v));
    }
    if (l.test.empty()) throw ConfigError("index split needs split.rows");
    return l;
  }
  throw ConfigError("split must be random, window, range or index; got '" + e.split_kind + "'");
}

// ---------------------------------------------------------------------------
// Model construction

inline std::vector<Interval> basis_domain(const ExperimentConfig& e, const Eigen::MatrixXd& X_train) {
  const auto D = static_cast<std::size_t>(X_train.cols());
  if (e.domain.empty()) return augment_domain(X_train, e.augment);
  if (e.domain.size() != 2 * D)
    throw ConfigError("basis.domain has " + std::to_string(e.domain.size() / 2) + " intervals, data has " +
                      std::to_string(D) + " dimensions");
  std::vector<Interval> out;
  for (std::size_t d = 0; d < D; ++d) out.emplace_back(e.domain[2 * d], e.domain[2 * d + 1]);
  return out;
}

namespace detail {

template <class T>
std::vector<T> per_dim(const std::string& key, const std::vector<T>& v, std::size_t D) {
  if (v.size() == D) return v;
  if (v.size() == 1) return std::vector<T>(D, v[0]);
  throw ConfigError(key + ": expected 1 or " + std::to_string(D) + " values");
}

}  // namespace detail

/// Initial model for the (standardised) training data.
inline ModelSpec initial_spec(const ExperimentConfig& e, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  const auto D = static_cast<std::size_t>(X.cols());
  ModelSpec s;
  s.kind = e.model;
  s.kernel = parse_kernel(e.kernel, default_kernel_values(X, y));
  const double var_y = y.size() > 1 ? sample_std(y) * sample_std(y) : 1.0;
  s.noise_var = e.noise.value_or(0.1 * (var_y > 0.0 ? var_y : 1.0));
  s.regime = e.regime;
  const auto box = basis_domain(e, X);
  if (e.model == ModelKind::TL) {
    const auto m = detail::per_dim("basis.m", e.m, D);
    for (std::size_t d = 0; d < D; ++d) {
      TunableBasisConfig c;
      c.m = m[d];
      c.lb = box[d].first;
      c.ub = box[d].second;
      c.alpha = 1.0 / c.spacing();
      c.beta = 0.0;
      s.tl_basis.push_back(c);
    }
    if (!e.alpha.empty()) {
      const auto a = detail::per_dim("basis.alpha", e.alpha, D);
      for (std::size_t d = 0; d < D; ++d) s.tl_basis[d].alpha = a[d];
    }
    if (!e.beta.empty()) {
      const auto b = detail::per_dim("basis.beta", e.beta, D);
      for (std::size_t d = 0; d < D; ++d) s.tl_basis[d].beta = b[d];
    }
  } else if (e.model == ModelKind::Hilbert) {
    const auto m = detail::per_dim("basis.m", e.m, D);
    for (std::size_t d = 0; d < D; ++d) s.hilbert_basis.push_back(HilbertBasisConfig{m[d], box[d].first, box[d].second});
  } else if (e.model == ModelKind::VFE) {
    const auto m = detail::per_dim("vfe.m", e.vfe_m, D);
    s.inducing = D == 1 ? inducing_quantiles(X.col(0), m[0]) : inducing_grid(box, m);
    s.optimize_inducing = e.optimize_inducing;
  }
  s.validate(X.cols());
  return s;
}

// ---------------------------------------------------------------------------
// Running

struct SubsetMetrics {
  std::string subset;
  int n = 0;
  double nmse = 0.0;
  double mnlp = 0.0;
};

struct RunResult {
  ExperimentConfig config;
  Dataset data;
  Split split;
  Standardization standardization;
  FitResult fit;
  MetricReport report;  // original units
  std::vector<SubsetMetrics> subsets;
  PredictiveDistribution test_pred;   // original units
  PredictiveDistribution train_pred;  // original units
  Eigen::MatrixXd grid;
  PredictiveDistribution grid_pred;   // original units
  std::vector<std::pair<std::string, double>> jitter;
  double wall_seconds = 0.0;
};

namespace detail {

inline PredictiveDistribution to_original(const PredictiveDistribution& p, const Standardization& s) {
  return PredictiveDistribution{s.inverse_y(p.mean), s.inverse_variance(p.variance), p.includes_noise};
}

inline Eigen::MatrixXd prediction_grid(const Eigen::MatrixXd& X, int n) {
  if (X.cols() == 1) {
    const int k = n > 0 ? n : 200;
    return Eigen::VectorXd::LinSpaced(k, X.col(0).minCoeff(), X.col(0).maxCoeff());
  }
  const int k = n > 0 ? n : 40;
  const Eigen::VectorXd a = Eigen::VectorXd::LinSpaced(k, X.col(0).minCoeff(), X.col(0).maxCoeff());
  const Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(k, X.col(1).minCoeff(), X.col(1).maxCoeff());
  Eigen::MatrixXd G(k * k, 2);
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < k; ++i) G.row(i + j * k) << a[i], b[j];
  return G;
}

}  // namespace detail

/// Loads, splits, trains and predicts; writes nothing.
inline RunResult execute(const ExperimentConfig& e, const std::filesystem::path& data_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  RunResult r;
  r.config = e;
  r.data = load_dataset(e, data_dir);
  r.split = split(r.data, split_rule(e, r.data), e.seed);
  const Dataset& train = r.split.train;
  const Dataset& test = r.split.test;

  if (e.standardize) {
    r.standardization = standardize(train).standardization.value();
  }
  const Eigen::VectorXd y = r.standardization.forward_y(train.y);
  const Eigen::MatrixXd& X = train.X;

  ModelSpec spec = initial_spec(e, X, y);
  FitOptions fo;
  fo.minimize = e.opt;
  for (const auto& s : e.kernel_starts) fo.extra_starts.push_back(parse_kernel(s, default_kernel_values(X, y)));
  if (e.init_from_full && e.model != ModelKind::Full) {
    ModelSpec full = spec;
    full.kind = ModelKind::Full;
    const FitResult ff = fit(full, X, y, fo);
    spec.kernel = ff.spec.kernel;
    spec.noise_var = ff.spec.noise_var;
    fo.extra_starts.clear();
  }
  r.fit = fit(spec, X, y, fo);

  std::optional<FittedModel> fm;
  try {
    fm.emplace(r.fit.spec, X, y);
  } catch (const NotPositiveDefiniteError& ex) {
    throw NumericalError(std::string("conditioning the fitted model failed: ") + ex.what());
  }
  r.jitter = fm->jitter();

  r.test_pred = detail::to_original(fm->predict(test.X), r.standardization);
  r.train_pred = detail::to_original(fm->predict(X), r.standardization);
  r.grid = detail::prediction_grid(r.data.X, e.grid_n);
  r.grid_pred = detail::to_original(fm->predict(r.grid), r.standardization);
  if (!r.test_pred.mean.allFinite() || !(r.test_pred.variance.array() > 0.0).all())
    throw NumericalError("fitted model produced non-finite or non-positive predictions");

  const double train_mean = train.y.mean();
  r.report.model = model_name(e.model);
  r.report.nmse = nmse(r.test_pred.mean, test.y, train_mean);
  r.report.mnlp = mnlp(r.test_pred.mean, r.test_pred.variance, test.y);
  r.report.nll_or_neg_elbo =
      fm->objective() + static_cast<double>(X.rows()) * std::log(r.standardization.y_scale);
  r.report.n_test = static_cast<int>(test.size());
  r.report.seed = e.seed;

  for (TestTag tag : {TestTag::Interpolation, TestTag::Extrapolation}) {
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < r.split.test_tags.size(); ++i)
      if (r.split.test_tags[i] == tag) rows.push_back(static_cast<Eigen::Index>(i));
    if (rows.empty()) continue;
    const Eigen::VectorXd mu = r.test_pred.mean(rows), var = r.test_pred.variance(rows), yt = test.y(rows);
    SubsetMetrics sm;
    sm.subset = tag == TestTag::Interpolation ? "interpolation" : "extrapolation";
    sm.n = static_cast<int>(rows.size());
    try {
      sm.nmse = nmse(mu, yt, train_mean);
    } catch (const MetricError&) {
      sm.nmse = std::numeric_limits<double>::quiet_NaN();
    }
    sm.mnlp = mnlp(mu, var, yt);
    r.subsets.push_back(sm);
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// ---------------------------------------------------------------------------
// Output

inline std::string format_g12(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

namespace detail {

inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out << text;
}

inline void write_prediction_rows(std::ostream& os, const Eigen::MatrixXd& X, const Eigen::VectorXd* y,
                                  const PredictiveDistribution& p, const char* subset_or_null,
                                  const std::vector<TestTag>* tags) {
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index d = 0; d < X.cols(); ++d) os << format_g12(X(i, d)) << ',';
    if (y) os << format_g12((*y)[i]) << ',';
    const double half = 1.96 * std::sqrt(p.variance[i]);
    os << format_g12(p.mean[i]) << ',' << format_g12(p.mean[i] - half) << ',' << format_g12(p.mean[i] + half);
    if (tags)
      os << ',' << ((*tags)[static_cast<std::size_t>(i)] == TestTag::Interpolation ? "interpolation" : "extrapolation");
    else if (subset_or_null)
      os << ',' << subset_or_null;
    os << '\n';
  }
}

inline std::string x_header(Eigen::Index D) {
  std::string h;
  for (Eigen::Index d = 0; d < D; ++d) h += "x" + std::to_string(d) + ",";
  return h;
}

}  // namespace detail

/// The metrics record: depends only on config and data, never on timing.
inline nlohmann::json metrics_json(const RunResult& r) {
  nlohmann::json out;
  out["name"] = r.config.name;
  out["model"] = r.report.model;
  out["dataset"] = r.data.name;
  out["seed"] = r.report.seed;
  out["n_train"] = r.split.train.size();
  out["n_test"] = r.report.n_test;
  out["nmse"] = detail::number_or_null(r.report.nmse);
  out["mnlp"] = detail::number_or_null(r.report.mnlp);
  out["objective"] = detail::number_or_null(r.report.nll_or_neg_elbo);
  out["objective_kind"] = r.config.model == ModelKind::VFE ? "neg_elbo" : "nll";
  out["subsets"] = nlohmann::json::object();
  for (const auto& s : r.subsets)
    out["subsets"][s.subset] = {{"n", s.n}, {"nmse", detail::number_or_null(s.nmse)}, {"mnlp", detail::number_or_null(s.mnlp)}};
  return out;
}

inline nlohmann::json manifest_json(const RunResult& r) {
  nlohmann::json m;
  m["config"] = r.config.raw.values();
  if (!r.config.raw.source().empty()) m["config_file"] = r.config.raw.source().string();
  m["resolved"] = {{"model", model_name(r.config.model)},
                   {"kernel_initial", r.config.kernel},
                   {"kernel_fitted", to_string(r.fit.spec.kernel)},
                   {"out", r.config.out.string()}};
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : r.fit.params.entries())
    params.push_back({{"name", p.name}, {"value", p.value}, {"frozen", p.frozen},
                      {"transform", p.transform == Transform::Log ? "log" : "identity"}});
  m["parameters"] = params;
  m["parameter_units"] = "standardised targets";
  m["standardization"] = {{"y_mean", r.standardization.y_mean}, {"y_scale", r.standardization.y_scale}};
  if (r.config.model == ModelKind::TL) {
    nlohmann::json b = nlohmann::json::array();
    for (const auto& c : r.fit.spec.tl_basis)
      b.push_back({{"m", c.m}, {"lb", c.lb}, {"ub", c.ub}, {"alpha", c.alpha}, {"beta", c.beta}});
    m["basis"] = b;
  } else if (r.config.model == ModelKind::Hilbert) {
    nlohmann::json b = nlohmann::json::array();
    for (const auto& c : r.fit.spec.hilbert_basis) b.push_back({{"m", c.m}, {"lb", c.lb}, {"ub", c.ub}});
    m["basis"] = b;
  }
  nlohmann::json jit = nlohmann::json::array();
  for (const auto& [where, amount] : r.jitter)
    if (amount > 0.0) jit.push_back({{"factorisation", where}, {"jitter", amount}});
  m["jitter_events"] = jit;
  m["optimizer"] = {{"stop_reason", r.fit.optimizer.stop_reason},
                    {"iterations", r.fit.optimizer.iterations},
                    {"evaluations", r.fit.optimizer.evaluations},
                    {"best_start", r.fit.best_start},
                    {"start_objectives", r.fit.start_objectives}};
  m["wall_time_seconds"] = r.wall_seconds;
  return m;
}

/// Writes predictions.csv, grid.csv, metrics.json and manifest.json into dir.
inline void write_outputs(const RunResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const Eigen::Index D = r.data.dim();
  std::ostringstream pred;
  pred << detail::x_header(D) << "y,mean,lower95,upper95,subset\n";
  detail::write_prediction_rows(pred, r.split.train.X, &r.split.train.y, r.train_pred, "train", nullptr);
  detail::write_prediction_rows(pred, r.split.test.X, &r.split.test.y, r.test_pred, nullptr, &r.split.test_tags);
  detail::write_text(dir / "predictions.csv", pred.str());

  std::ostringstream grid;
  grid << detail::x_header(D) << "mean,lower95,upper95\n";
  detail::write_prediction_rows(grid, r.grid, nullptr, r.grid_pred, nullptr, nullptr);
  detail::write_text(dir / "grid.csv", grid.str());

  detail::write_text(dir / "metrics.json", metrics_json(r).dump(2) + "\n");
  detail::write_text(dir / "manifest.json", manifest_json(r).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Sweep and compare

struct SweepRow {
  std::string model;
  int m = 0;  // 0 for the full-GP benchmark
  std::optional<MetricReport> report;
  std::string status;  // "ok" or the failure message
};

/// One run per (model, m) plus a full-GP benchmark; failures are recorded,
/// not thrown. Each run writes into out/<model>_m<m>/.
inline std::vector<SweepRow> sweep(const ExperimentConfig& base, const std::vector<int>& m_values,
                                   const std::vector<ModelKind>& models, const std::filesystem::path& data_dir,
                                   bool include_full = true) {
  if (m_values.empty()) throw ConfigError("sweep needs at least one m value");
  if (models.empty()) throw ConfigError("sweep needs at least one model");
  std::vector<SweepRow> rows;
  auto attempt = [&](ExperimentConfig e, const std::string& sub, int m) {
    SweepRow row{model_name(e.model), m, std::nullopt, "ok"};
    e.out = base.out / sub;
    // Keep the manifest's config record in step with what actually ran.
    e.raw.set("model", std::string(model_name(e.model)));
    e.raw.set("out", e.out.string());
    if (m > 0) {
      e.raw.set("basis.m", std::to_string(m));
      e.raw.set("vfe.m", std::to_string(m));
    }
    try {
      RunResult r = execute(e, data_dir);
      write_outputs(r, e.out);
      row.report = r.report;
    } catch (const MissingDatasetError&) {
      throw;
    } catch (const Error& ex) {
      row.status = ex.what();
    }
    rows.push_back(std::move(row));
  };
  for (ModelKind k : models) {
    if (k == ModelKind::Full) continue;
    for (int m : m_values) {
      ExperimentConfig e = base;
      e.model = k;
      e.m = {m};
      e.vfe_m = {m};
      attempt(e, std::string(model_name(k)) + "_m" + std::to_string(m), m);
    }
  }
  if (include_full) {
    ExperimentConfig e = base;
    e.model = ModelKind::Full;
    attempt(e, "full", 0);
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "model,m,nmse,mnlp,objective,status\n";
  for (const auto& r : rows) {
    os << r.model << ',' << r.m << ',';
    if (r.report)
      os << format_g12(r.report->nmse) << ',' << format_g12(r.report->mnlp) << ',' << format_g12(r.report->nll_or_neg_elbo);
    else
      os << ",,";
    std::string status = r.status;
    for (auto& ch : status)
      if (ch == ',' || ch == '\n') ch = ';';
    os << ',' << status << '\n';
  }
  return os.str();
}

struct CompareRow {
  std::string name;
  MetricReport report;
};

/// Runs every config (they must share data, split and seed) and returns one
/// row per config.
inline std::vector<CompareRow> compare(const std::vector<ExperimentConfig>& configs,
                                       const std::filesystem::path& data_dir, const std::filesystem::path& out) {
  if (configs.size() < 2) throw ConfigError("compare needs at least two configs");
  for (const auto& c : configs)
    if (c.data_key() != configs.front().data_key())
      throw ConfigError("compare: '" + c.name + "' uses a different dataset, split or seed from '" +
                        configs.front().name + "'");
  std::vector<CompareRow> rows;
  std::set<std::string> used;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    ExperimentConfig e = configs[i];
    std::string sub = e.name;
    if (!used.insert(sub).second) sub += "_" + std::to_string(i);
    e.out = out / sub;
    RunResult r = execute(e, data_dir);
    write_outputs(r, e.out);
    rows.push_back(CompareRow{e.name, r.report});
  }
  return rows;
}

/// Table with best (lowest) value per column marked by '*'.
inline std::string compare_csv(const std::vector<CompareRow>& rows) {
  auto best = [&](auto get) {
    double b = std::numeric_limits<double>::infinity();
    for (const auto& r : rows) b = std::min(b, get(r.report));
    return b;
  };
  const double bn = best([](const MetricReport& m) { return m.nmse; });
  const double bm = best([](const MetricReport& m) { return m.mnlp; });
  const double bo = best([](const MetricReport& m) { return m.nll_or_neg_elbo; });
  std::ostringstream os;
  os << "method,model,nmse,mnlp,objective,best_nmse,best_mnlp,best_objective\n";
  for (const auto& r : rows) {
    os << r.name << ',' << r.report.model << ',' << format_g12(r.report.nmse) << ',' << format_g12(r.report.mnlp) << ','
       << format_g12(r.report.nll_or_neg_elbo) << ',' << (r.report.nmse == bn ? "*" : "") << ','
       << (r.report.mnlp == bm ? "*" : "") << ',' << (r.report.nll_or_neg_elbo == bo ? "*" : "") << '\n';
  }
  return os.str();
}

}  // namespace specgp
