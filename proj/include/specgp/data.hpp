#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "specgp/error.hpp"

namespace specgp {

/// Affine maps applied to a dataset: y -> (y - y_mean) / y_scale and,
/// optionally, per-column x -> (x - x_mean) / x_scale.
struct Standardization {
  double y_mean = 0.0;
  double y_scale = 1.0;
  Eigen::VectorXd x_mean;   // empty when inputs are untouched
  Eigen::VectorXd x_scale;

  bool scales_x() const { return x_mean.size() > 0; }

  Eigen::VectorXd forward_y(const Eigen::VectorXd& y) const { return (y.array() - y_mean) / y_scale; }
  Eigen::VectorXd inverse_y(const Eigen::VectorXd& z) const { return z.array() * y_scale + y_mean; }
  Eigen::VectorXd inverse_variance(const Eigen::VectorXd& v) const { return v * (y_scale * y_scale); }

  Eigen::MatrixXd forward_x(const Eigen::MatrixXd& X) const {
    if (!scales_x()) return X;
    Eigen::MatrixXd out = X;
    for (Eigen::Index d = 0; d < X.cols(); ++d) out.col(d) = (X.col(d).array() - x_mean[d]) / x_scale[d];
    return out;
  }
  Eigen::MatrixXd inverse_x(const Eigen::MatrixXd& Z) const {
    if (!scales_x()) return Z;
    Eigen::MatrixXd out = Z;
    for (Eigen::Index d = 0; d < Z.cols(); ++d) out.col(d) = Z.col(d).array() * x_scale[d] + x_mean[d];
    return out;
  }
};

struct Dataset {
  Eigen::MatrixXd X;  // N x D
  Eigen::VectorXd y;
  std::string name;
  std::optional<Standardization> standardization;

  Eigen::Index size() const { return y.size(); }
  Eigen::Index dim() const { return X.cols(); }

  void validate() const {
    if (y.size() < 1) throw DataError(name + ": dataset is empty");
    if (X.rows() != y.size()) throw DataError(name + ": X and y differ in length");
    if (X.cols() < 1 || X.cols() > 2) throw DataError(name + ": only 1-D and 2-D inputs are supported");
    if (!X.allFinite() || !y.allFinite()) throw DataError(name + ": non-finite values");
  }

  Dataset subset(const std::vector<std::size_t>& rows) const {
    Dataset out;
    out.name = name;
    out.standardization = standardization;
    out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
    out.y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.X.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(rows[i]));
      out.y[static_cast<Eigen::Index>(i)] = y[static_cast<Eigen::Index>(rows[i])];
    }
    return out;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// mt19937_64 is fully specified by the standard; these draws avoid the
/// implementation-defined distribution classes so datasets and splits are
/// identical across standard libraries.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do r = rng();
  while (r >= limit);
  return static_cast<std::size_t>(r % n);
}

inline double standard_normal(std::mt19937_64& rng) {
  double u1;
  do u1 = uniform01(rng);
  while (u1 <= 0.0);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// First k entries of a seeded Fisher-Yates shuffle of 0..n-1.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
  idx.resize(k);
  return idx;
}

}  // namespace detail

/// Reads a comma-separated file with a header row. Every listed column must
/// exist and every cell in them must be a finite number.
inline Dataset load_table(const std::filesystem::path& path, const std::vector<std::string>& x_columns,
                          const std::string& y_column) {
  std::ifstream in(path);
  if (!in) throw MissingDatasetError("cannot open data file '" + path.string() + "'");
  if (x_columns.empty()) throw DataError("no input columns requested");

  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  const auto header = detail::split_fields(line);
  auto column_index = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw DataError(path.string() + ": no column named '" + name + "'");
  };
  std::vector<std::size_t> xcol;
  for (const auto& c : x_columns) xcol.push_back(column_index(c));
  const std::size_t ycol = column_index(y_column);

  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line);
    auto cell = [&](std::size_t col, const std::string& name) {
      if (col >= fields.size())
        throw DataError(path.string() + ": row " + std::to_string(line_no) + " has no '" + name + "' cell");
      const auto v = detail::parse_double(fields[col]);
      if (!v)
        throw DataError(path.string() + ": row " + std::to_string(line_no) + ", column '" + name +
                        "': cannot parse '" + std::string(fields[col]) + "'");
      if (!std::isfinite(*v))
        throw DataError(path.string() + ": row " + std::to_string(line_no) + ", column '" + name +
                        "': non-finite value");
      return *v;
    };
    std::vector<double> row;
    for (std::size_t k = 0; k < xcol.size(); ++k) row.push_back(cell(xcol[k], x_columns[k]));
    ys.push_back(cell(ycol, y_column));
    xs.push_back(std::move(row));
  }

  Dataset ds;
  ds.name = path.stem().string();
  ds.X.resize(static_cast<Eigen::Index>(ys.size()), static_cast<Eigen::Index>(x_columns.size()));
  ds.y.resize(static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < ys.size(); ++i) {
    for (std::size_t d = 0; d < xcol.size(); ++d)
      ds.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = xs[i][d];
    ds.y[static_cast<Eigen::Index>(i)] = ys[i];
  }
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Splits

enum class TestTag { Interpolation, Extrapolation };

/// A seeded fraction of rows is held out.
struct RandomFraction {
  double test_fraction = 0.5;
};
/// Explicit held-out rows.
struct IndexList {
  std::vector<std::size_t> test;
};
/// Rows whose input (column `dim`) falls inside any interval are held out.
struct RangeRule {
  std::vector<std::pair<double, double>> test_ranges;
  int dim = 0;
};
/// n_train rows drawn from inside [lo, hi]; the rest of the window is the
/// interpolation test set and everything outside it the extrapolation set.
struct WindowSample {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n_train = 0;
};

using SplitRule = std::variant<RandomFraction, IndexList, RangeRule, WindowSample>;

struct Split {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_rows;  // into the source, ascending
  std::vector<std::size_t> test_rows;
  std::vector<TestTag> test_tags;
};

inline Split split(const Dataset& ds, const SplitRule& rule, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(ds.size());
  std::vector<char> is_test(n, 0);
  std::vector<char> outside(n, 0);

  if (const auto* r = std::get_if<RandomFraction>(&rule)) {
    const auto k = static_cast<std::size_t>(std::llround(r->test_fraction * static_cast<double>(n)));
    if (!(r->test_fraction > 0.0 && r->test_fraction < 1.0) || k == 0 || k >= n)
      throw DataError("random split: fraction " + std::to_string(r->test_fraction) + " leaves an empty side");
    for (std::size_t i : detail::sample_without_replacement(n, k, seed)) is_test[i] = 1;
  } else if (const auto* l = std::get_if<IndexList>(&rule)) {
    for (std::size_t i : l->test) {
      if (i >= n) throw DataError("index split: row " + std::to_string(i) + " out of range");
      is_test[i] = 1;
    }
  } else if (const auto* g = std::get_if<RangeRule>(&rule)) {
    if (g->dim < 0 || g->dim >= ds.dim()) throw DataError("range split: no such input dimension");
    for (std::size_t i = 0; i < n; ++i) {
      const double x = ds.X(static_cast<Eigen::Index>(i), g->dim);
      for (const auto& [lo, hi] : g->test_ranges)
        if (x >= lo && x <= hi) is_test[i] = 1;
    }
  } else {
    const auto& w = std::get<WindowSample>(rule);
    std::vector<std::size_t> inside;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = ds.X(static_cast<Eigen::Index>(i), 0);
      if (x >= w.lo && x <= w.hi)
        inside.push_back(i);
      else
        outside[i] = 1;
    }
    if (w.n_train == 0 || w.n_train > inside.size())
      throw DataError("window split: cannot draw " + std::to_string(w.n_train) + " training rows from " +
                      std::to_string(inside.size()));
    std::fill(is_test.begin(), is_test.end(), 1);
    for (std::size_t k : detail::sample_without_replacement(inside.size(), w.n_train, seed)) is_test[inside[k]] = 0;
  }

  Split out;
  for (std::size_t i = 0; i < n; ++i) {
    if (is_test[i]) {
      out.test_rows.push_back(i);
      out.test_tags.push_back(outside[i] ? TestTag::Extrapolation : TestTag::Interpolation);
    } else {
      out.train_rows.push_back(i);
    }
  }
  if (out.train_rows.empty()) throw DataError("split leaves no training data");
  if (out.test_rows.empty()) throw DataError("split leaves no test data");
  out.train = ds.subset(out.train_rows);
  out.test = ds.subset(out.test_rows);
  return out;
}

// ---------------------------------------------------------------------------
// Transforms

inline double sample_std(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
}

inline Dataset apply_standardization(const Dataset& ds, const Standardization& s) {
  Dataset out = ds;
  out.y = s.forward_y(ds.y);
  out.X = s.forward_x(ds.X);
  out.standardization = s;
  return out;
}

/// Centre y to mean 0 and sample std 1 (and optionally each input column);
/// the record travels with the dataset.
inline Dataset standardize(const Dataset& ds, bool scale_inputs = false) {
  if (ds.size() < 2) throw DataError("standardize needs at least two points");
  Standardization s;
  s.y_mean = ds.y.mean();
  s.y_scale = sample_std(ds.y);
  if (!(s.y_scale > 0.0)) throw DataError("standardize: targets have zero variance");
  if (scale_inputs) {
    s.x_mean.resize(ds.dim());
    s.x_scale.resize(ds.dim());
    for (Eigen::Index d = 0; d < ds.dim(); ++d) {
      s.x_mean[d] = ds.X.col(d).mean();
      s.x_scale[d] = sample_std(ds.X.col(d));
      if (!(s.x_scale[d] > 0.0)) throw DataError("standardize: input column has zero variance");
    }
  }
  return apply_standardization(ds, s);
}

using Interval = std::pair<double, double>;

/// Per-column [min - f*range, max + f*range].
inline std::vector<Interval> augment_domain(const Eigen::MatrixXd& X, double fraction) {
  if (!(fraction >= 0.0)) throw InputError("augmentation fraction must be non-negative");
  if (X.rows() == 0) throw InputError("no inputs to augment");
  std::vector<Interval> out;
  for (Eigen::Index d = 0; d < X.cols(); ++d) {
    const double lo = X.col(d).minCoeff(), hi = X.col(d).maxCoeff();
    const double range = hi - lo;
    if (!(range > 0.0)) throw InputError("input column " + std::to_string(d) + " has zero range");
    out.emplace_back(lo - fraction * range, hi + fraction * range);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

/// Smooth 1-D curve on [0, 6] resembling the classic Snelson toy set:
/// f(x) = 1.2 sin(1.9 x) + 0.5 cos(4.7 x) exp(-0.2 x), uniform sorted
/// inputs, additive N(0, noise_std^2) noise.
inline double snelson_like_curve(double x) { return 1.2 * std::sin(1.9 * x) + 0.5 * std::cos(4.7 * x) * std::exp(-0.2 * x); }

inline Dataset synth_snelson_like(int n, std::uint64_t seed, double noise_std = 0.3) {
  if (n < 1) throw InputError("synthetic dataset needs n >= 1");
  std::mt19937_64 rng(seed);
  std::vector<double> xs(static_cast<std::size_t>(n));
  for (auto& x : xs) x = 6.0 * detail::uniform01(rng);
  std::sort(xs.begin(), xs.end());
  Dataset ds;
  ds.name = "snelson_like";
  ds.X.resize(n, 1);
  ds.y.resize(n);
  for (int i = 0; i < n; ++i) {
    ds.X(i, 0) = xs[static_cast<std::size_t>(i)];
    ds.y[i] = snelson_like_curve(xs[static_cast<std::size_t>(i)]) + noise_std * detail::standard_normal(rng);
  }
  return ds;
}

/// Yearly series on [1610, 2009] with an 11-year cycle whose amplitude
/// drifts slowly (a non-stationary stand-in for solar irradiance):
/// 1365.5 + a(t) sin(2 pi (t - 1610) / 11) + 0.1 sin(2 pi t / 90), a(t) = 0.15 +
/// 0.3 / (1 + exp(-(t - 1720) / 25)), plus N(0, 0.05^2) noise.
inline Dataset synth_solar_like(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int n = 400;
  Dataset ds;
  ds.name = "solar_like";
  ds.X.resize(n, 1);
  ds.y.resize(n);
  for (int i = 0; i < n; ++i) {
    const double t = 1610.0 + i;
    const double amp = 0.15 + 0.3 / (1.0 + std::exp(-(t - 1720.0) / 25.0));
    ds.X(i, 0) = t;
    ds.y[i] = 1365.5 + amp * std::sin(2.0 * std::numbers::pi * (t - 1610.0) / 11.0) +
              0.1 * std::sin(2.0 * std::numbers::pi * t / 90.0) + 0.05 * detail::standard_normal(rng);
  }
  return ds;
}

/// Smooth anisotropic 2-D field on [0, 10] x [0, 6]:
/// f = sin(0.6 x1) + 0.8 cos(0.9 x2) + 0.4 sin(0.25 x1 + 0.5 x2), uniform
/// inputs, N(0, noise_std^2) noise.
inline double field_2d_surface(double x1, double x2) {
  return std::sin(0.6 * x1) + 0.8 * std::cos(0.9 * x2) + 0.4 * std::sin(0.25 * x1 + 0.5 * x2);
}

inline Dataset synth_field_2d(int n, std::uint64_t seed, double noise_std = 0.1) {
  if (n < 1) throw InputError("synthetic dataset needs n >= 1");
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.name = "field_2d";
  ds.X.resize(n, 2);
  ds.y.resize(n);
  for (int i = 0; i < n; ++i) {
    const double x1 = 10.0 * detail::uniform01(rng);
    const double x2 = 6.0 * detail::uniform01(rng);
    ds.X(i, 0) = x1;
    ds.X(i, 1) = x2;
    ds.y[i] = field_2d_surface(x1, x2) + noise_std * detail::standard_normal(rng);
  }
  return ds;
}

}  // namespace specgp
