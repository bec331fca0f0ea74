#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "specgp/error.hpp"

namespace specgp {

/// Peak value shared by every tunable basis function.
inline double kappa(double beta) { return std::sqrt(2.0 / (std::exp(beta) + 1.0)); }

/// m tunable local basis functions centred on equally spaced knots over
/// [lb, ub]. alpha sets the width (larger is narrower), beta the peak height.
struct TunableBasisConfig {
  double alpha = 5.0;
  double beta = 0.0;
  int m = 2;
  double lb = 0.0;
  double ub = 1.0;

  void validate() const {
    if (m < 1) throw InputError("basis: m must be at least 1");
    if (!(lb < ub) || !std::isfinite(lb) || !std::isfinite(ub))
      throw InputError("basis: domain needs lb < ub");
    if (!std::isfinite(alpha) || !std::isfinite(beta)) throw InputError("basis: alpha and beta must be finite");
  }

  double spacing() const { return m > 1 ? (ub - lb) / (m - 1) : ub - lb; }

  // A single basis function sits at the centre of the domain.
  double knot(int j) const { return m > 1 ? lb + j * spacing() : 0.5 * (lb + ub); }

  Eigen::VectorXd knots() const {
    Eigen::VectorXd t(m);
    for (int j = 0; j < m; ++j) t[j] = knot(j);
    return t;
  }
};

namespace detail {

inline constexpr int kPhiSeriesTerms = 20;
inline constexpr double kPhiSeriesRadius = 0.5;

// Power series in w = z^2 of chi(z) and of 1 - (1 + z^2) exp(-z^2), both
// O(z^4). Entry k holds the coefficient of w^(k+2).
struct PhiSeries {
  std::array<double, kPhiSeriesTerms> chi{};
  std::array<double, kPhiSeriesTerms> rest{};

  PhiSeries() {
    constexpr int n = kPhiSeriesTerms + 2;
    std::array<double, 2 * n + 1> fact{};
    fact[0] = 1.0;
    for (int i = 1; i <= 2 * n; ++i) fact[i] = fact[i - 1] * i;

    // z sin z + cos z and exp(-w/2)
    std::array<double, n> s{}, e{};
    s[0] = 1.0;
    for (int k = 1; k < n; ++k) {
      const double sign = (k % 2 == 0) ? 1.0 : -1.0;
      s[k] = -sign / fact[2 * k - 1] + sign / fact[2 * k];
    }
    for (int k = 0; k < n; ++k) e[k] = std::pow(-0.5, k) / fact[k];

    for (int k = 2; k < n; ++k) {
      double g = 0.0;
      for (int i = 0; i <= k; ++i) g += e[i] * s[k - i];
      const double sign = (k % 2 == 0) ? 1.0 : -1.0;
      const double h = sign / fact[k] - sign / fact[k - 1];
      chi[k - 2] = -g;
      rest[k - 2] = -h;
    }
  }
};

inline const PhiSeries& phi_series() {
  static const PhiSeries s;
  return s;
}

}  // namespace detail

/// Tunable basis function at offset u from its knot.
///
/// Closed form is 0/0 at alpha*u = 0 and cancels catastrophically near it;
/// for |alpha*u| < 0.5 the denominator is summed from its Taylor series
/// instead, which agrees with the closed form to ~1e-14 at the switch.
inline double tunable_phi(double alpha, double beta, double u) {
  const double z = alpha * u;
  const double w = z * z;
  const double eb = std::exp(beta);
  if (std::abs(z) < detail::kPhiSeriesRadius) {
    const auto& s = detail::phi_series();
    double acc = 0.0;
    for (int k = detail::kPhiSeriesTerms - 1; k >= 0; --k)
      acc = acc * w + (2.0 * eb * s.chi[k] + s.rest[k]);
    return std::exp(-0.5 * w) / std::sqrt(acc);
  }
  const double chi = 1.0 - std::exp(-0.5 * w) * (z * std::sin(z) + std::cos(z));
  const double den = 2.0 * eb * chi - (w + 1.0) * std::exp(-w) + 1.0;
  return w * std::exp(-0.5 * w) / std::sqrt(den);
}

inline double eval_phi(const TunableBasisConfig& cfg, int j, double x) {
  if (j < 0 || j >= cfg.m)
    throw InputError("basis index " + std::to_string(j) + " outside [0, " + std::to_string(cfg.m) + ")");
  return tunable_phi(cfg.alpha, cfg.beta, x - cfg.knot(j));
}

/// Psi[i, j] = phi_j(x_i).
inline Eigen::MatrixXd feature_matrix(const TunableBasisConfig& cfg, const Eigen::VectorXd& x) {
  cfg.validate();
  Eigen::MatrixXd psi(x.size(), cfg.m);
  for (int j = 0; j < cfg.m; ++j) {
    const double t = cfg.knot(j);
    for (Eigen::Index i = 0; i < x.size(); ++i) psi(i, j) = tunable_phi(cfg.alpha, cfg.beta, x[i] - t);
  }
  return psi;
}

/// Row-wise tensor product of per-dimension feature matrices. Column index
/// is a_0 + a_1*m_0 + a_2*m_0*m_1 + ..., so the first dimension varies fastest.
inline Eigen::MatrixXd tensor_rows(std::span<const Eigen::MatrixXd> per_dim) {
  if (per_dim.empty()) throw InputError("tensor product of no feature matrices");
  Eigen::MatrixXd out = per_dim[0];
  for (std::size_t d = 1; d < per_dim.size(); ++d) {
    const Eigen::MatrixXd& f = per_dim[d];
    if (f.rows() != out.rows()) throw InputError("tensor product: row counts differ");
    Eigen::MatrixXd next(out.rows(), out.cols() * f.cols());
    for (Eigen::Index b = 0; b < f.cols(); ++b)
      next.middleCols(b * out.cols(), out.cols()) = out.array().colwise() * f.col(b).array();
    out = std::move(next);
  }
  return out;
}

/// Features over a D-dimensional input, one basis config per column of X.
inline Eigen::MatrixXd tensor_feature_matrix(std::span<const TunableBasisConfig> cfgs, const Eigen::MatrixXd& X) {
  if (static_cast<Eigen::Index>(cfgs.size()) != X.cols())
    throw InputError("tensor features: " + std::to_string(cfgs.size()) + " basis configs for " +
                     std::to_string(X.cols()) + "-dimensional inputs");
  std::vector<Eigen::MatrixXd> per_dim;
  for (std::size_t d = 0; d < cfgs.size(); ++d)
    per_dim.push_back(feature_matrix(cfgs[d], X.col(static_cast<Eigen::Index>(d))));
  return tensor_rows(per_dim);
}

/// Knot grid matching the column order of tensor_feature_matrix.
inline Eigen::MatrixXd knot_grid(std::span<const TunableBasisConfig> cfgs) {
  Eigen::Index total = 1;
  for (const auto& c : cfgs) total *= c.m;
  Eigen::MatrixXd grid(total, static_cast<Eigen::Index>(cfgs.size()));
  for (Eigen::Index idx = 0; idx < total; ++idx) {
    Eigen::Index rem = idx;
    for (std::size_t d = 0; d < cfgs.size(); ++d) {
      grid(idx, static_cast<Eigen::Index>(d)) = cfgs[d].knot(static_cast<int>(rem % cfgs[d].m));
      rem /= cfgs[d].m;
    }
  }
  return grid;
}

/// Composite Simpson estimate of \int_lb^ub phi_i phi_j dx.
inline double orthogonality_integral(const TunableBasisConfig& cfg, int i, int j, int panels = 2048) {
  if (panels < 2 || panels % 2) throw InputError("Simpson rule needs an even panel count");
  const double h = (cfg.ub - cfg.lb) / panels;
  auto f = [&](double x) { return eval_phi(cfg, i, x) * eval_phi(cfg, j, x); };
  double acc = f(cfg.lb) + f(cfg.ub);
  for (int k = 1; k < panels; ++k) acc += (k % 2 ? 4.0 : 2.0) * f(cfg.lb + k * h);
  return acc * h / 3.0;
}

/// Dirichlet Laplace eigenbasis on [lb, ub] truncated to m functions.
struct HilbertBasisConfig {
  int m = 1;
  double lb = -1.0;
  double ub = 1.0;

  void validate() const {
    if (m < 1) throw InputError("hilbert basis: m must be at least 1");
    if (!(lb < ub)) throw InputError("hilbert basis: domain needs lb < ub");
  }
  double length() const { return ub - lb; }
  /// sqrt of the j-th Laplace eigenvalue, j = 1..m
  double frequency(int j) const { return std::numbers::pi * j / length(); }
};

struct HilbertFeatures {
  Eigen::MatrixXd phi;          // N x M
  Eigen::MatrixXd frequencies;  // M x D, per-dimension sqrt-eigenvalues of each column
};

inline HilbertFeatures hilbert_features(const HilbertBasisConfig& cfg, const Eigen::VectorXd& x) {
  cfg.validate();
  const double L = cfg.length();
  const double scale = std::sqrt(2.0 / L);
  HilbertFeatures out{Eigen::MatrixXd(x.size(), cfg.m), Eigen::MatrixXd(cfg.m, 1)};
  for (int j = 1; j <= cfg.m; ++j) {
    const double w = cfg.frequency(j);
    out.frequencies(j - 1, 0) = w;
    for (Eigen::Index i = 0; i < x.size(); ++i) out.phi(i, j - 1) = scale * std::sin(w * (x[i] - cfg.lb));
  }
  return out;
}

/// Tensor-product eigenbasis on a rectangle, same column order as
/// tensor_feature_matrix.
inline HilbertFeatures hilbert_features(std::span<const HilbertBasisConfig> cfgs, const Eigen::MatrixXd& X) {
  if (static_cast<Eigen::Index>(cfgs.size()) != X.cols())
    throw InputError("hilbert features: config count does not match input dimension");
  std::vector<Eigen::MatrixXd> per_dim;
  std::vector<Eigen::VectorXd> freqs;
  for (std::size_t d = 0; d < cfgs.size(); ++d) {
    auto f = hilbert_features(cfgs[d], X.col(static_cast<Eigen::Index>(d)));
    per_dim.push_back(std::move(f.phi));
    freqs.push_back(f.frequencies.col(0));
  }
  HilbertFeatures out;
  out.phi = tensor_rows(per_dim);
  out.frequencies.resize(out.phi.cols(), static_cast<Eigen::Index>(cfgs.size()));
  for (Eigen::Index idx = 0; idx < out.phi.cols(); ++idx) {
    Eigen::Index rem = idx;
    for (std::size_t d = 0; d < cfgs.size(); ++d) {
      const auto md = freqs[d].size();
      out.frequencies(idx, static_cast<Eigen::Index>(d)) = freqs[d][rem % md];
      rem /= md;
    }
  }
  return out;
}

}  // namespace specgp
