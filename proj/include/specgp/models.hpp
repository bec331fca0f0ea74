#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <variant>
#include <vector>

#include "specgp/basis.hpp"
#include "specgp/error.hpp"
#include "specgp/kernels.hpp"
#include "specgp/numerics.hpp"

namespace specgp {

inline constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

struct PredictiveDistribution {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  bool includes_noise = true;
};

namespace detail {

inline void check_data(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() < 1) throw InputError("need at least one training point");
  if (X.rows() != y.size())
    throw InputError("X has " + std::to_string(X.rows()) + " rows but y has " + std::to_string(y.size()));
}

inline void check_test(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Xs) {
  if (X.cols() != Xs.cols()) throw InputError("test inputs differ in dimension from training inputs");
}

inline void check_noise(double noise_var) {
  if (!(noise_var > 0.0) || !std::isfinite(noise_var)) throw InputError("noise variance must be positive");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Full GP

/// Exact GP posterior conditioned on (X, y).
class FullGP {
 public:
  FullGP(Kernel kernel, double noise_var, Eigen::MatrixXd X, const Eigen::VectorXd& y)
      : kernel_(std::move(kernel)), noise_var_(noise_var), X_(std::move(X)) {
    detail::check_data(X_, y);
    detail::check_noise(noise_var_);
    Eigen::MatrixXd K = gram(kernel_, X_);
    K.diagonal().array() += noise_var_;
    chol_ = jittered_cholesky(K);
    whitened_y_ = chol_.solve_lower(y);
    alpha_ = chol_.solve_upper(whitened_y_);
  }

  /// -log p(y | X)
  double nll() const {
    const auto n = static_cast<double>(X_.rows());
    return 0.5 * n * kLog2Pi + 0.5 * logdet(chol_) + 0.5 * whitened_y_.squaredNorm();
  }

  PredictiveDistribution predict(const Eigen::MatrixXd& Xs) const {
    detail::check_test(X_, Xs);
    const Eigen::MatrixXd Ksx = gram(kernel_, Xs, X_);
    const Eigen::MatrixXd v = chol_.solve_lower(Ksx.transpose());
    PredictiveDistribution out;
    out.mean = Ksx * alpha_;
    out.variance = gram_diag(kernel_, Xs).array() + noise_var_ - v.colwise().squaredNorm().transpose().array();
    out.includes_noise = true;
    return out;
  }

  double jitter() const { return chol_.jitter; }

 private:
  Kernel kernel_;
  double noise_var_;
  Eigen::MatrixXd X_;
  CholFactor chol_;
  Eigen::VectorXd whitened_y_;
  Eigen::VectorXd alpha_;
};

inline double fullgp_nll(const Kernel& kernel, double noise_var, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  return FullGP(kernel, noise_var, X, y).nll();
}

inline PredictiveDistribution fullgp_predict(const Kernel& kernel, double noise_var, const Eigen::MatrixXd& X,
                                             const Eigen::VectorXd& y, const Eigen::MatrixXd& Xs) {
  return FullGP(kernel, noise_var, X, y).predict(Xs);
}

// ---------------------------------------------------------------------------
// Low-rank models: K ~ Psi Gamma Psi^T

using TunableBasis = std::vector<TunableBasisConfig>;
using HilbertBasis = std::vector<HilbertBasisConfig>;

/// Shared representation of the tunable-basis model (Gamma = kernel Gram
/// over the knots) and the Hilbert-space model (Gamma = diag of spectral
/// densities at the Laplace eigenfrequencies).
struct LowRankModel {
  std::variant<TunableBasis, HilbertBasis> basis;
  Eigen::MatrixXd gamma;    // dense weight-prior covariance (tunable basis)
  Eigen::VectorXd lambda;   // diagonal weight prior (Hilbert basis)
  Kernel kernel = Kernel::se(1.0, 1.0);
  double noise_var = 1.0;

  bool is_hilbert() const { return std::holds_alternative<HilbertBasis>(basis); }
  Eigen::Index rank() const { return is_hilbert() ? lambda.size() : gamma.rows(); }
  Eigen::Index input_dim() const {
    return std::visit([](const auto& b) { return static_cast<Eigen::Index>(b.size()); }, basis);
  }

  Eigen::MatrixXd features(const Eigen::MatrixXd& X) const {
    if (X.cols() != input_dim())
      throw InputError("model built for " + std::to_string(input_dim()) + "-dimensional inputs");
    if (const auto* tb = std::get_if<TunableBasis>(&basis)) return tensor_feature_matrix(*tb, X);
    return hilbert_features(std::span<const HilbertBasisConfig>(std::get<HilbertBasis>(basis)), X).phi;
  }

  WeightFactor weight_factor() const {
    return is_hilbert() ? WeightFactor::from_diagonal(lambda) : WeightFactor::from_covariance(gamma);
  }

  /// Gamma as a dense matrix.
  Eigen::MatrixXd weight_covariance() const {
    return is_hilbert() ? Eigen::MatrixXd(lambda.asDiagonal()) : gamma;
  }
};

inline LowRankModel build_tl_model(const Kernel& kernel, TunableBasis cfgs, double noise_var) {
  if (cfgs.empty()) throw InputError("tunable model needs a basis config per input dimension");
  for (const auto& c : cfgs) c.validate();
  detail::check_noise(noise_var);
  LowRankModel model;
  model.gamma = gram(kernel, knot_grid(cfgs));
  model.basis = std::move(cfgs);
  model.kernel = kernel;
  model.noise_var = noise_var;
  return model;
}

inline LowRankModel build_tl_model(const Kernel& kernel, const TunableBasisConfig& cfg, double noise_var) {
  return build_tl_model(kernel, TunableBasis{cfg}, noise_var);
}

/// Lambda_j = S(omega_j), with omega_j the per-dimension eigenfrequencies
/// of column j.
inline Eigen::VectorXd hilbert_weights(const Kernel& kernel, const Eigen::MatrixXd& frequencies) {
  if (!has_spectral_density(kernel))
    throw UnsupportedFamilyError(std::string("Hilbert-space model needs a kernel with a spectral density; '") +
                                 family_name(kernel.family()) + "' has none");
  Eigen::VectorXd lambda(frequencies.rows());
  std::vector<double> w(static_cast<std::size_t>(frequencies.cols()));
  for (Eigen::Index j = 0; j < frequencies.rows(); ++j) {
    for (Eigen::Index d = 0; d < frequencies.cols(); ++d) w[static_cast<std::size_t>(d)] = frequencies(j, d);
    lambda[j] = spectral_density(kernel, w);
  }
  return lambda;
}

inline LowRankModel build_hilbert_model(const Kernel& kernel, HilbertBasis cfgs, double noise_var) {
  if (cfgs.empty()) throw InputError("Hilbert model needs a basis config per input dimension");
  detail::check_noise(noise_var);
  // Frequencies depend only on the configs; evaluate the basis at a dummy point.
  const auto probe = hilbert_features(std::span<const HilbertBasisConfig>(cfgs),
                                      Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(cfgs.size())));
  LowRankModel model;
  model.lambda = hilbert_weights(kernel, probe.frequencies);
  model.basis = std::move(cfgs);
  model.kernel = kernel;
  model.noise_var = noise_var;
  return model;
}

inline LowRankModel build_hilbert_model(const Kernel& kernel, const HilbertBasisConfig& cfg, double noise_var) {
  return build_hilbert_model(kernel, HilbertBasis{cfg}, noise_var);
}

/// -log N(y | 0, Psi Gamma Psi^T + sigma_n^2 I) from a factored core and
/// the sufficient statistics Psi^T y, y^T y.
inline double lowrank_nll(const LowRankCore& core, const Eigen::VectorXd& psi_t_y, double y_t_y, Eigen::Index n) {
  const auto N = static_cast<double>(n);
  const auto m = static_cast<double>(core.rank());
  const double s2 = core.noise_var;
  const Eigen::VectorXd w = core.whitened.solve_lower(core.weights.apply_transpose(psi_t_y));
  // log|Gamma| + log|sigma^2 Gamma^-1 + Psi^T Psi| is held jointly by the whitened factor.
  return 0.5 * (N - m) * std::log(s2) + 0.5 * core.logdet_weighted() + 0.5 * N * kLog2Pi +
         0.5 / s2 * (y_t_y - w.squaredNorm());
}

inline double lowrank_nll(const LowRankModel& model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  detail::check_data(X, y);
  const Eigen::MatrixXd psi = model.features(X);
  const LowRankCore core = lowrank_core(psi, model.weight_factor(), model.noise_var);
  return lowrank_nll(core, psi.transpose() * y, y.squaredNorm(), X.rows());
}

/// Posterior of a low-rank model, ready to predict.
class LowRankPosterior {
 public:
  LowRankPosterior(LowRankModel model, const Eigen::MatrixXd& X, const Eigen::VectorXd& y)
      : model_(std::move(model)),
        core_(init_core(X, y)) {}

  double nll() const { return nll_; }
  const LowRankCore& core() const { return core_; }
  const LowRankModel& model() const { return model_; }

  PredictiveDistribution predict(const Eigen::MatrixXd& Xs) const {
    const Eigen::MatrixXd psi_s = model_.features(Xs);
    const Eigen::MatrixXd w = core_.whitened.solve_lower(core_.weights.apply_transpose(psi_s.transpose()));
    PredictiveDistribution out;
    out.mean = w.transpose() * target_;
    out.variance = (core_.noise_var * (1.0 + w.colwise().squaredNorm().array())).transpose();
    out.includes_noise = true;
    return out;
  }

 private:
  LowRankCore init_core(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    detail::check_data(X, y);
    const Eigen::MatrixXd psi = model_.features(X);
    LowRankCore core = lowrank_core(psi, model_.weight_factor(), model_.noise_var);
    const Eigen::VectorXd pty = psi.transpose() * y;
    target_ = core.whitened.solve_lower(core.weights.apply_transpose(pty));
    nll_ = lowrank_nll(core, pty, y.squaredNorm(), X.rows());
    return core;
  }

  LowRankModel model_;
  Eigen::VectorXd target_;  // B^{-1} L^T Psi^T y
  double nll_ = 0.0;
  LowRankCore core_;
};

/// Mean Psi* M^{-1} Psi^T y and noisy variance sigma_n^2 (1 + diag(Psi* M^{-1} Psi*^T)),
/// M = Psi^T Psi + sigma_n^2 Gamma^{-1}.
inline PredictiveDistribution lowrank_predict(const LowRankModel& model, const Eigen::MatrixXd& X,
                                              const Eigen::VectorXd& y, const Eigen::MatrixXd& Xs) {
  return LowRankPosterior(model, X, y).predict(Xs);
}

// ---------------------------------------------------------------------------
// Variational view of the tunable-basis model: f = Psi u, u ~ N(0, Gamma).

struct VariationalPosterior {
  Eigen::VectorXd mean;        // mu_hat
  Eigen::MatrixXd covariance;  // S_hat
};

/// q(u) = N(mu_hat, S_hat), S_hat = (Gamma^{-1} + Psi^T Psi / sigma_n^2)^{-1},
/// mu_hat = S_hat Psi^T y / sigma_n^2.
///
/// Formed directly from the precision rather than through LowRankCore.
inline VariationalPosterior tl_variational_posterior(const LowRankModel& model, const Eigen::MatrixXd& X,
                                                     const Eigen::VectorXd& y) {
  detail::check_data(X, y);
  const double s2 = model.noise_var;
  const Eigen::MatrixXd psi = model.features(X);
  const Eigen::Index m = psi.cols();
  const CholFactor gamma_chol = jittered_cholesky(model.weight_covariance());
  Eigen::MatrixXd precision = gamma_chol.solve(Eigen::MatrixXd::Identity(m, m));
  precision += psi.transpose() * psi / s2;
  const CholFactor p_chol = jittered_cholesky(precision);
  VariationalPosterior q;
  q.covariance = p_chol.solve(Eigen::MatrixXd::Identity(m, m));
  q.covariance = 0.5 * (q.covariance + q.covariance.transpose());
  q.mean = q.covariance * (psi.transpose() * y) / s2;
  return q;
}

/// q(f*) = N(Psi* mu_hat, Psi* S_hat Psi*^T), plus sigma_n^2 when requested.
inline PredictiveDistribution predict_variational(const LowRankModel& model, const VariationalPosterior& q,
                                                  const Eigen::MatrixXd& Xs, bool include_noise = true) {
  const Eigen::MatrixXd psi_s = model.features(Xs);
  PredictiveDistribution out;
  out.mean = psi_s * q.mean;
  out.variance = (psi_s * q.covariance).cwiseProduct(psi_s).rowwise().sum();
  if (include_noise) out.variance.array() += model.noise_var;
  out.includes_noise = include_noise;
  return out;
}

// ---------------------------------------------------------------------------
// VFE (Titsias) sparse variational GP

struct InducingSet {
  Eigen::MatrixXd z;  // M x D
};

/// M inducing inputs at evenly spaced quantiles of 1-D training inputs.
inline InducingSet inducing_quantiles(const Eigen::VectorXd& x, int count) {
  if (count < 1) throw InputError("need at least one inducing point");
  if (x.size() == 0) throw InputError("no inputs to place inducing points on");
  std::vector<double> s(x.data(), x.data() + x.size());
  std::sort(s.begin(), s.end());
  InducingSet out{Eigen::MatrixXd(count, 1)};
  for (int k = 0; k < count; ++k) {
    const double pos = (k + 0.5) / count * static_cast<double>(s.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    out.z(k, 0) = s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
  }
  return out;
}

/// Regular grid of inducing inputs over a box, first dimension fastest.
inline InducingSet inducing_grid(std::span<const std::pair<double, double>> box, std::span<const int> counts) {
  if (box.size() != counts.size() || box.empty()) throw InputError("inducing grid: one count per dimension");
  std::vector<TunableBasisConfig> cfgs;
  for (std::size_t d = 0; d < box.size(); ++d) {
    TunableBasisConfig c;
    c.m = counts[d];
    c.lb = box[d].first;
    c.ub = box[d].second;
    c.validate();
    cfgs.push_back(c);
  }
  return InducingSet{knot_grid(cfgs)};
}

namespace detail {

struct VfeTerms {
  CholFactor kuu;
  Eigen::MatrixXd v;  // Luu^{-1} Kuf
  LowRankCore core;   // for Q + sigma^2 I with Q = V^T V
};

inline VfeTerms vfe_terms(const Kernel& kernel, double noise_var, const InducingSet& Z, const Eigen::MatrixXd& X) {
  if (Z.z.rows() < 1) throw InputError("inducing set is empty");
  if (Z.z.cols() != X.cols()) throw InputError("inducing inputs differ in dimension from training inputs");
  CholFactor kuu = jittered_cholesky(gram(kernel, Z.z));
  Eigen::MatrixXd v = kuu.solve_lower(gram(kernel, Z.z, X));
  LowRankCore core = lowrank_core(Eigen::MatrixXd(v.transpose()),
                                  WeightFactor(Eigen::VectorXd::Ones(Z.z.rows())), noise_var);
  return VfeTerms{std::move(kuu), std::move(v), std::move(core)};
}

}  // namespace detail

/// log N(y | 0, Q + sigma_n^2 I) - tr(K_ff - Q) / (2 sigma_n^2), Q = K_fu K_uu^{-1} K_uf.
inline double vfe_elbo(const Kernel& kernel, double noise_var, const InducingSet& Z, const Eigen::MatrixXd& X,
                       const Eigen::VectorXd& y) {
  detail::check_data(X, y);
  detail::check_noise(noise_var);
  const auto t = detail::vfe_terms(kernel, noise_var, Z, X);
  const double log_marginal = -lowrank_nll(t.core, t.v * y, y.squaredNorm(), X.rows());
  const double trace = gram_diag(kernel, X).sum() - t.v.squaredNorm();
  return log_marginal - 0.5 * trace / noise_var;
}

/// Predictive of the optimal q(u): mean K*u Kuu^{-1} mu_hat, variance
/// K** + K*u Kuu^{-1} (S_hat - Kuu) Kuu^{-1} Ku* + sigma_n^2.
class VfePosterior {
 public:
  VfePosterior(Kernel kernel, double noise_var, InducingSet Z, const Eigen::MatrixXd& X, const Eigen::VectorXd& y)
      : kernel_(std::move(kernel)), noise_var_(noise_var), z_(std::move(Z)) {
    detail::check_data(X, y);
    detail::check_noise(noise_var_);
    auto t = detail::vfe_terms(kernel_, noise_var_, z_, X);
    // Kuu + Kuf Kfu / s2 = Luu (I + V V^T / s2) Luu^T; B below factors the bracket.
    Eigen::MatrixXd a = t.v * t.v.transpose() / noise_var_;
    a.diagonal().array() += 1.0;
    b_ = jittered_cholesky(a);
    target_ = b_.solve_lower(Eigen::VectorXd(t.v * y)) / noise_var_;
    elbo_ = -lowrank_nll(t.core, t.v * y, y.squaredNorm(), X.rows()) -
            0.5 * (gram_diag(kernel_, X).sum() - t.v.squaredNorm()) / noise_var_;
    kuu_ = std::move(t.kuu);
  }

  double elbo() const { return elbo_; }

  PredictiveDistribution predict(const Eigen::MatrixXd& Xs) const {
    if (Xs.cols() != z_.z.cols()) throw InputError("test inputs differ in dimension from inducing inputs");
    const Eigen::MatrixXd vs = kuu_.solve_lower(gram(kernel_, z_.z, Xs));
    const Eigen::MatrixXd ws = b_.solve_lower(vs);
    PredictiveDistribution out;
    out.mean = ws.transpose() * target_;
    out.variance = gram_diag(kernel_, Xs).array() - vs.colwise().squaredNorm().transpose().array() +
                   ws.colwise().squaredNorm().transpose().array() + noise_var_;
    out.includes_noise = true;
    return out;
  }

  /// Optimal q(u) in inducing-output space.
  VariationalPosterior q_u() const {
    // S_hat = Luu (I + V V^T/s2)^{-1} Luu^T, mu_hat = Luu B^{-T} target.
    const Eigen::MatrixXd c = b_.solve_lower(Eigen::MatrixXd(kuu_.L.transpose()));
    VariationalPosterior q;
    q.covariance = c.transpose() * c;
    q.mean = kuu_.L * b_.solve_upper(target_);
    return q;
  }

 private:
  Kernel kernel_;
  double noise_var_;
  InducingSet z_;
  CholFactor kuu_;
  CholFactor b_;
  Eigen::VectorXd target_;
  double elbo_ = 0.0;
};

inline PredictiveDistribution vfe_predict(const Kernel& kernel, double noise_var, const InducingSet& Z,
                                          const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                          const Eigen::MatrixXd& Xs) {
  return VfePosterior(kernel, noise_var, Z, X, y).predict(Xs);
}

}  // namespace specgp
