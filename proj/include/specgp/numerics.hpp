#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <variant>

#include "specgp/error.hpp"

namespace specgp {

/// Lower Cholesky factor of A + jitter*I.
struct CholFactor {
  Eigen::MatrixXd L;
  double jitter = 0.0;

  Eigen::Index size() const { return L.rows(); }

  /// L^{-1} b
  template <class B>
  Eigen::MatrixXd solve_lower(const Eigen::MatrixBase<B>& b) const {
    return L.triangularView<Eigen::Lower>().solve(b);
  }
  /// L^{-T} b
  template <class B>
  Eigen::MatrixXd solve_upper(const Eigen::MatrixBase<B>& b) const {
    return L.transpose().triangularView<Eigen::Upper>().solve(b);
  }
  /// (L L^T)^{-1} b
  template <class B>
  Eigen::MatrixXd solve(const Eigen::MatrixBase<B>& b) const {
    return solve_upper(solve_lower(b));
  }
};

inline constexpr std::array<double, 4> kJitterLadder = {0.0, 1e-8, 1e-6, 1e-4};

/// Cholesky of the symmetrised A, retrying with diagonal jitter
/// {0, 1e-8, 1e-6, 1e-4} x mean(diag A) until it succeeds.
inline CholFactor jittered_cholesky(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols()) throw InputError("cholesky of a non-square matrix");
  const Eigen::Index n = A.rows();
  const Eigen::MatrixXd sym = 0.5 * (A + A.transpose());
  double scale = n > 0 ? sym.diagonal().mean() : 1.0;
  if (!(scale > 0.0) || !std::isfinite(scale)) scale = 1.0;
  if (!sym.allFinite()) throw NotPositiveDefiniteError("matrix has non-finite entries", 0.0);

  double jitter = 0.0;
  for (double rung : kJitterLadder) {
    jitter = rung * scale;
    Eigen::MatrixXd work = sym;
    work.diagonal().array() += jitter;
    Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(work);
    if (llt.info() != Eigen::Success) continue;
    const auto d = work.diagonal();
    if (!(d.array() > 0.0).all() || !d.allFinite()) continue;
    CholFactor f;
    f.L = work.triangularView<Eigen::Lower>();
    f.jitter = jitter;
    return f;
  }
  throw NotPositiveDefiniteError("matrix is not positive definite after jitter", jitter);
}

inline double logdet(const CholFactor& f) { return 2.0 * f.L.diagonal().array().log().sum(); }

/// Square-root factor of the weight-prior covariance: either a dense
/// Cholesky factor or the elementwise square root of a diagonal.
class WeightFactor {
 public:
  explicit WeightFactor(CholFactor dense) : f_(std::move(dense)) {}
  explicit WeightFactor(Eigen::VectorXd sqrt_diag) : f_(std::move(sqrt_diag)) {}

  /// Dense SPD weight covariance.
  static WeightFactor from_covariance(const Eigen::MatrixXd& gamma) { return WeightFactor(jittered_cholesky(gamma)); }

  /// Diagonal weight covariance; entries are floored at 1e-12 * max entry.
  static WeightFactor from_diagonal(const Eigen::VectorXd& lambda) {
    if (lambda.size() == 0) throw InputError("empty weight diagonal");
    const double top = lambda.maxCoeff();
    if (!(top > 0.0) || !lambda.allFinite()) throw NotPositiveDefiniteError("weight diagonal is not positive", 0.0);
    return WeightFactor(Eigen::VectorXd(lambda.cwiseMax(1e-12 * top).cwiseSqrt()));
  }

  bool is_diagonal() const { return std::holds_alternative<Eigen::VectorXd>(f_); }
  Eigen::Index size() const {
    return is_diagonal() ? std::get<Eigen::VectorXd>(f_).size() : std::get<CholFactor>(f_).size();
  }
  double jitter() const { return is_diagonal() ? 0.0 : std::get<CholFactor>(f_).jitter; }

  double logdet() const {
    if (is_diagonal()) return 2.0 * std::get<Eigen::VectorXd>(f_).array().log().sum();
    return specgp::logdet(std::get<CholFactor>(f_));
  }

  /// Psi * L
  Eigen::MatrixXd right_apply(const Eigen::MatrixXd& psi) const {
    if (is_diagonal()) return psi * std::get<Eigen::VectorXd>(f_).asDiagonal();
    return psi * std::get<CholFactor>(f_).L.triangularView<Eigen::Lower>();
  }
  /// L^T b
  Eigen::MatrixXd apply_transpose(const Eigen::MatrixXd& b) const {
    if (is_diagonal()) return std::get<Eigen::VectorXd>(f_).asDiagonal() * b;
    return std::get<CholFactor>(f_).L.transpose().triangularView<Eigen::Upper>() * b;
  }
  /// L b
  Eigen::MatrixXd apply(const Eigen::MatrixXd& b) const {
    if (is_diagonal()) return std::get<Eigen::VectorXd>(f_).asDiagonal() * b;
    return std::get<CholFactor>(f_).L.triangularView<Eigen::Lower>() * b;
  }
  /// L^{-T} b
  Eigen::MatrixXd solve_transpose(const Eigen::MatrixXd& b) const {
    if (is_diagonal()) return std::get<Eigen::VectorXd>(f_).cwiseInverse().asDiagonal() * b;
    return std::get<CholFactor>(f_).solve_upper(b);
  }
  /// L^T G L
  Eigen::MatrixXd sandwich(const Eigen::MatrixXd& g) const {
    if (is_diagonal()) {
      const auto& s = std::get<Eigen::VectorXd>(f_);
      return s.asDiagonal() * g * s.asDiagonal();
    }
    const auto& L = std::get<CholFactor>(f_).L;
    Eigen::MatrixXd gl = g * L.triangularView<Eigen::Lower>();
    return L.transpose().triangularView<Eigen::Upper>() * gl;
  }

  /// Reconstructed covariance L L^T.
  Eigen::MatrixXd covariance() const {
    if (is_diagonal()) return Eigen::MatrixXd(std::get<Eigen::VectorXd>(f_).array().square().matrix().asDiagonal());
    const auto& L = std::get<CholFactor>(f_).L;
    return L * L.transpose();
  }

 private:
  std::variant<CholFactor, Eigen::VectorXd> f_;
};

/// Factorisation of the m x m matrix M = sigma_n^2 Gamma^{-1} + Psi^T Psi
/// that drives every low-rank solve.
///
/// Held in whitened form: with Gamma = L L^T, M = L^{-T} (sigma_n^2 I +
/// L^T Psi^T Psi L) L^{-1} and only the bracket is factorised, which stays
/// well conditioned when Gamma is nearly singular.
struct LowRankCore {
  WeightFactor weights;
  CholFactor whitened;  // B B^T = sigma_n^2 I + L^T Psi^T Psi L
  double noise_var = 1.0;

  Eigen::Index rank() const { return whitened.size(); }

  /// log|M|
  double logdet_core() const { return logdet(whitened) - weights.logdet(); }
  /// log|Gamma| + log|M|
  double logdet_weighted() const { return logdet(whitened); }

  /// M^{-1} b
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const {
    return weights.apply(whitened.solve(weights.apply_transpose(b)));
  }

  /// M itself, for diagnostics.
  Eigen::MatrixXd core_matrix() const {
    const Eigen::MatrixXd& B = whitened.L;
    Eigen::MatrixXd bb = B * B.transpose();
    Eigen::MatrixXd left = weights.solve_transpose(bb);
    return weights.solve_transpose(Eigen::MatrixXd(left.transpose()));
  }
};

/// Core from Psi^T Psi, letting callers cache it when the features are fixed.
inline LowRankCore lowrank_core_from_gram(const Eigen::MatrixXd& psi_t_psi, WeightFactor weights, double noise_var) {
  if (!(noise_var > 0.0)) throw InputError("noise variance must be positive");
  if (psi_t_psi.rows() != weights.size()) throw InputError("feature Gram and weight prior differ in size");
  Eigen::MatrixXd inner = weights.sandwich(psi_t_psi);
  inner.diagonal().array() += noise_var;
  CholFactor b = jittered_cholesky(inner);
  return LowRankCore{std::move(weights), std::move(b), noise_var};
}

inline LowRankCore lowrank_core(const Eigen::MatrixXd& psi, WeightFactor weights, double noise_var) {
  if (!(noise_var > 0.0)) throw InputError("noise variance must be positive");
  if (psi.cols() != weights.size()) throw InputError("feature matrix and weight prior differ in size");
  const Eigen::Index m = psi.cols();
  Eigen::MatrixXd inner;
  if (psi.rows() < m) {
    const Eigen::MatrixXd a = weights.right_apply(psi);
    inner = Eigen::MatrixXd::Zero(m, m);
    inner.selfadjointView<Eigen::Lower>().rankUpdate(a.transpose());
    inner = inner.selfadjointView<Eigen::Lower>();
  } else {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m, m);
    g.selfadjointView<Eigen::Lower>().rankUpdate(psi.transpose());
    inner = weights.sandwich(Eigen::MatrixXd(g.selfadjointView<Eigen::Lower>()));
  }
  inner.diagonal().array() += noise_var;
  CholFactor b = jittered_cholesky(inner);
  return LowRankCore{std::move(weights), std::move(b), noise_var};
}

inline LowRankCore lowrank_core(const Eigen::MatrixXd& psi, const Eigen::MatrixXd& gamma, double noise_var) {
  return lowrank_core(psi, WeightFactor::from_covariance(gamma), noise_var);
}

}  // namespace specgp
