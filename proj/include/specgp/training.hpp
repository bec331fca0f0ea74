#pragma once

// Hyperparameter fitting for the four model kinds.
//
// Parameter layout of a ModelSpec, in order: kernel hyperparameters (log),
// noise variance (log), then for the tunable basis alpha/beta per input
// dimension (raw), then for VFE the inducing coordinates row by row (raw).

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "specgp/data.hpp"
#include "specgp/error.hpp"
#include "specgp/kernel_expr.hpp"
#include "specgp/kernels.hpp"
#include "specgp/models.hpp"
#include "specgp/optimize.hpp"

namespace specgp {

enum class ModelKind { Full, TL, Hilbert, VFE };

inline const char* model_name(ModelKind k) {
  switch (k) {
    case ModelKind::Full: return "full";
    case ModelKind::TL: return "tl";
    case ModelKind::Hilbert: return "hilbert";
    case ModelKind::VFE: return "vfe";
  }
  return "?";
}

/// Which tunable-basis parameters move during training.
enum class TrainRegime {
  All,         // kernel, noise, alpha and beta
  FixedBasis,  // alpha, beta frozen
  BasisOnly,   // kernel and noise frozen
};

struct ModelSpec {
  ModelKind kind = ModelKind::Full;
  Kernel kernel = Kernel::se(1.0, 1.0);
  double noise_var = 0.1;
  TunableBasis tl_basis;       // one per input dimension
  HilbertBasis hilbert_basis;  // one per input dimension
  InducingSet inducing;
  bool optimize_inducing = true;
  TrainRegime regime = TrainRegime::All;

  void validate(Eigen::Index input_dim) const {
    if (kernel.input_dim() != 0 && kernel.input_dim() != input_dim)
      throw ConfigError("kernel expects " + std::to_string(kernel.input_dim()) + "-dimensional inputs, data has " +
                        std::to_string(input_dim));
    switch (kind) {
      case ModelKind::TL:
        if (static_cast<Eigen::Index>(tl_basis.size()) != input_dim)
          throw ConfigError("tl model needs one basis config per input dimension");
        for (const auto& c : tl_basis) c.validate();
        break;
      case ModelKind::Hilbert:
        if (static_cast<Eigen::Index>(hilbert_basis.size()) != input_dim)
          throw ConfigError("hilbert model needs one basis config per input dimension");
        if (!has_spectral_density(kernel))
          throw UnsupportedFamilyError(std::string("hilbert model cannot use kernel family '") +
                                       family_name(kernel.family()) + "': no spectral density");
        for (const auto& c : hilbert_basis) c.validate();
        break;
      case ModelKind::VFE:
        if (inducing.z.rows() < 1 || inducing.z.cols() != input_dim)
          throw ConfigError("vfe model needs inducing inputs matching the data dimension");
        break;
      case ModelKind::Full: break;
    }
  }
};

inline ParameterVector make_parameters(const ModelSpec& spec) {
  ParameterVector p;
  const bool freeze_kernel = spec.kind == ModelKind::TL && spec.regime == TrainRegime::BasisOnly;
  const auto names = spec.kernel.hyperparameter_names();
  const auto values = spec.kernel.hyperparameters();
  for (std::size_t i = 0; i < names.size(); ++i) p.add(names[i], values[i], Transform::Log, freeze_kernel);
  p.add("noise_variance", spec.noise_var, Transform::Log, freeze_kernel);
  if (spec.kind == ModelKind::TL) {
    const bool freeze_basis = spec.regime == TrainRegime::FixedBasis;
    for (std::size_t d = 0; d < spec.tl_basis.size(); ++d) {
      p.add("alpha[" + std::to_string(d) + "]", spec.tl_basis[d].alpha, Transform::Identity, freeze_basis);
      p.add("beta[" + std::to_string(d) + "]", spec.tl_basis[d].beta, Transform::Identity, freeze_basis);
    }
  }
  if (spec.kind == ModelKind::VFE) {
    for (Eigen::Index i = 0; i < spec.inducing.z.rows(); ++i)
      for (Eigen::Index d = 0; d < spec.inducing.z.cols(); ++d)
        p.add("z[" + std::to_string(i) + "][" + std::to_string(d) + "]", spec.inducing.z(i, d), Transform::Identity,
              !spec.optimize_inducing);
  }
  return p;
}

/// The spec with every parameter replaced by its value in p.
inline ModelSpec with_parameters(const ModelSpec& spec, const ParameterVector& p) {
  ModelSpec out = spec;
  const auto values = p.values();
  const std::size_t nk = spec.kernel.num_hyperparameters();
  if (values.size() != make_parameters(spec).size()) throw InputError("parameter vector does not match model");
  out.kernel = spec.kernel.with_hyperparameters(std::span<const double>(values.data(), nk));
  out.noise_var = values[nk];
  std::size_t pos = nk + 1;
  if (spec.kind == ModelKind::TL) {
    for (auto& c : out.tl_basis) {
      c.alpha = values[pos++];
      c.beta = values[pos++];
    }
  }
  if (spec.kind == ModelKind::VFE) {
    for (Eigen::Index i = 0; i < out.inducing.z.rows(); ++i)
      for (Eigen::Index d = 0; d < out.inducing.z.cols(); ++d) out.inducing.z(i, d) = values[pos++];
  }
  return out;
}

/// NLL (or -ELBO for VFE) as a function of the parameter vector. Features
/// that do not depend on the parameters are computed once.
class TrainingObjective {
 public:
  TrainingObjective(ModelSpec spec, Eigen::MatrixXd X, Eigen::VectorXd y)
      : spec_(std::move(spec)), X_(std::move(X)), y_(std::move(y)) {
    detail::check_data(X_, y_);
    spec_.validate(X_.cols());
    y_t_y_ = y_.squaredNorm();
    if (spec_.kind == ModelKind::Hilbert) {
      auto f = hilbert_features(std::span<const HilbertBasisConfig>(spec_.hilbert_basis), X_);
      frequencies_ = std::move(f.frequencies);
      cache_features(std::move(f.phi));
    } else if (spec_.kind == ModelKind::TL && spec_.regime == TrainRegime::FixedBasis) {
      cache_features(tensor_feature_matrix(spec_.tl_basis, X_));
    }
  }

  const ModelSpec& spec() const { return spec_; }

  /// Objective value; throws on numerical failure.
  double evaluate(const ParameterVector& p) const {
    const ModelSpec m = with_parameters(spec_, p);
    switch (m.kind) {
      case ModelKind::Full: return fullgp_nll(m.kernel, m.noise_var, X_, y_);
      case ModelKind::VFE: return -vfe_elbo(m.kernel, m.noise_var, m.inducing, X_, y_);
      case ModelKind::Hilbert:
        return cached_nll(WeightFactor::from_diagonal(hilbert_weights(m.kernel, frequencies_)), m.noise_var);
      case ModelKind::TL: {
        if (psi_) return cached_nll(WeightFactor::from_covariance(gram(m.kernel, knot_grid(m.tl_basis))), m.noise_var);
        return lowrank_nll(build_tl_model(m.kernel, m.tl_basis, m.noise_var), X_, y_);
      }
    }
    return kPenalty;
  }

  /// Objective value with numerical failures mapped to kPenalty.
  double operator()(const ParameterVector& p) const {
    try {
      const double v = evaluate(p);
      return std::isfinite(v) ? v : kPenalty;
    } catch (const NotPositiveDefiniteError&) {
      return kPenalty;
    } catch (const InputError&) {
      return kPenalty;
    }
  }

 private:
  void cache_features(Eigen::MatrixXd psi) {
    psi_t_y_ = psi.transpose() * y_;
    if (psi.rows() >= psi.cols()) {
      const Eigen::Index m = psi.cols();
      Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m, m);
      g.selfadjointView<Eigen::Lower>().rankUpdate(psi.transpose());
      psi_gram_ = Eigen::MatrixXd(g.selfadjointView<Eigen::Lower>());
    }
    psi_ = std::move(psi);
  }

  double cached_nll(WeightFactor weights, double noise_var) const {
    const LowRankCore core = psi_gram_ ? lowrank_core_from_gram(*psi_gram_, std::move(weights), noise_var)
                                       : lowrank_core(*psi_, std::move(weights), noise_var);
    return lowrank_nll(core, psi_t_y_, y_t_y_, X_.rows());
  }

  ModelSpec spec_;
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  double y_t_y_ = 0.0;
  Eigen::MatrixXd frequencies_;
  std::optional<Eigen::MatrixXd> psi_;
  std::optional<Eigen::MatrixXd> psi_gram_;
  Eigen::VectorXd psi_t_y_;
};

/// Training objective of `spec` on (X, y) at parameters p; kPenalty when the
/// model cannot be factorised.
inline double objective(const ModelSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const ParameterVector& p) {
  return TrainingObjective(spec, X, y)(p);
}

/// A model conditioned on training data.
class FittedModel {
 public:
  FittedModel(const ModelSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) : spec_(spec) {
    spec_.validate(X.cols());
    switch (spec.kind) {
      case ModelKind::Full: {
        auto& gp = post_.emplace<FullGP>(spec.kernel, spec.noise_var, X, y);
        objective_ = gp.nll();
        jitter_ = {{"kernel_cholesky", gp.jitter()}};
        break;
      }
      case ModelKind::TL:
      case ModelKind::Hilbert: {
        LowRankModel m = spec.kind == ModelKind::TL ? build_tl_model(spec.kernel, spec.tl_basis, spec.noise_var)
                                                    : build_hilbert_model(spec.kernel, spec.hilbert_basis, spec.noise_var);
        auto& lr = post_.emplace<LowRankPosterior>(std::move(m), X, y);
        objective_ = lr.nll();
        jitter_ = {{"weight_cholesky", lr.core().weights.jitter()}, {"core_cholesky", lr.core().whitened.jitter}};
        break;
      }
      case ModelKind::VFE: {
        auto& v = post_.emplace<VfePosterior>(spec.kernel, spec.noise_var, spec.inducing, X, y);
        objective_ = -v.elbo();
        break;
      }
    }
  }

  const ModelSpec& spec() const { return spec_; }
  /// NLL, or -ELBO for VFE.
  double objective() const { return objective_; }
  const std::vector<std::pair<std::string, double>>& jitter() const { return jitter_; }

  PredictiveDistribution predict(const Eigen::MatrixXd& Xs) const {
    return std::visit(
        [&](const auto& p) -> PredictiveDistribution {
          if constexpr (std::is_same_v<std::decay_t<decltype(p)>, std::monostate>)
            throw InputError("model is not fitted");
          else
            return p.predict(Xs);
        },
        post_);
  }

 private:
  ModelSpec spec_;
  std::variant<std::monostate, FullGP, LowRankPosterior, VfePosterior> post_;
  double objective_ = 0.0;
  std::vector<std::pair<std::string, double>> jitter_;
};

struct FitOptions {
  MinimizeOptions minimize;
  /// Extra starting kernels; the spec's own kernel is always the first start.
  std::vector<Kernel> extra_starts;
};

struct FitResult {
  ModelSpec spec;  // optimised
  ParameterVector params;
  double objective = 0.0;
  MinimizeResult optimizer;
  std::size_t best_start = 0;
  std::vector<double> start_objectives;
};

inline FitResult fit(const ModelSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const FitOptions& opt = {}) {
  const TrainingObjective obj(spec, X, y);
  std::vector<ParameterVector> seeds{make_parameters(spec)};
  for (const auto& k : opt.extra_starts) {
    ModelSpec s = spec;
    s.kernel = k;
    if (k.num_hyperparameters() != spec.kernel.num_hyperparameters())
      throw ConfigError("starting kernel '" + to_string(k) + "' has a different structure from '" +
                        to_string(spec.kernel) + "'");
    seeds.push_back(make_parameters(s));
  }
  MultistartResult ms;
  try {
    ms = multistart(std::cref(obj), seeds, opt.minimize);
  } catch (const InputError& e) {
    throw NumericalError(std::string(model_name(spec.kind)) + ": " + e.what());
  }
  FitResult out;
  out.spec = with_parameters(spec, ms.best.params);
  out.params = ms.best.params;
  out.objective = ms.best.value;
  out.best_start = ms.best_index;
  out.start_objectives = ms.finals;
  out.optimizer = std::move(ms.best);
  return out;
}

/// Data-driven starting values: variance = var(y), lengthscale = span/10
/// per input column, cosine period = mean span / 10.
inline KernelDefaults default_kernel_values(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  KernelDefaults d;
  double var = y.size() > 1 ? (y.array() - y.mean()).square().sum() / static_cast<double>(y.size() - 1) : 1.0;
  d.variance = var > 0.0 ? var : 1.0;
  double mean_span = 0.0;
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    double span = X.rows() > 0 ? X.col(c).maxCoeff() - X.col(c).minCoeff() : 1.0;
    if (!(span > 0.0)) span = 1.0;
    d.lengthscales.push_back(span / 10.0);
    mean_span += span / static_cast<double>(X.cols());
  }
  d.period = mean_span / 10.0;
  return d;
}

}  // namespace specgp
