#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "specgp/error.hpp"

namespace specgp {

enum class KernelFamily { SE, SEArd, Cosine, Matern52, Sum, Product };

inline const char* family_name(KernelFamily f) {
  switch (f) {
    case KernelFamily::SE: return "se";
    case KernelFamily::SEArd: return "se_ard";
    case KernelFamily::Cosine: return "cos";
    case KernelFamily::Matern52: return "matern52";
    case KernelFamily::Sum: return "sum";
    case KernelFamily::Product: return "product";
  }
  return "?";
}

/// Stationary covariance function from the SE / SE-ARD / Cosine / Matern-5/2
/// families, or a sum / product of such kernels.
///
/// Leaves carry a variance and one lengthscale (SE-ARD: one per input
/// dimension; Cosine: the period). Composite nodes carry only children.
/// Instances are immutable; hyperparameter updates produce a new kernel.
class Kernel {
 public:
  static Kernel se(double variance, double lengthscale) {
    return leaf(KernelFamily::SE, variance, {lengthscale});
  }
  static Kernel se_ard(double variance, std::vector<double> lengthscales) {
    if (lengthscales.empty()) throw InputError("se_ard needs at least one lengthscale");
    return leaf(KernelFamily::SEArd, variance, std::move(lengthscales));
  }
  static Kernel cosine(double variance, double period) {
    return leaf(KernelFamily::Cosine, variance, {period});
  }
  static Kernel matern52(double variance, double lengthscale) {
    return leaf(KernelFamily::Matern52, variance, {lengthscale});
  }
  static Kernel sum(std::vector<Kernel> children) {
    return composite(KernelFamily::Sum, std::move(children));
  }
  static Kernel product(std::vector<Kernel> children) {
    return composite(KernelFamily::Product, std::move(children));
  }

  KernelFamily family() const { return family_; }
  bool is_composite() const {
    return family_ == KernelFamily::Sum || family_ == KernelFamily::Product;
  }
  double variance() const { return variance_; }
  std::span<const double> lengthscales() const { return lengthscales_; }
  const std::vector<Kernel>& children() const { return children_; }

  /// Required input dimension, or 0 when any dimension is accepted.
  int input_dim() const { return dim_; }

  /// K evaluated at lag r = x - x'.
  double at_lag(const Eigen::Ref<const Eigen::VectorXd>& lag) const {
    switch (family_) {
      case KernelFamily::SE:
        return variance_ * std::exp(-0.5 * lag.squaredNorm() / (lengthscales_[0] * lengthscales_[0]));
      case KernelFamily::SEArd: {
        check_dim(lag.size());
        double q = 0.0;
        for (Eigen::Index d = 0; d < lag.size(); ++d) {
          const double z = lag[d] / lengthscales_[static_cast<std::size_t>(d)];
          q += z * z;
        }
        return variance_ * std::exp(-0.5 * q);
      }
      case KernelFamily::Cosine:
        return variance_ * std::cos(2.0 * std::numbers::pi * lag.norm() / lengthscales_[0]);
      case KernelFamily::Matern52: {
        const double s = std::sqrt(5.0) * lag.norm() / lengthscales_[0];
        return variance_ * (1.0 + s + s * s / 3.0) * std::exp(-s);
      }
      case KernelFamily::Sum: {
        double acc = 0.0;
        for (const auto& c : children_) acc += c.at_lag(lag);
        return acc;
      }
      case KernelFamily::Product: {
        double acc = 1.0;
        for (const auto& c : children_) acc *= c.at_lag(lag);
        return acc;
      }
    }
    return 0.0;
  }

  template <class A, class B>
  double operator()(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& x2) const {
    if (x.size() != x2.size())
      throw InputError("kernel inputs differ in dimension: " + std::to_string(x.size()) + " vs " +
                       std::to_string(x2.size()));
    check_dim(x.size());
    Eigen::VectorXd lag(x.size());
    for (Eigen::Index d = 0; d < x.size(); ++d) lag[d] = x(d) - x2(d);
    return at_lag(lag);
  }

  /// Positive hyperparameters in depth-first leaf order: variance first,
  /// then the lengthscale(s).
  std::vector<double> hyperparameters() const {
    std::vector<double> out;
    collect(out);
    return out;
  }

  std::vector<std::string> hyperparameter_names() const {
    std::vector<std::string> out;
    int leaf_index = 0;
    collect_names(out, leaf_index);
    return out;
  }

  std::size_t num_hyperparameters() const { return hyperparameters().size(); }

  Kernel with_hyperparameters(std::span<const double> values) const {
    std::size_t pos = 0;
    Kernel k = rebuild(values, pos);
    if (pos != values.size())
      throw InputError("expected " + std::to_string(pos) + " kernel hyperparameters, got " +
                       std::to_string(values.size()));
    return k;
  }

 private:
  static Kernel leaf(KernelFamily f, double variance, std::vector<double> ls) {
    if (!(variance > 0.0) || !std::isfinite(variance))
      throw InputError(std::string(family_name(f)) + ": variance must be positive");
    for (double l : ls)
      if (!(l > 0.0) || !std::isfinite(l))
        throw InputError(std::string(family_name(f)) + ": lengthscales must be positive");
    Kernel k;
    k.family_ = f;
    k.variance_ = variance;
    k.dim_ = f == KernelFamily::SEArd ? static_cast<int>(ls.size()) : 0;
    k.lengthscales_ = std::move(ls);
    return k;
  }

  static Kernel composite(KernelFamily f, std::vector<Kernel> children) {
    if (children.empty()) throw InputError(std::string(family_name(f)) + " of no kernels");
    int dim = 0;
    for (const auto& c : children) {
      if (c.dim_ == 0) continue;
      if (dim != 0 && dim != c.dim_)
        throw InputError("composed kernels disagree on input dimension");
      dim = c.dim_;
    }
    Kernel k;
    k.family_ = f;
    k.dim_ = dim;
    k.children_ = std::move(children);
    return k;
  }

  void check_dim(Eigen::Index d) const {
    if (dim_ != 0 && d != dim_)
      throw InputError("kernel expects " + std::to_string(dim_) + "-dimensional inputs, got " +
                       std::to_string(d));
  }

  void collect(std::vector<double>& out) const {
    if (is_composite()) {
      for (const auto& c : children_) c.collect(out);
      return;
    }
    out.push_back(variance_);
    out.insert(out.end(), lengthscales_.begin(), lengthscales_.end());
  }

  void collect_names(std::vector<std::string>& out, int& leaf_index) const {
    if (is_composite()) {
      for (const auto& c : children_) c.collect_names(out, leaf_index);
      return;
    }
    const std::string prefix = std::string(family_name(family_)) + "#" + std::to_string(leaf_index++);
    out.push_back(prefix + ".variance");
    if (family_ == KernelFamily::SEArd) {
      for (std::size_t d = 0; d < lengthscales_.size(); ++d)
        out.push_back(prefix + ".lengthscale[" + std::to_string(d) + "]");
    } else {
      out.push_back(prefix + (family_ == KernelFamily::Cosine ? ".period" : ".lengthscale"));
    }
  }

  Kernel rebuild(std::span<const double> v, std::size_t& pos) const {
    if (is_composite()) {
      std::vector<Kernel> kids;
      kids.reserve(children_.size());
      for (const auto& c : children_) kids.push_back(c.rebuild(v, pos));
      return composite(family_, std::move(kids));
    }
    const std::size_t need = 1 + lengthscales_.size();
    if (pos + need > v.size()) throw InputError("too few kernel hyperparameters");
    std::vector<double> ls(v.begin() + static_cast<std::ptrdiff_t>(pos + 1),
                           v.begin() + static_cast<std::ptrdiff_t>(pos + need));
    const double var = v[pos];
    pos += need;
    return leaf(family_, var, std::move(ls));
  }

  KernelFamily family_ = KernelFamily::SE;
  double variance_ = 1.0;
  int dim_ = 0;
  std::vector<double> lengthscales_;
  std::vector<Kernel> children_;
};

template <class A, class B>
double eval_kernel(const Kernel& k, const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& x2) {
  return k(x, x2);
}

/// Cross-covariance matrix; rows of X and X2 are input points.
inline Eigen::MatrixXd gram(const Kernel& k, const Eigen::MatrixXd& X, const Eigen::MatrixXd& X2) {
  if (X.cols() != X2.cols())
    throw InputError("gram: inputs have " + std::to_string(X.cols()) + " and " +
                     std::to_string(X2.cols()) + " columns");
  if (k.input_dim() != 0 && X.cols() != k.input_dim())
    throw InputError("gram: kernel expects " + std::to_string(k.input_dim()) + " columns");
  Eigen::MatrixXd K(X.rows(), X2.rows());
  Eigen::VectorXd lag(X.cols());
  for (Eigen::Index j = 0; j < X2.rows(); ++j)
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      lag = (X.row(i) - X2.row(j)).transpose();
      K(i, j) = k.at_lag(lag);
    }
  return K;
}

/// Symmetric Gram matrix; the upper triangle is mirrored from the lower one.
inline Eigen::MatrixXd gram(const Kernel& k, const Eigen::MatrixXd& X) {
  if (k.input_dim() != 0 && X.cols() != k.input_dim())
    throw InputError("gram: kernel expects " + std::to_string(k.input_dim()) + " columns");
  const Eigen::Index n = X.rows();
  Eigen::MatrixXd K(n, n);
  Eigen::VectorXd lag(X.cols());
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j; i < n; ++i) {
      lag = (X.row(i) - X.row(j)).transpose();
      K(i, j) = k.at_lag(lag);
      K(j, i) = K(i, j);
    }
  return K;
}

/// Prior variance K(x, x) at every row of X.
inline Eigen::VectorXd gram_diag(const Kernel& k, const Eigen::MatrixXd& X) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(X.cols());
  return Eigen::VectorXd::Constant(X.rows(), k.at_lag(zero));
}

inline bool has_spectral_density(const Kernel& k) {
  return k.family() == KernelFamily::SE || k.family() == KernelFamily::SEArd ||
         k.family() == KernelFamily::Matern52;
}

/// Fourier transform S(w) = \int K(r) exp(-i w.r) dr of the kernel on R^D,
/// D = omega.size().
inline double spectral_density(const Kernel& k, std::span<const double> omega) {
  using std::numbers::pi;
  const auto dims = static_cast<double>(omega.size());
  double w2 = 0.0;
  for (double w : omega) w2 += w * w;
  switch (k.family()) {
    case KernelFamily::SE: {
      const double l = k.lengthscales()[0];
      return k.variance() * std::pow(2.0 * pi * l * l, dims / 2.0) * std::exp(-0.5 * l * l * w2);
    }
    case KernelFamily::SEArd: {
      if (static_cast<int>(omega.size()) != k.input_dim())
        throw InputError("se_ard spectral density needs one frequency per dimension");
      double s = k.variance();
      for (std::size_t d = 0; d < omega.size(); ++d) {
        const double l = k.lengthscales()[d];
        s *= std::sqrt(2.0 * pi) * l * std::exp(-0.5 * l * l * omega[d] * omega[d]);
      }
      return s;
    }
    case KernelFamily::Matern52: {
      constexpr double nu = 2.5;
      const double l = k.lengthscales()[0];
      const double c = std::pow(2.0, dims) * std::pow(pi, dims / 2.0) * std::tgamma(nu + dims / 2.0) *
                       std::pow(2.0 * nu, nu) / (std::tgamma(nu) * std::pow(l, 2.0 * nu));
      return k.variance() * c * std::pow(2.0 * nu / (l * l) + w2, -(nu + dims / 2.0));
    }
    default:
      throw UnsupportedFamilyError(std::string("no spectral density for kernel family '") +
                                   family_name(k.family()) + "'");
  }
}

inline double spectral_density(const Kernel& k, double omega) {
  const double w[1] = {omega};
  return spectral_density(k, std::span<const double>(w, 1));
}

}  // namespace specgp
