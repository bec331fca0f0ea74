#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>

#include "specgp/error.hpp"
#include "specgp/models.hpp"

namespace specgp {

/// mean((y - mu)^2) / mean((y - train_mean)^2)
inline double nmse(const Eigen::VectorXd& pred_mean, const Eigen::VectorXd& y_test, double train_mean) {
  if (pred_mean.size() != y_test.size()) throw InputError("nmse: length mismatch");
  if (y_test.size() == 0) throw InputError("nmse: no test points");
  const double denom = (y_test.array() - train_mean).square().mean();
  if (!(denom > 0.0)) throw MetricError("nmse undefined: test targets all equal the training mean");
  return (y_test - pred_mean).squaredNorm() / static_cast<double>(y_test.size()) / denom;
}

/// Mean negative log density of y_test under independent N(mu_i, v_i).
inline double mnlp(const Eigen::VectorXd& pred_mean, const Eigen::VectorXd& pred_var, const Eigen::VectorXd& y_test) {
  if (pred_mean.size() != y_test.size() || pred_var.size() != y_test.size())
    throw InputError("mnlp: length mismatch");
  if (y_test.size() == 0) throw InputError("mnlp: no test points");
  if (!(pred_var.array() > 0.0).all()) throw MetricError("mnlp: predictive variances must be positive");
  const Eigen::ArrayXd r = (y_test - pred_mean).array();
  const Eigen::ArrayXd terms = 0.5 * (r.square() / pred_var.array() + pred_var.array().log() + kLog2Pi);
  return terms.mean();
}

struct MetricReport {
  std::string model;
  double nmse = 0.0;
  double mnlp = 0.0;
  double nll_or_neg_elbo = 0.0;  // training objective at the optimum
  int n_test = 0;
  std::uint64_t seed = 0;
};

}  // namespace specgp
