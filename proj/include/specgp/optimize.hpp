#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "specgp/error.hpp"

namespace specgp {

/// Objective value reported when a model cannot be evaluated (failed
/// factorisation, overflow); large enough that line searches back off.
inline constexpr double kPenalty = 1e30;

enum class Transform { Log, Identity };

struct Parameter {
  std::string name;
  double value = 0.0;  // natural scale
  Transform transform = Transform::Identity;
  bool frozen = false;
};

/// Named model parameters. Positive quantities are optimised as logs,
/// unconstrained ones as-is; frozen entries are never written by the
/// optimiser.
class ParameterVector {
 public:
  void add(std::string name, double value, Transform t, bool frozen = false) {
    if (t == Transform::Log && !(value > 0.0))
      throw InputError("parameter '" + name + "' must be positive, got " + std::to_string(value));
    entries_.push_back(Parameter{std::move(name), value, t, frozen});
  }

  std::size_t size() const { return entries_.size(); }
  const Parameter& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<Parameter>& entries() const { return entries_; }

  double value(const std::string& name) const {
    for (const auto& e : entries_)
      if (e.name == name) return e.value;
    throw InputError("no parameter named '" + name + "'");
  }

  void set_value(std::size_t i, double v) { entries_.at(i).value = v; }
  void set_frozen(std::size_t i, bool frozen) { entries_.at(i).frozen = frozen; }

  std::vector<double> values() const {
    std::vector<double> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.value);
    return out;
  }

  /// Values in optimisation coordinates.
  Eigen::VectorXd packed() const {
    Eigen::VectorXd p(static_cast<Eigen::Index>(entries_.size()));
    for (std::size_t i = 0; i < entries_.size(); ++i)
      p[static_cast<Eigen::Index>(i)] = to_packed(entries_[i]);
    return p;
  }

  /// Writes non-frozen entries from optimisation coordinates.
  void unpack(const Eigen::VectorXd& p) {
    if (p.size() != static_cast<Eigen::Index>(entries_.size())) throw InputError("packed vector has wrong length");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      auto& e = entries_[i];
      if (e.frozen) continue;
      const double v = p[static_cast<Eigen::Index>(i)];
      e.value = e.transform == Transform::Log ? std::exp(v) : v;
    }
  }

  std::vector<bool> frozen_mask() const {
    std::vector<bool> out;
    for (const auto& e : entries_) out.push_back(e.frozen);
    return out;
  }

 private:
  static double to_packed(const Parameter& e) { return e.transform == Transform::Log ? std::log(e.value) : e.value; }

  std::vector<Parameter> entries_;
};

using Objective = std::function<double(const ParameterVector&)>;

namespace detail {

inline bool usable(double f) { return std::isfinite(f) && f < 0.1 * kPenalty; }

inline double eval_packed(const Objective& f, ParameterVector& scratch, const Eigen::VectorXd& p) {
  scratch.unpack(p);
  const double v = f(scratch);
  return std::isfinite(v) ? v : kPenalty;
}

}  // namespace detail

/// Central differences in optimisation coordinates with step
/// 1e-5 * max(1, |p_i|); zero for frozen entries. Falls back to a one-sided
/// difference when one side hits the penalty.
inline Eigen::VectorXd finite_diff_grad(const Objective& f, const ParameterVector& p) {
  ParameterVector scratch = p;
  const Eigen::VectorXd x = p.packed();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
  const double f0 = detail::eval_packed(f, scratch, x);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (p[static_cast<std::size_t>(i)].frozen) continue;
    const double h = 1e-5 * std::max(1.0, std::abs(x[i]));
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fp = detail::eval_packed(f, scratch, xp);
    const double fm = detail::eval_packed(f, scratch, xm);
    const bool okp = detail::usable(fp), okm = detail::usable(fm);
    if (okp && okm)
      g[i] = (fp - fm) / (2.0 * h);
    else if (okp && detail::usable(f0))
      g[i] = (fp - f0) / h;
    else if (okm && detail::usable(f0))
      g[i] = (f0 - fm) / h;
  }
  return g;
}

struct MinimizeOptions {
  int max_iter = 500;
  double grad_tol = 1e-6;      // on the infinity norm
  double rel_f_tol = 1e-9;     // relative improvement per accepted step
  int memory = 10;
  double max_step = 2.0;       // largest move of any coordinate in one step
};

struct MinimizeResult {
  ParameterVector params;
  double value = 0.0;
  std::vector<double> trace;  // objective after each accepted step, starting at p0
  int iterations = 0;
  int evaluations = 0;
  std::string stop_reason;
};

/// Limited-memory BFGS with Armijo backtracking, finite-difference
/// gradients and per-coordinate step capping. Deterministic.
inline MinimizeResult minimize(const Objective& f, const ParameterVector& p0, const MinimizeOptions& opt = {}) {
  int evals = 0;
  const Objective counted = [&](const ParameterVector& p) {
    ++evals;
    return f(p);
  };
  ParameterVector scratch = p0;
  Eigen::VectorXd x = p0.packed();
  double fx = detail::eval_packed(counted, scratch, x);
  if (!detail::usable(fx)) throw InputError("objective is not finite at the starting point");

  const auto frozen = p0.frozen_mask();
  auto grad_at = [&](const Eigen::VectorXd& at) {
    ParameterVector p = p0;
    p.unpack(at);
    return finite_diff_grad(counted, p);
  };

  MinimizeResult res;
  res.trace.push_back(fx);
  Eigen::VectorXd g = grad_at(x);
  std::deque<Eigen::VectorXd> S, Y;
  std::deque<double> rho;

  int it = 0;
  for (; it < opt.max_iter; ++it) {
    if (g.lpNorm<Eigen::Infinity>() < opt.grad_tol) {
      res.stop_reason = "gradient tolerance";
      break;
    }
    // Two-loop recursion.
    Eigen::VectorXd q = g;
    std::vector<double> a(S.size());
    for (int k = static_cast<int>(S.size()) - 1; k >= 0; --k) {
      a[static_cast<std::size_t>(k)] = rho[static_cast<std::size_t>(k)] * S[static_cast<std::size_t>(k)].dot(q);
      q -= a[static_cast<std::size_t>(k)] * Y[static_cast<std::size_t>(k)];
    }
    if (!S.empty()) q *= S.back().dot(Y.back()) / Y.back().squaredNorm();
    for (std::size_t k = 0; k < S.size(); ++k) {
      const double b = rho[k] * Y[k].dot(q);
      q += (a[k] - b) * S[k];
    }
    Eigen::VectorXd d = -q;
    for (Eigen::Index i = 0; i < d.size(); ++i)
      if (frozen[static_cast<std::size_t>(i)]) d[i] = 0.0;
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      S.clear(), Y.clear(), rho.clear();
      d = -g;
      slope = g.dot(d);
    }

    auto line_search = [&](const Eigen::VectorXd& dir, double dir_slope, Eigen::VectorXd& x_new, double& f_new) {
      double t = 1.0;
      const double biggest = dir.lpNorm<Eigen::Infinity>();
      if (biggest * t > opt.max_step) t = opt.max_step / biggest;
      if (S.empty() && it == 0) t = std::min(t, 1.0 / std::max(1.0, g.lpNorm<Eigen::Infinity>()));
      for (int k = 0; k < 60; ++k) {
        x_new = x + t * dir;
        f_new = detail::eval_packed(counted, scratch, x_new);
        if (detail::usable(f_new) && f_new <= fx + 1e-4 * t * dir_slope) return true;
        t *= 0.5;
      }
      return false;
    };

    Eigen::VectorXd x_new;
    double f_new = fx;
    bool ok = line_search(d, slope, x_new, f_new);
    if (!ok && !S.empty()) {
      S.clear(), Y.clear(), rho.clear();
      d = -g;
      ok = line_search(d, g.dot(d), x_new, f_new);
    }
    if (!ok) {
      res.stop_reason = "line search failed";
      break;
    }

    const Eigen::VectorXd g_new = grad_at(x_new);
    const Eigen::VectorXd s = x_new - x, yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-10 * s.norm() * yv.norm()) {
      S.push_back(s);
      Y.push_back(yv);
      rho.push_back(1.0 / sy);
      if (static_cast<int>(S.size()) > opt.memory) S.pop_front(), Y.pop_front(), rho.pop_front();
    }
    const double improvement = (fx - f_new) / std::max(1.0, std::abs(fx));
    x = x_new;
    fx = f_new;
    g = g_new;
    res.trace.push_back(fx);
    if (improvement < opt.rel_f_tol) {
      ++it;
      res.stop_reason = "relative improvement";
      break;
    }
  }
  if (res.stop_reason.empty()) res.stop_reason = "max iterations";

  res.params = p0;
  res.params.unpack(x);
  res.value = fx;
  res.iterations = it;
  res.evaluations = evals;
  return res;
}

struct MultistartResult {
  MinimizeResult best;
  std::size_t best_index = 0;
  std::vector<double> finals;  // per seed; kPenalty for seeds that could not start
};

/// Runs minimize from every seed and keeps the lowest final objective
/// (first seed wins ties).
inline MultistartResult multistart(const Objective& f, const std::vector<ParameterVector>& seeds,
                                   const MinimizeOptions& opt = {}) {
  if (seeds.empty()) throw InputError("multistart needs at least one seed");
  MultistartResult out;
  bool have = false;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    try {
      MinimizeResult r = minimize(f, seeds[i], opt);
      out.finals.push_back(r.value);
      if (!have || r.value < out.best.value) {
        out.best = std::move(r);
        out.best_index = i;
        have = true;
      }
    } catch (const InputError&) {
      out.finals.push_back(kPenalty);
    }
  }
  if (!have) throw InputError("objective is not finite at any multistart seed");
  return out;
}

}  // namespace specgp
