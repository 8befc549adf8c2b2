#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "nlpca/errors.hpp"

namespace nlpca {

struct LineSearchConfig {
  int max_expansions = 8;              // growth evaluations per search
  double shrink = 0.5;                 // backtracking factor
  double expand = 2.0;                 // growth factor
  double sufficient_decrease = 1e-4;   // Armijo constant, in (0, 1)

  void validate() const {
    if (max_expansions < 0) throw ContractError("max_expansions must be >= 0");
    if (!(shrink > 0.0 && shrink < 1.0))
      throw ContractError("shrink factor must be in (0, 1)");
    if (expand <= 1.0) throw ContractError("expand factor must be > 1");
    if (!(sufficient_decrease > 0.0 && sufficient_decrease < 1.0))
      throw ContractError("sufficient_decrease must be in (0, 1)");
  }
};

struct CgConfig {
  int max_iterations = 1000;
  double gradient_tolerance = 1e-8;  // stop when gradient max-norm is below
  int restart_interval = 100;        // steepest-descent reset cadence
  LineSearchConfig line_search;

  void validate() const {
    if (max_iterations <= 0) throw ContractError("max_iterations must be > 0");
    if (gradient_tolerance < 0.0)
      throw ContractError("gradient_tolerance must be >= 0");
    if (restart_interval <= 0)
      throw ContractError("restart_interval must be > 0");
    line_search.validate();
  }
};

struct MinimizeResult {
  Eigen::VectorXd argmin;
  double value = 0.0;
  int iterations = 0;         // accepted steps
  std::vector<double> trace;  // value at start, then after each step
  bool converged = false;     // gradient tolerance reached
};

namespace detail {

struct LineSearchOutcome {
  bool accepted = false;
  bool stalled = false;  // steps too small to change the iterate
  double alpha = 0.0;
  double value = 0.0;
  Eigen::VectorXd grad;  // full gradient at x + alpha * p
};

// Backtracking line search with the Armijo sufficient-decrease condition,
// refined by secant steps on the directional derivative. The secant step is
// the exact line minimizer for quadratic objectives, which is what makes CG
// terminate in `dim` iterations on such problems. Every tested point is
// evaluated with its gradient so the accepted gradient can be reused by the
// caller.
template <class PhiGrad>
LineSearchOutcome line_search(PhiGrad&& phi_grad, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& p, double phi0,
                              double dphi0, double alpha_init,
                              const LineSearchConfig& cfg) {
  LineSearchOutcome out;
  if (!(dphi0 < 0.0)) return out;  // not a descent direction

  const double c = cfg.sufficient_decrease;
  const auto armijo = [&](double a, double v) {
    return std::isfinite(v) && v <= phi0 + c * a * dphi0;
  };
  const auto moves = [&](double a) {
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if (x[i] + a * p[i] != x[i]) return true;
    return false;
  };
  // Root of the secant through phi'(0) and phi'(a); exact for quadratics.
  const auto secant = [&](double a, double dphi_a) {
    const double denom = dphi0 - dphi_a;
    if (denom == 0.0) return -1.0;
    const double aq = a * dphi0 / denom;
    return std::isfinite(aq) ? aq : -1.0;
  };

  Eigen::VectorXd g_trial(x.size());
  double alpha = alpha_init;
  double dphi_alpha = 0.0;
  constexpr int kMaxBacktracks = 100;
  constexpr double kEps = std::numeric_limits<double>::epsilon();
  for (int tries = 0; tries < kMaxBacktracks; ++tries) {
    if (!moves(alpha)) {
      out.stalled = true;
      return out;
    }
    // The first-order decrease available at this step is below the rounding
    // floor of phi0: no representable progress is possible.
    if (alpha * -dphi0 < kEps * std::abs(phi0)) {
      out.stalled = true;
      return out;
    }
    const double v = phi_grad(alpha, g_trial);
    dphi_alpha = g_trial.allFinite() ? g_trial.dot(p) : 0.0;
    if (armijo(alpha, v)) {
      out.accepted = true;
      out.alpha = alpha;
      out.value = v;
      out.grad = g_trial;
      break;
    }
    // Safeguarded backtrack toward the secant estimate.
    const double aq = secant(alpha, dphi_alpha);
    alpha = std::clamp(aq > 0.0 ? aq : cfg.shrink * alpha, 0.1 * alpha,
                       cfg.shrink * alpha);
  }
  if (!out.accepted) return out;

  // Refine: secant steps toward the line minimum (at most two), then grow
  // the step while the slope stays negative and the value keeps improving.
  double dphi_best = dphi_alpha;
  for (int r = 0; r < 2; ++r) {
    if (dphi_best == 0.0) return out;
    const double aq = secant(out.alpha, dphi_best);
    if (!(aq > 0.0) || aq == out.alpha) break;
    const double vq = phi_grad(aq, g_trial);
    if (!armijo(aq, vq) || vq > out.value || !g_trial.allFinite()) break;
    out.alpha = aq;
    out.value = vq;
    out.grad = g_trial;
    dphi_best = g_trial.dot(p);
  }
  for (int e = 0; e < cfg.max_expansions && dphi_best < 0.0; ++e) {
    const double ae = out.alpha * cfg.expand;
    const double ve = phi_grad(ae, g_trial);
    if (!armijo(ae, ve) || ve >= out.value || !g_trial.allFinite()) break;
    out.alpha = ae;
    out.value = ve;
    out.grad = g_trial;
    dphi_best = g_trial.dot(p);
  }
  return out;
}

}  // namespace detail

/// Minimizes a smooth objective with nonlinear conjugate gradient descent.
///
/// `objective(x, grad)` returns the value at x and, when `grad` is non-null,
/// fills it with the gradient. Directions use the Hestenes-Stiefel update
/// with a reset to steepest descent whenever beta turns negative, the
/// direction stops being a descent direction, or `restart_interval` steps
/// have passed since the last reset. A failed line search falls back to
/// steepest descent with a halved step; only a failure of that fallback is
/// an error (unless the iterate can no longer change, which counts as
/// converged).
template <class F>
MinimizeResult minimize(F&& objective, Eigen::VectorXd start,
                        const CgConfig& config) {
  config.validate();

  Eigen::VectorXd x = std::move(start);
  Eigen::VectorXd g(x.size());
  double f = objective(static_cast<const Eigen::VectorXd&>(x), &g);
  if (!std::isfinite(f) || !g.allFinite())
    throw NumericError("objective not finite at start", x);

  MinimizeResult result;
  result.trace.push_back(f);

  const auto grad_max = [](const Eigen::VectorXd& v) {
    return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
  };

  if (grad_max(g) <= config.gradient_tolerance) {
    result.argmin = std::move(x);
    result.value = f;
    result.converged = true;
    return result;
  }

  Eigen::VectorXd p = -g;
  Eigen::VectorXd x_trial(x.size());
  double prev_alpha = 1.0 / (1.0 + grad_max(g));
  int steps_since_reset = 0;

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    double dphi0 = g.dot(p);
    if (!(dphi0 < 0.0)) {  // not a descent direction; reset
      p = -g;
      dphi0 = g.dot(p);
      steps_since_reset = 0;
    }

    const auto phi_grad = [&](double a, Eigen::VectorXd& grad_out) {
      x_trial = x + a * p;
      return objective(static_cast<const Eigen::VectorXd&>(x_trial),
                       &grad_out);
    };

    auto ls = detail::line_search(phi_grad, x, p, f, dphi0, prev_alpha,
                                  config.line_search);
    if (!ls.accepted) {
      // Fall back to steepest descent with a halved step.
      p = -g;
      steps_since_reset = 0;
      ls = detail::line_search(phi_grad, x, p, f, g.dot(p), 0.5 * prev_alpha,
                               config.line_search);
      if (!ls.accepted) {
        if (ls.stalled) break;  // iterate cannot change: rounding floor
        throw NumericError("line search failed along steepest descent", x);
      }
    }

    x += ls.alpha * p;
    prev_alpha = ls.alpha;
    ++result.iterations;
    ++steps_since_reset;

    Eigen::VectorXd g_new = std::move(ls.grad);
    if (!std::isfinite(ls.value) || !g_new.allFinite())
      throw NumericError("objective not finite at accepted iterate", x);
    f = ls.value;
    result.trace.push_back(f);

    if (grad_max(g_new) <= config.gradient_tolerance) {
      result.converged = true;
      break;
    }

    const Eigen::VectorXd y = g_new - g;
    const double denom = p.dot(y);
    double beta = denom != 0.0 ? g_new.dot(y) / denom : 0.0;
    if (!std::isfinite(beta) || beta < 0.0 ||
        steps_since_reset >= config.restart_interval) {
      beta = 0.0;
      steps_since_reset = 0;
    }
    p = beta * p - g_new;
    g = std::move(g_new);
  }

  result.argmin = std::move(x);
  result.value = f;
  return result;
}

}  // namespace nlpca
