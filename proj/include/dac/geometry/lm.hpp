#pragma once

// Small dense Levenberg-Marquardt driver shared by the point and pose
// refiners.

#include <Eigen/Core>
#include <Eigen/Cholesky>

#include <cmath>
#include <vector>

namespace dac {

struct LmOptions {
  double lambda0{1e-3};
  double factor{10.0};
  int max_iterations{100};
  double relative_tolerance{1e-12};
  /// Stop after this many consecutive rejected steps and keep the best state.
  int max_consecutive_rejections{10};
  /// Undamped steps tried after the relative-decrease stop.
  int polish_steps{5};
};

struct LmSummary {
  double initial_cost{0.0};
  double final_cost{0.0};
  int iterations{0};
  int accepted_steps{0};
  bool converged{false};
  bool aborted{false};  // too many consecutive rejected steps
  double gradient_norm{0.0};
  std::vector<double> accepted_costs;
};

/// Normal equations of a weighted least-squares cost at one state.
template <int N>
struct NormalEquations {
  double cost{0.0};                                     // r^T W r
  Eigen::Matrix<double, N, N> hessian;                  // J^T W J
  Eigen::Matrix<double, N, 1> gradient;                 // J^T W r
};

/// Minimises a cost given by `linearize(state) -> NormalEquations<N>`, with
/// `cost(state) -> double` and `retract(state, delta) -> state`. The step
/// solves (H + lambda * diag(H)) delta = -g.
template <int N, typename State, typename Linearize, typename Cost, typename Retract>
LmSummary levenberg_marquardt(State& state, Linearize&& linearize, Cost&& cost_of, Retract&& retract,
                              const LmOptions& opt = {}) {
  LmSummary s;
  NormalEquations<N> ne = linearize(state);
  s.initial_cost = ne.cost;
  s.final_cost = ne.cost;
  double lambda = opt.lambda0;
  int rejections = 0;

  const auto small_gradient = [](const NormalEquations<N>& e) {
    return e.gradient.norm() <= 1e-12 * (1.0 + e.cost) || e.cost == 0.0;
  };

  // Once the cost stops moving, a few undamped steps are kept while the
  // gradient shrinks and the cost stays within round-off.
  const auto polish = [&](State& st, NormalEquations<N>& e) {
    for (int i = 0; i < opt.polish_steps && !small_gradient(e); ++i) {
      const Eigen::Matrix<double, N, 1> delta = e.hessian.ldlt().solve(-e.gradient);
      if (!delta.allFinite()) return;
      State cand = retract(st, delta);
      NormalEquations<N> ce = linearize(cand);
      if (!(ce.cost <= e.cost * (1.0 + 1e-12)) || !(ce.gradient.norm() < e.gradient.norm())) return;
      st = cand;
      e = ce;
    }
  };

  while (s.iterations < opt.max_iterations) {
    if (small_gradient(ne)) {
      s.converged = true;
      break;
    }
    ++s.iterations;
    Eigen::Matrix<double, N, N> a = ne.hessian;
    for (int i = 0; i < N; ++i) a(i, i) += lambda * std::max(ne.hessian(i, i), 1e-12);
    const Eigen::Matrix<double, N, 1> delta = a.ldlt().solve(-ne.gradient);
    State candidate = retract(state, delta);
    const double c = cost_of(candidate);
    if (std::isfinite(c) && c < ne.cost) {
      const double rel = (ne.cost - c) / ne.cost;
      state = candidate;
      ne = linearize(state);
      ++s.accepted_steps;
      s.accepted_costs.push_back(ne.cost);
      lambda /= opt.factor;
      rejections = 0;
      if (rel < opt.relative_tolerance) {
        s.converged = true;
        polish(state, ne);
        break;
      }
    } else {
      lambda *= opt.factor;
      if (++rejections >= opt.max_consecutive_rejections) {
        s.aborted = true;
        polish(state, ne);
        // Rejections at a stationary point are round-off, not divergence.
        s.converged = ne.gradient.norm() <= 1e-8 * (1.0 + ne.cost);
        break;
      }
    }
  }
  s.final_cost = ne.cost;
  s.gradient_norm = ne.gradient.norm();
  return s;
}

}  // namespace dac
