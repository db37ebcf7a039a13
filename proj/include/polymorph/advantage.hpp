#ifndef POLYMORPH_ADVANTAGE_HPP_
#define POLYMORPH_ADVANTAGE_HPP_

// Returns, one-step advantages, advantage stacking and the clipped
// multi-critic surrogate.
//
// Matrices are (batch x columns). A per-agent advantage matrix has one column
// per value head; stacking repeats column i dim_a0 times so that it lines up
// with agent i's slice of the long action vector.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "polymorph/errors.hpp"
#include "polymorph/nn.hpp"

namespace polymorph {

struct LossConfig {
  double gamma = 0.99;
  double clip_epsilon = 0.2;
  double entropy_coef = 0.01;
  // Unused by the separate-optimizer update; kept for config compatibility.
  double value_coef = 1.0;
  bool normalize_advantages = false;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) {
      throw ConfigError("gamma: must be in (0, 1], got " + std::to_string(gamma));
    }
    if (!(clip_epsilon > 0.0)) throw ConfigError("clip_epsilon: must be positive");
    if (!(entropy_coef >= 0.0)) throw ConfigError("entropy_coef: must be >= 0");
    if (!(value_coef >= 0.0)) throw ConfigError("value_coef: must be >= 0");
  }
};

using Flags = std::vector<bool>;

struct AdvantageBatch {
  Matrix per_agent_adv;            // batch x heads
  Matrix stacked_adv;              // batch x (heads * dim_a0)
  std::vector<double> adv_mean;    // per head, before normalization
  std::vector<double> adv_std;
};

// Single segment: G_t = r_t + gamma * G_{t+1}, G_T = bootstrap. Pass a zero
// bootstrap for a true terminal.
inline Matrix discounted_returns(const Matrix& rewards, double gamma,
                                 const Vector& bootstrap) {
  if (rewards.rows() < 1) throw ShapeError("returns need at least one step");
  if (bootstrap.size() != rewards.cols()) {
    throw ShapeError("bootstrap must have one entry per reward column");
  }
  Matrix g(rewards.rows(), rewards.cols());
  Eigen::RowVectorXd next = bootstrap.transpose();
  for (Eigen::Index t = rewards.rows(); t-- > 0;) {
    g.row(t) = rewards.row(t) + gamma * next;
    next = g.row(t);
  }
  return g;
}

// Buffer form. Row t closes a segment when segment_end[t] is set or it is the
// last row; the segment tail then bootstraps from next_values(t, i) unless
// terminal(t, i) holds, in which case it bootstraps zero.
inline Matrix discounted_returns(const Matrix& rewards, double gamma,
                                 const Eigen::MatrixXi& terminal,
                                 const Flags& segment_end,
                                 const Matrix& next_values) {
  const Eigen::Index steps = rewards.rows();
  const Eigen::Index cols = rewards.cols();
  if (terminal.rows() != steps || terminal.cols() != cols ||
      next_values.rows() != steps || next_values.cols() != cols ||
      segment_end.size() != static_cast<std::size_t>(steps)) {
    throw ShapeError("discounted_returns: inconsistent buffer shapes");
  }
  Matrix g(steps, cols);
  for (Eigen::Index t = steps; t-- > 0;) {
    const bool tail = segment_end[static_cast<std::size_t>(t)] || t + 1 == steps;
    for (Eigen::Index i = 0; i < cols; ++i) {
      double future = 0.0;
      if (!terminal(t, i)) future = tail ? next_values(t, i) : g(t + 1, i);
      g(t, i) = rewards(t, i) + gamma * future;
    }
  }
  return g;
}

// A^i = r^i + gamma * V^i(s') * (1 - done^i) - V^i(s)
inline std::vector<double> advantage(std::span<const double> r,
                                     std::span<const double> v_s,
                                     std::span<const double> v_next,
                                     double gamma, const Flags& done) {
  if (v_s.size() != r.size() || v_next.size() != r.size() ||
      done.size() != r.size()) {
    throw ShapeError("advantage: argument lengths differ");
  }
  std::vector<double> a(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    a[i] = r[i] + gamma * (done[i] ? 0.0 : v_next[i]) - v_s[i];
  }
  return a;
}

inline Matrix advantages(const Matrix& rewards, const Matrix& values,
                         const Matrix& next_values,
                         const Eigen::MatrixXi& terminal, double gamma) {
  if (values.rows() != rewards.rows() || values.cols() != rewards.cols() ||
      next_values.rows() != rewards.rows() ||
      next_values.cols() != rewards.cols() ||
      terminal.rows() != rewards.rows() || terminal.cols() != rewards.cols()) {
    throw ShapeError("advantages: inconsistent shapes");
  }
  const Matrix mask = (1 - terminal.array()).cast<double>().matrix();
  return (rewards.array() + gamma * next_values.array() * mask.array() -
          values.array())
      .matrix();
}

// Per-column standardization; returns (mean, std) used.
inline void normalize_columns(Matrix& adv, std::vector<double>& mean,
                              std::vector<double>& stdev) {
  mean.assign(static_cast<std::size_t>(adv.cols()), 0.0);
  stdev.assign(static_cast<std::size_t>(adv.cols()), 1.0);
  for (Eigen::Index i = 0; i < adv.cols(); ++i) {
    const double m = adv.col(i).mean();
    const double var = (adv.col(i).array() - m).square().mean();
    const double s = std::sqrt(var) + 1e-8;
    adv.col(i) = (adv.col(i).array() - m) / s;
    mean[static_cast<std::size_t>(i)] = m;
    stdev[static_cast<std::size_t>(i)] = s;
  }
}

// [A^1 x dim_a0 | A^2 x dim_a0 | ...]
inline Matrix stack_advantages(const Matrix& per_agent_adv, std::size_t dim_a0) {
  if (dim_a0 < 1) throw ShapeError("stack_advantages: dim_a0 must be >= 1");
  const auto d = static_cast<Eigen::Index>(dim_a0);
  Matrix out(per_agent_adv.rows(), per_agent_adv.cols() * d);
  for (Eigen::Index i = 0; i < per_agent_adv.cols(); ++i) {
    for (Eigen::Index k = 0; k < d; ++k) out.col(i * d + k) = per_agent_adv.col(i);
  }
  return out;
}

// Repeats each agent's ratio across its dim_a0 action columns.
inline Matrix broadcast_ratio(const Matrix& per_agent_ratio, std::size_t dim_a0) {
  return stack_advantages(per_agent_ratio, dim_a0);
}

struct SurrogateResult {
  double objective = 0.0;  // mean of min(rA, clip(r)A)
  Matrix d_objective_d_ratio;  // same shape as the ratio input
};

inline SurrogateResult clipped_surrogate_objective(const Matrix& ratio,
                                                   const Matrix& stacked_adv,
                                                   double eps) {
  if (ratio.rows() != stacked_adv.rows() || ratio.cols() != stacked_adv.cols()) {
    throw ShapeError("clipped_surrogate: ratio and advantage shapes differ");
  }
  if (ratio.size() == 0) throw ShapeError("clipped_surrogate: empty batch");
  SurrogateResult res;
  res.d_objective_d_ratio.resize(ratio.rows(), ratio.cols());
  const double inv = 1.0 / static_cast<double>(ratio.size());
  double sum = 0.0;
  for (Eigen::Index b = 0; b < ratio.rows(); ++b) {
    for (Eigen::Index c = 0; c < ratio.cols(); ++c) {
      const double r = ratio(b, c);
      const double a = stacked_adv(b, c);
      const double unclipped = r * a;
      const double clipped = std::clamp(r, 1.0 - eps, 1.0 + eps) * a;
      // Inside the band both terms agree and the gradient is A; outside, the
      // clipped term is constant in r and carries no gradient when it wins.
      if (unclipped <= clipped) {
        sum += unclipped;
        res.d_objective_d_ratio(b, c) = a * inv;
      } else {
        sum += clipped;
        res.d_objective_d_ratio(b, c) = 0.0;
      }
    }
  }
  res.objective = sum / static_cast<double>(ratio.size());
  return res;
}

// Loss to minimize: the negated clipped objective.
inline double clipped_surrogate(const Matrix& ratio, const Matrix& stacked_adv,
                                double eps) {
  return -clipped_surrogate_objective(ratio, stacked_adv, eps).objective;
}

inline double actor_loss(double surrogate_objective, double entropy, double c2) {
  return -surrogate_objective - c2 * entropy;
}

}  // namespace polymorph

#endif  // POLYMORPH_ADVANTAGE_HPP_
