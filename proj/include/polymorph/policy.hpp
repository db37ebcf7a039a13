#ifndef POLYMORPH_POLICY_HPP_
#define POLYMORPH_POLICY_HPP_

// Diagonal-Gaussian actor over the merged swarm state.
//
// The network emits 2 * action_dim reals per state: the first half is the
// mean, the second half goes through softplus and a floor to give sigma.
// The long action vector is laid out agent by agent, {a_1 | a_2 | ... | a_n},
// each slice dim_a0 wide.

#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "polymorph/checkpoint.hpp"
#include "polymorph/errors.hpp"
#include "polymorph/nn.hpp"

namespace polymorph {

inline constexpr double kLogSqrtTwoPi = 0.91893853320467274178;  // ln sqrt(2pi)

inline double softplus(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct ActionRecord {
  std::vector<double> action;
  std::vector<double> per_agent_logp;
  double entropy = 0.0;
};

// Everything the loss needs from one batched policy evaluation.
struct PolicyEvaluation {
  Matrix mean;       // batch x action_dim
  Matrix pre_sigma;  // batch x action_dim
  Matrix sigma;      // batch x action_dim
  Matrix logp;       // batch x n_agents
  Vector entropy;    // batch
};

struct PolicySpec {
  std::size_t state_dim = 1;
  std::size_t n_agents = 1;
  std::size_t dim_a0 = 3;
  std::vector<std::size_t> hidden = {64, 64};
  Activation activation = Activation::kTanh;
  double log_std_floor = -5.0;
};

class GaussianPolicy {
 public:
  GaussianPolicy() = default;

  GaussianPolicy(const PolicySpec& spec, Rng& rng)
      : n_agents_(spec.n_agents),
        dim_a0_(spec.dim_a0),
        log_std_floor_(spec.log_std_floor) {
    if (spec.n_agents == 0 || spec.dim_a0 == 0) {
      throw ShapeError("policy needs n_agents >= 1 and dim_a0 >= 1");
    }
    MlpSpec m;
    m.input_dim = spec.state_dim;
    m.hidden = spec.hidden;
    m.output_dim = 2 * action_dim();
    m.hidden_activation = spec.activation;
    net_ = Mlp(m, rng, "actor");
  }

  GaussianPolicy(Mlp net, std::size_t n_agents, std::size_t dim_a0,
                 double log_std_floor)
      : net_(std::move(net)),
        n_agents_(n_agents),
        dim_a0_(dim_a0),
        log_std_floor_(log_std_floor) {
    if (net_.output_dim() != 2 * action_dim()) {
      throw ShapeError("actor output must be 2 * n_agents * dim_a0");
    }
  }

  std::size_t n_agents() const { return n_agents_; }
  std::size_t dim_a0() const { return dim_a0_; }
  std::size_t action_dim() const { return n_agents_ * dim_a0_; }
  std::size_t state_dim() const { return net_.input_dim(); }
  double log_std_floor() const { return log_std_floor_; }
  double sigma_floor() const { return std::exp(log_std_floor_); }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }

  // Splits raw network output into mean / pre-sigma / sigma.
  void split_head(const Matrix& out, Matrix& mean, Matrix& pre,
                  Matrix& sigma) const {
    const auto a = static_cast<Eigen::Index>(action_dim());
    if (!out.allFinite()) {
      throw PolicyDivergence("actor network produced non-finite output");
    }
    mean = out.leftCols(a);
    pre = out.rightCols(a);
    sigma = pre.unaryExpr([](double x) { return softplus(x); }).array() +
            sigma_floor();
  }

  // Mean and sigma for a single state, no tape.
  void distribution(std::span<const double> s, std::vector<double>& mean,
                    std::vector<double>& sigma) const {
    check_state(s.size());
    const std::vector<double> out = net_.predict(s);
    const std::size_t a = action_dim();
    mean.assign(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(a));
    sigma.resize(a);
    for (std::size_t k = 0; k < a; ++k) {
      if (!std::isfinite(out[k]) || !std::isfinite(out[a + k])) {
        throw PolicyDivergence("actor network produced non-finite output");
      }
      sigma[k] = softplus(out[a + k]) + sigma_floor();
    }
  }

  ActionRecord sample_action(std::span<const double> s, Rng& rng) const {
    std::vector<double> mean, sigma;
    distribution(s, mean, sigma);
    std::normal_distribution<double> normal(0.0, 1.0);
    ActionRecord rec;
    rec.action.resize(action_dim());
    for (std::size_t k = 0; k < action_dim(); ++k) {
      rec.action[k] = mean[k] + sigma[k] * normal(rng);
    }
    fill_density(mean, sigma, rec);
    return rec;
  }

  // Deterministic action at the mean, scored under the same distribution.
  ActionRecord mean_action(std::span<const double> s) const {
    std::vector<double> mean, sigma;
    distribution(s, mean, sigma);
    ActionRecord rec;
    rec.action = mean;
    fill_density(mean, sigma, rec);
    return rec;
  }

  std::vector<double> log_prob(std::span<const double> s,
                               std::span<const double> action) const {
    if (action.size() != action_dim()) {
      throw ShapeError("action has " + std::to_string(action.size()) +
                       " entries, expected " + std::to_string(action_dim()));
    }
    std::vector<double> mean, sigma;
    distribution(s, mean, sigma);
    std::vector<double> logp(n_agents_, 0.0);
    for (std::size_t k = 0; k < action_dim(); ++k) {
      logp[k / dim_a0_] += gaussian_log_density(action[k], mean[k], sigma[k]);
    }
    return logp;
  }

  // Batched evaluation that records the network tape for backward().
  PolicyEvaluation evaluate(const Matrix& states, const Matrix& actions) {
    if (actions.cols() != static_cast<Eigen::Index>(action_dim()) ||
        actions.rows() != states.rows()) {
      throw ShapeError("action batch shape mismatch");
    }
    PolicyEvaluation ev;
    split_head(net_.forward(states), ev.mean, ev.pre_sigma, ev.sigma);
    const Eigen::Index batch = states.rows();
    ev.logp = Matrix::Zero(batch, static_cast<Eigen::Index>(n_agents_));
    ev.entropy = Vector::Zero(batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
      for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(action_dim());
           ++k) {
        const double sd = ev.sigma(b, k);
        ev.logp(b, k / static_cast<Eigen::Index>(dim_a0_)) +=
            gaussian_log_density(actions(b, k), ev.mean(b, k), sd);
        ev.entropy(b) += 0.5 + kLogSqrtTwoPi + std::log(sd);
      }
    }
    return ev;
  }

  // Backpropagates d(loss)/d(logp) [batch x n_agents] and
  // d(loss)/d(entropy) [batch] through the Gaussian head into the net.
  void backward(const PolicyEvaluation& ev, const Matrix& actions,
                const Matrix& dlogp, const Vector& dentropy) {
    const Eigen::Index batch = ev.mean.rows();
    const auto a = static_cast<Eigen::Index>(action_dim());
    const auto d0 = static_cast<Eigen::Index>(dim_a0_);
    Matrix grad(batch, 2 * a);
    for (Eigen::Index b = 0; b < batch; ++b) {
      for (Eigen::Index k = 0; k < a; ++k) {
        const double sd = ev.sigma(b, k);
        const double z = (actions(b, k) - ev.mean(b, k)) / sd;
        const double g_logp = dlogp(b, k / d0);
        const double d_mean = g_logp * z / sd;
        const double d_sigma = g_logp * (z * z - 1.0) / sd + dentropy(b) / sd;
        grad(b, k) = d_mean;
        grad(b, a + k) = d_sigma * sigmoid(ev.pre_sigma(b, k));
      }
    }
    net_.backward(grad);
  }

  static double gaussian_log_density(double x, double mean, double sigma) {
    const double z = (x - mean) / sigma;
    return -0.5 * z * z - std::log(sigma) - kLogSqrtTwoPi;
  }

  Checkpoint to_checkpoint() const {
    Checkpoint c;
    c.meta = {{"kind", "gaussian_policy"},
              {"n_agents", n_agents_},
              {"dim_a0", dim_a0_},
              {"log_std_floor", log_std_floor_},
              {"topology", topology_json(net_)}};
    append_tensors(c, net_);
    return c;
  }

  static GaussianPolicy from_checkpoint(const Checkpoint& c) {
    if (c.meta.value("kind", "") != "gaussian_policy") {
      throw ConfigError("checkpoint does not hold a gaussian policy");
    }
    return GaussianPolicy(restore_mlp(c, c.meta.at("topology"), "actor"),
                          c.meta.at("n_agents").get<std::size_t>(),
                          c.meta.at("dim_a0").get<std::size_t>(),
                          c.meta.at("log_std_floor").get<double>());
  }

 private:
  void check_state(std::size_t n) const {
    if (n != state_dim()) {
      throw ShapeError("state has " + std::to_string(n) +
                       " entries, expected " + std::to_string(state_dim()));
    }
  }

  void fill_density(const std::vector<double>& mean,
                    const std::vector<double>& sigma, ActionRecord& rec) const {
    rec.per_agent_logp.assign(n_agents_, 0.0);
    rec.entropy = 0.0;
    for (std::size_t k = 0; k < action_dim(); ++k) {
      rec.per_agent_logp[k / dim_a0_] +=
          gaussian_log_density(rec.action[k], mean[k], sigma[k]);
      rec.entropy += 0.5 + kLogSqrtTwoPi + std::log(sigma[k]);
    }
  }

  Mlp net_;
  std::size_t n_agents_ = 1;
  std::size_t dim_a0_ = 1;
  double log_std_floor_ = -5.0;
};

// Contiguous per-agent slices of the long action vector.
inline std::vector<std::vector<double>> split_action(
    std::span<const double> action, std::size_t n_agents, std::size_t dim_a0) {
  if (n_agents == 0 || dim_a0 == 0 || action.size() != n_agents * dim_a0) {
    throw ShapeError("action of length " + std::to_string(action.size()) +
                     " cannot be split into " + std::to_string(n_agents) +
                     " slices of " + std::to_string(dim_a0));
  }
  std::vector<std::vector<double>> out(n_agents);
  for (std::size_t i = 0; i < n_agents; ++i) {
    auto first = action.begin() + static_cast<std::ptrdiff_t>(i * dim_a0);
    out[i].assign(first, first + static_cast<std::ptrdiff_t>(dim_a0));
  }
  return out;
}

inline std::vector<double> concat_actions(
    const std::vector<std::vector<double>>& parts) {
  std::vector<double> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

}  // namespace polymorph

#endif  // POLYMORPH_POLICY_HPP_
