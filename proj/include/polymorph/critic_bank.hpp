#ifndef POLYMORPH_CRITIC_BANK_HPP_
#define POLYMORPH_CRITIC_BANK_HPP_

// Value-estimation assemblies.
//
//   Single : one net -> V(s); trained on the summed reward stream.
//   Multi  : n nets, net i -> V^i(s); trained on agent i's reward stream.
//   Hybrid : one net -> (v_1 .. v_n) from its last layer.
//
// Every net sees the full merged state. Reward is only a training target.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "polymorph/checkpoint.hpp"
#include "polymorph/errors.hpp"
#include "polymorph/nn.hpp"

namespace polymorph {

enum class CriticKind { kSingle, kMulti, kHybrid };

inline std::string_view to_string(CriticKind k) {
  switch (k) {
    case CriticKind::kSingle: return "single";
    case CriticKind::kMulti: return "multi";
    case CriticKind::kHybrid: return "hybrid";
  }
  return "single";
}

inline CriticKind critic_kind_from_string(std::string_view s) {
  if (s == "single") return CriticKind::kSingle;
  if (s == "multi") return CriticKind::kMulti;
  if (s == "hybrid") return CriticKind::kHybrid;
  throw ConfigError("architecture: expected one of single, multi, hybrid; got '" +
                    std::string(s) + "'");
}

struct CriticBankSpec {
  CriticKind kind = CriticKind::kMulti;
  std::size_t n_agents = 1;
  std::size_t state_dim = 1;
  std::vector<std::size_t> hidden = {64, 64};
  Activation activation = Activation::kTanh;
  // Multi only: optional per-critic hidden layouts (empty = use `hidden`).
  std::vector<std::vector<std::size_t>> per_critic_hidden;
  double learning_rate = 1e-3;
};

class CriticBank {
 public:
  CriticBank() = default;

  CriticBank(const CriticBankSpec& spec, Rng& rng)
      : kind_(spec.kind),
        n_agents_(spec.n_agents),
        state_dim_(spec.state_dim),
        hidden_(spec.hidden),
        activation_(spec.activation),
        learning_rate_(spec.learning_rate) {
    if (spec.n_agents == 0) throw ShapeError("critic bank needs n_agents >= 1");
    if (kind_ == CriticKind::kMulti) {
      if (!spec.per_critic_hidden.empty() &&
          spec.per_critic_hidden.size() != spec.n_agents) {
        throw ConfigError("per_critic_hidden must list one layout per agent");
      }
      for (std::size_t i = 0; i < n_agents_; ++i) {
        const auto& h = spec.per_critic_hidden.empty()
                            ? spec.hidden
                            : spec.per_critic_hidden[i];
        nets_.push_back(make_net(h, 1, rng));
      }
    } else {
      const std::size_t out =
          kind_ == CriticKind::kSingle ? 1 : spec.n_agents;
      nets_.push_back(make_net(spec.hidden, out, rng));
    }
    optimizers_.assign(nets_.size(), OptimizerState::adam(learning_rate_));
    check_invariants();
  }

  CriticKind kind() const { return kind_; }
  std::size_t n_agents() const { return n_agents_; }
  std::size_t state_dim() const { return state_dim_; }
  // Length of the value vector: 1 for Single, n_agents otherwise.
  std::size_t value_count() const {
    return kind_ == CriticKind::kSingle ? 1 : n_agents_;
  }
  const std::vector<Mlp>& nets() const { return nets_; }
  std::vector<Mlp>& nets() { return nets_; }
  std::vector<OptimizerState>& optimizers() { return optimizers_; }

  std::vector<double> estimate_values(std::span<const double> s) const {
    check_state(s.size());
    if (kind_ != CriticKind::kMulti) return nets_.front().predict(s);
    std::vector<double> v;
    v.reserve(nets_.size());
    for (const Mlp& net : nets_) v.push_back(net.predict(s).front());
    return v;
  }

  // batch x value_count
  Matrix estimate_values(const Matrix& states) const {
    check_state(static_cast<std::size_t>(states.cols()));
    if (kind_ != CriticKind::kMulti) return nets_.front().predict(states);
    Matrix v(states.rows(), static_cast<Eigen::Index>(nets_.size()));
    for (std::size_t i = 0; i < nets_.size(); ++i) {
      v.col(static_cast<Eigen::Index>(i)) = nets_[i].predict(states).col(0);
    }
    return v;
  }

  // Mean squared error per value head; `returns` is batch x value_count.
  std::vector<double> critic_loss(const Matrix& states,
                                  const Matrix& returns) const {
    check_targets(states, returns);
    const Matrix diff = returns - estimate_values(states);
    std::vector<double> out(value_count());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = diff.col(static_cast<Eigen::Index>(i)).squaredNorm() /
               static_cast<double>(states.rows());
    }
    return out;
  }

  std::vector<double> critic_loss(std::span<const double> s,
                                  std::span<const double> g) const {
    Matrix states(1, static_cast<Eigen::Index>(s.size()));
    for (std::size_t k = 0; k < s.size(); ++k) states(0, static_cast<Eigen::Index>(k)) = s[k];
    Matrix targets(1, static_cast<Eigen::Index>(g.size()));
    for (std::size_t k = 0; k < g.size(); ++k) targets(0, static_cast<Eigen::Index>(k)) = g[k];
    return critic_loss(states, targets);
  }

  // One gradient step on every critic; returns the pre-step losses.
  std::vector<double> train_step(const Matrix& states, const Matrix& returns) {
    check_targets(states, returns);
    std::vector<double> losses(value_count());
    if (kind_ == CriticKind::kMulti) {
      for (std::size_t i = 0; i < nets_.size(); ++i) {
        losses[i] = train_critic(i, states, returns.col(static_cast<Eigen::Index>(i)));
      }
      return losses;
    }
    Mlp& net = nets_.front();
    const Matrix diff = returns - net.forward(states);
    const double inv_b = 1.0 / static_cast<double>(states.rows());
    for (std::size_t i = 0; i < losses.size(); ++i) {
      losses[i] = diff.col(static_cast<Eigen::Index>(i)).squaredNorm() * inv_b;
    }
    check_finite_losses(losses);
    net.backward(-2.0 * inv_b * diff);
    optimizer_step(net, optimizers_.front());
    return losses;
  }

  // Multi only: a step on critic i alone. Other critics are not touched.
  double train_critic(std::size_t i, const Matrix& states, const Vector& target) {
    if (kind_ != CriticKind::kMulti) {
      throw UnsupportedArchitecture("train_critic needs a multi-critic bank");
    }
    if (i >= nets_.size()) throw ShapeError("critic index out of range");
    if (target.size() != states.rows()) throw ShapeError("target length mismatch");
    Mlp& net = nets_[i];
    const Matrix diff = target - net.forward(states).col(0);
    const double inv_b = 1.0 / static_cast<double>(states.rows());
    const double loss = diff.squaredNorm() * inv_b;
    check_finite_losses(std::vector<double>{loss});
    net.backward(-2.0 * inv_b * diff);
    optimizer_step(net, optimizers_[i]);
    return loss;
  }

  void add_critic(std::size_t at, Rng& rng,
                  std::optional<std::vector<std::size_t>> hidden = std::nullopt) {
    require_multi("add_critic");
    if (at > nets_.size()) throw ShapeError("add_critic index out of range");
    const auto pos = static_cast<std::ptrdiff_t>(at);
    nets_.insert(nets_.begin() + pos, make_net(hidden.value_or(hidden_), 1, rng));
    optimizers_.insert(optimizers_.begin() + pos,
                       OptimizerState::adam(learning_rate_));
    ++n_agents_;
    check_invariants();
  }

  void remove_critic(std::size_t at) {
    require_multi("remove_critic");
    if (at >= nets_.size()) throw ShapeError("remove_critic index out of range");
    if (nets_.size() == 1) throw ShapeError("cannot remove the last critic");
    const auto pos = static_cast<std::ptrdiff_t>(at);
    nets_.erase(nets_.begin() + pos);
    optimizers_.erase(optimizers_.begin() + pos);
    --n_agents_;
    check_invariants();
  }

  Checkpoint to_checkpoint() const {
    Checkpoint c;
    nlohmann::json topo = nlohmann::json::array();
    for (const Mlp& net : nets_) topo.push_back(topology_json(net));
    c.meta = {{"kind", "critic_bank"},
              {"architecture", std::string(to_string(kind_))},
              {"n_agents", n_agents_},
              {"learning_rate", learning_rate_},
              {"critics", topo}};
    for (std::size_t i = 0; i < nets_.size(); ++i) {
      // Tensor names carry the critic index so per-critic topologies restore.
      for (const ParamTensor* p : nets_[i].parameters()) {
        ParamTensor t = *p;
        t.name = "critic" + std::to_string(i) + "." + t.name;
        c.tensors.push_back(std::move(t));
      }
    }
    return c;
  }

  static CriticBank from_checkpoint(const Checkpoint& c) {
    if (c.meta.value("kind", "") != "critic_bank") {
      throw ConfigError("checkpoint does not hold a critic bank");
    }
    CriticBank bank;
    bank.kind_ = critic_kind_from_string(c.meta.at("architecture").get<std::string>());
    bank.n_agents_ = c.meta.at("n_agents").get<std::size_t>();
    bank.learning_rate_ = c.meta.at("learning_rate").get<double>();
    const auto& topo = c.meta.at("critics");
    for (std::size_t i = 0; i < topo.size(); ++i) {
      bank.nets_.push_back(restore_mlp(
          c, topo[i], "critic" + std::to_string(i) + ".critic"));
    }
    bank.state_dim_ = bank.nets_.front().input_dim();
    bank.hidden_ = bank.nets_.front().spec().hidden;
    bank.activation_ = bank.nets_.front().spec().hidden_activation;
    bank.optimizers_.assign(bank.nets_.size(),
                            OptimizerState::adam(bank.learning_rate_));
    bank.check_invariants();
    return bank;
  }

 private:
  Mlp make_net(const std::vector<std::size_t>& hidden, std::size_t out,
               Rng& rng) const {
    MlpSpec m;
    m.input_dim = state_dim_;
    m.hidden = hidden;
    m.output_dim = out;
    m.hidden_activation = activation_;
    return Mlp(m, rng, "critic");
  }

  void require_multi(const char* op) const {
    if (kind_ != CriticKind::kMulti) {
      throw UnsupportedArchitecture(std::string(op) + " is only supported by " +
                                    "the multi-critic architecture, not " +
                                    std::string(to_string(kind_)));
    }
  }

  void check_state(std::size_t n) const {
    if (n != state_dim_) {
      throw ShapeError("critic input has " + std::to_string(n) +
                       " entries, expected " + std::to_string(state_dim_));
    }
  }

  void check_targets(const Matrix& states, const Matrix& returns) const {
    check_state(static_cast<std::size_t>(states.cols()));
    if (returns.rows() != states.rows() ||
        returns.cols() != static_cast<Eigen::Index>(value_count())) {
      throw ShapeError("return targets must be batch x " +
                       std::to_string(value_count()) + " for a " +
                       std::string(to_string(kind_)) + " bank");
    }
  }

  static void check_finite_losses(const std::vector<double>& losses) {
    for (double l : losses) {
      if (!std::isfinite(l)) throw NumericError("critic loss is not finite");
    }
  }

  void check_invariants() const {
    switch (kind_) {
      case CriticKind::kSingle:
        if (nets_.size() != 1 || nets_[0].output_dim() != 1) {
          throw ShapeError("single bank must hold one net with one output");
        }
        break;
      case CriticKind::kMulti:
        if (nets_.size() != n_agents_) {
          throw ShapeError("multi bank must hold one net per agent");
        }
        for (const Mlp& n : nets_) {
          if (n.output_dim() != 1) throw ShapeError("multi critic output must be 1");
        }
        break;
      case CriticKind::kHybrid:
        if (nets_.size() != 1 || nets_[0].output_dim() != n_agents_) {
          throw ShapeError("hybrid bank must hold one net with n outputs");
        }
        break;
    }
    for (const Mlp& n : nets_) {
      if (n.input_dim() != state_dim_) {
        throw ShapeError("every critic must take the merged state");
      }
    }
  }

  CriticKind kind_ = CriticKind::kMulti;
  std::size_t n_agents_ = 1;
  std::size_t state_dim_ = 1;
  std::vector<std::size_t> hidden_ = {64, 64};
  Activation activation_ = Activation::kTanh;
  double learning_rate_ = 1e-3;
  std::vector<Mlp> nets_;
  std::vector<OptimizerState> optimizers_;
};

}  // namespace polymorph

#endif  // POLYMORPH_CRITIC_BANK_HPP_
