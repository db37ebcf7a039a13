#include <gtest/gtest.h>

#include <cmath>

#include "polymorph/advantage.hpp"
#include "polymorph/oracles.hpp"
#include "polymorph/policy.hpp"

namespace polymorph {
namespace {

Matrix column(std::initializer_list<double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index k = 0;
  for (double x : v) m(k++, 0) = x;
  return m;
}

TEST(Returns, GeometricTerminal) {
  const Matrix g = discounted_returns(column({1, 1, 1}), 0.5, Vector::Zero(1));
  EXPECT_DOUBLE_EQ(g(0, 0), 1.75);
  EXPECT_DOUBLE_EQ(g(1, 0), 1.5);
  EXPECT_DOUBLE_EQ(g(2, 0), 1.0);
}

TEST(Returns, UndiscountedCountdown) {
  const Matrix g = discounted_returns(column({1, 1, 1, 1}), 1.0, Vector::Zero(1));
  EXPECT_EQ(g, column({4, 3, 2, 1}));
}

TEST(Returns, MatchBruteForceWithBootstrap) {
  Rng rng(31);
  std::uniform_int_distribution<int> len(1, 40), agents(1, 4);
  std::uniform_real_distribution<double> u(-3.0, 3.0), gam(0.5, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int t_len = len(rng), n = agents(rng);
    const double gamma = gam(rng);
    Matrix r(t_len, n);
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(t_len),
                                          std::vector<double>(static_cast<std::size_t>(n)));
    for (int t = 0; t < t_len; ++t) {
      for (int i = 0; i < n; ++i) rows[t][i] = r(t, i) = u(rng);
    }
    const bool terminal = trial % 2 == 0;
    Vector tail = Vector::Zero(n);
    std::vector<double> tail_v(static_cast<std::size_t>(n), 0.0);
    if (!terminal) {
      for (int i = 0; i < n; ++i) tail_v[i] = tail[i] = u(rng);
    }
    const Matrix g = discounted_returns(r, gamma, tail);
    const auto ref = oracle::brute_force_returns(rows, gamma, tail_v);
    for (int t = 0; t < t_len; ++t) {
      for (int i = 0; i < n; ++i) EXPECT_NEAR(g(t, i), ref[t][i], 1e-12);
    }
  }
}

// Buffer form: several segments, per-agent terminal masks and bootstraps.
TEST(Returns, BufferFormMatchesPerSegmentBruteForce) {
  Rng rng(32);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::bernoulli_distribution coin(0.15);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index steps = 30, n = 3;
    const double gamma = 0.97;
    Matrix r(steps, n), next_v(steps, n);
    Eigen::MatrixXi term = Eigen::MatrixXi::Zero(steps, n);
    Flags seg(static_cast<std::size_t>(steps), false);
    for (Eigen::Index t = 0; t < steps; ++t) {
      seg[static_cast<std::size_t>(t)] = coin(rng);
      for (Eigen::Index i = 0; i < n; ++i) {
        r(t, i) = u(rng);
        next_v(t, i) = u(rng);
        if (seg[static_cast<std::size_t>(t)] && coin(rng)) term(t, i) = 1;
      }
    }
    const Matrix g = discounted_returns(r, gamma, term, seg, next_v);
    Eigen::Index start = 0;
    for (Eigen::Index t = 0; t < steps; ++t) {
      if (!seg[static_cast<std::size_t>(t)] && t + 1 != steps) continue;
      std::vector<std::vector<double>> rows;
      for (Eigen::Index k = start; k <= t; ++k) {
        rows.push_back({r(k, 0), r(k, 1), r(k, 2)});
      }
      std::vector<double> tail(3);
      for (Eigen::Index i = 0; i < n; ++i) tail[i] = term(t, i) ? 0.0 : next_v(t, i);
      const auto ref = oracle::brute_force_returns(rows, gamma, tail);
      for (Eigen::Index k = start; k <= t; ++k) {
        for (Eigen::Index i = 0; i < n; ++i) {
          EXPECT_NEAR(g(k, i), ref[static_cast<std::size_t>(k - start)][i], 1e-12);
        }
      }
      start = t + 1;
    }
  }
}

TEST(Returns, ShapeErrors) {
  EXPECT_THROW(discounted_returns(Matrix(0, 1), 0.9, Vector::Zero(1)), ShapeError);
  EXPECT_THROW(discounted_returns(column({1, 2}), 0.9, Vector::Zero(2)), ShapeError);
}

TEST(Advantage, PlugIn) {
  const auto a = advantage(std::vector<double>{1.0}, std::vector<double>{1.0},
                           std::vector<double>{2.0}, 0.99, Flags{false});
  EXPECT_NEAR(a[0], 1.98, 1e-15);
}

TEST(Advantage, TerminalMasksNextValue) {
  for (double vn : {-100.0, 0.0, 3.0, 1e9}) {
    const auto a = advantage(std::vector<double>{1.0}, std::vector<double>{1.0},
                             std::vector<double>{vn}, 0.99, Flags{true});
    EXPECT_EQ(a[0], 0.0);
  }
}

TEST(Advantage, VectorEqualsScalars) {
  const std::vector<double> r = {0.5, -1.0, 2.0}, v = {1.0, 0.3, -0.2}, vn = {0.7, 2.0, 1.1};
  const Flags done = {false, true, false};
  const auto joint = advantage(r, v, vn, 0.9, done);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto one = advantage(std::vector<double>{r[i]}, std::vector<double>{v[i]},
                               std::vector<double>{vn[i]}, 0.9, Flags{done[i]});
    EXPECT_EQ(joint[i], one[0]);
  }
}

TEST(Advantage, LengthMismatch) {
  EXPECT_THROW(advantage(std::vector<double>{1, 2}, std::vector<double>{1},
                         std::vector<double>{1, 2}, 0.9, Flags{false, false}),
               ShapeError);
}

TEST(Advantage, MatrixFormMatchesVectorForm) {
  const Matrix r = Matrix::Random(6, 2), v = Matrix::Random(6, 2), vn = Matrix::Random(6, 2);
  Eigen::MatrixXi term = Eigen::MatrixXi::Zero(6, 2);
  term(2, 1) = 1;
  term(5, 0) = 1;
  const Matrix a = advantages(r, v, vn, term, 0.95);
  for (Eigen::Index t = 0; t < 6; ++t) {
    const auto row = advantage(std::vector<double>{r(t, 0), r(t, 1)},
                               std::vector<double>{v(t, 0), v(t, 1)},
                               std::vector<double>{vn(t, 0), vn(t, 1)}, 0.95,
                               Flags{term(t, 0) != 0, term(t, 1) != 0});
    EXPECT_EQ(a(t, 0), row[0]);
    EXPECT_EQ(a(t, 1), row[1]);
  }
}

TEST(Advantage, NormalizeColumns) {
  Matrix a = Matrix::Random(50, 3) * 7.0;
  a.col(2).array() += 100.0;
  std::vector<double> m, s;
  normalize_columns(a, m, s);
  for (Eigen::Index i = 0; i < 3; ++i) {
    EXPECT_NEAR(a.col(i).mean(), 0.0, 1e-12);
    EXPECT_NEAR(std::sqrt(a.col(i).array().square().mean()), 1.0, 1e-6);
  }
  EXPECT_GT(m[2], 90.0);
}

TEST(Stack, RepeatsPerAgent) {
  Matrix a(1, 2);
  a << 3.0, -4.0;
  Matrix expected(1, 4);
  expected << 3.0, 3.0, -4.0, -4.0;
  EXPECT_EQ(stack_advantages(a, 2), expected);
}

TEST(Stack, UnitWidthIsIdentity) {
  const Matrix a = Matrix::Random(5, 3);
  EXPECT_EQ(stack_advantages(a, 1), a);
}

TEST(Stack, RejectsZeroWidth) {
  EXPECT_THROW(stack_advantages(Matrix::Ones(1, 2), 0), ShapeError);
}

TEST(Stack, WidthEqualsPolicyActionWidth) {
  for (std::size_t n = 1; n <= 8; ++n) {
    for (std::size_t d0 : {1u, 3u, 4u}) {
      Rng rng(n * 10 + d0);
      PolicySpec ps;
      ps.state_dim = 12 * n;
      ps.n_agents = n;
      ps.dim_a0 = d0;
      ps.hidden = {4};
      const GaussianPolicy p(ps, rng);
      const Matrix per_agent = Matrix::Random(2, static_cast<Eigen::Index>(n));
      EXPECT_EQ(static_cast<std::size_t>(stack_advantages(per_agent, d0).cols()),
                p.action_dim());
    }
  }
}

double surrogate_single(double ratio, double adv, double eps) {
  return clipped_surrogate_objective(Matrix::Constant(1, 1, ratio),
                                     Matrix::Constant(1, 1, adv), eps)
      .objective;
}

TEST(Clip, UpperBranch) { EXPECT_DOUBLE_EQ(surrogate_single(1.3, 1.0, 0.2), 1.2); }

TEST(Clip, LowerBranchNegativeAdvantage) {
  EXPECT_DOUBLE_EQ(surrogate_single(0.5, -1.0, 0.2), -0.8);
}

TEST(Clip, FourBranchTable) {
  struct Case {
    double r, a, objective, grad;
  };
  const double eps = 0.2;
  const std::vector<Case> table = {
      {1.5, 2.0, 1.2 * 2.0, 0.0},    // A>0, above band: clipped, saturated
      {0.5, 2.0, 0.5 * 2.0, 2.0},    // A>0, below band: unclipped
      {1.5, -2.0, 1.5 * -2.0, -2.0}, // A<0, above band: unclipped
      {0.5, -2.0, 0.8 * -2.0, 0.0},  // A<0, below band: clipped, saturated
      {1.5, 0.0, 0.0, 0.0},          // A=0 above
      {0.5, 0.0, 0.0, 0.0},          // A=0 below
  };
  for (const Case& c : table) {
    const SurrogateResult s = clipped_surrogate_objective(
        Matrix::Constant(1, 1, c.r), Matrix::Constant(1, 1, c.a), eps);
    EXPECT_EQ(s.objective, std::min(c.r * c.a, std::clamp(c.r, 1 - eps, 1 + eps) * c.a));
    EXPECT_DOUBLE_EQ(s.objective, c.objective);
    EXPECT_EQ(s.d_objective_d_ratio(0, 0), c.grad) << c.r << " " << c.a;
  }
}

TEST(Clip, GradientMatchesFiniteDifferencesAwayFromKinks) {
  Rng rng(8);
  std::uniform_real_distribution<double> ur(0.3, 1.8), ua(-3.0, 3.0);
  const double eps = 0.2;
  for (int trial = 0; trial < 200; ++trial) {
    Matrix r(3, 4), a(3, 4);
    for (Eigen::Index k = 0; k < r.size(); ++k) {
      do {
        r.data()[k] = ur(rng);
      } while (std::abs(r.data()[k] - 0.8) < 1e-3 || std::abs(r.data()[k] - 1.2) < 1e-3);
      a.data()[k] = ua(rng);
    }
    const SurrogateResult s = clipped_surrogate_objective(r, a, eps);
    std::vector<double*> ptrs;
    for (Eigen::Index k = 0; k < r.size(); ++k) ptrs.push_back(r.data() + k);
    const auto fd = oracle::central_difference(
        [&]() { return clipped_surrogate_objective(r, a, eps).objective; }, ptrs, 1e-6);
    for (Eigen::Index k = 0; k < r.size(); ++k) {
      EXPECT_NEAR(s.d_objective_d_ratio.data()[k], fd[static_cast<std::size_t>(k)], 1e-8);
    }
  }
}

TEST(Clip, SaturatedElementsHaveZeroGradient) {
  Rng rng(9);
  std::uniform_real_distribution<double> above(1.2001, 3.0), pos(0.01, 5.0);
  for (int k = 0; k < 100; ++k) {
    const SurrogateResult s = clipped_surrogate_objective(
        Matrix::Constant(1, 1, above(rng)), Matrix::Constant(1, 1, pos(rng)), 0.2);
    EXPECT_EQ(s.d_objective_d_ratio(0, 0), 0.0);
  }
}

TEST(Clip, UnitRatioGivesMeanAdvantage) {
  const Matrix a = Matrix::Random(7, 6);
  double sum = 0.0;
  for (Eigen::Index b = 0; b < 7; ++b) {
    for (Eigen::Index c = 0; c < 6; ++c) sum += a(b, c);
  }
  const double mean = sum / 42.0;
  EXPECT_EQ(clipped_surrogate_objective(Matrix::Ones(7, 6), a, 0.2).objective, mean);
  EXPECT_EQ(clipped_surrogate(Matrix::Ones(7, 6), a, 0.2), -mean);
  EXPECT_NEAR(mean, a.mean(), 1e-15);
}

TEST(Clip, ShapeMismatch) {
  EXPECT_THROW(clipped_surrogate(Matrix::Ones(2, 3), Matrix::Ones(2, 2), 0.2), ShapeError);
}

TEST(ActorLoss, NoEntropyTerm) { EXPECT_EQ(actor_loss(0.75, 3.0, 0.0), -0.75); }

TEST(ActorLoss, MonotoneInEntropy) {
  double previous = actor_loss(0.4, -10.0, 0.01);
  for (double h = -9.0; h <= 10.0; h += 1.0) {
    const double l = actor_loss(0.4, h, 0.01);
    EXPECT_LT(l, previous);
    previous = l;
  }
}

TEST(LossConfig, GammaRange) {
  LossConfig c;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.gamma = 1.0;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 1.01;
  EXPECT_THROW(c.validate(), ConfigError);
}

// Full actor loss through the policy: analytic parameter gradient vs FD.
struct ActorProblem {
  GaussianPolicy policy;
  Matrix states, actions, logp_old, stacked;
  double eps = 0.2, c2 = 0.01;

  double loss() {
    const PolicyEvaluation ev = policy.evaluate(states, actions);
    const Matrix ratio = broadcast_ratio((ev.logp - logp_old).array().exp().matrix(),
                                         policy.dim_a0());
    return actor_loss(clipped_surrogate_objective(ratio, stacked, eps).objective,
                      ev.entropy.mean(), c2);
  }

  void backward() {
    policy.net().zero_grad();
    const PolicyEvaluation ev = policy.evaluate(states, actions);
    const Matrix agent_ratio = (ev.logp - logp_old).array().exp().matrix();
    const SurrogateResult s =
        clipped_surrogate_objective(broadcast_ratio(agent_ratio, policy.dim_a0()), stacked, eps);
    const auto d0 = static_cast<Eigen::Index>(policy.dim_a0());
    Matrix dlogp(agent_ratio.rows(), agent_ratio.cols());
    for (Eigen::Index b = 0; b < dlogp.rows(); ++b) {
      for (Eigen::Index i = 0; i < dlogp.cols(); ++i) {
        dlogp(b, i) = -s.d_objective_d_ratio.row(b).segment(i * d0, d0).sum() * agent_ratio(b, i);
      }
    }
    policy.backward(ev, actions, dlogp,
                    Vector::Constant(states.rows(), -c2 / static_cast<double>(states.rows())));
  }
};

ActorProblem make_problem(std::uint64_t seed, std::size_t n, std::size_t d0) {
  Rng rng(seed);
  PolicySpec ps;
  ps.state_dim = 5;
  ps.n_agents = n;
  ps.dim_a0 = d0;
  ps.hidden = {6};
  ActorProblem p{GaussianPolicy(ps, rng), {}, {}, {}, {}};
  const Eigen::Index b = 4;
  const auto a = static_cast<Eigen::Index>(n * d0);
  std::normal_distribution<double> g;
  p.states.resize(b, 5);
  p.actions.resize(b, a);
  for (Eigen::Index k = 0; k < p.states.size(); ++k) p.states.data()[k] = g(rng);
  for (Eigen::Index k = 0; k < p.actions.size(); ++k) p.actions.data()[k] = g(rng);
  // Old log-probs near the current ones so ratios straddle the clip band.
  const PolicyEvaluation ev = p.policy.evaluate(p.states, p.actions);
  std::uniform_real_distribution<double> shift(-0.4, 0.4);
  p.logp_old = ev.logp;
  for (Eigen::Index k = 0; k < p.logp_old.size(); ++k) p.logp_old.data()[k] += shift(rng);
  Matrix per_agent(b, static_cast<Eigen::Index>(n));
  for (Eigen::Index k = 0; k < per_agent.size(); ++k) per_agent.data()[k] = g(rng);
  p.stacked = stack_advantages(per_agent, d0);
  return p;
}

TEST(ActorLoss, ParameterGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    ActorProblem p = make_problem(seed, 2, 3);
    p.backward();
    std::vector<double*> ptrs;
    std::vector<double> analytic;
    for (ParamTensor* t : p.policy.net().parameters()) {
      for (std::size_t k = 0; k < t->size(); ++k) {
        ptrs.push_back(&t->values[k]);
        analytic.push_back(t->grad[k]);
      }
    }
    const auto fd = oracle::central_difference([&]() { return p.loss(); }, ptrs, 1e-6);
    for (std::size_t k = 0; k < fd.size(); ++k) {
      EXPECT_LT(oracle::relative_error(analytic[k], fd[k], 1e-4), 1e-4)
          << "seed " << seed << " param " << k;
    }
  }
}

TEST(ActorLoss, ZeroAdvantageForAgentGivesZeroHeadGradient) {
  ActorProblem p = make_problem(3, 3, 2);
  p.c2 = 0.0;
  p.stacked.middleCols(2, 2).setZero();  // agent 1
  p.backward();
  const DenseLayer& head = p.policy.net().layers().back();
  const std::size_t a = p.policy.action_dim();
  const std::size_t in = head.in_dim();
  for (std::size_t row : {2u, 3u}) {
    for (std::size_t off : {std::size_t{0}, a}) {
      for (std::size_t c = 0; c < in; ++c) {
        EXPECT_EQ(head.weight.grad[(row + off) * in + c], 0.0);
      }
      EXPECT_EQ(head.bias.grad[row + off], 0.0);
    }
  }
  double other = 0.0;
  for (std::size_t c = 0; c < in; ++c) other += std::abs(head.weight.grad[c]);
  EXPECT_GT(other, 0.0);
}

}  // namespace
}  // namespace polymorph
