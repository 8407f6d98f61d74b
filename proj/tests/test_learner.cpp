#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "dvrl/ddpg.hpp"

using dvrl::Checkpoint;
using dvrl::DdpgAgent;
using dvrl::EnvConfig;
using dvrl::EnvKind;
using dvrl::Mlp;
using dvrl::TrainerConfig;
using dvrl::TransitionBatch;

namespace {

// Scalar toy agent: 1-d observation and action, single linear layers with
// hand-set parameters, so the losses can be recomputed with plain scalar
// arithmetic.
Checkpoint toy_checkpoint(double wa, double ba, double wc_s, double wc_a,
                          double bc) {
  std::mt19937_64 rng(0);
  Checkpoint ck;
  ck.env = EnvConfig::defaults(EnvKind::Reach);
  ck.actor = Mlp::create({1, 1}, Mlp::Output::Tanh, rng);
  ck.critic = Mlp::create({2, 1}, Mlp::Output::Linear, rng);
  ck.actor.weights()[0](0, 0) = wa;
  ck.actor.biases()[0][0] = ba;
  ck.critic.weights()[0](0, 0) = wc_s;
  ck.critic.weights()[0](0, 1) = wc_a;
  ck.critic.biases()[0][0] = bc;
  ck.actor_target = ck.actor;
  ck.critic_target = ck.critic;
  return ck;
}

TransitionBatch batch1(double s, double a, double r, double s2) {
  TransitionBatch b;
  b.obs = Eigen::MatrixXd::Constant(1, 1, s);
  b.actions = Eigen::MatrixXd::Constant(1, 1, a);
  b.rewards = Eigen::VectorXd::Constant(1, r);
  b.next_obs = Eigen::MatrixXd::Constant(1, 1, s2);
  return b;
}

}  // namespace

TEST_CASE("critic loss matches the scalar Bellman computation") {
  TrainerConfig tc;
  tc.gamma = 0.5;
  tc.lr = 0.0;  // keep parameters fixed; Adam still counts the step
  DdpgAgent agent(toy_checkpoint(0.5, 0.0, 1.0, -1.0, 0.25), tc);

  const double s = 0.2, a = 0.3, r = -1.0, s2 = 0.4;
  const double a2 = std::tanh(0.5 * s2);
  const double q2 = 1.0 * s2 - 1.0 * a2 + 0.25;
  double y = r + 0.5 * q2;
  y = std::clamp(y, -1.0 / (1.0 - 0.5), 0.0);
  const double q = 1.0 * s - 1.0 * a + 0.25;
  const double want = (q - y) * (q - y);

  const double got = agent.critic_update(batch1(s, a, r, s2));
  REQUIRE(got == Catch::Approx(want).epsilon(1e-12));
}

TEST_CASE("critic targets are clipped to the sparse return range") {
  TrainerConfig tc;
  tc.gamma = 0.5;
  tc.lr = 0.0;
  // huge positive critic bias: the raw target r + gamma*q2 is positive and
  // must clip to zero
  DdpgAgent agent(toy_checkpoint(0.5, 0.0, 0.0, 0.0, 100.0), tc);
  const double q = 100.0;
  const double want = q * q;  // y clips to 0
  REQUIRE(agent.critic_update(batch1(0.1, 0.0, -1.0, 0.1)) ==
          Catch::Approx(want).epsilon(1e-12));

  // huge negative bias clips to -1/(1-gamma)
  DdpgAgent agent2(toy_checkpoint(0.5, 0.0, 0.0, 0.0, -100.0), tc);
  const double y2 = -1.0 / (1.0 - 0.5);
  const double want2 = (-100.0 - y2) * (-100.0 - y2);
  REQUIRE(agent2.critic_update(batch1(0.1, 0.0, -1.0, 0.1)) ==
          Catch::Approx(want2).epsilon(1e-12));
}

TEST_CASE("actor loss matches -Q plus the action penalty") {
  TrainerConfig tc;
  tc.gamma = 0.5;
  tc.lr = 0.0;
  tc.action_l2 = 0.7;
  DdpgAgent agent(toy_checkpoint(0.5, 0.0, 1.0, -1.0, 0.25), tc);

  const double s = 0.2;
  const double pi = std::tanh(0.5 * s);
  const double q = 1.0 * s - 1.0 * pi + 0.25;
  const double want = -q + 0.7 * pi * pi;

  const auto [actor_loss, bc_loss] =
      agent.actor_update(batch1(s, 0.0, -1.0, s), nullptr);
  REQUIRE(actor_loss == Catch::Approx(want).epsilon(1e-12));
  REQUIRE(bc_loss == 0.0);
}

TEST_CASE("cloning loss is the mean squared action gap") {
  TrainerConfig tc;
  tc.lr = 0.0;
  tc.bc_weight = 1.0;
  DdpgAgent agent(toy_checkpoint(0.5, 0.0, 1.0, -1.0, 0.25), tc);

  TransitionBatch demo;
  demo.obs = Eigen::MatrixXd::Constant(1, 2, 0.2);
  demo.actions.resize(1, 2);
  demo.actions << 0.9, -0.4;
  const double pi = std::tanh(0.1);
  const double want = ((pi - 0.9) * (pi - 0.9) + (pi + 0.4) * (pi + 0.4)) / 2;

  const auto [actor_loss, bc_loss] =
      agent.actor_update(batch1(0.2, 0.0, -1.0, 0.2), &demo);
  REQUIRE(bc_loss == Catch::Approx(want).epsilon(1e-12));
}

TEST_CASE("the Q-filter drops demo pairs the critic already beats") {
  TrainerConfig tc;
  tc.lr = 0.0;
  tc.q_filter = true;
  // critic scores actions positively, so pi = tanh(0.1) ~ 0.0997 outranks a
  // demo action of -0.5 and that pair is filtered out; a demo action of 0.9
  // outranks pi and is kept.
  DdpgAgent agent(toy_checkpoint(0.5, 0.0, 0.0, 1.0, 0.0), tc);
  TransitionBatch demo;
  demo.obs = Eigen::MatrixXd::Constant(1, 2, 0.2);
  demo.actions.resize(1, 2);
  demo.actions << 0.9, -0.5;
  const double pi = std::tanh(0.1);
  const double want = ((pi - 0.9) * (pi - 0.9) + 0.0) / 2;
  const auto [al, bc_loss] =
      agent.actor_update(batch1(0.2, 0.0, -1.0, 0.2), &demo);
  REQUIRE(bc_loss == Catch::Approx(want).epsilon(1e-12));
}

TEST_CASE("polyak targets move a (1-tau) fraction toward the online nets") {
  std::mt19937_64 rng(3);
  TrainerConfig tc;
  tc.tau = 0.9;
  tc.hidden = {8};
  const EnvConfig env = EnvConfig::defaults(EnvKind::Reach);
  DdpgAgent agent(env, tc, rng);
  // push the online critic away from the target with one real update
  TransitionBatch b;
  b.obs = Eigen::MatrixXd::Random(6, 16);
  b.actions = Eigen::MatrixXd::Random(3, 16);
  b.rewards = -Eigen::VectorXd::Ones(16);
  b.next_obs = Eigen::MatrixXd::Random(6, 16);
  agent.critic_update(b);

  const Checkpoint before = agent.checkpoint(env);
  agent.update_targets();
  const Checkpoint after = agent.checkpoint(env);
  for (std::size_t l = 0; l < before.critic.layer_count(); ++l) {
    const Eigen::MatrixXd want = 0.9 * before.critic_target.weights()[l] +
                                 0.1 * before.critic.weights()[l];
    REQUIRE((after.critic_target.weights()[l] - want).cwiseAbs().maxCoeff() <
            1e-14);
  }
}

TEST_CASE("exploration respects the action box and its modes") {
  std::mt19937_64 rng(5);
  const EnvConfig env = EnvConfig::defaults(EnvKind::Pick);
  TrainerConfig tc;
  tc.hidden = {8};
  DdpgAgent agent(env, tc, rng);
  std::mt19937_64 noise(1);
  const Eigen::VectorXd obs = Eigen::VectorXd::Random(10);
  for (int i = 0; i < 500; ++i) {
    const Eigen::VectorXd a = agent.explore(obs, noise);
    REQUIRE(a.size() == 4);
    REQUIRE(a.cwiseAbs().maxCoeff() <= 1.0);
  }

  TrainerConfig pure;
  pure.hidden = {8};
  pure.eps_random = 0.0;
  pure.sigma_noise = 0.0;
  std::mt19937_64 rng2(5);
  DdpgAgent greedy(env, pure, rng2);
  REQUIRE((greedy.explore(obs, noise) - greedy.act(obs)).norm() == 0.0);
}

TEST_CASE("agents reload exactly from checkpoints") {
  std::mt19937_64 rng(9);
  const EnvConfig env = EnvConfig::defaults(EnvKind::Reach);
  TrainerConfig tc;
  tc.hidden = {12, 12};
  DdpgAgent agent(env, tc, rng);
  const DdpgAgent clone(agent.checkpoint(env), tc);
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd obs = Eigen::VectorXd::Random(6);
    REQUIRE((agent.act(obs) - clone.act(obs)).norm() == 0.0);
  }
}

TEST_CASE("evaluate is deterministic in its seed") {
  std::mt19937_64 rng(11);
  const EnvConfig env = EnvConfig::defaults(EnvKind::Reach);
  TrainerConfig tc;
  tc.hidden = {8};
  DdpgAgent agent(env, tc, rng);
  const double a = dvrl::evaluate(agent.greedy_policy(), env, 10, 30, 77);
  const double b = dvrl::evaluate(agent.greedy_policy(), env, 10, 30, 77);
  REQUIRE(a == b);
  REQUIRE_THROWS_AS(dvrl::evaluate(agent.greedy_policy(), env, 0, 30, 77),
                    std::invalid_argument);
}

TEST_CASE("demo sampler flattens episodes and validates input") {
  dvrl::Episode ep;
  ep.desired_goal = Eigen::Vector3d::Zero();
  for (int t = 0; t <= 4; ++t) {
    ep.observations.push_back(Eigen::VectorXd::Constant(6, t));
    ep.achieved_goals.push_back(Eigen::Vector3d::Zero());
    if (t < 4) {
      ep.actions.push_back(Eigen::VectorXd::Constant(3, 10.0 + t));
      ep.rewards.push_back(-1.0);
    }
  }
  const dvrl::DemoSampler sampler({ep, ep});
  REQUIRE(sampler.pair_count() == 8);
  std::mt19937_64 rng(1);
  const TransitionBatch b = sampler.sample(rng, 32);
  REQUIRE(b.obs.cols() == 32);
  REQUIRE(b.actions.cols() == 32);
  for (int i = 0; i < 32; ++i) {
    const double t = b.obs(0, i);
    REQUIRE(b.actions(0, i) == 10.0 + t);  // pairs stay aligned
  }
  REQUIRE_THROWS_AS(dvrl::DemoSampler(std::vector<dvrl::Episode>{}),
                    std::invalid_argument);
}

TEST_CASE("a fixed-goal reach run scores perfect success immediately") {
  EnvConfig env = EnvConfig::defaults(EnvKind::Reach);
  env.goal_equals_start = true;
  env.horizon = 1;  // one eta-sized step cannot escape the delta ball
  env.seed = 3;
  TrainerConfig tc;
  tc.hidden = {8};
  tc.epochs = 2;
  tc.cycles_per_epoch = 2;
  tc.updates_per_cycle = 2;
  tc.n_envs = 2;
  tc.eval_episodes = 5;
  tc.batch_size = 16;
  tc.seed = 3;
  const auto result = dvrl::train(env, tc);
  REQUIRE(result.epochs_run == 2);
  for (const auto& m : result.metrics) REQUIRE(m.success_rate == 1.0);
  REQUIRE(result.best_success == 1.0);
}

TEST_CASE("training is bitwise deterministic apart from wall time") {
  EnvConfig env = EnvConfig::defaults(EnvKind::Reach);
  env.horizon = 10;
  env.seed = 5;
  TrainerConfig tc;
  tc.hidden = {8};
  tc.epochs = 2;
  tc.cycles_per_epoch = 2;
  tc.updates_per_cycle = 3;
  tc.n_envs = 2;
  tc.eval_episodes = 4;
  tc.batch_size = 16;
  tc.seed = 5;
  const auto a = dvrl::train(env, tc);
  const auto b = dvrl::train(env, tc);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    REQUIRE(a.metrics[i].success_rate == b.metrics[i].success_rate);
    REQUIRE(a.metrics[i].critic_loss == b.metrics[i].critic_loss);
    REQUIRE(a.metrics[i].actor_loss == b.metrics[i].actor_loss);
    REQUIRE(a.metrics[i].bc_loss == b.metrics[i].bc_loss);
  }
}

TEST_CASE("early stopping cuts the epoch loop short") {
  EnvConfig env = EnvConfig::defaults(EnvKind::Reach);
  env.goal_equals_start = true;
  env.horizon = 1;
  TrainerConfig tc;
  tc.hidden = {8};
  tc.epochs = 50;
  tc.cycles_per_epoch = 1;
  tc.updates_per_cycle = 1;
  tc.n_envs = 1;
  tc.eval_episodes = 3;
  tc.batch_size = 8;
  tc.early_stop_success = 0.99;
  const auto result = dvrl::train(env, tc);
  REQUIRE(result.epochs_run == 1);
}

TEST_CASE("trainer config validation") {
  TrainerConfig tc;
  REQUIRE_NOTHROW(tc.validate());
  tc.gamma = 1.5;
  REQUIRE_THROWS_AS(tc.validate(), std::invalid_argument);
  tc = TrainerConfig{};
  tc.her_k = -1.0;
  REQUIRE_THROWS_AS(tc.validate(), std::invalid_argument);
  tc = TrainerConfig{};
  tc.n_envs = 0;
  REQUIRE_THROWS_AS(tc.validate(), std::invalid_argument);
}
