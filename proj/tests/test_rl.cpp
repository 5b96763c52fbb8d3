#include <doctest.h>

#include "multilift/rl.hpp"

#include <cmath>

using namespace multilift;
using namespace multilift::rl;

namespace {

// Brute-force discounted return with bootstrap, the lambda = 1 oracle.
VecX mc_returns(const VecX& rewards, const std::vector<std::uint8_t>& dones, double bootstrap,
                double discount) {
    const Eigen::Index n = rewards.size();
    VecX out(n);
    for (Eigen::Index t = 0; t < n; ++t) {
        double acc = 0.0, weight = 1.0;
        bool terminated = false;
        for (Eigen::Index k = t; k < n; ++k) {
            acc += weight * rewards[k];
            weight *= discount;
            if (dones[k]) {
                terminated = true;
                break;
            }
        }
        if (!terminated) acc += weight * bootstrap;
        out[t] = acc;
    }
    return out;
}

env::EnvConfig smoke_env() {
    env::EnvConfig c;
    c.episode.seed = 1;
    c.episode.difficulty = world::Difficulty::Empty;
    c.episode.n_uavs = 1;
    c.episode.start.center = Vec3(4.0, 4.0, 1.2);
    c.episode.start.radius = 0.5;
    c.episode.goal = Vec3(6.5, 4.0, 1.2);
    c.episode.goal_radius = 1.0;
    c.episode.max_steps = 100;
    c.payload_enabled = false;
    c.goal_sensing = env::GoalSensing::Always;
    c.randomization.enabled = false;
    return c;
}

GaussianPolicy tiny_policy(int obs_dim, int action_dim, std::uint64_t seed) {
    Rng rng(seed);
    return make_policy(obs_dim, action_dim, {16}, rng, -0.5);
}

}  // namespace

TEST_CASE("gae oracle values") {
    SUBCASE("single terminal step") {
        VecX r(1), v(1);
        r << 1.0;
        v << 0.0;
        const GaeResult g = compute_gae(r, v, {1}, 5.0, 0.99, 0.95);
        CHECK(g.advantages[0] == 1.0);
        CHECK(g.returns[0] == 1.0);
    }
    SUBCASE("all zeros give zero advantages") {
        const VecX r = VecX::Zero(6), v = VecX::Zero(6);
        const GaeResult g = compute_gae(r, v, std::vector<std::uint8_t>(6, 0), 0.0, 0.99, 0.95);
        CHECK(g.advantages.norm() == 0.0);
    }
    SUBCASE("lambda = 1 matches brute-force discounted returns") {
        Rng rng(4);
        for (int trial = 0; trial < 20; ++trial) {
            const int n = 30;
            VecX r(n), v(n);
            std::vector<std::uint8_t> dones(n, 0);
            for (int t = 0; t < n; ++t) {
                r[t] = rng.uniform(-1, 1);
                v[t] = rng.uniform(-1, 1);
                if (rng.uniform() < 0.08) dones[t] = 1;
            }
            const double bootstrap = rng.uniform(-1, 1);
            const GaeResult g = compute_gae(r, v, dones, bootstrap, 0.99, 1.0);
            const VecX mc = mc_returns(r, dones, bootstrap, 0.99);
            for (int t = 0; t < n; ++t) {
                CHECK(std::abs(g.advantages[t] + v[t] - mc[t]) < 1e-10);
                CHECK(std::abs(g.returns[t] - mc[t]) < 1e-10);
            }
        }
    }
    SUBCASE("lambda = 0 equals the one-step TD residual exactly") {
        Rng rng(9);
        const int n = 25;
        VecX r(n), v(n);
        std::vector<std::uint8_t> dones(n, 0);
        for (int t = 0; t < n; ++t) {
            r[t] = rng.uniform(-2, 2);
            v[t] = rng.uniform(-2, 2);
            if (rng.uniform() < 0.1) dones[t] = 1;
        }
        const double bootstrap = 0.37;
        const GaeResult g = compute_gae(r, v, dones, bootstrap, 0.9, 0.0);
        for (int t = 0; t < n; ++t) {
            const double next = (t + 1 < n) ? v[t + 1] : bootstrap;
            const double delta = r[t] + 0.9 * next * (dones[t] ? 0.0 : 1.0) - v[t];
            CHECK(g.advantages[t] == delta);
        }
    }
    SUBCASE("length mismatch is an error") {
        CHECK_THROWS_AS(
            compute_gae(VecX::Zero(3), VecX::Zero(2), {0, 0, 0}, 0.0, 0.99, 0.95),
            std::invalid_argument);
    }
}

TEST_CASE("gaussian policy sampling") {
    const int obs_dim = 6, a_dim = 4;
    GaussianPolicy policy = tiny_policy(obs_dim, a_dim, 7);
    const VecX obs = VecX::Constant(obs_dim, 0.3);

    SUBCASE("log density at the mean is the closed form") {
        // Push the log-std head to the clamp floor.
        policy.actor.biases.back().tail(a_dim).setConstant(-20.0);
        const VecX out = nn::forward(policy.actor, obs);
        const VecX mean = out.head(a_dim);
        const double sigma = std::exp(policy.log_std_min);
        const double expected = a_dim * (-std::log(sigma * std::sqrt(2.0 * M_PI)));
        CHECK(log_prob(policy, obs, mean) == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("deterministic eval is the clamped mean") {
        policy.actor.biases.back().head(a_dim).setConstant(3.0);  // push mean past 1
        const VecX a = mean_action(policy, obs);
        for (int j = 0; j < a_dim; ++j) CHECK(a[j] == 1.0);
    }
    SUBCASE("same rng state gives the same sample") {
        Rng r1(11), r2(11);
        const ActionSample s1 = sample_action(policy, obs, r1);
        const ActionSample s2 = sample_action(policy, obs, r2);
        CHECK(s1.action == s2.action);
        CHECK(s1.log_prob == s2.log_prob);
        // And the stored density matches the recomputed one.
        CHECK(log_prob(policy, obs, s1.action) == doctest::Approx(s1.log_prob).epsilon(1e-12));
    }
    SUBCASE("entropy strictly decreases with log-std") {
        GaussianPolicy narrow = policy;
        narrow.actor.biases.back().tail(a_dim).setConstant(-2.0);
        GaussianPolicy wide = policy;
        wide.actor.biases.back().tail(a_dim).setConstant(-1.0);
        CHECK(policy_entropy(narrow, obs) < policy_entropy(wide, obs));
    }
}

namespace {

// A buffer whose actions were drawn from the given policy, so behavior and
// current policies coincide.
RolloutBuffer on_policy_buffer(const GaussianPolicy& policy, int obs_dim, int priv_dim,
                               int steps, std::uint64_t seed) {
    RolloutBuffer buffer;
    buffer.allocate(steps, 1, obs_dim, priv_dim, policy.action_dim);
    Rng rng(seed);
    for (int t = 0; t < steps; ++t) {
        VecX obs(obs_dim);
        for (int i = 0; i < obs_dim; ++i) obs[i] = rng.uniform(-1, 1);
        VecX priv(priv_dim);
        for (int i = 0; i < priv_dim; ++i) priv[i] = rng.uniform(-1, 1);
        const ActionSample s = sample_action(policy, obs, rng);
        buffer.observations.col(t) = obs;
        buffer.privileged.col(t) = priv;
        buffer.actions.col(t) = s.action;
        buffer.log_probs[t] = s.log_prob;
        buffer.rewards[t] = rng.uniform(-1, 1);
        buffer.values[t] = rng.uniform(-1, 1);
        buffer.dones[t] = 0;
    }
    buffer.bootstrap = VecX::Zero(1);
    buffer.finish(0.99, 0.95);
    return buffer;
}

}  // namespace

TEST_CASE("ppo identities") {
    const int obs_dim = 8, priv_dim = 5, a_dim = 3, steps = 64;
    GaussianPolicy policy = tiny_policy(obs_dim, a_dim, 21);
    Rng critic_rng(22);
    nn::DenseNet critic = nn::make_net({priv_dim, 16, 1});
    nn::init_uniform(critic, critic_rng);

    RolloutBuffer buffer = on_policy_buffer(policy, obs_dim, priv_dim, steps, 23);

    PpoConfig cfg;
    cfg.epochs = 1;
    cfg.minibatch = steps;
    cfg.normalize_advantages = false;

    SUBCASE("pre-update ratio mean is one and loss is minus mean advantage") {
        nn::AdamState actor_adam = nn::make_adam(policy.actor, 1e-4);
        nn::AdamState critic_adam = nn::make_adam(critic, 1e-4);
        Rng rng(31);
        const LossStats stats =
            ppo_update(buffer, policy, critic, actor_adam, critic_adam, cfg, rng);
        CHECK(std::abs(stats.first_ratio_mean - 1.0) < 1e-6);
        CHECK(std::abs(stats.first_policy_loss - (-buffer.advantages.mean())) < 1e-10);
    }
    SUBCASE("perfect critic gives zero value loss") {
        // Constant critic output b equals constant returns b.
        nn::DenseNet flat = nn::make_net({priv_dim, 1});
        flat.biases[0][0] = 0.7;
        buffer.returns.setConstant(0.7);
        nn::AdamState actor_adam = nn::make_adam(policy.actor, 0.0);
        nn::AdamState critic_adam = nn::make_adam(flat, 0.0);
        Rng rng(32);
        const LossStats stats =
            ppo_update(buffer, policy, flat, actor_adam, critic_adam, cfg, rng);
        CHECK(stats.value_loss == 0.0);
    }
    SUBCASE("clip limits the contribution of large ratios") {
        // Single sample, ratio forced to 2, advantage 1: min(2, 1.2) = 1.2.
        RolloutBuffer one = on_policy_buffer(policy, obs_dim, priv_dim, 1, 40);
        one.log_probs[0] -= std::log(2.0);  // behavior density halved -> ratio 2
        one.advantages.setConstant(1.0);
        one.returns.setConstant(0.0);
        PpoConfig c1 = cfg;
        c1.minibatch = 1;
        nn::AdamState actor_adam = nn::make_adam(policy.actor, 0.0);
        nn::AdamState critic_adam = nn::make_adam(critic, 0.0);
        Rng rng(33);
        const LossStats stats =
            ppo_update(one, policy, critic, actor_adam, critic_adam, c1, rng);
        CHECK(stats.first_policy_loss == doctest::Approx(-1.2).epsilon(1e-9));
        CHECK(std::abs(stats.first_policy_loss) <= (1.0 + c1.clip) * 1.0 + 1e-12);
    }
}

TEST_CASE("train_ppo degenerate and determinism cases") {
    env::EnvConfig envc = smoke_env();
    TrainConfig tc;
    tc.ppo.n_envs = 2;
    tc.ppo.rollout_steps = 24;
    tc.ppo.minibatch = 24;
    tc.ppo.epochs = 2;
    tc.actor_hidden = {24};
    tc.critic_hidden = {24};
    tc.seed = 77;
    tc.eval_every = 0;

    SUBCASE("zero iterations returns only the initialized nets") {
        tc.iterations = 0;
        const TrainResult r = train_ppo(envc, tc);
        CHECK(r.curve.empty());
        CHECK(r.env_steps == 0);
        CHECK(r.policy.actor.layer_sizes.front() == env::observation_size(envc));
    }
    SUBCASE("same master seed reproduces the curve and the weights") {
        tc.iterations = 3;
        const TrainResult a = train_ppo(envc, tc);
        const TrainResult b = train_ppo(envc, tc);
        REQUIRE(a.curve.size() == 3);
        REQUIRE(b.curve.size() == 3);
        CHECK(a.fault.empty());
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(a.curve[i].mean_return == b.curve[i].mean_return);
            CHECK(a.curve[i].policy_loss == b.curve[i].policy_loss);
            CHECK(a.curve[i].entropy == b.curve[i].entropy);
        }
        for (std::size_t l = 0; l < a.policy.actor.weights.size(); ++l) {
            CHECK(a.policy.actor.weights[l] == b.policy.actor.weights[l]);
        }
        CHECK(a.env_steps == 3 * 24 * 2);
    }
}
