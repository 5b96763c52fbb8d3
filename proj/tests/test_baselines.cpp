#include <doctest.h>

#include "multilift/baselines.hpp"
#include "gridworld.hpp"

#include <cmath>

using namespace multilift;
using namespace multilift::baselines;

namespace {

env::EnvConfig rig_config() {
    env::EnvConfig c;
    c.episode.seed = 3;
    c.episode.difficulty = world::Difficulty::Easy;
    c.episode.n_uavs = 3;
    c.episode.start.center = Vec3(2.0, 4.0, 0.8);
    c.episode.goal = Vec3(12.0, 4.0, 1.0);
    c.randomization.enabled = false;
    return c;
}

// Train a tabular learner on the gridworld with epsilon-greedy exploration.
// Returns the learned table.
MatX train_gridworld(TabularMethod method, std::uint64_t seed, int episodes) {
    const gridtest::GridWorld world;
    QTable table(gridtest::GridWorld::kStates, gridtest::GridWorld::kActions);
    Rng rng(seed);
    const double discount = 0.99;
    const double alpha = 0.5;

    for (int episode = 0; episode < episodes; ++episode) {
        // Linear decay to a greedy tail so SARSA's target policy converges.
        const double frac = static_cast<double>(episode) / episodes;
        const double eps = frac < 0.8 ? 1.0 - frac : 0.01;
        auto pick = [&](int state) {
            if (rng.uniform() < eps) {
                return static_cast<int>(rng.uniform_index(gridtest::GridWorld::kActions));
            }
            return greedy_action(table, state);
        };

        int s = static_cast<int>(rng.uniform_index(gridtest::GridWorld::kStates));
        if (world.terminal(s)) continue;
        int a = pick(s);
        for (int step = 0; step < 200; ++step) {
            const int s2 = world.next_state(s, a);
            const double r = world.reward(s2);
            const bool done = world.terminal(s2);
            if (method == TabularMethod::QLearning) {
                q_learning_update(table, s, a, r, s2, done, alpha, discount);
                if (done) break;
                s = s2;
                a = pick(s);
            } else {
                const int a2 = done ? 0 : pick(s2);
                sarsa_update(table, s, a, r, s2, a2, done, alpha, discount);
                if (done) break;
                s = s2;
                a = a2;
            }
        }
    }
    return table.values;
}

}  // namespace

TEST_CASE("tabular update hand values") {
    QTable t(4, 2);
    q_learning_update(t, 1, 0, 1.0, 2, true, 0.1, 0.99);
    CHECK(t.values(1, 0) == doctest::Approx(0.1).epsilon(1e-12));

    // Zero TD error leaves the table untouched.
    QTable u(4, 2);
    q_learning_update(u, 0, 1, 0.0, 3, false, 0.1, 0.99);
    CHECK(u.values.cwiseAbs().maxCoeff() == 0.0);

    // Repeated terminal updates approach the reward monotonically.
    QTable v(2, 1);
    double prev = 0.0;
    for (int i = 0; i < 100; ++i) {
        q_learning_update(v, 0, 0, 1.0, 1, true, 0.2, 0.99);
        CHECK(v.values(0, 0) > prev);
        CHECK(v.values(0, 0) <= 1.0 + 1e-12);
        prev = v.values(0, 0);
    }
    CHECK(v.values(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("tabular updates touch exactly one cell") {
    QTable t(6, 3);
    t.values.setRandom();
    MatX before = t.values;
    q_learning_update(t, 2, 1, 0.5, 4, false, 0.3, 0.9);
    int changed = 0;
    for (int s = 0; s < 6; ++s) {
        for (int a = 0; a < 3; ++a) changed += (t.values(s, a) != before(s, a)) ? 1 : 0;
    }
    CHECK(changed == 1);

    before = t.values;
    sarsa_update(t, 3, 2, -0.1, 5, 1, false, 0.3, 0.9);
    changed = 0;
    for (int s = 0; s < 6; ++s) {
        for (int a = 0; a < 3; ++a) changed += (t.values(s, a) != before(s, a)) ? 1 : 0;
    }
    CHECK(changed == 1);
}

TEST_CASE("sarsa with the greedy successor equals q-learning") {
    QTable a(4, 3), b(4, 3);
    a.values.setRandom();
    b.values = a.values;
    const int s = 1, act = 2, s2 = 3;
    int greedy_next = 0;
    for (int k = 1; k < 3; ++k) {
        if (a.values(s2, k) > a.values(s2, greedy_next)) greedy_next = k;
    }
    q_learning_update(a, s, act, 0.7, s2, false, 0.25, 0.95);
    sarsa_update(b, s, act, 0.7, s2, greedy_next, false, 0.25, 0.95);
    CHECK(a.values(s, act) == b.values(s, act));

    // Terminal step: target is exactly the reward.
    QTable c(2, 2);
    c.values.setConstant(5.0);
    sarsa_update(c, 0, 0, 0.3, 1, 1, true, 1.0, 0.95);
    CHECK(c.values(0, 0) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("gridworld learners match the value-iteration oracle") {
    const gridtest::GridWorld world;
    const MatX q_star = gridtest::value_iteration(world, 0.99);

    for (TabularMethod method : {TabularMethod::QLearning, TabularMethod::Sarsa}) {
        const MatX learned = train_gridworld(method, 11, 20000);
        for (int s = 0; s < gridtest::GridWorld::kStates; ++s) {
            if (world.terminal(s) || !gridtest::unique_optimum(q_star, s)) continue;
            CHECK(gridtest::greedy(learned, s) == gridtest::greedy(q_star, s));
        }
    }
}

TEST_CASE("epsilon schedule is monotone non-increasing") {
    double prev = 2.0;
    for (long step = 0; step < 1000; step += 7) {
        const double e = epsilon_at(step, 1.0, 0.05, 600);
        CHECK(e <= prev);
        CHECK(e >= 0.05);
        CHECK(e <= 1.0);
        prev = e;
    }
    CHECK(epsilon_at(10000, 1.0, 0.05, 600) == 0.05);
}

TEST_CASE("replay buffer is FIFO and bounded") {
    ReplayBuffer buf(3);
    for (int i = 0; i < 5; ++i) {
        Transition t;
        t.obs = VecX::Constant(1, i);
        t.next_obs = t.obs;
        buf.push(std::move(t));
        CHECK(buf.size() <= 3);
    }
    // 0 and 1 were evicted; slots now hold 3, 4, 2.
    std::vector<double> kept;
    for (std::size_t i = 0; i < buf.size(); ++i) kept.push_back(buf.at(i).obs[0]);
    std::sort(kept.begin(), kept.end());
    CHECK(kept == std::vector<double>{2, 3, 4});
}

TEST_CASE("dqn update oracle values") {
    DqnConfig cfg;
    cfg.discount = 0.9;

    SUBCASE("perfect Q gives zero loss") {
        nn::DenseNet net = nn::make_net({2, 3});  // zero weights: Q == 0 everywhere
        nn::DenseNet target = net;
        nn::AdamState adam = nn::make_adam(net, 0.0);
        Transition t;
        t.obs = VecX::Zero(2);
        t.next_obs = VecX::Zero(2);
        t.action = 1;
        t.reward = 0.0;
        t.done = true;
        CHECK(dqn_update(net, target, {&t}, cfg, adam) == 0.0);
    }
    SUBCASE("single transition matches the hand-computed TD error") {
        // Q(s,.) = [0.2, -0.1]; target Q(s',.) = [0.5, 1.0]; r = 1, not done.
        nn::DenseNet net = nn::make_net({1, 2});
        net.biases[0] << 0.2, -0.1;
        nn::DenseNet target = nn::make_net({1, 2});
        target.biases[0] << 0.5, 1.0;
        nn::AdamState adam = nn::make_adam(net, 0.0);
        Transition t;
        t.obs = VecX::Zero(1);
        t.next_obs = VecX::Zero(1);
        t.action = 0;
        t.reward = 1.0;
        t.done = false;
        // td = 0.2 - (1 + 0.9 * 1.0) = -1.7, loss = 2.89.
        CHECK(dqn_update(net, target, {&t}, cfg, adam) == doctest::Approx(2.89).epsilon(1e-12));
    }
    SUBCASE("hard sync copies parameters byte for byte") {
        Rng rng(5);
        nn::DenseNet net = nn::make_net({4, 8, 3});
        nn::init_uniform(net, rng);
        nn::DenseNet target = net;
        for (std::size_t l = 0; l < net.weights.size(); ++l) {
            CHECK(target.weights[l] == net.weights[l]);
            CHECK(target.biases[l] == net.biases[l]);
        }
    }
}

TEST_CASE("discretizer maps every reachable state into range") {
    env::EnvConfig c = rig_config();
    env::Environment environment(c);
    environment.reset(c.episode);
    Discretizer disc;
    Rng rng(17);
    for (int step = 0; step < 60 && !environment.done(); ++step) {
        const int s = disc.state_of(environment);
        CHECK(s >= 0);
        CHECK(s < Discretizer::kStates);
        env::Action a = environment.hover_action();
        for (Eigen::Index i = 0; i < a.values.size(); ++i) a.values[i] += rng.uniform(-0.2, 0.2);
        environment.step(a);
    }
}

TEST_CASE("macro actions") {
    env::EnvConfig c = rig_config();
    env::Environment environment(c);
    environment.reset(c.episode);

    SUBCASE("unknown id is an error") {
        CHECK_THROWS_AS(macro_action_to_control(11, environment), std::invalid_argument);
        CHECK_THROWS_AS(macro_action_to_control(-1, environment), std::invalid_argument);
    }
    SUBCASE("hover macro holds the equilibrium") {
        for (int i = 0; i < 20; ++i) {
            environment.step(macro_action_to_control(kHover, environment));
        }
        CHECK_FALSE(environment.done());
        CHECK(environment.tracked_speed() < 0.05);
    }
    SUBCASE("forward macro drives the payload along +x") {
        const double x0 = environment.state().payload->position.x();
        for (int i = 0; i < 20 && !environment.done(); ++i) {  // 1 s
            environment.step(macro_action_to_control(kForwardSlow, environment));
        }
        CHECK(environment.state().payload->velocity.x() > 0.1);
        CHECK(environment.state().payload->position.x() > x0);
    }
    SUBCASE("up macro climbs without destabilizing") {
        const double z0 = environment.state().payload->position.z();
        for (int i = 0; i < 20 && !environment.done(); ++i) {
            environment.step(macro_action_to_control(kUp, environment));
        }
        CHECK_FALSE(environment.done());
        CHECK(environment.state().payload->position.z() > z0 + 0.1);
    }
}

TEST_CASE("baseline training loops run deterministically") {
    env::EnvConfig c = rig_config();
    c.episode.max_steps = 80;
    BaselineTrainConfig cfg;
    cfg.env_step_budget = 500;
    cfg.curve_stride = 200;
    cfg.seed = 9;
    cfg.dqn.hidden = {16};
    cfg.dqn.batch = 8;
    cfg.dqn.train_every = 2;

    const BaselineResult a = train_tabular(TabularMethod::QLearning, c, cfg);
    const BaselineResult b = train_tabular(TabularMethod::QLearning, c, cfg);
    CHECK(a.fault.empty());
    CHECK(a.env_steps >= 500);
    REQUIRE(a.curve.size() == b.curve.size());
    CHECK(a.curve.size() >= 2);
    for (std::size_t i = 0; i < a.curve.size(); ++i) {
        CHECK(a.curve[i].mean_return == b.curve[i].mean_return);
        CHECK(a.curve[i].env_steps == b.curve[i].env_steps);
        CHECK(a.curve[i].env_steps % 200 == 0);  // stride-aligned grid
    }
    CHECK(a.table.values == b.table.values);

    const BaselineResult d1 = train_dqn(c, cfg);
    const BaselineResult d2 = train_dqn(c, cfg);
    CHECK(d1.fault.empty());
    REQUIRE(d1.curve.size() == d2.curve.size());
    for (std::size_t l = 0; l < d1.q_net.weights.size(); ++l) {
        CHECK(d1.q_net.weights[l] == d2.q_net.weights[l]);
    }
}
