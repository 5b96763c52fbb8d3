#include "multilift/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>

namespace multilift::baselines {

namespace {

int bin_of(double value, std::initializer_list<double> edges) {
    int bin = 0;
    for (double e : edges) {
        if (value >= e) ++bin;
    }
    return bin;
}

}  // namespace

int Discretizer::state_of(const env::Environment& environment) const {
    const Vec3 tracked = environment.state().payload
                             ? environment.state().payload->position
                             : environment.state().uavs[0].position;
    const Vec3 rel = environment.goal() - tracked;

    const double ang = std::atan2(rel.y(), rel.x());  // [-pi, pi]
    int bearing = static_cast<int>((ang + M_PI) / (2.0 * M_PI / kBearingBins));
    bearing = std::clamp(bearing, 0, kBearingBins - 1);

    const int range = bin_of(rel.norm(), {0.5, 1.5, 3.0, 6.0});
    const int obstacle = bin_of(environment.min_obstacle_distance(), {0.5, 1.0, 2.0});
    const int tilt = bin_of(std::abs(environment.payload_tilt()), {deg2rad(10), deg2rad(30)});
    const int speed = bin_of(environment.tracked_speed(), {0.5, 1.7});

    return (((bearing * kRangeBins + range) * kObstacleBins + obstacle) * kTiltBins + tilt) *
               kSpeedBins +
           speed;
}

env::Action macro_action_to_control(int action_id, const env::Environment& environment) {
    if (action_id < 0 || action_id >= kMacroActionCount) {
        throw std::invalid_argument("unknown macro action id");
    }

    Vec3 v_des = Vec3::Zero();
    double yaw_rate = 0.0;
    const double slow = 0.8, fast = 1.8, vertical = 0.5;  // m/s
    switch (action_id) {
        case kHover: break;
        case kForwardSlow: v_des.x() = slow; break;
        case kBackSlow: v_des.x() = -slow; break;
        case kLeftSlow: v_des.y() = slow; break;
        case kRightSlow: v_des.y() = -slow; break;
        case kUp: v_des.z() = vertical; break;
        case kDown: v_des.z() = -vertical; break;
        case kYawLeft: yaw_rate = 0.7; break;
        case kYawRight: yaw_rate = -0.7; break;
        case kForwardFast: v_des.x() = fast; break;
        case kBackFast: v_des.x() = -fast; break;
        default: break;
    }

    const env::EnvConfig& cfg = environment.config();
    const int n = cfg.episode.n_uavs;
    env::Action action = environment.hover_action();

    const double kz = 0.6;           // thrust fraction per m/s of vertical error
    const double kv = 1.2;           // desired accel per m/s of velocity error
    const double k_att = 5.0;        // rate command per rad of attitude error
    const double tilt_limit = 0.25;  // rad

    for (int i = 0; i < n; ++i) {
        const physics::UavState& uav = environment.state().uavs[i];
        const int base = i * env::kActionPerUav;

        action.values[base] += kz * (v_des.z() - uav.velocity.z());
        action.values[base] = std::clamp(action.values[base], -1.0, 1.0);

        // Desired horizontal acceleration, rotated into the yaw frame.
        const double ax = kv * (v_des.x() - uav.velocity.x());
        const double ay = kv * (v_des.y() - uav.velocity.y());
        const double yaw = uav.attitude.z();
        const double bx = std::cos(yaw) * ax + std::sin(yaw) * ay;
        const double by = -std::sin(yaw) * ax + std::cos(yaw) * ay;

        const double g = environment.episode_params().gravity;
        const double pitch_des = std::clamp(bx / g, -tilt_limit, tilt_limit);
        const double roll_des = std::clamp(-by / g, -tilt_limit, tilt_limit);

        action.values[base + 1] =
            std::clamp(k_att * (roll_des - uav.attitude.x()) / cfg.omega_max, -1.0, 1.0);
        action.values[base + 2] =
            std::clamp(k_att * (pitch_des - uav.attitude.y()) / cfg.omega_max, -1.0, 1.0);
        action.values[base + 3] = std::clamp(yaw_rate, -1.0, 1.0);
    }
    return action;
}

int greedy_action(const QTable& table, int state) {
    int best = 0;
    for (int a = 1; a < table.values.cols(); ++a) {
        if (table.values(state, a) > table.values(state, best)) best = a;
    }
    return best;
}

void q_learning_update(QTable& table, int s, int a, double reward, int s_next, bool done,
                       double alpha, double discount) {
    const double next_best = done ? 0.0 : table.values.row(s_next).maxCoeff();
    table.values(s, a) += alpha * (reward + discount * next_best - table.values(s, a));
}

void sarsa_update(QTable& table, int s, int a, double reward, int s_next, int a_next,
                  bool done, double alpha, double discount) {
    const double next = done ? 0.0 : table.values(s_next, a_next);
    table.values(s, a) += alpha * (reward + discount * next - table.values(s, a));
}

void ReplayBuffer::push(Transition t) {
    if (data_.size() < capacity_) {
        data_.push_back(std::move(t));
    } else {
        data_[write_] = std::move(t);
    }
    write_ = (write_ + 1) % capacity_;
}

double epsilon_at(long step, double eps_start, double eps_end, long decay_steps) {
    if (decay_steps <= 0 || step >= decay_steps) return eps_end;
    const double frac = static_cast<double>(step) / static_cast<double>(decay_steps);
    return eps_start + frac * (eps_end - eps_start);
}

double dqn_update(nn::DenseNet& net, const nn::DenseNet& target_net,
                  const std::vector<const Transition*>& batch, const DqnConfig& config,
                  nn::AdamState& adam) {
    const int b = static_cast<int>(batch.size());
    if (b == 0) throw std::invalid_argument("empty DQN batch");
    const int obs_dim = net.input_size();
    const int n_actions = net.output_size();

    MatX obs(obs_dim, b), next_obs(obs_dim, b);
    for (int k = 0; k < b; ++k) {
        obs.col(k) = batch[k]->obs;
        next_obs.col(k) = batch[k]->next_obs;
    }

    const MatX next_q = nn::forward(target_net, next_obs);
    nn::ForwardCache cache;
    const MatX q = nn::forward(net, obs, &cache);

    MatX d_q = MatX::Zero(n_actions, b);
    double loss = 0.0;
    for (int k = 0; k < b; ++k) {
        const double target =
            batch[k]->reward +
            (batch[k]->done ? 0.0 : config.discount * next_q.col(k).maxCoeff());
        const double td = q(batch[k]->action, k) - target;
        loss += td * td;
        d_q(batch[k]->action, k) = 2.0 * td / b;
    }
    loss /= b;
    if (!std::isfinite(loss)) throw std::runtime_error("dqn_update: non-finite loss");

    nn::Gradients grads = nn::backward(net, cache, d_q);
    nn::adam_step(net, grads, adam);
    nn::check_finite(net, "DQN net after Adam");
    return loss;
}

int greedy_action_dqn(const nn::DenseNet& net, const VecX& obs) {
    const VecX q = nn::forward(net, obs);
    int best = 0;
    for (int a = 1; a < q.size(); ++a) {
        if (q[a] > q[best]) best = a;
    }
    return best;
}

namespace {

std::uint64_t episode_seed(std::uint64_t master, long counter) {
    return mix_seed(mix_seed(master, 0xBA5E), static_cast<std::uint64_t>(counter));
}

// Shared loop bookkeeping: a rolling episode-stats window and curve rows on
// a fixed env-step grid so every method lands on the same step axis.
struct LoopState {
    std::deque<double> returns;
    std::deque<int> successes;
    long env_steps = 0;
    long next_grid = 0;
    double episode_return = 0.0;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    void finish_episode(double ret, bool success) {
        returns.push_back(ret);
        successes.push_back(success ? 1 : 0);
        while (returns.size() > 20) {
            returns.pop_front();
            successes.pop_front();
        }
    }

    void emit(std::vector<rl::CurvePoint>& curve, const BaselineCallbacks& callbacks,
              long stride, double loss_value) {
        while (env_steps >= next_grid + stride) {
            next_grid += stride;
            rl::CurvePoint p;
            p.iteration = static_cast<int>(curve.size()) + 1;
            p.env_steps = next_grid;
            p.mean_return =
                returns.empty()
                    ? 0.0
                    : std::accumulate(returns.begin(), returns.end(), 0.0) / returns.size();
            p.success_rate = successes.empty()
                                 ? 0.0
                                 : std::accumulate(successes.begin(), successes.end(), 0.0) /
                                       successes.size();
            p.policy_loss = 0.0;
            p.value_loss = loss_value;
            p.entropy = 0.0;
            p.wall_clock_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            curve.push_back(p);
            if (callbacks.on_curve_point) callbacks.on_curve_point(p);
        }
    }
};

}  // namespace

BaselineResult train_tabular(TabularMethod method, const env::EnvConfig& env_config,
                             const BaselineTrainConfig& config,
                             const BaselineCallbacks& callbacks) {
    BaselineResult result;
    Rng master(config.seed);
    Rng rng = master.fork(0x7AB);
    Discretizer disc;
    env::Environment environment(env_config);
    LoopState loop;
    long episodes = 0;
    long decisions = 0;

    try {
        env::EpisodeConfig ep = env_config.episode;
        ep.seed = episode_seed(config.seed, episodes++);
        environment.reset(ep);
        int s = disc.state_of(environment);

        auto pick = [&](int state) {
            const double eps =
                epsilon_at(decisions, config.eps_start, config.eps_end, config.eps_decay_steps);
            if (rng.uniform() < eps) {
                return static_cast<int>(rng.uniform_index(kMacroActionCount));
            }
            return greedy_action(result.table, state);
        };

        int a = pick(s);
        while (loop.env_steps < config.env_step_budget) {
            double acc_reward = 0.0;
            bool done = false;
            bool success = false;
            for (int k = 0; k < config.action_repeat && !done; ++k) {
                const env::StepResult step =
                    environment.step(macro_action_to_control(a, environment));
                acc_reward += step.reward;
                loop.env_steps += 1;
                done = step.done;
                success = step.reason == env::Termination::Success;
            }
            decisions += 1;
            loop.episode_return += acc_reward;

            const int s_next = disc.state_of(environment);
            if (method == TabularMethod::QLearning) {
                q_learning_update(result.table, s, a, acc_reward, s_next, done, config.alpha,
                                  config.discount);
                if (!done) {
                    s = s_next;
                    a = pick(s);
                }
            } else {
                const int a_next = done ? 0 : pick(s_next);
                sarsa_update(result.table, s, a, acc_reward, s_next, a_next, done, config.alpha,
                             config.discount);
                if (!done) {
                    s = s_next;
                    a = a_next;
                }
            }

            if (done) {
                loop.finish_episode(loop.episode_return, success);
                loop.episode_return = 0.0;
                env::EpisodeConfig next = env_config.episode;
                next.seed = episode_seed(config.seed, episodes++);
                environment.reset(next);
                s = disc.state_of(environment);
                a = pick(s);
            }
            loop.emit(result.curve, callbacks, config.curve_stride, 0.0);
        }
    } catch (const std::exception& err) {
        result.fault = err.what();
    }
    result.env_steps = loop.env_steps;
    return result;
}

BaselineResult train_dqn(const env::EnvConfig& env_config, const BaselineTrainConfig& config,
                         const BaselineCallbacks& callbacks) {
    BaselineResult result;
    const DqnConfig& dq = config.dqn;
    Rng master(config.seed);
    Rng init_rng = master.fork(1);
    Rng act_rng = master.fork(2);
    Rng replay_rng = master.fork(3);

    const int obs_dim = env::observation_size(env_config);
    std::vector<int> sizes;
    sizes.push_back(obs_dim);
    for (int h : dq.hidden) sizes.push_back(h);
    sizes.push_back(kMacroActionCount);
    result.q_net = nn::make_net(sizes);
    nn::init_uniform(result.q_net, init_rng);
    nn::DenseNet target = result.q_net;
    nn::AdamState adam = nn::make_adam(result.q_net, dq.lr);
    ReplayBuffer replay(dq.replay_capacity);

    env::Environment environment(env_config);
    LoopState loop;
    long episodes = 0;
    long decisions = 0;
    double last_loss = 0.0;

    try {
        env::EpisodeConfig ep = env_config.episode;
        ep.seed = episode_seed(config.seed, episodes++);
        VecX obs = environment.reset(ep).first;

        while (loop.env_steps < config.env_step_budget) {
            const double eps = epsilon_at(decisions, dq.eps_start, dq.eps_end, dq.eps_decay_steps);
            const int a = act_rng.uniform() < eps
                              ? static_cast<int>(act_rng.uniform_index(kMacroActionCount))
                              : greedy_action_dqn(result.q_net, obs);

            double acc_reward = 0.0;
            bool done = false;
            bool success = false;
            env::StepResult step;
            for (int k = 0; k < config.action_repeat && !done; ++k) {
                step = environment.step(macro_action_to_control(a, environment));
                acc_reward += step.reward;
                loop.env_steps += 1;
                done = step.done;
                success = step.reason == env::Termination::Success;
            }
            decisions += 1;
            loop.episode_return += acc_reward;

            replay.push(Transition{obs, a, acc_reward, step.observation, done});

            if (replay.size() >= static_cast<std::size_t>(dq.batch) &&
                decisions % dq.train_every == 0) {
                std::vector<const Transition*> batch;
                batch.reserve(dq.batch);
                for (int k = 0; k < dq.batch; ++k) batch.push_back(&replay.sample(replay_rng));
                last_loss = dqn_update(result.q_net, target, batch, dq, adam);
            }
            if (decisions % dq.target_sync == 0) target = result.q_net;

            if (done) {
                loop.finish_episode(loop.episode_return, success);
                loop.episode_return = 0.0;
                env::EpisodeConfig next = env_config.episode;
                next.seed = episode_seed(config.seed, episodes++);
                obs = environment.reset(next).first;
            } else {
                obs = step.observation;
            }
            loop.emit(result.curve, callbacks, config.curve_stride, last_loss);
        }
    } catch (const std::exception& err) {
        result.fault = err.what();
    }
    result.env_steps = loop.env_steps;
    return result;
}

}  // namespace multilift::baselines
