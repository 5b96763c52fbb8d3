#include "multilift/rl.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace multilift::rl {

namespace {

constexpr double kLogSqrt2Pi = 0.9189385332046727;  // log(sqrt(2 pi))

MatX clamped_log_std(const GaussianPolicy& policy, const MatX& raw) {
    return raw.cwiseMax(policy.log_std_min).cwiseMin(policy.log_std_max);
}

}  // namespace

GaussianPolicy make_policy(int obs_dim, int action_dim, const std::vector<int>& hidden,
                           Rng& rng, double init_log_std) {
    std::vector<int> sizes;
    sizes.push_back(obs_dim);
    for (int h : hidden) sizes.push_back(h);
    sizes.push_back(2 * action_dim);

    GaussianPolicy policy;
    policy.actor = nn::make_net(sizes);
    policy.action_dim = action_dim;
    nn::init_uniform(policy.actor, rng, 0.01);
    // Bias the log-std half of the head to the requested initial spread.
    VecX& bias = policy.actor.biases.back();
    for (int j = 0; j < action_dim; ++j) bias[action_dim + j] = init_log_std;
    return policy;
}

ActionSample sample_action(const GaussianPolicy& policy, const VecX& observation, Rng& rng) {
    const VecX out = nn::forward(policy.actor, observation);
    const int a = policy.action_dim;
    ActionSample s;
    s.action.resize(a);
    s.log_prob = 0.0;
    for (int j = 0; j < a; ++j) {
        const double mean = out[j];
        const double log_std = std::clamp(out[a + j], policy.log_std_min, policy.log_std_max);
        const double sigma = std::exp(log_std);
        const double z = rng.normal();
        s.action[j] = mean + sigma * z;
        s.log_prob += -0.5 * z * z - log_std - kLogSqrt2Pi;
    }
    return s;
}

VecX mean_action(const GaussianPolicy& policy, const VecX& observation) {
    const VecX out = nn::forward(policy.actor, observation);
    return out.head(policy.action_dim).cwiseMax(-1.0).cwiseMin(1.0);
}

double log_prob(const GaussianPolicy& policy, const VecX& observation, const VecX& action) {
    const VecX out = nn::forward(policy.actor, observation);
    const int a = policy.action_dim;
    double lp = 0.0;
    for (int j = 0; j < a; ++j) {
        const double log_std = std::clamp(out[a + j], policy.log_std_min, policy.log_std_max);
        const double z = (action[j] - out[j]) / std::exp(log_std);
        lp += -0.5 * z * z - log_std - kLogSqrt2Pi;
    }
    return lp;
}

double policy_entropy(const GaussianPolicy& policy, const VecX& observation) {
    const VecX out = nn::forward(policy.actor, observation);
    double h = 0.0;
    for (int j = 0; j < policy.action_dim; ++j) {
        const double log_std =
            std::clamp(out[policy.action_dim + j], policy.log_std_min, policy.log_std_max);
        h += log_std + 0.5 + kLogSqrt2Pi;
    }
    return h;
}

GaeResult compute_gae(const VecX& rewards, const VecX& values,
                      const std::vector<std::uint8_t>& dones, double bootstrap_value,
                      double discount, double lambda) {
    const Eigen::Index n = rewards.size();
    if (values.size() != n || static_cast<Eigen::Index>(dones.size()) != n) {
        throw std::invalid_argument("GAE inputs must have equal length");
    }
    GaeResult out;
    out.advantages.resize(n);
    out.returns.resize(n);
    double tail = 0.0;
    for (Eigen::Index t = n - 1; t >= 0; --t) {
        const double not_done = dones[t] ? 0.0 : 1.0;
        const double next_value = (t + 1 < n) ? values[t + 1] : bootstrap_value;
        const double delta = rewards[t] + discount * next_value * not_done - values[t];
        tail = delta + discount * lambda * not_done * tail;
        out.advantages[t] = tail;
        out.returns[t] = tail + values[t];
    }
    return out;
}

void normalize_advantages(VecX& advantages) {
    if (advantages.size() == 0) return;
    const double mean = advantages.mean();
    const double var = (advantages.array() - mean).square().mean();
    advantages = (advantages.array() - mean) / std::sqrt(var + 1e-8);
}

void RolloutBuffer::allocate(int steps_, int n_envs_, int obs_dim, int priv_dim,
                             int action_dim) {
    steps = steps_;
    n_envs = n_envs_;
    observations.resize(obs_dim, size());
    privileged.resize(priv_dim, size());
    actions.resize(action_dim, size());
    log_probs.resize(size());
    rewards.resize(size());
    values.resize(size());
    dones.assign(size(), 0);
    bootstrap = VecX::Zero(n_envs);
}

void RolloutBuffer::finish(double discount, double lambda) {
    advantages.resize(size());
    returns.resize(size());
    for (int e = 0; e < n_envs; ++e) {
        const int base = e * steps;
        const std::vector<std::uint8_t> env_dones(dones.begin() + base,
                                                  dones.begin() + base + steps);
        const GaeResult g =
            compute_gae(rewards.segment(base, steps), values.segment(base, steps), env_dones,
                        bootstrap[e], discount, lambda);
        advantages.segment(base, steps) = g.advantages;
        returns.segment(base, steps) = g.returns;
    }
}

LossStats ppo_update(const RolloutBuffer& buffer, GaussianPolicy& policy, nn::DenseNet& critic,
                     nn::AdamState& actor_adam, nn::AdamState& critic_adam,
                     const PpoConfig& config, Rng& rng) {
    const int batch = buffer.size();
    const int a_dim = policy.action_dim;
    if (batch == 0) throw std::invalid_argument("empty rollout buffer");

    VecX advantages = buffer.advantages;
    if (config.normalize_advantages) normalize_advantages(advantages);

    std::vector<int> order(batch);
    std::iota(order.begin(), order.end(), 0);

    LossStats stats;
    double sum_policy = 0.0, sum_value = 0.0, sum_entropy = 0.0, sum_kl = 0.0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        // Fisher-Yates with the caller's stream keeps runs reproducible.
        for (int i = batch - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.uniform_index(i + 1));
            std::swap(order[i], order[j]);
        }
        for (int start = 0; start < batch; start += config.minibatch) {
            const int b = std::min(config.minibatch, batch - start);

            MatX obs(buffer.observations.rows(), b);
            MatX priv(buffer.privileged.rows(), b);
            MatX act(a_dim, b);
            VecX old_logp(b), adv(b), ret(b);
            for (int k = 0; k < b; ++k) {
                const int idx = order[start + k];
                obs.col(k) = buffer.observations.col(idx);
                priv.col(k) = buffer.privileged.col(idx);
                act.col(k) = buffer.actions.col(idx);
                old_logp[k] = buffer.log_probs[idx];
                adv[k] = advantages[idx];
                ret[k] = buffer.returns[idx];
            }

            // Actor: new log-probs, ratios, clipped surrogate.
            nn::ForwardCache actor_cache;
            const MatX out = nn::forward(policy.actor, obs, &actor_cache);
            const MatX mean = out.topRows(a_dim);
            const MatX raw = out.bottomRows(a_dim);
            const MatX log_std = clamped_log_std(policy, raw);
            const MatX sigma = log_std.array().exp();
            const MatX z = (act - mean).array() / sigma.array();

            const VecX new_logp =
                (-0.5 * z.array().square() - log_std.array() - kLogSqrt2Pi).colwise().sum();
            const VecX log_ratio = new_logp - old_logp;
            const VecX ratio = log_ratio.array().exp();
            const VecX clipped = ratio.cwiseMax(1.0 - config.clip).cwiseMin(1.0 + config.clip);

            const VecX surr1 = ratio.cwiseProduct(adv);
            const VecX surr2 = clipped.cwiseProduct(adv);
            const double policy_loss = -surr1.cwiseMin(surr2).mean();
            const double entropy =
                (log_std.array() + 0.5 + kLogSqrt2Pi).colwise().sum().mean();
            const double approx_kl = (ratio.array() - 1.0 - log_ratio.array()).mean();

            if (epoch == 0 && start == 0) {
                stats.first_ratio_mean = ratio.mean();
                stats.first_policy_loss = policy_loss;
            }

            // d loss / d logp: active branch of the min. Inside the clip the
            // branches coincide, so routing ties to surr1 is exact.
            VecX g_logp = VecX::Zero(b);
            for (int k = 0; k < b; ++k) {
                if (surr1[k] <= surr2[k]) g_logp[k] = -adv[k] * ratio[k] / b;
            }

            MatX d_out(2 * a_dim, b);
            // d logp / d mean = z / sigma; d logp / d log_std = z^2 - 1.
            d_out.topRows(a_dim) =
                (z.array() / sigma.array()).rowwise() * g_logp.transpose().array();
            MatX d_log_std =
                ((z.array().square() - 1.0).rowwise() * g_logp.transpose().array()).matrix();
            // Entropy bonus: d(-c * mean(sum log_std)) / d log_std = -c / b.
            d_log_std.array() -= config.entropy_coef / b;
            // No gradient where the raw log-std is saturated by the clamp.
            const MatX mask =
                ((raw.array() > policy.log_std_min) && (raw.array() < policy.log_std_max))
                    .cast<double>();
            d_out.bottomRows(a_dim) = d_log_std.array() * mask.array();

            nn::Gradients actor_grads = nn::backward(policy.actor, actor_cache, d_out);
            const double actor_norm = nn::gradient_norm(actor_grads);
            if (actor_norm > config.max_grad_norm) {
                nn::scale_gradients(actor_grads, config.max_grad_norm / actor_norm);
            }

            // Critic regression on privileged state.
            nn::ForwardCache critic_cache;
            const MatX v = nn::forward(critic, priv, &critic_cache);
            const VecX diff = v.row(0).transpose() - ret;
            const double value_loss = diff.squaredNorm() / b;
            MatX d_v(1, b);
            d_v.row(0) = (config.value_coef * 2.0 / b) * diff.transpose();
            nn::Gradients critic_grads = nn::backward(critic, critic_cache, d_v);
            const double critic_norm = nn::gradient_norm(critic_grads);
            if (critic_norm > config.max_grad_norm) {
                nn::scale_gradients(critic_grads, config.max_grad_norm / critic_norm);
            }

            if (!std::isfinite(policy_loss) || !std::isfinite(value_loss)) {
                std::ostringstream os;
                os << "ppo_update: non-finite loss (policy=" << policy_loss
                   << ", value=" << value_loss << ", ratio mean=" << ratio.mean() << ")";
                throw std::runtime_error(os.str());
            }

            nn::adam_step(policy.actor, actor_grads, actor_adam);
            nn::adam_step(critic, critic_grads, critic_adam);
            nn::check_finite(policy.actor, "actor after Adam");
            nn::check_finite(critic, "critic after Adam");

            sum_policy += policy_loss;
            sum_value += value_loss;
            sum_entropy += entropy;
            sum_kl += approx_kl;
            stats.minibatches += 1;
        }
    }

    stats.policy_loss = sum_policy / stats.minibatches;
    stats.value_loss = sum_value / stats.minibatches;
    stats.entropy = sum_entropy / stats.minibatches;
    stats.approx_kl = sum_kl / stats.minibatches;
    return stats;
}

namespace {

std::uint64_t episode_seed(std::uint64_t master, int env_index, long counter) {
    return mix_seed(mix_seed(master, 0x9000 + static_cast<std::uint64_t>(env_index)),
                    static_cast<std::uint64_t>(counter));
}

}  // namespace

double evaluate_policy(const GaussianPolicy& policy, const env::EnvConfig& env_config,
                       const std::vector<std::uint64_t>& episode_seeds) {
    if (episode_seeds.empty()) return 0.0;
    env::Environment environment(env_config);
    int successes = 0;
    for (std::uint64_t seed : episode_seeds) {
        env::EpisodeConfig ep = env_config.episode;
        ep.seed = seed;
        auto [obs, priv] = environment.reset(ep);
        (void)priv;
        while (!environment.done()) {
            const env::Action action{mean_action(policy, obs)};
            obs = environment.step(action).observation;
        }
        if (environment.reason() == env::Termination::Success) ++successes;
    }
    return static_cast<double>(successes) / episode_seeds.size();
}

TrainResult train_ppo(const env::EnvConfig& env_config, const TrainConfig& config,
                      const TrainCallbacks& callbacks) {
    const auto wall_start = std::chrono::steady_clock::now();
    const int n_envs = config.ppo.n_envs;
    const int steps = config.ppo.rollout_steps;
    const int obs_dim = env::observation_size(env_config);
    const int priv_dim = env::privileged_size(env_config);
    const int action_dim = 4 * env_config.episode.n_uavs;

    Rng master(config.seed);
    Rng init_rng = master.fork(1);
    Rng sample_rng = master.fork(2);
    Rng shuffle_rng = master.fork(3);

    TrainResult result;
    result.policy =
        make_policy(obs_dim, action_dim, config.actor_hidden, init_rng, config.init_log_std);
    std::vector<int> critic_sizes;
    critic_sizes.push_back(priv_dim);
    for (int h : config.critic_hidden) critic_sizes.push_back(h);
    critic_sizes.push_back(1);
    result.critic = nn::make_net(critic_sizes);
    nn::init_uniform(result.critic, init_rng);
    result.actor_adam = nn::make_adam(result.policy.actor, config.ppo.lr);
    result.critic_adam = nn::make_adam(result.critic, config.ppo.lr);

    if (config.iterations == 0) return result;

    std::vector<env::Environment> envs;
    std::vector<long> episode_counter(n_envs, 0);
    std::vector<double> episode_return(n_envs, 0.0);
    MatX current_obs(obs_dim, n_envs);
    MatX current_priv(priv_dim, n_envs);

    std::vector<std::uint64_t> eval_seeds;
    for (int j = 0; j < config.eval_episodes; ++j) {
        eval_seeds.push_back(mix_seed(config.seed, 0xEEE000 + j));
    }

    try {
        for (int e = 0; e < n_envs; ++e) {
            envs.emplace_back(env_config);
            env::EpisodeConfig ep = env_config.episode;
            ep.seed = episode_seed(config.seed, e, episode_counter[e]++);
            auto [obs, priv] = envs[e].reset(ep);
            current_obs.col(e) = obs;
            current_priv.col(e) = priv;
        }

        RolloutBuffer buffer;
        buffer.allocate(steps, n_envs, obs_dim, priv_dim, action_dim);

        double last_mean_return = 0.0;
        double last_success_rate = 0.0;

        for (int iteration = 1; iteration <= config.iterations; ++iteration) {
            int finished = 0, succeeded = 0;
            double finished_return = 0.0;

            for (int t = 0; t < steps; ++t) {
                const MatX actor_out = nn::forward(result.policy.actor, current_obs);
                const MatX values = nn::forward(result.critic, current_priv);

                for (int e = 0; e < n_envs; ++e) {
                    const int col = e * steps + t;
                    buffer.observations.col(col) = current_obs.col(e);
                    buffer.privileged.col(col) = current_priv.col(e);
                    buffer.values[col] = values(0, e);

                    double logp = 0.0;
                    VecX action(action_dim);
                    for (int j = 0; j < action_dim; ++j) {
                        const double mean = actor_out(j, e);
                        const double log_std =
                            std::clamp(actor_out(action_dim + j, e), result.policy.log_std_min,
                                       result.policy.log_std_max);
                        const double sigma = std::exp(log_std);
                        const double z = sample_rng.normal();
                        action[j] = mean + sigma * z;
                        logp += -0.5 * z * z - log_std - kLogSqrt2Pi;
                    }
                    buffer.actions.col(col) = action;
                    buffer.log_probs[col] = logp;

                    const env::StepResult step = envs[e].step(env::Action{action});
                    buffer.rewards[col] = step.reward;
                    buffer.dones[col] = step.done ? 1 : 0;
                    episode_return[e] += step.reward;

                    if (step.done) {
                        finished += 1;
                        finished_return += episode_return[e];
                        if (step.reason == env::Termination::Success) succeeded += 1;
                        episode_return[e] = 0.0;
                        env::EpisodeConfig ep = env_config.episode;
                        ep.seed = episode_seed(config.seed, e, episode_counter[e]++);
                        auto [obs, priv] = envs[e].reset(ep);
                        current_obs.col(e) = obs;
                        current_priv.col(e) = priv;
                    } else {
                        current_obs.col(e) = step.observation;
                        current_priv.col(e) = step.privileged;
                    }
                }
            }

            const MatX tail_values = nn::forward(result.critic, current_priv);
            buffer.bootstrap = tail_values.row(0).transpose();
            buffer.finish(config.ppo.discount, config.ppo.gae_lambda);

            const LossStats losses =
                ppo_update(buffer, result.policy, result.critic, result.actor_adam,
                           result.critic_adam, config.ppo, shuffle_rng);

            result.env_steps += static_cast<long>(steps) * n_envs;
            if (finished > 0) {
                last_mean_return = finished_return / finished;
                last_success_rate = static_cast<double>(succeeded) / finished;
            }

            CurvePoint point;
            point.iteration = iteration;
            point.env_steps = result.env_steps;
            point.mean_return = last_mean_return;
            point.success_rate = last_success_rate;
            point.policy_loss = losses.policy_loss;
            point.value_loss = losses.value_loss;
            point.entropy = losses.entropy;
            point.wall_clock_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start)
                    .count();
            result.curve.push_back(point);
            if (callbacks.on_curve_point) callbacks.on_curve_point(point);

            bool stop = false;
            if (config.eval_every > 0 &&
                (iteration % config.eval_every == 0 || iteration == config.iterations)) {
                const double success = evaluate_policy(result.policy, env_config, eval_seeds);
                result.evals.push_back({iteration, success});
                result.best_eval_success = std::max(result.best_eval_success, success);
                if (config.stop_at_eval_success >= 0.0 &&
                    success >= config.stop_at_eval_success) {
                    stop = true;
                }
            }
            if (callbacks.on_checkpoint && config.checkpoint_every > 0 &&
                (iteration % config.checkpoint_every == 0 || stop ||
                 iteration == config.iterations)) {
                callbacks.on_checkpoint(result, iteration);
            }
            if (stop) break;
        }
    } catch (const std::exception& err) {
        // Env faults end the run; the curve collected so far stays valid.
        result.fault = err.what();
    }
    return result;
}

}  // namespace multilift::rl
