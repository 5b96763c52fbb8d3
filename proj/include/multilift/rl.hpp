#pragma once

#include "multilift/env.hpp"
#include "multilift/nn.hpp"
#include "multilift/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace multilift::rl {

struct PpoConfig {
    double clip = 0.2;
    double discount = 0.99;  // return discount; distinct from any Euler angle
    double gae_lambda = 0.95;
    int epochs = 4;
    int minibatch = 256;
    int rollout_steps = 256;  // per environment
    int n_envs = 8;
    double entropy_coef = 0.01;
    double value_coef = 0.5;
    double max_grad_norm = 0.5;
    double lr = 3e-4;
    bool normalize_advantages = true;
    double log_std_min = -5.0;
    double log_std_max = 1.0;
};

// Diagonal Gaussian over actions; the actor net emits (mean, raw log-std)
// and the log-std is clamped to [log_std_min, log_std_max]. Samples are
// stored unclamped so densities stay consistent; the environment clamps.
struct GaussianPolicy {
    nn::DenseNet actor;
    int action_dim = 0;
    double log_std_min = -5.0;
    double log_std_max = 1.0;
};

GaussianPolicy make_policy(int obs_dim, int action_dim, const std::vector<int>& hidden,
                           Rng& rng, double init_log_std);

struct ActionSample {
    VecX action;  // unclamped Gaussian draw
    double log_prob;
};

ActionSample sample_action(const GaussianPolicy& policy, const VecX& observation, Rng& rng);

// Deterministic evaluation action: the clamped distribution mode.
VecX mean_action(const GaussianPolicy& policy, const VecX& observation);

double log_prob(const GaussianPolicy& policy, const VecX& observation, const VecX& action);
double policy_entropy(const GaussianPolicy& policy, const VecX& observation);

struct GaeResult {
    VecX advantages;
    VecX returns;
};

// delta_t = r_t + g V_{t+1} (1 - done_t) - V_t;
// A_t = delta_t + g l (1 - done_t) A_{t+1}; R_t = A_t + V_t.
GaeResult compute_gae(const VecX& rewards, const VecX& values,
                      const std::vector<std::uint8_t>& dones, double bootstrap_value,
                      double discount, double lambda);

void normalize_advantages(VecX& advantages);

// Trajectories from n_envs environments, steps-major within each env block:
// column e * steps + t. Actions are the unclamped behavior-policy draws.
struct RolloutBuffer {
    int steps = 0;
    int n_envs = 0;
    MatX observations;
    MatX privileged;
    MatX actions;
    VecX log_probs;
    VecX rewards;
    VecX values;
    std::vector<std::uint8_t> dones;
    VecX bootstrap;  // per-env V of the state after the last step
    VecX advantages;
    VecX returns;

    int size() const { return steps * n_envs; }
    void allocate(int steps_, int n_envs_, int obs_dim, int priv_dim, int action_dim);
    // Runs GAE per environment segment and fills advantages/returns.
    void finish(double discount, double lambda);
};

struct LossStats {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double approx_kl = 0.0;
    // First minibatch of the first epoch, before any parameter update.
    double first_ratio_mean = 0.0;
    double first_policy_loss = 0.0;
    int minibatches = 0;
};

// Clipped-surrogate update. The critic consumes privileged columns, the
// actor sees observations only.
LossStats ppo_update(const RolloutBuffer& buffer, GaussianPolicy& policy,
                     nn::DenseNet& critic, nn::AdamState& actor_adam,
                     nn::AdamState& critic_adam, const PpoConfig& config, Rng& rng);

struct TrainConfig {
    PpoConfig ppo;
    std::vector<int> actor_hidden = {256, 256};
    std::vector<int> critic_hidden = {256, 256};
    double init_log_std = -1.0;
    int iterations = 300;
    std::uint64_t seed = 0;
    int eval_every = 10;     // iterations between deterministic evals; 0 = off
    int eval_episodes = 16;
    double stop_at_eval_success = -1.0;  // early stop when reached; < 0 = off
    int checkpoint_every = 50;
};

struct CurvePoint {
    int iteration = 0;
    long env_steps = 0;
    double mean_return = 0.0;
    double success_rate = 0.0;  // over episodes finished in this rollout
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double wall_clock_s = 0.0;
};

struct EvalPoint {
    int iteration = 0;
    double success_rate = 0.0;
};

struct TrainResult {
    GaussianPolicy policy;
    nn::DenseNet critic;
    nn::AdamState actor_adam;
    nn::AdamState critic_adam;
    std::vector<CurvePoint> curve;
    std::vector<EvalPoint> evals;
    double best_eval_success = 0.0;
    long env_steps = 0;
    std::string fault;  // non-empty when the run died on an env fault
};

struct TrainCallbacks {
    std::function<void(const CurvePoint&)> on_curve_point;
    std::function<void(const TrainResult&, int iteration)> on_checkpoint;
};

// Collect -> GAE -> update loop over vectorized environments, fully seeded.
TrainResult train_ppo(const env::EnvConfig& env_config, const TrainConfig& config,
                      const TrainCallbacks& callbacks = {});

// Deterministic-policy episodes; returns the success fraction.
double evaluate_policy(const GaussianPolicy& policy, const env::EnvConfig& env_config,
                       const std::vector<std::uint64_t>& episode_seeds);

}  // namespace multilift::rl
