#pragma once

#include "multilift/env.hpp"
#include "multilift/nn.hpp"
#include "multilift/rl.hpp"
#include "multilift/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace multilift::baselines {

// Coarse state features for the tabular methods:
// payload-to-goal planar bearing (8) x range (5) x nearest obstacle (4) x
// payload tilt (3) x payload speed (3) = 1440 states.
struct Discretizer {
    static constexpr int kBearingBins = 8;
    static constexpr int kRangeBins = 5;
    static constexpr int kObstacleBins = 4;
    static constexpr int kTiltBins = 3;
    static constexpr int kSpeedBins = 3;
    static constexpr int kStates =
        kBearingBins * kRangeBins * kObstacleBins * kTiltBins * kSpeedBins;

    int state_of(const env::Environment& environment) const;
};

// Macro actions command every UAV identically through a small velocity
// tracking loop around the hover trim.
enum MacroAction : int {
    kHover = 0,
    kForwardSlow,   // +x
    kBackSlow,      // -x
    kLeftSlow,      // +y
    kRightSlow,     // -y
    kUp,            // +z
    kDown,          // -z
    kYawLeft,
    kYawRight,
    kForwardFast,   // +x, cruise speed
    kBackFast,      // -x
    kMacroActionCount
};
static_assert(kMacroActionCount == 11);

env::Action macro_action_to_control(int action_id, const env::Environment& environment);

struct QTable {
    MatX values;  // (states, actions), zero initialized

    QTable() : values(MatX::Zero(Discretizer::kStates, kMacroActionCount)) {}
    explicit QTable(int states, int actions) : values(MatX::Zero(states, actions)) {}
};

int greedy_action(const QTable& table, int state);

void q_learning_update(QTable& table, int s, int a, double reward, int s_next, bool done,
                       double alpha, double discount);
void sarsa_update(QTable& table, int s, int a, double reward, int s_next, int a_next,
                  bool done, double alpha, double discount);

struct Transition {
    VecX obs;
    int action = 0;
    double reward = 0.0;
    VecX next_obs;
    bool done = false;
};

// FIFO ring buffer; eviction order is insertion order.
class ReplayBuffer {
  public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}
    void push(Transition t);
    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& sample(Rng& rng) const { return data_[rng.uniform_index(data_.size())]; }
    const Transition& at(std::size_t i) const { return data_[i]; }

  private:
    std::size_t capacity_;
    std::size_t write_ = 0;
    std::vector<Transition> data_;
};

struct DqnConfig {
    std::size_t replay_capacity = 100000;
    int batch = 64;
    int target_sync = 1000;  // decisions between hard target syncs
    double eps_start = 1.0;
    double eps_end = 0.05;
    long eps_decay_steps = 200000;  // decisions for the linear decay
    double discount = 0.99;
    double lr = 1e-3;
    int train_every = 4;  // decisions between updates
    std::vector<int> hidden = {128, 128};
};

// Linear, monotone non-increasing schedule.
double epsilon_at(long step, double eps_start, double eps_end, long decay_steps);

// Squared TD error against the target net over a sampled batch; Adam step.
double dqn_update(nn::DenseNet& net, const nn::DenseNet& target_net,
                  const std::vector<const Transition*>& batch, const DqnConfig& config,
                  nn::AdamState& adam);

int greedy_action_dqn(const nn::DenseNet& net, const VecX& obs);

enum class TabularMethod { QLearning, Sarsa };

struct BaselineTrainConfig {
    long env_step_budget = 200000;  // control steps
    int action_repeat = 5;          // control steps per decision
    double alpha = 0.2;             // tabular learning rate
    double discount = 0.99;
    double eps_start = 1.0;
    double eps_end = 0.05;
    long eps_decay_steps = 20000;  // decisions
    std::uint64_t seed = 0;
    long curve_stride = 4096;  // env steps between curve rows
    DqnConfig dqn;
};

struct BaselineResult {
    QTable table;       // tabular methods
    nn::DenseNet q_net; // DQN
    std::vector<rl::CurvePoint> curve;
    long env_steps = 0;
    std::string fault;
};

struct BaselineCallbacks {
    std::function<void(const rl::CurvePoint&)> on_curve_point;
};

BaselineResult train_tabular(TabularMethod method, const env::EnvConfig& env_config,
                             const BaselineTrainConfig& config,
                             const BaselineCallbacks& callbacks = {});

BaselineResult train_dqn(const env::EnvConfig& env_config, const BaselineTrainConfig& config,
                         const BaselineCallbacks& callbacks = {});

}  // namespace multilift::baselines
