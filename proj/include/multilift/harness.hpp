#pragma once

#include "multilift/baselines.hpp"
#include "multilift/env.hpp"
#include "multilift/rl.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace multilift::harness {

enum class Method { Dral, QLearning, Sarsa, Dqn };
const char* to_string(Method m);
Method method_from_string(const std::string& s);

struct EvalConfig {
    int n_trials = 10;  // per class per seed
    std::vector<world::PayloadClass> classes = {world::PayloadClass::Box,
                                                world::PayloadClass::Package,
                                                world::PayloadClass::Bucket};
    std::vector<std::uint64_t> seeds = {1, 2, 3};
};

struct ExperimentConfig {
    Method method = Method::Dral;
    std::uint64_t seed = 0;
    env::EnvConfig env;  // env + physics blocks of the config file
    rl::TrainConfig dral;
    baselines::BaselineTrainConfig qlearning;
    baselines::BaselineTrainConfig sarsa;
    baselines::BaselineTrainConfig dqn;
    EvalConfig eval;
    std::string output_dir = "out";
};

// Thrown on schema violations; the message carries the offending key path.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

nlohmann::json config_to_json(const ExperimentConfig& config);
// Strict: unknown keys anywhere are an error naming the key path.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& config, const std::string& path);

struct TrialRecord {
    std::uint64_t seed = 0;
    world::PayloadClass cls = world::PayloadClass::Box;
    env::Termination outcome = env::Termination::Timeout;
    std::optional<double> reach_time_s;  // present exactly when outcome is success
    int steps = 0;
    double path_length_m = 0.0;
};

struct ClassSummary {
    world::PayloadClass cls = world::PayloadClass::Box;
    int trials = 0;
    int successes = 0;
    double success_rate = 0.0;
    std::optional<double> reach_time_mean_s;
    std::optional<double> reach_time_std_s;
};

struct MetricsSummary {
    Method method = Method::Dral;
    std::vector<ClassSummary> classes;
};

// One trained agent plus enough context to evaluate it.
struct Checkpoint {
    Method method = Method::Dral;
    rl::GaussianPolicy policy;  // dral
    nn::DenseNet critic;
    nn::AdamState actor_adam;
    nn::AdamState critic_adam;
    baselines::QTable table;  // qlearning / sarsa
    nn::DenseNet q_net;       // dqn
    int action_repeat = 5;    // macro methods
    std::uint64_t seed = 0;
    nlohmann::json config_echo;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct EvalOutput {
    MetricsSummary summary;
    std::vector<TrialRecord> trials;
};

// Deterministic evaluation episodes for each class x seed x trial.
EvalOutput run_eval(const Checkpoint& checkpoint, const ExperimentConfig& config,
                    const std::string& trace_path = "");

struct TrainOutput {
    Checkpoint checkpoint;
    std::vector<rl::CurvePoint> curve;
    std::string fault;
};

// Dispatches on config.method; streams curve rows to curves.csv under out_dir.
TrainOutput train_method(const ExperimentConfig& config, const std::string& out_dir);

// CSV writers (atomic: temp file + rename).
void write_file_atomic(const std::string& path, const std::string& content);
std::string trials_csv(const std::vector<TrialRecord>& trials);
std::string summary_csv(const MetricsSummary& summary);
std::string curves_csv(Method method, const std::vector<rl::CurvePoint>& curve);

// Table-of-results renderings: rows metric x method, columns payload classes.
std::string results_table_csv(const std::vector<MetricsSummary>& summaries);
std::string results_table_text(const std::vector<MetricsSummary>& summaries);

// Merged long-format progress file, truncated to the shortest method budget.
std::string progress_csv(
    const std::vector<std::pair<Method, std::vector<rl::CurvePoint>>>& curves);

// Trains all four methods, evaluates each, emits table + progress files.
int run_bench(const ExperimentConfig& config, int jobs);

int cli(int argc, const char* const* argv);

}  // namespace multilift::harness
