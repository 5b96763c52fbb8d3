#include "multilift/harness.hpp"

#include "multilift/checks.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace multilift::harness {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(Method m) {
    switch (m) {
        case Method::Dral: return "dral";
        case Method::QLearning: return "qlearning";
        case Method::Sarsa: return "sarsa";
        case Method::Dqn: return "dqn";
    }
    return "?";
}

Method method_from_string(const std::string& s) {
    if (s == "dral") return Method::Dral;
    if (s == "qlearning") return Method::QLearning;
    if (s == "sarsa") return Method::Sarsa;
    if (s == "dqn") return Method::Dqn;
    throw ConfigError("unknown method: " + s);
}

// ---------------------------------------------------------------------------
// Config schema
// ---------------------------------------------------------------------------

namespace {

// Strict reader over one JSON object: every get marks its key, leftover keys
// are schema violations reported with their full path.
class ObjectReader {
  public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        if (auto it = j_.find(key); it != j_.end()) {
            try {
                out = it->get<T>();
            } catch (const json::exception&) {
                throw ConfigError(path_ + "." + key + ": wrong type");
            }
            seen_.push_back(key);
        }
    }

    bool has(const char* key) const { return j_.contains(key); }

    const json* child(const char* key) {
        if (auto it = j_.find(key); it != j_.end()) {
            seen_.push_back(key);
            return &*it;
        }
        return nullptr;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end()) {
                throw ConfigError(path_ + "." + it.key() + ": unknown key");
            }
        }
    }

    const std::string& path() const { return path_; }

  private:
    const json& j_;
    std::string path_;
    std::vector<std::string> seen_;
};

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 3) throw ConfigError(path + ": expected [x, y, z]");
    return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

json sensor_to_json(const world::SensorSpec& s) {
    return {{"h_fov_deg", s.h_fov * 180.0 / M_PI},
            {"v_fov_deg", s.v_fov * 180.0 / M_PI},
            {"max_range", s.max_range},
            {"n_rays_h", s.n_rays_h},
            {"n_rays_v", s.n_rays_v}};
}

void sensor_from_json(const json& j, const std::string& path, world::SensorSpec& s) {
    ObjectReader r(j, path);
    double h_deg = s.h_fov * 180.0 / M_PI, v_deg = s.v_fov * 180.0 / M_PI;
    r.get("h_fov_deg", h_deg);
    r.get("v_fov_deg", v_deg);
    r.get("max_range", s.max_range);
    r.get("n_rays_h", s.n_rays_h);
    r.get("n_rays_v", s.n_rays_v);
    r.finish();
    s.h_fov = deg2rad(h_deg);
    s.v_fov = deg2rad(v_deg);
}

json env_to_json(const env::EnvConfig& e) {
    json j;
    j["n_uavs"] = e.episode.n_uavs;
    j["difficulty"] = world::to_string(e.episode.difficulty);
    j["payload_class"] = world::to_string(e.episode.payload_class);
    j["start_center"] = vec3_to_json(e.episode.start.center);
    j["start_radius"] = e.episode.start.radius;
    j["goal"] = vec3_to_json(e.episode.goal);
    j["goal_radius"] = e.episode.goal_radius;
    j["max_steps"] = e.episode.max_steps;
    j["frame_stack"] = e.frame_stack;
    j["substeps"] = e.substeps;
    j["payload_enabled"] = e.payload_enabled;
    j["goal_sensing"] = e.goal_sensing == env::GoalSensing::Always ? "always" : "fov";
    j["uav_mass"] = e.uav_mass;
    j["v_max"] = e.v_max;
    j["omega_max"] = e.omega_max;
    j["success_radius"] = e.success_radius;
    j["success_speed"] = e.success_speed;
    j["min_uav_separation"] = e.min_uav_separation;
    j["crash_tilt_deg"] = e.crash_tilt * 180.0 / M_PI;
    j["ground_z"] = e.ground_z;
    j["uav_radius"] = e.uav_radius;
    j["cable_arm"] = e.cable_arm;
    j["sensor"] = sensor_to_json(e.sensor);
    j["reward"] = {{"progress", e.reward.progress},   {"tilt", e.reward.tilt},
                   {"effort", e.reward.effort},       {"overspeed", e.reward.overspeed},
                   {"time", e.reward.time},           {"terminal", e.reward.terminal}};
    j["randomization"] = {{"enabled", e.randomization.enabled},
                          {"thrust_coeff_jitter", e.randomization.thrust_coeff_jitter},
                          {"uav_mass_jitter", e.randomization.uav_mass_jitter},
                          {"cable_length_min", e.randomization.cable_length_min},
                          {"cable_length_max", e.randomization.cable_length_max},
                          {"wind_probability", e.randomization.wind_probability},
                          {"wind_speed_max", e.randomization.wind_speed_max}};
    return j;
}

void env_from_json(const json& j, env::EnvConfig& e) {
    ObjectReader r(j, "env");
    r.get("n_uavs", e.episode.n_uavs);
    std::string difficulty = world::to_string(e.episode.difficulty);
    std::string cls = world::to_string(e.episode.payload_class);
    r.get("difficulty", difficulty);
    r.get("payload_class", cls);
    e.episode.difficulty = world::difficulty_from_string(difficulty);
    e.episode.payload_class = world::payload_class_from_string(cls);
    if (const json* c = r.child("start_center")) {
        e.episode.start.center = vec3_from_json(*c, "env.start_center");
    }
    r.get("start_radius", e.episode.start.radius);
    if (const json* c = r.child("goal")) e.episode.goal = vec3_from_json(*c, "env.goal");
    r.get("goal_radius", e.episode.goal_radius);
    r.get("max_steps", e.episode.max_steps);
    r.get("frame_stack", e.frame_stack);
    r.get("substeps", e.substeps);
    r.get("payload_enabled", e.payload_enabled);
    std::string sensing = e.goal_sensing == env::GoalSensing::Always ? "always" : "fov";
    r.get("goal_sensing", sensing);
    if (sensing == "always") {
        e.goal_sensing = env::GoalSensing::Always;
    } else if (sensing == "fov") {
        e.goal_sensing = env::GoalSensing::Fov;
    } else {
        throw ConfigError("env.goal_sensing: expected fov or always");
    }
    r.get("uav_mass", e.uav_mass);
    r.get("v_max", e.v_max);
    r.get("omega_max", e.omega_max);
    r.get("success_radius", e.success_radius);
    r.get("success_speed", e.success_speed);
    r.get("min_uav_separation", e.min_uav_separation);
    double crash_tilt_deg = e.crash_tilt * 180.0 / M_PI;
    r.get("crash_tilt_deg", crash_tilt_deg);
    e.crash_tilt = deg2rad(crash_tilt_deg);
    r.get("ground_z", e.ground_z);
    r.get("uav_radius", e.uav_radius);
    r.get("cable_arm", e.cable_arm);
    if (const json* c = r.child("sensor")) sensor_from_json(*c, "env.sensor", e.sensor);
    if (const json* c = r.child("reward")) {
        ObjectReader rr(*c, "env.reward");
        rr.get("progress", e.reward.progress);
        rr.get("tilt", e.reward.tilt);
        rr.get("effort", e.reward.effort);
        rr.get("overspeed", e.reward.overspeed);
        rr.get("time", e.reward.time);
        rr.get("terminal", e.reward.terminal);
        rr.finish();
    }
    if (const json* c = r.child("randomization")) {
        ObjectReader rr(*c, "env.randomization");
        rr.get("enabled", e.randomization.enabled);
        rr.get("thrust_coeff_jitter", e.randomization.thrust_coeff_jitter);
        rr.get("uav_mass_jitter", e.randomization.uav_mass_jitter);
        rr.get("cable_length_min", e.randomization.cable_length_min);
        rr.get("cable_length_max", e.randomization.cable_length_max);
        rr.get("wind_probability", e.randomization.wind_probability);
        rr.get("wind_speed_max", e.randomization.wind_speed_max);
        rr.finish();
    }
    r.finish();
}

json physics_to_json(const env::EnvConfig& e) {
    const physics::PhysicsParams& p = e.physics;
    json j;
    j["gravity"] = p.gravity;
    j["thrust_coeff"] = p.thrust_coeff;
    j["drag_coeff"] = p.drag_coeff;
    j["ref_area"] = p.ref_area;
    j["rho0"] = p.rho0;
    j["dt"] = p.dt;
    j["rate_time_constant"] = p.rate_time_constant;
    j["cable"] = {{"rest_length", e.cable.rest_length},
                  {"stiffness", e.cable.stiffness},
                  {"damping", e.cable.damping}};
    json density = json::array();
    for (const auto& band : p.density_table) density.push_back({band.z, band.rho});
    j["density_table"] = density;
    json wind = json::array();
    for (const auto& band : p.wind_table) {
        wind.push_back({band.z, band.wind.x(), band.wind.y(), band.wind.z()});
    }
    j["wind_table"] = wind;
    return j;
}

void physics_from_json(const json& j, env::EnvConfig& e) {
    ObjectReader r(j, "physics");
    physics::PhysicsParams& p = e.physics;
    r.get("gravity", p.gravity);
    r.get("thrust_coeff", p.thrust_coeff);
    r.get("drag_coeff", p.drag_coeff);
    r.get("ref_area", p.ref_area);
    r.get("rho0", p.rho0);
    r.get("dt", p.dt);
    r.get("rate_time_constant", p.rate_time_constant);
    if (const json* c = r.child("cable")) {
        ObjectReader rr(*c, "physics.cable");
        rr.get("rest_length", e.cable.rest_length);
        rr.get("stiffness", e.cable.stiffness);
        rr.get("damping", e.cable.damping);
        rr.finish();
    }
    if (const json* c = r.child("density_table")) {
        p.density_table.clear();
        for (const auto& row : *c) {
            p.density_table.push_back({row.at(0).get<double>(), row.at(1).get<double>()});
        }
    }
    if (const json* c = r.child("wind_table")) {
        p.wind_table.clear();
        for (const auto& row : *c) {
            p.wind_table.push_back(
                {row.at(0).get<double>(),
                 Vec3(row.at(1).get<double>(), row.at(2).get<double>(),
                      row.at(3).get<double>())});
        }
    }
    r.finish();
}

json dral_to_json(const rl::TrainConfig& t) {
    json j;
    j["clip"] = t.ppo.clip;
    j["discount"] = t.ppo.discount;
    j["gae_lambda"] = t.ppo.gae_lambda;
    j["epochs"] = t.ppo.epochs;
    j["minibatch"] = t.ppo.minibatch;
    j["rollout_steps"] = t.ppo.rollout_steps;
    j["n_envs"] = t.ppo.n_envs;
    j["entropy_coef"] = t.ppo.entropy_coef;
    j["value_coef"] = t.ppo.value_coef;
    j["max_grad_norm"] = t.ppo.max_grad_norm;
    j["lr"] = t.ppo.lr;
    j["normalize_advantages"] = t.ppo.normalize_advantages;
    j["log_std_min"] = t.ppo.log_std_min;
    j["log_std_max"] = t.ppo.log_std_max;
    j["actor_hidden"] = t.actor_hidden;
    j["critic_hidden"] = t.critic_hidden;
    j["init_log_std"] = t.init_log_std;
    j["iterations"] = t.iterations;
    j["eval_every"] = t.eval_every;
    j["eval_episodes"] = t.eval_episodes;
    j["stop_at_eval_success"] = t.stop_at_eval_success;
    j["checkpoint_every"] = t.checkpoint_every;
    return j;
}

void dral_from_json(const json& j, rl::TrainConfig& t) {
    ObjectReader r(j, "dral");
    r.get("clip", t.ppo.clip);
    r.get("discount", t.ppo.discount);
    r.get("gae_lambda", t.ppo.gae_lambda);
    r.get("epochs", t.ppo.epochs);
    r.get("minibatch", t.ppo.minibatch);
    r.get("rollout_steps", t.ppo.rollout_steps);
    r.get("n_envs", t.ppo.n_envs);
    r.get("entropy_coef", t.ppo.entropy_coef);
    r.get("value_coef", t.ppo.value_coef);
    r.get("max_grad_norm", t.ppo.max_grad_norm);
    r.get("lr", t.ppo.lr);
    r.get("normalize_advantages", t.ppo.normalize_advantages);
    r.get("log_std_min", t.ppo.log_std_min);
    r.get("log_std_max", t.ppo.log_std_max);
    r.get("actor_hidden", t.actor_hidden);
    r.get("critic_hidden", t.critic_hidden);
    r.get("init_log_std", t.init_log_std);
    r.get("iterations", t.iterations);
    r.get("eval_every", t.eval_every);
    r.get("eval_episodes", t.eval_episodes);
    r.get("stop_at_eval_success", t.stop_at_eval_success);
    r.get("checkpoint_every", t.checkpoint_every);
    r.finish();
    if (t.ppo.clip <= 0.0 || t.ppo.clip >= 1.0) throw ConfigError("dral.clip: not in (0, 1)");
    if (t.ppo.discount < 0.0 || t.ppo.discount > 1.0) {
        throw ConfigError("dral.discount: not in [0, 1]");
    }
    if (t.ppo.gae_lambda < 0.0 || t.ppo.gae_lambda > 1.0) {
        throw ConfigError("dral.gae_lambda: not in [0, 1]");
    }
}

json baseline_to_json(const baselines::BaselineTrainConfig& b, bool with_dqn) {
    json j;
    j["env_step_budget"] = b.env_step_budget;
    j["action_repeat"] = b.action_repeat;
    j["discount"] = b.discount;
    j["curve_stride"] = b.curve_stride;
    if (with_dqn) {
        j["replay_capacity"] = b.dqn.replay_capacity;
        j["batch"] = b.dqn.batch;
        j["target_sync"] = b.dqn.target_sync;
        j["eps_start"] = b.dqn.eps_start;
        j["eps_end"] = b.dqn.eps_end;
        j["eps_decay_steps"] = b.dqn.eps_decay_steps;
        j["lr"] = b.dqn.lr;
        j["train_every"] = b.dqn.train_every;
        j["hidden"] = b.dqn.hidden;
    } else {
        j["alpha"] = b.alpha;
        j["eps_start"] = b.eps_start;
        j["eps_end"] = b.eps_end;
        j["eps_decay_steps"] = b.eps_decay_steps;
    }
    return j;
}

void baseline_from_json(const json& j, const std::string& name,
                        baselines::BaselineTrainConfig& b, bool with_dqn) {
    ObjectReader r(j, name);
    r.get("env_step_budget", b.env_step_budget);
    r.get("action_repeat", b.action_repeat);
    r.get("discount", b.discount);
    r.get("curve_stride", b.curve_stride);
    if (with_dqn) {
        r.get("replay_capacity", b.dqn.replay_capacity);
        r.get("batch", b.dqn.batch);
        r.get("target_sync", b.dqn.target_sync);
        r.get("eps_start", b.dqn.eps_start);
        r.get("eps_end", b.dqn.eps_end);
        r.get("eps_decay_steps", b.dqn.eps_decay_steps);
        r.get("lr", b.dqn.lr);
        r.get("train_every", b.dqn.train_every);
        r.get("hidden", b.dqn.hidden);
        b.dqn.discount = b.discount;
        if (b.dqn.replay_capacity < static_cast<std::size_t>(b.dqn.batch)) {
            throw ConfigError(name + ".replay_capacity: smaller than batch");
        }
        if (b.dqn.eps_start < 0.0 || b.dqn.eps_start > 1.0 || b.dqn.eps_end < 0.0 ||
            b.dqn.eps_end > 1.0) {
            throw ConfigError(name + ": epsilon not in [0, 1]");
        }
    } else {
        r.get("alpha", b.alpha);
        r.get("eps_start", b.eps_start);
        r.get("eps_end", b.eps_end);
        r.get("eps_decay_steps", b.eps_decay_steps);
        if (b.eps_start < 0.0 || b.eps_start > 1.0 || b.eps_end < 0.0 || b.eps_end > 1.0) {
            throw ConfigError(name + ": epsilon not in [0, 1]");
        }
    }
    r.finish();
}

}  // namespace

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["method"] = to_string(c.method);
    j["seed"] = c.seed;
    j["env"] = env_to_json(c.env);
    j["physics"] = physics_to_json(c.env);
    switch (c.method) {
        case Method::Dral: j["dral"] = dral_to_json(c.dral); break;
        case Method::QLearning: j["qlearning"] = baseline_to_json(c.qlearning, false); break;
        case Method::Sarsa: j["sarsa"] = baseline_to_json(c.sarsa, false); break;
        case Method::Dqn: j["dqn"] = baseline_to_json(c.dqn, true); break;
    }
    json classes = json::array();
    for (auto cls : c.eval.classes) classes.push_back(world::to_string(cls));
    j["eval"] = {{"n_trials", c.eval.n_trials}, {"classes", classes}, {"seeds", c.eval.seeds}};
    j["output_dir"] = c.output_dir;
    return j;
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    ObjectReader r(j, "config");
    std::string method = "dral";
    r.get("method", method);
    c.method = method_from_string(method);
    r.get("seed", c.seed);
    if (const json* e = r.child("env")) env_from_json(*e, c.env);
    if (const json* p = r.child("physics")) physics_from_json(*p, c.env);

    // Exactly one learner block, and it must match the method.
    int learner_blocks = 0;
    for (const char* name : {"dral", "qlearning", "sarsa", "dqn"}) {
        if (r.has(name)) ++learner_blocks;
    }
    if (learner_blocks != 1) {
        throw ConfigError("config: expected exactly one learner block (dral / qlearning / "
                          "sarsa / dqn)");
    }
    if (!r.has(to_string(c.method))) {
        throw ConfigError(std::string("config: learner block does not match method ") +
                          to_string(c.method));
    }
    if (const json* b = r.child("dral")) dral_from_json(*b, c.dral);
    if (const json* b = r.child("qlearning")) baseline_from_json(*b, "qlearning", c.qlearning, false);
    if (const json* b = r.child("sarsa")) baseline_from_json(*b, "sarsa", c.sarsa, false);
    if (const json* b = r.child("dqn")) baseline_from_json(*b, "dqn", c.dqn, true);

    if (const json* e = r.child("eval")) {
        ObjectReader rr(*e, "eval");
        rr.get("n_trials", c.eval.n_trials);
        if (const json* cls = rr.child("classes")) {
            c.eval.classes.clear();
            for (const auto& name : *cls) {
                c.eval.classes.push_back(
                    world::payload_class_from_string(name.get<std::string>()));
            }
        }
        rr.get("seeds", c.eval.seeds);
        rr.finish();
    }
    if (c.eval.seeds.empty()) throw ConfigError("eval.seeds: must be non-empty");
    r.get("output_dir", c.output_dir);
    r.finish();

    c.dral.seed = c.seed;
    c.qlearning.seed = c.seed;
    c.sarsa.seed = c.seed;
    c.dqn.seed = c.seed;
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& err) {
        // Translate the byte offset into line / column.
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < err.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::ostringstream os;
        os << path << ":" << line << ":" << col << ": " << err.what();
        throw ConfigError(os.str());
    }
    return config_from_json(j);
}

void save_config(const ExperimentConfig& config, const std::string& path) {
    write_file_atomic(path, config_to_json(config).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

void save_checkpoint(const Checkpoint& c, const std::string& path) {
    json j;
    j["format"] = "multilift-checkpoint-v1";
    j["method"] = to_string(c.method);
    j["seed"] = c.seed;
    j["action_repeat"] = c.action_repeat;
    j["config_echo"] = c.config_echo;
    switch (c.method) {
        case Method::Dral:
            j["actor"] = nn::net_to_json(c.policy.actor);
            j["action_dim"] = c.policy.action_dim;
            j["log_std_min"] = c.policy.log_std_min;
            j["log_std_max"] = c.policy.log_std_max;
            j["critic"] = nn::net_to_json(c.critic);
            j["actor_adam"] = nn::adam_to_json(c.actor_adam);
            j["critic_adam"] = nn::adam_to_json(c.critic_adam);
            break;
        case Method::QLearning:
        case Method::Sarsa: {
            json rows = json::array();
            for (Eigen::Index s = 0; s < c.table.values.rows(); ++s) {
                json row = json::array();
                for (Eigen::Index a = 0; a < c.table.values.cols(); ++a) {
                    row.push_back(c.table.values(s, a));
                }
                rows.push_back(std::move(row));
            }
            j["table"] = std::move(rows);
            break;
        }
        case Method::Dqn: j["q_net"] = nn::net_to_json(c.q_net); break;
    }
    write_file_atomic(path, j.dump() + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    json j = json::parse(in);
    if (j.value("format", "") != "multilift-checkpoint-v1") {
        throw std::runtime_error("not a multilift checkpoint: " + path);
    }
    Checkpoint c;
    c.method = method_from_string(j.at("method").get<std::string>());
    c.seed = j.value("seed", std::uint64_t{0});
    c.action_repeat = j.value("action_repeat", 5);
    if (j.contains("config_echo")) c.config_echo = j.at("config_echo");
    switch (c.method) {
        case Method::Dral:
            c.policy.actor = nn::net_from_json(j.at("actor"));
            c.policy.action_dim = j.at("action_dim").get<int>();
            c.policy.log_std_min = j.at("log_std_min").get<double>();
            c.policy.log_std_max = j.at("log_std_max").get<double>();
            c.critic = nn::net_from_json(j.at("critic"));
            c.actor_adam = nn::adam_from_json(j.at("actor_adam"), c.policy.actor);
            c.critic_adam = nn::adam_from_json(j.at("critic_adam"), c.critic);
            break;
        case Method::QLearning:
        case Method::Sarsa: {
            const json& rows = j.at("table");
            c.table = baselines::QTable(static_cast<int>(rows.size()),
                                        static_cast<int>(rows.at(0).size()));
            for (std::size_t s = 0; s < rows.size(); ++s) {
                for (std::size_t a = 0; a < rows[s].size(); ++a) {
                    c.table.values(s, a) = rows[s][a].get<double>();
                }
            }
            break;
        }
        case Method::Dqn: c.q_net = nn::net_from_json(j.at("q_net")); break;
    }
    return c;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

EvalOutput run_eval(const Checkpoint& checkpoint, const ExperimentConfig& config,
                    const std::string& trace_path) {
    if (checkpoint.method != config.method) {
        throw std::runtime_error(std::string("checkpoint method ") +
                                 to_string(checkpoint.method) + " does not match config " +
                                 to_string(config.method));
    }

    std::ofstream trace;
    if (!trace_path.empty()) trace.open(trace_path);

    EvalOutput out;
    out.summary.method = config.method;
    baselines::Discretizer disc;

    for (std::size_t ci = 0; ci < config.eval.classes.size(); ++ci) {
        const world::PayloadClass cls = config.eval.classes[ci];
        ClassSummary cs;
        cs.cls = cls;
        std::vector<double> reach_times;

        env::EnvConfig env_config = config.env;
        env_config.episode.payload_class = cls;
        env::Environment environment(env_config);
        if (trace.is_open()) environment.set_trace(&trace);

        for (std::uint64_t seed : config.eval.seeds) {
            for (int trial = 0; trial < config.eval.n_trials; ++trial) {
                env::EpisodeConfig ep = env_config.episode;
                ep.seed = mix_seed(seed, 1000003 * ci + static_cast<std::uint64_t>(trial));
                VecX obs = environment.reset(ep).first;

                while (!environment.done()) {
                    switch (config.method) {
                        case Method::Dral: {
                            const env::Action a{rl::mean_action(checkpoint.policy, obs)};
                            obs = environment.step(a).observation;
                            break;
                        }
                        case Method::QLearning:
                        case Method::Sarsa: {
                            const int macro = baselines::greedy_action(
                                checkpoint.table, disc.state_of(environment));
                            for (int k = 0; k < checkpoint.action_repeat &&
                                            !environment.done();
                                 ++k) {
                                obs = environment
                                          .step(baselines::macro_action_to_control(
                                              macro, environment))
                                          .observation;
                            }
                            break;
                        }
                        case Method::Dqn: {
                            const int macro =
                                baselines::greedy_action_dqn(checkpoint.q_net, obs);
                            for (int k = 0; k < checkpoint.action_repeat &&
                                            !environment.done();
                                 ++k) {
                                obs = environment
                                          .step(baselines::macro_action_to_control(
                                              macro, environment))
                                          .observation;
                            }
                            break;
                        }
                    }
                }

                TrialRecord record;
                record.seed = seed;
                record.cls = cls;
                record.outcome = environment.reason();
                record.steps = environment.steps();
                record.path_length_m = environment.path_length();
                cs.trials += 1;
                if (record.outcome == env::Termination::Success) {
                    record.reach_time_s = environment.time();
                    reach_times.push_back(*record.reach_time_s);
                    cs.successes += 1;
                }
                out.trials.push_back(std::move(record));
            }
        }

        cs.success_rate = cs.trials ? static_cast<double>(cs.successes) / cs.trials : 0.0;
        if (!reach_times.empty()) {
            double mean = 0.0;
            for (double t : reach_times) mean += t;
            mean /= reach_times.size();
            cs.reach_time_mean_s = mean;
            if (reach_times.size() > 1) {
                double var = 0.0;
                for (double t : reach_times) var += (t - mean) * (t - mean);
                cs.reach_time_std_s = std::sqrt(var / (reach_times.size() - 1));
            } else {
                cs.reach_time_std_s = 0.0;
            }
        }
        out.summary.classes.push_back(std::move(cs));
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV / table rendering
// ---------------------------------------------------------------------------

void write_file_atomic(const std::string& path, const std::string& content) {
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
    }
    fs::rename(tmp, target);
}

namespace {

// Shortest round-trip decimal rendering, stable across runs.
std::string fmt(double x) { return json(x).dump(); }

}  // namespace

std::string trials_csv(const std::vector<TrialRecord>& trials) {
    std::ostringstream os;
    os << "seed,class,outcome,reach_time_s,steps,path_length_m\n";
    for (const auto& t : trials) {
        os << t.seed << ',' << world::to_string(t.cls) << ',' << env::to_string(t.outcome)
           << ',' << (t.reach_time_s ? fmt(*t.reach_time_s) : "") << ',' << t.steps << ','
           << fmt(t.path_length_m) << '\n';
    }
    return os.str();
}

std::string summary_csv(const MetricsSummary& summary) {
    std::ostringstream os;
    os << "method,class,trials,successes,success_rate,reach_time_mean_s,reach_time_std_s\n";
    for (const auto& c : summary.classes) {
        os << to_string(summary.method) << ',' << world::to_string(c.cls) << ',' << c.trials
           << ',' << c.successes << ',' << fmt(c.success_rate) << ','
           << (c.reach_time_mean_s ? fmt(*c.reach_time_mean_s) : "") << ','
           << (c.reach_time_std_s ? fmt(*c.reach_time_std_s) : "") << '\n';
    }
    return os.str();
}

std::string curves_csv(Method method, const std::vector<rl::CurvePoint>& curve) {
    std::ostringstream os;
    os << "method,iteration,env_steps,mean_return,success_rate,policy_loss,value_loss,"
          "entropy,wall_clock_s\n";
    for (const auto& p : curve) {
        os << to_string(method) << ',' << p.iteration << ',' << p.env_steps << ','
           << fmt(p.mean_return) << ',' << fmt(p.success_rate) << ',' << fmt(p.policy_loss)
           << ',' << fmt(p.value_loss) << ',' << fmt(p.entropy) << ',' << fmt(p.wall_clock_s)
           << '\n';
    }
    return os.str();
}

namespace {

const ClassSummary* find_class(const MetricsSummary& s, world::PayloadClass cls) {
    for (const auto& c : s.classes) {
        if (c.cls == cls) return &c;
    }
    return nullptr;
}

constexpr world::PayloadClass kAllClasses[] = {
    world::PayloadClass::Box, world::PayloadClass::Package, world::PayloadClass::Bucket};

}  // namespace

std::string results_table_csv(const std::vector<MetricsSummary>& summaries) {
    std::ostringstream os;
    os << "metric,method,box,package,bucket\n";
    for (const char* metric : {"success_rate", "reach_time_s"}) {
        for (const auto& s : summaries) {
            os << metric << ',' << to_string(s.method);
            for (world::PayloadClass cls : kAllClasses) {
                os << ',';
                if (const ClassSummary* c = find_class(s, cls)) {
                    if (std::string(metric) == "success_rate") {
                        os << fmt(c->success_rate);
                    } else if (c->reach_time_mean_s) {
                        os << fmt(*c->reach_time_mean_s);
                    }
                }
            }
            os << '\n';
        }
    }
    return os.str();
}

std::string results_table_text(const std::vector<MetricsSummary>& summaries) {
    // Missing entries render as an em dash, the usual table convention.
    auto cell = [](const std::optional<double>& v) {
        if (!v) return std::string("—");
        std::ostringstream os;
        os.setf(std::ios::fixed);
        os.precision(3);
        os << *v;
        return os.str();
    };

    std::ostringstream os;
    os << "metric        method      box       package   bucket\n";
    os << "------------  ----------  --------  --------  --------\n";
    for (const char* metric : {"success_rate", "reach_time_s"}) {
        for (const auto& s : summaries) {
            std::ostringstream row;
            row.setf(std::ios::left);
            row.width(14);
            row << metric;
            row.width(12);
            row << to_string(s.method);
            for (world::PayloadClass cls : kAllClasses) {
                const ClassSummary* c = find_class(s, cls);
                std::string value = "—";
                if (c) {
                    if (std::string(metric) == "success_rate") {
                        value = cell(c->success_rate);
                    } else {
                        value = cell(c->reach_time_mean_s);
                    }
                }
                row.width(10);
                row << value;
            }
            os << row.str() << '\n';
        }
    }
    return os.str();
}

std::string progress_csv(
    const std::vector<std::pair<Method, std::vector<rl::CurvePoint>>>& curves) {
    long shortest = std::numeric_limits<long>::max();
    for (const auto& [method, curve] : curves) {
        if (!curve.empty()) shortest = std::min(shortest, curve.back().env_steps);
    }
    if (shortest == std::numeric_limits<long>::max()) shortest = 0;

    bool truncated = false;
    std::ostringstream os;
    os << "method,env_steps,mean_return,success_rate\n";
    for (const auto& [method, curve] : curves) {
        for (const auto& p : curve) {
            if (p.env_steps > shortest) {
                truncated = true;
                break;
            }
            os << to_string(method) << ',' << p.env_steps << ',' << fmt(p.mean_return) << ','
               << fmt(p.success_rate) << '\n';
        }
    }
    if (truncated) {
        std::cerr << "multilift: progress curves truncated to " << shortest
                  << " env steps (mismatched budgets)\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Training dispatch and bench
// ---------------------------------------------------------------------------

TrainOutput train_method(const ExperimentConfig& config, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const std::string curves_path = out_dir + "/curves.csv";
    const std::string checkpoint_path = out_dir + "/checkpoint.json";

    TrainOutput out;
    out.checkpoint.method = config.method;
    out.checkpoint.seed = config.seed;
    out.checkpoint.config_echo = config_to_json(config);

    if (config.method == Method::Dral) {
        out.checkpoint.action_repeat = 1;
        rl::TrainCallbacks callbacks;
        std::vector<rl::CurvePoint>* curve_sink = &out.curve;
        callbacks.on_curve_point = [curve_sink](const rl::CurvePoint& p) {
            curve_sink->push_back(p);
        };
        Checkpoint* ck = &out.checkpoint;
        const Method method = config.method;
        callbacks.on_checkpoint = [&, ck](const rl::TrainResult& r, int) {
            ck->policy = r.policy;
            ck->critic = r.critic;
            ck->actor_adam = r.actor_adam;
            ck->critic_adam = r.critic_adam;
            save_checkpoint(*ck, checkpoint_path);
            write_file_atomic(curves_path, curves_csv(method, *curve_sink));
        };
        rl::TrainResult result = rl::train_ppo(config.env, config.dral, callbacks);
        out.fault = result.fault;
        out.checkpoint.policy = std::move(result.policy);
        out.checkpoint.critic = std::move(result.critic);
        out.checkpoint.actor_adam = std::move(result.actor_adam);
        out.checkpoint.critic_adam = std::move(result.critic_adam);
    } else {
        baselines::BaselineCallbacks callbacks;
        callbacks.on_curve_point = [&](const rl::CurvePoint& p) { out.curve.push_back(p); };
        baselines::BaselineResult result;
        switch (config.method) {
            case Method::QLearning:
                out.checkpoint.action_repeat = config.qlearning.action_repeat;
                result = baselines::train_tabular(baselines::TabularMethod::QLearning,
                                                  config.env, config.qlearning, callbacks);
                out.checkpoint.table = std::move(result.table);
                break;
            case Method::Sarsa:
                out.checkpoint.action_repeat = config.sarsa.action_repeat;
                result = baselines::train_tabular(baselines::TabularMethod::Sarsa, config.env,
                                                  config.sarsa, callbacks);
                out.checkpoint.table = std::move(result.table);
                break;
            case Method::Dqn:
                out.checkpoint.action_repeat = config.dqn.action_repeat;
                result = baselines::train_dqn(config.env, config.dqn, callbacks);
                out.checkpoint.q_net = std::move(result.q_net);
                break;
            default: break;
        }
        out.fault = result.fault;
    }

    save_checkpoint(out.checkpoint, checkpoint_path);
    write_file_atomic(curves_path, curves_csv(config.method, out.curve));
    return out;
}

int run_bench(const ExperimentConfig& base, int jobs) {
    const std::vector<Method> methods = {Method::Dral, Method::QLearning, Method::Sarsa,
                                         Method::Dqn};
    std::vector<ExperimentConfig> configs;
    for (Method m : methods) {
        ExperimentConfig c = base;
        c.method = m;
        configs.push_back(std::move(c));
    }

    std::vector<TrainOutput> outputs(methods.size());
    std::vector<EvalOutput> evals(methods.size());
    std::vector<std::string> errors(methods.size());
    std::size_t next = 0;
    std::mutex mu;
    auto worker = [&]() {
        for (;;) {
            std::size_t idx;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (next >= methods.size()) return;
                idx = next++;
            }
            const ExperimentConfig& c = configs[idx];
            const std::string dir = c.output_dir + "/" + to_string(c.method);
            try {
                outputs[idx] = train_method(c, dir);
                evals[idx] = run_eval(outputs[idx].checkpoint, c);
                write_file_atomic(dir + "/trials.csv", trials_csv(evals[idx].trials));
                write_file_atomic(dir + "/summary.csv", summary_csv(evals[idx].summary));
            } catch (const std::exception& err) {
                errors[idx] = err.what();
            }
        }
    };

    jobs = std::max(1, std::min<int>(jobs, methods.size()));
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    bool failed = false;
    for (std::size_t i = 0; i < methods.size(); ++i) {
        if (!errors[i].empty()) {
            std::cerr << "multilift: " << to_string(methods[i]) << " failed: " << errors[i]
                      << "\n";
            failed = true;
        } else if (!outputs[i].fault.empty()) {
            std::cerr << "multilift: " << to_string(methods[i])
                      << " faulted mid-run: " << outputs[i].fault << "\n";
        }
    }
    if (failed) return 2;

    std::vector<MetricsSummary> summaries;
    std::vector<std::pair<Method, std::vector<rl::CurvePoint>>> curves;
    for (std::size_t i = 0; i < methods.size(); ++i) {
        summaries.push_back(evals[i].summary);
        curves.emplace_back(methods[i], outputs[i].curve);
    }
    write_file_atomic(base.output_dir + "/table.csv", results_table_csv(summaries));
    write_file_atomic(base.output_dir + "/table.txt", results_table_text(summaries));
    write_file_atomic(base.output_dir + "/progress.csv", progress_csv(curves));
    std::cout << results_table_text(summaries);
    return 0;
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

namespace {

void print_checks(const std::vector<checks::CheckResult>& results) {
    for (const auto& r : results) {
        std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << " -- " << r.detail
                  << "\n";
    }
}

}  // namespace

int cli(int argc, const char* const* argv) {
    CLI::App app{"multi-UAV slung-payload transport: simulator, learners, benchmark"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, out_override, trace_path;
    std::uint64_t seed_override = 0;
    bool seed_set = false;
    int jobs = 2;

    CLI::App* train = app.add_subcommand("train", "train the configured method");
    train->add_option("--config", config_path, "experiment config file")->required();
    train->add_option("--seed", seed_override, "override the training seed")
        ->each([&](const std::string&) { seed_set = true; });
    train->add_option("--out", out_override, "override the output directory");

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval_cmd->add_option("--config", config_path, "experiment config file")->required();
    eval_cmd->add_option("--out", out_override, "override the output directory");
    eval_cmd->add_option("--trace", trace_path, "write episode traces (JSON lines)");

    CLI::App* bench = app.add_subcommand(
        "bench", "train all four methods, evaluate, and emit table + curves");
    bench->add_option("--config", config_path, "experiment config file")->required();
    bench->add_option("--out", out_override, "override the output directory");
    bench->add_option("--jobs", jobs, "concurrent training jobs");

    bool check_physics = false, check_gradients = false, check_gae = false;
    CLI::App* check = app.add_subcommand("check", "run the invariant suites");
    check->add_flag("--physics", check_physics, "physics invariants");
    check->add_flag("--gradients", check_gradients, "gradient oracle");
    check->add_flag("--gae", check_gae, "advantage estimation oracle");

    std::uint64_t map_seed = 0;
    std::string map_difficulty = "easy";
    CLI::App* map_cmd = app.add_subcommand("map", "print a procedurally sampled map");
    map_cmd->add_option("--seed", map_seed, "map seed");
    map_cmd->add_option("--difficulty", map_difficulty, "empty | easy | medium | hard");
    map_cmd->add_option("--out", out_override, "also write the map to a file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err) == 0 ? 0 : 1;
    }

    try {
        if (train->parsed()) {
            ExperimentConfig config = load_config(config_path);
            if (seed_set) {
                config.seed = seed_override;
                config.dral.seed = seed_override;
                config.qlearning.seed = seed_override;
                config.sarsa.seed = seed_override;
                config.dqn.seed = seed_override;
            }
            if (!out_override.empty()) config.output_dir = out_override;
            const std::string dir = config.output_dir + "/" + to_string(config.method);
            const TrainOutput out = train_method(config, dir);
            if (!out.fault.empty()) {
                std::cerr << "multilift: training faulted: " << out.fault << "\n";
                return 2;
            }
            std::cout << "trained " << to_string(config.method) << ": " << dir
                      << "/checkpoint.json (" << out.curve.size() << " curve rows)\n";
            return 0;
        }
        if (eval_cmd->parsed()) {
            ExperimentConfig config = load_config(config_path);
            if (!out_override.empty()) config.output_dir = out_override;
            Checkpoint checkpoint;
            try {
                checkpoint = load_checkpoint(checkpoint_path);
            } catch (const std::exception& err) {
                std::cerr << "multilift: " << err.what() << "\n";
                return 1;
            }
            EvalOutput out;
            try {
                out = run_eval(checkpoint, config, trace_path);
            } catch (const std::runtime_error& err) {
                std::cerr << "multilift: " << err.what() << "\n";
                return 1;
            }
            fs::create_directories(config.output_dir);
            write_file_atomic(config.output_dir + "/trials.csv", trials_csv(out.trials));
            write_file_atomic(config.output_dir + "/summary.csv", summary_csv(out.summary));
            std::cout << summary_csv(out.summary);
            return 0;
        }
        if (bench->parsed()) {
            ExperimentConfig config = load_config(config_path);
            if (!out_override.empty()) config.output_dir = out_override;
            return run_bench(config, jobs);
        }
        if (check->parsed()) {
            const bool all = !check_physics && !check_gradients && !check_gae;
            std::vector<checks::CheckResult> results;
            if (check_physics || all) {
                auto r = checks::run_physics_checks();
                results.insert(results.end(), r.begin(), r.end());
            }
            if (check_gradients || all) {
                auto r = checks::run_gradient_checks();
                results.insert(results.end(), r.begin(), r.end());
            }
            if (check_gae || all) {
                auto r = checks::run_gae_checks();
                results.insert(results.end(), r.begin(), r.end());
            }
            print_checks(results);
            return checks::all_passed(results) ? 0 : 2;
        }
        if (map_cmd->parsed()) {
            const world::OccupancyGrid grid =
                world::sample_map(map_seed, world::difficulty_from_string(map_difficulty));
            const std::string text = world::grid_to_text(grid);
            std::cout << text;
            if (!out_override.empty()) write_file_atomic(out_override, text);
            return 0;
        }
    } catch (const ConfigError& err) {
        std::cerr << "multilift: config error: " << err.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& err) {
        std::cerr << "multilift: " << err.what() << "\n";
        return 1;
    } catch (const std::exception& err) {
        std::cerr << "multilift: internal fault: " << err.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace multilift::harness
