#pragma once

#include "multilift/physics.hpp"
#include "multilift/types.hpp"
#include "multilift/world.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <utility>
#include <vector>

namespace multilift::env {

// Joint action: one [-1,1]^4 block per UAV of (collective thrust fraction,
// roll-rate, pitch-rate, yaw-rate commands). Clamped on entry to step().
struct Action {
    VecX values;
    static Action zeros(int n_uavs) { return {VecX::Zero(4 * n_uavs)}; }
};
constexpr int kActionPerUav = 4;

// Per-UAV observation block layout (kObsPerUav entries):
//   depth image (45), velocity / v_max (3), body rates / omega_max (3),
//   attitude normalized (3), cable stretch / rest length (1),
//   goal [visible, azimuth, elevation, range] (4).
// The full observation stacks frame_stack frames of all UAV blocks, oldest
// frame first. Every entry lies in [-1, 1.5].
constexpr int kObsPerUav = 59;

enum class Termination { Running, Success, Collision, Crash, Timeout };
const char* to_string(Termination t);

struct StepResult {
    VecX observation;
    VecX privileged;
    double reward = 0.0;
    bool done = false;
    Termination reason = Termination::Running;
};

struct Region {
    Vec3 center = Vec3(2.0, 4.0, 0.8);
    double radius = 0.0;  // XY disc; 0 pins the payload to the center
};

struct EpisodeConfig {
    std::uint64_t seed = 0;
    world::Difficulty difficulty = world::Difficulty::Easy;
    world::PayloadClass payload_class = world::PayloadClass::Box;
    Region start;
    Vec3 goal = Vec3(12.0, 4.0, 1.0);
    double goal_radius = 0.0;  // XY disc around goal when > 0
    int max_steps = 1200;      // 60 s at 20 Hz
    int n_uavs = 3;
};

struct RewardCoeffs {
    double progress = 10.0;   // per meter toward the goal
    double tilt = 0.2;        // per radian of payload tilt
    double effort = 0.05;     // per unit squared action
    double overspeed = 0.5;   // per m/s above v_max, per body
    double time = 0.01;       // per control step
    double terminal = 100.0;  // +success / -collision or crash
};

struct Randomization {
    bool enabled = true;
    double thrust_coeff_jitter = 0.2;  // +-20 % per UAV
    double uav_mass_jitter = 0.1;      // +-10 %
    double cable_length_min = 0.8;     // m
    double cable_length_max = 1.2;
    double wind_probability = 0.0;  // chance of a horizontal wind band
    double wind_speed_max = 0.3;    // m/s
};

// Indoor sensing gates the goal by FOV and range; the simplified training
// task exposes the bearing unconditionally.
enum class GoalSensing { Fov, Always };

struct EnvConfig {
    EpisodeConfig episode;
    world::SensorSpec sensor;
    physics::PhysicsParams physics;
    physics::CableSpec cable;  // per-episode rest length may be randomized
    RewardCoeffs reward;
    Randomization randomization;
    int frame_stack = 4;
    int substeps = 5;  // physics substeps per control step
    bool payload_enabled = true;
    GoalSensing goal_sensing = GoalSensing::Fov;
    double uav_mass = 1.0;            // nominal, kg
    double v_max = 3.4;               // m/s
    double omega_max = 0.57;          // rad/s
    double success_radius = 0.5;      // m
    double success_speed = 0.5;       // m/s
    double min_uav_separation = 0.3;  // m
    double crash_tilt = deg2rad(60.0);
    double ground_z = 0.05;   // m
    double uav_radius = 0.15; // m, collision sphere
    // Lateral offset of the cable anchor on each UAV (an inward arm), so
    // hovering UAV centers form a wider ring than the payload attach points.
    double cable_arm = 0.3;   // m
};

// One domain-randomization draw; deterministic per seed.
struct DomainDraw {
    world::PayloadSample payload;
    std::vector<double> thrust_ratio;  // realized / commanded thrust, per UAV
    std::vector<double> uav_mass;      // kg
    double cable_length = 1.0;         // m
    std::optional<physics::WindBand> wind;
};

DomainDraw randomize(const EnvConfig& config, std::uint64_t seed);

int observation_size(const EnvConfig& config);
int privileged_size(const EnvConfig& config);

class Environment {
  public:
    explicit Environment(EnvConfig config);

    // Builds the episode world from the config seed and places the system at
    // the computed hover equilibrium. Returns (observation, privileged).
    std::pair<VecX, VecX> reset(const EpisodeConfig& episode);

    StepResult step(const Action& action);

    bool done() const { return done_; }
    Termination reason() const { return reason_; }
    int steps() const { return steps_; }
    double time() const { return state_.t; }
    double path_length() const { return path_length_; }

    const EnvConfig& config() const { return config_; }
    const physics::SystemState& state() const { return state_; }
    const world::OccupancyGrid& grid() const { return grid_; }
    const Vec3& goal() const { return goal_; }
    const physics::Controls& last_controls() const { return last_controls_; }
    const std::vector<physics::CableSpec>& cables() const { return cables_; }
    const physics::PhysicsParams& episode_params() const { return params_; }

    // Distance from the tracked body (payload CoM, or UAV 0 without payload).
    double goal_distance() const;
    double tracked_speed() const;
    double payload_tilt() const;
    // Nearest obstacle distance from the latest depth images, in meters.
    double min_obstacle_distance() const;
    // Trim command holding the nominal-mass system at hover.
    Action hover_action() const;

    void set_trace(std::ostream* sink) { trace_ = sink; }

  private:
    VecX observe();
    VecX privileged() const;
    Termination classify() const;
    double shaped_reward(double prev_distance, const Action& clamped, Termination reason) const;
    Vec3 tracked_position() const;
    void write_trace(const Action& action, double reward, Termination reason);

    EnvConfig config_;
    world::OccupancyGrid grid_;
    DomainDraw draw_;
    std::vector<physics::CableSpec> cables_;
    physics::PhysicsParams params_;  // episode copy (wind band applied)
    physics::SystemState state_;
    Vec3 goal_ = Vec3::Zero();
    std::vector<world::SenseResult> last_sense_;
    std::vector<VecX> frames_;
    physics::Controls last_controls_;
    int steps_ = 0;
    bool done_ = false;
    bool started_ = false;
    Termination reason_ = Termination::Running;
    double prev_distance_ = 0.0;
    double path_length_ = 0.0;
    std::ostream* trace_ = nullptr;
};

}  // namespace multilift::env
