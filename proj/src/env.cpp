#include "multilift/env.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace multilift::env {

const char* to_string(Termination t) {
    switch (t) {
        case Termination::Running: return "running";
        case Termination::Success: return "success";
        case Termination::Collision: return "collision";
        case Termination::Crash: return "crash";
        case Termination::Timeout: return "timeout";
    }
    return "?";
}

DomainDraw randomize(const EnvConfig& config, std::uint64_t seed) {
    const EpisodeConfig& ep = config.episode;
    DomainDraw draw;
    if (!config.randomization.enabled) {
        // Nominal draw: class midpoint mass, calibrated thrust, default cables.
        draw.payload = world::sample_payload(ep.payload_class, 0, ep.n_uavs);
        draw.payload.mass = 0.5 * (world::payload_class_mass_min(ep.payload_class) +
                                   world::payload_class_mass_max(ep.payload_class));
        draw.payload.inertia_diag = draw.payload.geometry.inertia_diag(draw.payload.mass);
        draw.thrust_ratio.assign(ep.n_uavs, 1.0);
        draw.uav_mass.assign(ep.n_uavs, config.uav_mass);
        draw.cable_length = config.cable.rest_length;
        return draw;
    }

    Rng rng(mix_seed(seed, 0x646f6d));  // "dom"
    draw.payload = world::sample_payload(ep.payload_class, rng.next_u64(), ep.n_uavs);
    const Randomization& r = config.randomization;
    for (int i = 0; i < ep.n_uavs; ++i) {
        draw.thrust_ratio.push_back(
            rng.uniform(1.0 - r.thrust_coeff_jitter, 1.0 + r.thrust_coeff_jitter));
        draw.uav_mass.push_back(config.uav_mass *
                                rng.uniform(1.0 - r.uav_mass_jitter, 1.0 + r.uav_mass_jitter));
    }
    draw.cable_length = rng.uniform(r.cable_length_min, r.cable_length_max);
    if (rng.uniform() < r.wind_probability) {
        const double ang = rng.uniform(0.0, 2.0 * M_PI);
        const double speed = rng.uniform(0.0, r.wind_speed_max);
        draw.wind = physics::WindBand{0.0, Vec3(speed * std::cos(ang), speed * std::sin(ang), 0)};
    }
    return draw;
}

int observation_size(const EnvConfig& config) {
    return config.episode.n_uavs * config.frame_stack * kObsPerUav;
}

int privileged_size(const EnvConfig& config) { return 22 + 13 * config.episode.n_uavs; }

Environment::Environment(EnvConfig config) : config_(std::move(config)) {
    if (config_.episode.n_uavs < 1) throw std::invalid_argument("n_uavs must be >= 1");
    if (config_.frame_stack < 1) throw std::invalid_argument("frame_stack must be >= 1");
    if (config_.sensor.n_rays_h * config_.sensor.n_rays_v != 45) {
        throw std::invalid_argument("sensor must produce 45 depth rays per frame");
    }
}

std::pair<VecX, VecX> Environment::reset(const EpisodeConfig& episode) {
    config_.episode = episode;
    const int n = episode.n_uavs;
    Rng rng(mix_seed(episode.seed, 0x657563));  // episode-local draws

    grid_ = world::sample_map(episode.seed, episode.difficulty);
    draw_ = randomize(config_, episode.seed);
    params_ = config_.physics;
    if (draw_.wind) params_.wind_table = {*draw_.wind};

    // Goal: fixed, or sampled in an XY disc until it lands in free space.
    goal_ = episode.goal;
    if (episode.goal_radius > 0.0) {
        for (int attempt = 0;; ++attempt) {
            const double ang = rng.uniform(0.0, 2.0 * M_PI);
            const double rad = episode.goal_radius * std::sqrt(rng.uniform());
            const Vec3 candidate =
                episode.goal + Vec3(rad * std::cos(ang), rad * std::sin(ang), 0.0);
            if (!world::is_occupied(grid_, candidate)) {
                goal_ = candidate;
                break;
            }
            if (attempt >= 100) throw std::runtime_error("reset: goal region fully occupied");
        }
    }
    if (world::is_occupied(grid_, goal_)) {
        throw std::invalid_argument("episode goal is occupied or outside the map");
    }

    // Start: payload CoM (or lone UAV) inside the start region, in free space.
    Vec3 start = episode.start.center;
    if (episode.start.radius > 0.0) {
        for (int attempt = 0;; ++attempt) {
            const double ang = rng.uniform(0.0, 2.0 * M_PI);
            const double rad = episode.start.radius * std::sqrt(rng.uniform());
            const Vec3 candidate =
                episode.start.center + Vec3(rad * std::cos(ang), rad * std::sin(ang), 0.0);
            if (!world::is_occupied(grid_, candidate)) {
                start = candidate;
                break;
            }
            if (attempt >= 100) throw std::invalid_argument("episode start region occupied");
        }
    } else if (world::is_occupied(grid_, start)) {
        throw std::invalid_argument("episode start is occupied");
    }

    state_ = physics::SystemState{};
    state_.uavs.resize(n);
    cables_.clear();

    if (config_.payload_enabled) {
        physics::PayloadState payload;
        payload.position = start;
        payload.mass = draw_.payload.mass;
        payload.inertia_diag = draw_.payload.inertia_diag;
        payload.geometry = draw_.payload.geometry;
        state_.payload = payload;

        for (int i = 0; i < n; ++i) {
            physics::CableSpec cable = config_.cable;
            cable.rest_length = draw_.cable_length;
            cable.payload_attach = draw_.payload.attach_points[i];
            // Anchor on an inward arm so UAV bodies ring wider than the
            // attach pattern; a single centered cable needs no arm.
            const Vec3 radial(cable.payload_attach.x(), cable.payload_attach.y(), 0.0);
            if (n > 1 && radial.norm() > 1e-9) {
                cable.uav_attach = -config_.cable_arm * radial.normalized();
            }
            cables_.push_back(cable);
        }
        const physics::HoverSolution sol =
            physics::solve_hover(payload, draw_.uav_mass, cables_, params_);
        for (int i = 0; i < n; ++i) {
            state_.uavs[i].mass = draw_.uav_mass[i];
            state_.uavs[i].position = sol.uav_positions[i];
            state_.uavs[i].rotor_speeds = sol.rotor_speeds[i];
        }
    } else {
        // Free-flight mode: a lone UAV sits at the start point, several form
        // a small ring around it.
        for (int i = 0; i < n; ++i) {
            const double ang = 2.0 * M_PI * i / n;
            const Vec3 offset =
                n == 1 ? Vec3::Zero() : Vec3(0.5 * std::cos(ang), 0.5 * std::sin(ang), 0.0);
            state_.uavs[i].mass = draw_.uav_mass[i];
            state_.uavs[i].position = start + offset;
            state_.uavs[i].rotor_speeds = physics::rotor_speeds_for_thrust(
                draw_.uav_mass[i] * params_.gravity, params_.thrust_coeff);
        }
    }

    steps_ = 0;
    done_ = false;
    started_ = true;
    reason_ = Termination::Running;
    path_length_ = 0.0;
    prev_distance_ = goal_distance();
    last_controls_.assign(n, physics::UavCommand{});

    const VecX frame = observe();
    frames_.assign(config_.frame_stack, frame);

    VecX obs(observation_size(config_));
    for (int k = 0; k < config_.frame_stack; ++k) {
        obs.segment(k * frame.size(), frame.size()) = frames_[k];
    }
    return {obs, privileged()};
}

Vec3 Environment::tracked_position() const {
    return state_.payload ? state_.payload->position : state_.uavs[0].position;
}

double Environment::goal_distance() const { return (tracked_position() - goal_).norm(); }

double Environment::tracked_speed() const {
    return state_.payload ? state_.payload->velocity.norm() : state_.uavs[0].velocity.norm();
}

double Environment::payload_tilt() const {
    return state_.payload ? state_.payload->orientation.x() : 0.0;
}

double Environment::min_obstacle_distance() const {
    double best = config_.sensor.max_range;
    for (const auto& sense : last_sense_) {
        if (sense.depth.values.size() > 0) {
            best = std::min(best, sense.depth.values.minCoeff() * config_.sensor.max_range);
        }
    }
    return best;
}

Action Environment::hover_action() const {
    const int n = config_.episode.n_uavs;
    Action a = Action::zeros(n);
    // Trim against the nominal UAV mass and the class-midpoint payload mass;
    // controllers built on this may not peek at the true draw.
    double tension = 0.0;
    if (config_.payload_enabled) {
        const auto cls = config_.episode.payload_class;
        const double mid =
            0.5 * (world::payload_class_mass_min(cls) + world::payload_class_mass_max(cls));
        tension = mid * params_.gravity / n;
    }
    for (int i = 0; i < n; ++i) {
        const double thrust = config_.uav_mass * params_.gravity + tension;
        a.values[i * kActionPerUav] = thrust / (config_.uav_mass * params_.gravity) - 1.0;
    }
    return a;
}

VecX Environment::observe() {
    const int n = config_.episode.n_uavs;
    last_sense_.clear();
    VecX frame(n * kObsPerUav);
    for (int i = 0; i < n; ++i) {
        const world::SenseResult sense = world::sense(state_, i, grid_, config_.sensor, goal_);
        last_sense_.push_back(sense);
        const physics::UavState& uav = state_.uavs[i];

        VecX block(kObsPerUav);
        block.segment(0, 45) = sense.depth.values;
        block.segment(45, 3) = uav.velocity / config_.v_max;
        block.segment(48, 3) = uav.body_rates / config_.omega_max;
        block[51] = uav.attitude.x() / M_PI;
        block[52] = uav.attitude.y() / (M_PI / 2.0);
        block[53] = uav.attitude.z() / M_PI;
        block[54] = config_.payload_enabled
                        ? physics::cable_stretch(state_, i, cables_[i]) / cables_[i].rest_length
                        : 0.0;

        if (config_.goal_sensing == GoalSensing::Always) {
            const Vec3 rel = goal_ - uav.position;
            const double range = rel.norm();
            const double az =
                range > 1e-12 ? wrap_angle(std::atan2(rel.y(), rel.x()) - uav.attitude.z()) : 0.0;
            const double el = range > 1e-12 ? std::atan2(rel.z(), rel.head<2>().norm()) : 0.0;
            block[55] = 1.0;
            block[56] = az / M_PI;
            block[57] = el / (M_PI / 2.0);
            block[58] = range / config_.sensor.max_range;
        } else if (sense.goal) {
            block[55] = 1.0;
            block[56] = sense.goal->azimuth / (config_.sensor.h_fov / 2.0);
            block[57] = sense.goal->elevation / (config_.sensor.v_fov / 2.0);
            block[58] = sense.goal->range_norm;
        } else {
            block.segment(55, 4).setZero();  // sentinel: goal not visible
        }

        frame.segment(i * kObsPerUav, kObsPerUav) = block.cwiseMax(-1.0).cwiseMin(1.5);
    }
    return frame;
}

VecX Environment::privileged() const {
    const int n = config_.episode.n_uavs;
    VecX v = VecX::Zero(privileged_size(config_));
    const Vec3 ref = tracked_position();
    if (state_.payload) {
        const physics::PayloadState& p = *state_.payload;
        v.segment<3>(0) = p.position;
        v.segment<3>(3) = p.orientation;
        v.segment<3>(6) = p.velocity;
        v.segment<3>(9) = p.angular_velocity;
        v[12] = p.mass;
        v.segment<3>(13) = p.inertia_diag;
        v[16 + static_cast<int>(config_.episode.payload_class)] = 1.0;
    }
    int at = 19;
    v.segment<3>(at) = goal_ - ref;
    at += 3;
    for (int i = 0; i < n; ++i) {
        const physics::UavState& u = state_.uavs[i];
        v.segment<3>(at) = u.position - ref;
        v.segment<3>(at + 3) = u.attitude;
        v.segment<3>(at + 6) = u.velocity;
        v.segment<3>(at + 9) = u.body_rates;
        at += 12;
    }
    for (int i = 0; i < n; ++i) {
        v[at++] = state_.payload ? physics::cable_tension(state_, i, cables_[i]) : 0.0;
    }
    return v;
}

namespace {

// Room-collision probe; ground strikes are classed as crash, not collision.
bool hits_room(const world::OccupancyGrid& grid, const Vec3& p) {
    if (p.z() <= 0.0) return false;
    return world::is_occupied(grid, p);
}

}  // namespace

Termination Environment::classify() const {
    const double dist = (tracked_position() - goal_).norm();
    if (dist < config_.success_radius && tracked_speed() < config_.success_speed) {
        return Termination::Success;
    }

    const int n = config_.episode.n_uavs;
    for (int i = 0; i < n; ++i) {
        const Vec3& p = state_.uavs[i].position;
        bool hit = hits_room(grid_, p);
        for (int axis = 0; axis < 3 && !hit; ++axis) {
            Vec3 off = Vec3::Zero();
            off[axis] = config_.uav_radius;
            hit = hits_room(grid_, p + off) || hits_room(grid_, p - off);
        }
        if (hit) return Termination::Collision;
        for (int j = i + 1; j < n; ++j) {
            if ((p - state_.uavs[j].position).norm() < config_.min_uav_separation) {
                return Termination::Collision;
            }
        }
    }
    if (state_.payload) {
        const Vec3 half = state_.payload->geometry.half_extents();
        const Vec3& c = state_.payload->position;
        bool hit = hits_room(grid_, c);
        for (int corner = 0; corner < 8 && !hit; ++corner) {
            const Vec3 off(((corner & 1) ? half.x() : -half.x()),
                           ((corner & 2) ? half.y() : -half.y()),
                           ((corner & 4) ? half.z() : -half.z()));
            hit = hits_room(grid_, c + off);
        }
        if (hit) return Termination::Collision;
    }

    if (state_.faulted) return Termination::Crash;
    const double speed_limit = 1.5 * config_.v_max;
    for (const auto& u : state_.uavs) {
        if (u.position.z() < config_.ground_z) return Termination::Crash;
        if (u.velocity.norm() > speed_limit) return Termination::Crash;
    }
    if (state_.payload) {
        const physics::PayloadState& p = *state_.payload;
        if (p.position.z() - p.geometry.half_extents().z() < config_.ground_z) {
            return Termination::Crash;
        }
        if (p.velocity.norm() > speed_limit) return Termination::Crash;
        if (std::abs(p.orientation.x()) > config_.crash_tilt ||
            std::abs(p.orientation.y()) > config_.crash_tilt) {
            return Termination::Crash;
        }
    }

    if (steps_ >= config_.episode.max_steps) return Termination::Timeout;
    return Termination::Running;
}

double Environment::shaped_reward(double prev_distance, const Action& clamped,
                                  Termination reason) const {
    const RewardCoeffs& c = config_.reward;
    double r = c.progress * (prev_distance - goal_distance());
    r -= c.tilt * std::abs(payload_tilt());
    r -= c.effort * clamped.values.squaredNorm();

    double overspeed = 0.0;
    for (const auto& u : state_.uavs) {
        overspeed += std::max(0.0, u.velocity.norm() - config_.v_max);
    }
    if (state_.payload) {
        overspeed += std::max(0.0, state_.payload->velocity.norm() - config_.v_max);
    }
    r -= c.overspeed * overspeed;
    r -= c.time;

    if (reason == Termination::Success) r += c.terminal;
    if (reason == Termination::Collision || reason == Termination::Crash) r -= c.terminal;
    return r;
}

StepResult Environment::step(const Action& action) {
    if (!started_) throw std::logic_error("step before reset");
    if (done_) throw std::logic_error("step after episode end");
    const int n = config_.episode.n_uavs;
    if (action.values.size() != 4 * n) throw std::invalid_argument("action size mismatch");

    const Action clamped{action.values.cwiseMax(-1.0).cwiseMin(1.0)};
    physics::Controls controls(n);
    for (int i = 0; i < n; ++i) {
        const double u = clamped.values[i * kActionPerUav];
        // Thrust command is calibrated against the nominal mass; the true
        // thrust ratio of the airframe is a randomization unknown.
        const double commanded = (u + 1.0) * config_.uav_mass * params_.gravity;
        const double realized = commanded * draw_.thrust_ratio[i];
        controls[i].rotor_speeds =
            physics::rotor_speeds_for_thrust(realized, params_.thrust_coeff);
        controls[i].body_rate_cmd =
            config_.omega_max * Vec3(clamped.values[i * kActionPerUav + 1],
                                     clamped.values[i * kActionPerUav + 2],
                                     clamped.values[i * kActionPerUav + 3]);
    }
    last_controls_ = controls;

    const Vec3 before = tracked_position();
    const double prev_distance = prev_distance_;
    for (int s = 0; s < config_.substeps && !state_.faulted; ++s) {
        state_ = physics::step_rk4(state_, controls, cables_, params_, params_.dt);
    }
    steps_ += 1;
    path_length_ += (tracked_position() - before).norm();

    const Termination reason = classify();
    done_ = reason != Termination::Running;
    reason_ = reason;

    StepResult result;
    result.reward = shaped_reward(prev_distance, clamped, reason);
    prev_distance_ = goal_distance();

    const VecX frame = observe();
    frames_.erase(frames_.begin());
    frames_.push_back(frame);
    VecX obs(observation_size(config_));
    for (int k = 0; k < config_.frame_stack; ++k) {
        obs.segment(k * frame.size(), frame.size()) = frames_[k];
    }
    result.observation = std::move(obs);
    result.privileged = privileged();
    result.done = done_;
    result.reason = reason;
    write_trace(clamped, result.reward, reason);
    return result;
}

void Environment::write_trace(const Action& action, double reward, Termination reason) {
    if (!trace_) return;
    std::ostream& os = *trace_;
    os << "{\"t\":" << state_.t << ",\"uavs\":[";
    for (std::size_t i = 0; i < state_.uavs.size(); ++i) {
        const auto& u = state_.uavs[i];
        if (i) os << ',';
        os << '[' << u.position.x() << ',' << u.position.y() << ',' << u.position.z() << ','
           << u.attitude.x() << ',' << u.attitude.y() << ',' << u.attitude.z() << ']';
    }
    os << ']';
    if (state_.payload) {
        const auto& p = *state_.payload;
        os << ",\"payload\":[" << p.position.x() << ',' << p.position.y() << ','
           << p.position.z() << ',' << p.orientation.x() << ',' << p.orientation.y() << ','
           << p.orientation.z() << ']';
    }
    os << ",\"action\":[";
    for (Eigen::Index i = 0; i < action.values.size(); ++i) {
        if (i) os << ',';
        os << action.values[i];
    }
    os << "],\"reward\":" << reward << ",\"reason\":\"" << to_string(reason) << "\"}\n";
}

}  // namespace multilift::env
