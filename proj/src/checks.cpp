#include "multilift/checks.hpp"

#include "multilift/nn.hpp"
#include "multilift/physics.hpp"
#include "multilift/rl.hpp"
#include "multilift/world.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

namespace multilift::checks {

namespace {

using physics::CableSpec;
using physics::Controls;
using physics::PayloadGeometry;
using physics::PayloadState;
using physics::PhysicsParams;
using physics::SystemState;

struct Rig {
    SystemState state;
    std::vector<CableSpec> cables;
    PhysicsParams params;
    Controls controls;
};

Rig make_rig(double payload_mass, std::uint64_t seed) {
    Rig rig;
    Rng rng(seed);
    PayloadState payload;
    payload.geometry = PayloadGeometry::box(0.4, 0.4, 0.4);
    payload.mass = payload_mass;
    payload.inertia_diag = payload.geometry.inertia_diag(payload.mass);
    payload.position = Vec3(4.0, 4.0, 1.0);

    for (int i = 0; i < 3; ++i) {
        const double ang = 2.0 * M_PI * i / 3.0 + rng.uniform(0.0, 0.2);
        CableSpec cable;
        cable.payload_attach = Vec3(0.16 * std::cos(ang), 0.16 * std::sin(ang), 0.2);
        cable.uav_attach = -0.3 * Vec3(std::cos(ang), std::sin(ang), 0.0);
        rig.cables.push_back(cable);
    }
    rig.state.payload = payload;
    const std::vector<double> masses = {1.0, 1.0, 1.0};
    const physics::HoverSolution sol =
        physics::solve_hover(payload, masses, rig.cables, rig.params);
    rig.state.uavs.resize(3);
    rig.controls.resize(3);
    for (int i = 0; i < 3; ++i) {
        rig.state.uavs[i].mass = masses[i];
        rig.state.uavs[i].position = sol.uav_positions[i];
        rig.state.uavs[i].rotor_speeds = sol.rotor_speeds[i];
        rig.controls[i].rotor_speeds = sol.rotor_speeds[i];
    }
    return rig;
}

CheckResult hover_fixed_point() {
    const auto start = std::chrono::steady_clock::now();
    Rig rig = make_rig(1.2, 0);
    const Vec3 initial = rig.state.payload->position;
    SystemState s = rig.state;
    for (int i = 0; i < 1000; ++i) {
        s = physics::step_rk4(s, rig.controls, rig.cables, rig.params, 0.01);
        if (s.faulted) break;
    }
    const double drift = (s.payload->position - initial).norm();
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ostringstream os;
    os << "payload drift " << drift << " m over 10 s, " << secs << " s runtime";
    return {"hover fixed point (drift < 1e-3 m, < 1 s)",
            !s.faulted && drift < 1e-3 && secs < 1.0, os.str()};
}

CheckResult ballistic_closed_form() {
    PhysicsParams p;
    p.drag_coeff = 0.0;
    SystemState s;
    s.uavs.resize(1);
    s.uavs[0].position = Vec3(0, 0, 10.0);
    Controls controls(1);
    for (int i = 0; i < 100; ++i) s = physics::step_rk4(s, controls, {}, p, 0.01);
    const double err = std::abs((s.uavs[0].position.z() - 10.0) + 4.905);
    std::ostringstream os;
    os << "error " << err << " m at t = 1 s";
    return {"ballistic displacement (|z + g t^2 / 2| < 1e-6)", err < 1e-6, os.str()};
}

CheckResult rk4_order() {
    // Pure gravity is a degree-two polynomial and RK4 integrates it exactly,
    // so the order is measured on the drag-laden fall, which has a
    // tanh / log-cosh closed form.
    PhysicsParams p;
    p.drag_coeff = 1.0;
    p.ref_area = 0.3;
    const double k = 0.5 * p.rho0 * p.drag_coeff * p.ref_area;
    const double vt = std::sqrt(p.gravity / k);
    const double exact = -(vt * vt / p.gravity) * std::log(std::cosh(p.gravity / vt));

    auto run = [&](double dt) {
        SystemState s;
        s.uavs.resize(1);
        s.uavs[0].position = Vec3(0, 0, 10.0);
        Controls controls(1);
        const int steps = static_cast<int>(std::lround(1.0 / dt));
        for (int i = 0; i < steps; ++i) s = physics::step_rk4(s, controls, {}, p, dt);
        return std::abs((s.uavs[0].position.z() - 10.0) - exact);
    };
    const double coarse = run(0.04);
    const double fine = run(0.02);
    const double ratio = coarse / fine;
    std::ostringstream os;
    os << "error ratio " << ratio << " when halving dt";
    return {"RK4 order (halving dt improves error 8-32x)", ratio > 8.0 && ratio < 32.0,
            os.str()};
}

CheckResult unilateral_cables_and_momentum() {
    // 100 randomized 10 s rollouts: tensions never negative. Momentum is
    // checked with gravity and drag disabled, where cables are the only
    // coupling.
    bool tension_ok = true;
    double worst_momentum = 0.0;
    Rng rng(42);
    for (int trial = 0; trial < 100; ++trial) {
        Rig rig = make_rig(rng.uniform(0.8, 1.6), trial);
        rig.params.gravity = 0.0;
        rig.params.drag_coeff = 0.0;
        for (auto& c : rig.controls) c.rotor_speeds.fill(0.0);
        for (auto& u : rig.state.uavs) {
            u.velocity = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        }
        rig.state.payload->velocity =
            Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));

        auto momentum = [&](const SystemState& s) {
            Vec3 mv = s.payload->mass * s.payload->velocity;
            for (const auto& u : s.uavs) mv += u.mass * u.velocity;
            return mv;
        };
        const Vec3 initial = momentum(rig.state);
        SystemState s = rig.state;
        for (int i = 0; i < 1000 && !s.faulted; ++i) {
            s = physics::step_rk4(s, rig.controls, rig.cables, rig.params, 0.01);
            for (std::size_t c = 0; c < rig.cables.size(); ++c) {
                if (physics::cable_tension(s, c, rig.cables[c]) < 0.0) tension_ok = false;
            }
        }
        worst_momentum = std::max(worst_momentum, (momentum(s) - initial).norm() / 10.0);
    }
    std::ostringstream os;
    os << "worst momentum drift " << worst_momentum << " kg m/s per simulated second";
    return {"unilateral cables + momentum (drift < 1e-6 /s)",
            tension_ok && worst_momentum < 1e-6, os.str()};
}

}  // namespace

std::vector<CheckResult> run_physics_checks() {
    return {hover_fixed_point(), ballistic_closed_form(), rk4_order(),
            unilateral_cables_and_momentum()};
}

std::vector<CheckResult> run_gradient_checks() {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(7);
    double worst = 0.0;
    const nn::LossFn loss = [](const VecX& y) {
        return std::pair<double, VecX>(0.5 * y.squaredNorm(), y);
    };
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> sizes;
        if (trial == 0) {
            sizes = {64, 128, 64, 8};  // the largest configuration
        } else {
            const int hidden_layers = 1 + static_cast<int>(rng.uniform_index(2));
            sizes.push_back(2 + static_cast<int>(rng.uniform_index(31)));
            for (int l = 0; l < hidden_layers; ++l) {
                sizes.push_back(4 + static_cast<int>(rng.uniform_index(45)));
            }
            sizes.push_back(1 + static_cast<int>(rng.uniform_index(8)));
        }
        nn::DenseNet net = nn::make_net(sizes);
        nn::init_uniform(net, rng);
        VecX input(sizes.front());
        for (int i = 0; i < sizes.front(); ++i) input[i] = rng.uniform(-1, 1);
        worst = std::max(worst, nn::gradient_check(net, loss, input, 1e-5));
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ostringstream os;
    os << "max relative error " << worst << " over 20 nets, " << secs << " s runtime";
    return {{"analytic gradients vs central differences (< 1e-5, < 10 s)",
             worst < 1e-5 && secs < 10.0, os.str()}};
}

std::vector<CheckResult> run_gae_checks() {
    Rng rng(11);
    double worst_mc = 0.0;
    bool td_exact = true;
    for (int episode = 0; episode < 100; ++episode) {
        const int n = 10 + static_cast<int>(rng.uniform_index(60));
        VecX rewards(n), values(n);
        std::vector<std::uint8_t> dones(n, 0);
        for (int t = 0; t < n; ++t) {
            rewards[t] = rng.uniform(-1, 1);
            values[t] = rng.uniform(-1, 1);
            if (rng.uniform() < 0.05) dones[t] = 1;
        }
        const double bootstrap = rng.uniform(-1, 1);
        const double discount = 0.99;

        // lambda = 1: advantages + values match discounted returns.
        const rl::GaeResult g1 =
            rl::compute_gae(rewards, values, dones, bootstrap, discount, 1.0);
        for (int t = 0; t < n; ++t) {
            double acc = 0.0, w = 1.0;
            bool terminated = false;
            for (int k = t; k < n; ++k) {
                acc += w * rewards[k];
                w *= discount;
                if (dones[k]) {
                    terminated = true;
                    break;
                }
            }
            if (!terminated) acc += w * bootstrap;
            worst_mc = std::max(worst_mc, std::abs(g1.advantages[t] + values[t] - acc));
        }

        // lambda = 0: exactly the one-step TD residual.
        const rl::GaeResult g0 =
            rl::compute_gae(rewards, values, dones, bootstrap, discount, 0.0);
        for (int t = 0; t < n; ++t) {
            const double next = (t + 1 < n) ? values[t + 1] : bootstrap;
            const double delta =
                rewards[t] + discount * next * (dones[t] ? 0.0 : 1.0) - values[t];
            if (g0.advantages[t] != delta) td_exact = false;
        }
    }
    std::ostringstream os;
    os << "worst lambda=1 deviation " << worst_mc
       << ", lambda=0 exact: " << (td_exact ? "yes" : "no");
    return {{"GAE vs discounted-return and TD oracles (1e-10, exact)",
             worst_mc < 1e-10 && td_exact, os.str()}};
}

bool all_passed(const std::vector<CheckResult>& results) {
    for (const auto& r : results) {
        if (!r.passed) return false;
    }
    return true;
}

}  // namespace multilift::checks
