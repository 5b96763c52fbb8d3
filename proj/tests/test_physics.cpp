#include <doctest.h>

#include "multilift/physics.hpp"

#include <cmath>

using namespace multilift;
using namespace multilift::physics;

namespace {

// Vertical fall with quadratic drag has a closed form: with terminal speed
// v_t = sqrt(m g / k), k = 0.5 rho Cd A, the altitude drop is
// (v_t^2 / g) * log(cosh(g t / v_t)).
double drag_fall_displacement(double mass, double g, double k, double t) {
    const double vt = std::sqrt(mass * g / k);
    return -(vt * vt / g) * std::log(std::cosh(g * t / vt));
}

SystemState single_uav_state(double mass = 1.0) {
    SystemState s;
    s.uavs.resize(1);
    s.uavs[0].mass = mass;
    s.uavs[0].position = Vec3(0, 0, 10.0);
    return s;
}

PhysicsParams dragless_params() {
    PhysicsParams p;
    p.drag_coeff = 0.0;
    return p;
}

// Symmetric three-UAV rig around a box payload, used by several tests.
struct Rig {
    SystemState state;
    std::vector<CableSpec> cables;
    PhysicsParams params;
    Controls controls;
};

Rig make_hover_rig() {
    Rig rig;
    PayloadState payload;
    payload.geometry = PayloadGeometry::box(0.4, 0.4, 0.4);
    payload.mass = 1.2;
    payload.inertia_diag = payload.geometry.inertia_diag(payload.mass);
    payload.position = Vec3(4.0, 4.0, 0.8);

    const double attach_r = 0.15;
    for (int i = 0; i < 3; ++i) {
        const double ang = 2.0 * M_PI * i / 3.0;
        CableSpec cable;
        cable.payload_attach = Vec3(attach_r * std::cos(ang), attach_r * std::sin(ang), 0.2);
        rig.cables.push_back(cable);
    }

    rig.state.payload = payload;
    const std::vector<double> masses = {1.0, 1.0, 1.0};
    const HoverSolution sol = solve_hover(payload, masses, rig.cables, rig.params);
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

}  // namespace

TEST_CASE("thrust magnitude") {
    std::array<double, 6> w{};
    CHECK(thrust_magnitude(w, 3.0) == 0.0);

    w.fill(500.0);
    CHECK(thrust_magnitude(w, 1e-5) == doctest::Approx(15.0).epsilon(1e-12));

    w = {100.0, 0, 0, 0, 0, 0};
    CHECK(thrust_magnitude(w, 2e-5) == doctest::Approx(0.2).epsilon(1e-12));

    w[2] = -1.0;
    CHECK_THROWS_AS(thrust_magnitude(w, 1e-5), std::invalid_argument);
}

TEST_CASE("thrust world vector") {
    const Vec3 level = thrust_world_vector(Vec3::Zero(), 10.0);
    CHECK((level - Vec3(0, 0, 10)).norm() < 1e-15);

    const Vec3 pitched = thrust_world_vector(Vec3(0, M_PI / 2.0, 0), 1.0);
    CHECK((pitched - Vec3(1, 0, 0)).norm() < 1e-15);

    CHECK(thrust_world_vector(Vec3(0.3, -0.8, 2.1), 0.0).norm() == 0.0);
}

TEST_CASE("thrust direction is unit norm for random attitudes") {
    Rng rng(7);
    for (int i = 0; i < 10000; ++i) {
        const Vec3 att(rng.uniform(-M_PI, M_PI), rng.uniform(-M_PI / 2, M_PI / 2),
                       rng.uniform(-M_PI, M_PI));
        CHECK(std::abs(thrust_world_vector(att, 1.0).norm() - 1.0) < 1e-12);
    }
}

TEST_CASE("air density and wind profiles") {
    PhysicsParams p;
    CHECK(air_density(1.7, p) == 1.225);
    CHECK(wind_at(1.7, p).norm() == 0.0);

    p.wind_table = {{0.0, Vec3(0.5, 0, 0)}, {2.0, Vec3::Zero()}};
    CHECK((wind_at(1.0, p) - Vec3(0.5, 0, 0)).norm() == 0.0);
    CHECK(wind_at(2.5, p).norm() == 0.0);
    // Below the table clamps to the first band.
    CHECK((wind_at(-1.0, p) - Vec3(0.5, 0, 0)).norm() == 0.0);

    p.density_table = {{0.0, 1.1}, {2.0, 0.9}};
    CHECK(air_density(-1.0, p) == 1.1);
    CHECK(air_density(1.99, p) == 1.1);
    CHECK(air_density(2.0, p) == 0.9);
}

TEST_CASE("drag force") {
    PhysicsParams p;
    p.rho0 = 1.2;
    p.drag_coeff = 1.0;
    p.ref_area = 0.1;

    CHECK(drag_force(Vec3::Zero(), 1.0, p).norm() == 0.0);
    const Vec3 f = drag_force(Vec3(2, 0, 0), 1.0, p);
    CHECK(f.x() == doctest::Approx(-0.24).epsilon(1e-12));
    CHECK(f.y() == 0.0);

    p.wind_table = {{0.0, Vec3(1, 0, 0)}};
    CHECK(drag_force(Vec3(1, 0, 0), 1.0, p).norm() == 0.0);
}

TEST_CASE("drag dissipates relative kinetic energy") {
    PhysicsParams p;
    p.wind_table = {{0.0, Vec3(0.3, -0.2, 0.0)}};
    Rng rng(11);
    for (int i = 0; i < 1000; ++i) {
        const Vec3 v(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
        const Vec3 v_rel = v - wind_at(1.0, p);
        CHECK(drag_force(v, 1.0, p).dot(v_rel) <= 0.0);
    }
}

TEST_CASE("cable force") {
    CableSpec cable;
    cable.stiffness = 100.0;
    cable.damping = 0.0;

    // Slack: no compression ever.
    CHECK(cable_force(Vec3(0, 0, 0.9), Vec3::Zero(), 0.0, cable).norm() == 0.0);

    // Stretched 0.1 m along +z pulls the UAV down with k*s.
    const Vec3 f = cable_force(Vec3(0, 0, 1.1), Vec3::Zero(), 0.0, cable);
    CHECK(f.z() == doctest::Approx(-10.0).epsilon(1e-12));
    CHECK(std::abs(f.x()) + std::abs(f.y()) < 1e-15);

    // Fast approach cancels the spring term; tension clamps at zero.
    cable.damping = 5.0;
    CHECK(cable_force(Vec3(0, 0, 1.1), Vec3::Zero(), -10.0, cable).norm() == 0.0);
}

TEST_CASE("payload inertia closed forms") {
    // Solid cylinder, length 1, diameter 0.3, mass 1: axial term m r^2 / 2.
    const PayloadGeometry cyl = PayloadGeometry::cylinder(1.0, 0.3);
    CHECK(cyl.inertia_diag(1.0).x() == doctest::Approx(0.01125).epsilon(1e-12));

    const PayloadGeometry box = PayloadGeometry::box(0.4, 0.4, 0.4);
    const Vec3 ib = box.inertia_diag(1.5);
    CHECK(ib.x() == doctest::Approx(1.5 * (0.16 + 0.16) / 12.0).epsilon(1e-12));
    CHECK(ib.x() == doctest::Approx(ib.y()).epsilon(1e-12));

    const PayloadGeometry bucket = PayloadGeometry::bucket(0.15, 0.3);
    CHECK(bucket.inertia_diag(2.0).z() == doctest::Approx(2.0 * 0.15 * 0.15 / 2.0).epsilon(1e-12));
}

TEST_CASE("free fall accelerations") {
    Rig rig = make_hover_rig();
    rig.params.drag_coeff = 0.0;
    for (auto& c : rig.controls) c.rotor_speeds.fill(0.0);
    // Drop the payload so every cable goes slack.
    rig.state.payload->position.z() += 0.5;

    const SystemDerivative d =
        system_derivative(rig.state, rig.controls, rig.cables, rig.params);
    for (const auto& u : d.uavs) {
        CHECK(u.acceleration.z() == doctest::Approx(-9.81).epsilon(1e-12));
        CHECK(std::abs(u.acceleration.x()) < 1e-12);
    }
    CHECK(d.payload->acceleration.z() == doctest::Approx(-9.81).epsilon(1e-12));
}

TEST_CASE("single UAV climb acceleration") {
    SystemState s = single_uav_state(1.0);
    PhysicsParams p = dragless_params();
    Controls controls(1);
    controls[0].rotor_speeds = rotor_speeds_for_thrust(9.81 + 1.0, p.thrust_coeff);

    const SystemDerivative d = system_derivative(s, controls, {}, p);
    CHECK(d.uavs[0].acceleration.z() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("three-UAV hover is an equilibrium") {
    Rig rig = make_hover_rig();
    const SystemDerivative d =
        system_derivative(rig.state, rig.controls, rig.cables, rig.params);
    for (const auto& u : d.uavs) CHECK(u.acceleration.norm() < 1e-9);
    CHECK(d.payload->acceleration.norm() < 1e-9);
    CHECK(d.payload->angular_accel.norm() < 1e-9);

    // And a fixed point of the integrator.
    const SystemState next = step_rk4(rig.state, rig.controls, rig.cables, rig.params, 0.01);
    CHECK_FALSE(next.faulted);
    CHECK((next.payload->position - rig.state.payload->position).norm() < 1e-9);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK((next.uavs[i].position - rig.state.uavs[i].position).norm() < 1e-9);
        CHECK((next.uavs[i].velocity - rig.state.uavs[i].velocity).norm() < 1e-9);
    }
}

TEST_CASE("ballistic displacement matches closed form") {
    SystemState s = single_uav_state();
    PhysicsParams p = dragless_params();
    Controls controls(1);  // zero thrust

    for (int i = 0; i < 100; ++i) s = step_rk4(s, controls, {}, p, 0.01);
    CHECK(std::abs((s.uavs[0].position.z() - 10.0) - (-4.905)) < 1e-6);
    CHECK(s.t == doctest::Approx(1.0));
}

TEST_CASE("RK4 shows fourth-order convergence on drag-laden fall") {
    PhysicsParams p;
    p.drag_coeff = 1.0;
    p.ref_area = 0.3;  // k = 0.5 * 1.225 * 0.3 = 0.18375
    const double k = 0.5 * p.rho0 * p.drag_coeff * p.ref_area;
    const double exact = drag_fall_displacement(1.0, p.gravity, k, 1.0);

    auto run = [&](double dt) {
        SystemState s = single_uav_state();
        Controls controls(1);
        const int steps = static_cast<int>(std::lround(1.0 / dt));
        for (int i = 0; i < steps; ++i) s = step_rk4(s, controls, {}, p, dt);
        return std::abs((s.uavs[0].position.z() - 10.0) - exact);
    };

    const double err_coarse = run(0.04);
    const double err_fine = run(0.02);
    CHECK(err_coarse > 1e-13);  // measurable truncation error
    const double ratio = err_coarse / err_fine;
    CHECK(ratio > 8.0);
    CHECK(ratio < 32.0);
}

TEST_CASE("step_rk4 rejects bad dt") {
    SystemState s = single_uav_state();
    Controls controls(1);
    PhysicsParams p;
    CHECK_THROWS_AS(step_rk4(s, controls, {}, p, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(step_rk4(s, controls, {}, p, 0.06), std::invalid_argument);
}

TEST_CASE("identical inputs give bit-identical steps") {
    Rig rig = make_hover_rig();
    rig.controls[1].body_rate_cmd = Vec3(0.1, -0.05, 0.2);
    const SystemState a = step_rk4(rig.state, rig.controls, rig.cables, rig.params, 0.01);
    const SystemState b = step_rk4(rig.state, rig.controls, rig.cables, rig.params, 0.01);
    for (std::size_t i = 0; i < a.uavs.size(); ++i) {
        CHECK(a.uavs[i].position == b.uavs[i].position);
        CHECK(a.uavs[i].velocity == b.uavs[i].velocity);
        CHECK(a.uavs[i].attitude == b.uavs[i].attitude);
    }
    CHECK(a.payload->position == b.payload->position);
}

TEST_CASE("cable-only dynamics conserve linear momentum") {
    Rig rig = make_hover_rig();
    rig.params.gravity = 0.0;
    rig.params.drag_coeff = 0.0;
    for (auto& c : rig.controls) c.rotor_speeds.fill(0.0);

    // Kick the bodies so cables cycle through taut and slack phases.
    Rng rng(3);
    for (auto& u : rig.state.uavs) {
        u.velocity = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    }
    rig.state.payload->velocity = Vec3(0.2, -0.1, 0.4);

    auto momentum = [&](const SystemState& s) {
        Vec3 mv = s.payload->mass * s.payload->velocity;
        for (const auto& u : s.uavs) mv += u.mass * u.velocity;
        return mv;
    };

    const Vec3 initial = momentum(rig.state);
    SystemState s = rig.state;
    for (int i = 0; i < 100; ++i) {
        s = step_rk4(s, rig.controls, rig.cables, rig.params, 0.01);
        REQUIRE_FALSE(s.faulted);
        for (std::size_t c = 0; c < rig.cables.size(); ++c) {
            CHECK(cable_tension(s, c, rig.cables[c]) >= 0.0);
        }
    }
    CHECK((momentum(s) - initial).norm() < 1e-6);
}

TEST_CASE("hover solver splits load across asymmetric masses") {
    PayloadState payload;
    payload.geometry = PayloadGeometry::box(0.4, 0.4, 0.4);
    payload.mass = 2.0;
    payload.inertia_diag = payload.geometry.inertia_diag(payload.mass);

    CableSpec cable;
    cable.payload_attach = Vec3(0, 0, 0.2);
    PhysicsParams params;
    const HoverSolution sol = solve_hover(payload, {1.5}, {cable}, params);
    CHECK(sol.tensions[0] == doctest::Approx(2.0 * 9.81).epsilon(1e-12));
    CHECK(sol.thrusts[0] == doctest::Approx(3.5 * 9.81).epsilon(1e-12));
    // UAV hangs one stretched cable length above the attach point.
    const double stretch = sol.tensions[0] / cable.stiffness;
    CHECK(sol.uav_positions[0].z() == doctest::Approx(0.2 + 1.0 + stretch));
}
