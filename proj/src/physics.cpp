#include "multilift/physics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

namespace multilift::physics {

PayloadGeometry PayloadGeometry::cylinder(double length, double diameter) {
    return {Shape::Cylinder, Vec3(length, diameter, 0.0)};
}
PayloadGeometry PayloadGeometry::box(double lx, double ly, double lz) {
    return {Shape::Box, Vec3(lx, ly, lz)};
}
PayloadGeometry PayloadGeometry::bucket(double radius, double height) {
    return {Shape::Bucket, Vec3(radius, height, 0.0)};
}

Vec3 PayloadGeometry::inertia_diag(double mass) const {
    switch (shape) {
        case Shape::Cylinder: {
            const double len = dims.x();
            const double r = dims.y() / 2.0;
            const double transverse = mass * (3.0 * r * r + len * len) / 12.0;
            return Vec3(mass * r * r / 2.0, transverse, transverse);
        }
        case Shape::Box: {
            const double lx = dims.x(), ly = dims.y(), lz = dims.z();
            return (mass / 12.0) * Vec3(ly * ly + lz * lz, lx * lx + lz * lz, lx * lx + ly * ly);
        }
        case Shape::Bucket: {
            const double r = dims.x();
            const double h = dims.y();
            const double transverse = mass * (3.0 * r * r + h * h) / 12.0;
            return Vec3(transverse, transverse, mass * r * r / 2.0);
        }
    }
    throw std::logic_error("unknown payload shape");
}

Vec3 PayloadGeometry::half_extents() const {
    switch (shape) {
        case Shape::Cylinder:
            return Vec3(dims.x() / 2.0, dims.y() / 2.0, dims.y() / 2.0);
        case Shape::Box:
            return dims / 2.0;
        case Shape::Bucket:
            return Vec3(dims.x(), dims.x(), dims.y() / 2.0);
    }
    throw std::logic_error("unknown payload shape");
}

double thrust_magnitude(const std::array<double, 6>& rotor_speeds, double thrust_coeff) {
    double sum_sq = 0.0;
    for (double w : rotor_speeds) {
        if (w < 0.0 || !std::isfinite(w)) {
            throw std::invalid_argument("rotor speed must be finite and >= 0");
        }
        sum_sq += w * w;
    }
    return thrust_coeff * sum_sq;
}

Vec3 thrust_world_vector(const Vec3& attitude, double thrust) {
    const double cphi = std::cos(attitude.x()), sphi = std::sin(attitude.x());
    const double cth = std::cos(attitude.y()), sth = std::sin(attitude.y());
    const double cpsi = std::cos(attitude.z()), spsi = std::sin(attitude.z());
    return thrust * Vec3(sphi * spsi + cphi * cpsi * sth,
                         cphi * sth * spsi - cpsi * sphi,
                         cth * cphi);
}

double air_density(double z, const PhysicsParams& params) {
    if (params.density_table.empty()) return params.rho0;
    double rho = params.density_table.front().rho;
    for (const auto& band : params.density_table) {
        if (z >= band.z) rho = band.rho;
    }
    return rho;
}

Vec3 wind_at(double z, const PhysicsParams& params) {
    if (params.wind_table.empty()) return Vec3::Zero();
    Vec3 wind = params.wind_table.front().wind;
    for (const auto& band : params.wind_table) {
        if (z >= band.z) wind = band.wind;
    }
    return wind;
}

Vec3 drag_force(const Vec3& velocity, double z, const PhysicsParams& params) {
    const Vec3 v_rel = velocity - wind_at(z, params);
    const double rho = air_density(z, params);
    return -0.5 * rho * params.drag_coeff * params.ref_area * v_rel.norm() * v_rel;
}

Vec3 cable_force(const Vec3& uav_attach_world, const Vec3& payload_attach_world,
                 double separation_rate, const CableSpec& cable) {
    const Vec3 delta = uav_attach_world - payload_attach_world;
    const double separation = delta.norm();
    const double stretch = separation - cable.rest_length;
    if (stretch <= 0.0) return Vec3::Zero();
    if (separation < 1e-12) {
        std::cerr << "multilift: cable endpoints coincide while stretched; emitting zero force\n";
        return Vec3::Zero();
    }
    const double tension =
        std::max(0.0, cable.stiffness * stretch + cable.damping * separation_rate);
    return -(tension / separation) * delta;
}

Eigen::Matrix3d rotation_matrix(const Vec3& euler) {
    const double cphi = std::cos(euler.x()), sphi = std::sin(euler.x());
    const double cth = std::cos(euler.y()), sth = std::sin(euler.y());
    const double cpsi = std::cos(euler.z()), spsi = std::sin(euler.z());
    Eigen::Matrix3d r;
    r << cpsi * cth, cpsi * sth * sphi - spsi * cphi, cpsi * sth * cphi + spsi * sphi,
        spsi * cth, spsi * sth * sphi + cpsi * cphi, spsi * sth * cphi - cpsi * sphi,
        -sth, cth * sphi, cth * cphi;
    return r;
}

Eigen::Matrix3d euler_rate_matrix(const Vec3& euler) {
    const double cphi = std::cos(euler.x()), sphi = std::sin(euler.x());
    const double cth = std::cos(euler.y()), tth = std::tan(euler.y());
    Eigen::Matrix3d e;
    e << 1.0, sphi * tth, cphi * tth,
        0.0, cphi, -sphi,
        0.0, sphi / cth, cphi / cth;
    return e;
}

namespace {

struct CableEndpoints {
    Vec3 uav_attach_world, payload_attach_world;
    Vec3 uav_attach_vel, payload_attach_vel;
};

CableEndpoints cable_endpoints(const SystemState& state, std::size_t i, const CableSpec& cable) {
    const UavState& uav = state.uavs[i];
    const PayloadState& payload = *state.payload;
    const Eigen::Matrix3d r_uav = rotation_matrix(uav.attitude);
    const Eigen::Matrix3d r_payload = rotation_matrix(payload.orientation);
    CableEndpoints e;
    e.uav_attach_world = uav.position + r_uav * cable.uav_attach;
    e.payload_attach_world = payload.position + r_payload * cable.payload_attach;
    const Vec3 omega_uav_world = r_uav * uav.body_rates;
    const Vec3 omega_payload_world = r_payload * payload.angular_velocity;
    e.uav_attach_vel = uav.velocity + omega_uav_world.cross(r_uav * cable.uav_attach);
    e.payload_attach_vel =
        payload.velocity + omega_payload_world.cross(r_payload * cable.payload_attach);
    return e;
}

double separation_rate_of(const CableEndpoints& e) {
    const Vec3 delta = e.uav_attach_world - e.payload_attach_world;
    const double sep = delta.norm();
    if (sep < 1e-12) return 0.0;
    return delta.dot(e.uav_attach_vel - e.payload_attach_vel) / sep;
}

}  // namespace

double cable_tension(const SystemState& state, std::size_t i, const CableSpec& cable) {
    const CableEndpoints e = cable_endpoints(state, i, cable);
    return cable_force(e.uav_attach_world, e.payload_attach_world, separation_rate_of(e), cable)
        .norm();
}

double cable_stretch(const SystemState& state, std::size_t i, const CableSpec& cable) {
    const CableEndpoints e = cable_endpoints(state, i, cable);
    return (e.uav_attach_world - e.payload_attach_world).norm() - cable.rest_length;
}

SystemDerivative system_derivative(const SystemState& state, const Controls& controls,
                                   const std::vector<CableSpec>& cables,
                                   const PhysicsParams& params) {
    const std::size_t n = state.uavs.size();
    if (n == 0) throw std::invalid_argument("system has no UAVs");
    if (controls.size() != n) throw std::invalid_argument("controls size mismatch");
    const bool coupled = state.payload.has_value();
    if (coupled && cables.size() != n) throw std::invalid_argument("one cable per UAV required");

    SystemDerivative d;
    d.uavs.resize(n);

    Vec3 payload_force = Vec3::Zero();
    Vec3 payload_torque_body = Vec3::Zero();
    const Eigen::Matrix3d r_payload =
        coupled ? rotation_matrix(state.payload->orientation) : Eigen::Matrix3d::Identity();

    for (std::size_t i = 0; i < n; ++i) {
        const UavState& uav = state.uavs[i];
        if (uav.mass <= 0.0) throw std::invalid_argument("UAV mass must be positive");

        const double thrust = thrust_magnitude(controls[i].rotor_speeds, params.thrust_coeff);
        Vec3 force = thrust_world_vector(uav.attitude, thrust);
        force += drag_force(uav.velocity, uav.position.z(), params);
        force.z() -= uav.mass * params.gravity;

        if (coupled) {
            const CableEndpoints e = cable_endpoints(state, i, cables[i]);
            const Vec3 on_uav = cable_force(e.uav_attach_world, e.payload_attach_world,
                                            separation_rate_of(e), cables[i]);
            force += on_uav;
            payload_force -= on_uav;
            payload_torque_body += cables[i].payload_attach.cross(r_payload.transpose() * -on_uav);
        }

        d.uavs[i].velocity = uav.velocity;
        d.uavs[i].acceleration = force / uav.mass;
        d.uavs[i].attitude_rate = euler_rate_matrix(uav.attitude) * uav.body_rates;
        d.uavs[i].body_rate_dot =
            (controls[i].body_rate_cmd - uav.body_rates) / params.rate_time_constant;
    }

    if (coupled) {
        const PayloadState& payload = *state.payload;
        if (payload.mass <= 0.0) throw std::invalid_argument("payload mass must be positive");
        payload_force += drag_force(payload.velocity, payload.position.z(), params);
        payload_force.z() -= payload.mass * params.gravity;

        PayloadDerivative pd;
        pd.velocity = payload.velocity;
        pd.acceleration = payload_force / payload.mass;
        pd.orientation_rate = euler_rate_matrix(payload.orientation) * payload.angular_velocity;
        const Vec3 inertia = payload.inertia_diag;
        const Vec3 ang_momentum = inertia.cwiseProduct(payload.angular_velocity);
        pd.angular_accel =
            (payload_torque_body - payload.angular_velocity.cross(ang_momentum))
                .cwiseQuotient(inertia);
        d.payload = pd;
    }

    for (const auto& u : d.uavs) {
        if (!finite(u.acceleration) || !finite(u.attitude_rate) || !finite(u.body_rate_dot)) {
            throw std::runtime_error("NaN in system derivative (UAV)");
        }
    }
    if (d.payload) {
        if (!finite(d.payload->acceleration) || !finite(d.payload->orientation_rate) ||
            !finite(d.payload->angular_accel)) {
            throw std::runtime_error("NaN in system derivative (payload)");
        }
    }
    return d;
}

namespace {

constexpr int kUavDim = 12;      // pos, vel, attitude, body rates
constexpr int kPayloadDim = 12;  // pos, vel, orientation, angular velocity

VecX flatten(const SystemState& state) {
    const std::size_t n = state.uavs.size();
    VecX y(n * kUavDim + (state.payload ? kPayloadDim : 0));
    for (std::size_t i = 0; i < n; ++i) {
        const UavState& u = state.uavs[i];
        y.segment<3>(i * kUavDim + 0) = u.position;
        y.segment<3>(i * kUavDim + 3) = u.velocity;
        y.segment<3>(i * kUavDim + 6) = u.attitude;
        y.segment<3>(i * kUavDim + 9) = u.body_rates;
    }
    if (state.payload) {
        const std::size_t base = n * kUavDim;
        y.segment<3>(base + 0) = state.payload->position;
        y.segment<3>(base + 3) = state.payload->velocity;
        y.segment<3>(base + 6) = state.payload->orientation;
        y.segment<3>(base + 9) = state.payload->angular_velocity;
    }
    return y;
}

void unflatten(const VecX& y, SystemState& state) {
    const std::size_t n = state.uavs.size();
    for (std::size_t i = 0; i < n; ++i) {
        UavState& u = state.uavs[i];
        u.position = y.segment<3>(i * kUavDim + 0);
        u.velocity = y.segment<3>(i * kUavDim + 3);
        u.attitude = y.segment<3>(i * kUavDim + 6);
        u.body_rates = y.segment<3>(i * kUavDim + 9);
    }
    if (state.payload) {
        const std::size_t base = n * kUavDim;
        state.payload->position = y.segment<3>(base + 0);
        state.payload->velocity = y.segment<3>(base + 3);
        state.payload->orientation = y.segment<3>(base + 6);
        state.payload->angular_velocity = y.segment<3>(base + 9);
    }
}

VecX flatten_derivative(const SystemDerivative& d, std::size_t n, bool coupled) {
    VecX dy(n * kUavDim + (coupled ? kPayloadDim : 0));
    for (std::size_t i = 0; i < n; ++i) {
        dy.segment<3>(i * kUavDim + 0) = d.uavs[i].velocity;
        dy.segment<3>(i * kUavDim + 3) = d.uavs[i].acceleration;
        dy.segment<3>(i * kUavDim + 6) = d.uavs[i].attitude_rate;
        dy.segment<3>(i * kUavDim + 9) = d.uavs[i].body_rate_dot;
    }
    if (coupled) {
        const std::size_t base = n * kUavDim;
        dy.segment<3>(base + 0) = d.payload->velocity;
        dy.segment<3>(base + 3) = d.payload->acceleration;
        dy.segment<3>(base + 6) = d.payload->orientation_rate;
        dy.segment<3>(base + 9) = d.payload->angular_accel;
    }
    return dy;
}

bool invariants_hold(const SystemState& state) {
    for (const auto& u : state.uavs) {
        if (!finite(u.position) || !finite(u.velocity) || !finite(u.attitude) ||
            !finite(u.body_rates)) {
            return false;
        }
        if (std::abs(u.attitude.y()) >= M_PI / 2.0) return false;
        if (std::abs(u.attitude.x()) >= M_PI) return false;
    }
    if (state.payload) {
        const PayloadState& p = *state.payload;
        if (!finite(p.position) || !finite(p.velocity) || !finite(p.orientation) ||
            !finite(p.angular_velocity)) {
            return false;
        }
        // Gimbal proximity counts as a fault rather than switching charts.
        if (std::abs(p.orientation.y()) > deg2rad(80.0)) return false;
    }
    return true;
}

}  // namespace

SystemState step_rk4(const SystemState& state, const Controls& controls,
                     const std::vector<CableSpec>& cables, const PhysicsParams& params,
                     double dt) {
    if (!(dt > 0.0) || dt > 0.05) throw std::invalid_argument("dt must be in (0, 0.05]");
    if (state.faulted) return state;

    auto eval = [&](const VecX& y) {
        SystemState s = state;
        unflatten(y, s);
        return flatten_derivative(system_derivative(s, controls, cables, params),
                                  state.uavs.size(), state.payload.has_value());
    };

    const VecX y0 = flatten(state);
    const VecX k1 = eval(y0);
    const VecX k2 = eval(y0 + 0.5 * dt * k1);
    const VecX k3 = eval(y0 + 0.5 * dt * k2);
    const VecX k4 = eval(y0 + dt * k3);

    SystemState next = state;
    unflatten(y0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), next);
    next.t = state.t + dt;
    for (std::size_t i = 0; i < next.uavs.size(); ++i) {
        next.uavs[i].attitude.z() = wrap_angle(next.uavs[i].attitude.z());
        next.uavs[i].rotor_speeds = controls[i].rotor_speeds;
    }
    if (next.payload) next.payload->orientation.z() = wrap_angle(next.payload->orientation.z());
    next.faulted = !invariants_hold(next);
    return next;
}

std::array<double, 6> rotor_speeds_for_thrust(double thrust, double thrust_coeff) {
    if (thrust < 0.0) throw std::invalid_argument("thrust must be >= 0");
    std::array<double, 6> speeds{};
    speeds.fill(std::sqrt(thrust / (6.0 * thrust_coeff)));
    return speeds;
}

HoverSolution solve_hover(const PayloadState& payload, const std::vector<double>& uav_masses,
                          const std::vector<CableSpec>& cables, const PhysicsParams& params) {
    const std::size_t n = uav_masses.size();
    if (n == 0 || cables.size() != n) throw std::invalid_argument("one cable per UAV required");

    // Vertical cables: payload force balance fixes sum of tensions, torque
    // balance (x and y) fixes their distribution. Min-norm solution handles
    // the symmetric underdetermined case and N = 1 alike.
    MatX a = MatX::Zero(3, n);
    Vec3 b(payload.mass * params.gravity, 0.0, 0.0);
    const Eigen::Matrix3d r_payload = rotation_matrix(payload.orientation);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 r = r_payload * cables[i].payload_attach;
        a(0, i) = 1.0;
        a(1, i) = r.y();   // torque about x from a vertical unit tension
        a(2, i) = -r.x();  // torque about y
    }
    const VecX tensions = a.completeOrthogonalDecomposition().solve(VecX(b));
    if (((a * tensions) - VecX(b)).norm() > 1e-9 * std::max(1.0, b.norm())) {
        throw std::runtime_error("hover solve: attach pattern cannot balance the payload");
    }
    for (double t : tensions) {
        if (t < 0.0) throw std::runtime_error("hover solve: negative tension required");
    }

    HoverSolution sol;
    sol.tensions.assign(tensions.data(), tensions.data() + n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 attach_world = payload.position + r_payload * cables[i].payload_attach;
        const double stretch = sol.tensions[i] / cables[i].stiffness;
        // Level UAV whose attach point sits a (stretched) cable length above.
        const Vec3 uav_attach_world =
            attach_world + Vec3(0.0, 0.0, cables[i].rest_length + stretch);
        sol.uav_positions.push_back(uav_attach_world - cables[i].uav_attach);
        const double thrust = uav_masses[i] * params.gravity + sol.tensions[i];
        sol.thrusts.push_back(thrust);
        sol.rotor_speeds.push_back(rotor_speeds_for_thrust(thrust, params.thrust_coeff));
    }
    return sol;
}

}  // namespace multilift::physics
