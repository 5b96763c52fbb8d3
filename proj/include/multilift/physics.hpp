#pragma once

#include "multilift/types.hpp"

#include <array>
#include <optional>
#include <vector>

namespace multilift::physics {

struct UavState {
    Vec3 position = Vec3::Zero();          // m, world frame
    Vec3 velocity = Vec3::Zero();          // m/s, world frame
    Vec3 attitude = Vec3::Zero();          // roll, pitch, yaw (rad)
    Vec3 body_rates = Vec3::Zero();        // rad/s, body frame
    std::array<double, 6> rotor_speeds{};  // rad/s
    double mass = 1.0;                     // kg
};

enum class Shape { Cylinder, Box, Bucket };

// dims meaning per shape: Cylinder (length, diameter, -), axis along body x;
// Box (lx, ly, lz); Bucket (radius, height, -), axis along body z.
struct PayloadGeometry {
    Shape shape = Shape::Box;
    Vec3 dims = Vec3(0.4, 0.4, 0.4);

    static PayloadGeometry cylinder(double length, double diameter);
    static PayloadGeometry box(double lx, double ly, double lz);
    static PayloadGeometry bucket(double radius, double height);

    // Uniform-density closed forms.
    Vec3 inertia_diag(double mass) const;
    // Half-extent of the bounding box, for collision checks.
    Vec3 half_extents() const;
};

struct PayloadState {
    Vec3 position = Vec3::Zero();          // CoM, m
    Vec3 velocity = Vec3::Zero();          // m/s
    Vec3 orientation = Vec3::Zero();       // alpha (tilt, about x), beta, gamma_e (rad)
    Vec3 angular_velocity = Vec3::Zero();  // rad/s, body frame
    double mass = 1.0;                     // kg
    Vec3 inertia_diag = Vec3(0.02, 0.02, 0.02);  // kg m^2
    PayloadGeometry geometry;
};

// Unilateral spring-damper cable; transmits tension only.
struct CableSpec {
    double rest_length = 1.0;  // m
    double stiffness = 500.0;  // N/m
    double damping = 5.0;      // N s/m
    Vec3 payload_attach = Vec3::Zero();  // payload body frame
    Vec3 uav_attach = Vec3::Zero();      // UAV body frame
};

// Piecewise-constant altitude profiles; a band holds from its z up to the
// next entry's z. Queries outside the table clamp to the nearest band.
struct DensityBand {
    double z = 0.0;
    double rho = 1.225;
};
struct WindBand {
    double z = 0.0;
    Vec3 wind = Vec3::Zero();  // m/s
};

struct PhysicsParams {
    double gravity = 9.81;         // m/s^2
    double thrust_coeff = 1.2e-5;  // k_b, N s^2 / rad^2
    double drag_coeff = 1.0;       // dimensionless
    double ref_area = 0.05;        // m^2 per body
    double rho0 = 1.225;           // kg/m^3, used when density_table is empty
    std::vector<DensityBand> density_table;
    std::vector<WindBand> wind_table;
    double dt = 0.01;                 // s
    double rate_time_constant = 0.1;  // body-rate command lag, s
};

struct SystemState {
    std::vector<UavState> uavs;
    std::optional<PayloadState> payload;
    double t = 0.0;
    bool faulted = false;
};

struct UavCommand {
    std::array<double, 6> rotor_speeds{};  // rad/s
    Vec3 body_rate_cmd = Vec3::Zero();     // rad/s
};
using Controls = std::vector<UavCommand>;

struct UavDerivative {
    Vec3 velocity, acceleration, attitude_rate, body_rate_dot;
};
struct PayloadDerivative {
    Vec3 velocity, acceleration, orientation_rate, angular_accel;
};
struct SystemDerivative {
    std::vector<UavDerivative> uavs;
    std::optional<PayloadDerivative> payload;
};

// Total thrust of one hexrotor: k_b * sum of squared rotor speeds.
double thrust_magnitude(const std::array<double, 6>& rotor_speeds, double thrust_coeff);

// World-frame thrust direction for ZYX Euler attitude; |result| == thrust.
Vec3 thrust_world_vector(const Vec3& attitude, double thrust);

double air_density(double z, const PhysicsParams& params);
Vec3 wind_at(double z, const PhysicsParams& params);

// Quadratic drag opposing motion relative to the local wind.
Vec3 drag_force(const Vec3& velocity, double z, const PhysicsParams& params);

// Force on the UAV endpoint; the payload receives the negation. Slack cables
// (separation <= rest length) and compressive spring-damper sums produce zero.
Vec3 cable_force(const Vec3& uav_attach_world, const Vec3& payload_attach_world,
                 double separation_rate, const CableSpec& cable);

// Body-to-world rotation for ZYX Euler angles.
Eigen::Matrix3d rotation_matrix(const Vec3& euler);
// Maps body rates to Euler angle rates; singular at pitch +-90 deg.
Eigen::Matrix3d euler_rate_matrix(const Vec3& euler);

// Current tension magnitude of cable i (zero when slack).
double cable_tension(const SystemState& state, std::size_t i, const CableSpec& cable);
// Signed stretch of cable i: separation minus rest length, in meters.
double cable_stretch(const SystemState& state, std::size_t i, const CableSpec& cable);

// Assembled rigid-body dynamics of the coupled UAV-payload system.
// cables[i] joins uavs[i] to the payload; ignored when there is no payload.
SystemDerivative system_derivative(const SystemState& state, const Controls& controls,
                                   const std::vector<CableSpec>& cables,
                                   const PhysicsParams& params);

// Classical RK4 step; controls held constant over the step. Returns the new
// state, tagged faulted when a type invariant no longer holds.
SystemState step_rk4(const SystemState& state, const Controls& controls,
                     const std::vector<CableSpec>& cables, const PhysicsParams& params,
                     double dt);

// Static equilibrium with every UAV hovering level, a cable length (plus
// elastic stretch) above its attach point. Tensions solve force and torque
// balance of the payload; thrust T_i = M_i g + t_i.
struct HoverSolution {
    std::vector<Vec3> uav_positions;
    std::vector<std::array<double, 6>> rotor_speeds;
    std::vector<double> tensions;  // N, per cable
    std::vector<double> thrusts;   // N, per UAV
};

HoverSolution solve_hover(const PayloadState& payload, const std::vector<double>& uav_masses,
                          const std::vector<CableSpec>& cables, const PhysicsParams& params);

// Rotor speeds producing a given total thrust, split evenly over six rotors.
std::array<double, 6> rotor_speeds_for_thrust(double thrust, double thrust_coeff);

}  // namespace multilift::physics
