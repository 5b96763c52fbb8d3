#pragma once

#include "multilift/physics.hpp"
#include "multilift/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace multilift::world {

// 2-D occupancy over the room footprint; occupied cells are extruded from
// floor to ceiling. The perimeter ring is always occupied.
struct OccupancyGrid {
    double width = 14.0;      // m, x extent
    double depth = 8.0;       // m, y extent
    double ceiling = 3.0;     // m
    double resolution = 0.1;  // m per cell
    int nx = 0, ny = 0;
    std::vector<std::uint8_t> cells;  // row-major, iy * nx + ix

    bool cell(int ix, int iy) const { return cells[static_cast<std::size_t>(iy) * nx + ix] != 0; }
    void set_cell(int ix, int iy, bool v) {
        cells[static_cast<std::size_t>(iy) * nx + ix] = v ? 1 : 0;
    }
};

OccupancyGrid make_grid(double width = 14.0, double depth = 8.0, double ceiling = 3.0,
                        double resolution = 0.1);

// True when the point maps to an occupied cell or lies outside the room.
bool is_occupied(const OccupancyGrid& grid, const Vec3& point);

// Distance to the first occupied sample along a unit direction, probing at
// resolution/2 increments; returns max_range when nothing is hit.
double raycast(const OccupancyGrid& grid, const Vec3& origin, const Vec3& direction,
               double max_range);

struct SensorSpec {
    double h_fov = deg2rad(50.0);  // full horizontal extent, rad
    double v_fov = deg2rad(50.0);  // full vertical extent, rad
    double max_range = 3.0;        // m
    int n_rays_h = 9;
    int n_rays_v = 5;
};

struct DepthImage {
    int n_h = 0, n_v = 0;
    VecX values;  // normalized to [0, 1] by max_range; index iv * n_h + ih
};

struct GoalBearing {
    double azimuth = 0.0;    // rad, relative to UAV yaw
    double elevation = 0.0;  // rad
    double range_norm = 0.0; // range / max_range
};

struct SenseResult {
    DepthImage depth;
    std::optional<GoalBearing> goal;  // empty when out of range or outside FOV
};

// Depth rays over the FOV cone aligned with the UAV's yaw, plus the goal
// bearing when the goal is inside both the range and the FOV.
SenseResult sense(const physics::SystemState& state, std::size_t uav_index,
                  const OccupancyGrid& grid, const SensorSpec& spec, const Vec3& goal);

enum class Difficulty { Empty, Easy, Medium, Hard };

// Canonical start/goal anchors used for the corridor guarantee.
Vec3 map_start_anchor(const OccupancyGrid& grid);
Vec3 map_goal_anchor(const OccupancyGrid& grid);

// True when a path of the given clearance radius joins start and goal
// (breadth-first search over cells whose clearance disc is free).
bool corridor_exists(const OccupancyGrid& grid, const Vec3& start, const Vec3& goal,
                     double clearance);

// Procedural 14 x 8 room with difficulty-dependent rectangular obstacles and
// a guaranteed 1.5 m wide corridor between the start and goal anchors.
OccupancyGrid sample_map(std::uint64_t seed, Difficulty difficulty);

enum class PayloadClass { Box, Package, Bucket };

struct PayloadSample {
    physics::PayloadGeometry geometry;
    double mass = 1.0;  // kg
    Vec3 inertia_diag = Vec3::Zero();
    std::vector<Vec3> attach_points;  // payload frame, on the top face/rim
};

double payload_class_mass_min(PayloadClass cls);
double payload_class_mass_max(PayloadClass cls);

PayloadSample sample_payload(PayloadClass cls, std::uint64_t seed, int n_uavs);

// Plain-text map format: header "width depth ceiling resolution", then one
// row of '.'/'#' per cell row, top row first (highest y).
std::string grid_to_text(const OccupancyGrid& grid);
OccupancyGrid grid_from_text(const std::string& text);

const char* to_string(Difficulty d);
const char* to_string(PayloadClass c);
Difficulty difficulty_from_string(const std::string& s);
PayloadClass payload_class_from_string(const std::string& s);

}  // namespace multilift::world
