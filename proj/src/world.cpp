#include "multilift/world.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>
#include <stdexcept>

namespace multilift::world {

OccupancyGrid make_grid(double width, double depth, double ceiling, double resolution) {
    if (resolution <= 0.0) throw std::invalid_argument("resolution must be positive");
    OccupancyGrid g;
    g.width = width;
    g.depth = depth;
    g.ceiling = ceiling;
    g.resolution = resolution;
    g.nx = static_cast<int>(std::lround(width / resolution));
    g.ny = static_cast<int>(std::lround(depth / resolution));
    g.cells.assign(static_cast<std::size_t>(g.nx) * g.ny, 0);
    for (int ix = 0; ix < g.nx; ++ix) {
        g.set_cell(ix, 0, true);
        g.set_cell(ix, g.ny - 1, true);
    }
    for (int iy = 0; iy < g.ny; ++iy) {
        g.set_cell(0, iy, true);
        g.set_cell(g.nx - 1, iy, true);
    }
    return g;
}

bool is_occupied(const OccupancyGrid& grid, const Vec3& point) {
    if (point.z() <= 0.0 || point.z() >= grid.ceiling) return true;
    if (point.x() < 0.0 || point.x() > grid.width || point.y() < 0.0 || point.y() > grid.depth) {
        return true;
    }
    const int ix = std::min(static_cast<int>(point.x() / grid.resolution), grid.nx - 1);
    const int iy = std::min(static_cast<int>(point.y() / grid.resolution), grid.ny - 1);
    return grid.cell(ix, iy);
}

double raycast(const OccupancyGrid& grid, const Vec3& origin, const Vec3& direction,
               double max_range) {
    if (std::abs(direction.norm() - 1.0) > 1e-9) {
        throw std::invalid_argument("raycast direction must be unit length");
    }
    const double step = grid.resolution / 2.0;
    for (double t = 0.0; t <= max_range; t += step) {
        if (is_occupied(grid, origin + t * direction)) return t;
    }
    return max_range;
}

SenseResult sense(const physics::SystemState& state, std::size_t uav_index,
                  const OccupancyGrid& grid, const SensorSpec& spec, const Vec3& goal) {
    if (uav_index >= state.uavs.size()) throw std::invalid_argument("uav_index out of range");
    const physics::UavState& uav = state.uavs[uav_index];
    const double yaw = uav.attitude.z();

    SenseResult out;
    out.depth.n_h = spec.n_rays_h;
    out.depth.n_v = spec.n_rays_v;
    out.depth.values.resize(spec.n_rays_h * spec.n_rays_v);
    for (int iv = 0; iv < spec.n_rays_v; ++iv) {
        const double el = spec.n_rays_v > 1
                              ? -spec.v_fov / 2.0 + spec.v_fov * iv / (spec.n_rays_v - 1)
                              : 0.0;
        for (int ih = 0; ih < spec.n_rays_h; ++ih) {
            const double az = spec.n_rays_h > 1
                                  ? -spec.h_fov / 2.0 + spec.h_fov * ih / (spec.n_rays_h - 1)
                                  : 0.0;
            const Vec3 dir(std::cos(el) * std::cos(yaw + az), std::cos(el) * std::sin(yaw + az),
                           std::sin(el));
            out.depth.values[iv * spec.n_rays_h + ih] =
                raycast(grid, uav.position, dir, spec.max_range) / spec.max_range;
        }
    }

    const Vec3 rel = goal - uav.position;
    const double range = rel.norm();
    if (range <= 1e-12) {
        out.goal = GoalBearing{0.0, 0.0, 0.0};
    } else if (range <= spec.max_range) {
        const double az = wrap_angle(std::atan2(rel.y(), rel.x()) - yaw);
        const double el = std::atan2(rel.z(), rel.head<2>().norm());
        if (std::abs(az) <= spec.h_fov / 2.0 && std::abs(el) <= spec.v_fov / 2.0) {
            out.goal = GoalBearing{az, el, range / spec.max_range};
        }
    }
    return out;
}

Vec3 map_start_anchor(const OccupancyGrid& grid) { return Vec3(2.0, grid.depth / 2.0, 1.0); }
Vec3 map_goal_anchor(const OccupancyGrid& grid) {
    return Vec3(grid.width - 2.0, grid.depth / 2.0, 1.0);
}

namespace {

std::vector<std::pair<int, int>> clearance_disc(double clearance, double resolution) {
    const int r = static_cast<int>(std::ceil(clearance / resolution));
    std::vector<std::pair<int, int>> offsets;
    for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
            if (std::hypot(dx * resolution, dy * resolution) <= clearance) {
                offsets.emplace_back(dx, dy);
            }
        }
    }
    return offsets;
}

}  // namespace

bool corridor_exists(const OccupancyGrid& grid, const Vec3& start, const Vec3& goal,
                     double clearance) {
    const auto disc = clearance_disc(clearance, grid.resolution);
    auto wide_free = [&](int ix, int iy) {
        for (const auto& [dx, dy] : disc) {
            const int x = ix + dx, y = iy + dy;
            if (x < 0 || x >= grid.nx || y < 0 || y >= grid.ny) return false;
            if (grid.cell(x, y)) return false;
        }
        return true;
    };

    auto cell_of = [&](const Vec3& p) {
        return std::pair<int, int>(
            std::clamp(static_cast<int>(p.x() / grid.resolution), 0, grid.nx - 1),
            std::clamp(static_cast<int>(p.y() / grid.resolution), 0, grid.ny - 1));
    };
    const auto [sx, sy] = cell_of(start);
    const auto [gx, gy] = cell_of(goal);
    if (!wide_free(sx, sy) || !wide_free(gx, gy)) return false;

    std::vector<std::uint8_t> seen(grid.cells.size(), 0);
    std::deque<std::pair<int, int>> queue{{sx, sy}};
    seen[static_cast<std::size_t>(sy) * grid.nx + sx] = 1;
    const int dxs[4] = {1, -1, 0, 0};
    const int dys[4] = {0, 0, 1, -1};
    while (!queue.empty()) {
        const auto [x, y] = queue.front();
        queue.pop_front();
        if (x == gx && y == gy) return true;
        for (int k = 0; k < 4; ++k) {
            const int nx2 = x + dxs[k], ny2 = y + dys[k];
            if (nx2 < 0 || nx2 >= grid.nx || ny2 < 0 || ny2 >= grid.ny) continue;
            std::uint8_t& mark = seen[static_cast<std::size_t>(ny2) * grid.nx + nx2];
            if (mark || !wide_free(nx2, ny2)) continue;
            mark = 1;
            queue.emplace_back(nx2, ny2);
        }
    }
    return false;
}

OccupancyGrid sample_map(std::uint64_t seed, Difficulty difficulty) {
    Rng rng(mix_seed(seed, 0x6d6170));  // "map"
    int k_lo = 0, k_hi = 0;
    switch (difficulty) {
        case Difficulty::Empty: k_lo = k_hi = 0; break;
        case Difficulty::Easy: k_lo = 0, k_hi = 2; break;
        case Difficulty::Medium: k_lo = 3, k_hi = 5; break;
        case Difficulty::Hard: k_lo = 6, k_hi = 9; break;
    }

    for (int attempt = 0; attempt < 100; ++attempt) {
        OccupancyGrid grid = make_grid();
        const Vec3 start = map_start_anchor(grid);
        const Vec3 goal = map_goal_anchor(grid);
        const int k = k_lo + static_cast<int>(rng.uniform_index(k_hi - k_lo + 1));
        for (int obs = 0; obs < k; ++obs) {
            const double cx = rng.uniform(2.5, grid.width - 2.5);
            const double cy = rng.uniform(1.2, grid.depth - 1.2);
            const double hx = rng.uniform(0.25, 1.0);
            const double hy = rng.uniform(0.25, 1.0);
            // Keep obstacles clear of the start/goal neighbourhoods.
            auto near = [&](const Vec3& p) {
                return std::abs(cx - p.x()) < hx + 1.0 && std::abs(cy - p.y()) < hy + 1.0;
            };
            if (near(start) || near(goal)) continue;
            const int x0 = std::max(0, static_cast<int>((cx - hx) / grid.resolution));
            const int x1 = std::min(grid.nx - 1, static_cast<int>((cx + hx) / grid.resolution));
            const int y0 = std::max(0, static_cast<int>((cy - hy) / grid.resolution));
            const int y1 = std::min(grid.ny - 1, static_cast<int>((cy + hy) / grid.resolution));
            for (int iy = y0; iy <= y1; ++iy) {
                for (int ix = x0; ix <= x1; ++ix) grid.set_cell(ix, iy, true);
            }
        }
        if (corridor_exists(grid, start, goal, 0.75)) return grid;
    }
    throw std::runtime_error("sample_map: no corridor after 100 attempts");
}

double payload_class_mass_min(PayloadClass cls) {
    switch (cls) {
        case PayloadClass::Box: return 0.8;
        case PayloadClass::Package: return 0.5;
        case PayloadClass::Bucket: return 1.0;
    }
    throw std::logic_error("unknown payload class");
}

double payload_class_mass_max(PayloadClass cls) {
    switch (cls) {
        case PayloadClass::Box: return 1.6;
        case PayloadClass::Package: return 1.2;
        case PayloadClass::Bucket: return 2.0;
    }
    throw std::logic_error("unknown payload class");
}

PayloadSample sample_payload(PayloadClass cls, std::uint64_t seed, int n_uavs) {
    if (n_uavs < 1) throw std::invalid_argument("n_uavs must be >= 1");
    Rng rng(mix_seed(seed, 0x7061796c));  // "payl"

    PayloadSample sample;
    double attach_radius = 0.0, top_z = 0.0;
    switch (cls) {
        case PayloadClass::Box:
            sample.geometry = physics::PayloadGeometry::box(0.4, 0.4, 0.4);
            attach_radius = 0.8 * 0.2;
            top_z = 0.2;
            break;
        case PayloadClass::Package:
            sample.geometry = physics::PayloadGeometry::box(0.6, 0.4, 0.3);
            attach_radius = 0.8 * 0.2;
            top_z = 0.15;
            break;
        case PayloadClass::Bucket:
            sample.geometry = physics::PayloadGeometry::bucket(0.15, 0.3);
            attach_radius = 0.15;  // rim
            top_z = 0.15;
            break;
    }
    sample.mass = rng.uniform(payload_class_mass_min(cls), payload_class_mass_max(cls));
    sample.inertia_diag = sample.geometry.inertia_diag(sample.mass);

    if (n_uavs == 1) {
        sample.attach_points.push_back(Vec3(0, 0, top_z));
    } else {
        for (int i = 0; i < n_uavs; ++i) {
            const double ang = 2.0 * M_PI * i / n_uavs;
            sample.attach_points.push_back(
                Vec3(attach_radius * std::cos(ang), attach_radius * std::sin(ang), top_z));
        }
    }
    return sample;
}

std::string grid_to_text(const OccupancyGrid& grid) {
    std::ostringstream os;
    os << grid.width << ' ' << grid.depth << ' ' << grid.ceiling << ' ' << grid.resolution
       << '\n';
    for (int iy = grid.ny - 1; iy >= 0; --iy) {
        for (int ix = 0; ix < grid.nx; ++ix) os << (grid.cell(ix, iy) ? '#' : '.');
        os << '\n';
    }
    return os.str();
}

OccupancyGrid grid_from_text(const std::string& text) {
    std::istringstream is(text);
    double width = 0, depth = 0, ceiling = 0, resolution = 0;
    if (!(is >> width >> depth >> ceiling >> resolution)) {
        throw std::invalid_argument("map header must be: width depth ceiling resolution");
    }
    is.ignore();  // trailing newline
    OccupancyGrid grid = make_grid(width, depth, ceiling, resolution);
    for (int iy = grid.ny - 1; iy >= 0; --iy) {
        std::string row;
        if (!std::getline(is, row) || static_cast<int>(row.size()) < grid.nx) {
            throw std::invalid_argument("map row missing or too short");
        }
        for (int ix = 0; ix < grid.nx; ++ix) {
            if (row[ix] != '.' && row[ix] != '#') throw std::invalid_argument("bad map cell");
            grid.set_cell(ix, iy, row[ix] == '#');
        }
    }
    return grid;
}

const char* to_string(Difficulty d) {
    switch (d) {
        case Difficulty::Empty: return "empty";
        case Difficulty::Easy: return "easy";
        case Difficulty::Medium: return "medium";
        case Difficulty::Hard: return "hard";
    }
    return "?";
}

const char* to_string(PayloadClass c) {
    switch (c) {
        case PayloadClass::Box: return "box";
        case PayloadClass::Package: return "package";
        case PayloadClass::Bucket: return "bucket";
    }
    return "?";
}

Difficulty difficulty_from_string(const std::string& s) {
    if (s == "empty") return Difficulty::Empty;
    if (s == "easy") return Difficulty::Easy;
    if (s == "medium") return Difficulty::Medium;
    if (s == "hard") return Difficulty::Hard;
    throw std::invalid_argument("unknown difficulty: " + s);
}

PayloadClass payload_class_from_string(const std::string& s) {
    if (s == "box") return PayloadClass::Box;
    if (s == "package") return PayloadClass::Package;
    if (s == "bucket") return PayloadClass::Bucket;
    throw std::invalid_argument("unknown payload class: " + s);
}

}  // namespace multilift::world
