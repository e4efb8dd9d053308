#ifndef SMAL_SIMULATOR_HPP
#define SMAL_SIMULATOR_HPP

#include "smal/features.hpp"
#include "smal/mdp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace smal {

enum class Heading : std::uint8_t { North = 0, East = 1, South = 2, West = 3 };

inline char to_char(Heading h) { return "NESW"[static_cast<int>(h)]; }

inline std::optional<Heading> parse_heading(std::string_view s) {
    if (s == "N" || s == "north") return Heading::North;
    if (s == "E" || s == "east") return Heading::East;
    if (s == "S" || s == "south") return Heading::South;
    if (s == "W" || s == "west") return Heading::West;
    return std::nullopt;
}

inline Heading turn_left(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 3) % 4); }
inline Heading turn_right(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 1) % 4); }

/// Unit step for a heading; y grows southwards (row index).
inline std::array<int, 2> forward_delta(Heading h) {
    switch (h) {
        case Heading::North: return {0, -1};
        case Heading::East: return {1, 0};
        case Heading::South: return {0, 1};
        case Heading::West: return {-1, 0};
    }
    return {0, 0};
}

struct Cell {
    int x = 0;
    int y = 0;
    bool operator==(const Cell&) const = default;
    auto operator<=>(const Cell&) const = default;
};

struct Pose {
    int x = 0;
    int y = 0;
    Heading heading = Heading::North;

    Cell cell() const { return {x, y}; }
    bool operator==(const Pose&) const = default;
    auto operator<=>(const Pose&) const = default;
};

struct RenderConfig {
    int frame_size = 32;
    int view_depth = 3;    // cells ahead, including the adjacent one
    int view_lateral = 1;  // cells to each side
    bool operator==(const RenderConfig&) const = default;
};

namespace detail {

inline std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (std::uint64_t p : parts) h = splitmix(h ^ p);
    return h;
}

inline double unit_interval(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

inline double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

}  // namespace detail

/**
 * @brief Grid search-and-rescue world.
 *
 * Cells outside the grid are walls. Every cell carries a texture id that
 * drives its appearance; `palette` > 0 folds ids into that many textures,
 * which is the aliasing knob (fewer textures, more poses with identical
 * frames). Slip and sensor noise are pure functions of (noise_seed,
 * step_count), so a world plus an atom sequence fully determines a run.
 */
struct SimWorld {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> walls;  // row-major
    Pose robot;
    Pose start;
    Cell victim;
    std::uint64_t seed = 1;
    int palette = 0;
    RenderConfig render;
    double slip_probability = 0.0;
    double noise_sigma = 0.0;
    std::uint64_t noise_seed = 0;
    int step_count = 0;
    int collision_count = 0;

    bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
    bool is_wall(int x, int y) const { return !in_bounds(x, y) || walls[static_cast<std::size_t>(y) * width + x] != 0; }
    bool at_victim() const { return robot.cell() == victim; }

    std::uint64_t texture(int x, int y) const {
        const std::uint64_t h = detail::hash_combine({seed, static_cast<std::uint64_t>(x + 1024),
                                                      static_cast<std::uint64_t>(y + 1024), is_wall(x, y) ? 1u : 0u});
        return palette > 0 ? h % static_cast<std::uint64_t>(palette) : h;
    }

    void validate() const {
        if (width <= 0 || height <= 0) throw std::invalid_argument("world must be non-empty");
        if (walls.size() != static_cast<std::size_t>(width) * height)
            throw std::invalid_argument("wall grid does not match world size");
        if (is_wall(robot.x, robot.y)) throw std::invalid_argument("robot is not on a free cell");
        if (is_wall(victim.x, victim.y)) throw std::invalid_argument("victim is not on a free cell");
        if (!(slip_probability >= 0.0 && slip_probability <= 1.0))
            throw std::invalid_argument("slip probability outside [0,1]");
        if (!(noise_sigma >= 0.0)) throw std::invalid_argument("noise sigma must be nonnegative");
        if (render.frame_size < 4 || render.view_depth < 1 || render.view_lateral < 0)
            throw std::invalid_argument("invalid render configuration");
    }

    void reset() {
        robot = start;
        step_count = 0;
        collision_count = 0;
    }
};

/// Parse the plain-text world format documented in docs/world-format.md.
inline SimWorld parse_world(std::istream& in) {
    SimWorld w;
    std::vector<std::string> grid;
    std::string line;
    std::optional<Heading> heading;
    std::optional<Cell> robot;
    std::optional<Cell> victim;
    int line_no = 0;
    auto fail = [&](const std::string& msg) {
        throw std::invalid_argument("world line " + std::to_string(line_no) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == ';') continue;
        if (line.find_first_not_of("#.RV") == std::string::npos) {
            grid.push_back(line);
            continue;
        }
        std::istringstream kv(line);
        std::string key;
        kv >> key;
        if (key == "heading") {
            std::string h;
            kv >> h;
            heading = parse_heading(h);
            if (!heading) fail("unknown heading '" + h + "'");
        } else if (key == "seed") {
            kv >> w.seed;
        } else if (key == "palette") {
            kv >> w.palette;
        } else if (key == "view") {
            kv >> w.render.view_depth >> w.render.view_lateral;
        } else if (key == "frame") {
            kv >> w.render.frame_size;
        } else if (key == "slip") {
            kv >> w.slip_probability;
        } else if (key == "noise") {
            kv >> w.noise_sigma;
        } else if (key == "noise_seed") {
            kv >> w.noise_seed;
        } else {
            fail("unknown key '" + key + "'");
        }
        if (kv.fail()) fail("malformed value for '" + key + "'");
    }
    if (grid.empty()) throw std::invalid_argument("world has no grid");
    w.height = static_cast<int>(grid.size());
    w.width = static_cast<int>(grid.front().size());
    w.walls.assign(static_cast<std::size_t>(w.width) * w.height, 0);
    for (int y = 0; y < w.height; ++y) {
        if (static_cast<int>(grid[y].size()) != w.width) throw std::invalid_argument("world grid rows differ in length");
        for (int x = 0; x < w.width; ++x) {
            const char c = grid[y][x];
            if (c == '#') w.walls[static_cast<std::size_t>(y) * w.width + x] = 1;
            if (c == 'R') {
                if (robot) throw std::invalid_argument("world has more than one robot");
                robot = Cell{x, y};
            }
            if (c == 'V') {
                if (victim) throw std::invalid_argument("world has more than one victim");
                victim = Cell{x, y};
            }
        }
    }
    if (!robot) throw std::invalid_argument("world has no robot start 'R'");
    if (!victim) throw std::invalid_argument("world has no victim 'V'");
    w.robot = {robot->x, robot->y, heading.value_or(Heading::North)};
    w.start = w.robot;
    w.victim = *victim;
    w.validate();
    return w;
}

inline SimWorld parse_world(const std::string& text) {
    std::istringstream in(text);
    return parse_world(in);
}

inline SimWorld load_world(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open world file " + path);
    return parse_world(in);
}

/// One atom movement. Blocked translations leave the pose and count a collision.
inline void apply_atom(SimWorld& w, Atom atom) {
    switch (atom) {
        case Atom::TurnLeft: w.robot.heading = turn_left(w.robot.heading); break;
        case Atom::TurnRight: w.robot.heading = turn_right(w.robot.heading); break;
        case Atom::Forward:
        case Atom::Backward: {
            const bool slipped =
                w.slip_probability > 0.0 &&
                detail::unit_interval(detail::hash_combine(
                    {w.noise_seed, static_cast<std::uint64_t>(w.step_count), 0x5117ULL})) < w.slip_probability;
            if (slipped) break;
            auto [dx, dy] = forward_delta(w.robot.heading);
            if (atom == Atom::Backward) {
                dx = -dx;
                dy = -dy;
            }
            if (w.is_wall(w.robot.x + dx, w.robot.y + dy)) {
                ++w.collision_count;
            } else {
                w.robot.x += dx;
                w.robot.y += dy;
            }
            break;
        }
    }
    ++w.step_count;
}

inline SimWorld step(SimWorld w, Atom atom) {
    apply_atom(w, atom);
    return w;
}

namespace detail {

struct Rgb {
    double r, g, b;
};

inline Rgb texture_color(std::uint64_t tex, std::uint64_t salt, double brightness) {
    const std::uint64_t h = hash_combine({tex, salt});
    // Each channel is either off or bright, so distinct textures share little
    // energy in any color channel.
    int mask = static_cast<int>(h % 7) + 1;
    auto channel = [&](int bit, std::uint64_t k) {
        return (mask >> bit) & 1 ? 0.55 + 0.45 * unit_interval(splitmix(h ^ k)) : 0.0;
    };
    return {quantize(channel(0, 1) * brightness), quantize(channel(1, 2) * brightness),
            quantize(channel(2, 3) * brightness)};
}

// Faces are black; each texture shows one colored landmark patch at a
// texture-dependent spot, so frames of different places share few features.
inline void paint_rect(Frame& f, double x0, double x1, double y0, double y1, std::uint64_t tex, bool wall) {
    const int ix0 = std::max(0, static_cast<int>(std::floor(x0)));
    const int ix1 = std::min(f.width, static_cast<int>(std::ceil(x1)));
    const int iy0 = std::max(0, static_cast<int>(std::floor(y0)));
    const int iy1 = std::min(f.height, static_cast<int>(std::ceil(y1)));
    const Rgb light = texture_color(tex, wall ? 0xa11ULL : 0xf100ULL, wall ? 1.0 : 0.7);
    const std::uint64_t h = hash_combine({tex, 0x1a2dULL});
    const double pu = 0.05 + 0.4 * unit_interval(splitmix(h ^ 1));
    const double pv = wall ? 0.05 + 0.4 * unit_interval(splitmix(h ^ 2)) : 0.0;
    const double size = wall ? 0.5 : 1.0;
    for (int y = iy0; y < iy1; ++y) {
        for (int x = ix0; x < ix1; ++x) {
            const double u = std::clamp((x + 0.5 - x0) / (x1 - x0), 0.0, 0.999);
            const double v = std::clamp((y + 0.5 - y0) / (y1 - y0), 0.0, 0.999);
            const double lu = (u - pu) / size;
            const double lv = (v - pv) / size;
            Rgb c{0.0, 0.0, 0.0};
            if (lu >= 0 && lu < 1 && lv >= 0 && lv < 1) c = light;
            f.at(x, y, 0) = c.r;
            f.at(x, y, 1) = c.g;
            f.at(x, y, 2) = c.b;
        }
    }
}

inline void fill_rect(Frame& f, double x0, double x1, double y0, double y1, Rgb c) {
    const int ix0 = std::max(0, static_cast<int>(std::floor(x0)));
    const int ix1 = std::min(f.width, static_cast<int>(std::ceil(x1)));
    const int iy0 = std::max(0, static_cast<int>(std::floor(y0)));
    const int iy1 = std::min(f.height, static_cast<int>(std::ceil(y1)));
    for (int y = iy0; y < iy1; ++y)
        for (int x = ix0; x < ix1; ++x) {
            f.at(x, y, 0) = c.r;
            f.at(x, y, 1) = c.g;
            f.at(x, y, 2) = c.b;
        }
}

}  // namespace detail

/**
 * @brief First-person view of the cells ahead of the robot.
 *
 * Cells at depth 1..view_depth and lateral offset -view_lateral..view_lateral
 * are projected with a pinhole-style scale 1/(depth + 0.5) and painted far to
 * near: walls as full faces, free cells as floor strips, the victim as a red
 * figure. All intensities are multiples of 1/255.
 */
inline Frame render(const SimWorld& w) {
    const int size = w.render.frame_size;
    Frame f(size, size);
    const double half = size / 2.0;

    const auto [fx, fy] = forward_delta(w.robot.heading);
    const auto [rx, ry] = forward_delta(turn_right(w.robot.heading));
    for (int d = w.render.view_depth; d >= 1; --d) {
        const double s = half / (d + 0.5);
        const double s_near = half / d;
        // Outer columns first so the center column wins overlaps.
        for (int span = w.render.view_lateral; span >= 0; --span) {
            for (int j : {-span, span}) {
                const int cx = w.robot.x + d * fx + j * rx;
                const int cy = w.robot.y + d * fy + j * ry;
                const double x0 = half + (2 * j - 1) * s;
                const double x1 = half + (2 * j + 1) * s;
                if (w.is_wall(cx, cy)) {
                    detail::paint_rect(f, x0, x1, half - s, half + s, w.texture(cx, cy), true);
                } else {
                    // floor left dark
                    if (Cell{cx, cy} == w.victim) {
                        const double vw = 0.4 * s;
                        detail::fill_rect(f, half + 2 * j * s - vw, half + 2 * j * s + vw, half - 0.6 * s, half + s_near,
                                          {detail::quantize(0.95), detail::quantize(0.1), detail::quantize(0.1)});
                    }
                }
                if (span == 0) break;
            }
        }
    }

    if (w.noise_sigma > 0.0) {
        for (std::size_t i = 0; i < f.pixels.size(); ++i) {
            const std::uint64_t h =
                detail::hash_combine({w.noise_seed, static_cast<std::uint64_t>(w.step_count), i, 0x0e15eULL});
            // Sum of uniforms, variance-matched to a unit Gaussian.
            double z = 0.0;
            for (int k = 0; k < 4; ++k) z += detail::unit_interval(detail::splitmix(h + k)) - 0.5;
            z *= std::sqrt(3.0);
            f.pixels[i] = detail::quantize(f.pixels[i] + w.noise_sigma * z);
        }
    }
    return f;
}

/// All free poses of the world in row-major order, headings N,E,S,W.
inline std::vector<Pose> free_poses(const SimWorld& w) {
    std::vector<Pose> out;
    for (int y = 0; y < w.height; ++y)
        for (int x = 0; x < w.width; ++x)
            if (!w.is_wall(x, y))
                for (int h = 0; h < 4; ++h) out.push_back({x, y, static_cast<Heading>(h)});
    return out;
}

/// Fraction of free poses whose noise-free frame equals the frame of some other pose.
inline double frame_alias_fraction(const SimWorld& world) {
    SimWorld w = world;
    w.noise_sigma = 0.0;
    const auto poses = free_poses(w);
    std::map<std::vector<double>, int> seen;
    std::vector<std::vector<double>> frames;
    for (const Pose& p : poses) {
        w.robot = p;
        frames.push_back(render(w).pixels);
        ++seen[frames.back()];
    }
    if (poses.empty()) return 0.0;
    int aliased = 0;
    for (const auto& f : frames)
        if (seen[f] > 1) ++aliased;
    return static_cast<double>(aliased) / static_cast<double>(poses.size());
}

class NoPathError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/**
 * @brief Shortest atom sequence from the robot pose to the victim cell.
 *
 * Breadth-first search over (cell, heading) using Forward, TurnLeft and
 * TurnRight, each of cost one; expansion order fixes ties.
 */
inline std::vector<Atom> scripted_expert(const SimWorld& world) {
    world.validate();
    auto key = [&](const Pose& p) {
        return (static_cast<std::size_t>(p.y) * world.width + p.x) * 4 + static_cast<std::size_t>(p.heading);
    };
    const std::size_t count = static_cast<std::size_t>(world.width) * world.height * 4;
    std::vector<int> parent(count, -2);
    std::vector<Atom> via(count, Atom::Forward);
    std::deque<Pose> queue{world.robot};
    parent[key(world.robot)] = -1;
    while (!queue.empty()) {
        const Pose p = queue.front();
        queue.pop_front();
        if (p.cell() == world.victim) {
            std::vector<Atom> path;
            for (std::size_t k = key(p); parent[k] >= 0; k = static_cast<std::size_t>(parent[k])) path.push_back(via[k]);
            std::ranges::reverse(path);
            return path;
        }
        for (Atom a : {Atom::Forward, Atom::TurnLeft, Atom::TurnRight}) {
            Pose next = p;
            if (a == Atom::TurnLeft) next.heading = turn_left(p.heading);
            if (a == Atom::TurnRight) next.heading = turn_right(p.heading);
            if (a == Atom::Forward) {
                const auto [dx, dy] = forward_delta(p.heading);
                if (world.is_wall(p.x + dx, p.y + dy)) continue;
                next.x += dx;
                next.y += dy;
            }
            const std::size_t k = key(next);
            if (parent[k] != -2) continue;
            parent[k] = static_cast<int>(key(p));
            via[k] = a;
            queue.push_back(next);
        }
    }
    throw NoPathError("victim is unreachable from the robot pose");
}

struct EpisodeResult {
    bool success = false;
    int steps = 0;
    int collision_count = 0;
    int decisions = 0;
    std::vector<Pose> trajectory;
};

/// Maps a window of l frames to the next l atoms.
using Controller = std::function<std::vector<Atom>(const std::vector<Frame>& window)>;

/**
 * @brief Closed-loop execution.
 *
 * The first window is l copies of the start frame; afterwards each window is
 * the l frames rendered after the atoms of the previous action. Stops on the
 * victim cell or when `budget` atoms have been executed.
 */
inline EpisodeResult run_episode(SimWorld world, int seq_len, const Controller& controller, int budget) {
    if (seq_len < 1) throw std::invalid_argument("sequence length must be >= 1");
    EpisodeResult result;
    result.trajectory.push_back(world.robot);
    auto finish = [&](bool ok) {
        result.success = ok;
        result.collision_count = world.collision_count;
        return result;
    };
    if (world.at_victim()) return finish(true);

    std::vector<Frame> window(static_cast<std::size_t>(seq_len), render(world));
    while (result.steps < budget) {
        const std::vector<Atom> atoms = controller(window);
        ++result.decisions;
        if (atoms.empty()) break;
        window.clear();
        for (Atom a : atoms) {
            if (result.steps >= budget) break;
            apply_atom(world, a);
            ++result.steps;
            result.trajectory.push_back(world.robot);
            if (world.at_victim()) return finish(true);
            window.push_back(render(world));
        }
        while (static_cast<int>(window.size()) < seq_len) window.push_back(render(world));
    }
    return finish(false);
}

}  // namespace smal

#endif  // SMAL_SIMULATOR_HPP
