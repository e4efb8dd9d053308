#include <smal/simulator.hpp>

#include <gtest/gtest.h>

#include <map>
#include <queue>
#include <random>

namespace smal {
namespace {

using enum Atom;

SimWorld open_world() {
    return parse_world(
        "R....\n"
        ".....\n"
        "..#..\n"
        ".....\n"
        "....V\n"
        "heading E\n");
}

TEST(Step, Examples) {
    SimWorld w = open_world();
    w.robot = {2, 1, Heading::East};
    const SimWorld moved = step(w, Forward);
    EXPECT_EQ(moved.robot, (Pose{3, 1, Heading::East}));
    EXPECT_EQ(moved.step_count, 1);

    w.robot.heading = Heading::North;
    EXPECT_EQ(step(w, TurnLeft).robot, (Pose{2, 1, Heading::West}));
    EXPECT_EQ(step(w, TurnRight).robot, (Pose{2, 1, Heading::East}));

    w.robot = {2, 1, Heading::South};  // (2,2) is a wall
    const SimWorld blocked = step(w, Forward);
    EXPECT_EQ(blocked.robot, w.robot);
    EXPECT_EQ(blocked.collision_count, 1);
    EXPECT_EQ(blocked.step_count, 1);

    w.robot = {0, 0, Heading::East};  // backing out of the grid
    EXPECT_EQ(step(w, Backward).collision_count, 1);
}

TEST(Step, KinematicClosure) {
    const SimWorld base = open_world();
    const auto poses = free_poses(base);
    for (const Pose& p : poses) {
        SimWorld w = base;
        w.robot = p;
        for (Atom turn : {TurnLeft, TurnRight}) {
            SimWorld t = w;
            for (int i = 0; i < 4; ++i) apply_atom(t, turn);
            EXPECT_EQ(t.robot, p);
        }
        SimWorld f = step(w, Forward);
        if (f.collision_count == 0) {
            apply_atom(f, Backward);
            EXPECT_EQ(f.robot, p);
            EXPECT_EQ(f.collision_count, 0);
        }
    }
}

TEST(Step, SameAtomsSameTrajectoryAndFrames) {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<int> pick(0, 3);
    std::vector<Atom> atoms(60);
    for (auto& a : atoms) a = static_cast<Atom>(pick(rng));
    SimWorld base = open_world();
    base.slip_probability = 0.2;
    base.noise_sigma = 0.05;
    base.noise_seed = 9;
    auto run = [&] {
        SimWorld w = base;
        std::vector<Pose> poses;
        std::vector<Frame> frames;
        for (Atom a : atoms) {
            apply_atom(w, a);
            poses.push_back(w.robot);
            frames.push_back(render(w));
        }
        return std::make_pair(poses, frames);
    };
    const auto a = run();
    const auto b = run();
    EXPECT_EQ(a.first, b.first);
    ASSERT_EQ(a.second.size(), b.second.size());
    for (std::size_t i = 0; i < a.second.size(); ++i) EXPECT_EQ(a.second[i].pixels, b.second[i].pixels);
}

TEST(Step, SlipSkipsSomeTranslations) {
    SimWorld w = parse_world("R.........V\nheading E\nslip 0.5\n");
    int moved = 0;
    for (int i = 0; i < 40; ++i) {
        const int before = w.robot.x;
        apply_atom(w, i % 2 == 0 ? Forward : Backward);
        moved += w.robot.x != before;
    }
    EXPECT_GT(moved, 5);
    EXPECT_LT(moved, 35);
}

TEST(Render, Deterministic) {
    const SimWorld w = open_world();
    const Frame a = render(w), b = render(w);
    EXPECT_EQ(a.pixels, b.pixels);
    EXPECT_EQ(a.width, 32);
    for (double v : a.pixels) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        EXPECT_DOUBLE_EQ(v * 255.0, std::round(v * 255.0));
    }
}

TEST(Render, FullTurnRestoresFrame) {
    SimWorld w = open_world();
    w.robot = {1, 3, Heading::North};
    const Frame before = render(w);
    for (int i = 0; i < 4; ++i) apply_atom(w, TurnLeft);
    EXPECT_EQ(render(w).pixels, before.pixels);
}

TEST(Render, EqualTexturesGiveIdenticalFrames) {
    // Palette 1 folds every texture onto one; two interior cells of a long
    // corridor then see the same thing.
    SimWorld w = parse_world(
        "###########\n"
        "R.........V\n"
        "###########\n"
        "heading E\n"
        "palette 1\n");
    w.robot = {2, 1, Heading::East};
    const Frame a = render(w);
    w.robot = {4, 1, Heading::East};
    EXPECT_EQ(render(w).pixels, a.pixels);

    w.palette = 0;
    const Frame c = render(w);
    w.robot = {2, 1, Heading::East};
    EXPECT_NE(render(w).pixels, c.pixels);
}

TEST(Render, VictimIsVisible) {
    SimWorld w = parse_world("R.V\nheading E\n");
    const Frame with = render(w);
    bool red = false;
    for (int y = 0; y < with.height; ++y)
        for (int x = 0; x < with.width; ++x) red |= with.at(x, y, 0) > 0.9 && with.at(x, y, 1) < 0.2;
    EXPECT_TRUE(red);
    w.robot.heading = Heading::West;
    const Frame away = render(w);
    for (int y = 0; y < away.height; ++y)
        for (int x = 0; x < away.width; ++x) EXPECT_FALSE(away.at(x, y, 0) > 0.9 && away.at(x, y, 1) < 0.2);
}

TEST(Render, PaletteControlsAliasing) {
    const std::string grid =
        "R......\n"
        ".......\n"
        "..#....\n"
        ".......\n"
        "....#..\n"
        ".......\n"
        "......V\n";
    double previous = 1.1;
    for (int palette : {1, 2, 4, 0}) {
        const SimWorld w = parse_world(grid + "palette " + std::to_string(palette) + "\n");
        const double alias = frame_alias_fraction(w);
        EXPECT_LE(alias, previous) << "palette " << palette;
        previous = alias;
    }
    EXPECT_GT(frame_alias_fraction(parse_world(grid + "palette 1\n")), 0.5);
}

TEST(Render, NoiseStaysQuantized) {
    SimWorld w = open_world();
    w.noise_sigma = 0.1;
    const Frame noisy = render(w);
    w.noise_sigma = 0.0;
    EXPECT_NE(noisy.pixels, render(w).pixels);
    for (double v : noisy.pixels) EXPECT_DOUBLE_EQ(v * 255.0, std::round(v * 255.0));
}

// Independent BFS over (cell, heading) returning only the distance.
int bfs_distance(const SimWorld& w) {
    std::map<Pose, int> dist{{w.robot, 0}};
    std::queue<Pose> q;
    q.push(w.robot);
    while (!q.empty()) {
        const Pose p = q.front();
        q.pop();
        if (p.cell() == w.victim) return dist[p];
        std::vector<Pose> next{{p.x, p.y, turn_left(p.heading)}, {p.x, p.y, turn_right(p.heading)}};
        const auto [dx, dy] = forward_delta(p.heading);
        if (!w.is_wall(p.x + dx, p.y + dy)) next.push_back({p.x + dx, p.y + dy, p.heading});
        for (const Pose& n : next)
            if (!dist.contains(n)) {
                dist[n] = dist[p] + 1;
                q.push(n);
            }
    }
    return -1;
}

TEST(ScriptedExpert, StraightCorridor) {
    const SimWorld w = parse_world("###\nR.V\n###\nheading E\n");
    EXPECT_EQ(scripted_expert(w), (std::vector<Atom>{Forward, Forward}));
}

TEST(ScriptedExpert, VictimBehind) {
    const SimWorld w = parse_world("V.R\nheading E\n");
    const auto path = scripted_expert(w);
    EXPECT_EQ(static_cast<int>(path.size()), bfs_distance(w));
    EXPECT_EQ(path.size(), 4u);
    EXPECT_TRUE(path[0] == TurnLeft || path[0] == TurnRight);
    EXPECT_EQ(path[1], path[0]);
}

TEST(ScriptedExpert, ShortestAndCollisionFreeFromEveryPose) {
    const SimWorld base = open_world();
    for (const Pose& p : free_poses(base)) {
        SimWorld w = base;
        w.robot = p;
        const auto path = scripted_expert(w);
        EXPECT_EQ(static_cast<int>(path.size()), bfs_distance(w));
        for (Atom a : path) apply_atom(w, a);
        EXPECT_TRUE(w.at_victim());
        EXPECT_EQ(w.collision_count, 0);
    }
}

TEST(ScriptedExpert, UnreachableVictim) {
    const SimWorld w = parse_world("R.#V\nheading E\n");
    EXPECT_THROW(scripted_expert(w), NoPathError);
}

TEST(RunEpisode, StartOnVictim) {
    SimWorld w = open_world();
    w.robot = {4, 4, Heading::North};
    int calls = 0;
    const EpisodeResult r = run_episode(w, 2, [&](const std::vector<Frame>&) {
        ++calls;
        return std::vector<Atom>{Forward, Forward};
    }, 10);
    EXPECT_TRUE(r.success);
    EXPECT_EQ(r.steps, 0);
    EXPECT_EQ(calls, 0);
}

TEST(RunEpisode, ZeroBudgetFails) {
    const EpisodeResult r = run_episode(open_world(), 2, [](const std::vector<Frame>&) {
        return std::vector<Atom>{Forward, Forward};
    }, 0);
    EXPECT_FALSE(r.success);
    EXPECT_EQ(r.steps, 0);
}

TEST(RunEpisode, WindowsFollowTheAtoms) {
    SimWorld w = parse_world("R....V\nheading E\n");
    std::vector<std::vector<Frame>> seen;
    const EpisodeResult r = run_episode(w, 2, [&](const std::vector<Frame>& window) {
        seen.push_back(window);
        return std::vector<Atom>{Forward, Forward};
    }, 100);
    EXPECT_TRUE(r.success);
    EXPECT_EQ(r.steps, 5);
    EXPECT_EQ(r.trajectory.size(), 6u);
    ASSERT_EQ(seen.size(), 3u);
    // First window: the start frame twice. Second: frames after atoms 1 and 2.
    const Frame start = render(w);
    EXPECT_EQ(seen[0][0].pixels, start.pixels);
    EXPECT_EQ(seen[0][1].pixels, start.pixels);
    w.robot.x = 1;
    EXPECT_EQ(seen[1][0].pixels, render(w).pixels);
    w.robot.x = 2;
    EXPECT_EQ(seen[1][1].pixels, render(w).pixels);
}

TEST(RunEpisode, BudgetCountsAtomsAndCollisions) {
    const EpisodeResult r = run_episode(parse_world("R#V\nheading E\n"), 1, [](const std::vector<Frame>&) {
        return std::vector<Atom>{Forward};
    }, 7);
    EXPECT_FALSE(r.success);
    EXPECT_EQ(r.steps, 7);
    EXPECT_EQ(r.collision_count, 7);
}

TEST(World, ParseErrors) {
    EXPECT_THROW(parse_world("R..\n"), std::invalid_argument);             // no victim
    EXPECT_THROW(parse_world("...V\n"), std::invalid_argument);            // no robot
    EXPECT_THROW(parse_world("R..V\n..\n"), std::invalid_argument);        // ragged
    EXPECT_THROW(parse_world("R.V\nheading up\n"), std::invalid_argument);  // bad heading
    EXPECT_THROW(parse_world("R.V\nspeed 3\n"), std::invalid_argument);    // unknown key
    EXPECT_THROW(parse_world("RRV\n"), std::invalid_argument);
    EXPECT_THROW(load_world("/nonexistent/world.txt"), std::runtime_error);
}

TEST(World, ParsesSettings) {
    const SimWorld w = parse_world("; comment\nR.\n.V\nheading S\nseed 7\npalette 3\nview 2 0\nframe 16\nslip 0.1\n");
    EXPECT_EQ(w.robot, (Pose{0, 0, Heading::South}));
    EXPECT_EQ(w.victim, (Cell{1, 1}));
    EXPECT_EQ(w.seed, 7u);
    EXPECT_EQ(w.palette, 3);
    EXPECT_EQ(w.render, (RenderConfig{16, 2, 0}));
    EXPECT_DOUBLE_EQ(w.slip_probability, 0.1);
    EXPECT_EQ(w.start, w.robot);
}

}  // namespace
}  // namespace smal
