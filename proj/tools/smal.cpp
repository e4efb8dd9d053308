// Command-line front end: record demonstrations, train, run, evaluate, serve.

#include <smal/pipeline.hpp>
#include <smal/service.hpp>

#include <CLI11.hpp>

#include <boost/asio/signal_set.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace smal;

namespace {

Pose parse_pose(const std::string& text) {
    // x,y,H
    std::istringstream in(text);
    Pose p;
    char c1 = 0, c2 = 0;
    std::string h;
    if (!(in >> p.x >> c1 >> p.y >> c2 >> h) || c1 != ',' || c2 != ',')
        throw std::invalid_argument("pose must look like x,y,H (got '" + text + "')");
    const auto heading = parse_heading(h);
    if (!heading) throw std::invalid_argument("unknown heading '" + h + "'");
    p.heading = *heading;
    return p;
}

std::string pose_string(const Pose& p) {
    return std::to_string(p.x) + "," + std::to_string(p.y) + "," + to_char(p.heading);
}

struct WorldOverrides {
    std::vector<std::string> starts;
    std::optional<double> slip;
    std::optional<double> noise;
    std::optional<std::uint64_t> noise_seed;

    void add(CLI::App* cmd, bool multiple_starts) {
        if (multiple_starts)
            cmd->add_option("--start", starts, "start pose x,y,H (repeatable; episodes cycle through them)");
        else
            cmd->add_option("--start", starts, "start pose x,y,H")->expected(0, 1);
        cmd->add_option("--slip", slip, "probability that a translation fails");
        cmd->add_option("--noise", noise, "sensor noise sigma");
        cmd->add_option("--noise-seed", noise_seed, "seed for slip and sensor noise");
    }

    SimWorld apply(SimWorld w) const {
        if (slip) w.slip_probability = *slip;
        if (noise) w.noise_sigma = *noise;
        if (noise_seed) w.noise_seed = *noise_seed;
        w.validate();
        return w;
    }

    std::vector<Pose> start_poses(const SimWorld& w) const {
        std::vector<Pose> out;
        for (const auto& s : starts) out.push_back(parse_pose(s));
        if (out.empty()) out.push_back(w.start);
        return out;
    }
};

int cmd_demo(const std::string& world_file, const std::string& out, bool scripted, std::size_t pad,
             const WorldOverrides& ov) {
    SimWorld w = ov.apply(load_world(world_file));
    w.robot = w.start = ov.start_poses(w).front();
    w.validate();
    Demonstration d;
    if (scripted) {
        RecordOptions opts;
        opts.pad_multiple = pad;
        opts.world_file = world_file;
        d = record_scripted_demo(w, opts);
    } else {
        // Atoms from stdin, one token each: forward|backward|turn_left|turn_right or F|B|L|R.
        DemoRecorder rec;
        rec.start(w);
        for (std::string tok; std::cin >> tok;) {
            auto atom = parse_atom(tok);
            if (!atom && tok.size() == 1) {
                const auto pos = std::string_view("FBLR").find(tok[0]);
                if (pos != std::string_view::npos) atom = static_cast<Atom>(pos);
            }
            if (!atom) throw std::invalid_argument("unknown atom '" + tok + "'");
            apply_atom(w, *atom);
            rec.record(*atom, w);
        }
        d = rec.finish();
        d.world_file = world_file;
    }
    save_demo(d, out);
    std::cout << "wrote " << out << ": " << d.k_stream.size() << " atoms, " << d.frames.size() << " frames\n";
    return 0;
}

int cmd_train(const std::string& demo_dir, const std::string& out, long l, std::optional<double> lambda1,
              std::optional<double> lambda2, std::optional<double> tau, std::optional<double> gamma) {
    TrainConfig cfg = TrainConfig::with_length(l);
    if (lambda1) cfg.match.solver.lambda1 = *lambda1;
    if (lambda2) cfg.match.solver.lambda2 = *lambda2;
    if (tau) cfg.match.tau = *tau;
    if (gamma) cfg.reward.gamma = *gamma;
    const auto demos = load_demo_dir(demo_dir);
    if (demos.empty()) throw std::invalid_argument("no .demo files in " + demo_dir);
    const TrainedModel model = train(demos, cfg);
    save_model(model, out);
    std::cout << "trained on " << demos.size() << " demonstrations: " << model.space.size() << " states, "
              << model.mdp.num_actions() << " actions" << (model.reward_degenerate ? " (degenerate reward)" : "")
              << "\nwrote " << out << '\n';
    return 0;
}

int cmd_run(const std::string& model_file, const std::string& world_file, std::optional<int> budget, int budget_mult,
            int trials, const WorldOverrides& ov) {
    const TrainedModel model = load_model(model_file);
    const SimWorld base = ov.apply(load_world(world_file));
    const auto starts = ov.start_poses(base);
    const Controller controller = make_controller(model);
    int reached = 0, clean = 0;
    std::printf("trial,start,success,collision_free,steps,collisions,decisions,budget\n");
    for (int t = 0; t < trials; ++t) {
        SimWorld w = base;
        w.robot = w.start = starts[static_cast<std::size_t>(t) % starts.size()];
        w.noise_seed = base.noise_seed + static_cast<std::uint64_t>(t);
        w.validate();
        const int b = budget ? *budget : budget_mult * static_cast<int>(scripted_expert(w).size());
        const EpisodeResult r = run_episode(w, static_cast<int>(model.seq_len()), controller, b);
        const bool collision_free = r.success && r.collision_count == 0;
        reached += r.success;
        clean += collision_free;
        std::printf("%d,%s,%d,%d,%d,%d,%d,%d\n", t, pose_string(w.start).c_str(), r.success ? 1 : 0,
                    collision_free ? 1 : 0, r.steps, r.collision_count, r.decisions, b);
    }
    std::printf("success_rate %d/%d\ncollision_free_success_rate %d/%d\n", reached, trials, clean, trials);
    return 0;
}

int cmd_eval(const std::string& model_file, const std::string& query_dir) {
    const TrainedModel model = load_model(model_file);
    const auto queries = load_demo_dir(query_dir);
    if (queries.empty()) throw std::invalid_argument("no .demo files in " + query_dir);
    const RecognitionReport report = evaluate_recognition(model, queries);
    std::cout << pr_csv(report);
    std::cerr << "queries " << report.queries << " correct " << report.correct << " accuracy " << report.accuracy()
              << '\n';
    return 0;
}

int cmd_serve(const std::string& world_file, service::ServiceConfig cfg) {
    service::Server server(load_world(world_file), cfg);
    server.start();
    std::cout << "listening on " << cfg.address << ':' << server.port() << std::endl;
    boost::asio::io_context signals_ctx;
    boost::asio::signal_set signals(signals_ctx, SIGINT, SIGTERM);
    signals.async_wait([](const boost::system::error_code&, int) {});
    signals_ctx.run();
    server.stop();
    std::cout << "stopped" << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sequence-based state learning and apprenticeship learning in a grid-world rescue simulator"};
    app.require_subcommand(1);

    std::string world_file, out, demo_dir, model_file, query_dir;
    WorldOverrides ov;

    auto* demo = app.add_subcommand("demo", "record a demonstration (scripted, or atoms read from stdin)");
    bool scripted = false;
    std::size_t pad = 1;
    demo->add_option("--world", world_file, "world file")->required();
    demo->add_option("--out", out, "demonstration file to write")->required();
    demo->add_flag("--scripted", scripted, "use the shortest-path expert");
    demo->add_option("--pad", pad, "append turns at the goal until the atom count divides this");
    ov.add(demo, false);

    auto* tr = app.add_subcommand("train", "train a model from a directory of demonstrations");
    long l = 4;
    std::optional<double> lambda1, lambda2, tau, gamma;
    tr->add_option("--demos", demo_dir, "directory of .demo files")->required();
    tr->add_option("--out", out, "model file to write")->required();
    tr->add_option("--l", l, "sequence length")->check(CLI::PositiveNumber);
    tr->add_option("--lambda1", lambda1, "row-sparsity weight");
    tr->add_option("--lambda2", lambda2, "group-sparsity weight");
    tr->add_option("--tau", tau, "match threshold on group mass");
    tr->add_option("--gamma", gamma, "discount factor");

    auto* run = app.add_subcommand("run", "execute a trained model in a world");
    std::optional<int> budget;
    int budget_mult = 4, trials = 10;
    run->add_option("--model", model_file, "model file")->required();
    run->add_option("--world", world_file, "world file")->required();
    run->add_option("--budget", budget, "atom budget per episode (default: budget-mult x expert path length)");
    run->add_option("--budget-mult", budget_mult, "budget as a multiple of the expert path length");
    run->add_option("--trials", trials, "number of episodes")->check(CLI::PositiveNumber);
    ov.add(run, true);

    auto* ev = app.add_subcommand("eval-recognition", "precision-recall of state identification on query demos");
    ev->add_option("--model", model_file, "model file")->required();
    ev->add_option("--queries", query_dir, "directory of .demo files")->required();

    auto* serve = app.add_subcommand("serve", "run the teleoperation service");
    service::ServiceConfig scfg;
    std::string sdemo_dir;
    serve->add_option("--world", world_file, "world file")->required();
    serve->add_option("--port", scfg.port, "TCP port");
    serve->add_option("--address", scfg.address, "bind address");
    serve->add_option("--tick-ms", scfg.tick_ms, "simulation tick in milliseconds");
    serve->add_option("--demo-dir", sdemo_dir, "directory for recorded demonstrations");
    serve->add_flag("--auto-record", scfg.auto_record, "record from the moment a writer connects");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*demo) return cmd_demo(world_file, out, scripted, pad, ov);
        if (*tr) return cmd_train(demo_dir, out, l, lambda1, lambda2, tau, gamma);
        if (*run) return cmd_run(model_file, world_file, budget, budget_mult, trials, ov);
        if (*ev) return cmd_eval(model_file, query_dir);
        if (*serve) {
            scfg.demo_dir = sdemo_dir;
            return cmd_serve(world_file, scfg);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
