#ifndef SMAL_PIPELINE_HPP
#define SMAL_PIPELINE_HPP

#include "smal/demonstration.hpp"
#include "smal/irl.hpp"
#include "smal/mdp.hpp"
#include "smal/simulator.hpp"
#include "smal/state_learning.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <charconv>
#include <filesystem>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace smal {

struct TrainConfig {
    ModalityConfig modality;
    MatchConfig match;
    RewardConfig reward;

    static TrainConfig with_length(Eigen::Index l) {
        TrainConfig cfg;
        cfg.match = MatchConfig::with_length(l);
        return cfg;
    }

    Eigen::Index seq_len() const { return match.seq_len; }
    bool operator==(const TrainConfig&) const = default;
};

struct TrainedModel {
    TrainConfig config;
    StateSpace space;
    MdpModel mdp;
    Policy policy;
    std::vector<std::optional<Pose>> state_labels;  // end pose of each representative window
    bool reward_degenerate = false;

    Eigen::Index seq_len() const { return config.seq_len(); }
};

struct RecordOptions {
    std::size_t pad_multiple = 1;  // append TurnLeft atoms at the goal until the length divides this
    std::string world_file;
    std::string timestamp;
};

/// Scripted expert demonstration: the shortest path replayed through the simulator.
inline Demonstration record_scripted_demo(const SimWorld& world, const RecordOptions& opts = {}) {
    std::vector<Atom> atoms = scripted_expert(world);
    if (opts.pad_multiple > 1)
        while (atoms.size() % opts.pad_multiple != 0) atoms.push_back(Atom::TurnLeft);
    SimWorld w = world;
    DemoRecorder rec;
    rec.start(w);
    for (Atom a : atoms) {
        apply_atom(w, a);
        rec.record(a, w);
    }
    Demonstration d = rec.finish();
    d.world_file = opts.world_file;
    d.timestamp = opts.timestamp;
    return d;
}

namespace detail {

// Feature columns of the windows of a frame stream: l-1 copies of the first
// frame are prepended so that window 0 is the view before any motion and
// window j ends on the frame rendered after action j-1.
inline std::vector<Eigen::MatrixXd> feature_windows(const std::vector<Frame>& frames, const TrainConfig& cfg) {
    const Eigen::Index l = cfg.seq_len();
    std::vector<Eigen::MatrixXd> windows;
    if (frames.empty()) return windows;
    std::vector<FeatureVector> encoded;
    encoded.reserve(frames.size());
    for (const Frame& f : frames) encoded.push_back(encode(f, cfg.modality));
    const auto m = static_cast<Eigen::Index>(encoded.front().size());
    const auto padded = static_cast<Eigen::Index>(frames.size()) + l - 1;
    for (Eigen::Index start = 0; start + l <= padded; start += l) {
        Eigen::MatrixXd win(m, l);
        for (Eigen::Index c = 0; c < l; ++c) {
            const Eigen::Index src = std::max<Eigen::Index>(0, start + c - (l - 1));
            win.col(c) = encoded[static_cast<std::size_t>(src)].values;
        }
        windows.push_back(std::move(win));
    }
    return windows;
}

// Ground-truth pose at the end of window j.
inline Pose window_end_pose(const std::vector<Pose>& poses, std::size_t j, Eigen::Index l) {
    return poses[j * static_cast<std::size_t>(l)];
}

}  // namespace detail

/**
 * @brief Full training chain: states, actions, transitions, reward, policy.
 *
 * Demonstrations share one state space and one action space; transitions
 * are counted within each demonstration only.
 */
inline TrainedModel train(const std::vector<Demonstration>& demos, const TrainConfig& cfg) {
    cfg.modality.validate();
    cfg.match.validate();
    cfg.reward.validate();
    if (demos.empty()) throw std::invalid_argument("no demonstrations to train on");
    const Eigen::Index l = cfg.seq_len();

    StateLearner learner(cfg.match);
    ActionSpace actions(static_cast<std::size_t>(l));
    TransitionCounts counts;
    std::vector<std::optional<Pose>> labels;
    std::vector<StateId> end_states;

    for (const Demonstration& d : demos) {
        d.validate();
        if (d.frames.empty()) continue;
        const auto windows = detail::feature_windows(d.frames, cfg);
        if (windows.empty()) throw std::invalid_argument("demonstration yields no windows");
        if (windows.front().rows() != static_cast<Eigen::Index>(cfg.modality.length()))
            throw std::invalid_argument("feature length does not match the modality config");
        const std::vector<ActionId> a_stream = actions.consume(d.k_stream);
        StateStream s_stream;
        for (std::size_t j = 0; j < windows.size() && s_stream.size() <= a_stream.size(); ++j) {
            const auto before = learner.space().size();
            s_stream.push_back(learner.observe(windows[j]));
            if (learner.space().size() > before) labels.push_back(detail::window_end_pose(d.poses, j, l));
        }
        counts.add(s_stream, a_stream);
        if (!d.truncated) end_states.push_back(s_stream.back());
    }

    TrainedModel model;
    model.config = cfg;
    model.space = learner.space();
    model.state_labels = std::move(labels);
    model.mdp.num_states = static_cast<int>(model.space.size());
    model.mdp.actions = actions.actions();
    model.mdp.gamma = cfg.reward.gamma;
    model.mdp.transitions = TransitionModel::from_counts(counts, model.mdp.num_states, model.mdp.num_actions());
    const RewardResult reward = learn_reward(model.mdp, counts, cfg.reward, end_states);
    model.mdp.reward = reward.reward;
    model.reward_degenerate = reward.degenerate;
    model.policy = value_iteration(model.mdp);
    return model;
}

struct Decision {
    Identification identification;
    ActionChoice choice;
};

/// Identification followed by action selection for one window of frames.
inline Decision decide(const TrainedModel& model, const std::vector<Frame>& window) {
    if (static_cast<Eigen::Index>(window.size()) != model.seq_len())
        throw std::invalid_argument("window length does not match the model sequence length");
    Eigen::MatrixXd y(static_cast<Eigen::Index>(model.config.modality.length()), model.seq_len());
    for (std::size_t i = 0; i < window.size(); ++i)
        y.col(static_cast<Eigen::Index>(i)) = encode(window[i], model.config.modality).values;
    Decision d;
    if (model.space.size() == 1) {
        d.identification.state = 0;
        d.identification.masses = Eigen::VectorXd::Ones(1);
    } else {
        d.identification = identify_detailed(y, model.space, model.config.match);
    }
    const std::vector<double> masses(d.identification.masses.data(),
                                     d.identification.masses.data() + d.identification.masses.size());
    d.choice = select_action(model.policy, model.mdp.actions, d.identification.state, masses);
    return d;
}

inline Controller make_controller(const TrainedModel& model) {
    return [&model](const std::vector<Frame>& window) { return decide(model, window).choice.action.atoms; };
}

struct PrPoint {
    double threshold = 0.0;
    double precision = 1.0;
    double recall = 0.0;
};

struct RecognitionReport {
    int queries = 0;
    int correct = 0;
    std::vector<PrPoint> curve;

    double accuracy() const { return queries > 0 ? static_cast<double>(correct) / queries : 0.0; }
};

/// Identify every window of every query demonstration against its ground-truth pose.
///
/// Confidence is the heaviest group's share of the total group mass. The
/// curve has one point per distinct confidence, in decreasing threshold order.
inline RecognitionReport evaluate_recognition(const TrainedModel& model, const std::vector<Demonstration>& queries) {
    struct Scored {
        double score;
        bool correct;
    };
    std::vector<Scored> scored;
    const Eigen::Index l = model.seq_len();
    for (const Demonstration& q : queries) {
        q.validate();
        const auto windows = detail::feature_windows(q.frames, model.config);
        for (std::size_t j = 0; j < windows.size(); ++j) {
            Identification id;
            if (model.space.size() == 1) {
                id.state = 0;
                id.masses = Eigen::VectorXd::Ones(1);
            } else {
                id = identify_detailed(windows[j], model.space, model.config.match);
            }
            const double total = id.masses.sum();
            const double score = total > 0.0 ? id.masses[id.state] / total : 0.0;
            const auto& label = model.state_labels.at(static_cast<std::size_t>(id.state));
            scored.push_back({score, label && *label == detail::window_end_pose(q.poses, j, l)});
        }
    }

    RecognitionReport report;
    report.queries = static_cast<int>(scored.size());
    for (const auto& s : scored) report.correct += s.correct ? 1 : 0;
    std::ranges::stable_sort(scored, [](const Scored& a, const Scored& b) { return a.score > b.score; });
    int accepted = 0;
    int hits = 0;
    for (std::size_t i = 0; i < scored.size(); ++i) {
        ++accepted;
        hits += scored[i].correct ? 1 : 0;
        if (i + 1 < scored.size() && scored[i + 1].score == scored[i].score) continue;
        report.curve.push_back({scored[i].score, static_cast<double>(hits) / accepted,
                                static_cast<double>(hits) / static_cast<double>(scored.size())});
    }
    return report;
}

inline std::string pr_csv(const RecognitionReport& report) {
    std::ostringstream out;
    out.precision(17);
    out << "threshold,precision,recall\n";
    for (const auto& p : report.curve) out << p.threshold << ',' << p.precision << ',' << p.recall << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------
// Model file: text header, then a little-endian float64 block for templates.

inline constexpr const char* kModelMagic = "SMAL-MODEL";
inline constexpr int kModelVersion = 1;

namespace detail {

inline std::string fmt_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw CorruptFile("bad number '" + s + "'");
    return v;
}

inline long parse_int(const std::string& s) {
    long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw CorruptFile("bad integer '" + s + "'");
    return v;
}

}  // namespace detail

inline std::string serialize_model(const TrainedModel& m) {
    using detail::fmt_double;
    std::ostringstream h;
    const TrainConfig& c = m.config;
    h << kModelMagic << ' ' << kModelVersion << '\n';
    h << "seq_len " << c.seq_len() << '\n';
    h << "color " << c.modality.color_downsample.rows << ' ' << c.modality.color_downsample.cols << '\n';
    h << "gradient_bins " << c.modality.gradient_bins << '\n';
    h << "gradient " << c.modality.gradient_downsample.rows << ' ' << c.modality.gradient_downsample.cols << '\n';
    h << "tau " << fmt_double(c.match.tau) << '\n';
    h << "lambda1 " << fmt_double(c.match.solver.lambda1) << '\n';
    h << "lambda2 " << fmt_double(c.match.solver.lambda2) << '\n';
    h << "epsilon " << fmt_double(c.match.solver.epsilon) << '\n';
    h << "max_iter " << c.match.solver.max_iter << '\n';
    h << "rel_tol " << fmt_double(c.match.solver.rel_tol) << '\n';
    h << "gamma " << fmt_double(c.reward.gamma) << '\n';
    h << "r_max " << fmt_double(c.reward.r_max) << '\n';
    h << "l1_penalty " << fmt_double(c.reward.l1_penalty) << '\n';
    h << "mdp_gamma " << fmt_double(m.mdp.gamma) << '\n';
    h << "reward_degenerate " << (m.reward_degenerate ? 1 : 0) << '\n';
    h << "states " << m.mdp.num_states << '\n';
    h << "actions " << m.mdp.num_actions() << '\n';
    for (const Action& a : m.mdp.actions) {
        h << "action " << a.id << ' ';
        for (Atom atom : a.atoms) h << to_char(atom);
        h << '\n';
    }
    for (int s = 0; s < m.mdp.num_states; ++s)
        for (int a = 0; a < m.mdp.num_actions(); ++a) {
            if (!m.mdp.transitions.observed(s, a)) continue;
            h << "transition " << s << ' ' << a;
            for (int n = 0; n < m.mdp.num_states; ++n) h << ' ' << fmt_double(m.mdp.transitions(s, a, n));
            h << '\n';
        }
    for (int s = 0; s < m.mdp.num_states; ++s) {
        h << "reward " << s;
        for (int a = 0; a < m.mdp.num_actions(); ++a) h << ' ' << fmt_double(m.mdp.reward(s, a));
        h << '\n';
    }
    h << "sweeps " << m.policy.sweeps << '\n';
    for (Eigen::Index s = 0; s < m.policy.value.size(); ++s) h << "value " << s << ' ' << fmt_double(m.policy.value[s]) << '\n';
    for (const auto& [s, a] : m.policy.action) h << "policy " << s << ' ' << a << '\n';
    for (std::size_t s = 0; s < m.state_labels.size(); ++s)
        if (const auto& p = m.state_labels[s])
            h << "label " << s << ' ' << p->x << ' ' << p->y << ' ' << to_char(p->heading) << '\n';
    const Eigen::MatrixXd& t = m.space.templates.data;
    h << "templates " << t.rows() << ' ' << t.cols() << '\n';
    h << "end\n";

    std::string out = h.str();
    for (Eigen::Index j = 0; j < t.cols(); ++j)
        for (Eigen::Index i = 0; i < t.rows(); ++i) io::put_f64(out, t(i, j));
    return out;
}

inline TrainedModel deserialize_model(std::string_view bytes) {
    using detail::parse_double;
    using detail::parse_int;
    std::size_t pos = 0;
    auto next_line = [&]() -> std::string {
        const auto nl = bytes.find('\n', pos);
        if (nl == std::string_view::npos) throw CorruptFile("model header is truncated");
        std::string line(bytes.substr(pos, nl - pos));
        pos = nl + 1;
        return line;
    };
    auto split = [](const std::string& line) {
        std::vector<std::string> parts;
        std::istringstream in(line);
        for (std::string p; in >> p;) parts.push_back(p);
        return parts;
    };

    {
        const auto head = split(next_line());
        if (head.size() != 2 || head[0] != kModelMagic) throw CorruptFile("not a model file");
        if (parse_int(head[1]) != kModelVersion)
            throw CorruptFile("unsupported model version " + head[1] + " (expected " + std::to_string(kModelVersion) + ")");
    }

    TrainedModel m;
    TrainConfig& c = m.config;
    Eigen::Index rows = -1;
    Eigen::Index cols = -1;
    int num_actions = -1;
    std::vector<std::pair<int, std::vector<double>>> transitions;  // (s*A + a, row)
    std::vector<std::pair<int, std::vector<double>>> rewards;
    std::vector<std::pair<int, double>> values;
    for (;;) {
        const auto p = split(next_line());
        if (p.empty()) continue;
        const std::string& key = p[0];
        auto need = [&](std::size_t n) {
            if (p.size() != n) throw CorruptFile("malformed '" + key + "' line");
        };
        if (key == "end") break;
        if (key == "seq_len") { need(2); c.match.seq_len = parse_int(p[1]); }
        else if (key == "color") { need(3); c.modality.color_downsample = {static_cast<int>(parse_int(p[1])), static_cast<int>(parse_int(p[2]))}; }
        else if (key == "gradient_bins") { need(2); c.modality.gradient_bins = static_cast<int>(parse_int(p[1])); }
        else if (key == "gradient") { need(3); c.modality.gradient_downsample = {static_cast<int>(parse_int(p[1])), static_cast<int>(parse_int(p[2]))}; }
        else if (key == "tau") { need(2); c.match.tau = parse_double(p[1]); }
        else if (key == "lambda1") { need(2); c.match.solver.lambda1 = parse_double(p[1]); }
        else if (key == "lambda2") { need(2); c.match.solver.lambda2 = parse_double(p[1]); }
        else if (key == "epsilon") { need(2); c.match.solver.epsilon = parse_double(p[1]); }
        else if (key == "max_iter") { need(2); c.match.solver.max_iter = static_cast<int>(parse_int(p[1])); }
        else if (key == "rel_tol") { need(2); c.match.solver.rel_tol = parse_double(p[1]); }
        else if (key == "gamma") { need(2); c.reward.gamma = parse_double(p[1]); }
        else if (key == "r_max") { need(2); c.reward.r_max = parse_double(p[1]); }
        else if (key == "l1_penalty") { need(2); c.reward.l1_penalty = parse_double(p[1]); }
        else if (key == "mdp_gamma") { need(2); m.mdp.gamma = parse_double(p[1]); }
        else if (key == "reward_degenerate") { need(2); m.reward_degenerate = parse_int(p[1]) != 0; }
        else if (key == "states") { need(2); m.mdp.num_states = static_cast<int>(parse_int(p[1])); }
        else if (key == "actions") { need(2); num_actions = static_cast<int>(parse_int(p[1])); }
        else if (key == "action") {
            need(3);
            Action a;
            a.id = static_cast<ActionId>(parse_int(p[1]));
            for (char ch : p[2]) {
                const auto atom = parse_atom(std::string(1, ch));
                if (!atom) throw CorruptFile("bad atom in action table");
                a.atoms.push_back(*atom);
            }
            if (a.id != static_cast<ActionId>(m.mdp.actions.size())) throw CorruptFile("action ids out of order");
            m.mdp.actions.push_back(std::move(a));
        } else if (key == "transition" || key == "reward") {
            const bool is_t = key == "transition";
            const std::size_t lead = is_t ? 3 : 2;
            if (p.size() < lead) throw CorruptFile("malformed '" + key + "' line");
            std::vector<double> row;
            for (std::size_t i = lead; i < p.size(); ++i) row.push_back(parse_double(p[i]));
            const int s = static_cast<int>(parse_int(p[1]));
            if (is_t) transitions.emplace_back(s * std::max(num_actions, 0) + static_cast<int>(parse_int(p[2])), std::move(row));
            else rewards.emplace_back(s, std::move(row));
        } else if (key == "sweeps") { need(2); m.policy.sweeps = static_cast<int>(parse_int(p[1])); }
        else if (key == "value") { need(3); values.emplace_back(static_cast<int>(parse_int(p[1])), parse_double(p[2])); }
        else if (key == "policy") { need(3); m.policy.action[static_cast<StateId>(parse_int(p[1]))] = static_cast<ActionId>(parse_int(p[2])); }
        else if (key == "label") {
            need(5);
            const auto s = static_cast<std::size_t>(parse_int(p[1]));
            const auto h = parse_heading(p[4]);
            if (!h) throw CorruptFile("bad heading in label");
            if (m.state_labels.size() <= s) m.state_labels.resize(s + 1);
            m.state_labels[s] = Pose{static_cast<int>(parse_int(p[2])), static_cast<int>(parse_int(p[3])), *h};
        } else if (key == "templates") { need(3); rows = parse_int(p[1]); cols = parse_int(p[2]); }
        else throw CorruptFile("unknown header key '" + key + "'");
    }

    const int ns = m.mdp.num_states;
    if (ns < 0 || num_actions != static_cast<int>(m.mdp.actions.size())) throw CorruptFile("inconsistent action table");
    if (rows < 0 || cols < 0) throw CorruptFile("missing template block");
    m.config.match.validate();
    m.config.modality.validate();

    m.mdp.transitions = TransitionModel(ns, num_actions);
    for (const auto& [key, row] : transitions) {
        if (num_actions == 0 || key < 0 || key >= ns * num_actions || static_cast<int>(row.size()) != ns)
            throw CorruptFile("malformed transition row");
        m.mdp.transitions.set_row(key / num_actions, key % num_actions, row);
    }
    m.mdp.reward = Eigen::MatrixXd::Zero(ns, num_actions);
    for (const auto& [s, row] : rewards) {
        if (s < 0 || s >= ns || static_cast<int>(row.size()) != num_actions) throw CorruptFile("malformed reward row");
        for (int a = 0; a < num_actions; ++a) m.mdp.reward(s, a) = row[static_cast<std::size_t>(a)];
    }
    m.policy.value = Eigen::VectorXd::Zero(ns);
    for (const auto& [s, v] : values) {
        if (s < 0 || s >= ns) throw CorruptFile("malformed value line");
        m.policy.value[s] = v;
    }
    m.state_labels.resize(static_cast<std::size_t>(ns));

    io::Reader r(bytes, pos);
    Eigen::MatrixXd t(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) t(i, j) = r.f64();
    if (!r.done()) throw CorruptFile("trailing bytes after template block");
    if (cols > 0 && rows != static_cast<Eigen::Index>(m.config.modality.length()))
        throw CorruptFile("template feature length does not match the modality config");
    m.space = StateSpace(m.config.seq_len());
    if (cols > 0) m.space.templates = TemplateMatrix(std::move(t), m.config.seq_len());
    if (m.space.size() != ns) throw CorruptFile("template count does not match the state count");
    return m;
}

inline void save_model(const TrainedModel& m, const std::filesystem::path& path) {
    io::write_file(path, serialize_model(m));
}

inline TrainedModel load_model(const std::filesystem::path& path) { return deserialize_model(io::read_file(path)); }

}  // namespace smal

#endif  // SMAL_PIPELINE_HPP
