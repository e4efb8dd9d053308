#ifndef SMAL_STATE_LEARNING_HPP
#define SMAL_STATE_LEARNING_HPP

#include "smal/features.hpp"
#include "smal/sparse_solver.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace smal {

using StateId = int;
using StateStream = std::vector<StateId>;

// Group mass scales with the number of columns, so tau does too. With the
// unsquared loss a template column only draws weight when its cosine with
// the query clears roughly lambda1 + lambda2, which makes the mass of a true
// match close to l; a loose threshold lets near-miss windows merge into
// one state.
inline double default_tau(Eigen::Index seq_len) { return 0.75 * static_cast<double>(seq_len); }

inline constexpr double default_match_lambda = 0.4;

inline SolverConfig default_match_solver() {
    SolverConfig s;
    s.lambda1 = s.lambda2 = default_match_lambda;
    return s;
}

struct MatchConfig {
    Eigen::Index seq_len = 4;
    double tau = default_tau(4);
    SolverConfig solver = default_match_solver();

    static MatchConfig with_length(Eigen::Index l) {
        MatchConfig cfg;
        cfg.seq_len = l;
        cfg.tau = default_tau(l);
        return cfg;
    }

    void validate() const {
        if (seq_len < 1) throw std::invalid_argument("sequence length must be >= 1");
        if (!(tau >= 0.0)) throw std::invalid_argument("tau must be nonnegative");
        solver.validate();
    }

    bool operator==(const MatchConfig&) const = default;
};

/// One representative template sequence per state; state j owns sequence j.
struct StateSpace {
    TemplateMatrix templates;

    explicit StateSpace(Eigen::Index seq_len = 1) { templates.seq_len = seq_len; }

    Eigen::Index size() const { return templates.num_seqs(); }
    bool empty() const { return templates.empty(); }
    Eigen::Index seq_len() const { return templates.seq_len; }

    StateId add(const Eigen::MatrixXd& seq) {
        templates.append_sequence(seq);
        return static_cast<StateId>(size() - 1);
    }
};

/// Sum over the l columns of the l1 norm of group j's slice.
inline double group_mass(const WeightMatrix& w, Eigen::Index j) {
    if (j < 0 || j >= w.num_groups()) throw std::out_of_range("group index out of range");
    double mass = 0.0;
    for (Eigen::Index i = 0; i < w.data.cols(); ++i) mass += w.group(j, i).lpNorm<1>();
    return mass;
}

inline Eigen::VectorXd group_masses(const WeightMatrix& w) {
    Eigen::VectorXd masses(w.num_groups());
    for (Eigen::Index j = 0; j < w.num_groups(); ++j) masses[j] = group_mass(w, j);
    return masses;
}

namespace detail {

// Lowest index wins ties.
inline StateId argmax(const Eigen::VectorXd& v) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < v.size(); ++j)
        if (v[j] > v[best]) best = j;
    return static_cast<StateId>(best);
}

}  // namespace detail

/// Empty when every group mass is at most tau; otherwise the heaviest group.
inline std::optional<StateId> match(const WeightMatrix& w, const MatchConfig& cfg) {
    const Eigen::VectorXd masses = group_masses(w);
    if (masses.size() == 0 || (masses.array() <= cfg.tau).all()) return std::nullopt;
    return detail::argmax(masses);
}

/// Stack feature vectors as columns of an m x count matrix.
inline Eigen::MatrixXd stack_columns(std::span<const FeatureVector> frames) {
    if (frames.empty()) return {};
    Eigen::MatrixXd out(frames.front().values.size(), static_cast<Eigen::Index>(frames.size()));
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (frames[i].values.size() != out.rows()) throw std::invalid_argument("feature vectors differ in length");
        out.col(static_cast<Eigen::Index>(i)) = frames[i].values;
    }
    return out;
}

struct Identification {
    StateId state = 0;
    Eigen::VectorXd masses;  // one per state
};

/// Execution-phase identification: always the argmax state, never a reject.
inline Identification identify_detailed(const Eigen::MatrixXd& query, const StateSpace& space, const MatchConfig& cfg) {
    if (space.empty()) throw std::logic_error("cannot identify against an empty state space");
    const SolveResult solved = solve(space.templates, query, cfg.solver);
    Identification id;
    id.masses = group_masses(solved.weights);
    id.state = detail::argmax(id.masses);
    return id;
}

inline StateId identify(const Eigen::MatrixXd& query, const StateSpace& space, const MatchConfig& cfg) {
    if (space.size() == 1) {
        if (query.rows() != space.templates.rows() || query.cols() != space.seq_len())
            throw std::invalid_argument("query shape does not match the state space");
        return 0;
    }
    return identify_detailed(query, space, cfg).state;
}

/**
 * @brief Online state-space construction over consecutive windows.
 *
 * Each window is matched against the current database; an unmatched window
 * is enrolled as a new state. The first window of an empty database is
 * enrolled without solving, and a window bit-identical to one observed
 * before gets the state it got then, so repeated data adds nothing.
 */
class StateLearner {
public:
    explicit StateLearner(MatchConfig cfg) : cfg_(std::move(cfg)), space_(cfg_.seq_len) { cfg_.validate(); }
    StateLearner(MatchConfig cfg, StateSpace space) : cfg_(std::move(cfg)), space_(std::move(space)) {
        cfg_.validate();
        if (space_.seq_len() != cfg_.seq_len) throw std::invalid_argument("state space length differs from config");
    }

    StateId observe(const Eigen::MatrixXd& window) {
        if (window.cols() != cfg_.seq_len) throw std::invalid_argument("window length does not match seq_len");
        std::vector<double> key(window.data(), window.data() + window.size());
        key.push_back(static_cast<double>(window.rows()));
        if (const auto it = seen_.find(key); it != seen_.end()) return it->second;
        StateId s;
        if (space_.empty()) {
            s = space_.add(window);
        } else {
            const SolveResult solved = solve(space_.templates, window, cfg_.solver);
            const auto matched = match(solved.weights, cfg_);
            s = matched ? *matched : space_.add(window);
        }
        seen_.emplace(std::move(key), s);
        return s;
    }

    const StateSpace& space() const { return space_; }
    StateSpace release() && { return std::move(space_); }
    const MatchConfig& config() const { return cfg_; }

private:
    MatchConfig cfg_;
    StateSpace space_;
    std::map<std::vector<double>, StateId> seen_;
};

struct LearnedStates {
    StateSpace space;
    StateStream stream;
};

/// Non-overlapping windows aligned to the stream start; a trailing partial window is dropped.
inline LearnedStates learn_state_space(std::span<const FeatureVector> frames, const MatchConfig& cfg) {
    StateLearner learner(cfg);
    StateStream stream;
    const auto l = static_cast<std::size_t>(cfg.seq_len);
    for (std::size_t start = 0; start + l <= frames.size(); start += l)
        stream.push_back(learner.observe(stack_columns(frames.subspan(start, l))));
    return {std::move(learner).release(), std::move(stream)};
}

}  // namespace smal

#endif  // SMAL_STATE_LEARNING_HPP
