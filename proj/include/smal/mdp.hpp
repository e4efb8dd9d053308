#ifndef SMAL_MDP_HPP
#define SMAL_MDP_HPP

#include "smal/state_learning.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace smal {

enum class Atom : std::uint8_t { Forward = 0, Backward = 1, TurnLeft = 2, TurnRight = 3 };

inline std::string_view to_string(Atom a) {
    switch (a) {
        case Atom::Forward: return "forward";
        case Atom::Backward: return "backward";
        case Atom::TurnLeft: return "turn_left";
        case Atom::TurnRight: return "turn_right";
    }
    return "?";
}

inline char to_char(Atom a) { return "FBLR"[static_cast<int>(a)]; }

/// Accepts wire names (forward, turn_left, ...) and single letters F/B/L/R.
inline std::optional<Atom> parse_atom(std::string_view s) {
    if (s == "forward" || s == "F" || s == "f") return Atom::Forward;
    if (s == "backward" || s == "B" || s == "b") return Atom::Backward;
    if (s == "turn_left" || s == "L" || s == "l") return Atom::TurnLeft;
    if (s == "turn_right" || s == "R" || s == "r") return Atom::TurnRight;
    return std::nullopt;
}

using ActionId = int;

struct Action {
    ActionId id = 0;
    std::vector<Atom> atoms;
    bool operator==(const Action&) const = default;
};

/// Distinct l-atom chunks in first-seen order.
class ActionSpace {
public:
    explicit ActionSpace(std::size_t seq_len = 1) : seq_len_(seq_len) {
        if (seq_len < 1) throw std::invalid_argument("action length must be >= 1");
    }

    ActionId intern(std::span<const Atom> atoms) {
        if (atoms.size() != seq_len_) throw std::invalid_argument("action has wrong number of atoms");
        if (const auto found = find(atoms)) return *found;
        actions_.push_back({static_cast<ActionId>(actions_.size()), {atoms.begin(), atoms.end()}});
        return actions_.back().id;
    }

    std::optional<ActionId> find(std::span<const Atom> atoms) const {
        for (const Action& a : actions_)
            if (std::ranges::equal(a.atoms, atoms)) return a.id;
        return std::nullopt;
    }

    /// Chunk a kinematic stream; the trailing partial chunk is dropped.
    std::vector<ActionId> consume(std::span<const Atom> k_stream) {
        std::vector<ActionId> a_stream;
        for (std::size_t start = 0; start + seq_len_ <= k_stream.size(); start += seq_len_)
            a_stream.push_back(intern(k_stream.subspan(start, seq_len_)));
        return a_stream;
    }

    const std::vector<Action>& actions() const { return actions_; }
    std::size_t size() const { return actions_.size(); }
    std::size_t seq_len() const { return seq_len_; }

private:
    std::size_t seq_len_;
    std::vector<Action> actions_;
};

struct LearnedActions {
    std::vector<Action> actions;
    std::vector<ActionId> a_stream;
};

inline LearnedActions learn_actions(std::span<const Atom> k_stream, std::size_t l) {
    ActionSpace space(l);
    auto a_stream = space.consume(k_stream);
    return {space.actions(), std::move(a_stream)};
}

/// State transition map: for each state, the (action, next state) pairs observed from it.
struct TransitionCounts {
    std::map<StateId, std::vector<std::pair<ActionId, StateId>>> entries;

    void add(std::span<const StateId> s_stream, std::span<const ActionId> a_stream) {
        if (s_stream.empty() ? !a_stream.empty() : a_stream.size() != s_stream.size() - 1)
            throw std::invalid_argument("a-stream must be exactly one shorter than the s-stream");
        for (std::size_t i = 0; i + 1 < s_stream.size(); ++i)
            entries[s_stream[i]].emplace_back(a_stream[i], s_stream[i + 1]);
    }

    std::size_t count(StateId s, ActionId a) const {
        const auto it = entries.find(s);
        if (it == entries.end()) return 0;
        return static_cast<std::size_t>(std::ranges::count_if(it->second, [a](const auto& e) { return e.first == a; }));
    }

    std::size_t count(StateId s, ActionId a, StateId next) const {
        const auto it = entries.find(s);
        if (it == entries.end()) return 0;
        return static_cast<std::size_t>(
            std::ranges::count(it->second, std::pair<ActionId, StateId>{a, next}));
    }
};

inline TransitionCounts learn_transitions(std::span<const StateId> s_stream, std::span<const ActionId> a_stream) {
    TransitionCounts counts;
    counts.add(s_stream, a_stream);
    return counts;
}

/**
 * @brief Dense T(s, a, s') with an observed mask.
 *
 * Pairs that never occurred are self-loops with probability one and are
 * reported through unobserved_pairs().
 */
class TransitionModel {
public:
    TransitionModel() = default;
    TransitionModel(int num_states, int num_actions)
        : num_states_(num_states),
          num_actions_(num_actions),
          probs_(static_cast<std::size_t>(num_states) * num_actions * num_states, 0.0),
          observed_(static_cast<std::size_t>(num_states) * num_actions, false) {
        for (int s = 0; s < num_states; ++s)
            for (int a = 0; a < num_actions; ++a) at(s, a, s) = 1.0;
    }

    static TransitionModel from_counts(const TransitionCounts& counts, int num_states, int num_actions) {
        TransitionModel t(num_states, num_actions);
        for (const auto& [s, list] : counts.entries) {
            std::map<ActionId, std::map<StateId, std::size_t>> per_action;
            for (const auto& [a, next] : list) ++per_action[a][next];
            for (const auto& [a, nexts] : per_action) {
                std::size_t total = 0;
                for (const auto& [next, c] : nexts) total += c;
                t.set_row(s, a, {});
                for (const auto& [next, c] : nexts)
                    t.at(s, a, next) = static_cast<double>(c) / static_cast<double>(total);
            }
        }
        return t;
    }

    int num_states() const { return num_states_; }
    int num_actions() const { return num_actions_; }

    double operator()(int s, int a, int next) const { return probs_[index(s, a, next)]; }
    double& at(int s, int a, int next) { return probs_[index(s, a, next)]; }
    bool observed(int s, int a) const { return observed_[static_cast<std::size_t>(s) * num_actions_ + a]; }

    /// Replace a row and mark the pair observed. An empty row clears it to zeros.
    void set_row(int s, int a, std::span<const double> row) {
        for (int next = 0; next < num_states_; ++next)
            at(s, a, next) = row.empty() ? 0.0 : row[static_cast<std::size_t>(next)];
        observed_[static_cast<std::size_t>(s) * num_actions_ + a] = true;
    }

    Eigen::VectorXd row(int s, int a) const {
        Eigen::VectorXd r(num_states_);
        for (int next = 0; next < num_states_; ++next) r[next] = (*this)(s, a, next);
        return r;
    }

    bool has_observed_action(int s) const {
        for (int a = 0; a < num_actions_; ++a)
            if (observed(s, a)) return true;
        return false;
    }

    std::vector<std::pair<int, int>> unobserved_pairs() const {
        std::vector<std::pair<int, int>> out;
        for (int s = 0; s < num_states_; ++s)
            for (int a = 0; a < num_actions_; ++a)
                if (!observed(s, a)) out.emplace_back(s, a);
        return out;
    }

    const std::vector<double>& raw() const { return probs_; }
    const std::vector<bool>& observed_mask() const { return observed_; }

    bool operator==(const TransitionModel&) const = default;

private:
    std::size_t index(int s, int a, int next) const {
        return (static_cast<std::size_t>(s) * num_actions_ + a) * num_states_ + next;
    }

    int num_states_ = 0;
    int num_actions_ = 0;
    std::vector<double> probs_;
    std::vector<bool> observed_;
};

class InvalidModel : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct MdpModel {
    int num_states = 0;
    std::vector<Action> actions;
    TransitionModel transitions;
    Eigen::MatrixXd reward;  // num_states x num_actions
    double gamma = 0.9;

    int num_actions() const { return static_cast<int>(actions.size()); }

    void validate() const {
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidModel("gamma outside [0,1]");
        if (transitions.num_states() != num_states || transitions.num_actions() != num_actions())
            throw InvalidModel("transition model dimensions do not match the MDP");
        if (reward.rows() != num_states || reward.cols() != num_actions())
            throw InvalidModel("reward dimensions do not match the MDP");
        for (int s = 0; s < num_states; ++s) {
            for (int a = 0; a < num_actions(); ++a) {
                double sum = 0.0;
                for (int next = 0; next < num_states; ++next) {
                    const double p = transitions(s, a, next);
                    if (!(p >= 0.0)) throw InvalidModel("negative transition probability");
                    sum += p;
                }
                if (std::abs(sum - 1.0) > 1e-9)
                    throw InvalidModel("transition row (" + std::to_string(s) + "," + std::to_string(a) +
                                       ") is not a probability distribution");
            }
        }
    }
};

struct Policy {
    std::map<StateId, ActionId> action;
    Eigen::VectorXd value;
    int sweeps = 0;
    std::vector<double> residuals;  // sup-norm change of each sweep

    bool defined(StateId s) const { return action.contains(s); }
};

struct ValueIterationConfig {
    double tol = 1e-10;
    int max_sweeps = 1000000;
};

/**
 * @brief Bellman iteration to a sup-norm fixed point, then the greedy policy.
 *
 * A state that has observed actions maximizes over those only; a state
 * with none falls back to all actions, each a self-loop. Ties go to the
 * lowest action id. The policy is defined on states with an observed action.
 */
inline Policy value_iteration(const MdpModel& mdp, const ValueIterationConfig& vi = {}) {
    mdp.validate();
    if (!(vi.tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
    const int ns = mdp.num_states;
    const int na = mdp.num_actions();

    std::vector<std::vector<int>> available(static_cast<std::size_t>(ns));
    for (int s = 0; s < ns; ++s) {
        for (int a = 0; a < na; ++a)
            if (mdp.transitions.observed(s, a)) available[s].push_back(a);
        if (available[s].empty())
            for (int a = 0; a < na; ++a) available[s].push_back(a);
    }

    auto q_value = [&](const Eigen::VectorXd& v, int s, int a) {
        double expect = 0.0;
        for (int next = 0; next < ns; ++next) expect += mdp.transitions(s, a, next) * v[next];
        return mdp.reward(s, a) + mdp.gamma * expect;
    };

    Policy policy;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(ns);
    if (na == 0) {
        policy.value = v;
        return policy;
    }
    Eigen::VectorXd next_v(ns);
    for (;;) {
        for (int s = 0; s < ns; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (int a : available[s]) best = std::max(best, q_value(v, s, a));
            next_v[s] = best;
        }
        ++policy.sweeps;
        const double change = (next_v - v).cwiseAbs().maxCoeff();
        policy.residuals.push_back(change);
        v.swap(next_v);
        if (change < vi.tol) break;
        if (policy.sweeps >= vi.max_sweeps) throw InvalidModel("value iteration did not converge");
    }

    policy.value = v;
    for (int s = 0; s < ns; ++s) {
        if (!mdp.transitions.has_observed_action(s)) continue;
        int best_a = available[s].front();
        double best = q_value(v, s, best_a);
        for (int a : available[s]) {
            const double q = q_value(v, s, a);
            if (q > best) {
                best = q;
                best_a = a;
            }
        }
        policy.action[s] = best_a;
    }
    return policy;
}

struct ActionChoice {
    Action action;
    StateId resolved_state = 0;  // the state whose policy entry was used
    bool fallback = false;
};

/**
 * Look up the policy action for s. When s is outside the policy domain and
 * group masses are supplied, the policy state with the largest mass is used
 * instead and the choice is flagged.
 */
inline ActionChoice select_action(const Policy& policy, std::span<const Action> actions, StateId s,
                                  std::span<const double> fallback_masses = {}) {
    auto lookup = [&](StateId state) {
        const ActionId id = policy.action.at(state);
        if (id < 0 || static_cast<std::size_t>(id) >= actions.size())
            throw std::out_of_range("policy refers to unknown action " + std::to_string(id));
        return actions[static_cast<std::size_t>(id)];
    };
    if (policy.defined(s)) return {lookup(s), s, false};
    if (fallback_masses.empty()) throw std::out_of_range("state " + std::to_string(s) + " is not in the policy domain");

    std::optional<StateId> best;
    for (const auto& [state, _] : policy.action) {
        if (static_cast<std::size_t>(state) >= fallback_masses.size()) continue;
        if (!best || fallback_masses[static_cast<std::size_t>(state)] > fallback_masses[static_cast<std::size_t>(*best)])
            best = state;
    }
    if (!best) throw std::out_of_range("no policy state available for fallback");
    return {lookup(*best), *best, true};
}

}  // namespace smal

#endif  // SMAL_MDP_HPP
