#ifndef SMAL_IRL_HPP
#define SMAL_IRL_HPP

#include "smal/mdp.hpp"
#include "smal/simplex.hpp"

#include <Eigen/Dense>

#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace smal {

struct RewardConfig {
    double gamma = 0.9;
    double r_max = 1.0;
    double l1_penalty = 1.0;

    void validate() const {
        if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("reward learning needs gamma in [0,1)");
        if (!(r_max > 0.0)) throw std::invalid_argument("r_max must be positive");
        if (!(l1_penalty >= 0.0)) throw std::invalid_argument("l1 penalty must be nonnegative");
    }

    bool operator==(const RewardConfig&) const = default;
};

struct RewardResult {
    Eigen::VectorXd state_reward;
    Eigen::MatrixXd reward;  // state_reward lifted to every action
    std::map<StateId, ActionId> demonstrated_policy;
    bool degenerate = false;  // no constraint could discriminate any reward
    int constraints = 0;
};

/// Most frequent demonstrated action per state; ties go to the lowest action id.
inline std::map<StateId, ActionId> demonstrated_policy(const TransitionCounts& counts) {
    std::map<StateId, ActionId> policy;
    for (const auto& [s, list] : counts.entries) {
        std::map<ActionId, int> votes;
        for (const auto& [a, next] : list) ++votes[a];
        ActionId best = votes.begin()->first;
        for (const auto& [a, v] : votes)
            if (v > votes[best]) best = a;
        policy[s] = best;
    }
    return policy;
}

/**
 * @brief Linear-programming inverse RL over a finite learned MDP.
 *
 * Finds a state reward R with |R| <= r_max maximizing, over demonstrated
 * states, the smallest advantage of the demonstrated action over every other
 * action, minus l1_penalty * ||R||_1. States without a demonstrated action
 * contribute no constraints and are treated as absorbing under the
 * demonstrated policy. Actions whose transition row equals the demonstrated
 * one cannot be separated by any reward and are skipped.
 *
 * States listed in `end_states` (where demonstrations finished) are
 * constrained to hold the largest reward. When the program leaves R at zero
 * and end states are known, R falls back to r_max on the end states and the
 * result is flagged degenerate.
 *
 * The LP is solved for r_max = 1 and the solution scaled, which is exact
 * because the program is positively homogeneous in (R, r_max).
 */
inline RewardResult learn_reward(const MdpModel& mdp, const TransitionCounts& counts, const RewardConfig& cfg = {},
                                 std::span<const StateId> end_states = {}) {
    cfg.validate();
    const int ns = mdp.num_states;
    const int na = mdp.num_actions();
    if (mdp.transitions.num_states() != ns || mdp.transitions.num_actions() != na)
        throw InvalidModel("transition model dimensions do not match the MDP");

    RewardResult out;
    out.state_reward = Eigen::VectorXd::Zero(ns);
    out.reward = Eigen::MatrixXd::Zero(ns, na);
    out.demonstrated_policy = demonstrated_policy(counts);
    std::set<StateId> ends;
    for (StateId e : end_states) {
        if (e < 0 || e >= ns) throw std::out_of_range("end state out of range");
        ends.insert(e);
    }
    auto fallback = [&] {
        out.degenerate = true;
        if (ns > 1)
            for (StateId e : ends) out.state_reward[e] = cfg.r_max;
        for (int a = 0; a < na; ++a) out.reward.col(a) = out.state_reward;
        return out;
    };
    if (ns <= 1 || na == 0 || out.demonstrated_policy.empty()) return fallback();

    Eigen::MatrixXd p_demo = Eigen::MatrixXd::Identity(ns, ns);
    for (const auto& [s, a] : out.demonstrated_policy) p_demo.row(s) = mdp.transitions.row(s, a).transpose();
    const Eigen::MatrixXd resolvent =
        (Eigen::MatrixXd::Identity(ns, ns) - cfg.gamma * p_demo).partialPivLu().inverse();

    // One advantage row per (demonstrated state, alternative action).
    std::vector<std::pair<int, Eigen::RowVectorXd>> advantages;  // (index of state among demonstrated, row)
    std::vector<StateId> demo_states;
    for (const auto& [s, a_demo] : out.demonstrated_policy) {
        const int slot = static_cast<int>(demo_states.size());
        const Eigen::VectorXd demo_row = mdp.transitions.row(s, a_demo);
        bool any = false;
        for (int a = 0; a < na; ++a) {
            if (a == a_demo) continue;
            const Eigen::VectorXd alt_row = mdp.transitions.row(s, a);
            if ((demo_row - alt_row).cwiseAbs().maxCoeff() == 0.0) continue;
            advantages.emplace_back(slot, (demo_row - alt_row).transpose() * resolvent);
            any = true;
        }
        // A state with no separable alternative would leave its margin unbounded.
        if (any) demo_states.push_back(s);
    }
    out.constraints = static_cast<int>(advantages.size());
    if (advantages.empty()) return fallback();

    // x = [R+ (ns), R- (ns), t (nd)]
    const int nd = static_cast<int>(demo_states.size());
    const int nvars = 2 * ns + nd;
    const int nrows = 2 * static_cast<int>(advantages.size()) + 2 * ns + static_cast<int>(ends.size()) * (ns - 1);
    Eigen::MatrixXd a_mat = Eigen::MatrixXd::Zero(nrows, nvars);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(nrows);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(nvars);
    c.head(2 * ns).setConstant(-cfg.l1_penalty);
    c.tail(nd).setOnes();

    int row = 0;
    for (const auto& [slot, adv] : advantages) {
        // t_s <= adv . R
        a_mat.block(row, 0, 1, ns) = -adv;
        a_mat.block(row, ns, 1, ns) = adv;
        a_mat(row, 2 * ns + slot) = 1.0;
        ++row;
        // adv . R >= 0
        a_mat.block(row, 0, 1, ns) = -adv;
        a_mat.block(row, ns, 1, ns) = adv;
        ++row;
    }
    for (int s = 0; s < ns; ++s) {
        a_mat(row, s) = 1.0;
        b[row++] = 1.0;
        a_mat(row, ns + s) = 1.0;
        b[row++] = 1.0;
    }
    // R(s) - R(e) <= 0
    for (StateId e : ends)
        for (int s = 0; s < ns; ++s) {
            if (s == e) continue;
            a_mat(row, s) = 1.0;
            a_mat(row, ns + s) = -1.0;
            a_mat(row, e) = -1.0;
            a_mat(row, ns + e) = 1.0;
            ++row;
        }

    const LpResult lp = simplex_maximize(c, a_mat, b);
    if (lp.status != LpStatus::Optimal) throw std::runtime_error("reward LP did not reach an optimum");

    for (int s = 0; s < ns; ++s) {
        double r = lp.x[s] - lp.x[ns + s];
        if (std::abs(r) < 1e-12) r = 0.0;
        out.state_reward[s] = cfg.r_max * r;
    }
    if (out.state_reward.isZero(0.0)) return fallback();
    for (int a = 0; a < na; ++a) out.reward.col(a) = out.state_reward;
    return out;
}

}  // namespace smal

#endif  // SMAL_IRL_HPP
