#ifndef SMAL_TESTS_ORACLES_HPP
#define SMAL_TESTS_ORACLES_HPP

// Reference computations used only by the test suites. None of these call
// into the code paths they are used to check.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace smal::oracle {

/// Direct triple-loop evaluation of loss + l1 * rows + l2 * groups, with the
/// same epsilon smoothing of each norm (eps = 0 gives the exact objective).
inline double objective_loops(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const Eigen::MatrixXd& w,
                              long group, double lambda1, double lambda2, double eps = 0.0) {
    auto smooth = [eps](double t) { return (eps > 0.0 && t < eps) ? t * t / (2 * eps) + eps / 2 : t; };
    const long m = x.rows(), n = x.cols(), l = y.cols();
    double loss = 0.0;
    for (long i = 0; i < l; ++i) {
        double ss = 0.0;
        for (long r = 0; r < m; ++r) {
            double pred = 0.0;
            for (long c = 0; c < n; ++c) pred += x(r, c) * w(c, i);
            ss += (pred - y(r, i)) * (pred - y(r, i));
        }
        loss += smooth(std::sqrt(ss));
    }
    double rows = 0.0;
    for (long r = 0; r < n; ++r) {
        double ss = 0.0;
        for (long i = 0; i < l; ++i) ss += w(r, i) * w(r, i);
        rows += smooth(std::sqrt(ss));
    }
    double groups = 0.0;
    for (long i = 0; i < l; ++i)
        for (long g = 0; g < n / group; ++g) {
            double ss = 0.0;
            for (long r = g * group; r < (g + 1) * group; ++r) ss += w(r, i) * w(r, i);
            groups += smooth(std::sqrt(ss));
        }
    return loss + lambda1 * rows + lambda2 * groups;
}

struct SubgradientResult {
    Eigen::MatrixXd w;
    double best = std::numeric_limits<double>::infinity();
};

/**
 * Projected (sub)gradient descent on the smoothed objective with normalized
 * steps step0 / sqrt(t + 1), projected onto the box |w| <= bound, keeping the
 * best iterate. With eps-smoothing the gradient of each norm term is
 * a / max(||a||, eps).
 */
inline SubgradientResult projected_subgradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, long group,
                                               double lambda1, double lambda2, double eps, int steps,
                                               double step0 = 0.5) {
    const long n = x.cols(), l = y.cols();
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, l);
    const double f0 = objective_loops(x, y, w, group, lambda1, lambda2, eps);
    // lambda1 * max|w_ij| <= lambda1 * ||W||_{2,1} <= f(W) <= f(0) on the sublevel set.
    const double bound = lambda1 > 0 ? f0 / lambda1 : (lambda2 > 0 ? f0 / lambda2 : 1e6);
    SubgradientResult out{w, f0};
    Eigen::MatrixXd g(n, l);
    for (int t = 0; t < steps; ++t) {
        g.setZero();
        const Eigen::MatrixXd r = x * w - y;
        for (long i = 0; i < l; ++i) g.col(i) += x.transpose() * r.col(i) / std::max(r.col(i).norm(), eps);
        for (long row = 0; row < n; ++row) g.row(row) += lambda1 * w.row(row) / std::max(w.row(row).norm(), eps);
        for (long i = 0; i < l; ++i)
            for (long j = 0; j < n / group; ++j) {
                const auto seg = w.col(i).segment(j * group, group);
                g.col(i).segment(j * group, group) += lambda2 * seg / std::max(seg.norm(), eps);
            }
        const double gn = g.norm();
        if (gn == 0.0) break;
        w -= (step0 / std::sqrt(t + 1.0)) * g / gn;
        w = w.cwiseMax(-bound).cwiseMin(bound);
        const double f = objective_loops(x, y, w, group, lambda1, lambda2, eps);
        if (f < out.best) {
            out.best = f;
            out.w = w;
        }
    }
    return out;
}

/// Nonnegative random matrix with unit-norm columns, the shape of encoded features.
inline Eigen::MatrixXd feature_like(long rows, long cols, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (long j = 0; j < cols; ++j)
        for (long i = 0; i < rows; ++i) m(i, j) = u(rng);
    m.colwise().normalize();
    return m;
}

/// Exact value of a stationary policy: V = (I - gamma P_pi)^-1 R_pi.
inline Eigen::VectorXd policy_value(const std::vector<Eigen::MatrixXd>& p_by_action, const Eigen::MatrixXd& r,
                                    const std::vector<int>& pi, double gamma) {
    const long ns = r.rows();
    Eigen::MatrixXd p(ns, ns);
    Eigen::VectorXd rew(ns);
    for (long s = 0; s < ns; ++s) {
        p.row(s) = p_by_action[static_cast<std::size_t>(pi[s])].row(s);
        rew[s] = r(s, pi[s]);
    }
    return (Eigen::MatrixXd::Identity(ns, ns) - gamma * p).fullPivLu().solve(rew);
}

/// Enumerate all |A|^|S| stationary policies; return the one with the largest value vector
/// (an optimal policy dominates every other statewise).
inline std::vector<int> best_policy_by_enumeration(const std::vector<Eigen::MatrixXd>& p_by_action,
                                                   const Eigen::MatrixXd& r, double gamma, Eigen::VectorXd* value) {
    const long ns = r.rows();
    const long na = r.cols();
    std::vector<int> pi(static_cast<std::size_t>(ns), 0), best;
    double best_sum = -std::numeric_limits<double>::infinity();
    for (;;) {
        const Eigen::VectorXd v = policy_value(p_by_action, r, pi, gamma);
        if (v.sum() > best_sum + 1e-12) {
            best_sum = v.sum();
            best = pi;
            if (value) *value = v;
        }
        long k = 0;
        while (k < ns && ++pi[static_cast<std::size_t>(k)] == na) pi[static_cast<std::size_t>(k++)] = 0;
        if (k == ns) break;
    }
    return best;
}

}  // namespace smal::oracle

#endif  // SMAL_TESTS_ORACLES_HPP
