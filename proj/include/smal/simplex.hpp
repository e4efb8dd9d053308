#ifndef SMAL_SIMPLEX_HPP
#define SMAL_SIMPLEX_HPP

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace smal {

enum class LpStatus { Optimal, Unbounded, IterationLimit };

struct LpResult {
    LpStatus status = LpStatus::Optimal;
    Eigen::VectorXd x;
    double objective = 0.0;
    int pivots = 0;
};

/**
 * @brief Dense tableau simplex for  max c^T x  s.t.  A x <= b, x >= 0, with b >= 0.
 *
 * b >= 0 makes the slack basis feasible, so no phase one is needed. Entering
 * columns follow the largest reduced cost; after a run of degenerate pivots
 * the rule switches to Bland's to rule out cycling.
 */
inline LpResult simplex_maximize(const Eigen::VectorXd& c, const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                 int max_pivots = 100000) {
    const Eigen::Index m = a.rows();
    const Eigen::Index n = a.cols();
    if (c.size() != n || b.size() != m) throw std::invalid_argument("LP dimensions are inconsistent");
    if ((b.array() < 0.0).any()) throw std::invalid_argument("LP right-hand side must be nonnegative");

    constexpr double tol = 1e-11;
    // Rows 0..m-1 are constraints, row m is the objective (reduced costs negated).
    Eigen::MatrixXd tab = Eigen::MatrixXd::Zero(m + 1, n + m + 1);
    tab.topLeftCorner(m, n) = a;
    tab.block(0, n, m, m).setIdentity();
    tab.col(n + m).head(m) = b;
    tab.row(m).head(n) = -c.transpose();

    std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) basis[i] = n + i;

    LpResult out;
    int degenerate_run = 0;
    const Eigen::Index rhs = n + m;
    for (;;) {
        const bool bland = degenerate_run > 50;
        Eigen::Index enter = -1;
        double most_negative = -tol;
        for (Eigen::Index j = 0; j < n + m; ++j) {
            if (tab(m, j) < most_negative) {
                enter = j;
                if (bland) break;
                most_negative = tab(m, j);
            }
        }
        if (enter < 0) break;

        Eigen::Index leave = -1;
        double best_ratio = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < m; ++i) {
            const double coef = tab(i, enter);
            if (coef <= tol) continue;
            const double ratio = tab(i, rhs) / coef;
            if (ratio < best_ratio - tol || (std::abs(ratio - best_ratio) <= tol && leave >= 0 && basis[i] < basis[leave])) {
                best_ratio = ratio;
                leave = i;
            }
        }
        if (leave < 0) {
            out.status = LpStatus::Unbounded;
            break;
        }
        degenerate_run = best_ratio <= tol ? degenerate_run + 1 : 0;

        tab.row(leave) /= tab(leave, enter);
        for (Eigen::Index i = 0; i <= m; ++i) {
            if (i == leave) continue;
            const double factor = tab(i, enter);
            if (factor != 0.0) tab.row(i) -= factor * tab.row(leave);
        }
        basis[leave] = enter;
        if (++out.pivots >= max_pivots) {
            out.status = LpStatus::IterationLimit;
            break;
        }
    }

    out.x = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < m; ++i)
        if (basis[i] < n) out.x[basis[i]] = tab(i, rhs);
    out.objective = c.dot(out.x);
    return out;
}

}  // namespace smal

#endif  // SMAL_SIMPLEX_HPP
