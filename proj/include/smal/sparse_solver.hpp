#ifndef SMAL_SPARSE_SOLVER_HPP
#define SMAL_SPARSE_SOLVER_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace smal {

/// Raised when a reweighted system cannot be factorized.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, int iteration)
        : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"), iteration_(iteration) {}
    int iteration() const { return iteration_; }

private:
    int iteration_;
};

/**
 * @brief Template database: m x n feature matrix holding k contiguous
 * sequences of seq_len columns each.
 */
struct TemplateMatrix {
    Eigen::MatrixXd data;
    Eigen::Index seq_len = 1;

    TemplateMatrix() = default;
    TemplateMatrix(Eigen::MatrixXd d, Eigen::Index l) : data(std::move(d)), seq_len(l) {
        if (l < 1) throw std::invalid_argument("sequence length must be >= 1");
        if (data.cols() % l != 0)
            throw std::invalid_argument("template column count is not a multiple of the sequence length");
    }

    Eigen::Index rows() const { return data.rows(); }
    Eigen::Index cols() const { return data.cols(); }
    Eigen::Index num_seqs() const { return seq_len > 0 ? data.cols() / seq_len : 0; }
    Eigen::Index seq_of_column(Eigen::Index c) const { return c / seq_len; }
    bool empty() const { return data.cols() == 0; }

    auto sequence(Eigen::Index j) const { return data.middleCols(j * seq_len, seq_len); }

    void append_sequence(const Eigen::MatrixXd& seq) {
        if (seq.cols() != seq_len) throw std::invalid_argument("appended sequence has wrong length");
        if (!empty() && seq.rows() != data.rows())
            throw std::invalid_argument("appended sequence has wrong feature dimension");
        Eigen::MatrixXd grown(seq.rows(), data.cols() + seq_len);
        if (!empty()) grown.leftCols(data.cols()) = data;
        grown.rightCols(seq_len) = seq;
        data = std::move(grown);
    }
};

/// n x l weights; rows are partitioned into contiguous groups of group_size.
struct WeightMatrix {
    Eigen::MatrixXd data;
    Eigen::Index group_size = 1;

    Eigen::Index num_groups() const { return group_size > 0 ? data.rows() / group_size : 0; }
    auto group(Eigen::Index j, Eigen::Index col) const { return data.col(col).segment(j * group_size, group_size); }
};

struct SolverConfig {
    double lambda1 = 0.1;
    double lambda2 = 0.1;
    double epsilon = 1e-8;  // floor applied to every norm in the reweighting
    int max_iter = 100;
    double rel_tol = 1e-6;

    void validate() const {
        if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw std::invalid_argument("lambdas must be nonnegative");
        if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
        if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
        if (!(rel_tol > 0.0)) throw std::invalid_argument("rel_tol must be positive");
    }

    bool operator==(const SolverConfig&) const = default;
};

struct SolverState {
    Eigen::VectorXd P;       // l residual weights p_ii
    Eigen::VectorXd Q;       // n row weights
    Eigen::MatrixXd Rblocks;  // k x l group weights
    std::vector<double> objective_trace;
    int iterations = 0;
    bool converged = false;
};

/// Sum over rows of the row l2 norm.
inline double l21_norm(const Eigen::Ref<const Eigen::MatrixXd>& m) { return m.rowwise().norm().sum(); }

/// Sum over columns and row groups of the l2 norm of each group slice.
inline double s1_norm(const WeightMatrix& w) {
    if (w.group_size < 1 || w.data.rows() % w.group_size != 0)
        throw std::invalid_argument("weight rows are not a multiple of the group size");
    double total = 0.0;
    for (Eigen::Index i = 0; i < w.data.cols(); ++i)
        for (Eigen::Index j = 0; j < w.num_groups(); ++j) total += w.group(j, i).norm();
    return total;
}

namespace detail {

inline void check_shapes(const TemplateMatrix& x, const Eigen::MatrixXd& y, const WeightMatrix* w) {
    if (x.empty()) throw std::invalid_argument("template matrix is empty");
    if (y.rows() != x.rows())
        throw std::invalid_argument("query feature dimension " + std::to_string(y.rows()) +
                                    " does not match templates " + std::to_string(x.rows()));
    if (y.cols() != x.seq_len) throw std::invalid_argument("query length does not match template sequence length");
    if (w) {
        if (w->data.rows() != x.cols() || w->data.cols() != y.cols())
            throw std::invalid_argument("weight matrix shape does not match n x l");
        if (w->group_size != x.seq_len) throw std::invalid_argument("weight groups do not match template sequences");
    }
}

// Huber-type smoothing of a norm value: identical above eps, quadratic below.
// Its derivative with respect to t^2 is 1 / (2 max(t, eps)), the IRLS weight.
inline double smooth(double t, double eps) { return t >= eps ? t : t * t / (2.0 * eps) + eps / 2.0; }

inline double reweight(double t, double eps) { return 1.0 / (2.0 * std::max(t, eps)); }

}  // namespace detail

/// ||(XW - Y)^T||_{2,1} + lambda1 ||W||_{2,1} + lambda2 ||W||_{S1}
inline double objective(const TemplateMatrix& x, const Eigen::MatrixXd& y, const WeightMatrix& w,
                        const SolverConfig& cfg) {
    detail::check_shapes(x, y, &w);
    const Eigen::MatrixXd residual = x.data * w.data - y;
    return l21_norm(residual.transpose()) + cfg.lambda1 * l21_norm(w.data) + cfg.lambda2 * s1_norm(w);
}

/**
 * @brief The objective with every norm passed through the epsilon smoothing.
 *
 * This is the function the reweighted iteration provably decreases; it
 * coincides with objective() whenever every norm is at least epsilon.
 */
inline double smoothed_objective(const TemplateMatrix& x, const Eigen::MatrixXd& y, const WeightMatrix& w,
                                 const SolverConfig& cfg) {
    detail::check_shapes(x, y, &w);
    const double eps = cfg.epsilon;
    const Eigen::MatrixXd residual = x.data * w.data - y;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < residual.cols(); ++i) loss += detail::smooth(residual.col(i).norm(), eps);
    double rows = 0.0;
    for (Eigen::Index r = 0; r < w.data.rows(); ++r) rows += detail::smooth(w.data.row(r).norm(), eps);
    double groups = 0.0;
    for (Eigen::Index i = 0; i < w.data.cols(); ++i)
        for (Eigen::Index j = 0; j < w.num_groups(); ++j) groups += detail::smooth(w.group(j, i).norm(), eps);
    return loss + cfg.lambda1 * rows + cfg.lambda2 * groups;
}

struct SolveResult {
    WeightMatrix weights;
    SolverState state;
};

/**
 * @brief Iteratively reweighted solver for the structured-sparse matching problem.
 *
 * Starts from the per-column ridge solution, then alternates between
 * recomputing the diagonal weights (residual, row, group) from the current
 * iterate and solving one SPD system per column. The smoothed objective is
 * recorded after every sweep and never increases.
 */
inline SolveResult solve(const TemplateMatrix& x, const Eigen::MatrixXd& y, const SolverConfig& cfg) {
    cfg.validate();
    detail::check_shapes(x, y, nullptr);
    if (!(cfg.lambda1 > 0.0 || cfg.lambda2 > 0.0))
        throw std::invalid_argument("at least one of lambda1, lambda2 must be positive");
    if (!x.data.allFinite() || !y.allFinite()) throw std::invalid_argument("non-finite solver input");

    const Eigen::Index n = x.cols();
    const Eigen::Index l = y.cols();
    const Eigen::Index k = x.num_seqs();
    const double eps = cfg.epsilon;

    const Eigen::MatrixXd gram = x.data.transpose() * x.data;
    const Eigen::MatrixXd xty = x.data.transpose() * y;

    SolveResult out;
    out.weights.group_size = x.seq_len;
    {
        Eigen::MatrixXd ridge = gram;
        ridge.diagonal().array() += cfg.lambda1 + cfg.lambda2;
        Eigen::LLT<Eigen::MatrixXd> llt(ridge);
        if (llt.info() != Eigen::Success) throw NumericError("ridge initialization is not positive definite", 0);
        out.weights.data = llt.solve(xty);
    }
    if (!out.weights.data.allFinite()) throw NumericError("non-finite ridge initialization", 0);

    SolverState& st = out.state;
    st.P.resize(l);
    st.Q.resize(n);
    st.Rblocks.resize(k, l);
    st.objective_trace.push_back(smoothed_objective(x, y, out.weights, cfg));

    Eigen::MatrixXd& w = out.weights.data;
    Eigen::MatrixXd system(n, n);
    Eigen::VectorXd diag(n);
    for (int it = 1; it <= cfg.max_iter; ++it) {
        const Eigen::MatrixXd residual = x.data * w - y;
        for (Eigen::Index i = 0; i < l; ++i) st.P[i] = detail::reweight(residual.col(i).norm(), eps);
        for (Eigen::Index r = 0; r < n; ++r) st.Q[r] = detail::reweight(w.row(r).norm(), eps);
        for (Eigen::Index i = 0; i < l; ++i)
            for (Eigen::Index j = 0; j < k; ++j) st.Rblocks(j, i) = detail::reweight(out.weights.group(j, i).norm(), eps);

        Eigen::MatrixXd next(n, l);
        for (Eigen::Index i = 0; i < l; ++i) {
            // p (p G + l1 Q + l2 R)^-1 X^T y  ==  (G + (l1 Q + l2 R) / p)^-1 X^T y
            const double p = st.P[i];
            for (Eigen::Index r = 0; r < n; ++r)
                diag[r] = (cfg.lambda1 * st.Q[r] + cfg.lambda2 * st.Rblocks(r / x.seq_len, i)) / p;
            if (!diag.allFinite()) throw NumericError("reweighting overflowed", it);
            system = gram;
            system.diagonal() += diag;
            Eigen::LLT<Eigen::MatrixXd> llt(system);
            if (llt.info() != Eigen::Success) throw NumericError("reweighted system is not positive definite", it);
            next.col(i) = llt.solve(xty.col(i));
        }
        if (!next.allFinite()) throw NumericError("non-finite iterate", it);
        w = std::move(next);
        st.iterations = it;

        const double prev = st.objective_trace.back();
        const double cur = smoothed_objective(x, y, out.weights, cfg);
        st.objective_trace.push_back(cur);
        if (std::abs(cur - prev) / std::max(prev, 1e-12) < cfg.rel_tol) {
            st.converged = true;
            break;
        }
    }
    return out;
}

}  // namespace smal

#endif  // SMAL_SPARSE_SOLVER_HPP
