#pragma once

#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace cchain::solvers {

struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Elementwise soft threshold: sign(x_i) * max(|x_i| - tau, 0).
Eigen::VectorXd soft_threshold(const Eigen::VectorXd& x, double tau);

/// min_w  1/2 sum_n h_n (w . x_n - y_n)^2 + lambda ||w||_1
/// Rows of `features` are the x_n; `sample_weights` holds the h_n.
struct WeightedLassoProblem {
    Eigen::MatrixXd features;       // N x I
    Eigen::VectorXd targets;        // N
    Eigen::VectorXd sample_weights; // N, nonnegative
    double lambda = 0.0;

    void validate() const;
    static WeightedLassoProblem uniform(Eigen::MatrixXd features,
                                        Eigen::VectorXd targets, double lambda);
};

struct AdmmConfig {
    double rho = 1.0;
    int max_iters = 5000;
    double tol_primal = 1e-7;
    double tol_dual = 1e-7;
    Eigen::VectorXd init_m;  // empty -> zeros
    Eigen::VectorXd init_u;  // empty -> zeros

    void validate() const;
};

struct SolveResult {
    Eigen::VectorXd weights;
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    bool converged = false;
};

/// ADMM on the split w = m with scaled multiplier u (u = -v/rho), fixed rho.
/// Iterates
///   w <- (sum_n h_n x_n x_n^T + rho I)^{-1} (sum_n h_n y_n x_n + rho(m + u))
///   m <- soft(w - u, lambda/rho)
///   u <- u - (w - m)
/// until ||w - m|| <= tol_primal * max(1, ||w||) and
/// rho * ||m_{i+1} - m_i|| <= tol_dual, or max_iters is hit (returned with
/// converged = false, never silently). The system matrix is iteration
/// invariant and factored once. Returns m, whose zeros are exact.
SolveResult admm_weighted_lasso(const WeightedLassoProblem& problem,
                                const AdmmConfig& config = {});

/// Objective value 1/2 sum h_n (w.x_n - y_n)^2 + lambda ||w||_1.
double weighted_lasso_objective(const WeightedLassoProblem& problem,
                                const Eigen::VectorXd& w);

/// Max violation of the lasso subgradient optimality conditions at w,
/// normalized by scale = max(1, ||X^T diag(h) y||_inf):
///   w_i != 0:  |g_i + lambda sign(w_i)|
///   w_i == 0:  max(0, |g_i| - lambda)
/// with g = X^T diag(h) (X w - y). Zero at an exact minimizer.
double lasso_certificate_gap(const WeightedLassoProblem& problem,
                             const Eigen::VectorXd& w);

struct OmpInfo {
    std::vector<int> selected;  // atom indices in selection order
    double residual_norm = 0.0;
    int zero_atoms_skipped = 0;
};

/// Greedy orthogonal matching pursuit for
///   min ||D a - target||_2^2  s.t.  ||a||_0 <= sparsity.
/// Atom selection maximizes |atom . residual| / ||atom||_2 (ties -> lowest
/// index); the coefficients are re-fit by least squares on the selected
/// support each round. Stops at `sparsity` atoms or when the residual norm
/// falls below 1e-12. All-zero atoms are skipped and counted in `info`.
Eigen::VectorXd omp_sparse_decompose(const Eigen::MatrixXd& dictionary,
                                     const Eigen::VectorXd& target,
                                     int sparsity, OmpInfo* info = nullptr);

struct LeastSquaresResult {
    Eigen::VectorXd solution;
    Eigen::Index rank = 0;
    bool rank_deficient = false;
};

/// min_w sum_n h_n (w . x_n - y_n)^2. Rank-deficient systems fall back to
/// the least-norm solution and are flagged.
LeastSquaresResult weighted_least_squares(const Eigen::MatrixXd& features,
                                          const Eigen::VectorXd& targets,
                                          const Eigen::VectorXd& sample_weights);

}  // namespace cchain::solvers
