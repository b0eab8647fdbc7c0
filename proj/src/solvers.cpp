#include "cchain/solvers.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/QR>

namespace cchain::solvers {

using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd soft_threshold(const VectorXd& x, double tau) {
    if (tau < 0.0) throw SolverError("soft_threshold: tau must be >= 0");
    VectorXd out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double mag = std::abs(x(i)) - tau;
        out(i) = mag > 0.0 ? (x(i) > 0.0 ? mag : -mag) : 0.0;
    }
    return out;
}

void WeightedLassoProblem::validate() const {
    if (features.rows() < 1) throw SolverError("lasso problem: N must be >= 1");
    if (targets.size() != features.rows())
        throw SolverError("lasso problem: targets/features row mismatch");
    if (sample_weights.size() != features.rows())
        throw SolverError("lasso problem: sample_weights/features row mismatch");
    if ((sample_weights.array() < 0.0).any())
        throw SolverError("lasso problem: sample weights must be nonnegative");
    if (lambda < 0.0) throw SolverError("lasso problem: lambda must be >= 0");
}

WeightedLassoProblem WeightedLassoProblem::uniform(MatrixXd features,
                                                   VectorXd targets,
                                                   double lambda) {
    WeightedLassoProblem p;
    p.sample_weights = VectorXd::Ones(features.rows());
    p.features = std::move(features);
    p.targets = std::move(targets);
    p.lambda = lambda;
    return p;
}

void AdmmConfig::validate() const {
    if (rho <= 0.0) throw SolverError("admm config: rho must be > 0");
    if (max_iters <= 0) throw SolverError("admm config: max_iters must be > 0");
    if (tol_primal <= 0.0 || tol_dual <= 0.0)
        throw SolverError("admm config: tolerances must be > 0");
}

SolveResult admm_weighted_lasso(const WeightedLassoProblem& problem,
                                const AdmmConfig& config) {
    problem.validate();
    config.validate();
    const Eigen::Index dim = problem.features.cols();

    // X^T diag(h) X + rho I and X^T diag(h) y are iteration invariant.
    const MatrixXd weighted =
        problem.sample_weights.asDiagonal() * problem.features;
    MatrixXd system = problem.features.transpose() * weighted;
    system.diagonal().array() += config.rho;
    const Eigen::LDLT<MatrixXd> factor(system);
    if (factor.info() != Eigen::Success)
        throw SolverError("admm: failed to factor the w-update system");
    const VectorXd rhs_data =
        problem.features.transpose() *
        (problem.sample_weights.cwiseProduct(problem.targets));

    VectorXd m = config.init_m.size() ? config.init_m : VectorXd::Zero(dim);
    VectorXd u = config.init_u.size() ? config.init_u : VectorXd::Zero(dim);
    if (m.size() != dim || u.size() != dim)
        throw SolverError("admm: init vectors have wrong dimension");

    SolveResult result;
    VectorXd w = VectorXd::Zero(dim);
    const double shrink = problem.lambda / config.rho;
    for (int iter = 1; iter <= config.max_iters; ++iter) {
        w = factor.solve(rhs_data + config.rho * (m + u));
        const VectorXd m_next = soft_threshold(w - u, shrink);
        u -= w - m_next;

        result.primal_residual = (w - m_next).norm();
        result.dual_residual = config.rho * (m_next - m).norm();
        m = m_next;
        result.iterations = iter;
        if (result.primal_residual <=
                config.tol_primal * std::max(1.0, w.norm()) &&
            result.dual_residual <= config.tol_dual) {
            result.converged = true;
            break;
        }
    }
    result.weights = m;  // exact zeros from the shrinkage step
    return result;
}

double weighted_lasso_objective(const WeightedLassoProblem& problem,
                                const VectorXd& w) {
    const VectorXd residual = problem.features * w - problem.targets;
    const double loss =
        0.5 * residual.cwiseProduct(problem.sample_weights).dot(residual);
    return loss + problem.lambda * w.lpNorm<1>();
}

double lasso_certificate_gap(const WeightedLassoProblem& problem,
                             const VectorXd& w) {
    const VectorXd residual = problem.features * w - problem.targets;
    const VectorXd grad = problem.features.transpose() *
                          problem.sample_weights.cwiseProduct(residual);
    const VectorXd data_term = problem.features.transpose() *
                               problem.sample_weights.cwiseProduct(problem.targets);
    const double scale = std::max(1.0, data_term.lpNorm<Eigen::Infinity>());
    double worst = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        double violation;
        if (w(i) != 0.0) {
            violation = std::abs(grad(i) + problem.lambda * (w(i) > 0 ? 1. : -1.));
        } else {
            violation = std::max(0.0, std::abs(grad(i)) - problem.lambda);
        }
        worst = std::max(worst, violation);
    }
    return worst / scale;
}

Eigen::VectorXd omp_sparse_decompose(const MatrixXd& dictionary,
                                     const VectorXd& target, int sparsity,
                                     OmpInfo* info) {
    if (dictionary.rows() != target.size())
        throw SolverError("omp: dictionary/target dimension mismatch");
    const int num_atoms = static_cast<int>(dictionary.cols());
    if (num_atoms == 0) throw SolverError("omp: empty dictionary");
    if (sparsity < 1 || sparsity > num_atoms)
        throw SolverError("omp: sparsity must be in [1, K]");

    OmpInfo local;
    OmpInfo& stats = info ? *info : local;
    stats = OmpInfo{};

    const VectorXd norms = dictionary.colwise().norm();
    std::vector<bool> usable(static_cast<std::size_t>(num_atoms), true);
    for (int k = 0; k < num_atoms; ++k) {
        if (norms(k) == 0.0) {
            usable[static_cast<std::size_t>(k)] = false;
            ++stats.zero_atoms_skipped;
        }
    }

    VectorXd alpha = VectorXd::Zero(num_atoms);
    VectorXd residual = target;
    stats.residual_norm = residual.norm();
    if (stats.residual_norm == 0.0) return alpha;

    std::vector<bool> selected(static_cast<std::size_t>(num_atoms), false);
    for (int round = 0; round < sparsity; ++round) {
        if (residual.norm() < 1e-12) break;
        int best = -1;
        double best_score = 0.0;
        for (int k = 0; k < num_atoms; ++k) {
            const auto idx = static_cast<std::size_t>(k);
            if (!usable[idx] || selected[idx]) continue;
            const double score =
                std::abs(dictionary.col(k).dot(residual)) / norms(k);
            if (best < 0 || score > best_score) {  // ties keep lowest index
                best = k;
                best_score = score;
            }
        }
        if (best < 0 || best_score == 0.0) break;
        selected[static_cast<std::size_t>(best)] = true;
        stats.selected.push_back(best);

        // Re-fit least squares on the selected support.
        MatrixXd sub(dictionary.rows(),
                     static_cast<Eigen::Index>(stats.selected.size()));
        for (std::size_t j = 0; j < stats.selected.size(); ++j)
            sub.col(static_cast<Eigen::Index>(j)) =
                dictionary.col(stats.selected[j]);
        const VectorXd coeffs =
            sub.completeOrthogonalDecomposition().solve(target);
        alpha.setZero();
        for (std::size_t j = 0; j < stats.selected.size(); ++j)
            alpha(stats.selected[j]) = coeffs(static_cast<Eigen::Index>(j));
        residual = target - sub * coeffs;
    }
    stats.residual_norm = residual.norm();
    return alpha;
}

LeastSquaresResult weighted_least_squares(const MatrixXd& features,
                                          const VectorXd& targets,
                                          const VectorXd& sample_weights) {
    if (targets.size() != features.rows() ||
        sample_weights.size() != features.rows())
        throw SolverError("weighted_least_squares: dimension mismatch");
    if ((sample_weights.array() < 0.0).any())
        throw SolverError("weighted_least_squares: negative sample weight");

    const VectorXd root = sample_weights.cwiseSqrt();
    const MatrixXd scaled = root.asDiagonal() * features;
    const VectorXd scaled_targets = root.cwiseProduct(targets);
    const auto cod = scaled.completeOrthogonalDecomposition();

    LeastSquaresResult out;
    out.solution = cod.solve(scaled_targets);  // least-norm when rank deficient
    out.rank = cod.rank();
    out.rank_deficient = out.rank < features.cols();
    return out;
}

}  // namespace cchain::solvers
