#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "cchain/harmonize.hpp"
#include "cchain/perturb.hpp"
#include "cchain/solvers.hpp"

namespace cchain::inference {

struct InferenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Importance of shallow-layer units to one deep-layer concept, fitted by
/// weighted lasso over a perturbation dataset.
struct InferenceWeights {
    harmonize::ConceptSpec deep_concept;
    std::string shallow_layer;
    Eigen::VectorXd weights;
    double lambda_used = 0.0;
    solvers::SolveResult solver_stats;
    double certificate_gap = 0.0;  // normalized subgradient violation

    nlohmann::json to_json() const;
    static InferenceWeights from_json(const nlohmann::json& doc);
};

/// Sparse expression of a deep concept in the shallow layer's concept bank.
struct ContributionVector {
    harmonize::ConceptSpec deep_concept;
    std::vector<std::pair<std::string, double>> entries;  // bank order
    int sparsity_bound = 0;
    double residual_norm = 0.0;
};

/// Solves min_w 1/2 sum_n h(e_n) (w.x_n - y_n)^2 + lambda ||w||_1 for the
/// named concept of the dataset. lambda <= 0 selects the scale-aware default.
InferenceWeights fit_hierarchical_inference(
    const perturb::PerturbationDataset& dataset, const std::string& concept_id,
    double lambda, const solvers::AdmmConfig& admm = {});

/// L0-bounded sparse coding of the inference weights over the bank columns:
/// min ||Phi a - w||_2^2 s.t. ||a||_0 <= epsilon, solved greedily by OMP.
/// epsilon is clamped to the bank size. Entries are keyed by concept_id.
ContributionVector decompose_concept(const InferenceWeights& inference,
                                     const harmonize::ConceptBank& bank,
                                     int epsilon);

/// Directional derivative of the deep concept along a shallow concept's
/// harmonizing direction: the dot product w . t.
double directional_derivative(const InferenceWeights& inference,
                              const harmonize::HarmonizingWeights& entry);

/// Concept with the maximal signed directional derivative (ties -> lowest
/// bank index). Equals decompose_concept at sparsity 1 on unit-norm banks
/// with nonnegative correlations.
std::string top_concept(const InferenceWeights& inference,
                        const harmonize::ConceptBank& bank);

}  // namespace cchain::inference
