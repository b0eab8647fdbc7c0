#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "cchain/levels.hpp"
#include "cchain/manifest.hpp"
#include "cchain/network.hpp"
#include "cchain/solvers.hpp"

namespace cchain::harmonize {

struct HarmonizeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConceptSpec {
    std::string concept_id;
    Level level = Level::Color;
    std::string layer;
};

/// Per-concept regression set: rows of `features` are per-sample layer
/// feature vectors, labels mark concept presence (1) or absence (0).
struct HarmonizingDataset {
    Eigen::MatrixXd features;  // N x I
    Eigen::VectorXd labels;    // N, entries in {0,1}
    ConceptSpec concept;

    void validate() const;
};

struct FitStats {
    double training_loss = 0.0;  // 1/2 sum of squared residuals
    int nonzeros = 0;
    double certificate_gap = 0.0;  // normalized subgradient violation
    int iterations = 0;
    bool converged = false;
};

/// Sparse alignment of one concept with one layer's units.
struct HarmonizingWeights {
    ConceptSpec concept;
    Eigen::VectorXd weights;
    double lambda_used = 0.0;
    FitStats stats;
};

/// Ordered collection of harmonizing weights on one layer. The matrix view
/// stacks the weight vectors as columns (units x concepts), giving the
/// dictionary used by the sparse decomposition stage.
class ConceptBank {
public:
    ConceptBank() = default;
    ConceptBank(std::string layer, std::vector<HarmonizingWeights> concepts);

    const std::string& layer() const { return layer_; }
    const std::vector<HarmonizingWeights>& concepts() const { return concepts_; }
    bool empty() const { return concepts_.empty(); }
    int size() const { return static_cast<int>(concepts_.size()); }

    Eigen::MatrixXd matrix() const;  // I x K, columns in bank order
    int index_of(const std::string& concept_id) const;  // -1 when absent
    const HarmonizingWeights& entry(const std::string& concept_id) const;

    /// Copy with every weight vector scaled to unit l2 norm (zero vectors
    /// kept as-is). Raw weights are the default everywhere; this view exists
    /// for the sparsity-1 equivalence regime.
    ConceptBank unit_normalized() const;

    nlohmann::json to_json() const;
    static ConceptBank from_json(const nlohmann::json& doc);
    void save(const std::filesystem::path& path) const;
    static ConceptBank load(const std::filesystem::path& path);

private:
    std::string layer_;
    std::vector<HarmonizingWeights> concepts_;
};

/// Collects per-sample features (GAP of the concept's layer) and labels for
/// one concept from the manifest. Requires at least one positive and one
/// negative sample.
HarmonizingDataset build_harmonizing_dataset(const net::NetworkSpec& net,
                                             SampleStore& store,
                                             const ConceptManifest& manifest,
                                             const ConceptSpec& concept);

/// Scale-aware default: 0.01 * (largest singular value of features)^2 / N.
double default_lambda(const Eigen::MatrixXd& features);

/// Solves min_t 1/2 sum_n (t.a_n - z_n)^2 + lambda ||t||_1 with the shared
/// ADMM kernel (uniform sample weights). lambda <= 0 selects the default.
HarmonizingWeights fit_concept_harmonizer(const HarmonizingDataset& dataset,
                                          double lambda,
                                          const solvers::AdmmConfig& admm = {});

struct LayerFitReport {
    ConceptBank bank;
    std::vector<std::string> failures;  // "concept_id: reason"
};

/// Fits every manifest concept at the layer's semantic level, in stable
/// concept_id order. Per-concept failures are collected, not fatal.
LayerFitReport fit_layer_concepts(const net::NetworkSpec& net,
                                  SampleStore& store,
                                  const ConceptManifest& manifest,
                                  const std::string& layer, double lambda,
                                  const solvers::AdmmConfig& admm = {},
                                  int jobs = 1);

/// Weighted channel sum sum_j t_j A_j: the network's realization of the
/// concept on this activation, as a spatial map.
Eigen::MatrixXd concept_harmonized_unit(const HarmonizingWeights& entry,
                                        const net::ActivationMap& act);

/// GAP of the concept-harmonized unit (the concept's scalar response).
double concept_response_value(const HarmonizingWeights& entry,
                              const net::ActivationMap& act);

}  // namespace cchain::harmonize
