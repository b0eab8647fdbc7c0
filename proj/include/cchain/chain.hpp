#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cchain/harmonize.hpp"
#include "cchain/inference.hpp"
#include "cchain/network.hpp"

namespace cchain::chain {

struct ChainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ChainNode {
    std::string concept_id;
    Level level = Level::Scene;
    double contribution = 0.0;  // alpha from the parent decomposition, or the
                                // directional derivative on top-1 levels
    double saliency = 0.0;      // GAP of the concept-harmonized unit
    double fit_certificate_gap = 0.0;  // of the fit that expanded this node
    std::vector<ChainNode> children;   // exactly one level shallower
    std::string error;  // non-empty: expansion failed, subtree pruned
};

struct ChainConfig {
    double lambda = -1.0;  // inference-fit lambda; <= 0 selects the default
    int epsilon = 5;       // sparsity bound for scene->object, object->part
    double keep_probability = 0.5;
    int num_samples = 0;  // 0 selects max(10 I, 200)
    double sigma = 0.0;   // 0 selects sqrt(I)/2
    double rho = 1.0;
    int max_iters = 5000;
    double tol_primal = 1e-7;
    double tol_dual = 1e-7;
    std::uint64_t seed = 0;
    // Expansion budget: how many object nodes (of the root) and how many
    // part nodes (per expanded object) are themselves expanded further.
    int expand_objects = 3;
    int expand_parts = 2;
    int jobs = 1;

    nlohmann::json snapshot() const;
    solvers::AdmmConfig admm() const;
};

struct ChainTree {
    std::string instance_id;
    int predicted_class = -1;
    ChainNode root;  // scene level
    nlohmann::json config_snapshot;
};

struct NamedFit {
    std::string node_path;  // e.g. "scene_0/object_2"
    inference::InferenceWeights fit;
};

struct InstanceChainResult {
    ChainTree tree;
    std::vector<NamedFit> fits;  // every inference fit, in expansion order
};

/// Builds the instance-level explanation top-down: the root is the predicted
/// scene concept (maximal harmonized response at the scene layer); each kept
/// node is expanded by generating a perturbation dataset at the next-shallower
/// layer, fitting inference weights, and decomposing (epsilon-sparse at
/// scene->object and object->part, top-1 at part->material and
/// material->color). Stage failures annotate the node and prune its subtree.
/// Banks must exist for all five levels on the net's mapped layers.
InstanceChainResult build_instance_chain_with_fits(
    const net::NetworkSpec& net, const Tensor& input,
    const std::map<Level, harmonize::ConceptBank>& banks,
    const ChainConfig& config, const std::string& instance_id);

ChainTree build_instance_chain(const net::NetworkSpec& net, const Tensor& input,
                               const std::map<Level, harmonize::ConceptBank>& banks,
                               const ChainConfig& config,
                               const std::string& instance_id);

struct ClassChainEntry {
    std::string concept_id;
    double contribution = 0.0;  // mean over all member instances, absent = 0
    int presence = 0;           // number of member trees containing it
};

struct ClassChain {
    std::string class_id;
    int predicted_class = -1;
    std::vector<std::string> members;
    std::map<Level, std::vector<ClassChainEntry>> levels;
};

/// Keeps concepts appearing in at least share_fraction of the member trees;
/// a concept's contribution is averaged over all members (0 where absent).
/// All trees must share one predicted class.
ClassChain aggregate_class_chain(const std::vector<ChainTree>& trees,
                                 double share_fraction,
                                 const std::string& class_id = "");

/// Structural check: every edge connects adjacent semantic levels, the root
/// is at scene level, contributions are finite. Throws on violation.
void validate_tree(const ChainTree& tree);

nlohmann::json tree_to_json(const ChainTree& tree);
ChainTree tree_from_json(const nlohmann::json& doc);
nlohmann::json class_to_json(const ClassChain& chain);
ClassChain class_from_json(const nlohmann::json& doc);

/// Concept path obtained by following the maximal-contribution child from
/// the root down (the headline reading of the explanation).
std::vector<std::string> maximal_contribution_path(const ChainTree& tree);

}  // namespace cchain::chain
