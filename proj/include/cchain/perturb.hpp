#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cchain/harmonize.hpp"
#include "cchain/network.hpp"

namespace cchain::perturb {

struct PerturbError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GateSamplerConfig {
    int num_samples = 200;
    double keep_probability = 0.5;  // per-unit probability of an open gate
    std::uint64_t seed = 0;
    bool include_all_ones = true;

    void validate() const;
};

/// N binary gate vectors, each entry independently open with probability p;
/// the first sample is the all-ones vector when include_all_ones is set.
/// Deterministic under the seed.
std::vector<net::GateVector> sample_gates(const GateSamplerConfig& config,
                                          int num_units);

/// Proximity of a gate vector to the unperturbed network:
/// h(e) = exp(-||e - 1||_2^2 / sigma^2), in (0, 1], 1 iff all gates open.
double proximity_weight(const net::GateVector& gates, double sigma);

double default_sigma(int num_units);       // sqrt(I) / 2
int default_num_samples(int num_units);    // max(10 I, 200)

/// One gated forward pass: gates, shallow GAP features, per-concept deep
/// responses, and the proximity weight.
struct PerturbationRecord {
    net::GateVector gates;
    Eigen::VectorXd shallow_gap;
    std::map<std::string, double> concept_responses;
    double proximity = 1.0;
};

struct PerturbationDataset {
    std::string shallow_layer;
    std::string deep_layer;
    Level deep_level = Level::Scene;
    double sigma = 0.0;
    GateSamplerConfig sampler;
    std::vector<PerturbationRecord> records;

    int num_units() const {
        return records.empty() ? 0
                               : static_cast<int>(records.front().gates.size());
    }
};

/// Deep-concept response under a gated forward: the GAP of the
/// concept-harmonized unit computed on the perturbed deep activation.
double concept_response(const net::NetworkSpec& net, const Tensor& input,
                        const net::GateVector& gates,
                        const std::string& gate_layer,
                        const harmonize::HarmonizingWeights& entry,
                        const std::string& deep_layer);

/// Builds the perturbation dataset for one (input, shallow layer, deep layer)
/// triple: one record per sampled gate vector, with responses for every
/// concept in the deep bank. One shared gate-sample set serves all concepts.
/// sigma <= 0 selects the default. Record order is fixed by sample index.
PerturbationDataset generate_perturbation_dataset(
    const net::NetworkSpec& net, const Tensor& input,
    const std::string& shallow_layer, const std::string& deep_layer,
    const harmonize::ConceptBank& bank, const GateSamplerConfig& sampler,
    double sigma = 0.0, int jobs = 1);

/// JSON-lines serialization: a header line carrying layers, sigma, and the
/// sampler config, then one record per line.
std::string to_jsonl(const PerturbationDataset& dataset);
PerturbationDataset from_jsonl(const std::string& text);
void save_jsonl(const PerturbationDataset& dataset,
                const std::filesystem::path& path);
PerturbationDataset load_jsonl(const std::filesystem::path& path);

}  // namespace cchain::perturb
