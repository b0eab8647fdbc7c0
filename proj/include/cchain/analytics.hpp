#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "cchain/chain.hpp"

namespace cchain::analytics {

struct AnalyticsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Inference weights of one concept across an image set.
struct WeightSet {
    std::string set_id;
    std::string concept_id;
    std::string layer;
    std::vector<std::pair<std::string, Eigen::VectorXd>> members;  // (instance, w)

    void validate() const;
};

/// Coordinate-wise mean of the member weights.
Eigen::VectorXd inference_centroid(const WeightSet& set);

/// Mean Euclidean distance of members to their centroid; 0 iff identical.
double intra_set_distance(const WeightSet& set);

/// Euclidean distance between the two set centroids.
double inter_set_distance(const WeightSet& a, const WeightSet& b);

struct Pca3Result {
    // (set_id, instance_id) per row of coords, pooled input order.
    std::vector<std::pair<std::string, std::string>> member_keys;
    std::vector<std::array<double, 3>> coords;
    std::array<double, 3> explained_variance_ratio{{0, 0, 0}};
    int effective_rank = 0;
    bool degenerate = false;  // rank < 3: missing components padded with zeros
};

/// Projects the pooled, mean-centered member weights onto the top three
/// principal components (descending variance). Sign convention: each
/// component's largest-magnitude coordinate is made positive.
/// Requires >= 3 total members and dimension >= 3.
Pca3Result pca3_project(const std::vector<WeightSet>& sets);

/// Symmetric table: diagonal entries are intra-set distances, off-diagonal
/// entries inter-set distances. Labels are "concept@set".
struct DistanceTable {
    std::vector<std::string> labels;
    Eigen::MatrixXd entries;
};

DistanceTable distance_table(const std::vector<WeightSet>& sets);

/// CSV with 4 decimal places, mirroring the distance tables of the figures.
std::string distance_table_csv(const DistanceTable& table);

/// CSV "instance_id,set_id,pc1,pc2,pc3".
std::string pca_csv(const Pca3Result& result);

/// Sunburst chart data: nested {name, value, children}. Per ring (the
/// children of one node), values are the nonnegative-clipped contributions
/// renormalized to sum 1, in descending order. An all-zero ring falls back
/// to equal shares and is flagged on the parent.
nlohmann::json emit_sunburst(const chain::ChainTree& tree);

/// Class chains are flat per level; rings are attached outward under the
/// maximal section of the previous ring (mirroring how the class figures
/// expand the dominant concept).
nlohmann::json emit_sunburst(const chain::ClassChain& chain);

}  // namespace cchain::analytics
