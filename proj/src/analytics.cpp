#include "cchain/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <Eigen/SVD>
#include <nlohmann/json.hpp>

namespace cchain::analytics {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

void WeightSet::validate() const {
    if (members.empty())
        throw AnalyticsError("weight set '" + set_id + "' is empty");
    const Eigen::Index dim = members.front().second.size();
    for (const auto& [id, w] : members)
        if (w.size() != dim)
            throw AnalyticsError("weight set '" + set_id +
                                 "' has mixed dimensions (member " + id + ")");
}

VectorXd inference_centroid(const WeightSet& set) {
    set.validate();
    VectorXd mean = VectorXd::Zero(set.members.front().second.size());
    for (const auto& [id, w] : set.members) mean += w;
    return mean / static_cast<double>(set.members.size());
}

double intra_set_distance(const WeightSet& set) {
    const VectorXd centroid = inference_centroid(set);
    double total = 0.0;
    for (const auto& [id, w] : set.members) total += (w - centroid).norm();
    return total / static_cast<double>(set.members.size());
}

double inter_set_distance(const WeightSet& a, const WeightSet& b) {
    const VectorXd ca = inference_centroid(a);
    const VectorXd cb = inference_centroid(b);
    if (ca.size() != cb.size())
        throw AnalyticsError("inter_set_distance: dimension mismatch between '" +
                             a.set_id + "' and '" + b.set_id + "'");
    return (ca - cb).norm();
}

Pca3Result pca3_project(const std::vector<WeightSet>& sets) {
    std::size_t total = 0;
    for (const auto& set : sets) {
        set.validate();
        total += set.members.size();
    }
    if (total < 3)
        throw AnalyticsError("pca3_project needs at least 3 members");
    const Eigen::Index dim = sets.front().members.front().second.size();
    if (dim < 3) throw AnalyticsError("pca3_project needs dimension >= 3");

    Pca3Result result;
    MatrixXd pooled(static_cast<Eigen::Index>(total), dim);
    Eigen::Index row = 0;
    for (const auto& set : sets) {
        for (const auto& [id, w] : set.members) {
            if (w.size() != dim)
                throw AnalyticsError("pca3_project: dimension mismatch");
            pooled.row(row++) = w.transpose();
            result.member_keys.emplace_back(set.set_id, id);
        }
    }

    const VectorXd mean = pooled.colwise().mean();
    const MatrixXd centered = pooled.rowwise() - mean.transpose();
    Eigen::BDCSVD<MatrixXd> svd(centered,
                                Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VectorXd sv = svd.singularValues();
    const double total_var = sv.squaredNorm();
    const double rank_tol = sv.size() ? sv(0) * 1e-12 : 0.0;

    MatrixXd components = MatrixXd::Zero(dim, 3);
    for (int c = 0; c < 3; ++c) {
        if (c < sv.size() && sv(c) > rank_tol) {
            VectorXd comp = svd.matrixV().col(c);
            // Deterministic sign: largest-magnitude coordinate positive.
            Eigen::Index argmax = 0;
            comp.cwiseAbs().maxCoeff(&argmax);
            if (comp(argmax) < 0.0) comp = -comp;
            components.col(c) = comp;
            result.explained_variance_ratio[static_cast<std::size_t>(c)] =
                total_var > 0.0 ? sv(c) * sv(c) / total_var : 0.0;
            ++result.effective_rank;
        }
    }
    result.degenerate = result.effective_rank < 3;

    const MatrixXd projected = centered * components;
    result.coords.resize(total);
    for (Eigen::Index r = 0; r < projected.rows(); ++r)
        result.coords[static_cast<std::size_t>(r)] = {
            projected(r, 0), projected(r, 1), projected(r, 2)};
    return result;
}

DistanceTable distance_table(const std::vector<WeightSet>& sets) {
    if (sets.empty()) throw AnalyticsError("distance_table: no sets");
    DistanceTable table;
    const int n = static_cast<int>(sets.size());
    table.entries.resize(n, n);
    for (const auto& set : sets)
        table.labels.push_back(set.concept_id + "@" + set.set_id);
    for (int i = 0; i < n; ++i) {
        table.entries(i, i) = intra_set_distance(sets[static_cast<std::size_t>(i)]);
        for (int j = i + 1; j < n; ++j) {
            const double d = inter_set_distance(sets[static_cast<std::size_t>(i)],
                                                sets[static_cast<std::size_t>(j)]);
            table.entries(i, j) = d;
            table.entries(j, i) = d;
        }
    }
    return table;
}

namespace {

std::string format_fixed(double value, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
    return buf;
}

std::string format_general(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", value);
    return buf;
}

}  // namespace

std::string distance_table_csv(const DistanceTable& table) {
    std::ostringstream out;
    out << "pair";
    for (const auto& label : table.labels) out << "," << label;
    out << "\n";
    for (Eigen::Index i = 0; i < table.entries.rows(); ++i) {
        out << table.labels[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < table.entries.cols(); ++j)
            out << "," << format_fixed(table.entries(i, j), 4);
        out << "\n";
    }
    return out.str();
}

std::string pca_csv(const Pca3Result& result) {
    std::ostringstream out;
    out << "instance_id,set_id,pc1,pc2,pc3\n";
    for (std::size_t i = 0; i < result.coords.size(); ++i) {
        out << result.member_keys[i].second << "," << result.member_keys[i].first;
        for (double v : result.coords[i]) out << "," << format_general(v);
        out << "\n";
    }
    return out.str();
}

namespace {

// Shares for one ring: nonnegative-clipped, renormalized; equal shares with
// a flag when everything clips to zero.
std::pair<std::vector<double>, bool> ring_shares(
    const std::vector<double>& contributions) {
    std::vector<double> shares(contributions.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < contributions.size(); ++i) {
        shares[i] = std::max(contributions[i], 0.0);
        total += shares[i];
    }
    if (total <= 0.0) {
        const double equal = 1.0 / static_cast<double>(shares.size());
        std::fill(shares.begin(), shares.end(), equal);
        return {shares, true};
    }
    for (double& s : shares) s /= total;
    return {shares, false};
}

json node_sunburst(const chain::ChainNode& node, double value) {
    json doc;
    doc["name"] = node.concept_id;
    doc["value"] = value;
    doc["children"] = json::array();
    if (node.children.empty()) return doc;

    std::vector<double> contributions;
    for (const auto& child : node.children)
        contributions.push_back(child.contribution);
    const auto [shares, flagged] = ring_shares(contributions);
    if (flagged) doc["flag"] = "all_zero_ring";

    // Children are stored in descending contribution order already; shares
    // inherit that order.
    for (std::size_t i = 0; i < node.children.size(); ++i)
        doc["children"].push_back(node_sunburst(node.children[i], shares[i]));
    return doc;
}

}  // namespace

json emit_sunburst(const chain::ChainTree& tree) {
    chain::validate_tree(tree);
    return node_sunburst(tree.root, 1.0);
}

json emit_sunburst(const chain::ClassChain& chain) {
    json root;
    root["name"] = chain.class_id;
    root["value"] = 1.0;
    root["children"] = json::array();
    json* attach = &root;
    for (Level level : kLevelsDeepToShallow) {
        auto it = chain.levels.find(level);
        if (it == chain.levels.end() || it->second.empty()) break;
        std::vector<double> contributions;
        for (const auto& entry : it->second)
            contributions.push_back(entry.contribution);
        const auto [shares, flagged] = ring_shares(contributions);
        if (flagged) (*attach)["flag"] = "all_zero_ring";
        json& children = (*attach)["children"];
        for (std::size_t i = 0; i < it->second.size(); ++i)
            children.push_back(json{{"name", it->second[i].concept_id},
                                    {"value", shares[i]},
                                    {"children", json::array()}});
        attach = &children[0];  // entries are sorted descending already
    }
    return root;
}

}  // namespace cchain::analytics
