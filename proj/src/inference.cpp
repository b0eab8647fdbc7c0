#include "cchain/inference.hpp"

#include <set>

#include <nlohmann/json.hpp>

namespace cchain::inference {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

json InferenceWeights::to_json() const {
    json doc;
    doc["schema"] = "inference.v1";
    doc["concept_id"] = deep_concept.concept_id;
    doc["level"] = std::string(level_name(deep_concept.level));
    doc["deep_layer"] = deep_concept.layer;
    doc["shallow_layer"] = shallow_layer;
    doc["lambda"] = lambda_used;
    doc["weights"] =
        std::vector<double>(weights.data(), weights.data() + weights.size());
    doc["stats"] = {{"iterations", solver_stats.iterations},
                    {"converged", solver_stats.converged},
                    {"primal_residual", solver_stats.primal_residual},
                    {"dual_residual", solver_stats.dual_residual},
                    {"certificate_gap", certificate_gap}};
    return doc;
}

InferenceWeights InferenceWeights::from_json(const json& doc) {
    InferenceWeights out;
    out.deep_concept.concept_id = doc.at("concept_id").get<std::string>();
    out.deep_concept.level = parse_level(doc.at("level").get<std::string>());
    out.deep_concept.layer = doc.at("deep_layer").get<std::string>();
    out.shallow_layer = doc.at("shallow_layer").get<std::string>();
    out.lambda_used = doc.value("lambda", 0.0);
    const auto& w = doc.at("weights");
    out.weights.resize(static_cast<Eigen::Index>(w.size()));
    for (std::size_t i = 0; i < w.size(); ++i)
        out.weights(static_cast<Eigen::Index>(i)) = w[i].get<double>();
    if (doc.contains("stats")) {
        const auto& s = doc["stats"];
        out.solver_stats.iterations = s.value("iterations", 0);
        out.solver_stats.converged = s.value("converged", false);
        out.solver_stats.primal_residual = s.value("primal_residual", 0.0);
        out.solver_stats.dual_residual = s.value("dual_residual", 0.0);
        out.certificate_gap = s.value("certificate_gap", 0.0);
    }
    out.solver_stats.weights = out.weights;
    return out;
}

InferenceWeights fit_hierarchical_inference(
    const perturb::PerturbationDataset& dataset, const std::string& concept_id,
    double lambda, const solvers::AdmmConfig& admm) {
    const auto& records = dataset.records;
    if (records.size() < 2)
        throw InferenceError("inference fit needs at least 2 records");
    std::set<net::GateVector> distinct;
    for (const auto& rec : records) {
        distinct.insert(rec.gates);
        if (distinct.size() >= 2) break;
    }
    if (distinct.size() < 2)
        throw InferenceError("inference fit needs >= 2 distinct gate vectors");

    solvers::WeightedLassoProblem problem;
    const Eigen::Index n_rows = static_cast<Eigen::Index>(records.size());
    const Eigen::Index n_cols = records.front().shallow_gap.size();
    problem.features.resize(n_rows, n_cols);
    problem.targets.resize(n_rows);
    problem.sample_weights.resize(n_rows);
    for (Eigen::Index n = 0; n < n_rows; ++n) {
        const auto& rec = records[static_cast<std::size_t>(n)];
        auto it = rec.concept_responses.find(concept_id);
        if (it == rec.concept_responses.end())
            throw InferenceError("concept '" + concept_id +
                                 "' not present in dataset responses");
        problem.features.row(n) = rec.shallow_gap.transpose();
        problem.targets(n) = it->second;
        problem.sample_weights(n) = rec.proximity;
    }
    if (lambda <= 0.0) lambda = harmonize::default_lambda(problem.features);
    problem.lambda = lambda;

    const auto solved = solvers::admm_weighted_lasso(problem, admm);
    if (!solved.converged)
        throw InferenceError(
            "inference fit for '" + concept_id + "' did not converge after " +
            std::to_string(solved.iterations) + " iterations (primal " +
            std::to_string(solved.primal_residual) + ", dual " +
            std::to_string(solved.dual_residual) + ")");

    InferenceWeights out;
    out.deep_concept =
        harmonize::ConceptSpec{concept_id, dataset.deep_level, dataset.deep_layer};
    out.shallow_layer = dataset.shallow_layer;
    out.weights = solved.weights;
    out.lambda_used = lambda;
    out.solver_stats = solved;
    out.certificate_gap = solvers::lasso_certificate_gap(problem, out.weights);
    return out;
}

ContributionVector decompose_concept(const InferenceWeights& inference,
                                     const harmonize::ConceptBank& bank,
                                     int epsilon) {
    if (bank.empty())
        throw InferenceError("decompose_concept: empty concept bank");
    if (epsilon < 1)
        throw InferenceError("decompose_concept: epsilon must be >= 1");
    const MatrixXd phi = bank.matrix();
    if (phi.rows() != inference.weights.size())
        throw InferenceError(
            "decompose_concept: bank layer unit count does not match "
            "inference weights");

    const int sparsity = std::min(epsilon, bank.size());
    solvers::OmpInfo info;
    const VectorXd alpha =
        solvers::omp_sparse_decompose(phi, inference.weights, sparsity, &info);

    ContributionVector out;
    out.deep_concept = inference.deep_concept;
    out.sparsity_bound = epsilon;
    out.residual_norm = info.residual_norm;
    for (int k = 0; k < bank.size(); ++k) {
        if (alpha(k) != 0.0)
            out.entries.emplace_back(bank.concepts()[static_cast<std::size_t>(k)]
                                         .concept.concept_id,
                                     alpha(k));
    }
    return out;
}

double directional_derivative(const InferenceWeights& inference,
                              const harmonize::HarmonizingWeights& entry) {
    if (inference.weights.size() != entry.weights.size())
        throw InferenceError(
            "directional_derivative: weight length mismatch (" +
            std::to_string(inference.weights.size()) + " vs " +
            std::to_string(entry.weights.size()) + ")");
    return inference.weights.dot(entry.weights);
}

std::string top_concept(const InferenceWeights& inference,
                        const harmonize::ConceptBank& bank) {
    if (bank.empty()) throw InferenceError("top_concept: empty concept bank");
    int best = 0;
    double best_value =
        directional_derivative(inference, bank.concepts().front());
    for (int k = 1; k < bank.size(); ++k) {
        const double value = directional_derivative(
            inference, bank.concepts()[static_cast<std::size_t>(k)]);
        if (value > best_value) {  // strict: ties keep the lowest index
            best = k;
            best_value = value;
        }
    }
    return bank.concepts()[static_cast<std::size_t>(best)].concept.concept_id;
}

}  // namespace cchain::inference
