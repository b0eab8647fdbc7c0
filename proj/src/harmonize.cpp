#include "cchain/harmonize.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>

#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "cchain/parallel.hpp"

namespace cchain::harmonize {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

void HarmonizingDataset::validate() const {
    if (features.rows() < 2)
        throw HarmonizeError("harmonizing dataset needs at least 2 samples");
    if (labels.size() != features.rows())
        throw HarmonizeError("harmonizing dataset: label/feature mismatch");
    bool has_pos = false, has_neg = false;
    for (Eigen::Index n = 0; n < labels.size(); ++n) {
        if (labels(n) == 1.0)
            has_pos = true;
        else if (labels(n) == 0.0)
            has_neg = true;
        else
            throw HarmonizeError("harmonizing labels must be 0 or 1");
    }
    if (!has_pos)
        throw HarmonizeError("concept '" + concept.concept_id +
                             "' has no positive samples");
    if (!has_neg)
        throw HarmonizeError("concept '" + concept.concept_id +
                             "' has no negative samples");
}

ConceptBank::ConceptBank(std::string layer,
                         std::vector<HarmonizingWeights> concepts)
    : layer_(std::move(layer)), concepts_(std::move(concepts)) {
    for (const auto& c : concepts_) {
        if (c.concept.layer != layer_)
            throw HarmonizeError("bank entry '" + c.concept.concept_id +
                                 "' belongs to layer '" + c.concept.layer +
                                 "', bank is on '" + layer_ + "'");
        if (!concepts_.empty() &&
            c.weights.size() != concepts_.front().weights.size())
            throw HarmonizeError("bank entries disagree on unit count");
    }
}

MatrixXd ConceptBank::matrix() const {
    if (concepts_.empty()) return MatrixXd();
    MatrixXd phi(concepts_.front().weights.size(),
                 static_cast<Eigen::Index>(concepts_.size()));
    for (std::size_t k = 0; k < concepts_.size(); ++k)
        phi.col(static_cast<Eigen::Index>(k)) = concepts_[k].weights;
    return phi;
}

int ConceptBank::index_of(const std::string& concept_id) const {
    for (std::size_t k = 0; k < concepts_.size(); ++k)
        if (concepts_[k].concept.concept_id == concept_id)
            return static_cast<int>(k);
    return -1;
}

const HarmonizingWeights& ConceptBank::entry(
    const std::string& concept_id) const {
    const int k = index_of(concept_id);
    if (k < 0)
        throw HarmonizeError("concept not in bank: " + concept_id);
    return concepts_[static_cast<std::size_t>(k)];
}

ConceptBank ConceptBank::unit_normalized() const {
    std::vector<HarmonizingWeights> normalized = concepts_;
    for (auto& entry : normalized) {
        const double norm = entry.weights.norm();
        if (norm > 0.0) entry.weights /= norm;
    }
    return ConceptBank(layer_, std::move(normalized));
}

json ConceptBank::to_json() const {
    json concepts = json::array();
    for (const auto& c : concepts_) {
        json item;
        item["concept_id"] = c.concept.concept_id;
        item["level"] = std::string(level_name(c.concept.level));
        item["lambda"] = c.lambda_used;
        item["weights"] = std::vector<double>(
            c.weights.data(), c.weights.data() + c.weights.size());
        item["stats"] = {{"training_loss", c.stats.training_loss},
                         {"nonzeros", c.stats.nonzeros},
                         {"certificate_gap", c.stats.certificate_gap},
                         {"iterations", c.stats.iterations},
                         {"converged", c.stats.converged}};
        concepts.push_back(std::move(item));
    }
    return json{{"schema", "bank.v1"}, {"layer", layer_}, {"concepts", concepts}};
}

ConceptBank ConceptBank::from_json(const json& doc) {
    if (!doc.contains("layer") || !doc.contains("concepts"))
        throw HarmonizeError("bank json needs 'layer' and 'concepts'");
    const std::string layer = doc["layer"].get<std::string>();
    std::vector<HarmonizingWeights> concepts;
    for (const auto& item : doc["concepts"]) {
        HarmonizingWeights entry;
        entry.concept.concept_id = item.at("concept_id").get<std::string>();
        entry.concept.level = parse_level(item.at("level").get<std::string>());
        entry.concept.layer = layer;
        entry.lambda_used = item.value("lambda", 0.0);
        const auto& w = item.at("weights");
        entry.weights.resize(static_cast<Eigen::Index>(w.size()));
        for (std::size_t i = 0; i < w.size(); ++i)
            entry.weights(static_cast<Eigen::Index>(i)) = w[i].get<double>();
        if (item.contains("stats")) {
            const auto& s = item["stats"];
            entry.stats.training_loss = s.value("training_loss", 0.0);
            entry.stats.nonzeros = s.value("nonzeros", 0);
            entry.stats.certificate_gap = s.value("certificate_gap", 0.0);
            entry.stats.iterations = s.value("iterations", 0);
            entry.stats.converged = s.value("converged", false);
        }
        concepts.push_back(std::move(entry));
    }
    return ConceptBank(layer, std::move(concepts));
}

void ConceptBank::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw HarmonizeError("cannot write bank: " + path.string());
    out << to_json().dump(2) << "\n";
}

ConceptBank ConceptBank::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw HarmonizeError("cannot open bank: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw HarmonizeError("bank parse failure (" + path.string() +
                             "): " + e.what());
    }
    return from_json(doc);
}

HarmonizingDataset build_harmonizing_dataset(const net::NetworkSpec& net,
                                             SampleStore& store,
                                             const ConceptManifest& manifest,
                                             const ConceptSpec& concept) {
    const auto rows = manifest.rows_for(concept.level, concept.concept_id);
    if (rows.empty())
        throw HarmonizeError("concept '" + concept.concept_id +
                             "' absent from manifest at level " +
                             std::string(level_name(concept.level)));
    const std::string& layer =
        concept.layer.empty() ? net.layer_for(concept.level) : concept.layer;
    const int units = net.channels_of(layer);

    HarmonizingDataset dataset;
    dataset.concept = concept;
    dataset.concept.layer = layer;
    dataset.features.resize(static_cast<Eigen::Index>(rows.size()), units);
    dataset.labels.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t n = 0; n < rows.size(); ++n) {
        const auto& acts = store.activations(rows[n]->sample_id);
        dataset.features.row(static_cast<Eigen::Index>(n)) =
            net::gap(acts.at(layer)).transpose();
        dataset.labels(static_cast<Eigen::Index>(n)) = rows[n]->label;
    }
    dataset.validate();
    return dataset;
}

double default_lambda(const MatrixXd& features) {
    const double smax =
        features.jacobiSvd().singularValues()(0);
    return 0.01 * smax * smax / static_cast<double>(features.rows());
}

HarmonizingWeights fit_concept_harmonizer(const HarmonizingDataset& dataset,
                                          double lambda,
                                          const solvers::AdmmConfig& admm) {
    dataset.validate();
    if (lambda <= 0.0) lambda = default_lambda(dataset.features);

    auto problem = solvers::WeightedLassoProblem::uniform(
        dataset.features, dataset.labels, lambda);
    const auto solved = solvers::admm_weighted_lasso(problem, admm);
    if (!solved.converged)
        throw HarmonizeError(
            "harmonizer fit for '" + dataset.concept.concept_id +
            "' did not converge after " + std::to_string(solved.iterations) +
            " iterations (primal " + std::to_string(solved.primal_residual) +
            ", dual " + std::to_string(solved.dual_residual) + ")");

    HarmonizingWeights out;
    out.concept = dataset.concept;
    out.weights = solved.weights;
    out.lambda_used = lambda;
    const VectorXd residual = dataset.features * out.weights - dataset.labels;
    out.stats.training_loss = 0.5 * residual.squaredNorm();
    out.stats.nonzeros =
        static_cast<int>((out.weights.array() != 0.0).count());
    out.stats.certificate_gap =
        solvers::lasso_certificate_gap(problem, out.weights);
    out.stats.iterations = solved.iterations;
    out.stats.converged = solved.converged;
    return out;
}

LayerFitReport fit_layer_concepts(const net::NetworkSpec& net,
                                  SampleStore& store,
                                  const ConceptManifest& manifest,
                                  const std::string& layer, double lambda,
                                  const solvers::AdmmConfig& admm, int jobs) {
    // The layer determines the semantic level through the net's level map.
    Level level = Level::Color;
    bool found = false;
    for (const auto& [lvl, lname] : net.level_map()) {
        if (lname == layer) {
            level = lvl;
            found = true;
            break;
        }
    }
    if (!found)
        throw HarmonizeError("layer '" + layer +
                             "' is not mapped to any semantic level");

    const auto ids = manifest.concept_ids(level);
    if (ids.empty())
        throw HarmonizeError("manifest has no concepts at level " +
                             std::string(level_name(level)));

    // Datasets are built serially (the sample store caches forwards); the
    // independent solves can then run on the worker pool.
    std::vector<HarmonizingDataset> datasets;
    std::vector<std::string> failures;
    std::vector<std::string> dataset_ids;
    for (const auto& id : ids) {
        ConceptSpec spec{id, level, layer};
        try {
            datasets.push_back(
                build_harmonizing_dataset(net, store, manifest, spec));
            dataset_ids.push_back(id);
        } catch (const std::exception& e) {
            failures.push_back(id + ": " + e.what());
        }
    }

    std::vector<HarmonizingWeights> fitted(datasets.size());
    std::vector<std::string> fit_errors(datasets.size());
    parallel_for(datasets.size(), jobs, [&](std::size_t k) {
        try {
            fitted[k] = fit_concept_harmonizer(datasets[k], lambda, admm);
        } catch (const std::exception& e) {
            fit_errors[k] = e.what();
        }
    });

    std::vector<HarmonizingWeights> ok;
    for (std::size_t k = 0; k < datasets.size(); ++k) {
        if (fit_errors[k].empty())
            ok.push_back(std::move(fitted[k]));
        else
            failures.push_back(dataset_ids[k] + ": " + fit_errors[k]);
    }
    return LayerFitReport{ConceptBank(layer, std::move(ok)),
                          std::move(failures)};
}

Eigen::MatrixXd concept_harmonized_unit(const HarmonizingWeights& entry,
                                        const net::ActivationMap& act) {
    if (act.layer_name != entry.concept.layer)
        throw HarmonizeError("activation layer '" + act.layer_name +
                             "' does not match bank entry layer '" +
                             entry.concept.layer + "'");
    const Tensor& t = act.data;
    if (entry.weights.size() != t.channels())
        throw HarmonizeError("harmonizing weight length mismatch");
    Eigen::MatrixXd map = Eigen::MatrixXd::Zero(t.height(), t.width());
    for (int c = 0; c < t.channels(); ++c) {
        const double w = entry.weights(c);
        if (w == 0.0) continue;
        for (int y = 0; y < t.height(); ++y)
            for (int x = 0; x < t.width(); ++x) map(y, x) += w * t.at(c, y, x);
    }
    return map;
}

double concept_response_value(const HarmonizingWeights& entry,
                              const net::ActivationMap& act) {
    return concept_harmonized_unit(entry, act).mean();
}

}  // namespace cchain::harmonize
