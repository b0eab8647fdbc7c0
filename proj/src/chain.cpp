#include "cchain/chain.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "cchain/rng.hpp"

namespace cchain::chain {

using nlohmann::json;

json ChainConfig::snapshot() const {
    return json{{"lambda", lambda},
                {"epsilon", epsilon},
                {"keep_probability", keep_probability},
                {"num_samples", num_samples},
                {"sigma", sigma},
                {"rho", rho},
                {"max_iters", max_iters},
                {"tol_primal", tol_primal},
                {"tol_dual", tol_dual},
                {"seed", seed},
                {"expand_objects", expand_objects},
                {"expand_parts", expand_parts}};
}

solvers::AdmmConfig ChainConfig::admm() const {
    solvers::AdmmConfig cfg;
    cfg.rho = rho;
    cfg.max_iters = max_iters;
    cfg.tol_primal = tol_primal;
    cfg.tol_dual = tol_dual;
    return cfg;
}

namespace {

void sort_children_desc(std::vector<ChainNode>& children) {
    std::stable_sort(children.begin(), children.end(),
                     [](const ChainNode& a, const ChainNode& b) {
                         return a.contribution > b.contribution;
                     });
}

// Expands one node against the shared level-pair dataset. Returns the fit
// unless the stage failed, in which case the node carries the error.
bool expand_node(ChainNode& node, const perturb::PerturbationDataset& dataset,
                 const harmonize::ConceptBank& shallow_bank,
                 const net::Activations& acts, const std::string& shallow_layer,
                 Level shallow_level, const ChainConfig& config,
                 inference::InferenceWeights& fit_out) {
    try {
        auto fit = inference::fit_hierarchical_inference(
            dataset, node.concept_id, config.lambda, config.admm());
        node.fit_certificate_gap = fit.certificate_gap;

        const bool sparse_expansion =
            shallow_level == Level::Object || shallow_level == Level::Part;
        std::vector<ChainNode> children;
        if (sparse_expansion) {
            const auto contrib =
                inference::decompose_concept(fit, shallow_bank, config.epsilon);
            for (const auto& [concept_id, alpha] : contrib.entries) {
                ChainNode child;
                child.concept_id = concept_id;
                child.level = shallow_level;
                child.contribution = alpha;
                child.saliency = harmonize::concept_response_value(
                    shallow_bank.entry(concept_id), acts.at(shallow_layer));
                children.push_back(std::move(child));
            }
        } else {
            const std::string concept_id =
                inference::top_concept(fit, shallow_bank);
            ChainNode child;
            child.concept_id = concept_id;
            child.level = shallow_level;
            child.contribution = inference::directional_derivative(
                fit, shallow_bank.entry(concept_id));
            child.saliency = harmonize::concept_response_value(
                shallow_bank.entry(concept_id), acts.at(shallow_layer));
            children.push_back(std::move(child));
        }
        sort_children_desc(children);
        node.children = std::move(children);
        fit_out = std::move(fit);
        return true;
    } catch (const std::exception& e) {
        node.error = e.what();
        node.children.clear();
        return false;
    }
}

}  // namespace

InstanceChainResult build_instance_chain_with_fits(
    const net::NetworkSpec& net, const Tensor& input,
    const std::map<Level, harmonize::ConceptBank>& banks,
    const ChainConfig& config, const std::string& instance_id) {
    for (Level level : kLevelsDeepToShallow) {
        auto it = banks.find(level);
        if (it == banks.end() || it->second.empty())
            throw ChainError("missing concept bank for level " +
                             std::string(level_name(level)));
        if (it->second.layer() != net.layer_for(level))
            throw ChainError("bank for level " +
                             std::string(level_name(level)) + " is on layer '" +
                             it->second.layer() + "' but the net maps it to '" +
                             net.layer_for(level) + "'");
    }

    const auto acts = net::forward(net, input);

    InstanceChainResult result;
    result.tree.instance_id = instance_id;
    result.tree.predicted_class = net::predicted_class(net, acts);
    result.tree.config_snapshot = config.snapshot();

    // Root: the predicted scene concept, i.e. the scene-bank concept with the
    // maximal harmonized response on this instance.
    const auto& scene_bank = banks.at(Level::Scene);
    const std::string scene_layer = net.layer_for(Level::Scene);
    int best = 0;
    double best_response = harmonize::concept_response_value(
        scene_bank.concepts().front(), acts.at(scene_layer));
    for (int k = 1; k < scene_bank.size(); ++k) {
        const double response = harmonize::concept_response_value(
            scene_bank.concepts()[static_cast<std::size_t>(k)],
            acts.at(scene_layer));
        if (response > best_response) {
            best = k;
            best_response = response;
        }
    }
    result.tree.root.concept_id =
        scene_bank.concepts()[static_cast<std::size_t>(best)].concept.concept_id;
    result.tree.root.level = Level::Scene;
    result.tree.root.contribution = 1.0;
    result.tree.root.saliency = best_response;

    static constexpr std::array<std::pair<Level, Level>, 4> kPairs = {{
        {Level::Scene, Level::Object},
        {Level::Object, Level::Part},
        {Level::Part, Level::Material},
        {Level::Material, Level::Color},
    }};

    struct FrontierEntry {
        ChainNode* node;
        std::string path;
    };
    std::vector<FrontierEntry> frontier{
        {&result.tree.root, result.tree.root.concept_id}};

    for (const auto& [deep_level, shallow_level] : kPairs) {
        if (frontier.empty()) break;
        const std::string& shallow_layer = net.layer_for(shallow_level);
        const std::string& deep_layer = net.layer_for(deep_level);
        const int units = net.channels_of(shallow_layer);

        perturb::GateSamplerConfig sampler;
        sampler.num_samples = config.num_samples > 0
                                  ? config.num_samples
                                  : perturb::default_num_samples(units);
        sampler.keep_probability = config.keep_probability;
        sampler.seed = rng::derive_seed(
            config.seed, static_cast<std::uint64_t>(deep_level));
        sampler.include_all_ones = true;

        // One shared dataset serves every node expanded at this level pair.
        const auto dataset = perturb::generate_perturbation_dataset(
            net, input, shallow_layer, deep_layer, banks.at(deep_level),
            sampler, config.sigma, config.jobs);

        for (auto& entry : frontier) {
            inference::InferenceWeights fit;
            if (expand_node(*entry.node, dataset, banks.at(shallow_level), acts,
                            shallow_layer, shallow_level, config, fit))
                result.fits.push_back(NamedFit{entry.path, std::move(fit)});
        }

        // Next frontier under the expansion budget. Children are already in
        // descending contribution order.
        std::vector<FrontierEntry> next;
        for (auto& entry : frontier) {
            int budget = static_cast<int>(entry.node->children.size());
            if (shallow_level == Level::Object)
                budget = std::min(budget, config.expand_objects);
            else if (shallow_level == Level::Part)
                budget = std::min(budget, config.expand_parts);
            for (int c = 0; c < budget; ++c) {
                ChainNode& child = entry.node->children[static_cast<std::size_t>(c)];
                next.push_back(
                    FrontierEntry{&child, entry.path + "/" + child.concept_id});
            }
        }
        frontier = std::move(next);
    }

    validate_tree(result.tree);
    return result;
}

ChainTree build_instance_chain(const net::NetworkSpec& net, const Tensor& input,
                               const std::map<Level, harmonize::ConceptBank>& banks,
                               const ChainConfig& config,
                               const std::string& instance_id) {
    return build_instance_chain_with_fits(net, input, banks, config, instance_id)
        .tree;
}

ClassChain aggregate_class_chain(const std::vector<ChainTree>& trees,
                                 double share_fraction,
                                 const std::string& class_id) {
    if (trees.empty())
        throw ChainError("class aggregation needs at least one tree");
    if (!(share_fraction > 0.0 && share_fraction <= 1.0))
        throw ChainError("share_fraction must be in (0,1]");
    const int predicted = trees.front().predicted_class;
    for (const auto& tree : trees)
        if (tree.predicted_class != predicted)
            throw ChainError("class aggregation over mixed predicted classes");

    // Per tree and level, total contribution per concept (a concept may
    // appear under several parents; occurrences sum within a tree).
    using LevelTotals = std::map<Level, std::map<std::string, double>>;
    std::vector<LevelTotals> per_tree(trees.size());
    for (std::size_t t = 0; t < trees.size(); ++t) {
        std::vector<const ChainNode*> stack{&trees[t].root};
        while (!stack.empty()) {
            const ChainNode* node = stack.back();
            stack.pop_back();
            per_tree[t][node->level][node->concept_id] += node->contribution;
            for (const auto& child : node->children) stack.push_back(&child);
        }
    }

    ClassChain out;
    out.class_id = class_id.empty() ? std::to_string(predicted) : class_id;
    out.predicted_class = predicted;
    for (const auto& tree : trees) out.members.push_back(tree.instance_id);

    const double total = static_cast<double>(trees.size());
    for (Level level : kLevelsDeepToShallow) {
        std::map<std::string, std::pair<double, int>> stats;  // sum, presence
        for (const auto& totals : per_tree) {
            auto it = totals.find(level);
            if (it == totals.end()) continue;
            for (const auto& [concept_id, contribution] : it->second) {
                auto& entry = stats[concept_id];
                entry.first += contribution;
                entry.second += 1;
            }
        }
        std::vector<ClassChainEntry> kept;
        for (const auto& [concept_id, sp] : stats) {
            if (static_cast<double>(sp.second) >= share_fraction * total)
                kept.push_back(
                    ClassChainEntry{concept_id, sp.first / total, sp.second});
        }
        std::stable_sort(kept.begin(), kept.end(),
                         [](const ClassChainEntry& a, const ClassChainEntry& b) {
                             if (a.contribution != b.contribution)
                                 return a.contribution > b.contribution;
                             return a.concept_id < b.concept_id;
                         });
        if (!kept.empty()) out.levels[level] = std::move(kept);
    }
    return out;
}

namespace {

void validate_node(const ChainNode& node) {
    if (!std::isfinite(node.contribution) || !std::isfinite(node.saliency))
        throw ChainError("non-finite node value at concept " + node.concept_id);
    for (const auto& child : node.children) {
        const auto expected = shallower_level(node.level);
        if (!expected || child.level != *expected)
            throw ChainError("tree level discipline violated: " +
                             node.concept_id + " -> " + child.concept_id);
        validate_node(child);
    }
}

json node_to_json(const ChainNode& node) {
    json doc;
    doc["concept_id"] = node.concept_id;
    doc["level"] = std::string(level_name(node.level));
    doc["contribution"] = node.contribution;
    doc["saliency"] = node.saliency;
    doc["fit_certificate_gap"] = node.fit_certificate_gap;
    if (!node.error.empty()) doc["error"] = node.error;
    doc["children"] = json::array();
    for (const auto& child : node.children)
        doc["children"].push_back(node_to_json(child));
    return doc;
}

ChainNode node_from_json(const json& doc) {
    ChainNode node;
    node.concept_id = doc.at("concept_id").get<std::string>();
    node.level = parse_level(doc.at("level").get<std::string>());
    node.contribution = doc.at("contribution").get<double>();
    node.saliency = doc.at("saliency").get<double>();
    node.fit_certificate_gap = doc.value("fit_certificate_gap", 0.0);
    node.error = doc.value("error", std::string());
    for (const auto& child : doc.value("children", json::array()))
        node.children.push_back(node_from_json(child));
    return node;
}

}  // namespace

void validate_tree(const ChainTree& tree) {
    if (tree.root.level != Level::Scene)
        throw ChainError("tree root must be at scene level");
    validate_node(tree.root);
}

json tree_to_json(const ChainTree& tree) {
    validate_tree(tree);
    json doc;
    doc["schema"] = "chain.v1";
    doc["kind"] = "instance";
    doc["instance_id"] = tree.instance_id;
    doc["predicted_class"] = tree.predicted_class;
    doc["config"] = tree.config_snapshot;
    doc["root"] = node_to_json(tree.root);
    return doc;
}

ChainTree tree_from_json(const json& doc) {
    if (doc.value("schema", std::string()) != "chain.v1")
        throw ChainError("unsupported tree schema");
    ChainTree tree;
    tree.instance_id = doc.at("instance_id").get<std::string>();
    tree.predicted_class = doc.at("predicted_class").get<int>();
    tree.config_snapshot = doc.value("config", json::object());
    tree.root = node_from_json(doc.at("root"));
    validate_tree(tree);
    return tree;
}

json class_to_json(const ClassChain& chain) {
    json levels = json::object();
    for (const auto& [level, entries] : chain.levels) {
        json list = json::array();
        for (const auto& entry : entries)
            list.push_back(json{{"concept_id", entry.concept_id},
                                {"contribution", entry.contribution},
                                {"presence", entry.presence}});
        levels[std::string(level_name(level))] = std::move(list);
    }
    return json{{"schema", "chain.v1"},
                {"kind", "class"},
                {"class_id", chain.class_id},
                {"predicted_class", chain.predicted_class},
                {"members", chain.members},
                {"levels", levels}};
}

ClassChain class_from_json(const json& doc) {
    if (doc.value("schema", std::string()) != "chain.v1")
        throw ChainError("unsupported class-chain schema");
    ClassChain chain;
    chain.class_id = doc.at("class_id").get<std::string>();
    chain.predicted_class = doc.at("predicted_class").get<int>();
    for (const auto& member : doc.at("members"))
        chain.members.push_back(member.get<std::string>());
    for (const auto& [key, list] : doc.at("levels").items()) {
        std::vector<ClassChainEntry> entries;
        for (const auto& item : list)
            entries.push_back(
                ClassChainEntry{item.at("concept_id").get<std::string>(),
                                item.at("contribution").get<double>(),
                                item.at("presence").get<int>()});
        chain.levels[parse_level(key)] = std::move(entries);
    }
    return chain;
}

std::vector<std::string> maximal_contribution_path(const ChainTree& tree) {
    std::vector<std::string> path;
    const ChainNode* node = &tree.root;
    path.push_back(node->concept_id);
    while (!node->children.empty()) {
        const ChainNode* best = &node->children.front();
        for (const auto& child : node->children)
            if (child.contribution > best->contribution) best = &child;
        path.push_back(best->concept_id);
        node = best;
    }
    return path;
}

}  // namespace cchain::chain
