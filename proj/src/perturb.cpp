#include "cchain/perturb.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cchain/parallel.hpp"
#include "cchain/rng.hpp"

namespace cchain::perturb {

using nlohmann::json;

void GateSamplerConfig::validate() const {
    if (num_samples < 1)
        throw PerturbError("gate sampler: num_samples must be >= 1");
    if (!(keep_probability > 0.0 && keep_probability <= 1.0))
        throw PerturbError("gate sampler: keep_probability must be in (0,1]");
}

std::vector<net::GateVector> sample_gates(const GateSamplerConfig& config,
                                          int num_units) {
    config.validate();
    if (num_units < 1) throw PerturbError("gate sampler: num_units must be >= 1");
    rng::Rng gen(config.seed);
    std::vector<net::GateVector> out;
    out.reserve(static_cast<std::size_t>(config.num_samples));
    for (int n = 0; n < config.num_samples; ++n) {
        if (n == 0 && config.include_all_ones) {
            out.push_back(net::all_open_gates(num_units));
            continue;
        }
        net::GateVector gates(static_cast<std::size_t>(num_units), 0);
        for (auto& g : gates)
            g = gen.bernoulli(config.keep_probability) ? 1 : 0;
        out.push_back(std::move(gates));
    }
    return out;
}

double proximity_weight(const net::GateVector& gates, double sigma) {
    if (sigma <= 0.0) throw PerturbError("proximity_weight: sigma must be > 0");
    double sq = 0.0;
    for (auto g : gates) {
        const double d = static_cast<double>(g) - 1.0;
        sq += d * d;
    }
    return std::exp(-sq / (sigma * sigma));
}

double default_sigma(int num_units) {
    return std::sqrt(static_cast<double>(num_units)) / 2.0;
}

int default_num_samples(int num_units) {
    return std::max(10 * num_units, 200);
}

double concept_response(const net::NetworkSpec& net, const Tensor& input,
                        const net::GateVector& gates,
                        const std::string& gate_layer,
                        const harmonize::HarmonizingWeights& entry,
                        const std::string& deep_layer) {
    if (entry.concept.layer != deep_layer)
        throw PerturbError("bank entry belongs to layer '" +
                           entry.concept.layer + "', expected '" + deep_layer +
                           "'");
    const auto acts = net::forward_with_gates(net, input, gate_layer, gates);
    return harmonize::concept_response_value(entry, acts.at(deep_layer));
}

PerturbationDataset generate_perturbation_dataset(
    const net::NetworkSpec& net, const Tensor& input,
    const std::string& shallow_layer, const std::string& deep_layer,
    const harmonize::ConceptBank& bank, const GateSamplerConfig& sampler,
    double sigma, int jobs) {
    if (bank.empty()) throw PerturbError("perturbation dataset: empty bank");
    if (bank.layer() != deep_layer)
        throw PerturbError("bank is on layer '" + bank.layer() +
                           "', expected deep layer '" + deep_layer + "'");
    if (net.layer_index(shallow_layer) >= net.layer_index(deep_layer))
        throw PerturbError("shallow layer must precede deep layer");

    const int units = net.channels_of(shallow_layer);
    PerturbationDataset dataset;
    dataset.shallow_layer = shallow_layer;
    dataset.deep_layer = deep_layer;
    dataset.deep_level = bank.concepts().front().concept.level;
    dataset.sampler = sampler;
    dataset.sigma = sigma > 0.0 ? sigma : default_sigma(units);

    const auto gates = sample_gates(sampler, units);
    dataset.records.resize(gates.size());
    parallel_for(gates.size(), jobs, [&](std::size_t n) {
        PerturbationRecord rec;
        rec.gates = gates[n];
        const auto acts =
            net::forward_with_gates(net, input, shallow_layer, rec.gates);
        rec.shallow_gap = net::gap(acts.at(shallow_layer));
        const auto& deep_act = acts.at(deep_layer);
        for (const auto& entry : bank.concepts())
            rec.concept_responses[entry.concept.concept_id] =
                harmonize::concept_response_value(entry, deep_act);
        rec.proximity = proximity_weight(rec.gates, dataset.sigma);
        dataset.records[n] = std::move(rec);
    });
    return dataset;
}

std::string to_jsonl(const PerturbationDataset& dataset) {
    std::ostringstream out;
    json header;
    header["shallow_layer"] = dataset.shallow_layer;
    header["deep_layer"] = dataset.deep_layer;
    header["deep_level"] = std::string(level_name(dataset.deep_level));
    header["sigma"] = dataset.sigma;
    header["sampler"] = {{"num_samples", dataset.sampler.num_samples},
                         {"keep_probability", dataset.sampler.keep_probability},
                         {"seed", dataset.sampler.seed},
                         {"include_all_ones", dataset.sampler.include_all_ones}};
    out << header.dump() << "\n";
    for (const auto& rec : dataset.records) {
        json line;
        line["gates"] = json::array();
        for (auto g : rec.gates) line["gates"].push_back(static_cast<int>(g));
        line["x"] = std::vector<double>(
            rec.shallow_gap.data(),
            rec.shallow_gap.data() + rec.shallow_gap.size());
        line["y"] = rec.concept_responses;
        line["h"] = rec.proximity;
        out << line.dump() << "\n";
    }
    return out.str();
}

PerturbationDataset from_jsonl(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line))
        throw PerturbError("perturbation dataset: empty stream");
    json header = json::parse(line);
    PerturbationDataset dataset;
    dataset.shallow_layer = header.at("shallow_layer").get<std::string>();
    dataset.deep_layer = header.at("deep_layer").get<std::string>();
    dataset.deep_level =
        parse_level(header.value("deep_level", std::string("scene")));
    dataset.sigma = header.at("sigma").get<double>();
    const auto& sampler = header.at("sampler");
    dataset.sampler.num_samples = sampler.at("num_samples").get<int>();
    dataset.sampler.keep_probability =
        sampler.at("keep_probability").get<double>();
    dataset.sampler.seed = sampler.at("seed").get<std::uint64_t>();
    dataset.sampler.include_all_ones =
        sampler.at("include_all_ones").get<bool>();

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json doc = json::parse(line);
        PerturbationRecord rec;
        for (const auto& g : doc.at("gates"))
            rec.gates.push_back(static_cast<std::uint8_t>(g.get<int>()));
        const auto& x = doc.at("x");
        rec.shallow_gap.resize(static_cast<Eigen::Index>(x.size()));
        for (std::size_t i = 0; i < x.size(); ++i)
            rec.shallow_gap(static_cast<Eigen::Index>(i)) = x[i].get<double>();
        for (const auto& [key, value] : doc.at("y").items())
            rec.concept_responses[key] = value.get<double>();
        rec.proximity = doc.at("h").get<double>();
        dataset.records.push_back(std::move(rec));
    }
    return dataset;
}

void save_jsonl(const PerturbationDataset& dataset,
                const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out)
        throw PerturbError("cannot write dataset: " + path.string());
    out << to_jsonl(dataset);
}

PerturbationDataset load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw PerturbError("cannot open dataset: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return from_jsonl(buffer.str());
}

}  // namespace cchain::perturb
