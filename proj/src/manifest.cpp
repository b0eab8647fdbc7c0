#include "cchain/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cchain {

using nlohmann::json;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream stream(line);
    while (std::getline(stream, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

}  // namespace

ConceptManifest ConceptManifest::load(const std::filesystem::path& csv_path) {
    return load(csv_path, csv_path.parent_path() / "tensors");
}

ConceptManifest ConceptManifest::load(const std::filesystem::path& csv_path,
                                      std::filesystem::path tensor_dir) {
    std::ifstream in(csv_path);
    if (!in) throw ManifestError("cannot open manifest: " + csv_path.string());

    ConceptManifest manifest;
    manifest.tensor_dir_ = std::move(tensor_dir);

    std::string line;
    bool saw_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!saw_header) {
            if (line != "sample_id,level,concept_id,label,source")
                throw ManifestError("manifest header mismatch at line " +
                                    std::to_string(line_no) + ": " + line);
            saw_header = true;
            continue;
        }
        const auto fields = split_csv_line(line);
        if (fields.size() != 5)
            throw ManifestError("manifest line " + std::to_string(line_no) +
                                " has " + std::to_string(fields.size()) +
                                " fields, expected 5");
        ManifestRow row;
        row.sample_id = fields[0];
        row.level = parse_level(fields[1]);
        row.concept_id = fields[2];
        if (fields[3] != "0" && fields[3] != "1")
            throw ManifestError("manifest line " + std::to_string(line_no) +
                                ": label must be 0 or 1");
        row.label = fields[3] == "1" ? 1 : 0;
        row.source = fields[4];
        manifest.samples_.insert(row.sample_id);
        manifest.rows_.push_back(std::move(row));
    }
    if (!saw_header) throw ManifestError("manifest has no header row");
    return manifest;
}

std::vector<std::string> ConceptManifest::concept_ids(Level level) const {
    std::set<std::string> ids;
    for (const auto& row : rows_)
        if (row.level == level) ids.insert(row.concept_id);
    return {ids.begin(), ids.end()};
}

std::vector<const ManifestRow*> ConceptManifest::rows_for(
    Level level, const std::string& concept_id) const {
    std::vector<const ManifestRow*> out;
    for (const auto& row : rows_)
        if (row.level == level && row.concept_id == concept_id)
            out.push_back(&row);
    return out;
}

bool ConceptManifest::has_sample(const std::string& sample_id) const {
    return samples_.count(sample_id) > 0;
}

std::vector<std::string> ConceptManifest::sample_ids() const {
    return {samples_.begin(), samples_.end()};
}

Tensor ConceptManifest::load_tensor(const std::string& sample_id) const {
    return load_tensor_json(tensor_dir_ / (sample_id + ".json"));
}

Tensor load_tensor_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ManifestError("cannot open tensor file: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw ManifestError("tensor file parse failure (" + path.string() +
                            "): " + e.what());
    }
    if (!doc.contains("shape") || !doc["shape"].is_array() ||
        doc["shape"].size() != 3)
        throw ManifestError("tensor file needs shape [C,H,W]: " + path.string());
    const int c = doc["shape"][0].get<int>();
    const int h = doc["shape"][1].get<int>();
    const int w = doc["shape"][2].get<int>();
    const auto& data = doc["data"];
    if (!data.is_array() ||
        data.size() != static_cast<std::size_t>(c) * h * w)
        throw ManifestError("tensor data length mismatch: " + path.string());
    Tensor t(c, h, w);
    std::size_t i = 0;
    for (double& v : t.data()) v = data[i++].get<double>();
    return t;
}

void save_tensor_json(const Tensor& t, const std::filesystem::path& path) {
    json doc;
    doc["shape"] = {t.channels(), t.height(), t.width()};
    doc["data"] = std::vector<double>(t.data().begin(), t.data().end());
    std::ofstream out(path);
    if (!out) throw ManifestError("cannot write tensor file: " + path.string());
    out << doc.dump() << "\n";
}

const Tensor& SampleStore::input(const std::string& sample_id) {
    auto it = inputs_.find(sample_id);
    if (it == inputs_.end()) {
        if (!manifest_->has_sample(sample_id))
            throw ManifestError("unknown sample id: " + sample_id);
        it = inputs_.emplace(sample_id, manifest_->load_tensor(sample_id)).first;
    }
    return it->second;
}

const net::Activations& SampleStore::activations(const std::string& sample_id) {
    auto it = activations_.find(sample_id);
    if (it == activations_.end()) {
        it = activations_.emplace(sample_id, net::forward(*net_, input(sample_id)))
                 .first;
    }
    return it->second;
}

}  // namespace cchain
