#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "cchain/levels.hpp"
#include "cchain/network.hpp"
#include "cchain/tensor.hpp"

namespace cchain {

struct ManifestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ManifestRow {
    std::string sample_id;
    Level level = Level::Color;
    std::string concept_id;
    int label = 0;  // 0 absent, 1 present
    std::string source;
};

/// Concept manifest: a CSV with header `sample_id,level,concept_id,label,source`
/// plus a sidecar directory of per-sample input tensors, one JSON file
/// `<sample_id>.json` of the form {"shape":[C,H,W],"data":[flat row-major]}.
/// The sidecar directory defaults to `tensors/` next to the CSV.
/// Lines starting with '#' are treated as comments.
class ConceptManifest {
public:
    static ConceptManifest load(const std::filesystem::path& csv_path);
    static ConceptManifest load(const std::filesystem::path& csv_path,
                                std::filesystem::path tensor_dir);

    const std::vector<ManifestRow>& rows() const { return rows_; }
    const std::filesystem::path& tensor_dir() const { return tensor_dir_; }

    /// Sorted unique concept ids labelled at a level.
    std::vector<std::string> concept_ids(Level level) const;

    /// Rows carrying a label for (level, concept_id), in file order.
    std::vector<const ManifestRow*> rows_for(Level level,
                                             const std::string& concept_id) const;

    bool has_sample(const std::string& sample_id) const;
    std::vector<std::string> sample_ids() const;  // sorted unique

    /// Loads the sample's input tensor from the sidecar directory.
    Tensor load_tensor(const std::string& sample_id) const;

private:
    std::vector<ManifestRow> rows_;
    std::set<std::string> samples_;
    std::filesystem::path tensor_dir_;
};

Tensor load_tensor_json(const std::filesystem::path& path);
void save_tensor_json(const Tensor& t, const std::filesystem::path& path);

/// Lazy per-sample cache of input tensors and forward activations over one
/// immutable network. Saves redundant forwards when many concepts share the
/// same samples.
class SampleStore {
public:
    SampleStore(const net::NetworkSpec& net, const ConceptManifest& manifest)
        : net_(&net), manifest_(&manifest) {}

    const Tensor& input(const std::string& sample_id);
    const net::Activations& activations(const std::string& sample_id);

private:
    const net::NetworkSpec* net_;
    const ConceptManifest* manifest_;
    std::map<std::string, Tensor> inputs_;
    std::map<std::string, net::Activations> activations_;
};

}  // namespace cchain
