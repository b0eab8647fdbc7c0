#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "cchain/levels.hpp"
#include "cchain/tensor.hpp"

namespace cchain::net {

struct NetworkError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class LayerKind { Conv, Relu, MaxPool, Gap, Dense };

std::string_view layer_kind_name(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

/// Weights laid out row-major (out_channel, in_channel, ky, kx).
struct ConvParams {
    int out_channels = 0;
    int in_channels = 0;
    int kernel_h = 0;
    int kernel_w = 0;
    int stride = 1;
    int padding = 0;
    std::vector<double> weights;
    std::vector<double> bias;  // empty means no bias
};

struct PoolParams {
    int kernel_h = 0;
    int kernel_w = 0;
    int stride = 0;  // 0 means stride = kernel
};

/// Weights laid out row-major (out_feature, in_feature); the input tensor
/// is flattened in (channel, y, x) order.
struct DenseParams {
    int out_features = 0;
    int in_features = 0;
    std::vector<double> weights;
    std::vector<double> bias;  // empty means no bias
};

struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::Relu;
    std::variant<std::monostate, ConvParams, PoolParams, DenseParams> params;
};

struct Shape {
    int channels = 0;
    int height = 0;
    int width = 0;
    bool operator==(const Shape&) const = default;
};

/// Immutable layered network. Construction validates layer-name uniqueness,
/// shape compatibility of consecutive layers, and the level map (levels must
/// reference existing layers, ordered deep to shallow with scene deepest).
class NetworkSpec {
public:
    static NetworkSpec create(Shape input_shape, std::vector<LayerSpec> layers,
                              std::map<Level, std::string> level_map);

    const Shape& input_shape() const { return input_shape_; }
    const std::vector<LayerSpec>& layers() const { return layers_; }
    const std::map<Level, std::string>& level_map() const { return level_map_; }

    bool has_layer(const std::string& name) const;
    const LayerSpec& layer(const std::string& name) const;
    int layer_index(const std::string& name) const;

    /// Output shape of a named layer, precomputed at validation time.
    const Shape& shape_of(const std::string& name) const;
    int channels_of(const std::string& name) const {
        return shape_of(name).channels;
    }

    /// Layer mapped to a semantic level; throws if the level is unmapped.
    const std::string& layer_for(Level level) const;
    bool has_level(Level level) const { return level_map_.count(level) > 0; }

private:
    NetworkSpec() = default;
    Shape input_shape_;
    std::vector<LayerSpec> layers_;
    std::map<Level, std::string> level_map_;
    std::map<std::string, int> index_;
    std::vector<Shape> output_shapes_;
};

/// Binary per-channel gate vector; 0 blocks a channel, 1 passes it.
using GateVector = std::vector<std::uint8_t>;

GateVector all_open_gates(int n);
bool gates_all_open(const GateVector& gates);

struct ActivationMap {
    std::string layer_name;
    Tensor data;
};

using Activations = std::map<std::string, ActivationMap>;

/// Parses and validates the JSON network-spec format:
///   {"input_shape":[C,H,W], "level_map":{...},
///    "layers":[{"name","kind","params":{...},"weights":[...]}]}
NetworkSpec load_network(const std::filesystem::path& path);
NetworkSpec parse_network(const std::string& json_text);

/// Plain forward pass. Returns the activation of every named layer.
/// Pure: identical inputs produce bit-identical activations.
Activations forward(const NetworkSpec& net, const Tensor& input);

/// Forward pass with a gate layer attached to `gate_layer`: channels whose
/// gate is 0 are zeroed on that layer's output before propagation, weights
/// elsewhere untouched. All-ones gates reproduce forward() exactly.
/// Gating applies to the layer's declared output, i.e. after that layer's
/// own computation (post-nonlinearity when the layer is a relu).
Activations forward_with_gates(const NetworkSpec& net, const Tensor& input,
                               const std::string& gate_layer,
                               const GateVector& gates);

/// Global average pooling: per-channel arithmetic mean over spatial positions.
Eigen::VectorXd gap(const ActivationMap& act);
Eigen::VectorXd gap(const Tensor& t);

/// Argmax over the flattened final-layer activation (ties -> lowest index).
int predicted_class(const NetworkSpec& net, const Activations& acts);

}  // namespace cchain::net
