#include "cchain/network.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cchain::net {

using nlohmann::json;

std::string_view layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv: return "conv";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::Gap: return "gap";
        case LayerKind::Dense: return "dense";
    }
    throw std::logic_error("invalid layer kind");
}

LayerKind parse_layer_kind(std::string_view name) {
    if (name == "conv") return LayerKind::Conv;
    if (name == "relu") return LayerKind::Relu;
    if (name == "maxpool") return LayerKind::MaxPool;
    if (name == "gap") return LayerKind::Gap;
    if (name == "dense") return LayerKind::Dense;
    throw NetworkError("unknown layer kind: " + std::string(name));
}

namespace {

Shape layer_output_shape(const LayerSpec& layer, const Shape& in,
                         const std::string& context) {
    switch (layer.kind) {
        case LayerKind::Conv: {
            const auto& p = std::get<ConvParams>(layer.params);
            if (p.in_channels != in.channels)
                throw NetworkError(context + ": conv expects " +
                                   std::to_string(p.in_channels) +
                                   " input channels, got " +
                                   std::to_string(in.channels));
            const int oh = (in.height + 2 * p.padding - p.kernel_h) / p.stride + 1;
            const int ow = (in.width + 2 * p.padding - p.kernel_w) / p.stride + 1;
            if (oh < 1 || ow < 1)
                throw NetworkError(context + ": conv output would be empty");
            return {p.out_channels, oh, ow};
        }
        case LayerKind::Relu:
            return in;
        case LayerKind::MaxPool: {
            const auto& p = std::get<PoolParams>(layer.params);
            const int stride = p.stride > 0 ? p.stride : p.kernel_h;
            if (in.height < p.kernel_h || in.width < p.kernel_w)
                throw NetworkError(context + ": pool window larger than input");
            return {in.channels, (in.height - p.kernel_h) / stride + 1,
                    (in.width - p.kernel_w) / stride + 1};
        }
        case LayerKind::Gap:
            return {in.channels, 1, 1};
        case LayerKind::Dense: {
            const auto& p = std::get<DenseParams>(layer.params);
            const int flat = in.channels * in.height * in.width;
            if (p.in_features != flat)
                throw NetworkError(context + ": dense expects " +
                                   std::to_string(p.in_features) +
                                   " inputs, got " + std::to_string(flat));
            return {p.out_features, 1, 1};
        }
    }
    throw std::logic_error("invalid layer kind");
}

void validate_layer_params(const LayerSpec& layer) {
    const std::string ctx = "layer '" + layer.name + "'";
    switch (layer.kind) {
        case LayerKind::Conv: {
            if (!std::holds_alternative<ConvParams>(layer.params))
                throw NetworkError(ctx + ": conv layer missing parameters");
            const auto& p = std::get<ConvParams>(layer.params);
            if (p.out_channels <= 0 || p.in_channels <= 0 || p.kernel_h <= 0 ||
                p.kernel_w <= 0)
                throw NetworkError(ctx + ": invalid conv dimensions");
            if (p.stride <= 0 || p.padding < 0)
                throw NetworkError(ctx + ": invalid conv stride/padding");
            const std::size_t expect = static_cast<std::size_t>(p.out_channels) *
                                       p.in_channels * p.kernel_h * p.kernel_w;
            if (p.weights.size() != expect)
                throw NetworkError(ctx + ": conv weight tensor has " +
                                   std::to_string(p.weights.size()) +
                                   " entries, expected " + std::to_string(expect));
            if (!p.bias.empty() &&
                p.bias.size() != static_cast<std::size_t>(p.out_channels))
                throw NetworkError(ctx + ": conv bias length mismatch");
            break;
        }
        case LayerKind::MaxPool: {
            if (!std::holds_alternative<PoolParams>(layer.params))
                throw NetworkError(ctx + ": maxpool layer missing parameters");
            const auto& p = std::get<PoolParams>(layer.params);
            if (p.kernel_h <= 0 || p.kernel_w <= 0 || p.stride < 0)
                throw NetworkError(ctx + ": invalid pool parameters");
            break;
        }
        case LayerKind::Dense: {
            if (!std::holds_alternative<DenseParams>(layer.params))
                throw NetworkError(ctx + ": dense layer missing parameters");
            const auto& p = std::get<DenseParams>(layer.params);
            if (p.out_features <= 0 || p.in_features <= 0)
                throw NetworkError(ctx + ": invalid dense dimensions");
            const std::size_t expect =
                static_cast<std::size_t>(p.out_features) * p.in_features;
            if (p.weights.size() != expect)
                throw NetworkError(ctx + ": dense weight matrix has " +
                                   std::to_string(p.weights.size()) +
                                   " entries, expected " + std::to_string(expect));
            if (!p.bias.empty() &&
                p.bias.size() != static_cast<std::size_t>(p.out_features))
                throw NetworkError(ctx + ": dense bias length mismatch");
            break;
        }
        case LayerKind::Relu:
        case LayerKind::Gap:
            break;
    }
}

}  // namespace

NetworkSpec NetworkSpec::create(Shape input_shape, std::vector<LayerSpec> layers,
                                std::map<Level, std::string> level_map) {
    if (input_shape.channels <= 0 || input_shape.height <= 0 ||
        input_shape.width <= 0)
        throw NetworkError("input_shape must be positive");
    if (layers.empty()) throw NetworkError("network has no layers");

    NetworkSpec net;
    net.input_shape_ = input_shape;
    net.layers_ = std::move(layers);
    net.level_map_ = std::move(level_map);

    Shape shape = input_shape;
    for (std::size_t i = 0; i < net.layers_.size(); ++i) {
        const LayerSpec& layer = net.layers_[i];
        if (layer.name.empty()) throw NetworkError("layer with empty name");
        if (net.index_.count(layer.name))
            throw NetworkError("duplicate layer name: " + layer.name);
        validate_layer_params(layer);
        shape = layer_output_shape(layer, shape, "layer '" + layer.name + "'");
        net.index_[layer.name] = static_cast<int>(i);
        net.output_shapes_.push_back(shape);
    }

    int prev_index = static_cast<int>(net.layers_.size());
    for (Level level : kLevelsDeepToShallow) {
        auto it = net.level_map_.find(level);
        if (it == net.level_map_.end()) continue;
        auto idx = net.index_.find(it->second);
        if (idx == net.index_.end())
            throw NetworkError("level_map references unknown layer: " +
                               it->second);
        if (idx->second >= prev_index)
            throw NetworkError(
                "level_map must map deeper levels to deeper layers (scene "
                "deepest); violated at level " +
                std::string(level_name(level)));
        prev_index = idx->second;
    }
    return net;
}

bool NetworkSpec::has_layer(const std::string& name) const {
    return index_.count(name) > 0;
}

const LayerSpec& NetworkSpec::layer(const std::string& name) const {
    return layers_[static_cast<std::size_t>(layer_index(name))];
}

int NetworkSpec::layer_index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw NetworkError("unknown layer: " + name);
    return it->second;
}

const Shape& NetworkSpec::shape_of(const std::string& name) const {
    return output_shapes_[static_cast<std::size_t>(layer_index(name))];
}

const std::string& NetworkSpec::layer_for(Level level) const {
    auto it = level_map_.find(level);
    if (it == level_map_.end())
        throw NetworkError("no layer mapped to level " +
                           std::string(level_name(level)));
    return it->second;
}

GateVector all_open_gates(int n) {
    return GateVector(static_cast<std::size_t>(n), 1);
}

bool gates_all_open(const GateVector& gates) {
    return std::all_of(gates.begin(), gates.end(),
                       [](std::uint8_t g) { return g == 1; });
}

// ---------------------------------------------------------------------------
// Forward evaluation
// ---------------------------------------------------------------------------

namespace {

Tensor conv_forward(const ConvParams& p, const Tensor& in) {
    const int oh = (in.height() + 2 * p.padding - p.kernel_h) / p.stride + 1;
    const int ow = (in.width() + 2 * p.padding - p.kernel_w) / p.stride + 1;
    Tensor out(p.out_channels, oh, ow);
    const std::size_t per_out =
        static_cast<std::size_t>(p.in_channels) * p.kernel_h * p.kernel_w;
    for (int oc = 0; oc < p.out_channels; ++oc) {
        const double* w = p.weights.data() + per_out * oc;
        const double bias = p.bias.empty() ? 0.0 : p.bias[oc];
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double acc = bias;
                for (int ic = 0; ic < p.in_channels; ++ic) {
                    for (int ky = 0; ky < p.kernel_h; ++ky) {
                        const int iy = oy * p.stride - p.padding + ky;
                        if (iy < 0 || iy >= in.height()) continue;
                        for (int kx = 0; kx < p.kernel_w; ++kx) {
                            const int ix = ox * p.stride - p.padding + kx;
                            if (ix < 0 || ix >= in.width()) continue;
                            acc += w[(static_cast<std::size_t>(ic) * p.kernel_h +
                                      ky) * p.kernel_w + kx] *
                                   in.at(ic, iy, ix);
                        }
                    }
                }
                out.at(oc, oy, ox) = acc;
            }
        }
    }
    return out;
}

Tensor relu_forward(const Tensor& in) {
    Tensor out = in;
    for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor maxpool_forward(const PoolParams& p, const Tensor& in) {
    const int stride = p.stride > 0 ? p.stride : p.kernel_h;
    const int oh = (in.height() - p.kernel_h) / stride + 1;
    const int ow = (in.width() - p.kernel_w) / stride + 1;
    Tensor out(in.channels(), oh, ow);
    for (int c = 0; c < in.channels(); ++c) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double best = in.at(c, oy * stride, ox * stride);
                for (int ky = 0; ky < p.kernel_h; ++ky)
                    for (int kx = 0; kx < p.kernel_w; ++kx)
                        best = std::max(best, in.at(c, oy * stride + ky,
                                                    ox * stride + kx));
                out.at(c, oy, ox) = best;
            }
        }
    }
    return out;
}

Tensor gap_forward(const Tensor& in) {
    Tensor out(in.channels(), 1, 1);
    for (int c = 0; c < in.channels(); ++c)
        out.at(c, 0, 0) = in.channel_mean(c);
    return out;
}

Tensor dense_forward(const DenseParams& p, const Tensor& in) {
    Tensor out(p.out_features, 1, 1);
    const auto flat = in.data();
    for (int o = 0; o < p.out_features; ++o) {
        double acc = p.bias.empty() ? 0.0 : p.bias[o];
        const double* w = p.weights.data() +
                          static_cast<std::size_t>(o) * p.in_features;
        for (int i = 0; i < p.in_features; ++i) acc += w[i] * flat[i];
        out.at(o, 0, 0) = acc;
    }
    return out;
}

Tensor apply_layer(const LayerSpec& layer, const Tensor& in) {
    switch (layer.kind) {
        case LayerKind::Conv:
            return conv_forward(std::get<ConvParams>(layer.params), in);
        case LayerKind::Relu:
            return relu_forward(in);
        case LayerKind::MaxPool:
            return maxpool_forward(std::get<PoolParams>(layer.params), in);
        case LayerKind::Gap:
            return gap_forward(in);
        case LayerKind::Dense:
            return dense_forward(std::get<DenseParams>(layer.params), in);
    }
    throw std::logic_error("invalid layer kind");
}

Activations run_forward(const NetworkSpec& net, const Tensor& input,
                        const std::string* gate_layer,
                        const GateVector* gates) {
    const Shape in_shape{input.channels(), input.height(), input.width()};
    if (!(in_shape == net.input_shape()))
        throw NetworkError("input shape does not match network input_shape");
    if (gate_layer) {
        const int units = net.channels_of(*gate_layer);  // throws if unknown
        if (gates->size() != static_cast<std::size_t>(units))
            throw NetworkError("gate vector length " +
                               std::to_string(gates->size()) +
                               " does not match layer channel count " +
                               std::to_string(units));
    }

    Activations acts;
    Tensor current = input;
    for (const LayerSpec& layer : net.layers()) {
        current = apply_layer(layer, current);
        if (gate_layer && layer.name == *gate_layer) {
            for (int c = 0; c < current.channels(); ++c) {
                if ((*gates)[static_cast<std::size_t>(c)] == 0) {
                    for (double& v : current.channel(c)) v = 0.0;
                }
            }
        }
        if (!current.all_finite())
            throw NetworkError("non-finite activation at layer " + layer.name);
        acts.emplace(layer.name, ActivationMap{layer.name, current});
    }
    return acts;
}

}  // namespace

Activations forward(const NetworkSpec& net, const Tensor& input) {
    return run_forward(net, input, nullptr, nullptr);
}

Activations forward_with_gates(const NetworkSpec& net, const Tensor& input,
                               const std::string& gate_layer,
                               const GateVector& gates) {
    return run_forward(net, input, &gate_layer, &gates);
}

Eigen::VectorXd gap(const Tensor& t) {
    Eigen::VectorXd v(t.channels());
    for (int c = 0; c < t.channels(); ++c) v(c) = t.channel_mean(c);
    return v;
}

Eigen::VectorXd gap(const ActivationMap& act) { return gap(act.data); }

int predicted_class(const NetworkSpec& net, const Activations& acts) {
    const std::string& last = net.layers().back().name;
    const Tensor& out = acts.at(last).data;
    const auto flat = out.data();
    int best = 0;
    for (std::size_t i = 1; i < flat.size(); ++i)
        if (flat[i] > flat[best]) best = static_cast<int>(i);
    return best;
}

// ---------------------------------------------------------------------------
// JSON loading
// ---------------------------------------------------------------------------

namespace {

// Flattens a nested JSON array into `out` and returns its dimensions,
// checking rectangularity along the way.
void flatten_weights(const json& node, std::vector<double>& out,
                     std::vector<std::size_t>& dims, std::size_t depth,
                     const std::string& ctx) {
    if (node.is_array()) {
        if (depth == dims.size()) {
            dims.push_back(node.size());
        } else if (dims[depth] != node.size()) {
            throw NetworkError(ctx + ": ragged weight array");
        }
        for (const auto& child : node)
            flatten_weights(child, out, dims, depth + 1, ctx);
    } else if (node.is_number()) {
        if (depth != dims.size())
            throw NetworkError(ctx + ": inconsistent weight nesting depth");
        out.push_back(node.get<double>());
    } else {
        throw NetworkError(ctx + ": weight entries must be numbers");
    }
}

std::vector<double> number_list(const json& node, const std::string& ctx) {
    if (!node.is_array()) throw NetworkError(ctx + ": expected an array");
    std::vector<double> out;
    out.reserve(node.size());
    for (const auto& v : node) {
        if (!v.is_number()) throw NetworkError(ctx + ": expected numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

LayerSpec parse_layer(const json& j) {
    LayerSpec layer;
    if (!j.contains("name") || !j["name"].is_string())
        throw NetworkError("layer missing a string 'name'");
    layer.name = j["name"].get<std::string>();
    const std::string ctx = "layer '" + layer.name + "'";
    if (!j.contains("kind") || !j["kind"].is_string())
        throw NetworkError(ctx + ": missing 'kind'");
    layer.kind = parse_layer_kind(j["kind"].get<std::string>());

    const json params = j.value("params", json::object());

    switch (layer.kind) {
        case LayerKind::Conv: {
            ConvParams p;
            std::vector<double> flat;
            std::vector<std::size_t> dims;
            if (!j.contains("weights"))
                throw NetworkError(ctx + ": conv layer missing 'weights'");
            flatten_weights(j["weights"], flat, dims, 0, ctx);
            if (dims.size() != 4)
                throw NetworkError(ctx + ": conv weights must have rank 4 "
                                         "(out, in, ky, kx), got rank " +
                                   std::to_string(dims.size()));
            p.out_channels = static_cast<int>(dims[0]);
            p.in_channels = static_cast<int>(dims[1]);
            p.kernel_h = static_cast<int>(dims[2]);
            p.kernel_w = static_cast<int>(dims[3]);
            p.weights = std::move(flat);
            p.stride = params.value("stride", 1);
            p.padding = params.value("padding", 0);
            if (params.contains("bias"))
                p.bias = number_list(params["bias"], ctx + " bias");
            layer.params = std::move(p);
            break;
        }
        case LayerKind::MaxPool: {
            PoolParams p;
            if (!params.contains("kernel"))
                throw NetworkError(ctx + ": maxpool missing params.kernel");
            const auto kernel = number_list(params["kernel"], ctx + " kernel");
            if (kernel.size() != 2)
                throw NetworkError(ctx + ": maxpool kernel must be [ky,kx]");
            p.kernel_h = static_cast<int>(kernel[0]);
            p.kernel_w = static_cast<int>(kernel[1]);
            p.stride = params.value("stride", 0);
            layer.params = p;
            break;
        }
        case LayerKind::Dense: {
            DenseParams p;
            std::vector<double> flat;
            std::vector<std::size_t> dims;
            if (!j.contains("weights"))
                throw NetworkError(ctx + ": dense layer missing 'weights'");
            flatten_weights(j["weights"], flat, dims, 0, ctx);
            if (dims.size() != 2)
                throw NetworkError(ctx + ": dense weights must have rank 2 "
                                         "(out, in), got rank " +
                                   std::to_string(dims.size()));
            p.out_features = static_cast<int>(dims[0]);
            p.in_features = static_cast<int>(dims[1]);
            p.weights = std::move(flat);
            if (params.contains("bias"))
                p.bias = number_list(params["bias"], ctx + " bias");
            layer.params = std::move(p);
            break;
        }
        case LayerKind::Relu:
        case LayerKind::Gap:
            break;
    }
    return layer;
}

}  // namespace

NetworkSpec parse_network(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw NetworkError(std::string("network spec parse failure: ") +
                           e.what());
    }
    if (!doc.is_object()) throw NetworkError("network spec must be an object");
    if (!doc.contains("input_shape") || !doc["input_shape"].is_array() ||
        doc["input_shape"].size() != 3)
        throw NetworkError("network spec needs input_shape [C,H,W]");
    Shape shape{doc["input_shape"][0].get<int>(),
                doc["input_shape"][1].get<int>(),
                doc["input_shape"][2].get<int>()};

    std::map<Level, std::string> level_map;
    if (doc.contains("level_map")) {
        for (const auto& [key, value] : doc["level_map"].items())
            level_map[parse_level(key)] = value.get<std::string>();
    }

    if (!doc.contains("layers") || !doc["layers"].is_array())
        throw NetworkError("network spec needs a 'layers' array");
    std::vector<LayerSpec> layers;
    for (const auto& item : doc["layers"]) layers.push_back(parse_layer(item));

    return NetworkSpec::create(shape, std::move(layers), std::move(level_map));
}

NetworkSpec load_network(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw NetworkError("cannot open network spec: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_network(buffer.str());
}

}  // namespace cchain::net
