#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace cchain {

/// Dense rank-3 activation tensor, (channels, height, width), row-major
/// within a channel. Vector-shaped activations use height = width = 1.
class Tensor {
public:
    Tensor() = default;

    Tensor(int channels, int height, int width, double fill = 0.0)
        : channels_(channels), height_(height), width_(width),
          data_(static_cast<std::size_t>(channels) * height * width, fill) {
        if (channels < 0 || height < 0 || width < 0)
            throw std::invalid_argument("Tensor: negative dimension");
    }

    static Tensor from_vector(std::vector<double> values) {
        Tensor t;
        t.channels_ = static_cast<int>(values.size());
        t.height_ = 1;
        t.width_ = 1;
        t.data_ = std::move(values);
        return t;
    }

    int channels() const { return channels_; }
    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return data_.size(); }

    double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
    double at(int c, int y, int x) const { return data_[index(c, y, x)]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    std::span<double> channel(int c) {
        return std::span<double>(data_).subspan(
            static_cast<std::size_t>(c) * height_ * width_,
            static_cast<std::size_t>(height_) * width_);
    }
    std::span<const double> channel(int c) const {
        return std::span<const double>(data_).subspan(
            static_cast<std::size_t>(c) * height_ * width_,
            static_cast<std::size_t>(height_) * width_);
    }

    double channel_mean(int c) const {
        const auto ch = channel(c);
        double sum = 0.0;
        for (double v : ch) sum += v;
        return sum / static_cast<double>(ch.size());
    }

    bool same_shape(const Tensor& other) const {
        return channels_ == other.channels_ && height_ == other.height_ &&
               width_ == other.width_;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const Tensor& other) const {
        return same_shape(other) && data_ == other.data_;
    }

private:
    std::size_t index(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
    }

    int channels_ = 0;
    int height_ = 0;
    int width_ = 0;
    std::vector<double> data_;
};

}  // namespace cchain
