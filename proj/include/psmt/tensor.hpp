#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace psmt {

// NCHW dimensions of a dense tensor.
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    [[nodiscard]] std::size_t size() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    [[nodiscard]] std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    [[nodiscard]] std::size_t sample() const { return static_cast<std::size_t>(c) * h * w; }

    friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

// Dense row-major NCHW tensor of doubles. Used for images, feature maps,
// logits and probability maps alike.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);

    [[nodiscard]] const Shape& shape() const { return shape_; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] bool empty() const { return data_.empty(); }

    [[nodiscard]] double* data() { return data_.data(); }
    [[nodiscard]] const double* data() const { return data_.data(); }
    [[nodiscard]] std::span<double> values() { return data_; }
    [[nodiscard]] std::span<const double> values() const { return data_; }

    double& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
    [[nodiscard]] double at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

    // Contiguous C*H*W block of one batch element.
    [[nodiscard]] std::span<double> sample(int n);
    [[nodiscard]] std::span<const double> sample(int n) const;

    // Single batch element as its own tensor (copy).
    [[nodiscard]] Tensor slice(int n) const;
    void set_sample(int n, const Tensor& single);

    void fill(double v);

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    [[nodiscard]] std::size_t index(int n, int c, int y, int x) const {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }

    Shape shape_{};
    std::vector<double> data_;
};

// Stack single-sample tensors of equal C,H,W into one batch.
Tensor stack(std::span<const Tensor> samples);

// Per-pixel scalar map for a batch (labels, confidences). Row-major N,H,W.
template <typename T>
struct PixelGrid {
    int n = 0;
    int h = 0;
    int w = 0;
    std::vector<T> values;

    PixelGrid() = default;
    PixelGrid(int n_, int h_, int w_, T fill = T{})
        : n(n_), h(h_), w(w_), values(static_cast<std::size_t>(n_) * h_ * w_, fill) {}

    [[nodiscard]] std::size_t size() const { return values.size(); }
    [[nodiscard]] std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    T& at(int b, int y, int x) { return values[(static_cast<std::size_t>(b) * h + y) * w + x]; }
    [[nodiscard]] const T& at(int b, int y, int x) const {
        return values[(static_cast<std::size_t>(b) * h + y) * w + x];
    }

    friend bool operator==(const PixelGrid&, const PixelGrid&) = default;
};

// Class indices in {0..Y-1}; the value Y marks an ignored pixel.
using LabelMap = PixelGrid<std::int32_t>;
using ConfidenceMap = PixelGrid<double>;

constexpr std::int32_t ignore_label(int num_classes) { return num_classes; }

template <typename T>
PixelGrid<T> stack_grids(std::span<const PixelGrid<T>> parts) {
    PixelGrid<T> out;
    if (parts.empty()) return out;
    out.h = parts.front().h;
    out.w = parts.front().w;
    for (const auto& p : parts) {
        out.n += p.n;
        out.values.insert(out.values.end(), p.values.begin(), p.values.end());
    }
    return out;
}

template <typename T>
PixelGrid<T> grid_slice(const PixelGrid<T>& g, int b) {
    PixelGrid<T> out(1, g.h, g.w);
    auto first = g.values.begin() + static_cast<std::ptrdiff_t>(b * g.plane());
    std::copy(first, first + static_cast<std::ptrdiff_t>(g.plane()), out.values.begin());
    return out;
}

}  // namespace psmt
