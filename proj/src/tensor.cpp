#include "psmt/tensor.hpp"

#include <algorithm>

#include "psmt/error.hpp"

namespace psmt {

std::string to_string(const Shape& s) {
    return std::to_string(s.n) + "x" + std::to_string(s.c) + "x" + std::to_string(s.h) + "x" +
           std::to_string(s.w);
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {}

std::span<double> Tensor::sample(int n) {
    return {data_.data() + static_cast<std::size_t>(n) * shape_.sample(), shape_.sample()};
}

std::span<const double> Tensor::sample(int n) const {
    return {data_.data() + static_cast<std::size_t>(n) * shape_.sample(), shape_.sample()};
}

Tensor Tensor::slice(int n) const {
    Tensor out({1, shape_.c, shape_.h, shape_.w});
    auto src = sample(n);
    std::copy(src.begin(), src.end(), out.data());
    return out;
}

void Tensor::set_sample(int n, const Tensor& single) {
    if (single.shape().c != shape_.c || single.shape().h != shape_.h ||
        single.shape().w != shape_.w) {
        throw ConfigError("set_sample: shape " + to_string(single.shape()) +
                          " does not fit batch " + to_string(shape_));
    }
    std::copy(single.data(), single.data() + shape_.sample(), sample(n).begin());
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor stack(std::span<const Tensor> samples) {
    if (samples.empty()) return {};
    Shape s = samples.front().shape();
    int total = 0;
    for (const auto& t : samples) {
        const auto& ts = t.shape();
        if (ts.c != s.c || ts.h != s.h || ts.w != s.w) {
            throw ConfigError("stack: shape " + to_string(ts) + " differs from " + to_string(s));
        }
        total += ts.n;
    }
    Tensor out({total, s.c, s.h, s.w});
    double* dst = out.data();
    for (const auto& t : samples) dst = std::copy(t.data(), t.data() + t.size(), dst);
    return out;
}

}  // namespace psmt
