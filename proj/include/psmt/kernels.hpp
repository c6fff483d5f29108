#pragma once

#include <span>

#include "psmt/tensor.hpp"

// Dense numeric kernels behind the segmentation model.
//
// Two implementations are kept side by side: `serial` is a direct,
// loop-for-loop reference used as the test oracle, `parallel` is the
// production path (im2col + SIMD inner loops, OpenMP over the batch).
// Both are deterministic for a fixed input regardless of thread count:
// every reduction runs in a fixed order.
namespace psmt::kernels {

struct ConvGeometry {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;
    int stride = 1;
    int pad = 1;

    [[nodiscard]] int out_size(int in) const { return (in + 2 * pad - kernel) / stride + 1; }
    [[nodiscard]] std::size_t patch() const {
        return static_cast<std::size_t>(in_channels) * kernel * kernel;
    }
    [[nodiscard]] std::size_t weight_size() const { return patch() * out_channels; }
};

enum class Backend { serial, parallel };

void set_backend(Backend b);
Backend backend();
const char* backend_name(Backend b);

// Weight layout [out][in][ky][kx]. `bias` may be empty. `y` must already
// have shape {N, out_channels, out_size(H), out_size(W)}; it is overwritten.
void conv2d_forward(const ConvGeometry& g, const Tensor& x, std::span<const double> weight,
                    std::span<const double> bias, Tensor& y);
// dx (preshaped like x) is overwritten with dL/dx.
void conv2d_backward_input(const ConvGeometry& g, const Tensor& dy,
                           std::span<const double> weight, Tensor& dx);
// Accumulates dL/dW and dL/db into the given spans. `dbias` may be empty.
void conv2d_backward_params(const ConvGeometry& g, const Tensor& x, const Tensor& dy,
                            std::span<double> dweight, std::span<double> dbias);

// Bilinear resize (half-pixel centres, edge clamp) of every plane of x into
// the preshaped y. The backward pass is its exact adjoint.
void resize_bilinear(const Tensor& x, Tensor& y);
void resize_bilinear_backward(const Tensor& dy, Tensor& dx);

namespace serial {
void conv2d_forward(const ConvGeometry& g, const Tensor& x, std::span<const double> weight,
                    std::span<const double> bias, Tensor& y);
void conv2d_backward_input(const ConvGeometry& g, const Tensor& dy,
                           std::span<const double> weight, Tensor& dx);
void conv2d_backward_params(const ConvGeometry& g, const Tensor& x, const Tensor& dy,
                            std::span<double> dweight, std::span<double> dbias);
void resize_bilinear(const Tensor& x, Tensor& y);
void resize_bilinear_backward(const Tensor& dy, Tensor& dx);
}  // namespace serial

namespace parallel {
void conv2d_forward(const ConvGeometry& g, const Tensor& x, std::span<const double> weight,
                    std::span<const double> bias, Tensor& y);
void conv2d_backward_input(const ConvGeometry& g, const Tensor& dy,
                           std::span<const double> weight, Tensor& dx);
void conv2d_backward_params(const ConvGeometry& g, const Tensor& x, const Tensor& dy,
                            std::span<double> dweight, std::span<double> dbias);
void resize_bilinear(const Tensor& x, Tensor& y);
void resize_bilinear_backward(const Tensor& dy, Tensor& dx);
}  // namespace parallel

// Source taps for one axis of a bilinear resize.
struct LinearTaps {
    int lo = 0;
    int hi = 0;
    double frac = 0.0;  // weight of `hi`
};
std::vector<LinearTaps> bilinear_taps(int in_size, int out_size);

// Nearest-neighbour source index for one output coordinate.
int nearest_source(int out_index, int in_size, int out_size);

}  // namespace psmt::kernels
