#include <atomic>
#include <cmath>

#include "psmt/kernels.hpp"

namespace psmt::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::parallel};
}

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

const char* backend_name(Backend b) { return b == Backend::serial ? "serial" : "parallel"; }

void conv2d_forward(const ConvGeometry& g, const Tensor& x, std::span<const double> weight,
                    std::span<const double> bias, Tensor& y) {
    if (backend() == Backend::serial) return serial::conv2d_forward(g, x, weight, bias, y);
    parallel::conv2d_forward(g, x, weight, bias, y);
}

void conv2d_backward_input(const ConvGeometry& g, const Tensor& dy,
                           std::span<const double> weight, Tensor& dx) {
    if (backend() == Backend::serial) return serial::conv2d_backward_input(g, dy, weight, dx);
    parallel::conv2d_backward_input(g, dy, weight, dx);
}

void conv2d_backward_params(const ConvGeometry& g, const Tensor& x, const Tensor& dy,
                            std::span<double> dweight, std::span<double> dbias) {
    if (backend() == Backend::serial) {
        return serial::conv2d_backward_params(g, x, dy, dweight, dbias);
    }
    parallel::conv2d_backward_params(g, x, dy, dweight, dbias);
}

void resize_bilinear(const Tensor& x, Tensor& y) {
    if (backend() == Backend::serial) return serial::resize_bilinear(x, y);
    parallel::resize_bilinear(x, y);
}

void resize_bilinear_backward(const Tensor& dy, Tensor& dx) {
    if (backend() == Backend::serial) return serial::resize_bilinear_backward(dy, dx);
    parallel::resize_bilinear_backward(dy, dx);
}

std::vector<LinearTaps> bilinear_taps(int in_size, int out_size) {
    std::vector<LinearTaps> taps(static_cast<std::size_t>(out_size));
    const double scale = static_cast<double>(in_size) / out_size;
    for (int o = 0; o < out_size; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        if (src < 0.0) src = 0.0;
        int lo = static_cast<int>(std::floor(src));
        if (lo > in_size - 1) lo = in_size - 1;
        const int hi = lo + 1 < in_size ? lo + 1 : in_size - 1;
        taps[static_cast<std::size_t>(o)] = {lo, hi, src - lo};
    }
    return taps;
}

int nearest_source(int out_index, int in_size, int out_size) {
    const int src = static_cast<int>(
        std::floor((out_index + 0.5) * static_cast<double>(in_size) / out_size));
    return src < in_size ? src : in_size - 1;
}

}  // namespace psmt::kernels
