#include <algorithm>

#include "psmt/error.hpp"
#include "psmt/kernels.hpp"

namespace psmt::kernels::serial {

void conv2d_forward(const ConvGeometry& g, const Tensor& x, std::span<const double> weight,
                    std::span<const double> bias, Tensor& y) {
    const auto& xs = x.shape();
    const auto& ys = y.shape();
    const int k = g.kernel;
    for (int n = 0; n < xs.n; ++n) {
        for (int co = 0; co < g.out_channels; ++co) {
            for (int oy = 0; oy < ys.h; ++oy) {
                for (int ox = 0; ox < ys.w; ++ox) {
                    double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(co)];
                    for (int ci = 0; ci < g.in_channels; ++ci) {
                        for (int ky = 0; ky < k; ++ky) {
                            const int iy = oy * g.stride - g.pad + ky;
                            if (iy < 0 || iy >= xs.h) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                const int ix = ox * g.stride - g.pad + kx;
                                if (ix < 0 || ix >= xs.w) continue;
                                acc += weight[((static_cast<std::size_t>(co) * g.in_channels + ci) *
                                                   k + ky) * k + kx] *
                                       x.at(n, ci, iy, ix);
                            }
                        }
                    }
                    y.at(n, co, oy, ox) = acc;
                }
            }
        }
    }
}

void conv2d_backward_input(const ConvGeometry& g, const Tensor& dy,
                           std::span<const double> weight, Tensor& dx) {
    const auto& xs = dx.shape();
    const auto& ys = dy.shape();
    const int k = g.kernel;
    dx.fill(0.0);
    for (int n = 0; n < ys.n; ++n) {
        for (int co = 0; co < g.out_channels; ++co) {
            for (int oy = 0; oy < ys.h; ++oy) {
                for (int ox = 0; ox < ys.w; ++ox) {
                    const double grad = dy.at(n, co, oy, ox);
                    for (int ci = 0; ci < g.in_channels; ++ci) {
                        for (int ky = 0; ky < k; ++ky) {
                            const int iy = oy * g.stride - g.pad + ky;
                            if (iy < 0 || iy >= xs.h) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                const int ix = ox * g.stride - g.pad + kx;
                                if (ix < 0 || ix >= xs.w) continue;
                                dx.at(n, ci, iy, ix) +=
                                    grad * weight[((static_cast<std::size_t>(co) * g.in_channels +
                                                    ci) * k + ky) * k + kx];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_params(const ConvGeometry& g, const Tensor& x, const Tensor& dy,
                            std::span<double> dweight, std::span<double> dbias) {
    const auto& xs = x.shape();
    const auto& ys = dy.shape();
    const int k = g.kernel;
    for (int n = 0; n < ys.n; ++n) {
        for (int co = 0; co < g.out_channels; ++co) {
            for (int oy = 0; oy < ys.h; ++oy) {
                for (int ox = 0; ox < ys.w; ++ox) {
                    const double grad = dy.at(n, co, oy, ox);
                    if (!dbias.empty()) dbias[static_cast<std::size_t>(co)] += grad;
                    for (int ci = 0; ci < g.in_channels; ++ci) {
                        for (int ky = 0; ky < k; ++ky) {
                            const int iy = oy * g.stride - g.pad + ky;
                            if (iy < 0 || iy >= xs.h) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                const int ix = ox * g.stride - g.pad + kx;
                                if (ix < 0 || ix >= xs.w) continue;
                                dweight[((static_cast<std::size_t>(co) * g.in_channels + ci) * k +
                                         ky) * k + kx] += grad * x.at(n, ci, iy, ix);
                            }
                        }
                    }
                }
            }
        }
    }
}

void resize_bilinear(const Tensor& x, Tensor& y) {
    const auto& xs = x.shape();
    const auto& ys = y.shape();
    const auto ty = bilinear_taps(xs.h, ys.h);
    const auto tx = bilinear_taps(xs.w, ys.w);
    for (int n = 0; n < xs.n; ++n) {
        for (int c = 0; c < xs.c; ++c) {
            for (int oy = 0; oy < ys.h; ++oy) {
                const auto& a = ty[static_cast<std::size_t>(oy)];
                for (int ox = 0; ox < ys.w; ++ox) {
                    const auto& b = tx[static_cast<std::size_t>(ox)];
                    const double top = (1.0 - b.frac) * x.at(n, c, a.lo, b.lo) +
                                       b.frac * x.at(n, c, a.lo, b.hi);
                    const double bot = (1.0 - b.frac) * x.at(n, c, a.hi, b.lo) +
                                       b.frac * x.at(n, c, a.hi, b.hi);
                    y.at(n, c, oy, ox) = (1.0 - a.frac) * top + a.frac * bot;
                }
            }
        }
    }
}

void resize_bilinear_backward(const Tensor& dy, Tensor& dx) {
    const auto& xs = dx.shape();
    const auto& ys = dy.shape();
    const auto ty = bilinear_taps(xs.h, ys.h);
    const auto tx = bilinear_taps(xs.w, ys.w);
    dx.fill(0.0);
    for (int n = 0; n < xs.n; ++n) {
        for (int c = 0; c < xs.c; ++c) {
            for (int oy = 0; oy < ys.h; ++oy) {
                const auto& a = ty[static_cast<std::size_t>(oy)];
                for (int ox = 0; ox < ys.w; ++ox) {
                    const auto& b = tx[static_cast<std::size_t>(ox)];
                    const double grad = dy.at(n, c, oy, ox);
                    dx.at(n, c, a.lo, b.lo) += grad * (1.0 - a.frac) * (1.0 - b.frac);
                    dx.at(n, c, a.lo, b.hi) += grad * (1.0 - a.frac) * b.frac;
                    dx.at(n, c, a.hi, b.lo) += grad * a.frac * (1.0 - b.frac);
                    dx.at(n, c, a.hi, b.hi) += grad * a.frac * b.frac;
                }
            }
        }
    }
}

}  // namespace psmt::kernels::serial
