#include <algorithm>
#include <vector>

#include "psmt/kernels.hpp"

namespace psmt::kernels::parallel {

namespace {

bool is_pointwise(const ConvGeometry& g) {
    return g.kernel == 1 && g.stride == 1 && g.pad == 0;
}

// cols[(ci*k + ky)*k + kx][oy*ow + ox]
void im2col(const ConvGeometry& g, const double* x, int h, int w, int oh, int ow, double* cols) {
    const int k = g.kernel;
    const std::size_t p_count = static_cast<std::size_t>(oh) * ow;
    for (int ci = 0; ci < g.in_channels; ++ci) {
        const double* plane = x + static_cast<std::size_t>(ci) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                double* row = cols + (static_cast<std::size_t>(ci * k + ky) * k + kx) * p_count;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    double* dst = row + static_cast<std::size_t>(oy) * ow;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + ow, 0.0);
                        continue;
                    }
                    const double* src = plane + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * g.stride - g.pad + kx;
                        dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
                    }
                }
            }
        }
    }
}

// Transposed patch matrix: cols_t[oy*ow + ox][(ci*k + ky)*k + kx]
void im2col_t(const ConvGeometry& g, const double* x, int h, int w, int oh, int ow,
              double* cols_t) {
    const int k = g.kernel;
    const std::size_t kdim = g.patch();
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            double* dst = cols_t + (static_cast<std::size_t>(oy) * ow + ox) * kdim;
            for (int ci = 0; ci < g.in_channels; ++ci) {
                const double* plane = x + static_cast<std::size_t>(ci) * h * w;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * g.stride - g.pad + ky;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * g.stride - g.pad + kx;
                        *dst++ = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                     ? plane[static_cast<std::size_t>(iy) * w + ix]
                                     : 0.0;
                    }
                }
            }
        }
    }
}

void col2im(const ConvGeometry& g, const double* cols, int h, int w, int oh, int ow, double* x) {
    const int k = g.kernel;
    const std::size_t p_count = static_cast<std::size_t>(oh) * ow;
    std::fill(x, x + static_cast<std::size_t>(g.in_channels) * h * w, 0.0);
    for (int ci = 0; ci < g.in_channels; ++ci) {
        double* plane = x + static_cast<std::size_t>(ci) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const double* row =
                    cols + (static_cast<std::size_t>(ci * k + ky) * k + kx) * p_count;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    const double* src = row + static_cast<std::size_t>(oy) * ow;
                    double* dst = plane + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * g.stride - g.pad + kx;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

// C[m][p] += sum_k A(m,k) * B[k][p] where A(m,k) = a[m * a_rs + k * a_cs].
// Register-blocked: an 8 x 16 tile of C stays in registers across k, and the
// 16-column panel of B it streams through stays in L1.
void gemm_nn(int m_count, std::size_t k_count, std::size_t p_count, const double* a,
             std::size_t a_rs, std::size_t a_cs, const double* b, double* c) {
    constexpr int kRows = 8;
    constexpr std::size_t kCols = 16;
    const std::size_t p_full = p_count - p_count % kCols;
    int m = 0;
    for (; m + kRows <= m_count; m += kRows) {
        const double* ar = a + static_cast<std::size_t>(m) * a_rs;
        double* cr = c + static_cast<std::size_t>(m) * p_count;
        for (std::size_t p0 = 0; p0 < p_full; p0 += kCols) {
            double acc[kRows][kCols];
            for (int i = 0; i < kRows; ++i) {
                for (std::size_t j = 0; j < kCols; ++j) acc[i][j] = cr[i * p_count + p0 + j];
            }
            for (std::size_t k = 0; k < k_count; ++k) {
                const double* bp = b + k * p_count + p0;
                for (int i = 0; i < kRows; ++i) {
                    const double w = ar[static_cast<std::size_t>(i) * a_rs + k * a_cs];
#pragma omp simd
                    for (std::size_t j = 0; j < kCols; ++j) acc[i][j] += w * bp[j];
                }
            }
            for (int i = 0; i < kRows; ++i) {
                for (std::size_t j = 0; j < kCols; ++j) cr[i * p_count + p0 + j] = acc[i][j];
            }
        }
        if (p_full < p_count) {
            for (int i = 0; i < kRows; ++i) {
                double* crow = cr + static_cast<std::size_t>(i) * p_count;
                for (std::size_t k = 0; k < k_count; ++k) {
                    const double w = ar[static_cast<std::size_t>(i) * a_rs + k * a_cs];
                    const double* bp = b + k * p_count;
#pragma omp simd
                    for (std::size_t p = p_full; p < p_count; ++p) crow[p] += w * bp[p];
                }
            }
        }
    }
    for (; m < m_count; ++m) {
        const double* arow = a + static_cast<std::size_t>(m) * a_rs;
        double* crow = c + static_cast<std::size_t>(m) * p_count;
        for (std::size_t k = 0; k < k_count; ++k) {
            const double w = arow[k * a_cs];
            const double* bp = b + k * p_count;
#pragma omp simd
            for (std::size_t p = 0; p < p_count; ++p) crow[p] += w * bp[p];
        }
    }
}

void gemm_forward(const ConvGeometry& g, const double* weight, const double* bias,
                  const double* cols, std::size_t p_count, double* out) {
    for (int co = 0; co < g.out_channels; ++co) {
        double* r = out + static_cast<std::size_t>(co) * p_count;
        std::fill(r, r + p_count, bias ? bias[co] : 0.0);
    }
    gemm_nn(g.out_channels, g.patch(), p_count, weight, g.patch(), 1, cols, out);
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, const Tensor& x, std::span<const double> weight,
                    std::span<const double> bias, Tensor& y) {
    const auto& xs = x.shape();
    const auto& ys = y.shape();
    const std::size_t p_count = static_cast<std::size_t>(ys.h) * ys.w;
    const bool pointwise = is_pointwise(g);
    const double* b = bias.empty() ? nullptr : bias.data();

#pragma omp parallel
    {
        std::vector<double> cols(pointwise ? 0 : g.patch() * p_count);
#pragma omp for schedule(static)
        for (int n = 0; n < xs.n; ++n) {
            const double* src = x.sample(n).data();
            if (!pointwise) {
                im2col(g, src, xs.h, xs.w, ys.h, ys.w, cols.data());
                src = cols.data();
            }
            gemm_forward(g, weight.data(), b, src, p_count, y.sample(n).data());
        }
    }
}

void conv2d_backward_input(const ConvGeometry& g, const Tensor& dy,
                           std::span<const double> weight, Tensor& dx) {
    const auto& xs = dx.shape();
    const auto& ys = dy.shape();
    const std::size_t p_count = static_cast<std::size_t>(ys.h) * ys.w;
    const std::size_t kdim = g.patch();
    const bool pointwise = is_pointwise(g);

#pragma omp parallel
    {
        std::vector<double> dcols(pointwise ? 0 : kdim * p_count);
#pragma omp for schedule(static)
        for (int n = 0; n < ys.n; ++n) {
            double* target = pointwise ? dx.sample(n).data() : dcols.data();
            std::fill(target, target + kdim * p_count, 0.0);
            gemm_nn(static_cast<int>(kdim), static_cast<std::size_t>(g.out_channels), p_count,
                    weight.data(), 1, kdim, dy.sample(n).data(), target);
            if (!pointwise) col2im(g, dcols.data(), xs.h, xs.w, ys.h, ys.w, dx.sample(n).data());
        }
    }
}

void conv2d_backward_params(const ConvGeometry& g, const Tensor& x, const Tensor& dy,
                            std::span<double> dweight, std::span<double> dbias) {
    const auto& xs = x.shape();
    const auto& ys = dy.shape();
    const std::size_t p_count = static_cast<std::size_t>(ys.h) * ys.w;
    const std::size_t kdim = g.patch();
    const std::size_t wsize = g.weight_size();
    const bool pointwise = is_pointwise(g);
    const int batch = ys.n;

    // Per-sample partials, reduced below in sample order.
    std::vector<double> partial_w(static_cast<std::size_t>(batch) * wsize, 0.0);
    std::vector<double> partial_b(static_cast<std::size_t>(batch) * g.out_channels);

    // Wide layers: GEMM against the transposed patch matrix. Narrow ones
    // (first stage, 1x1 projection) do better as plain dot products.
    const bool blocked = kdim >= 64 && g.out_channels >= 8;

#pragma omp parallel
    {
        std::vector<double> cols(pointwise ? 0 : kdim * p_count);
#pragma omp for schedule(static)
        for (int n = 0; n < batch; ++n) {
            const double* grad = dy.sample(n).data();
            double* pw = partial_w.data() + static_cast<std::size_t>(n) * wsize;
            double* pb = partial_b.data() + static_cast<std::size_t>(n) * g.out_channels;
            for (int co = 0; co < g.out_channels; ++co) {
                const double* gr = grad + static_cast<std::size_t>(co) * p_count;
                double bsum = 0.0;
#pragma omp simd reduction(+ : bsum)
                for (std::size_t p = 0; p < p_count; ++p) bsum += gr[p];
                pb[co] = bsum;
            }
            if (blocked) {
                im2col_t(g, x.sample(n).data(), xs.h, xs.w, ys.h, ys.w, cols.data());
                gemm_nn(g.out_channels, p_count, kdim, grad, p_count, 1, cols.data(), pw);
                continue;
            }
            const double* src = x.sample(n).data();
            if (!pointwise) {
                im2col(g, src, xs.h, xs.w, ys.h, ys.w, cols.data());
                src = cols.data();
            }
            for (int co = 0; co < g.out_channels; ++co) {
                const double* gr = grad + static_cast<std::size_t>(co) * p_count;
                for (std::size_t kk = 0; kk < kdim; ++kk) {
                    const double* c = src + kk * p_count;
                    double acc = 0.0;
#pragma omp simd reduction(+ : acc)
                    for (std::size_t p = 0; p < p_count; ++p) acc += gr[p] * c[p];
                    pw[static_cast<std::size_t>(co) * kdim + kk] = acc;
                }
            }
        }
    }

    for (int n = 0; n < batch; ++n) {
        const double* pw = partial_w.data() + static_cast<std::size_t>(n) * wsize;
        for (std::size_t i = 0; i < wsize; ++i) dweight[i] += pw[i];
        if (!dbias.empty()) {
            const double* pb = partial_b.data() + static_cast<std::size_t>(n) * g.out_channels;
            for (int co = 0; co < g.out_channels; ++co) dbias[static_cast<std::size_t>(co)] += pb[co];
        }
    }
}

void resize_bilinear(const Tensor& x, Tensor& y) {
    const auto& xs = x.shape();
    const auto& ys = y.shape();
    const auto ty = bilinear_taps(xs.h, ys.h);
    const auto tx = bilinear_taps(xs.w, ys.w);
    const int planes = xs.n * xs.c;

#pragma omp parallel for schedule(static)
    for (int pl = 0; pl < planes; ++pl) {
        const double* src = x.data() + static_cast<std::size_t>(pl) * xs.plane();
        double* dst = y.data() + static_cast<std::size_t>(pl) * ys.plane();
        for (int oy = 0; oy < ys.h; ++oy) {
            const auto& a = ty[static_cast<std::size_t>(oy)];
            const double* lo = src + static_cast<std::size_t>(a.lo) * xs.w;
            const double* hi = src + static_cast<std::size_t>(a.hi) * xs.w;
            double* out = dst + static_cast<std::size_t>(oy) * ys.w;
            for (int ox = 0; ox < ys.w; ++ox) {
                const auto& b = tx[static_cast<std::size_t>(ox)];
                const double top = (1.0 - b.frac) * lo[b.lo] + b.frac * lo[b.hi];
                const double bot = (1.0 - b.frac) * hi[b.lo] + b.frac * hi[b.hi];
                out[ox] = (1.0 - a.frac) * top + a.frac * bot;
            }
        }
    }
}

void resize_bilinear_backward(const Tensor& dy, Tensor& dx) {
    const auto& xs = dx.shape();
    const auto& ys = dy.shape();
    const auto ty = bilinear_taps(xs.h, ys.h);
    const auto tx = bilinear_taps(xs.w, ys.w);
    const int planes = xs.n * xs.c;

#pragma omp parallel for schedule(static)
    for (int pl = 0; pl < planes; ++pl) {
        const double* src = dy.data() + static_cast<std::size_t>(pl) * ys.plane();
        double* dst = dx.data() + static_cast<std::size_t>(pl) * xs.plane();
        std::fill(dst, dst + xs.plane(), 0.0);
        for (int oy = 0; oy < ys.h; ++oy) {
            const auto& a = ty[static_cast<std::size_t>(oy)];
            double* lo = dst + static_cast<std::size_t>(a.lo) * xs.w;
            double* hi = dst + static_cast<std::size_t>(a.hi) * xs.w;
            const double* grad = src + static_cast<std::size_t>(oy) * ys.w;
            for (int ox = 0; ox < ys.w; ++ox) {
                const auto& b = tx[static_cast<std::size_t>(ox)];
                const double gv = grad[ox];
                lo[b.lo] += gv * (1.0 - a.frac) * (1.0 - b.frac);
                lo[b.hi] += gv * (1.0 - a.frac) * b.frac;
                hi[b.lo] += gv * a.frac * (1.0 - b.frac);
                hi[b.hi] += gv * a.frac * b.frac;
            }
        }
    }
}

}  // namespace psmt::kernels::parallel
