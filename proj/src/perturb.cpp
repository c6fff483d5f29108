#include "psmt/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "psmt/error.hpp"
#include "psmt/kernels.hpp"

namespace psmt {

// ---------------------------------------------------------------- feature perturbation

void TVatSpec::validate() const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
        throw ConfigError("tvat.epsilon must be a positive finite number, got " +
                          std::to_string(epsilon));
    }
    if (power_iters < 1) throw ConfigError("tvat.power_iters must be >= 1");
    if (!(xi > 0.0) || !std::isfinite(xi)) throw ConfigError("tvat.xi must be positive");
}

const char* to_string(FeaturePerturbation p) {
    switch (p) {
        case FeaturePerturbation::none: return "none";
        case FeaturePerturbation::uniform: return "uniform";
        case FeaturePerturbation::vat: return "vat";
        case FeaturePerturbation::tvat: return "tvat";
    }
    return "?";
}

FeaturePerturbation parse_feature_perturbation(const std::string& s) {
    if (s == "none" || s == "off") return FeaturePerturbation::none;
    if (s == "uniform") return FeaturePerturbation::uniform;
    if (s == "vat") return FeaturePerturbation::vat;
    if (s == "tvat") return FeaturePerturbation::tvat;
    throw ConfigError("unknown feature perturbation '" + s + "' (none|uniform|vat|tvat)");
}

double kl_divergence(const Tensor& p, const Tensor& q) {
    if (p.shape() != q.shape()) throw ConfigError("kl_divergence: shape mismatch");
    constexpr double tiny = std::numeric_limits<double>::min();
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double a = p.data()[i];
        if (a > 0.0) total += a * (std::log(a) - std::log(std::max(q.data()[i], tiny)));
    }
    return total;
}

std::vector<double> sample_norms(const Tensor& t) {
    std::vector<double> out(static_cast<std::size_t>(t.shape().n));
    for (int n = 0; n < t.shape().n; ++n) {
        double sq = 0.0;
        for (double v : t.sample(n)) sq += v * v;
        out[static_cast<std::size_t>(n)] = std::sqrt(sq);
    }
    return out;
}

namespace {

// Rescales every sample to norm `target`; samples with zero norm keep `fallback`'s sample.
void normalize_samples(Tensor& t, double target, const Tensor* fallback) {
    const auto norms = sample_norms(t);
    for (int n = 0; n < t.shape().n; ++n) {
        const double nrm = norms[static_cast<std::size_t>(n)];
        auto s = t.sample(n);
        if (nrm > 0.0) {
            const double k = target / nrm;
            for (double& v : s) v *= k;
        } else if (fallback) {
            auto f = fallback->sample(n);
            std::copy(f.begin(), f.end(), s.begin());
        }
    }
}

Tensor add(const Tensor& a, const Tensor& b, double scale) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += scale * b.data()[i];
    return out;
}

}  // namespace

Tensor decoder_ensemble_probs(const Tensor& features, std::span<const SegModel* const> decoders) {
    if (decoders.empty()) throw ConfigError("decoder ensemble is empty");
    Tensor mean = decoders[0]->decode(features);
    for (std::size_t k = 1; k < decoders.size(); ++k) {
        const Tensor l = decoders[k]->decode(features);
        for (std::size_t i = 0; i < mean.size(); ++i) mean.data()[i] += l.data()[i];
    }
    const double inv = 1.0 / static_cast<double>(decoders.size());
    for (double& v : mean.values()) v *= inv;
    return softmax_channels(mean);
}

Tensor adversarial_perturbation(const Tensor& features, std::span<const SegModel* const> decoders,
                                const TVatSpec& spec, Rng& rng) {
    spec.validate();
    if (decoders.empty()) throw ConfigError("adversarial_perturbation: no decoders");
    const Tensor clean = decoder_ensemble_probs(features, decoders);
    const double inv_k = 1.0 / static_cast<double>(decoders.size());

    Tensor direction(features.shape());
    for (double& v : direction.values()) v = rng.normal();
    normalize_samples(direction, 1.0, nullptr);

    std::vector<DecoderTrace> traces(decoders.size());
    for (int it = 0; it < spec.power_iters; ++it) {
        const Tensor probe = add(features, direction, spec.xi);
        Tensor mean;
        for (std::size_t k = 0; k < decoders.size(); ++k) {
            Tensor l = decoders[k]->decode(probe, &traces[k]);
            if (k == 0) {
                mean = std::move(l);
            } else {
                for (std::size_t i = 0; i < mean.size(); ++i) mean.data()[i] += l.data()[i];
            }
        }
        for (double& v : mean.values()) v *= inv_k;
        // d/d(mean logits) of sum KL(clean || softmax(mean)) = softmax(mean) - clean
        Tensor dmean = softmax_channels(mean);
        for (std::size_t i = 0; i < dmean.size(); ++i) {
            dmean.data()[i] = (dmean.data()[i] - clean.data()[i]) * inv_k;
        }
        Tensor grad(features.shape());
        for (std::size_t k = 0; k < decoders.size(); ++k) {
            const Tensor g = decoders[k]->decode_backward(traces[k], dmean, {});
            for (std::size_t i = 0; i < grad.size(); ++i) grad.data()[i] += g.data()[i];
        }
        for (double v : grad.values()) {
            if (!std::isfinite(v)) {
                throw NumericError("non-finite KL gradient in adversarial power iteration " +
                                   std::to_string(it));
            }
        }
        normalize_samples(grad, 1.0, &direction);
        direction = std::move(grad);
    }
    for (double& v : direction.values()) v *= spec.epsilon;
    return direction;
}

Tensor tvat_perturbation(const Tensor& student_features, const TeacherPair& pair,
                         const TVatSpec& spec, Rng& rng) {
    const auto members = pair.members();
    return adversarial_perturbation(student_features, members, spec, rng);
}

Tensor uniform_perturbation(const Shape& shape, double epsilon, Rng& rng) {
    if (!(epsilon > 0.0)) throw ConfigError("uniform perturbation epsilon must be positive");
    Tensor r(shape);
    for (double& v : r.values()) v = rng.uniform(-1.0, 1.0);
    normalize_samples(r, epsilon, nullptr);
    return r;
}

// ---------------------------------------------------------------- CutMix

PixelGrid<std::uint8_t> CutMixMask::dense() const {
    PixelGrid<std::uint8_t> m(1, h, w, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) m.at(0, y, x) = inside(y, x) ? 1 : 0;
    }
    return m;
}

const char* to_string(CutMixMode m) {
    switch (m) {
        case CutMixMode::after: return "after";
        case CutMixMode::before: return "before";
        case CutMixMode::off: return "off";
    }
    return "?";
}

CutMixMode parse_cutmix_mode(const std::string& s) {
    if (s == "after") return CutMixMode::after;
    if (s == "before") return CutMixMode::before;
    if (s == "off") return CutMixMode::off;
    throw ConfigError("unknown cutmix.mode '" + s + "' (after|before|off)");
}

void CutMixSpec::validate() const {
    if (!(area_min > 0.0 && area_min <= area_max && area_max <= 1.0)) {
        throw ConfigError("cutmix area range must satisfy 0 < area_min <= area_max <= 1");
    }
    if (!(aspect_min > 0.0 && aspect_min <= aspect_max)) {
        throw ConfigError("cutmix aspect range must satisfy 0 < aspect_min <= aspect_max");
    }
}

CutMixMask make_cutmix_mask(int h, int w, CutMixBox box) {
    if (box.top < 0 || box.left < 0 || box.height < 0 || box.width < 0 ||
        box.top + box.height > h || box.left + box.width > w) {
        throw ConfigError("cutmix box outside the " + std::to_string(h) + "x" + std::to_string(w) +
                          " lattice");
    }
    return CutMixMask{h, w, box};
}

CutMixMask sample_cutmix_mask(int h, int w, const CutMixSpec& spec, Rng& rng) {
    spec.validate();
    const double total = static_cast<double>(h) * w;
    for (int attempt = 0; attempt < 64; ++attempt) {
        const double area = rng.uniform(spec.area_min, spec.area_max) * total;
        const double aspect = rng.uniform(spec.aspect_min, spec.aspect_max);
        const int bh = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))), 1, h);
        const int bw = std::clamp(static_cast<int>(std::lround(area / bh)), 1, w);
        const double frac = static_cast<double>(bh) * bw / total;
        if (frac < spec.area_min || frac > spec.area_max) continue;
        const int top = rng.uniform_int(0, h - bh);
        const int left = rng.uniform_int(0, w - bw);
        return CutMixMask{h, w, {top, left, bh, bw}};
    }
    // Square box at the middle of the area range.
    const double area = 0.5 * (spec.area_min + spec.area_max) * total;
    const int side = std::clamp(static_cast<int>(std::lround(std::sqrt(area))), 1, std::min(h, w));
    return CutMixMask{h, w, {(h - side) / 2, (w - side) / 2, side, side}};
}

namespace {

void check_masks(const Shape& s, std::span<const CutMixMask> masks) {
    if (masks.size() != 1 && masks.size() != static_cast<std::size_t>(s.n)) {
        throw ConfigError("cutmix: " + std::to_string(masks.size()) + " masks for batch of " +
                          std::to_string(s.n));
    }
    for (const auto& m : masks) {
        if (m.h != s.h || m.w != s.w) {
            throw ConfigError("cutmix: mask " + std::to_string(m.h) + "x" + std::to_string(m.w) +
                              " does not match " + to_string(s));
        }
    }
}

const CutMixMask& mask_for(std::span<const CutMixMask> masks, int b) {
    return masks.size() == 1 ? masks[0] : masks[static_cast<std::size_t>(b)];
}

}  // namespace

Tensor cutmix_combine(const Tensor& xi, const Tensor& xj, std::span<const CutMixMask> masks) {
    if (xi.shape() != xj.shape()) {
        throw ConfigError("cutmix: image shapes " + to_string(xi.shape()) + " and " +
                          to_string(xj.shape()) + " differ");
    }
    const auto& s = xi.shape();
    check_masks(s, masks);
    Tensor out = xi;
    for (int n = 0; n < s.n; ++n) {
        const auto& m = mask_for(masks, n);
        for (int c = 0; c < s.c; ++c) {
            for (int y = m.box.top; y < m.box.top + m.box.height; ++y) {
                for (int x = m.box.left; x < m.box.left + m.box.width; ++x) {
                    out.at(n, c, y, x) = xj.at(n, c, y, x);
                }
            }
        }
    }
    return out;
}

Tensor cutmix_combine(const Tensor& xi, const Tensor& xj, const CutMixMask& mask) {
    return cutmix_combine(xi, xj, std::span<const CutMixMask>(&mask, 1));
}

template <typename T>
PixelGrid<T> cutmix_combine_grid(const PixelGrid<T>& a, const PixelGrid<T>& b,
                                 std::span<const CutMixMask> masks) {
    if (a.n != b.n || a.h != b.h || a.w != b.w) throw ConfigError("cutmix: map shapes differ");
    check_masks({a.n, 1, a.h, a.w}, masks);
    PixelGrid<T> out = a;
    for (int n = 0; n < a.n; ++n) {
        const auto& m = mask_for(masks, n);
        for (int y = m.box.top; y < m.box.top + m.box.height; ++y) {
            for (int x = m.box.left; x < m.box.left + m.box.width; ++x) {
                out.at(n, y, x) = b.at(n, y, x);
            }
        }
    }
    return out;
}

template PixelGrid<std::int32_t> cutmix_combine_grid(const PixelGrid<std::int32_t>&,
                                                     const PixelGrid<std::int32_t>&,
                                                     std::span<const CutMixMask>);
template PixelGrid<double> cutmix_combine_grid(const PixelGrid<double>&, const PixelGrid<double>&,
                                               std::span<const CutMixMask>);

EnsemblePrediction cutmix_after_prediction(const EnsemblePrediction& pred_i,
                                           const EnsemblePrediction& pred_j,
                                           std::span<const CutMixMask> masks) {
    EnsemblePrediction out;
    out.soft = cutmix_combine(pred_i.soft, pred_j.soft, masks);
    out.hard = cutmix_combine_grid(pred_i.hard, pred_j.hard, masks);
    out.confidence = cutmix_combine_grid(pred_i.confidence, pred_j.confidence, masks);
    return out;
}

Tensor permute_batch(const Tensor& t, std::span<const int> perm) {
    Tensor out(t.shape());
    for (int n = 0; n < t.shape().n; ++n) {
        auto src = t.sample(perm[static_cast<std::size_t>(n)]);
        std::copy(src.begin(), src.end(), out.sample(n).begin());
    }
    return out;
}

template <typename T>
PixelGrid<T> permute_grid(const PixelGrid<T>& g, std::span<const int> perm) {
    PixelGrid<T> out(g.n, g.h, g.w);
    const std::size_t plane = g.plane();
    for (int n = 0; n < g.n; ++n) {
        auto first = g.values.begin() +
                     static_cast<std::ptrdiff_t>(perm[static_cast<std::size_t>(n)] * plane);
        std::copy(first, first + static_cast<std::ptrdiff_t>(plane),
                  out.values.begin() + static_cast<std::ptrdiff_t>(n * plane));
    }
    return out;
}

LabelMap permute_batch(const LabelMap& l, std::span<const int> perm) { return permute_grid(l, perm); }

EnsemblePrediction permute_batch(const EnsemblePrediction& p, std::span<const int> perm) {
    return {permute_batch(p.soft, perm), permute_grid(p.hard, perm), permute_grid(p.confidence, perm)};
}

// ---------------------------------------------------------------- zoom

Extent zoomed_extent(int h, int w, const ZoomSpec& spec) {
    if (!(spec.scale > 0.0) || spec.multiple < 1) {
        throw ConfigError("zoom: scale must be positive and multiple >= 1");
    }
    auto snap = [&spec](int side) {
        long v = std::lround(spec.scale * side);
        if (spec.multiple > 1) {
            v = std::lround(static_cast<double>(v) / spec.multiple) * spec.multiple;
        }
        return static_cast<int>(v);
    };
    const Extent e{snap(h), snap(w)};
    if (e.h < kMinImageSide || e.w < kMinImageSide) {
        throw ConfigError("zoom: degenerate output size " + std::to_string(e.h) + "x" +
                          std::to_string(e.w) + " for scale " + std::to_string(spec.scale));
    }
    return e;
}

Tensor resize_image(const Tensor& x, int h, int w) {
    const auto& s = x.shape();
    if (s.h == h && s.w == w) return x;
    Tensor out({s.n, s.c, h, w});
    kernels::resize_bilinear(x, out);
    return out;
}

template <typename T>
PixelGrid<T> resize_nearest(const PixelGrid<T>& g, int h, int w) {
    if (g.h == h && g.w == w) return g;
    PixelGrid<T> out(g.n, h, w);
    std::vector<int> sy(static_cast<std::size_t>(h));
    std::vector<int> sx(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) sy[static_cast<std::size_t>(y)] = kernels::nearest_source(y, g.h, h);
    for (int x = 0; x < w; ++x) sx[static_cast<std::size_t>(x)] = kernels::nearest_source(x, g.w, w);
    for (int n = 0; n < g.n; ++n) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                out.at(n, y, x) = g.at(n, sy[static_cast<std::size_t>(y)], sx[static_cast<std::size_t>(x)]);
            }
        }
    }
    return out;
}

template PixelGrid<std::int32_t> resize_nearest(const PixelGrid<std::int32_t>&, int, int);
template PixelGrid<double> resize_nearest(const PixelGrid<double>&, int, int);
template PixelGrid<std::uint8_t> resize_nearest(const PixelGrid<std::uint8_t>&, int, int);

Tensor zoom_image(const Tensor& x, const ZoomSpec& spec) {
    const auto e = zoomed_extent(x.shape().h, x.shape().w, spec);
    return resize_image(x, e.h, e.w);
}

EnsemblePrediction zoom_consistency_targets(const EnsemblePrediction& pred, const ZoomSpec& spec) {
    const auto e = zoomed_extent(pred.hard.h, pred.hard.w, spec);
    EnsemblePrediction out;
    if (!pred.soft.empty()) out.soft = resize_image(pred.soft, e.h, e.w);
    out.hard = resize_nearest(pred.hard, e.h, e.w);
    out.confidence = resize_nearest(pred.confidence, e.h, e.w);
    return out;
}

// ---------------------------------------------------------------- weak

WeakAugParams sample_weak_params(int h, int w, const WeakAugSpec& spec, Rng& rng) {
    WeakAugParams p;
    if (!spec.scales.empty()) {
        p.scale = spec.scales[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<int>(spec.scales.size()) - 1))];
    }
    p.flip = rng.bernoulli(spec.flip_p);
    if (spec.crop > 0) {
        const int sh = static_cast<int>(std::lround(p.scale * h));
        const int sw = static_cast<int>(std::lround(p.scale * w));
        if (spec.crop > sh || spec.crop > sw) {
            throw ConfigError("weak augmentation: crop " + std::to_string(spec.crop) +
                              " larger than scaled image " + std::to_string(sh) + "x" +
                              std::to_string(sw));
        }
        p.crop_h = p.crop_w = spec.crop;
        p.crop_top = rng.uniform_int(0, sh - spec.crop);
        p.crop_left = rng.uniform_int(0, sw - spec.crop);
    }
    return p;
}

WeakAugResult apply_weak(const Tensor& x, const LabelMap* y, const WeakAugParams& params) {
    const auto& s = x.shape();
    if (s.n != 1) throw ConfigError("weak augmentation expects a single image, got " + to_string(s));
    if (y && (y->n != 1 || y->h != s.h || y->w != s.w)) {
        throw ConfigError("weak augmentation: label map does not match image " + to_string(s));
    }
    WeakAugResult out;
    out.params = params;
    const int sh = static_cast<int>(std::lround(params.scale * s.h));
    const int sw = static_cast<int>(std::lround(params.scale * s.w));
    Tensor img = resize_image(x, sh, sw);
    std::optional<LabelMap> lab;
    if (y) lab = resize_nearest(*y, sh, sw);

    if (params.flip) {
        for (int c = 0; c < s.c; ++c) {
            for (int r = 0; r < sh; ++r) {
                for (int q = 0; q < sw / 2; ++q) std::swap(img.at(0, c, r, q), img.at(0, c, r, sw - 1 - q));
            }
        }
        if (lab) {
            for (int r = 0; r < sh; ++r) {
                for (int q = 0; q < sw / 2; ++q) std::swap(lab->at(0, r, q), lab->at(0, r, sw - 1 - q));
            }
        }
    }

    if (params.crop_h > 0 && params.crop_w > 0) {
        if (params.crop_top < 0 || params.crop_left < 0 || params.crop_top + params.crop_h > sh ||
            params.crop_left + params.crop_w > sw) {
            throw ConfigError("weak augmentation: crop larger than image");
        }
        Tensor cropped({1, s.c, params.crop_h, params.crop_w});
        for (int c = 0; c < s.c; ++c) {
            for (int r = 0; r < params.crop_h; ++r) {
                for (int q = 0; q < params.crop_w; ++q) {
                    cropped.at(0, c, r, q) = img.at(0, c, params.crop_top + r, params.crop_left + q);
                }
            }
        }
        img = std::move(cropped);
        if (lab) {
            LabelMap lc(1, params.crop_h, params.crop_w);
            for (int r = 0; r < params.crop_h; ++r) {
                for (int q = 0; q < params.crop_w; ++q) {
                    lc.at(0, r, q) = lab->at(0, params.crop_top + r, params.crop_left + q);
                }
            }
            lab = std::move(lc);
        }
    }
    out.image = std::move(img);
    out.label = std::move(lab);
    return out;
}

WeakAugResult weak_augment(const Tensor& x, const LabelMap* y, const WeakAugSpec& spec, Rng& rng) {
    return apply_weak(x, y, sample_weak_params(x.shape().h, x.shape().w, spec, rng));
}

// ---------------------------------------------------------------- strong

StrongAugParams sample_strong_params(const StrongAugSpec& spec, Rng& rng) {
    StrongAugParams p;
    p.jitter = rng.bernoulli(spec.jitter_p);
    if (p.jitter) {
        p.brightness = rng.uniform(1.0 - spec.brightness, 1.0 + spec.brightness);
        p.contrast = rng.uniform(1.0 - spec.contrast, 1.0 + spec.contrast);
        p.saturation = rng.uniform(1.0 - spec.saturation, 1.0 + spec.saturation);
    }
    p.grayscale = rng.bernoulli(spec.grayscale_p);
    p.blur = rng.bernoulli(spec.blur_p);
    if (p.blur) p.sigma = rng.uniform(spec.blur_sigma_min, spec.blur_sigma_max);
    return p;
}

namespace {

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

void gaussian_blur_plane(double* plane, int h, int w, double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * i * i / (sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    std::vector<double> tmp(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int xx = std::clamp(x + i, 0, w - 1);
                acc += k[static_cast<std::size_t>(i + radius)] * plane[y * w + xx];
            }
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int yy = std::clamp(y + i, 0, h - 1);
                acc += k[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(yy) * w + x];
            }
            plane[y * w + x] = acc;
        }
    }
}

void strong_one(double* img, int c, int h, int w, const StrongAugParams& p) {
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const bool rgb = c == 3;
    auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
    if (p.jitter) {
        for (std::size_t i = 0; i < plane * static_cast<std::size_t>(c); ++i) {
            img[i] = clamp01(img[i] * p.brightness);
        }
        double mean = 0.0;
        if (rgb) {
            for (std::size_t i = 0; i < plane; ++i) mean += luma(img[i], img[plane + i], img[2 * plane + i]);
        } else {
            for (std::size_t i = 0; i < plane * static_cast<std::size_t>(c); ++i) mean += img[i];
            mean /= c;
        }
        mean /= static_cast<double>(plane);
        for (std::size_t i = 0; i < plane * static_cast<std::size_t>(c); ++i) {
            img[i] = clamp01((img[i] - mean) * p.contrast + mean);
        }
        if (rgb) {
            for (std::size_t i = 0; i < plane; ++i) {
                const double g = luma(img[i], img[plane + i], img[2 * plane + i]);
                for (int ch = 0; ch < 3; ++ch) {
                    double& v = img[static_cast<std::size_t>(ch) * plane + i];
                    v = clamp01((v - g) * p.saturation + g);
                }
            }
        }
    }
    if (p.grayscale && rgb) {
        for (std::size_t i = 0; i < plane; ++i) {
            const double g = luma(img[i], img[plane + i], img[2 * plane + i]);
            img[i] = img[plane + i] = img[2 * plane + i] = g;
        }
    }
    if (p.blur && p.sigma > 0.0) {
        for (int ch = 0; ch < c; ++ch) gaussian_blur_plane(img + static_cast<std::size_t>(ch) * plane, h, w, p.sigma);
    }
}

}  // namespace

Tensor apply_strong(const Tensor& x, const StrongAugParams& params) {
    Tensor out = x;
    const auto& s = x.shape();
    for (int n = 0; n < s.n; ++n) strong_one(out.sample(n).data(), s.c, s.h, s.w, params);
    return out;
}

Tensor strong_augment(const Tensor& x, const StrongAugSpec& spec, Rng& rng) {
    Tensor out = x;
    const auto& s = x.shape();
    for (int n = 0; n < s.n; ++n) {
        const auto p = sample_strong_params(spec, rng);
        strong_one(out.sample(n).data(), s.c, s.h, s.w, p);
    }
    return out;
}

}  // namespace psmt
