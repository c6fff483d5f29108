#pragma once

#include <optional>
#include <span>
#include <vector>

#include "psmt/model.hpp"
#include "psmt/rng.hpp"
#include "psmt/teachers.hpp"
#include "psmt/tensor.hpp"

namespace psmt {

// ---------------------------------------------------------------- feature perturbation

struct TVatSpec {
    double epsilon = 2.0;  // L2 radius per sample
    int power_iters = 1;
    double xi = 1e-6;      // probe scale of the power iteration
    void validate() const;
};

enum class FeaturePerturbation { none, uniform, vat, tvat };

const char* to_string(FeaturePerturbation p);
FeaturePerturbation parse_feature_perturbation(const std::string& s);

// Sum over pixels of KL(p || q) for two NCHW probability maps.
double kl_divergence(const Tensor& p, const Tensor& q);

// Softmax of the mean decoder logits of `decoders` evaluated at `features`.
Tensor decoder_ensemble_probs(const Tensor& features, std::span<const SegModel* const> decoders);

// Power-iteration estimate of the perturbation r (per-sample ||r|| = epsilon)
// maximising KL(ensemble(z) || ensemble(z + r)), where the ensemble averages
// the logits of the given decoders. The clean prediction is a constant.
Tensor adversarial_perturbation(const Tensor& features, std::span<const SegModel* const> decoders,
                                const TVatSpec& spec, Rng& rng);

// Teacher-guided variant: the divergence is measured through the teachers'
// decoders, the result is added to the student's features.
Tensor tvat_perturbation(const Tensor& student_features, const TeacherPair& pair,
                         const TVatSpec& spec, Rng& rng);

// Entries uniform in [-1, 1], rescaled to per-sample norm epsilon.
Tensor uniform_perturbation(const Shape& shape, double epsilon, Rng& rng);

// Per-sample L2 norms.
std::vector<double> sample_norms(const Tensor& t);

// ---------------------------------------------------------------- CutMix

struct CutMixBox {
    int top = 0;
    int left = 0;
    int height = 0;
    int width = 0;
};

struct CutMixMask {
    int h = 0;
    int w = 0;
    CutMixBox box;

    [[nodiscard]] bool inside(int y, int x) const {
        return y >= box.top && y < box.top + box.height && x >= box.left && x < box.left + box.width;
    }
    [[nodiscard]] double area_fraction() const {
        return static_cast<double>(box.height) * box.width / (static_cast<double>(h) * w);
    }
    // Dense 0/1 view.
    [[nodiscard]] PixelGrid<std::uint8_t> dense() const;
};

enum class CutMixMode { after, before, off };
const char* to_string(CutMixMode m);
CutMixMode parse_cutmix_mode(const std::string& s);

struct CutMixSpec {
    CutMixMode mode = CutMixMode::after;
    double area_min = 0.25;
    double area_max = 0.5;
    double aspect_min = 0.5;
    double aspect_max = 2.0;
    void validate() const;
};

CutMixMask make_cutmix_mask(int h, int w, CutMixBox box);
CutMixMask sample_cutmix_mask(int h, int w, const CutMixSpec& spec, Rng& rng);

// (1 - m) * xi + m * xj, sample b of the batch using masks[b]. A single mask
// is applied to every sample.
Tensor cutmix_combine(const Tensor& xi, const Tensor& xj, std::span<const CutMixMask> masks);
Tensor cutmix_combine(const Tensor& xi, const Tensor& xj, const CutMixMask& mask);

template <typename T>
PixelGrid<T> cutmix_combine_grid(const PixelGrid<T>& a, const PixelGrid<T>& b,
                                 std::span<const CutMixMask> masks);

// Composites soft map, hard labels and confidence of two teacher predictions
// with the masks used on the images.
EnsemblePrediction cutmix_after_prediction(const EnsemblePrediction& pred_i,
                                           const EnsemblePrediction& pred_j,
                                           std::span<const CutMixMask> masks);

// Batch with sample b replaced by sample perm[b].
Tensor permute_batch(const Tensor& t, std::span<const int> perm);
EnsemblePrediction permute_batch(const EnsemblePrediction& p, std::span<const int> perm);
LabelMap permute_batch(const LabelMap& l, std::span<const int> perm);

// ---------------------------------------------------------------- zoom

struct ZoomSpec {
    double scale = 1.0;
    int multiple = 1;  // output sides are rounded to a multiple of this
};

struct Extent {
    int h = 0;
    int w = 0;
};

// round(s*H) x round(s*W), snapped to `multiple`; ConfigError below 16.
Extent zoomed_extent(int h, int w, const ZoomSpec& spec);

Tensor resize_image(const Tensor& x, int h, int w);  // bilinear
template <typename T>
PixelGrid<T> resize_nearest(const PixelGrid<T>& g, int h, int w);

Tensor zoom_image(const Tensor& x, const ZoomSpec& spec);
// Hard labels and confidence resampled nearest-neighbour (so c keeps its
// {0} U (tau, 1] support), soft map bilinearly.
EnsemblePrediction zoom_consistency_targets(const EnsemblePrediction& pred, const ZoomSpec& spec);

// ---------------------------------------------------------------- weak / strong

struct WeakAugSpec {
    std::vector<double> scales{1.0};
    double flip_p = 0.5;
    int crop = 0;  // square crop side; 0 keeps the scaled size
};

struct WeakAugParams {
    double scale = 1.0;
    bool flip = false;
    int crop_top = 0;
    int crop_left = 0;
    int crop_h = 0;  // 0: no crop
    int crop_w = 0;
};

WeakAugParams sample_weak_params(int h, int w, const WeakAugSpec& spec, Rng& rng);

struct WeakAugResult {
    Tensor image;
    std::optional<LabelMap> label;
    WeakAugParams params;
};

// Geometric transform (scale, horizontal flip, crop) applied identically to
// a single image and its optional label map.
WeakAugResult apply_weak(const Tensor& x, const LabelMap* y, const WeakAugParams& params);
WeakAugResult weak_augment(const Tensor& x, const LabelMap* y, const WeakAugSpec& spec, Rng& rng);

struct StrongAugSpec {
    double jitter_p = 0.8;
    double brightness = 0.4;
    double contrast = 0.4;
    double saturation = 0.4;
    double grayscale_p = 0.2;
    double blur_p = 0.5;
    double blur_sigma_min = 0.1;
    double blur_sigma_max = 2.0;
};

struct StrongAugParams {
    bool jitter = false;
    double brightness = 1.0;
    double contrast = 1.0;
    double saturation = 1.0;
    bool grayscale = false;
    bool blur = false;
    double sigma = 0.0;
};

StrongAugParams sample_strong_params(const StrongAugSpec& spec, Rng& rng);
// Photometric only; every sample of the batch gets its own draw.
Tensor apply_strong(const Tensor& x, const StrongAugParams& params);
Tensor strong_augment(const Tensor& x, const StrongAugSpec& spec, Rng& rng);

}  // namespace psmt
