#include "psmt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "psmt/error.hpp"

namespace psmt {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : classes_(num_classes),
      counts_(static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(num_classes), 0) {}

void ConfusionMatrix::add(const LabelMap& pred, const LabelMap& gt) {
    if (pred.n != gt.n || pred.h != gt.h || pred.w != gt.w) {
        throw ConfigError("confusion matrix: prediction and ground truth shapes differ");
    }
    const auto ignore = ignore_label(classes_);
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const int g = gt.values[i];
        if (g == ignore) continue;
        const int p = pred.values[i];
        if (g < 0 || g >= classes_ || p < 0 || p >= classes_) {
            throw ConfigError("confusion matrix: class index out of range");
        }
        ++counts_[static_cast<std::size_t>(g) * classes_ + p];
    }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.classes_ != classes_) throw ConfigError("confusion matrix: class counts differ");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
}

double ConfusionMatrix::pixel_accuracy() const {
    std::uint64_t hit = 0;
    for (int c = 0; c < classes_; ++c) hit += at(c, c);
    const auto t = total();
    return t ? static_cast<double>(hit) / static_cast<double>(t) : 0.0;
}

IouResult iou_from(const ConfusionMatrix& cm) {
    const int y = cm.num_classes();
    IouResult r;
    r.per_class.assign(static_cast<std::size_t>(y), std::numeric_limits<double>::quiet_NaN());
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < y; ++c) {
        std::uint64_t tp = cm.at(c, c);
        std::uint64_t fp = 0;
        std::uint64_t fn = 0;
        for (int k = 0; k < y; ++k) {
            if (k == c) continue;
            fp += cm.at(k, c);
            fn += cm.at(c, k);
        }
        const auto denom = tp + fp + fn;
        if (denom == 0) continue;
        const double iou = static_cast<double>(tp) / static_cast<double>(denom);
        r.per_class[static_cast<std::size_t>(c)] = iou;
        sum += iou;
        ++present;
    }
    r.miou = present ? sum / present : 0.0;
    return r;
}

IouResult miou(std::span<const LabelMap> preds, std::span<const LabelMap> gts, int num_classes) {
    if (preds.empty()) throw ConfigError("miou: empty input list");
    if (preds.size() != gts.size()) throw ConfigError("miou: prediction and ground-truth counts differ");
    ConfusionMatrix cm(num_classes);
    for (std::size_t i = 0; i < preds.size(); ++i) cm.add(preds[i], gts[i]);
    return iou_from(cm);
}

LabelMap infer(const TeacherPair& pair, const Tensor& x) {
    return argmax_channels(softmax_channels(pair.ensemble_logits(x)));
}

std::pair<Window, Window> parse_sliding(const std::string& s) {
    int wh = 0, ww = 0, sh = 0, sw = 0;
    char a = 0, b = 0, c = 0;
    if (std::sscanf(s.c_str(), "%d%c%d%c%d%c%d", &wh, &a, &ww, &b, &sh, &c, &sw) != 7 || a != 'x' ||
        b != ':' || c != 'x' || wh <= 0 || ww <= 0 || sh <= 0 || sw <= 0) {
        throw ConfigError("invalid sliding spec '" + s + "' (expected HxW:SHxSW)");
    }
    return {{wh, ww}, {sh, sw}};
}

std::vector<int> window_origins(int extent, int window, int stride) {
    if (window > extent) {
        throw ConfigError("sliding window " + std::to_string(window) + " larger than image side " +
                          std::to_string(extent));
    }
    if (stride <= 0 || stride > window) throw ConfigError("sliding stride must be in [1, window]");
    std::vector<int> out;
    for (int o = 0;; o += stride) {
        const int clamped = std::min(o, extent - window);
        if (out.empty() || out.back() != clamped) out.push_back(clamped);
        if (o + window >= extent) break;
    }
    return out;
}

Tensor sliding_soft(const SoftPredictor& predict, const Tensor& x, Window window, Window stride) {
    const auto& s = x.shape();
    const auto ys = window_origins(s.h, window.h, stride.h);
    const auto xs = window_origins(s.w, window.w, stride.w);
    Tensor acc;
    Tensor patch({s.n, s.c, window.h, window.w});
    for (int oy : ys) {
        for (int ox : xs) {
            for (int n = 0; n < s.n; ++n) {
                for (int c = 0; c < s.c; ++c) {
                    for (int y = 0; y < window.h; ++y) {
                        const double* src = x.sample(n).data() + (static_cast<std::size_t>(c) * s.h + oy + y) * s.w + ox;
                        std::copy(src, src + window.w, &patch.at(n, c, y, 0));
                    }
                }
            }
            const Tensor p = predict(patch);
            if (acc.empty()) acc = Tensor({s.n, p.shape().c, s.h, s.w});
            for (int n = 0; n < s.n; ++n) {
                for (int c = 0; c < p.shape().c; ++c) {
                    for (int y = 0; y < window.h; ++y) {
                        for (int q = 0; q < window.w; ++q) acc.at(n, c, oy + y, ox + q) += p.at(n, c, y, q);
                    }
                }
            }
        }
    }
    return acc;
}

LabelMap sliding_infer(const TeacherPair& pair, const Tensor& x, Window window, Window stride) {
    const auto& s = x.shape();
    if (window.h == s.h && window.w == s.w) return infer(pair, x);
    auto predict = [&pair](const Tensor& patch) { return softmax_channels(pair.ensemble_logits(patch)); };
    return argmax_channels(sliding_soft(predict, x, window, stride));
}

EvalResult evaluate(const TeacherPair& pair, std::span<const Sample> samples, int num_classes,
                    std::optional<std::pair<Window, Window>> sliding) {
    if (samples.empty()) throw ConfigError("evaluate: no samples");
    for (const auto& smp : samples) {
        if (!smp.mask) throw DataError("evaluate: sample " + smp.id + " has no mask");
        // Validate up front: nothing may throw inside the parallel region.
        if (sliding) {
            window_origins(smp.image.shape().h, sliding->first.h, sliding->second.h);
            window_origins(smp.image.shape().w, sliding->first.w, sliding->second.w);
            pair.teacher(TeacherSlot::first).check_image({1, smp.image.shape().c, sliding->first.h, sliding->first.w});
        } else {
            pair.teacher(TeacherSlot::first).check_image(smp.image.shape());
        }
    }
    std::vector<ConfusionMatrix> parts(samples.size(), ConfusionMatrix(num_classes));
    // Per-image matrices merged in order keep the result independent of scheduling.
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& smp = samples[i];
        const LabelMap pred = sliding ? sliding_infer(pair, smp.image, sliding->first, sliding->second)
                                      : infer(pair, smp.image);
        parts[i].add(pred, *smp.mask);
    }
    EvalResult r{ConfusionMatrix(num_classes), {}};
    for (const auto& p : parts) r.confusion.merge(p);
    r.iou = iou_from(r.confusion);
    return r;
}

}  // namespace psmt
