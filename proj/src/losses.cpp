#include "psmt/losses.hpp"

#include <atomic>
#include <cmath>
#include <limits>

#include "psmt/error.hpp"

namespace psmt {

namespace {

std::atomic<std::uint64_t> g_all_ignored{0};

double neg_log(double p) { return -std::log(std::max(p, std::numeric_limits<double>::min())); }

void check_grid(const Tensor& probs, int n, int h, int w, const char* what) {
    const auto& s = probs.shape();
    if (s.n != n || s.h != h || s.w != w) {
        throw ConfigError(std::string(what) + ": map " + std::to_string(n) + "x" +
                          std::to_string(h) + "x" + std::to_string(w) +
                          " does not match prediction " + to_string(s));
    }
}

// sum_pixels weight(pixel) * CE(label(pixel), probs(pixel)) / denom, with
// grad_logits = weight * (p - onehot) / denom.
template <typename WeightFn>
LossValue weighted_ce(const Tensor& probs, const LabelMap& labels, WeightFn weight, double denom,
                      bool with_grad) {
    const auto& s = probs.shape();
    const std::size_t plane = s.plane();
    const auto ignore = ignore_label(s.c);
    LossValue out;
    if (with_grad) out.grad_logits = Tensor(s);
    if (denom <= 0.0) return out;
    double total = 0.0;
    for (int n = 0; n < s.n; ++n) {
        const double* p = probs.sample(n).data();
        double* g = with_grad ? out.grad_logits.sample(n).data() : nullptr;
        for (std::size_t px = 0; px < plane; ++px) {
            const std::size_t idx = static_cast<std::size_t>(n) * plane + px;
            const auto label = labels.values[idx];
            if (label == ignore) continue;
            if (label < 0 || label > ignore) {
                throw ConfigError("label " + std::to_string(label) + " outside [0, " +
                                  std::to_string(s.c) + "]");
            }
            const double wgt = weight(idx);
            if (wgt == 0.0) continue;
            total += wgt * neg_log(p[static_cast<std::size_t>(label) * plane + px]);
            if (g) {
                const double scale = wgt / denom;
                for (int c = 0; c < s.c; ++c) {
                    const std::size_t k = static_cast<std::size_t>(c) * plane + px;
                    g[k] = scale * (p[k] - (c == label ? 1.0 : 0.0));
                }
            }
        }
    }
    out.value = total / denom;
    return out;
}

}  // namespace

std::uint64_t all_ignored_count() { return g_all_ignored.load(); }

LossValue supervised_loss(const Tensor& probs, const LabelMap& labels, bool with_grad) {
    check_grid(probs, labels.n, labels.h, labels.w, "supervised_loss");
    const auto ignore = ignore_label(probs.shape().c);
    std::size_t valid = 0;
    for (auto v : labels.values) valid += v != ignore ? 1 : 0;
    if (valid == 0) {
        g_all_ignored.fetch_add(1);
        LossValue out;
        if (with_grad) out.grad_logits = Tensor(probs.shape());
        return out;
    }
    return weighted_ce(probs, labels, [](std::size_t) { return 1.0; },
                       static_cast<double>(valid), with_grad);
}

LossValue conf_ce_loss(const Tensor& probs, const LabelMap& hard, const ConfidenceMap& confidence,
                       bool with_grad) {
    check_grid(probs, hard.n, hard.h, hard.w, "conf_ce_loss");
    check_grid(probs, confidence.n, confidence.h, confidence.w, "conf_ce_loss");
    return weighted_ce(probs, hard, [&](std::size_t i) { return confidence.values[i]; },
                       static_cast<double>(hard.size()), with_grad);
}

LossValue cam_loss(const Tensor& probs, const LabelMap& pseudo, const ConfidenceMap& confidence,
                   bool with_grad) {
    check_grid(probs, pseudo.n, pseudo.h, pseudo.w, "cam_loss");
    check_grid(probs, confidence.n, confidence.h, confidence.w, "cam_loss");
    return weighted_ce(probs, pseudo, [&](std::size_t i) { return 1.0 - confidence.values[i]; },
                       static_cast<double>(pseudo.size()), with_grad);
}

LossValue mse_consistency_loss(const Tensor& probs, const Tensor& target_soft, bool with_grad) {
    if (probs.shape() != target_soft.shape()) {
        throw ConfigError("mse_consistency_loss: shapes " + to_string(probs.shape()) + " and " +
                          to_string(target_soft.shape()) + " differ");
    }
    const auto& s = probs.shape();
    const double denom = static_cast<double>(probs.size());
    LossValue out;
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double d = probs.data()[i] - target_soft.data()[i];
        total += d * d;
    }
    out.value = denom > 0.0 ? total / denom : 0.0;
    if (!with_grad) return out;

    // dL/dz_j = p_j (g_j - sum_c p_c g_c) with g = dL/dp = 2 (p - t) / denom
    out.grad_logits = Tensor(s);
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        const double* p = probs.sample(n).data();
        const double* t = target_soft.sample(n).data();
        double* g = out.grad_logits.sample(n).data();
        for (std::size_t px = 0; px < plane; ++px) {
            double dot = 0.0;
            for (int c = 0; c < s.c; ++c) {
                const std::size_t k = static_cast<std::size_t>(c) * plane + px;
                dot += p[k] * 2.0 * (p[k] - t[k]) / denom;
            }
            for (int c = 0; c < s.c; ++c) {
                const std::size_t k = static_cast<std::size_t>(c) * plane + px;
                g[k] = p[k] * (2.0 * (p[k] - t[k]) / denom - dot);
            }
        }
    }
    return out;
}

double beta_at(const RampSchedule& schedule, double epoch) {
    if (schedule.ramp_epochs <= 0 || epoch >= schedule.ramp_epochs) return schedule.beta_max;
    const double phase = 1.0 - std::max(epoch, 0.0) / schedule.ramp_epochs;
    return schedule.beta_max * std::exp(-5.0 * phase * phase);
}

}  // namespace psmt
