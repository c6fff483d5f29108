#pragma once

#include <vector>

#include "psmt/perturb.hpp"

namespace oracle {

struct DirectionTrial {
    double adversarial_kl = 0.0;
    double random_mean_kl = 0.0;
};

// KL gain of r against `directions` random Gaussian directions of the same
// per-sample norm, all measured through the same decoder ensemble.
inline DirectionTrial compare_random_directions(const psmt::Tensor& z, const psmt::Tensor& r,
                                                std::span<const psmt::SegModel* const> decoders,
                                                int directions, psmt::Rng& rng) {
    using psmt::Tensor;
    const Tensor clean = psmt::decoder_ensemble_probs(z, decoders);
    auto kl_at = [&](const Tensor& d) {
        Tensor moved = z;
        for (std::size_t i = 0; i < moved.size(); ++i) moved.data()[i] += d.data()[i];
        return psmt::kl_divergence(clean, psmt::decoder_ensemble_probs(moved, decoders));
    };
    DirectionTrial t;
    t.adversarial_kl = kl_at(r);
    const auto target = psmt::sample_norms(r);
    const int n = z.shape().n;
    const std::size_t per = z.size() / static_cast<std::size_t>(n);
    double sum = 0.0;
    for (int k = 0; k < directions; ++k) {
        Tensor d(z.shape());
        for (double& v : d.values()) v = rng.normal();
        const auto norms = psmt::sample_norms(d);
        for (int b = 0; b < n; ++b) {
            for (std::size_t i = 0; i < per; ++i) d.data()[b * per + i] *= target[b] / norms[b];
        }
        sum += kl_at(d);
    }
    t.random_mean_kl = sum / directions;
    return t;
}

}  // namespace oracle
