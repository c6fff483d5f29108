#pragma once

#include <cstdint>

#include "psmt/teachers.hpp"
#include "psmt/tensor.hpp"

namespace psmt {

// Loss value and its gradient with respect to the logits that produced
// `probs` (same NCHW shape). The gradient is left empty when not requested.
struct LossValue {
    double value = 0.0;
    Tensor grad_logits;
};

// Mean pixel cross-entropy over non-ignored pixels. A batch with every
// pixel ignored yields 0 and bumps all_ignored_count().
LossValue supervised_loss(const Tensor& probs, const LabelMap& labels, bool with_grad = true);
std::uint64_t all_ignored_count();

// Confidence-weighted CE against the teachers' hard labels, averaged over
// all pixels (pixels with c = 0 still count in the denominator).
LossValue conf_ce_loss(const Tensor& probs, const LabelMap& hard, const ConfidenceMap& confidence,
                       bool with_grad = true);
inline LossValue conf_ce_loss(const Tensor& probs, const EnsemblePrediction& target,
                              bool with_grad = true) {
    return conf_ce_loss(probs, target.hard, target.confidence, with_grad);
}

// Mean squared difference of probability maps over every pixel and class.
LossValue mse_consistency_loss(const Tensor& probs, const Tensor& target_soft, bool with_grad = true);

// CE against external pseudo-labels weighted by (1 - c), averaged over all
// pixels. Ignored pseudo-label pixels contribute 0.
LossValue cam_loss(const Tensor& probs, const LabelMap& pseudo, const ConfidenceMap& confidence,
                   bool with_grad = true);

struct RampSchedule {
    double beta_max = 1.0;
    int ramp_epochs = 5;
};

// beta_max * exp(-5 (1 - t/T)^2) for t < T, beta_max afterwards.
double beta_at(const RampSchedule& schedule, double epoch);

struct LossReport {
    double sup = 0.0;
    double con = 0.0;
    double cam = 0.0;
    double beta = 0.0;
    double cam_weight = 0.0;
    double total = 0.0;
};

inline double combine(const LossReport& r) { return r.sup + r.beta * r.con + r.cam_weight * r.cam; }

}  // namespace psmt
