#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "psmt/losses.hpp"
#include "psmt/model.hpp"

namespace oracle {

// Loss of the model's training-mode forward pass, with the analytic
// parameter gradient written into `grad` when it is non-null.
using LossOfProbs = std::function<psmt::LossValue(const psmt::Tensor& probs, bool with_grad)>;

inline double model_loss(const psmt::SegModel& m, const psmt::Tensor& x, const LossOfProbs& loss,
                         std::vector<double>* grad) {
    psmt::EncoderTrace et;
    psmt::DecoderTrace dt;
    const psmt::Tensor z = m.encode(x, psmt::Mode::train, &et);
    const psmt::Tensor probs = psmt::softmax_channels(m.decode(z, &dt));
    const psmt::LossValue v = loss(probs, grad != nullptr);
    if (grad) {
        grad->assign(m.params().size(), 0.0);
        const psmt::Tensor dz = m.decode_backward(dt, v.grad_logits, *grad);
        m.encode_backward(et, dz, *grad);
    }
    return v.value;
}

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t checked = 0;
};

// Central differences with step h on every parameter. Relative error is
// |a - n| / max(|a|, |n|); entries where both sides are below `floor` are
// compared absolutely against 1e-3 * floor instead.
inline GradCheckReport finite_difference_check(psmt::SegModel m, const psmt::Tensor& x,
                                               const LossOfProbs& loss, double h = 1e-4,
                                               double floor = 1e-6) {
    std::vector<double> analytic;
    model_loss(m, x, loss, &analytic);
    GradCheckReport r;
    auto params = m.params();
    for (const auto& sl : m.layout()) {
        for (std::size_t i = sl.offset; i < sl.offset + sl.size; ++i) {
            const double keep = params[i];
            params[i] = keep + h;
            const double up = model_loss(m, x, loss, nullptr);
            params[i] = keep - h;
            const double down = model_loss(m, x, loss, nullptr);
            params[i] = keep;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[i];
            const double scale = std::max(std::abs(a), std::abs(numeric));
            const double err = scale < floor ? std::abs(a - numeric) / floor : std::abs(a - numeric) / scale;
            if (err > r.max_rel_error) {
                r.max_rel_error = err;
                r.worst_param = sl.name + "[" + std::to_string(i - sl.offset) + "]";
            }
            ++r.checked;
        }
    }
    return r;
}

}  // namespace oracle
