#include "psmt/teachers.hpp"

#include <algorithm>

#include "psmt/error.hpp"

namespace psmt {

namespace {

void check_gamma(double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) {
        throw ConfigError("EMA decay gamma must lie in (0, 1), got " + std::to_string(gamma));
    }
}

void blend(std::span<double> dst, std::span<const double> src, double gamma) {
    const double keep = 1.0 - gamma;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = gamma * dst[i] + keep * src[i];
}

}  // namespace

Tensor EnsemblePrediction::hard_one_hot() const {
    const auto& s = soft.shape();
    Tensor out(s);
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        for (std::size_t p = 0; p < plane; ++p) {
            const auto c = hard.values[static_cast<std::size_t>(n) * plane + p];
            out.sample(n)[static_cast<std::size_t>(c) * plane + p] = 1.0;
        }
    }
    return out;
}

EnsemblePrediction make_prediction(Tensor soft, double tau) {
    if (!(tau >= 0.0 && tau < 1.0)) {
        throw ConfigError("confidence threshold tau must lie in [0, 1), got " + std::to_string(tau));
    }
    EnsemblePrediction out;
    out.hard = argmax_channels(soft);
    const auto& s = soft.shape();
    out.confidence = ConfidenceMap(s.n, s.h, s.w);
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        const double* probs = soft.sample(n).data();
        for (std::size_t p = 0; p < plane; ++p) {
            const std::size_t idx = static_cast<std::size_t>(n) * plane + p;
            const double top = probs[static_cast<std::size_t>(out.hard.values[idx]) * plane + p];
            out.confidence.values[idx] = top > tau ? top : 0.0;
        }
    }
    out.soft = std::move(soft);
    return out;
}

TeacherPair::TeacherPair(const SegModel& student, double gamma, bool auxiliary)
    : TeacherPair(student, student, gamma, auxiliary) {}

TeacherPair::TeacherPair(SegModel first, SegModel second, double gamma, bool auxiliary)
    : first_(std::move(first)), second_(std::move(second)), gamma_(gamma), auxiliary_(auxiliary) {
    check_gamma(gamma);
    if (!first_.same_layout(second_)) {
        throw ConfigError("teacher architectures differ");
    }
}

void TeacherPair::set_gamma(double gamma) {
    check_gamma(gamma);
    gamma_ = gamma;
}

std::vector<const SegModel*> TeacherPair::members() const {
    if (!auxiliary_) return {&first_};
    return {&first_, &second_};
}

Tensor TeacherPair::ensemble_logits(const Tensor& x) const {
    if (!auxiliary_) return first_.logits(x);
    Tensor a = first_.logits(x);
    const Tensor b = second_.logits(x);
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) av[i] = 0.5 * (av[i] + bv[i]);
    return a;
}

EnsemblePrediction ensemble_predict(const TeacherPair& pair, const Tensor& x, double tau) {
    return make_prediction(softmax_channels(pair.ensemble_logits(x)), tau);
}

void ema_update(TeacherPair& pair, const SegModel& student) {
    ema_update(pair, student, pair.gamma());
}

void ema_update(TeacherPair& pair, const SegModel& student, double gamma) {
    check_gamma(gamma);
    const TeacherSlot slot = pair.auxiliary() ? pair.cursor() : TeacherSlot::first;
    SegModel& t = pair.teacher(slot);
    if (!t.same_layout(student)) throw ConfigError("EMA: student and teacher architectures differ");
    blend(t.params(), student.params(), gamma);
    blend(t.buffers(), student.buffers(), gamma);
}

void advance_epoch(TeacherPair& pair) {
    pair.set_cursor(pair.cursor() == TeacherSlot::first ? TeacherSlot::second : TeacherSlot::first);
}

double ramped_gamma(double gamma, long step) {
    return std::min(1.0 - 1.0 / (static_cast<double>(step) + 2.0), gamma);
}

}  // namespace psmt
