#pragma once

#include <vector>

#include "psmt/model.hpp"
#include "psmt/tensor.hpp"

namespace psmt {

enum class TeacherSlot { first, second };

// What the consistency loss consumes from the teachers: the ensemble soft
// map, its one-hot argmax (stored as class indices), and the gated
// confidence c = max prob if it exceeds tau, else 0.
struct EnsemblePrediction {
    Tensor soft;
    LabelMap hard;
    ConfidenceMap confidence;

    [[nodiscard]] Tensor hard_one_hot() const;
};

// Builds hard labels and the tau-gated confidence from a soft map.
EnsemblePrediction make_prediction(Tensor soft, double tau);

// Two EMA teachers and the cursor naming which one takes EMA updates during
// the current epoch. With `auxiliary == false` the pair collapses to the
// single-teacher mean teacher: only the first teacher predicts and receives
// updates.
class TeacherPair {
public:
    TeacherPair() = default;
    // Both teachers cloned from the student.
    TeacherPair(const SegModel& student, double gamma, bool auxiliary = true);
    TeacherPair(SegModel first, SegModel second, double gamma, bool auxiliary = true);

    [[nodiscard]] const SegModel& teacher(TeacherSlot s) const {
        return s == TeacherSlot::first ? first_ : second_;
    }
    SegModel& teacher(TeacherSlot s) { return s == TeacherSlot::first ? first_ : second_; }

    [[nodiscard]] TeacherSlot cursor() const { return cursor_; }
    void set_cursor(TeacherSlot s) { cursor_ = s; }
    [[nodiscard]] double gamma() const { return gamma_; }
    void set_gamma(double gamma);
    [[nodiscard]] bool auxiliary() const { return auxiliary_; }

    // Models taking part in the ensemble (2, or 1 when collapsed).
    [[nodiscard]] std::vector<const SegModel*> members() const;
    // Mean of the members' logits.
    [[nodiscard]] Tensor ensemble_logits(const Tensor& x) const;

private:
    SegModel first_;
    SegModel second_;
    double gamma_ = 0.99;
    bool auxiliary_ = true;
    TeacherSlot cursor_ = TeacherSlot::first;
};

EnsemblePrediction ensemble_predict(const TeacherPair& pair, const Tensor& x, double tau);

// theta_k = gamma * theta_k + (1 - gamma) * theta_student for the cursor
// teacher (always the first when collapsed). Batch-norm running statistics
// follow the same rule. `gamma` defaults to the pair's own.
void ema_update(TeacherPair& pair, const SegModel& student);
void ema_update(TeacherPair& pair, const SegModel& student, double gamma);

// Flips the cursor; parameters are untouched.
void advance_epoch(TeacherPair& pair);

// Mean-teacher style warm-up, min(1 - 1/(step + 2), gamma): 0.5 at step 0.
double ramped_gamma(double gamma, long step);

}  // namespace psmt
