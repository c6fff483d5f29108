#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "psmt/data.hpp"
#include "psmt/teachers.hpp"
#include "psmt/tensor.hpp"

namespace psmt {

// Y x Y pixel counts, rows = ground truth, columns = prediction. Pixels
// whose ground truth is IGNORE are skipped.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int num_classes = 0);

    void add(const LabelMap& pred, const LabelMap& gt);
    void merge(const ConfusionMatrix& other);

    [[nodiscard]] int num_classes() const { return classes_; }
    [[nodiscard]] std::uint64_t at(int gt, int pred) const {
        return counts_[static_cast<std::size_t>(gt) * classes_ + pred];
    }
    [[nodiscard]] std::uint64_t total() const;
    [[nodiscard]] double pixel_accuracy() const;

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    int classes_ = 0;
    std::vector<std::uint64_t> counts_;
};

struct IouResult {
    std::vector<double> per_class;  // NaN for classes absent from both prediction and gt
    double miou = 0.0;
};

IouResult iou_from(const ConfusionMatrix& cm);
IouResult miou(std::span<const LabelMap> preds, std::span<const LabelMap> gts, int num_classes);

// Argmax of the teacher-ensemble soft map.
LabelMap infer(const TeacherPair& pair, const Tensor& x);

struct Window {
    int h = 0;
    int w = 0;
};

// "HxW:SHxSW", e.g. "32x32:16x16".
std::pair<Window, Window> parse_sliding(const std::string& s);

// Maps an image batch to per-pixel class probabilities of the same size.
using SoftPredictor = std::function<Tensor(const Tensor&)>;

// Window origins along one axis: 0, s, 2s, ... with the last one clamped so
// the window ends at the border.
std::vector<int> window_origins(int extent, int window, int stride);

// Soft probabilities summed over every window covering each pixel.
Tensor sliding_soft(const SoftPredictor& predict, const Tensor& x, Window window, Window stride);
LabelMap sliding_infer(const TeacherPair& pair, const Tensor& x, Window window, Window stride);

struct EvalResult {
    ConfusionMatrix confusion;
    IouResult iou;
};

// Scores the teacher ensemble on labelled samples, optionally windowed.
EvalResult evaluate(const TeacherPair& pair, std::span<const Sample> samples, int num_classes,
                    std::optional<std::pair<Window, Window>> sliding = std::nullopt);

}  // namespace psmt
