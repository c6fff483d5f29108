#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "psmt/checkpoint.hpp"
#include "psmt/config.hpp"
#include "psmt/data.hpp"
#include "psmt/eval.hpp"
#include "psmt/losses.hpp"
#include "psmt/teachers.hpp"

namespace psmt {

// Everything a training run reads, held in memory.
struct TrainData {
    std::vector<Sample> labelled;
    std::vector<Sample> unlabelled;
    std::vector<Sample> val;
    std::vector<LabelMap> cam_pseudo;  // aligned with `unlabelled` when the CAM loss is on
    int num_classes = kSyntheticClasses;
    std::string manifest_hash;
};

TrainData load_train_data(const RunConfig& config);

struct TrainState {
    SegModel student;
    TeacherPair teachers;
    std::vector<double> velocity;  // momentum buffer, bound to the student only
    long epoch = 0;                // completed epochs
    long iter = 0;                 // completed steps
};

TrainState init_state(const RunConfig& config);

// lr0 * (1 - iter / max_iter)^power.
double lr_at(const RunConfig& config, long iter, long max_iter);

// ceil(|U| / batch_unlabelled); the labelled set decides when there is no
// unlabelled data. The supervised-only arm uses the same count.
long iters_per_epoch(const RunConfig& config, std::size_t n_labelled, std::size_t n_unlabelled);

struct StepBatch {
    std::vector<const Sample*> labelled;
    std::vector<const Sample*> unlabelled;
    std::vector<const LabelMap*> cam_pseudo;  // empty unless the CAM loss is on
};

// One optimisation step. Randomness comes from the substream (seed, step, iter).
LossReport train_step(TrainState& state, const RunConfig& config, const StepBatch& batch,
                      long max_iter);

// Plain SGD with momentum and L2 weight decay on `params`.
void sgd_step(std::span<double> params, std::vector<double>& velocity, std::span<const double> grad,
              double lr, double momentum, double weight_decay);

struct LayerMagnitude {
    std::string layer;
    double mean_abs = 0.0;
};

// Mean |d consistency / d theta| per named layer of the student for `mode`,
// using the teachers' current prediction on `x` as target. Nothing is updated.
std::vector<LayerMagnitude> gradient_magnitude_probe(const TrainState& state, const RunConfig& config,
                                                     const Tensor& x, LossMode mode);

Checkpoint state_checkpoint(const TrainState& state, const RunConfig& config);
TrainState restore_state(const Checkpoint& ckpt, RunConfig* config_out = nullptr);

struct TrainOptions {
    std::optional<std::filesystem::path> resume;  // checkpoint to continue from
    bool verbose = false;
};

struct TrainResult {
    TrainState state;
    std::filesystem::path run_dir;
    std::filesystem::path last_checkpoint;
    std::optional<EvalResult> final_eval;
};

// Runs (or resumes) the epoch loop, writing metrics.jsonl, run.json and
// checkpoints/epoch_NNNN.ckpt under `run_dir`.
TrainResult run_training(const RunConfig& config, const TrainData& data,
                         const std::filesystem::path& run_dir, const TrainOptions& options = {});

std::string checkpoint_name(long epoch);

}  // namespace psmt
