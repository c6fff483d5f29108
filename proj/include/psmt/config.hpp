#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "psmt/losses.hpp"
#include "psmt/model.hpp"
#include "psmt/perturb.hpp"

namespace psmt {

enum class LossMode { conf_ce, mse };
const char* to_string(LossMode m);
LossMode parse_loss_mode(const std::string& s);

enum class EmaCadence { iter, epoch };

// Declarative description of the active perturbation stack.
struct PerturbationSpec {
    FeaturePerturbation feature = FeaturePerturbation::tvat;
    TVatSpec tvat;
    bool tvat_labelled = true;  // also perturb the supervised pass
    CutMixSpec cutmix;
    bool zoom = true;
    std::vector<double> zoom_scales{0.5, 0.75, 1.25};
    double cutmix_branch_p = 0.5;  // chance of CutMix when both branches are on
    WeakAugSpec weak{{0.75, 1.0, 1.25}, 0.5, 48};
    bool strong = true;
    StrongAugSpec strong_aug;
};

struct RunConfig {
    // data
    std::string dataset;  // training dataset root
    std::string split;    // split manifest
    std::string val;      // validation dataset root
    // schedule
    int epochs = 40;
    int batch_labelled = 8;
    int batch_unlabelled = 8;
    double lr0 = 0.01;
    double poly_power = 0.9;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    // teachers
    double gamma = 0.99;
    bool gamma_ramp = false;
    EmaCadence ema_cadence = EmaCadence::iter;
    bool auxiliary_teacher = true;
    double tau = 0.8;
    // objective
    bool semi_supervised = true;  // false: supervised-only baseline
    LossMode loss_mode = LossMode::conf_ce;
    RampSchedule ramp;
    bool cam_loss = false;
    std::string cam_labels;  // directory of <id>.png pseudo-labels
    double cam_weight = 1.0;
    PerturbationSpec perturb;
    ArchDescriptor arch;
    // bookkeeping
    std::uint64_t seed = 0;
    int checkpoint_every = 5;
    int eval_every = 5;
    bool log_iters = true;

    void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
// Strict: keys absent from the default tree are rejected with their dotted
// name; missing keys keep their defaults.
void from_json(const nlohmann::json& j, RunConfig& c);

RunConfig load_config(const std::string& path);
RunConfig config_from_json(const nlohmann::json& j);

// Applies {"a.b.c": value}-style overrides through the same strict parser.
RunConfig with_overrides(const RunConfig& base, const nlohmann::json& dotted);

}  // namespace psmt
