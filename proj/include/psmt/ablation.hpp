#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "psmt/config.hpp"
#include "psmt/trainer.hpp"

namespace psmt {

// A named RunConfig delta, expressed as dotted-key overrides.
struct AblationArm {
    std::string name;
    nlohmann::json overrides = nlohmann::json::object();
};

// supervised, mt_mse, conf_ce, conf_ce_tvat, full (the component table),
// fp_original, fp_uniform, fp_vat, fp_tvat (feature perturbations),
// cutmix_before, cutmix_after.
const std::vector<AblationArm>& builtin_arms();
const AblationArm& find_arm(const std::string& name);
// The four component rows, MT+MSE first.
std::vector<std::string> table_arm_names();

RunConfig apply_arm(const RunConfig& base, const AblationArm& arm);

struct ArmResult {
    std::string arm;
    std::vector<std::uint64_t> seeds;
    std::vector<double> miou;  // one per successful seed
    std::vector<std::string> failures;
    [[nodiscard]] double mean() const;
    [[nodiscard]] double stddev() const;  // sample standard deviation, 0 for one run
};

// Runs every arm x seed in order; a failing run is recorded and skipped.
std::vector<ArmResult> run_ablation(const RunConfig& base, const TrainData& data,
                                    const std::vector<AblationArm>& arms,
                                    const std::vector<std::uint64_t>& seeds,
                                    const std::filesystem::path& out_dir, bool verbose = false);

// Fixed column order: arm,loss_mode,feature,aux_teacher,cutmix,semi_supervised,
// runs,miou_mean,miou_std,miou_per_seed,failures
std::string ablation_csv(const RunConfig& base, const std::vector<AblationArm>& arms,
                         const std::vector<ArmResult>& results);

}  // namespace psmt
