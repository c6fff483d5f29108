#include "psmt/ablation.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

#include "psmt/error.hpp"

using nlohmann::json;

namespace psmt {

const std::vector<AblationArm>& builtin_arms() {
    static const std::vector<AblationArm> arms = {
        {"supervised", {{"semi_supervised", false}, {"perturb.feature", "none"}}},
        {"mt_mse", {{"loss_mode", "mse"}, {"perturb.feature", "none"}, {"auxiliary_teacher", false}}},
        {"conf_ce", {{"loss_mode", "conf_ce"}, {"perturb.feature", "none"}, {"auxiliary_teacher", false}}},
        {"conf_ce_tvat", {{"loss_mode", "conf_ce"}, {"perturb.feature", "tvat"}, {"auxiliary_teacher", false}}},
        {"full", {{"loss_mode", "conf_ce"}, {"perturb.feature", "tvat"}, {"auxiliary_teacher", true}}},
        {"fp_original", {{"perturb.feature", "none"}}},
        {"fp_uniform", {{"perturb.feature", "uniform"}}},
        {"fp_vat", {{"perturb.feature", "vat"}}},
        {"fp_tvat", {{"perturb.feature", "tvat"}}},
        {"cutmix_before", {{"perturb.cutmix.mode", "before"}, {"perturb.zoom.enabled", false}}},
        {"cutmix_after", {{"perturb.cutmix.mode", "after"}, {"perturb.zoom.enabled", false}}},
    };
    return arms;
}

const AblationArm& find_arm(const std::string& name) {
    for (const auto& a : builtin_arms()) {
        if (a.name == name) return a;
    }
    throw ConfigError("unknown ablation arm '" + name + "'");
}

std::vector<std::string> table_arm_names() { return {"mt_mse", "conf_ce", "conf_ce_tvat", "full"}; }

RunConfig apply_arm(const RunConfig& base, const AblationArm& arm) {
    return with_overrides(base, arm.overrides);
}

double ArmResult::mean() const {
    if (miou.empty()) return std::nan("");
    double s = 0.0;
    for (double v : miou) s += v;
    return s / static_cast<double>(miou.size());
}

double ArmResult::stddev() const {
    if (miou.size() < 2) return 0.0;
    const double m = mean();
    double s = 0.0;
    for (double v : miou) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(miou.size() - 1));
}

std::vector<ArmResult> run_ablation(const RunConfig& base, const TrainData& data,
                                    const std::vector<AblationArm>& arms,
                                    const std::vector<std::uint64_t>& seeds,
                                    const std::filesystem::path& out_dir, bool verbose) {
    std::vector<ArmResult> results;
    for (const auto& arm : arms) {
        ArmResult r;
        r.arm = arm.name;
        for (auto seed : seeds) {
            const auto dir = out_dir / (arm.name + "_seed" + std::to_string(seed));
            try {
                RunConfig cfg = apply_arm(base, arm);
                cfg.seed = seed;
                const auto res = run_training(cfg, data, dir);
                if (!res.final_eval) throw ConfigError("run produced no validation score");
                r.seeds.push_back(seed);
                r.miou.push_back(res.final_eval->iou.miou);
                if (verbose) {
                    std::cerr << arm.name << " seed " << seed << " mIoU " << r.miou.back() << "\n";
                }
            } catch (const std::exception& e) {
                r.failures.push_back("seed " + std::to_string(seed) + ": " + e.what());
                if (verbose) std::cerr << arm.name << " seed " << seed << " failed: " << e.what() << "\n";
            }
        }
        results.push_back(std::move(r));
    }
    return results;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string fixed(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

std::string ablation_csv(const RunConfig& base, const std::vector<AblationArm>& arms,
                         const std::vector<ArmResult>& results) {
    std::ostringstream out;
    out << "arm,loss_mode,feature,aux_teacher,cutmix,semi_supervised,runs,miou_mean,miou_std,miou_per_seed,failures\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        std::string cutmix;
        std::string feature;
        std::string loss;
        std::string aux;
        std::string semi;
        try {
            const RunConfig c = apply_arm(base, arms[i]);
            cutmix = c.perturb.cutmix.mode == CutMixMode::off ? "off" : to_string(c.perturb.cutmix.mode);
            if (!c.perturb.zoom) cutmix += "+nozoom";
            feature = to_string(c.perturb.feature);
            loss = to_string(c.loss_mode);
            aux = c.auxiliary_teacher ? "on" : "off";
            semi = c.semi_supervised ? "on" : "off";
        } catch (const std::exception&) {
        }
        std::string per_seed;
        for (std::size_t k = 0; k < r.miou.size(); ++k) {
            per_seed += (k ? ";" : "") + fixed(r.miou[k]);
        }
        std::string failures;
        for (const auto& f : r.failures) failures += (failures.empty() ? "" : " | ") + f;
        out << csv_field(r.arm) << ',' << loss << ',' << feature << ',' << aux << ',' << cutmix << ','
            << semi << ',' << r.miou.size() << ',' << fixed(r.mean()) << ',' << fixed(r.stddev()) << ','
            << per_seed << ',' << csv_field(failures) << "\n";
    }
    return out.str();
}

}  // namespace psmt
