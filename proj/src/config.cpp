#include "psmt/config.hpp"

#include <cmath>

#include "psmt/error.hpp"
#include "psmt/io.hpp"

using nlohmann::json;

namespace psmt {

const char* to_string(LossMode m) { return m == LossMode::conf_ce ? "conf_ce" : "mse"; }

LossMode parse_loss_mode(const std::string& s) {
    if (s == "conf_ce") return LossMode::conf_ce;
    if (s == "mse") return LossMode::mse;
    throw ConfigError("unknown loss_mode '" + s + "' (conf_ce|mse)");
}

namespace {

EmaCadence parse_cadence(const std::string& s) {
    if (s == "iter") return EmaCadence::iter;
    if (s == "epoch") return EmaCadence::epoch;
    throw ConfigError("unknown ema_cadence '" + s + "' (iter|epoch)");
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
}

// Every key of `given` must exist in `known`, recursively, with a matching JSON kind.
void check_keys(const json& given, const json& known, const std::string& prefix) {
    if (!given.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
    for (const auto& [key, value] : given.items()) {
        const std::string name = prefix.empty() ? key : prefix + "." + key;
        if (!known.contains(key)) throw ConfigError("unknown config key '" + name + "'");
        const auto& ref = known.at(key);
        if (ref.is_object()) {
            check_keys(value, ref, name);
            continue;
        }
        const bool ok = (ref.is_number() && value.is_number()) ||
                        (ref.is_boolean() && value.is_boolean()) ||
                        (ref.is_string() && value.is_string()) || (ref.is_array() && value.is_array());
        if (!ok) throw ConfigError("config key '" + name + "' has the wrong type");
    }
}

}  // namespace

void RunConfig::validate() const {
    require(epochs >= 0, "epochs must be >= 0");
    require(batch_labelled >= 1 && batch_unlabelled >= 1, "batch sizes must be >= 1");
    require(lr0 > 0.0 && poly_power > 0.0, "lr0 and poly_power must be positive");
    require(momentum >= 0.0 && momentum < 1.0, "momentum must be in [0, 1)");
    require(weight_decay >= 0.0, "weight_decay must be >= 0");
    require(gamma > 0.0 && gamma < 1.0, "gamma must be in (0, 1)");
    require(tau >= 0.0 && tau < 1.0, "tau must be in [0, 1)");
    require(ramp.beta_max >= 0.0 && ramp.ramp_epochs >= 0, "ramp values must be >= 0");
    require(cam_weight >= 0.0, "cam_weight must be >= 0");
    require(!cam_loss || !cam_labels.empty(), "cam_loss enabled without cam_labels");
    require(checkpoint_every >= 1 && eval_every >= 0, "checkpoint_every >= 1 and eval_every >= 0");
    require(perturb.cutmix_branch_p >= 0.0 && perturb.cutmix_branch_p <= 1.0,
            "perturb.cutmix_branch_p must be in [0, 1]");
    require(!perturb.zoom || !perturb.zoom_scales.empty(), "perturb.zoom_scales is empty");
    for (double s : perturb.zoom_scales) require(s > 0.0, "zoom scales must be positive");
    require(!perturb.weak.scales.empty(), "perturb.weak.scales is empty");
    if (perturb.weak.crop == 0) {
        for (double s : perturb.weak.scales) {
            require(s == 1.0, "perturb.weak.scales other than 1 need a crop so batches share a size");
        }
    }
    if (perturb.feature != FeaturePerturbation::none) perturb.tvat.validate();
    perturb.cutmix.validate();
    arch.validate();
    if (perturb.weak.crop > 0) {
        require(perturb.weak.crop % arch.downsample_factor() == 0 && perturb.weak.crop >= kMinImageSide,
                "perturb.weak.crop must be >= 16 and divisible by the downsample factor");
    }
}

void to_json(json& j, const RunConfig& c) {
    const auto& p = c.perturb;
    j = json{
        {"dataset", c.dataset},
        {"split", c.split},
        {"val", c.val},
        {"epochs", c.epochs},
        {"batch_labelled", c.batch_labelled},
        {"batch_unlabelled", c.batch_unlabelled},
        {"lr0", c.lr0},
        {"poly_power", c.poly_power},
        {"momentum", c.momentum},
        {"weight_decay", c.weight_decay},
        {"gamma", c.gamma},
        {"gamma_ramp", c.gamma_ramp},
        {"ema_cadence", c.ema_cadence == EmaCadence::iter ? "iter" : "epoch"},
        {"auxiliary_teacher", c.auxiliary_teacher},
        {"tau", c.tau},
        {"semi_supervised", c.semi_supervised},
        {"loss_mode", to_string(c.loss_mode)},
        {"ramp", {{"beta_max", c.ramp.beta_max}, {"ramp_epochs", c.ramp.ramp_epochs}}},
        {"cam", {{"enabled", c.cam_loss}, {"labels", c.cam_labels}, {"weight", c.cam_weight}}},
        {"perturb",
         {{"feature", to_string(p.feature)},
          {"tvat",
           {{"epsilon", p.tvat.epsilon},
            {"power_iters", p.tvat.power_iters},
            {"xi", p.tvat.xi},
            {"labelled", p.tvat_labelled}}},
          {"cutmix",
           {{"mode", to_string(p.cutmix.mode)},
            {"area_min", p.cutmix.area_min},
            {"area_max", p.cutmix.area_max},
            {"aspect_min", p.cutmix.aspect_min},
            {"aspect_max", p.cutmix.aspect_max}}},
          {"zoom", {{"enabled", p.zoom}, {"scales", p.zoom_scales}}},
          {"cutmix_branch_p", p.cutmix_branch_p},
          {"weak", {{"scales", p.weak.scales}, {"flip_p", p.weak.flip_p}, {"crop", p.weak.crop}}},
          {"strong_aug",
           {{"enabled", p.strong},
            {"jitter_p", p.strong_aug.jitter_p},
            {"brightness", p.strong_aug.brightness},
            {"contrast", p.strong_aug.contrast},
            {"saturation", p.strong_aug.saturation},
            {"grayscale_p", p.strong_aug.grayscale_p},
            {"blur_p", p.strong_aug.blur_p},
            {"blur_sigma_min", p.strong_aug.blur_sigma_min},
            {"blur_sigma_max", p.strong_aug.blur_sigma_max}}}}},
        {"arch", c.arch},
        {"seed", c.seed},
        {"checkpoint_every", c.checkpoint_every},
        {"eval_every", c.eval_every},
        {"log_iters", c.log_iters},
    };
}

void from_json(const json& given, RunConfig& c) {
    const json defaults = RunConfig{};
    check_keys(given, defaults, "");
    json j = defaults;
    j.merge_patch(given);
    try {
        c.dataset = j.at("dataset").get<std::string>();
        c.split = j.at("split").get<std::string>();
        c.val = j.at("val").get<std::string>();
        c.epochs = j.at("epochs").get<int>();
        c.batch_labelled = j.at("batch_labelled").get<int>();
        c.batch_unlabelled = j.at("batch_unlabelled").get<int>();
        c.lr0 = j.at("lr0").get<double>();
        c.poly_power = j.at("poly_power").get<double>();
        c.momentum = j.at("momentum").get<double>();
        c.weight_decay = j.at("weight_decay").get<double>();
        c.gamma = j.at("gamma").get<double>();
        c.gamma_ramp = j.at("gamma_ramp").get<bool>();
        c.ema_cadence = parse_cadence(j.at("ema_cadence").get<std::string>());
        c.auxiliary_teacher = j.at("auxiliary_teacher").get<bool>();
        c.tau = j.at("tau").get<double>();
        c.semi_supervised = j.at("semi_supervised").get<bool>();
        c.loss_mode = parse_loss_mode(j.at("loss_mode").get<std::string>());
        c.ramp.beta_max = j.at("ramp").at("beta_max").get<double>();
        c.ramp.ramp_epochs = j.at("ramp").at("ramp_epochs").get<int>();
        c.cam_loss = j.at("cam").at("enabled").get<bool>();
        c.cam_labels = j.at("cam").at("labels").get<std::string>();
        c.cam_weight = j.at("cam").at("weight").get<double>();

        const auto& p = j.at("perturb");
        auto& q = c.perturb;
        q.feature = parse_feature_perturbation(p.at("feature").get<std::string>());
        q.tvat.epsilon = p.at("tvat").at("epsilon").get<double>();
        q.tvat.power_iters = p.at("tvat").at("power_iters").get<int>();
        q.tvat.xi = p.at("tvat").at("xi").get<double>();
        q.tvat_labelled = p.at("tvat").at("labelled").get<bool>();
        const auto& cm = p.at("cutmix");
        q.cutmix.mode = parse_cutmix_mode(cm.at("mode").get<std::string>());
        q.cutmix.area_min = cm.at("area_min").get<double>();
        q.cutmix.area_max = cm.at("area_max").get<double>();
        q.cutmix.aspect_min = cm.at("aspect_min").get<double>();
        q.cutmix.aspect_max = cm.at("aspect_max").get<double>();
        q.zoom = p.at("zoom").at("enabled").get<bool>();
        q.zoom_scales = p.at("zoom").at("scales").get<std::vector<double>>();
        q.cutmix_branch_p = p.at("cutmix_branch_p").get<double>();
        q.weak.scales = p.at("weak").at("scales").get<std::vector<double>>();
        q.weak.flip_p = p.at("weak").at("flip_p").get<double>();
        q.weak.crop = p.at("weak").at("crop").get<int>();
        const auto& s = p.at("strong_aug");
        q.strong = s.at("enabled").get<bool>();
        q.strong_aug.jitter_p = s.at("jitter_p").get<double>();
        q.strong_aug.brightness = s.at("brightness").get<double>();
        q.strong_aug.contrast = s.at("contrast").get<double>();
        q.strong_aug.saturation = s.at("saturation").get<double>();
        q.strong_aug.grayscale_p = s.at("grayscale_p").get<double>();
        q.strong_aug.blur_p = s.at("blur_p").get<double>();
        q.strong_aug.blur_sigma_min = s.at("blur_sigma_min").get<double>();
        q.strong_aug.blur_sigma_max = s.at("blur_sigma_max").get<double>();

        c.arch = j.at("arch").get<ArchDescriptor>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.checkpoint_every = j.at("checkpoint_every").get<int>();
        c.eval_every = j.at("eval_every").get<int>();
        c.log_iters = j.at("log_iters").get<bool>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config value: ") + e.what());
    }
}

RunConfig config_from_json(const json& j) {
    RunConfig c;
    from_json(j, c);
    c.validate();
    return c;
}

RunConfig load_config(const std::string& path) {
    json j;
    try {
        j = json::parse(io::read_text(path), nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError("cannot parse config " + path + ": " + e.what());
    }
    return config_from_json(j);
}

RunConfig with_overrides(const RunConfig& base, const json& dotted) {
    json tree = base;
    json patch = json::object();
    for (const auto& [key, value] : dotted.items()) {
        patch[json::json_pointer("/" + [&] {
            std::string k = key;
            for (auto& ch : k) {
                if (ch == '.') ch = '/';
            }
            return k;
        }())] = value;
    }
    check_keys(patch, tree, "");
    tree.merge_patch(patch);
    return config_from_json(tree);
}

}  // namespace psmt
