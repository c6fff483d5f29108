#include "psmt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "psmt/error.hpp"
#include "psmt/io.hpp"
#include "psmt/perturb.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace psmt {

constexpr double kBatchNormMomentum = 0.1;

TrainData load_train_data(const RunConfig& config) {
    if (config.split.empty()) throw ConfigError("config.split (split manifest) is required");
    const DatasetIndex index = load_manifest(config.split, config.dataset);
    TrainData data;
    data.num_classes = index.num_classes;
    data.labelled = load_all(index, LoadMode::labelled);
    data.unlabelled = load_all(index, LoadMode::unlabelled);
    if (!config.val.empty()) data.val = load_all(open_dataset(config.val), LoadMode::labelled);
    data.manifest_hash = io::file_hash(config.split);
    if (config.cam_loss) {
        const fs::path dir = config.cam_labels;
        if (!fs::is_directory(dir)) throw ConfigError("cam.labels directory missing: " + dir.string());
        for (const auto& s : data.unlabelled) {
            const auto path = dir / (s.id + ".png");
            if (!fs::exists(path)) throw ConfigError("missing pseudo-label file " + path.string());
            LabelMap m = load_mask(path, data.num_classes);
            if (m.h != s.image.shape().h || m.w != s.image.shape().w) {
                throw DataError("pseudo-label " + path.string() + " does not match its image size");
            }
            data.cam_pseudo.push_back(std::move(m));
        }
    }
    return data;
}

TrainState init_state(const RunConfig& config) {
    TrainState s;
    const auto init = Rng::derive(config.seed, {stream::init});
    s.student = SegModel(config.arch, Rng(init).engine()());
    s.teachers = TeacherPair(s.student, config.gamma, config.auxiliary_teacher);
    s.velocity.assign(s.student.params().size(), 0.0);
    return s;
}

double lr_at(const RunConfig& config, long iter, long max_iter) {
    if (max_iter <= 0 || iter < 0 || iter > max_iter) {
        throw ConfigError("lr_at: iteration " + std::to_string(iter) + " outside [0, " +
                          std::to_string(max_iter) + "]");
    }
    const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(max_iter);
    return config.lr0 * std::pow(frac, config.poly_power);
}

long iters_per_epoch(const RunConfig& config, std::size_t n_labelled, std::size_t n_unlabelled) {
    if (n_unlabelled > 0) {
        return static_cast<long>((n_unlabelled + config.batch_unlabelled - 1) / config.batch_unlabelled);
    }
    if (n_labelled == 0) throw ConfigError("no training data");
    return static_cast<long>((n_labelled + config.batch_labelled - 1) / config.batch_labelled);
}

void sgd_step(std::span<double> params, std::vector<double>& velocity, std::span<const double> grad,
              double lr, double momentum, double weight_decay) {
    if (velocity.size() != params.size() || grad.size() != params.size()) {
        throw ConfigError("sgd_step: parameter, gradient and momentum sizes differ");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i] + weight_decay * params[i];
        velocity[i] = momentum * velocity[i] + g;
        params[i] -= lr * velocity[i];
    }
}

namespace {

struct WeakBatch {
    Tensor images;
    LabelMap labels;
    LabelMap pseudo;
};

WeakBatch weak_views(const std::vector<const Sample*>& samples,
                     const std::vector<const LabelMap*>& pseudo, bool labelled,
                     const WeakAugSpec& spec, Rng& rng) {
    std::vector<Tensor> imgs;
    std::vector<LabelMap> labs;
    std::vector<LabelMap> pls;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = *samples[i];
        const auto params = sample_weak_params(s.image.shape().h, s.image.shape().w, spec, rng);
        if (labelled && !s.mask) throw DataError("labelled sample " + s.id + " has no mask");
        auto r = apply_weak(s.image, labelled ? &*s.mask : nullptr, params);
        imgs.push_back(std::move(r.image));
        if (labelled) labs.push_back(std::move(*r.label));
        if (!pseudo.empty()) pls.push_back(*apply_weak(s.image, pseudo[i], params).label);
    }
    WeakBatch out;
    out.images = stack(imgs);
    if (labelled) out.labels = stack_grids<std::int32_t>(labs);
    if (!pls.empty()) out.pseudo = stack_grids<std::int32_t>(pls);
    return out;
}

struct StudentPass {
    EncoderTrace encoder;
    DecoderTrace decoder;
    Tensor probs;
};

Tensor feature_perturbation(const Tensor& z, const SegModel& student, const TeacherPair& pair,
                            const PerturbationSpec& spec, Rng& rng) {
    switch (spec.feature) {
        case FeaturePerturbation::none:
            return {};
        case FeaturePerturbation::uniform:
            return uniform_perturbation(z.shape(), spec.tvat.epsilon, rng);
        case FeaturePerturbation::vat: {
            const SegModel* own[] = {&student};
            return adversarial_perturbation(z, own, spec.tvat, rng);
        }
        case FeaturePerturbation::tvat:
            return tvat_perturbation(z, pair, spec.tvat, rng);
    }
    return {};
}

StudentPass student_forward(const SegModel& student, const TeacherPair& pair, const Tensor& x,
                            const PerturbationSpec& spec, bool perturb, Rng& rng) {
    StudentPass pass;
    Tensor z = student.encode(x, Mode::train, &pass.encoder);
    if (perturb) {
        // r is treated as a constant: no gradient flows back through its construction.
        const Tensor r = feature_perturbation(z, student, pair, spec, rng);
        if (!r.empty()) {
            for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] += r.data()[i];
        }
    }
    pass.probs = softmax_channels(student.decode(z, &pass.decoder));
    return pass;
}

void student_backward(const SegModel& student, const StudentPass& pass, const Tensor& dlogits,
                      std::span<double> grad) {
    const Tensor dz = student.decode_backward(pass.decoder, dlogits, grad);
    student.encode_backward(pass.encoder, dz, grad);
}

std::string id_list(const std::vector<const Sample*>& samples) {
    std::string out;
    for (const auto* s : samples) out += (out.empty() ? "" : ",") + s->id;
    return out;
}

}  // namespace

LossReport train_step(TrainState& state, const RunConfig& cfg, const StepBatch& batch, long max_iter) {
    if (batch.labelled.empty()) throw ConfigError("train_step: empty labelled batch");
    Rng rng = Rng::derive(cfg.seed, {stream::step, static_cast<std::uint64_t>(state.iter)});
    const double lr = lr_at(cfg, state.iter, max_iter);
    const auto& ps = cfg.perturb;
    SegModel& student = state.student;
    const TeacherPair& pair = state.teachers;
    std::vector<double> grad(student.params().size(), 0.0);
    LossReport rep;

    // Supervised branch.
    const WeakBatch wl = weak_views(batch.labelled, {}, true, ps.weak, rng);
    const Tensor xl = ps.strong ? strong_augment(wl.images, ps.strong_aug, rng) : wl.images;
    const StudentPass pass_l = student_forward(student, pair, xl, ps, ps.tvat_labelled, rng);
    LossValue sup = supervised_loss(pass_l.probs, wl.labels);
    rep.sup = sup.value;

    // Consistency branch.
    std::optional<StudentPass> pass_u;
    Tensor dlogits_u;
    if (cfg.semi_supervised && !batch.unlabelled.empty()) {
        const bool cam = cfg.cam_loss;
        if (cam && batch.cam_pseudo.size() != batch.unlabelled.size()) {
            throw ConfigError("train_step: CAM loss needs one pseudo-label per unlabelled sample");
        }
        WeakBatch wu = weak_views(batch.unlabelled, cam ? batch.cam_pseudo : std::vector<const LabelMap*>{},
                                  false, ps.weak, rng);
        const Tensor& xu = wu.images;
        const bool cut_on = ps.cutmix.mode != CutMixMode::off;
        const bool use_cut = cut_on && (!ps.zoom || rng.bernoulli(ps.cutmix_branch_p));
        const bool use_zoom = !use_cut && ps.zoom;

        EnsemblePrediction target;
        Tensor student_in;
        LabelMap pseudo = std::move(wu.pseudo);
        if (use_cut) {
            const int n = xu.shape().n;
            const int offset = n > 1 ? rng.uniform_int(1, n - 1) : 0;
            std::vector<int> perm(static_cast<std::size_t>(n));
            for (int b = 0; b < n; ++b) perm[static_cast<std::size_t>(b)] = (b + offset) % n;
            std::vector<CutMixMask> masks;
            for (int b = 0; b < n; ++b) {
                masks.push_back(sample_cutmix_mask(xu.shape().h, xu.shape().w, ps.cutmix, rng));
            }
            student_in = cutmix_combine(xu, permute_batch(xu, perm), masks);
            if (ps.cutmix.mode == CutMixMode::after) {
                const EnsemblePrediction pred = ensemble_predict(pair, xu, cfg.tau);
                target = cutmix_after_prediction(pred, permute_batch(pred, perm), masks);
            } else {
                target = ensemble_predict(pair, student_in, cfg.tau);
            }
            if (cam) pseudo = cutmix_combine_grid(pseudo, permute_batch(pseudo, perm), std::span<const CutMixMask>(masks));
        } else if (use_zoom) {
            const double s = ps.zoom_scales[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<int>(ps.zoom_scales.size()) - 1))];
            const ZoomSpec zs{s, cfg.arch.downsample_factor()};
            target = zoom_consistency_targets(ensemble_predict(pair, xu, cfg.tau), zs);
            student_in = zoom_image(xu, zs);
            if (cam) pseudo = resize_nearest(pseudo, student_in.shape().h, student_in.shape().w);
        } else {
            target = ensemble_predict(pair, xu, cfg.tau);
            student_in = xu;
        }
        if (ps.strong) student_in = strong_augment(student_in, ps.strong_aug, rng);

        pass_u = student_forward(student, pair, student_in, ps, true, rng);
        LossValue con = cfg.loss_mode == LossMode::conf_ce ? conf_ce_loss(pass_u->probs, target)
                                                           : mse_consistency_loss(pass_u->probs, target.soft);
        rep.con = con.value;
        rep.beta = beta_at(cfg.ramp, static_cast<double>(state.epoch));
        dlogits_u = std::move(con.grad_logits);
        for (double& v : dlogits_u.values()) v *= rep.beta;
        if (cam) {
            const LossValue c = cam_loss(pass_u->probs, pseudo, target.confidence);
            rep.cam = c.value;
            rep.cam_weight = cfg.cam_weight;
            for (std::size_t i = 0; i < dlogits_u.size(); ++i) {
                dlogits_u.data()[i] += cfg.cam_weight * c.grad_logits.data()[i];
            }
        }
    }
    rep.total = combine(rep);
    if (!std::isfinite(rep.total)) {
        throw NumericError("non-finite loss at iteration " + std::to_string(state.iter) +
                           " (labelled ids: " + id_list(batch.labelled) +
                           "; unlabelled ids: " + id_list(batch.unlabelled) + ")");
    }

    student_backward(student, pass_l, sup.grad_logits, grad);
    if (pass_u) student_backward(student, *pass_u, dlogits_u, grad);
    student.update_running_stats(pass_l.encoder, kBatchNormMomentum);
    if (pass_u) student.update_running_stats(pass_u->encoder, kBatchNormMomentum);

    sgd_step(student.params(), state.velocity, grad, lr, cfg.momentum, cfg.weight_decay);
    if (cfg.ema_cadence == EmaCadence::iter) {
        const double g = cfg.gamma_ramp ? ramped_gamma(cfg.gamma, state.iter) : cfg.gamma;
        ema_update(state.teachers, student, g);
    }
    ++state.iter;
    return rep;
}

std::vector<LayerMagnitude> gradient_magnitude_probe(const TrainState& state, const RunConfig& config,
                                                     const Tensor& x, LossMode mode) {
    const SegModel& student = state.student;
    const EnsemblePrediction target = ensemble_predict(state.teachers, x, config.tau);
    StudentPass pass;
    const Tensor z = student.encode(x, Mode::train, &pass.encoder);
    pass.probs = softmax_channels(student.decode(z, &pass.decoder));
    const LossValue loss = mode == LossMode::conf_ce ? conf_ce_loss(pass.probs, target)
                                                     : mse_consistency_loss(pass.probs, target.soft);
    std::vector<double> grad(student.params().size(), 0.0);
    student_backward(student, pass, loss.grad_logits, grad);

    std::vector<LayerMagnitude> out;
    for (const auto& layer : student.layer_names()) {
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& sl : student.layout()) {
            if (sl.layer != layer) continue;
            for (std::size_t i = 0; i < sl.size; ++i) sum += std::abs(grad[sl.offset + i]);
            count += sl.size;
        }
        out.push_back({layer, count ? sum / static_cast<double>(count) : 0.0});
    }
    return out;
}

// ---------------------------------------------------------------- checkpoints

namespace {

void put_model(Checkpoint& ck, const std::string& prefix, const SegModel& m) {
    for (const auto& sl : m.layout()) {
        const auto p = m.params().subspan(sl.offset, sl.size);
        ck.arrays[prefix + "/" + sl.name].assign(p.begin(), p.end());
    }
    for (const auto& sl : m.buffer_layout()) {
        const auto b = m.buffers().subspan(sl.offset, sl.size);
        ck.arrays[prefix + "/" + sl.name].assign(b.begin(), b.end());
    }
}

SegModel get_model(const Checkpoint& ck, const std::string& prefix, const ArchDescriptor& arch) {
    SegModel m = SegModel::zeros(arch);
    auto fill = [&](std::span<double> dst, const std::vector<ParamSlice>& layout) {
        for (const auto& sl : layout) {
            const auto& src = ck.array(prefix + "/" + sl.name);
            if (src.size() != sl.size) throw DataError("checkpoint entry " + prefix + "/" + sl.name + " has the wrong size");
            std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(sl.offset));
        }
    };
    fill(m.params(), m.layout());
    fill(m.buffers(), m.buffer_layout());
    return m;
}

}  // namespace

Checkpoint state_checkpoint(const TrainState& state, const RunConfig& config) {
    Checkpoint ck;
    ck.header["arch"] = state.student.arch();
    ck.header["config"] = config;
    ck.header["ema_cursor"] = state.teachers.cursor() == TeacherSlot::first ? "teacher1" : "teacher2";
    ck.header["gamma"] = state.teachers.gamma();
    ck.header["auxiliary_teacher"] = state.teachers.auxiliary();
    ck.header["counters"] = {{"epoch", state.epoch}, {"iter", state.iter}};
    // Every random draw comes from a substream derived from (seed, tag, counter),
    // so the seed plus the counters above is the complete generator state.
    ck.header["rng"] = {{"scheme", "derived-substreams"}, {"seed", config.seed}};
    put_model(ck, "student", state.student);
    put_model(ck, "teacher1", state.teachers.teacher(TeacherSlot::first));
    put_model(ck, "teacher2", state.teachers.teacher(TeacherSlot::second));
    for (const auto& sl : state.student.layout()) {
        ck.arrays["optimizer/" + sl.name].assign(
            state.velocity.begin() + static_cast<std::ptrdiff_t>(sl.offset),
            state.velocity.begin() + static_cast<std::ptrdiff_t>(sl.offset + sl.size));
    }
    return ck;
}

TrainState restore_state(const Checkpoint& ck, RunConfig* config_out) {
    try {
        const auto arch = ck.header.at("arch").get<ArchDescriptor>();
        TrainState s;
        s.student = get_model(ck, "student", arch);
        s.teachers = TeacherPair(get_model(ck, "teacher1", arch), get_model(ck, "teacher2", arch),
                                 ck.header.at("gamma").get<double>(),
                                 ck.header.at("auxiliary_teacher").get<bool>());
        s.teachers.set_cursor(ck.header.at("ema_cursor").get<std::string>() == "teacher1" ? TeacherSlot::first
                                                                                         : TeacherSlot::second);
        s.velocity.assign(s.student.params().size(), 0.0);
        for (const auto& sl : s.student.layout()) {
            const auto& v = ck.array("optimizer/" + sl.name);
            std::copy(v.begin(), v.end(), s.velocity.begin() + static_cast<std::ptrdiff_t>(sl.offset));
        }
        s.epoch = ck.header.at("counters").at("epoch").get<long>();
        s.iter = ck.header.at("counters").at("iter").get<long>();
        if (config_out) *config_out = config_from_json(ck.header.at("config"));
        return s;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed checkpoint header: ") + e.what());
    }
}

std::string checkpoint_name(long epoch) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "epoch_%04ld.ckpt", epoch);
    return buf;
}

// ---------------------------------------------------------------- loop

namespace {

// Drops records written after the checkpoint being resumed.
void truncate_metrics(const fs::path& path, long iter) {
    if (!fs::exists(path)) return;
    std::ifstream in(path);
    std::string line;
    std::string kept;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto rec = json::parse(line, nullptr, false);
        if (rec.is_discarded() || rec.value("iter", 0L) > iter) continue;
        kept += line + "\n";
    }
    in.close();
    io::write_text(path, kept);
}

}  // namespace

TrainResult run_training(const RunConfig& config, const TrainData& data, const fs::path& run_dir,
                         const TrainOptions& options) {
    RunConfig cfg = config;
    TrainState state;
    fs::create_directories(run_dir / "checkpoints");
    const fs::path metrics_path = run_dir / "metrics.jsonl";
    if (options.resume) {
        state = restore_state(load_checkpoint(*options.resume), &cfg);
        truncate_metrics(metrics_path, state.iter);
    } else {
        cfg.validate();
        state = init_state(cfg);
        io::write_text(metrics_path, "");
    }
    if (data.labelled.empty()) throw ConfigError("training split has no labelled items");
    if (cfg.cam_loss && data.cam_pseudo.size() != data.unlabelled.size()) {
        throw ConfigError("CAM loss enabled but pseudo-labels were not loaded");
    }

    json run{{"command", "train"},
             {"config", cfg},
             {"seed", cfg.seed},
             {"manifest_hash", data.manifest_hash}};
    if (options.resume) run["resumed_from"] = options.resume->string();
    io::write_text(run_dir / "run.json", run.dump(1) + "\n");

    const long ipe = iters_per_epoch(cfg, data.labelled.size(), data.unlabelled.size());
    const long max_iter = static_cast<long>(cfg.epochs) * ipe;
    CyclicSampler lab(data.labelled.size(), cfg.seed, stream::labelled_order);
    lab.seek(static_cast<std::uint64_t>(state.iter) * cfg.batch_labelled);
    std::optional<CyclicSampler> unl;
    if (!data.unlabelled.empty()) {
        unl.emplace(data.unlabelled.size(), cfg.seed, stream::unlabelled_order);
        unl->seek(static_cast<std::uint64_t>(state.iter) * cfg.batch_unlabelled);
    }

    TrainResult result;
    result.run_dir = run_dir;
    auto save = [&] {
        result.last_checkpoint = run_dir / "checkpoints" / checkpoint_name(state.epoch);
        save_checkpoint(result.last_checkpoint, state_checkpoint(state, cfg));
    };
    if (cfg.epochs == 0) {
        save();
        result.state = std::move(state);
        return result;
    }

    std::ofstream metrics(metrics_path, std::ios::app);
    while (state.epoch < cfg.epochs) {
        for (long i = 0; i < ipe; ++i) {
            StepBatch batch;
            for (auto id : lab.next(static_cast<std::size_t>(cfg.batch_labelled))) {
                batch.labelled.push_back(&data.labelled[id]);
            }
            if (unl && cfg.semi_supervised) {
                for (auto id : unl->next(static_cast<std::size_t>(cfg.batch_unlabelled))) {
                    batch.unlabelled.push_back(&data.unlabelled[id]);
                    if (cfg.cam_loss) batch.cam_pseudo.push_back(&data.cam_pseudo[id]);
                }
            } else if (unl) {
                unl->next(static_cast<std::size_t>(cfg.batch_unlabelled));
            }
            const double lr = lr_at(cfg, state.iter, max_iter);
            const LossReport rep = train_step(state, cfg, batch, max_iter);
            if (cfg.log_iters) {
                metrics << json{{"kind", "iter"}, {"epoch", state.epoch}, {"iter", state.iter},
                                {"sup", rep.sup},  {"con", rep.con},     {"cam", rep.cam},
                                {"beta", rep.beta}, {"lr", lr},          {"total", rep.total}}
                               .dump()
                        << "\n";
            }
        }
        if (cfg.ema_cadence == EmaCadence::epoch) {
            const double g = cfg.gamma_ramp ? ramped_gamma(cfg.gamma, state.epoch) : cfg.gamma;
            ema_update(state.teachers, state.student, g);
        }
        advance_epoch(state.teachers);
        ++state.epoch;
        const bool last = state.epoch == cfg.epochs;
        if (!data.val.empty() && (last || (cfg.eval_every > 0 && state.epoch % cfg.eval_every == 0))) {
            EvalResult ev = evaluate(state.teachers, data.val, data.num_classes);
            json per_class = json::array();
            for (double v : ev.iou.per_class) per_class.push_back(std::isnan(v) ? json(nullptr) : json(v));
            metrics << json{{"kind", "eval"},          {"epoch", state.epoch},
                            {"iter", state.iter},      {"miou", ev.iou.miou},
                            {"per_class", per_class}, {"pixel_accuracy", ev.confusion.pixel_accuracy()}}
                           .dump()
                    << "\n";
            if (options.verbose) {
                std::cerr << "epoch " << state.epoch << "/" << cfg.epochs << " val mIoU " << ev.iou.miou << "\n";
            }
            if (last) result.final_eval = std::move(ev);
        }
        metrics.flush();
        if (last || state.epoch % cfg.checkpoint_every == 0) save();
    }
    result.state = std::move(state);
    return result;
}

}  // namespace psmt
