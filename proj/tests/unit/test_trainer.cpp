#include <doctest.h>

#include <cmath>
#include <fstream>

#include "../common/fixtures.hpp"
#include "psmt/error.hpp"
#include "psmt/io.hpp"
#include "psmt/trainer.hpp"
#include "support.hpp"

using namespace psmt;
namespace fs = std::filesystem;

namespace {

fs::path tiny_dir() {
    static const fs::path dir = [] {
        auto d = testing::scratch_dir("trainer_data");
        fixture::make_tiny_dataset(d);
        return d;
    }();
    return dir;
}

StepBatch batch_of(const TrainData& d, std::size_t nl, std::size_t nu) {
    StepBatch b;
    for (std::size_t i = 0; i < nl; ++i) b.labelled.push_back(&d.labelled[i]);
    for (std::size_t i = 0; i < nu; ++i) b.unlabelled.push_back(&d.unlabelled[i]);
    return b;
}

std::vector<double> copy(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("poly learning rate: endpoints, midpoint 0.536 lr0, monotone") {
    RunConfig c;
    c.lr0 = 0.01;
    CHECK(lr_at(c, 0, 100) == 0.01);
    CHECK(lr_at(c, 100, 100) == 0.0);
    // Scalar oracle: 0.5^0.9.
    CHECK(lr_at(c, 50, 100) == doctest::Approx(0.01 * std::pow(0.5, 0.9)).epsilon(1e-15));
    CHECK(lr_at(c, 50, 100) / 0.01 == doctest::Approx(0.536).epsilon(1e-3));
    for (long i = 1; i <= 100; ++i) CHECK(lr_at(c, i, 100) <= lr_at(c, i - 1, 100));
    CHECK_THROWS(lr_at(c, 101, 100));
}

TEST_CASE("epoch length is ceil(|U| / batch_unlabelled), falling back to the labelled set") {
    RunConfig c;
    c.batch_unlabelled = 8;
    c.batch_labelled = 8;
    CHECK(iters_per_epoch(c, 128, 896) == 112);
    CHECK(iters_per_epoch(c, 128, 897) == 113);
    CHECK(iters_per_epoch(c, 20, 0) == 3);
}

TEST_CASE("sgd step with momentum and weight decay, hand-computed") {
    std::vector<double> p{1.0, -2.0};
    std::vector<double> v{0.5, 0.0};
    const std::vector<double> g{0.1, 0.2};
    sgd_step(p, v, g, 0.1, 0.9, 0.01);
    // v = 0.9 v + g + wd p ; p -= lr v
    CHECK(v[0] == doctest::Approx(0.9 * 0.5 + 0.1 + 0.01 * 1.0));
    CHECK(v[1] == doctest::Approx(0.2 - 0.02));
    CHECK(p[0] == doctest::Approx(1.0 - 0.1 * v[0]));
    CHECK(p[1] == doctest::Approx(-2.0 - 0.1 * v[1]));
}

TEST_CASE("train step: total equals sup + beta con, teachers move only by EMA") {
    const RunConfig cfg = fixture::tiny_config(tiny_dir());
    const TrainData data = load_train_data(cfg);
    TrainState st = init_state(cfg);
    for (int k = 0; k < 4; ++k) {
        const auto t2 = copy(st.teachers.teacher(TeacherSlot::second).params());
        const auto t1 = copy(st.teachers.teacher(TeacherSlot::first).params());
        const LossReport r = train_step(st, cfg, batch_of(data, 2, 4), 100);
        CHECK(std::abs(r.total - (r.sup + r.beta * r.con + r.cam_weight * r.cam)) <= 1e-6);
        CHECK(r.sup > 0.0);
        // Cursor is on teacher 1: teacher 2 is untouched, teacher 1 follows EMA exactly.
        CHECK(copy(st.teachers.teacher(TeacherSlot::second).params()) == t2);
        const auto s = st.student.params();
        const auto t = st.teachers.teacher(TeacherSlot::first).params();
        for (std::size_t i = 0; i < t.size(); ++i) {
            CHECK(t[i] == doctest::Approx(cfg.gamma * t1[i] + (1.0 - cfg.gamma) * s[i]).epsilon(1e-12));
        }
    }
    CHECK(st.iter == 4);
}

TEST_CASE("supervised-only step leaves the consistency term at zero") {
    RunConfig cfg = fixture::tiny_config(tiny_dir());
    cfg.semi_supervised = false;
    const TrainData data = load_train_data(cfg);
    TrainState st = init_state(cfg);
    const LossReport r = train_step(st, cfg, batch_of(data, 2, 4), 10);
    CHECK(r.con == 0.0);
    CHECK(r.total == r.sup);
}

TEST_CASE("all confidences below tau give a zero consistency term") {
    RunConfig cfg = fixture::tiny_config(tiny_dir());
    cfg.tau = 0.999999;  // a fresh model is nowhere near this confident
    const TrainData data = load_train_data(cfg);
    TrainState st = init_state(cfg);
    for (int k = 0; k < 3; ++k) CHECK(train_step(st, cfg, batch_of(data, 2, 4), 10).con == 0.0);
}

TEST_CASE("gradient probe: zero confidence gives zero conf-CE magnitudes; equal predictions near-zero MSE") {
    RunConfig cfg = fixture::tiny_config(tiny_dir());
    TrainState st = init_state(cfg);
    const Tensor x = testing::random_tensor({2, 3, 32, 32}, 1, 0.0, 1.0);
    cfg.tau = 0.999999;
    for (const auto& l : gradient_magnitude_probe(st, cfg, x, LossMode::conf_ce)) CHECK(l.mean_abs == 0.0);
    const auto before = copy(st.student.params());
    for (const auto& l : gradient_magnitude_probe(st, cfg, x, LossMode::mse)) CHECK(l.mean_abs < 1e-12);
    CHECK(copy(st.student.params()) == before);
}

TEST_CASE("two runs from the same seed report identical loss sequences") {
    const RunConfig cfg = fixture::tiny_config(tiny_dir());
    const TrainData data = load_train_data(cfg);
    TrainState a = init_state(cfg);
    TrainState b = init_state(cfg);
    for (int k = 0; k < 3; ++k) {
        const auto ra = train_step(a, cfg, batch_of(data, 2, 4), 10);
        const auto rb = train_step(b, cfg, batch_of(data, 2, 4), 10);
        CHECK(ra.total == rb.total);
        CHECK(ra.con == rb.con);
    }
    CHECK(copy(a.student.params()) == copy(b.student.params()));
}

TEST_CASE("epochs = 0 writes the initial checkpoint and an empty metrics file") {
    RunConfig cfg = fixture::tiny_config(tiny_dir());
    cfg.epochs = 0;
    const auto out = testing::scratch_dir("epochs0");
    const auto res = run_training(cfg, load_train_data(cfg), out / "run");
    CHECK(fs::exists(res.last_checkpoint));
    CHECK(fs::file_size(out / "run/metrics.jsonl") == 0);
    const TrainState back = restore_state(load_checkpoint(res.last_checkpoint));
    CHECK(copy(back.student.params()) == copy(init_state(cfg).student.params()));
}

TEST_CASE("checkpoint round-trip keeps parameters, optimiser state, cursor and counters") {
    const RunConfig cfg = fixture::tiny_config(tiny_dir());
    const TrainData data = load_train_data(cfg);
    TrainState st = init_state(cfg);
    train_step(st, cfg, batch_of(data, 2, 4), 10);
    st.epoch = 3;
    advance_epoch(st.teachers);
    const auto path = testing::scratch_dir("ckpt_rt") / "x.ckpt";
    save_checkpoint(path, state_checkpoint(st, cfg));
    RunConfig back_cfg;
    const TrainState back = restore_state(load_checkpoint(path), &back_cfg);
    CHECK(copy(back.student.params()) == copy(st.student.params()));
    CHECK(copy(back.teachers.teacher(TeacherSlot::second).params()) ==
          copy(st.teachers.teacher(TeacherSlot::second).params()));
    CHECK(back.velocity == st.velocity);
    CHECK(back.teachers.cursor() == TeacherSlot::second);
    CHECK(back.epoch == 3);
    CHECK(back.iter == 1);
    CHECK(nlohmann::json(back_cfg) == nlohmann::json(cfg));
}

TEST_CASE("resume from a mid-run checkpoint matches the uninterrupted run") {
    RunConfig cfg = fixture::tiny_config(tiny_dir());
    cfg.epochs = 3;
    const TrainData data = load_train_data(cfg);
    const auto out = testing::scratch_dir("resume");
    const auto full = run_training(cfg, data, out / "full");
    run_training(cfg, data, out / "part");
    fs::remove(out / "part" / "checkpoints" / checkpoint_name(3));
    TrainOptions opt;
    opt.resume = out / "part" / "checkpoints" / checkpoint_name(1);
    const auto resumed = run_training(cfg, data, out / "part", opt);
    CHECK(copy(resumed.state.student.params()) == copy(full.state.student.params()));
    CHECK(copy(resumed.state.teachers.teacher(TeacherSlot::second).params()) ==
          copy(full.state.teachers.teacher(TeacherSlot::second).params()));
    CHECK(io::file_hash(out / "part/metrics.jsonl") == io::file_hash(out / "full/metrics.jsonl"));
}

TEST_CASE("collapsed mean-teacher arm keeps a single teacher and still flips nothing that matters") {
    RunConfig cfg = fixture::tiny_config(tiny_dir());
    cfg.auxiliary_teacher = false;
    cfg.loss_mode = LossMode::mse;
    cfg.perturb.feature = FeaturePerturbation::none;
    const TrainData data = load_train_data(cfg);
    TrainState st = init_state(cfg);
    CHECK(st.teachers.members().size() == 1);
    const auto second = copy(st.teachers.teacher(TeacherSlot::second).params());
    train_step(st, cfg, batch_of(data, 2, 4), 10);
    advance_epoch(st.teachers);
    train_step(st, cfg, batch_of(data, 2, 4), 10);
    CHECK(copy(st.teachers.teacher(TeacherSlot::second).params()) == second);
}

TEST_CASE("metrics lines carry the logged fields and no timing") {
    RunConfig cfg = fixture::tiny_config(tiny_dir());
    cfg.epochs = 1;
    const auto out = testing::scratch_dir("metrics_fields");
    run_training(cfg, load_train_data(cfg), out / "run");
    std::ifstream f(out / "run/metrics.jsonl");
    std::string line;
    int iters = 0, evals = 0;
    while (std::getline(f, line)) {
        const auto j = nlohmann::json::parse(line);
        if (j["kind"] == "iter") {
            ++iters;
            for (const char* k : {"epoch", "iter", "sup", "con", "cam", "beta", "lr", "total"}) CHECK(j.contains(k));
        } else {
            ++evals;
            CHECK(j.contains("miou"));
        }
        CHECK(line.find("time") == std::string::npos);
    }
    CHECK(iters == iters_per_epoch(cfg, 4, 12));
    CHECK(evals == 1);
}
