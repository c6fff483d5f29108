#include <doctest.h>

#include <cmath>

#include "psmt/losses.hpp"
#include "support.hpp"

using namespace psmt;

namespace {

Tensor probs_of(std::initializer_list<std::initializer_list<double>> pixels) {
    const int w = static_cast<int>(pixels.size());
    const int y = static_cast<int>(pixels.begin()->size());
    Tensor t({1, y, 1, w});
    int x = 0;
    for (const auto& px : pixels) {
        int c = 0;
        for (double v : px) t.at(0, c++, 0, x) = v;
        ++x;
    }
    return t;
}

LabelMap labels_of(std::initializer_list<int> v) {
    LabelMap m(1, 1, static_cast<int>(v.size()));
    std::copy(v.begin(), v.end(), m.values.begin());
    return m;
}

ConfidenceMap conf_of(std::initializer_list<double> v) {
    ConfidenceMap m(1, 1, static_cast<int>(v.size()));
    std::copy(v.begin(), v.end(), m.values.begin());
    return m;
}

}  // namespace

TEST_CASE("supervised CE: one-hot correct is 0, uniform is ln Y") {
    CHECK(supervised_loss(probs_of({{1, 0, 0}, {0, 0, 1}}), labels_of({0, 2})).value == 0.0);
    CHECK(supervised_loss(probs_of({{0.25, 0.25, 0.25, 0.25}}), labels_of({3})).value ==
          doctest::Approx(std::log(4.0)));
}

TEST_CASE("supervised CE: (0.5,0.5) and (1,0) with labels (0,0) is ln2 / 2") {
    // Scalar oracle: -(ln 0.5 + ln 1) / 2.
    const double expect = -(std::log(0.5) + std::log(1.0)) / 2.0;
    CHECK(supervised_loss(probs_of({{0.5, 0.5}, {1.0, 0.0}}), labels_of({0, 0})).value ==
          doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("supervised CE ignores IGNORE pixels; all-ignored gives 0 and counts") {
    const auto p = probs_of({{0.5, 0.5}, {0.1, 0.9}});
    CHECK(supervised_loss(p, labels_of({0, 2})).value == doctest::Approx(std::log(2.0)));
    const auto before = all_ignored_count();
    const auto v = supervised_loss(p, labels_of({2, 2}));
    CHECK(v.value == 0.0);
    CHECK(all_ignored_count() == before + 1);
    for (double g : v.grad_logits.values()) CHECK(g == 0.0);
}

TEST_CASE("conf-CE: c = 0 gives zero loss and zero gradient") {
    const auto v = conf_ce_loss(probs_of({{0.3, 0.7}, {0.6, 0.4}}), labels_of({0, 1}), conf_of({0, 0}));
    CHECK(v.value == 0.0);
    for (double g : v.grad_logits.values()) CHECK(g == 0.0);
}

TEST_CASE("conf-CE: c = 1 reduces to plain CE against the hard labels") {
    const auto p = probs_of({{0.3, 0.7}, {0.6, 0.4}, {0.9, 0.1}});
    const auto l = labels_of({0, 1, 0});
    CHECK(conf_ce_loss(p, l, conf_of({1, 1, 1})).value == doctest::Approx(supervised_loss(p, l).value));
}

TEST_CASE("conf-CE: one pixel, c 0.9, label 0, prob 0.5 is 0.9 ln 2") {
    CHECK(conf_ce_loss(probs_of({{0.5, 0.5}}), labels_of({0}), conf_of({0.9})).value ==
          doctest::Approx(0.9 * std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("conf-CE divides by all pixels: extra c=0 pixels only change the denominator") {
    const auto one = conf_ce_loss(probs_of({{0.5, 0.5}}), labels_of({0}), conf_of({0.9})).value;
    const auto three = conf_ce_loss(probs_of({{0.5, 0.5}, {0.2, 0.8}, {0.7, 0.3}}), labels_of({0, 0, 1}),
                                    conf_of({0.9, 0, 0}))
                           .value;
    CHECK(three == doctest::Approx(one / 3.0));
}

TEST_CASE("MSE consistency: equal is 0, (1,0) vs (0,1) is 1, symmetric") {
    const auto a = probs_of({{1, 0}});
    const auto b = probs_of({{0, 1}});
    CHECK(mse_consistency_loss(a, a).value == 0.0);
    CHECK(mse_consistency_loss(a, b).value == doctest::Approx(1.0));
    const auto c = probs_of({{0.2, 0.8}, {0.6, 0.4}});
    const auto d = probs_of({{0.5, 0.5}, {0.1, 0.9}});
    CHECK(mse_consistency_loss(c, d).value == mse_consistency_loss(d, c).value);
}

TEST_CASE("CAM loss: c 1 gives 0, c 0 gives plain CE, weights sum with conf-CE") {
    const auto p = probs_of({{0.3, 0.7}, {0.6, 0.4}});
    const auto l = labels_of({1, 0});
    CHECK(cam_loss(p, l, conf_of({1, 1})).value == 0.0);
    CHECK(cam_loss(p, l, conf_of({0, 0})).value == doctest::Approx(supervised_loss(p, l).value));
    // Per pixel conf weight c and cam weight (1 - c) add up to one when the
    // pseudo-label equals the hard label.
    const auto c = conf_of({0.85, 0.0});
    CHECK(conf_ce_loss(p, l, c).value + cam_loss(p, l, c).value ==
          doctest::Approx(supervised_loss(p, l).value));
}

TEST_CASE("near convergence |dCE/dp| tends to 1 while |dMSE/dp| tends to 0") {
    // Scalar analytic check on the correct-class coordinate: d(-ln p)/dp = -1/p,
    // d(1 - p)^2/dp = -2 (1 - p).
    for (double p : {0.9, 0.99, 0.999}) {
        CHECK(std::abs(-1.0 / p) > std::abs(-2.0 * (1.0 - p)));
    }
    CHECK(std::abs(-1.0 / 0.999999) == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(std::abs(2.0 * (1.0 - 0.999999)) < 1e-5);
}

TEST_CASE("analytic logit gradients match finite differences for every loss") {
    Rng rng(3);
    Tensor logits({2, 3, 2, 3});
    for (double& v : logits.values()) v = rng.normal();
    LabelMap lab = testing::random_labels(2, 2, 3, 3, 4);
    lab.values[2] = ignore_label(3);
    ConfidenceMap conf(2, 2, 3);
    for (auto& v : conf.values) v = rng.bernoulli(0.5) ? rng.uniform(0.6, 1.0) : 0.0;
    Tensor target({2, 3, 2, 3});
    for (double& v : target.values()) v = rng.uniform();
    target = softmax_channels(target);

    auto losses = [&](const Tensor& lg, int which, bool g) {
        const Tensor p = softmax_channels(lg);
        switch (which) {
            case 0: return supervised_loss(p, lab, g);
            case 1: return conf_ce_loss(p, lab, conf, g);
            case 2: return mse_consistency_loss(p, target, g);
            default: return cam_loss(p, lab, conf, g);
        }
    };
    for (int which = 0; which < 4; ++which) {
        const Tensor g = losses(logits, which, true).grad_logits;
        for (std::size_t i = 0; i < logits.size(); ++i) {
            Tensor up = logits, down = logits;
            up.data()[i] += 1e-6;
            down.data()[i] -= 1e-6;
            const double num = (losses(up, which, false).value - losses(down, which, false).value) / 2e-6;
            CHECK(g.data()[i] == doctest::Approx(num).epsilon(1e-6).scale(1.0));
        }
    }
}

TEST_CASE("Gaussian ramp-up of beta") {
    const RampSchedule r{1.0, 5};
    CHECK(beta_at(r, 0) == doctest::Approx(std::exp(-5.0)));
    CHECK(beta_at(r, 0) == doctest::Approx(0.00674).epsilon(1e-3));
    CHECK(beta_at(r, 5) == 1.0);
    CHECK(beta_at(r, 50) == 1.0);
    double prev = 0.0;
    for (int e = 0; e <= 10; ++e) {
        CHECK(beta_at(r, e) >= prev);
        prev = beta_at(r, e);
    }
    const RampSchedule flat{2.0, 0};
    for (int e = 0; e < 4; ++e) CHECK(beta_at(flat, e) == 2.0);
}

TEST_CASE("loss report total is sup + beta con + w cam") {
    LossReport r;
    r.sup = 0.4;
    r.con = 0.2;
    r.beta = 0.5;
    r.cam = 0.3;
    r.cam_weight = 1.0;
    CHECK(combine(r) == doctest::Approx(0.4 + 0.1 + 0.3));
}
