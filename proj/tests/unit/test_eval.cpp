#include <doctest.h>

#include <cmath>

#include "../common/sliding_oracle.hpp"
#include "psmt/error.hpp"
#include "psmt/eval.hpp"
#include "support.hpp"

using namespace psmt;

namespace {

LabelMap grid(int h, int w, std::initializer_list<int> v) {
    LabelMap m(1, h, w);
    std::copy(v.begin(), v.end(), m.values.begin());
    return m;
}

}  // namespace

TEST_CASE("2x2 binary case: left-column gt vs top-row prediction gives 1/3") {
    const std::vector<LabelMap> gt{grid(2, 2, {1, 0, 1, 0})};
    const std::vector<LabelMap> pred{grid(2, 2, {1, 1, 0, 0})};
    const auto r = miou(pred, gt, 2);
    CHECK(r.per_class[0] == doctest::Approx(1.0 / 3.0));
    CHECK(r.per_class[1] == doctest::Approx(1.0 / 3.0));
    CHECK(r.miou == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("identical prediction scores 1, disjoint classes score 0") {
    const auto g = testing::random_labels(2, 8, 8, 4, 1);
    const std::vector<LabelMap> gts{g};
    CHECK(miou(gts, gts, 4).miou == 1.0);
    const std::vector<LabelMap> a{grid(1, 4, {0, 0, 1, 1})};
    const std::vector<LabelMap> b{grid(1, 4, {2, 2, 3, 3})};
    CHECK(miou(b, a, 4).miou == 0.0);
    CHECK_THROWS(miou(std::vector<LabelMap>{}, std::vector<LabelMap>{}, 4));
}

TEST_CASE("absent classes are NaN and excluded; IGNORE pixels are skipped") {
    const std::vector<LabelMap> gt{grid(1, 4, {0, 0, 1, 4})};
    const std::vector<LabelMap> pred{grid(1, 4, {0, 0, 1, 2})};
    const auto r = miou(pred, gt, 4);
    CHECK(std::isnan(r.per_class[3]));
    CHECK(r.miou == 1.0);
    CHECK(std::isnan(r.per_class[2]));  // predicted only on an ignored pixel
    ConfusionMatrix cm(4);
    cm.add(pred[0], gt[0]);
    CHECK(cm.total() == 3);
}

TEST_CASE("mIoU is invariant under a consistent class permutation") {
    const auto g = testing::random_labels(3, 8, 8, 4, 2);
    const auto p = testing::random_labels(3, 8, 8, 4, 3);
    const int perm[4] = {2, 0, 3, 1};
    LabelMap gp = g, pp = p;
    for (auto& v : gp.values) v = perm[v];
    for (auto& v : pp.values) v = perm[v];
    const std::vector<LabelMap> g1{g}, p1{p}, g2{gp}, p2{pp};
    CHECK(miou(p1, g1, 4).miou == doctest::Approx(miou(p2, g2, 4).miou).epsilon(1e-15));
}

TEST_CASE("confusion accumulation is order independent") {
    std::vector<LabelMap> preds, gts;
    for (int i = 0; i < 5; ++i) {
        preds.push_back(testing::random_labels(1, 6, 6, 3, 10 + i));
        gts.push_back(testing::random_labels(1, 6, 6, 3, 20 + i));
    }
    ConfusionMatrix fwd(3), rev(3);
    for (int i = 0; i < 5; ++i) fwd.add(preds[i], gts[i]);
    for (int i = 4; i >= 0; --i) rev.add(preds[i], gts[i]);
    CHECK(fwd == rev);
    ConfusionMatrix half1(3), half2(3);
    for (int i = 0; i < 2; ++i) half1.add(preds[i], gts[i]);
    for (int i = 2; i < 5; ++i) half2.add(preds[i], gts[i]);
    half2.merge(half1);
    CHECK(half2 == fwd);
}

TEST_CASE("infer: identical teachers match the single model, repeat calls agree") {
    const SegModel m(testing::small_arch(), 3);
    const TeacherPair pair(m, 0.9);
    const Tensor x = testing::random_tensor({2, 3, 16, 16}, 4, 0.0, 1.0);
    CHECK(infer(pair, x) == argmax_channels(m.predict_probs(x)));
    CHECK(infer(pair, x) == infer(pair, x));
}

TEST_CASE("sliding with a full-image window equals infer bit for bit") {
    const TeacherPair pair(SegModel(testing::small_arch(), 1), SegModel(testing::small_arch(), 2), 0.9);
    const Tensor x = testing::random_tensor({2, 3, 32, 32}, 5, 0.0, 1.0);
    CHECK(sliding_infer(pair, x, {32, 32}, {32, 32}) == infer(pair, x));
    CHECK(sliding_infer(pair, x, {32, 32}, {8, 8}) == infer(pair, x));
}

TEST_CASE("sliding overlap accumulation matches the 8x8 brute-force oracle") {
    // A position-dependent toy predictor makes every window contribute a
    // distinct soft map.
    const SoftPredictor toy = [](const Tensor& crop) {
        Tensor p({crop.shape().n, 2, crop.shape().h, crop.shape().w});
        for (int n = 0; n < crop.shape().n; ++n) {
            for (int y = 0; y < crop.shape().h; ++y) {
                for (int x = 0; x < crop.shape().w; ++x) {
                    const double a = 1.0 / (1.0 + std::exp(-(crop.at(n, 0, y, x) - 0.5 + 0.1 * x - 0.07 * y)));
                    p.at(n, 0, y, x) = a;
                    p.at(n, 1, y, x) = 1.0 - a;
                }
            }
        }
        return p;
    };
    const Tensor x = testing::random_tensor({1, 1, 8, 8}, 6, 0.0, 1.0);
    for (auto [wh, sh] : {std::pair{4, 2}, std::pair{5, 2}, std::pair{4, 4}, std::pair{6, 3}, std::pair{8, 1}}) {
        const Tensor lib = sliding_soft(toy, x, {wh, wh}, {sh, sh});
        const Tensor ref = oracle::sliding_sum(toy, x, wh, wh, sh, sh);
        CHECK(testing::max_abs_diff(lib, ref) < 1e-14);
    }
    // Pixel (3,3) with a 4x4 window at stride 2 is covered by origins {0,2}
    // in each axis: four windows, so the class sums add to 4.
    const Tensor s = sliding_soft(toy, x, {4, 4}, {2, 2});
    CHECK(s.at(0, 0, 3, 3) + s.at(0, 1, 3, 3) == doctest::Approx(4.0));
    CHECK(s.at(0, 0, 0, 0) + s.at(0, 1, 0, 0) == doctest::Approx(1.0));
}

TEST_CASE("sliding argument checks") {
    CHECK(parse_sliding("32x16:8x4").first.w == 16);
    CHECK(parse_sliding("32x16:8x4").second.h == 8);
    CHECK_THROWS_AS(parse_sliding("32:8"), ConfigError);
    CHECK_THROWS_AS(window_origins(8, 16, 4), ConfigError);
    CHECK(window_origins(10, 4, 4) == std::vector<int>{0, 4, 6});
    CHECK(window_origins(8, 4, 4) == std::vector<int>{0, 4});
}

TEST_CASE("non-overlapping windows tile per-patch predictions") {
    const SegModel m(testing::small_arch(), 7);
    const TeacherPair pair(m, 0.9);
    const Tensor x = testing::random_tensor({1, 3, 32, 32}, 8, 0.0, 1.0);
    const LabelMap tiled = sliding_infer(pair, x, {16, 16}, {16, 16});
    for (int oy : {0, 16}) {
        for (int ox : {0, 16}) {
            Tensor crop({1, 3, 16, 16});
            for (int c = 0; c < 3; ++c) {
                for (int y = 0; y < 16; ++y) {
                    for (int xx = 0; xx < 16; ++xx) crop.at(0, c, y, xx) = x.at(0, c, oy + y, ox + xx);
                }
            }
            const LabelMap patch = infer(pair, crop);
            for (int y = 0; y < 16; ++y) {
                for (int xx = 0; xx < 16; ++xx) CHECK(tiled.at(0, oy + y, ox + xx) == patch.at(0, y, xx));
            }
        }
    }
}
