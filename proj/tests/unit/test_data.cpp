#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "psmt/data.hpp"
#include "psmt/error.hpp"
#include "psmt/io.hpp"
#include "support.hpp"

using namespace psmt;
using psmt::io::PngImage;
using psmt::io::write_png;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

DatasetIndex fake_index(std::size_t n) {
    DatasetIndex d;
    d.root = "/nonexistent";
    for (std::size_t i = 0; i < n; ++i) {
        d.labelled.push_back({std::to_string(i), "images/" + std::to_string(i) + ".png",
                              "masks/" + std::to_string(i) + ".png"});
    }
    return d;
}

std::set<std::string> ids_of(const std::vector<DatasetItem>& v) {
    std::set<std::string> s;
    for (const auto& i : v) s.insert(i.id);
    return s;
}

}  // namespace

TEST_CASE("generation is byte-identical for the same spec") {
    SyntheticSpec spec;
    spec.seed = 7;
    const auto a = testing::scratch_dir("gen_a");
    const auto b = testing::scratch_dir("gen_b");
    generate_synthetic(spec, 12, a);
    generate_synthetic(spec, 12, b);
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), a);
        CHECK(slurp(e.path()) == slurp(b / rel));
    }
    spec.seed = 8;
    const auto c = testing::scratch_dir("gen_c");
    generate_synthetic(spec, 12, c);
    CHECK(slurp(a / "images/000000.png") != slurp(c / "images/000000.png"));
}

TEST_CASE("a lone noiseless disk covers pi r^2 pixels within a perimeter band") {
    SyntheticSpec spec;
    spec.shapes_min = spec.shapes_max = 1;
    spec.noise = 0.0;
    int checked = 0;
    for (std::size_t i = 0; i < 60; i += 3) {  // index % 3 == 0 puts a disk first
        const Scene s = render_scene(spec, i);
        REQUIRE(s.shapes.size() == 1);
        REQUIRE(s.shapes[0].kind == ShapeKind::disk);
        const double r = s.shapes[0].size;
        const auto count = static_cast<double>(std::count(s.mask.values.begin(), s.mask.values.end(), 1));
        CHECK(std::abs(count - std::numbers::pi * r * r) <= 2.0 * std::numbers::pi * r);
        ++checked;
    }
    CHECK(checked == 20);
}

TEST_CASE("rendered mask agrees with the shape geometry at pixel centres") {
    SyntheticSpec spec;
    for (std::size_t i = 0; i < 10; ++i) {
        const Scene s = render_scene(spec, i);
        for (int y = 0; y < spec.height; ++y) {
            for (int x = 0; x < spec.width; ++x) {
                int expect = 0;
                for (const auto& sh : s.shapes) {
                    if (sh.contains(x + 0.5, y + 0.5)) expect = static_cast<int>(sh.kind);
                }
                CHECK(s.mask.at(0, y, x) == expect);
            }
        }
    }
}

TEST_CASE("textured shapes: pixels take the texture colour pattern, mask ignores texture") {
    SyntheticSpec spec;
    spec.noise = 0.0;
    spec.textured = true;
    for (std::size_t i = 0; i < 9; ++i) {
        const Scene s = render_scene(spec, i);
        for (const auto& sh : s.shapes) {
            CHECK(sh.period >= spec.period_min);
            CHECK(sh.period <= spec.period_max);
        }
        for (int y = 0; y < spec.height; ++y) {
            for (int x = 0; x < spec.width; ++x) {
                const ShapeInstance* top = nullptr;
                for (const auto& sh : s.shapes) {
                    if (sh.contains(x + 0.5, y + 0.5)) top = &sh;
                }
                CHECK(s.mask.at(0, y, x) == (top ? static_cast<int>(top->kind) : 0));
                if (!top) continue;
                const double* col = top->texture_on(x + 0.5, y + 0.5) ? top->color2 : top->color;
                CHECK(s.image.at(0, 0, y, x) == doctest::Approx(col[0]).epsilon(0.003));
            }
        }
    }
}

TEST_CASE("stripes cover about half of a large rectangle") {
    ShapeInstance r;
    r.kind = ShapeKind::rectangle;
    r.cx = r.cy = 0.0;
    r.size = 40.0;
    r.period = 6.0;
    r.tex_angle = 0.3;
    int on = 0;
    int total = 0;
    for (int y = -20; y < 20; ++y) {
        for (int x = -20; x < 20; ++x) {
            on += r.texture_on(x + 0.5, y + 0.5);
            ++total;
        }
    }
    CHECK(std::abs(static_cast<double>(on) / total - 0.5) < 0.05);
}

TEST_CASE("synthetic spec round-trips through JSON with texture fields") {
    SyntheticSpec spec;
    spec.textured = true;
    spec.period_min = 4.0;
    spec.period_max = 9.0;
    const SyntheticSpec back = nlohmann::json(spec).get<SyntheticSpec>();
    CHECK(back.textured);
    CHECK(back.period_min == 4.0);
    CHECK(back.period_max == 9.0);
    spec.period_min = 1.0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("zero shapes per image gives an all-background mask") {
    SyntheticSpec spec;
    spec.shapes_min = spec.shapes_max = 0;
    const auto root = testing::scratch_dir("gen_empty");
    const auto idx = generate_synthetic(spec, 1, root);
    const LabelMap m = load_mask(root / idx.labelled[0].mask, kSyntheticClasses);
    for (auto v : m.values) CHECK(v == 0);
}

TEST_CASE("every class appears in at least 10% of generated images") {
    SyntheticSpec spec;
    std::array<int, kSyntheticClasses> seen{};
    const int n = 60;
    for (int i = 0; i < n; ++i) {
        const Scene s = render_scene(spec, static_cast<std::size_t>(i));
        std::set<int> classes(s.mask.values.begin(), s.mask.values.end());
        for (int c : classes) ++seen[c];
    }
    for (int c = 0; c < kSyntheticClasses; ++c) CHECK(seen[c] >= n / 10);
}

TEST_CASE("labelled counts: 1/2 of 10 is 5, 1/16 of 10582 is 662") {
    CHECK(labelled_count(10, parse_ratio("1/2")) == 5);
    CHECK(labelled_count(10582, parse_ratio("1/16")) == 662);
    CHECK(labelled_count(1024, parse_ratio("1/8")) == 128);
    const auto s = split_partition(fake_index(10), parse_ratio("1/2"), 0);
    CHECK(s.labelled.size() == 5);
    CHECK(s.unlabelled.size() == 5);
    CHECK(to_string(parse_ratio("1/16")) == "1/16");
    CHECK_THROWS_AS(parse_ratio("0/4"), ConfigError);
    CHECK_THROWS_AS(parse_ratio("banana"), ConfigError);
    CHECK_THROWS_AS(split_partition(fake_index(0), parse_ratio("1/2"), 0), ConfigError);
}

TEST_CASE("split is a partition for many ratios and seeds; seeds change membership") {
    const auto full = fake_index(97);
    for (const char* r : {"1/2", "1/4", "1/8", "1/16", "3/5"}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto s = split_partition(full, parse_ratio(r), seed);
            const auto l = ids_of(s.labelled);
            const auto u = ids_of(s.unlabelled);
            CHECK(l.size() + u.size() == 97);
            std::vector<std::string> both;
            std::set_intersection(l.begin(), l.end(), u.begin(), u.end(), std::back_inserter(both));
            CHECK(both.empty());
            CHECK(s.labelled.size() == labelled_count(97, parse_ratio(r)));
            for (const auto& item : s.unlabelled) CHECK(item.mask.empty());
        }
    }
    const auto a = split_partition(full, parse_ratio("1/4"), 1);
    const auto b = split_partition(full, parse_ratio("1/4"), 1);
    const auto c = split_partition(full, parse_ratio("1/4"), 2);
    CHECK(manifest_json(a) == manifest_json(b));
    CHECK(ids_of(a.labelled) != ids_of(c.labelled));
    CHECK(a.labelled.size() == c.labelled.size());
}

TEST_CASE("manifest replay reproduces the split without the seed") {
    SyntheticSpec spec;
    const auto root = testing::scratch_dir("manifest");
    const auto full = generate_synthetic(spec, 20, root);
    const auto split = split_partition(open_dataset(root), parse_ratio("1/4"), 3);
    write_manifest(split, root / "splits/q.json");
    const auto back = load_manifest(root / "splits/q.json");
    CHECK(ids_of(back.labelled) == ids_of(split.labelled));
    CHECK(ids_of(back.unlabelled) == ids_of(split.unlabelled));
    CHECK(back.ratio == "1/4");
    CHECK(manifest_json(back) == manifest_json(split));
    CHECK(full.labelled.size() == 20);
}

TEST_CASE("loading: values in [0,1], input order kept, unlabelled hides masks") {
    SyntheticSpec spec;
    const auto root = testing::scratch_dir("load");
    generate_synthetic(spec, 6, root);
    const auto split = split_partition(open_dataset(root), parse_ratio("1/2"), 0);
    const std::vector<std::size_t> ids{2, 0, 1};
    const auto batch = load_batch(split, ids, LoadMode::labelled);
    REQUIRE(batch.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(batch[k].id == split.labelled[ids[k]].id);
        REQUIRE(batch[k].mask.has_value());
        for (double v : batch[k].image.values()) CHECK((v >= 0.0 && v <= 1.0));
    }
    // Full index: every item has a mask on disk, yet unlabelled mode hides it.
    DatasetIndex all = open_dataset(root);
    all.unlabelled = all.labelled;
    const std::vector<std::size_t> one{0};
    const auto hidden = load_batch(all, one, LoadMode::unlabelled);
    CHECK(!hidden[0].mask.has_value());
}

TEST_CASE("corrupt or missing files raise a data error naming the path") {
    const auto root = testing::scratch_dir("corrupt");
    const auto bad = root / "broken.png";
    std::ofstream(bad) << "not a png";
    try {
        (void)load_image(bad);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find(bad.string()) != std::string::npos);
    }
    CHECK_THROWS_AS(load_image(root / "missing.png"), DataError);
}

TEST_CASE("mask values beyond the class range are rejected; 255 maps to ignore") {
    const auto root = testing::scratch_dir("maskvals");
    PngImage img{2, 1, 1, {255, 1}};
    write_png(root / "ok.png", img);
    const auto m = load_mask(root / "ok.png", 4);
    CHECK(m.values[0] == ignore_label(4));
    CHECK(m.values[1] == 1);
    PngImage bad{1, 1, 1, {9}};
    write_png(root / "bad.png", bad);
    CHECK_THROWS_AS(load_mask(root / "bad.png", 4), DataError);
}

TEST_CASE("cyclic sampler: each cycle is a permutation and seek replays") {
    CyclicSampler s(7, 3, 1);
    std::vector<std::size_t> first = s.next(7);
    std::vector<std::size_t> sorted = first;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 7; ++i) CHECK(sorted[i] == i);
    const auto more = s.next(5);
    CyclicSampler t(7, 3, 1);
    t.seek(7);
    CHECK(t.next(5) == more);
    CHECK(s.position() == 12);
}
