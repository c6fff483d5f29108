#include "psmt/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <unordered_map>

#include "psmt/error.hpp"
#include "psmt/io.hpp"
#include "psmt/model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace psmt {

// ---------------------------------------------------------------- synthetic shapes

bool ShapeInstance::contains(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    switch (kind) {
        case ShapeKind::disk:
            return dx * dx + dy * dy <= size * size;
        case ShapeKind::rectangle: {
            const double c = std::cos(angle);
            const double s = std::sin(angle);
            const double u = c * dx + s * dy;
            const double v = -s * dx + c * dy;
            return std::abs(u) <= size && std::abs(v) <= size * aspect;
        }
        case ShapeKind::triangle: {
            double px[3];
            double py[3];
            for (int k = 0; k < 3; ++k) {
                const double a = angle + k * 2.0 * std::numbers::pi / 3.0;
                px[k] = cx + size * std::cos(a);
                py[k] = cy + size * std::sin(a);
            }
            bool neg = false;
            bool pos = false;
            for (int k = 0; k < 3; ++k) {
                const int j = (k + 1) % 3;
                const double cross = (px[j] - px[k]) * (y - py[k]) - (py[j] - py[k]) * (x - px[k]);
                neg |= cross < 0.0;
                pos |= cross > 0.0;
            }
            return !(neg && pos);
        }
    }
    return false;
}

bool ShapeInstance::texture_on(double x, double y) const {
    if (!(period > 0.0)) return false;
    const double c = std::cos(tex_angle);
    const double s = std::sin(tex_angle);
    const double k = 2.0 * std::numbers::pi / period;
    const double u = k * (c * (x - cx) + s * (y - cy));
    const double v = k * (-s * (x - cx) + c * (y - cy));
    switch (kind) {
        case ShapeKind::disk:
            return std::cos(u) + std::cos(v) > 1.0;
        case ShapeKind::rectangle:
            return std::cos(u) > 0.0;
        case ShapeKind::triangle:
            return std::cos(u) * std::cos(v) > 0.0;
    }
    return false;
}

void SyntheticSpec::validate() const {
    if (height < kMinImageSide || width < kMinImageSide) {
        throw ConfigError("synthetic canvas must be at least 16x16");
    }
    if (shapes_min < 0 || shapes_max < shapes_min) {
        throw ConfigError("synthetic shapes range must satisfy 0 <= min <= max");
    }
    if (!(size_min > 0.0) || size_max < size_min) {
        throw ConfigError("synthetic size range must satisfy 0 < min <= max");
    }
    if (noise < 0.0) throw ConfigError("synthetic noise must be >= 0");
    if (textured && (!(period_min >= 2.0) || period_max < period_min)) {
        throw ConfigError("synthetic period range must satisfy 2 <= min <= max");
    }
}

void to_json(json& j, const SyntheticSpec& s) {
    j = json{{"height", s.height},         {"width", s.width},       {"shapes_min", s.shapes_min},
             {"shapes_max", s.shapes_max}, {"size_min", s.size_min}, {"size_max", s.size_max},
             {"noise", s.noise},           {"textured", s.textured}, {"period_min", s.period_min},
             {"period_max", s.period_max}, {"seed", s.seed}};
}

void from_json(const json& j, SyntheticSpec& s) {
    s.height = j.at("height").get<int>();
    s.width = j.at("width").get<int>();
    s.shapes_min = j.at("shapes_min").get<int>();
    s.shapes_max = j.at("shapes_max").get<int>();
    s.size_min = j.at("size_min").get<double>();
    s.size_max = j.at("size_max").get<double>();
    s.noise = j.at("noise").get<double>();
    s.textured = j.value("textured", false);
    s.period_min = j.value("period_min", 5.0);
    s.period_max = j.value("period_max", 8.0);
    s.seed = j.at("seed").get<std::uint64_t>();
}

namespace {

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

void random_color(Rng& rng, double* out) {
    for (int c = 0; c < 3; ++c) out[c] = rng.uniform();
}

// Shape colours stay visibly apart from the background.
void contrasting_color(Rng& rng, const double* bg, double* out) {
    for (int attempt = 0; attempt < 100; ++attempt) {
        random_color(rng, out);
        double gap = 0.0;
        for (int c = 0; c < 3; ++c) gap = std::max(gap, std::abs(out[c] - bg[c]));
        if (gap >= 0.35) return;
    }
    for (int c = 0; c < 3; ++c) out[c] = bg[c] < 0.5 ? 1.0 : 0.0;
}

}  // namespace

Scene render_scene(const SyntheticSpec& spec, std::size_t index) {
    spec.validate();
    Rng rng = Rng::derive(spec.seed, {stream::generate, index});
    const int h = spec.height;
    const int w = spec.width;

    double bg[3];
    random_color(rng, bg);
    const int count = rng.uniform_int(spec.shapes_min, spec.shapes_max);
    Scene scene;
    for (int k = 0; k < count; ++k) {
        ShapeInstance s;
        const int cls = k == 0 ? static_cast<int>(index % 3) + 1 : rng.uniform_int(1, 3);
        s.kind = static_cast<ShapeKind>(cls);
        s.size = rng.uniform(spec.size_min, spec.size_max);
        s.aspect = rng.uniform(0.5, 1.0);
        s.angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double margin = std::min(s.size * 0.6, 0.45 * std::min(h, w));
        s.cx = rng.uniform(margin, w - margin);
        s.cy = rng.uniform(margin, h - margin);
        contrasting_color(rng, bg, s.color);
        if (spec.textured) {
            contrasting_color(rng, s.color, s.color2);
            s.period = rng.uniform(spec.period_min, spec.period_max);
            s.tex_angle = rng.uniform(0.0, std::numbers::pi);
        }
        scene.shapes.push_back(s);
    }

    scene.image = Tensor({1, 3, h, w});
    scene.mask = LabelMap(1, h, w, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double* col = bg;
            for (const auto& s : scene.shapes) {
                if (s.contains(x + 0.5, y + 0.5)) {
                    col = s.texture_on(x + 0.5, y + 0.5) ? s.color2 : s.color;
                    scene.mask.at(0, y, x) = static_cast<int>(s.kind);
                }
            }
            for (int c = 0; c < 3; ++c) {
                const double n = spec.noise > 0.0 ? spec.noise * rng.normal() : 0.0;
                scene.image.at(0, c, y, x) = quantize(col[c] + n);
            }
        }
    }
    return scene;
}

namespace {

std::string item_id(std::size_t i) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%06zu", i);
    return buf;
}

json shape_json(const ShapeInstance& s) {
    return json{{"class", static_cast<int>(s.kind)},
                {"cx", s.cx},
                {"cy", s.cy},
                {"size", s.size},
                {"aspect", s.aspect},
                {"angle", s.angle}};
}

io::PngImage to_png(const Tensor& image) {
    const auto& s = image.shape();
    io::PngImage png{s.w, s.h, s.c, {}};
    png.pixels.resize(static_cast<std::size_t>(s.w) * s.h * s.c);
    for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
            for (int c = 0; c < s.c; ++c) {
                png.pixels[(static_cast<std::size_t>(y) * s.w + x) * s.c + c] =
                    static_cast<std::uint8_t>(std::lround(image.at(0, c, y, x) * 255.0));
            }
        }
    }
    return png;
}

io::PngImage to_png(const LabelMap& mask, int num_classes) {
    io::PngImage png{mask.w, mask.h, 1, {}};
    png.pixels.resize(mask.plane());
    for (std::size_t i = 0; i < mask.plane(); ++i) {
        const auto v = mask.values[i];
        png.pixels[i] = v == ignore_label(num_classes) ? kMaskIgnore : static_cast<std::uint8_t>(v);
    }
    return png;
}

}  // namespace

DatasetIndex generate_synthetic(const SyntheticSpec& spec, std::size_t n, const fs::path& root) {
    if (n < 1) throw ConfigError("generate: n must be >= 1");
    spec.validate();
    std::error_code ec;
    fs::create_directories(root / "images", ec);
    fs::create_directories(root / "masks", ec);
    if (ec || !fs::is_directory(root / "images") || !fs::is_directory(root / "masks")) {
        throw DataError("cannot create dataset directory " + root.string());
    }

    DatasetIndex index;
    index.root = root;
    index.num_classes = kSyntheticClasses;
    json items = json::array();
    for (std::size_t i = 0; i < n; ++i) {
        const Scene scene = render_scene(spec, i);
        DatasetItem item{item_id(i), "images/" + item_id(i) + ".png", "masks/" + item_id(i) + ".png"};
        io::write_png(root / item.image, to_png(scene.image));
        io::write_png(root / item.mask, to_png(scene.mask, kSyntheticClasses));
        json shapes = json::array();
        for (const auto& s : scene.shapes) shapes.push_back(shape_json(s));
        items.push_back({{"id", item.id}, {"image", item.image}, {"mask", item.mask}, {"shapes", shapes}});
        index.labelled.push_back(std::move(item));
    }
    const json doc{{"schema", "psmt-dataset-1"},
                   {"num_classes", kSyntheticClasses},
                   {"generator", spec},
                   {"items", items}};
    io::write_text(root / "dataset.json", doc.dump(1) + "\n");
    return index;
}

DatasetIndex open_dataset(const fs::path& root) {
    const auto path = root / "dataset.json";
    json doc;
    try {
        doc = json::parse(io::read_text(path));
    } catch (const json::exception& e) {
        throw DataError("malformed " + path.string() + ": " + e.what());
    }
    DatasetIndex index;
    index.root = root;
    index.num_classes = doc.at("num_classes").get<int>();
    for (const auto& it : doc.at("items")) {
        index.labelled.push_back({it.at("id").get<std::string>(), it.at("image").get<std::string>(),
                                  it.value("mask", std::string{})});
    }
    return index;
}

// ---------------------------------------------------------------- splits

Ratio parse_ratio(const std::string& s) {
    Ratio r;
    const auto slash = s.find('/');
    try {
        std::size_t used = 0;
        if (slash == std::string::npos) {
            r.num = 1;
            r.den = std::stol(s, &used);
            if (used != s.size()) throw ConfigError("");
        } else {
            r.num = std::stol(s.substr(0, slash), &used);
            if (used != slash) throw ConfigError("");
            const auto rest = s.substr(slash + 1);
            r.den = std::stol(rest, &used);
            if (used != rest.size()) throw ConfigError("");
        }
    } catch (const std::exception&) {
        throw ConfigError("invalid ratio '" + s + "' (expected 1/n)");
    }
    if (r.num <= 0 || r.den <= 0 || r.num > r.den) throw ConfigError("invalid ratio '" + s + "'");
    return r;
}

std::string to_string(const Ratio& r) { return std::to_string(r.num) + "/" + std::to_string(r.den); }

std::size_t labelled_count(std::size_t total, const Ratio& ratio) {
    const auto num = static_cast<std::size_t>(ratio.num) * total;
    const auto den = static_cast<std::size_t>(ratio.den);
    return (num + den - 1) / den;
}

DatasetIndex split_partition(const DatasetIndex& full, const Ratio& ratio, std::uint64_t seed) {
    if (!full.unlabelled.empty()) throw ConfigError("split_partition: index is already split");
    const std::size_t total = full.labelled.size();
    const std::size_t k = labelled_count(total, ratio);
    if (k == 0) {
        throw ConfigError("ratio " + to_string(ratio) + " yields 0 labelled items out of " +
                          std::to_string(total));
    }
    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::derive(seed, {stream::split});
    std::shuffle(order.begin(), order.end(), rng.engine());
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());

    DatasetIndex out;
    out.root = full.root;
    out.num_classes = full.num_classes;
    out.split_seed = seed;
    out.ratio = to_string(ratio);
    for (std::size_t i = 0; i < total; ++i) {
        DatasetItem item = full.labelled[order[i]];
        if (i < k) {
            out.labelled.push_back(std::move(item));
        } else {
            item.mask.clear();
            out.unlabelled.push_back(std::move(item));
        }
    }
    return out;
}

json manifest_json(const DatasetIndex& split) {
    json lab = json::array();
    json unl = json::array();
    for (const auto& it : split.labelled) lab.push_back(it.id);
    for (const auto& it : split.unlabelled) unl.push_back(it.id);
    return json{{"schema", kSplitSchema},   {"ratio", split.ratio},   {"seed", split.split_seed},
                {"num_classes", split.num_classes}, {"labelled", lab}, {"unlabelled", unl}};
}

void write_manifest(const DatasetIndex& split, const fs::path& path) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    json doc = manifest_json(split);
    // Relative to the manifest so the dataset directory can move as a whole.
    const auto base = fs::absolute(path).parent_path();
    doc["dataset"] = fs::relative(fs::absolute(split.root), base).generic_string();
    io::write_text(path, doc.dump(1) + "\n");
}

DatasetIndex load_manifest(const fs::path& path, const fs::path& dataset_root) {
    json doc;
    try {
        doc = json::parse(io::read_text(path));
    } catch (const json::exception& e) {
        throw DataError("malformed manifest " + path.string() + ": " + e.what());
    }
    if (doc.value("schema", std::string{}) != kSplitSchema) {
        throw DataError("manifest " + path.string() + " is not schema " + kSplitSchema);
    }
    fs::path root = dataset_root;
    if (root.empty()) {
        root = fs::absolute(path).parent_path() / doc.at("dataset").get<std::string>();
        root = root.lexically_normal();
    }
    const DatasetIndex full = open_dataset(root);
    std::unordered_map<std::string, const DatasetItem*> by_id;
    for (const auto& it : full.labelled) by_id[it.id] = &it;
    auto lookup = [&](const std::string& id) {
        auto f = by_id.find(id);
        if (f == by_id.end()) throw DataError("manifest " + path.string() + " names unknown item " + id);
        return *f->second;
    };

    DatasetIndex out;
    out.root = root;
    out.num_classes = doc.at("num_classes").get<int>();
    out.split_seed = doc.at("seed").get<std::uint64_t>();
    out.ratio = doc.at("ratio").get<std::string>();
    for (const auto& id : doc.at("labelled")) out.labelled.push_back(lookup(id.get<std::string>()));
    for (const auto& id : doc.at("unlabelled")) {
        DatasetItem item = lookup(id.get<std::string>());
        item.mask.clear();
        out.unlabelled.push_back(std::move(item));
    }
    return out;
}

// ---------------------------------------------------------------- loading

Tensor load_image(const fs::path& path) {
    const auto png = io::read_png(path);
    Tensor t({1, png.channels, png.height, png.width});
    for (int y = 0; y < png.height; ++y) {
        for (int x = 0; x < png.width; ++x) {
            for (int c = 0; c < png.channels; ++c) {
                t.at(0, c, y, x) =
                    png.pixels[(static_cast<std::size_t>(y) * png.width + x) * png.channels + c] / 255.0;
            }
        }
    }
    return t;
}

LabelMap load_mask(const fs::path& path, int num_classes) {
    const auto png = io::read_png(path);
    if (png.channels != 1) throw DataError("mask " + path.string() + " is not single-channel");
    LabelMap m(1, png.height, png.width);
    for (std::size_t i = 0; i < m.plane(); ++i) {
        const int v = png.pixels[i];
        if (v == kMaskIgnore) {
            m.values[i] = ignore_label(num_classes);
        } else if (v >= num_classes) {
            throw DataError("mask " + path.string() + " holds class " + std::to_string(v) +
                            " >= " + std::to_string(num_classes));
        } else {
            m.values[i] = v;
        }
    }
    return m;
}

std::vector<Sample> load_batch(const DatasetIndex& index, std::span<const std::size_t> ids,
                               LoadMode mode) {
    const auto& list = mode == LoadMode::labelled ? index.labelled : index.unlabelled;
    std::vector<Sample> out;
    out.reserve(ids.size());
    for (const auto id : ids) {
        if (id >= list.size()) {
            throw ConfigError("load_batch: id " + std::to_string(id) + " out of range " +
                              std::to_string(list.size()));
        }
        const auto& item = list[id];
        Sample s{item.id, load_image(index.root / item.image), std::nullopt};
        if (mode == LoadMode::labelled) {
            if (item.mask.empty()) throw DataError("labelled item " + item.id + " has no mask");
            s.mask = load_mask(index.root / item.mask, index.num_classes);
            if (s.mask->h != s.image.shape().h || s.mask->w != s.image.shape().w) {
                throw DataError("mask " + item.mask + " does not match its image size");
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Sample> load_all(const DatasetIndex& index, LoadMode mode) {
    const auto n = (mode == LoadMode::labelled ? index.labelled : index.unlabelled).size();
    std::vector<std::size_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    return load_batch(index, ids, mode);
}

// ---------------------------------------------------------------- sampler

CyclicSampler::CyclicSampler(std::size_t size, std::uint64_t seed, std::uint64_t tag)
    : size_(size), seed_(seed), tag_(tag) {
    if (size == 0) throw ConfigError("sampler over an empty set");
}

void CyclicSampler::load_cycle(std::uint64_t cycle) {
    if (cycle == cached_cycle_) return;
    order_.resize(size_);
    std::iota(order_.begin(), order_.end(), 0);
    Rng rng = Rng::derive(seed_, {tag_, cycle});
    std::shuffle(order_.begin(), order_.end(), rng.engine());
    cached_cycle_ = cycle;
}

std::vector<std::size_t> CyclicSampler::next(std::size_t k) {
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i, ++position_) {
        load_cycle(position_ / size_);
        out.push_back(order_[position_ % size_]);
    }
    return out;
}

}  // namespace psmt
