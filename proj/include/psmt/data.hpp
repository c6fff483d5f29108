#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "psmt/rng.hpp"
#include "psmt/tensor.hpp"

namespace psmt {

// ---------------------------------------------------------------- synthetic shapes

enum class ShapeKind { disk = 1, rectangle = 2, triangle = 3 };

inline constexpr int kSyntheticClasses = 4;  // background + three shapes
inline constexpr std::uint8_t kMaskIgnore = 255;

struct ShapeInstance {
    ShapeKind kind = ShapeKind::disk;
    double cx = 0.0;
    double cy = 0.0;
    double size = 0.0;    // disk radius, rectangle half-width, triangle circumradius
    double aspect = 1.0;  // rectangle half-height / half-width
    double angle = 0.0;   // radians
    double color[3] = {0.0, 0.0, 0.0};
    // Class-specific texture (dots, stripes, checks for classes 1..3); unused when untextured.
    double color2[3] = {0.0, 0.0, 0.0};
    double period = 0.0;
    double tex_angle = 0.0;

    [[nodiscard]] bool contains(double x, double y) const;
    // True where the texture shows color2 instead of color.
    [[nodiscard]] bool texture_on(double x, double y) const;
};

struct SyntheticSpec {
    int height = 64;
    int width = 64;
    int shapes_min = 1;
    int shapes_max = 3;
    double size_min = 7.0;
    double size_max = 14.0;
    double noise = 0.04;  // std of additive pixel noise
    bool textured = false;
    double period_min = 5.0;
    double period_max = 8.0;
    std::uint64_t seed = 0;
    void validate() const;
};
void to_json(nlohmann::json& j, const SyntheticSpec& s);
void from_json(const nlohmann::json& j, SyntheticSpec& s);

struct Scene {
    Tensor image;  // 1x3xHxW in [0,1]
    LabelMap mask;
    std::vector<ShapeInstance> shapes;
};

// Image `index` of the generator stream. The first shape's class cycles
// with the index so every class shows up in at least a third of the images.
Scene render_scene(const SyntheticSpec& spec, std::size_t index);

// ---------------------------------------------------------------- index and splits

struct DatasetItem {
    std::string id;
    std::string image;  // relative to the dataset root
    std::string mask;   // empty when hidden
};

struct DatasetIndex {
    std::filesystem::path root;
    int num_classes = kSyntheticClasses;
    std::vector<DatasetItem> labelled;
    std::vector<DatasetItem> unlabelled;
    std::uint64_t split_seed = 0;
    std::string ratio;  // e.g. "1/8"; empty for the full index
};

// Writes images/, masks/ and dataset.json under `root`.
DatasetIndex generate_synthetic(const SyntheticSpec& spec, std::size_t n,
                                const std::filesystem::path& root);

// Full index (every item labelled) from <root>/dataset.json.
DatasetIndex open_dataset(const std::filesystem::path& root);

struct Ratio {
    long num = 1;
    long den = 1;
};
Ratio parse_ratio(const std::string& s);
std::string to_string(const Ratio& r);

// ceil(N * num / den) items keep their labels.
std::size_t labelled_count(std::size_t total, const Ratio& ratio);

DatasetIndex split_partition(const DatasetIndex& full, const Ratio& ratio, std::uint64_t seed);

inline constexpr const char* kSplitSchema = "psmt-split-1";
nlohmann::json manifest_json(const DatasetIndex& split);
void write_manifest(const DatasetIndex& split, const std::filesystem::path& path);
// Rebuilds the split from the manifest and the dataset it names, no seed needed.
DatasetIndex load_manifest(const std::filesystem::path& path,
                           const std::filesystem::path& dataset_root = {});

// ---------------------------------------------------------------- loading

struct Sample {
    std::string id;
    Tensor image;  // 1xCxHxW in [0,1]
    std::optional<LabelMap> mask;
};

enum class LoadMode { labelled, unlabelled };

// `ids` are positions in index.labelled (labelled mode) or index.unlabelled.
// Unlabelled mode never reads masks, even for items that have one on disk.
std::vector<Sample> load_batch(const DatasetIndex& index, std::span<const std::size_t> ids,
                               LoadMode mode);
std::vector<Sample> load_all(const DatasetIndex& index, LoadMode mode);

Tensor load_image(const std::filesystem::path& path);
LabelMap load_mask(const std::filesystem::path& path, int num_classes);

// Endless sampler over [0, size): each cycle is a fresh permutation derived
// from (seed, tag, cycle), so the position counter is the only state.
class CyclicSampler {
public:
    CyclicSampler() = default;
    CyclicSampler(std::size_t size, std::uint64_t seed, std::uint64_t tag);

    std::vector<std::size_t> next(std::size_t k);
    [[nodiscard]] std::uint64_t position() const { return position_; }
    void seek(std::uint64_t position) { position_ = position; }

private:
    void load_cycle(std::uint64_t cycle);

    std::size_t size_ = 0;
    std::uint64_t seed_ = 0;
    std::uint64_t tag_ = 0;
    std::uint64_t position_ = 0;
    std::uint64_t cached_cycle_ = ~std::uint64_t{0};
    std::vector<std::size_t> order_;
};

}  // namespace psmt
