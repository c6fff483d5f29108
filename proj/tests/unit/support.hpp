#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "psmt/model.hpp"
#include "psmt/rng.hpp"
#include "psmt/tensor.hpp"

namespace testing {

inline psmt::Tensor random_tensor(psmt::Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    psmt::Rng rng(seed);
    psmt::Tensor t(s);
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

inline psmt::ArchDescriptor small_arch(int classes = 4, bool bn = false) {
    psmt::ArchDescriptor a;
    a.num_classes = classes;
    a.encoder_widths = {8, 16, 16};
    a.decoder_hidden = 16;
    a.batch_norm = bn;
    return a;
}

inline psmt::LabelMap random_labels(int n, int h, int w, int classes, std::uint64_t seed) {
    psmt::Rng rng(seed);
    psmt::LabelMap m(n, h, w);
    for (auto& v : m.values) v = rng.uniform_int(0, classes - 1);
    return m;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("psmt_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline double max_abs_diff(const psmt::Tensor& a, const psmt::Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

}  // namespace testing
