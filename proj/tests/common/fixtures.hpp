#pragma once

#include <filesystem>
#include <string>

#include "psmt/config.hpp"
#include "psmt/data.hpp"

namespace fixture {

namespace fs = std::filesystem;

// Small dataset (32x32 images, small shapes) with a 1/4 split and a
// validation set, generated once under `dir`.
inline void make_tiny_dataset(const fs::path& dir, std::size_t n = 16) {
    if (fs::exists(dir / "train/splits/q.json")) return;
    psmt::SyntheticSpec spec;
    spec.height = spec.width = 32;
    spec.size_min = 3.0;
    spec.size_max = 6.0;
    spec.seed = 5;
    psmt::generate_synthetic(spec, n, dir / "train");
    spec.seed = 6;
    psmt::generate_synthetic(spec, 4, dir / "val");
    const auto split = psmt::split_partition(psmt::open_dataset(dir / "train"), psmt::parse_ratio("1/4"), 0);
    psmt::write_manifest(split, dir / "train/splits/q.json");
}

// Config sized for the tiny dataset and a cheap model.
inline psmt::RunConfig tiny_config(const fs::path& dir) {
    psmt::RunConfig c;
    c.dataset = (dir / "train").string();
    c.split = (dir / "train/splits/q.json").string();
    c.val = (dir / "val").string();
    c.epochs = 2;
    c.batch_labelled = 2;
    c.batch_unlabelled = 4;
    c.lr0 = 0.05;
    c.tau = 0.3;
    c.ramp.ramp_epochs = 1;
    c.arch.encoder_widths = {4, 8, 8};
    c.arch.decoder_hidden = 8;
    c.perturb.weak = {{1.0, 1.25}, 0.5, 32};
    c.checkpoint_every = 1;
    c.eval_every = 1;
    return c;
}

}  // namespace fixture
