#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "../common/fixtures.hpp"
#include "cli.hpp"
#include "psmt/io.hpp"
#include "psmt/trainer.hpp"
#include "support.hpp"

namespace fs = std::filesystem;

namespace {

int psmt_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "psmt");
    // Keep the suite's output readable: the commands print summaries.
    std::ostringstream sink;
    auto* old_out = std::cout.rdbuf(sink.rdbuf());
    auto* old_err = std::cerr.rdbuf(sink.rdbuf());
    const int rc = psmt::cli::run(args);
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    return rc;
}

std::size_t count_of(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (auto p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
    return n;
}

struct CliWorld {
    fs::path root = testing::scratch_dir("cli");
    fs::path data = root / "data";
    fs::path config = root / "tiny.json";
    CliWorld() {
        fixture::make_tiny_dataset(data);
        std::ofstream(config) << nlohmann::json(fixture::tiny_config(data)).dump(2);
    }
    std::vector<std::string> globals(const std::string& name) const {
        return {"--config", config.string(), "--out", (root / "runs").string(), "--run-name", name};
    }
};

const CliWorld& world() {
    static const CliWorld w;
    return w;
}

}  // namespace

TEST_CASE("split twice with the same seed gives the same manifest hash") {
    const auto& w = world();
    auto once = [&](const std::string& name) {
        REQUIRE(psmt_cli({"--seed", "7", "--out", (w.root / "runs").string(), "split", "--dataset",
                          (w.data / "train").string(), "--ratio", "1/8", "--name", name}) == 0);
        return psmt::io::file_hash(w.data / "train/splits" / (name + ".json"));
    };
    CHECK(once("a") == once("b"));
}

TEST_CASE("train with epochs 0 exits 0 and writes a checkpoint") {
    const auto& w = world();
    auto args = w.globals("zero");
    args.insert(args.end(), {"train", "--epochs", "0"});
    CHECK(psmt_cli(args) == 0);
    CHECK(fs::exists(w.root / "runs/zero/checkpoints" / psmt::checkpoint_name(0)));
    const auto run = nlohmann::json::parse(psmt::io::read_text(w.root / "runs/zero/run.json"));
    CHECK(run.contains("config"));
    CHECK(run.contains("seed"));
    CHECK(run.contains("manifest_hash"));
}

TEST_CASE("unknown flag exits nonzero; unknown config key is named") {
    CHECK(psmt_cli({"train", "--no-such-flag"}) != 0);
    CHECK(psmt_cli({"frobnicate"}) != 0);

    const auto& w = world();
    const auto bad = w.root / "bad.json";
    std::ofstream(bad) << R"({"epochs": 1, "mystery_knob": 3})";
    std::ostringstream err;
    auto* old = std::cerr.rdbuf(err.rdbuf());
    const int rc = psmt::cli::run({"psmt", "--config", bad.string(), "train"});
    std::cerr.rdbuf(old);
    CHECK(rc == 2);
    CHECK(err.str().find("mystery_knob") != std::string::npos);
    CHECK(err.str().find("psmt: error: config:") == 0);
}

TEST_CASE("seed precedence: flag, then environment, then config") {
    ::unsetenv("PSMT_SEED");
    CHECK(psmt::cli::resolve_seed(std::nullopt, 4) == 4);
    ::setenv("PSMT_SEED", "9", 1);
    CHECK(psmt::cli::resolve_seed(std::nullopt, 4) == 9);
    CHECK(psmt::cli::resolve_seed(11, 4) == 11);
    ::unsetenv("PSMT_SEED");
}

TEST_CASE("train, eval and plot chain; two runs overlay in one chart") {
    const auto& w = world();
    for (const char* name : {"r1", "r2"}) {
        auto args = w.globals(name);
        args.insert(args.end(), {"train", "--epochs", "1"});
        REQUIRE(psmt_cli(args) == 0);
    }
    const auto ckpt = w.root / "runs/r1/checkpoints" / psmt::checkpoint_name(1);
    auto ev = w.globals("ev");
    ev.insert(ev.end(), {"eval", "--ckpt", ckpt.string(), "--split", (w.data / "val").string()});
    CHECK(psmt_cli(ev) == 0);
    CHECK(fs::file_size(w.root / "runs/ev/per_class_iou.csv") > 0);

    auto pl = w.globals("pl");
    pl.insert(pl.end(), {"plot", "--metrics", (w.root / "runs/r1/metrics.jsonl").string(),
                         (w.root / "runs/r2/metrics.jsonl").string(), "--probe",
                         (w.root / "runs/r1/grad_probe.json").string()});
    REQUIRE(psmt_cli(pl) == 0);
    const std::string miou = psmt::io::read_text(w.root / "runs/pl/miou.svg");
    CHECK(count_of(miou, "<polyline") == 2);
    CHECK(fs::file_size(w.root / "runs/pl/loss.svg") > 0);
    const std::string grads = psmt::io::read_text(w.root / "runs/pl/gradients.svg");
    const auto probe = nlohmann::json::parse(psmt::io::read_text(w.root / "runs/r1/grad_probe.json"));
    // One bar per layer for each of the two loss modes.
    CHECK(count_of(grads, "class=\"bar\"") == 2 * probe["layers"].size());

    const auto empty = w.root / "empty.jsonl";
    std::ofstream{empty};
    auto pe = w.globals("pe");
    pe.insert(pe.end(), {"plot", "--metrics", empty.string()});
    CHECK(psmt_cli(pe) == 3);
}

TEST_CASE("ablate with one arm gives a one-row table; arm order follows the input") {
    const auto& w = world();
    auto one = w.globals("abl1");
    one.insert(one.end(), {"ablate", "--arms", "mt_mse", "--seeds", "0", "--epochs", "1"});
    REQUIRE(psmt_cli(one) == 0);
    std::istringstream csv(psmt::io::read_text(w.root / "runs/abl1/ablation.csv"));
    std::vector<std::string> lines;
    for (std::string l; std::getline(csv, l);) lines.push_back(l);
    REQUIRE(lines.size() == 2);
    CHECK(lines[1].rfind("mt_mse,", 0) == 0);

    auto two = w.globals("abl2");
    two.insert(two.end(), {"ablate", "--arms", "full,mt_mse", "--seeds", "0", "--epochs", "1"});
    REQUIRE(psmt_cli(two) == 0);
    const std::string t = psmt::io::read_text(w.root / "runs/abl2/ablation.csv");
    CHECK(t.find("\nfull,") < t.find("\nmt_mse,"));

    auto bad = w.globals("abl3");
    bad.insert(bad.end(), {"ablate", "--arms", "nonsense", "--seeds", "0"});
    CHECK(psmt_cli(bad) == 2);
}
