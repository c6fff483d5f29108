#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "psmt/ablation.hpp"
#include "psmt/config.hpp"
#include "psmt/data.hpp"
#include "psmt/error.hpp"
#include "psmt/eval.hpp"
#include "psmt/io.hpp"
#include "psmt/plot.hpp"
#include "psmt/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace psmt::cli {

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::uint64_t config_seed) {
    if (flag) return *flag;
    if (const char* env = std::getenv("PSMT_SEED"); env && *env) {
        try {
            std::size_t used = 0;
            const auto v = std::stoull(env, &used);
            if (used == std::string(env).size()) return v;
        } catch (const std::exception&) {
        }
        throw ConfigError(std::string("PSMT_SEED is not an unsigned integer: ") + env);
    }
    return config_seed;
}

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "runs";
    std::string run_name;
};

fs::path make_run_dir(const Globals& g, const std::string& command) {
    std::string name = g.run_name;
    if (name.empty()) {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        localtime_r(&now, &tm);
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
        name = command + "-" + buf;
    }
    fs::path dir = fs::path(g.out) / name;
    if (g.run_name.empty()) {
        for (int k = 1; fs::exists(dir); ++k) dir = fs::path(g.out) / (name + "-" + std::to_string(k));
    }
    fs::create_directories(dir);
    return dir;
}

void write_run_json(const fs::path& dir, json run) {
    io::write_text(dir / "run.json", run.dump(1) + "\n");
}

RunConfig base_config(const Globals& g) {
    return g.config.empty() ? config_from_json(json::object()) : load_config(g.config);
}

json parse_sets(const std::vector<std::string>& sets) {
    json out = json::object();
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
        const auto key = s.substr(0, eq);
        const auto text = s.substr(eq + 1);
        auto value = json::parse(text, nullptr, false);
        out[key] = value.is_discarded() ? json(text) : value;
    }
    return out;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string fixed(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// Gradient magnitudes of both consistency losses on the same frozen state.
void write_grad_probe(const fs::path& path, const TrainState& state, const RunConfig& cfg,
                      const std::vector<Sample>& pool) {
    if (pool.empty()) return;
    std::vector<Tensor> imgs;
    for (std::size_t i = 0; i < std::min<std::size_t>(8, pool.size()); ++i) {
        if (pool[i].image.shape() != pool[0].image.shape()) break;
        imgs.push_back(pool[i].image);
    }
    const Tensor x = stack(imgs);
    json doc{{"layers", json::array()}, {"conf_ce", json::array()}, {"mse", json::array()}, {"iter", state.iter}};
    for (auto mode : {LossMode::conf_ce, LossMode::mse}) {
        for (const auto& m : gradient_magnitude_probe(state, cfg, x, mode)) {
            if (mode == LossMode::conf_ce) doc["layers"].push_back(m.layer);
            doc[to_string(mode)].push_back(m.mean_abs);
        }
    }
    io::write_text(path, doc.dump(1) + "\n");
}

int cmd_generate(const Globals& g, std::size_t n, std::size_t val_n, std::string dest, SyntheticSpec spec) {
    const auto dir = make_run_dir(g, "generate");
    spec.seed = resolve_seed(g.seed, 0);
    const fs::path root = dest.empty() ? dir / "dataset" : fs::path(dest);
    generate_synthetic(spec, n, root / "train");
    json run{{"command", "generate"}, {"spec", spec}, {"n", n}, {"val_n", val_n},
             {"dest", root.string()},  {"seed", spec.seed},
             {"dataset_hash", io::file_hash(root / "train" / "dataset.json")}};
    if (val_n > 0) {
        SyntheticSpec val = spec;
        val.seed = Rng::derive(spec.seed, {stream::generate, 0xFFFFFFFFull}).engine()();
        generate_synthetic(val, val_n, root / "val");
        run["val_seed"] = val.seed;
        run["val_hash"] = io::file_hash(root / "val" / "dataset.json");
    }
    write_run_json(dir, run);
    std::cout << "dataset=" << root.string() << "\n";
    return 0;
}

int cmd_split(const Globals& g, const std::string& dataset, const std::string& ratio_text, std::string name) {
    const auto dir = make_run_dir(g, "split");
    const Ratio ratio = parse_ratio(ratio_text);
    const auto seed = resolve_seed(g.seed, 0);
    const DatasetIndex split = split_partition(open_dataset(dataset), ratio, seed);
    if (name.empty()) {
        name = "ratio_" + std::to_string(ratio.num) + "_" + std::to_string(ratio.den) + "_seed" + std::to_string(seed);
    }
    const fs::path manifest = fs::path(dataset) / "splits" / (name + ".json");
    write_manifest(split, manifest);
    const auto hash = io::file_hash(manifest);
    write_run_json(dir, {{"command", "split"}, {"dataset", dataset}, {"ratio", to_string(ratio)},
                         {"seed", seed}, {"manifest", manifest.string()}, {"manifest_hash", hash}});
    std::cout << "manifest=" << manifest.string() << " hash=" << hash << " labelled=" << split.labelled.size()
              << " unlabelled=" << split.unlabelled.size() << "\n";
    return 0;
}

struct TrainArgs {
    std::string resume;
    std::string dataset;
    std::string split;
    std::string val;
    std::optional<int> epochs;
    std::vector<std::string> sets;
    bool verbose = false;
};

RunConfig configured(const Globals& g, const TrainArgs& a) {
    json over = parse_sets(a.sets);
    if (!a.dataset.empty()) over["dataset"] = a.dataset;
    if (!a.split.empty()) over["split"] = a.split;
    if (!a.val.empty()) over["val"] = a.val;
    if (a.epochs) over["epochs"] = *a.epochs;
    RunConfig cfg = with_overrides(base_config(g), over);
    cfg.seed = resolve_seed(g.seed, cfg.seed);
    return cfg;
}

int cmd_train(const Globals& g, const TrainArgs& a) {
    RunConfig cfg;
    fs::path dir;
    TrainOptions opts;
    opts.verbose = a.verbose;
    if (!a.resume.empty()) {
        opts.resume = fs::path(a.resume);
        restore_state(load_checkpoint(a.resume), &cfg);
        dir = fs::absolute(a.resume).parent_path().parent_path();
    } else {
        cfg = configured(g, a);
        dir = make_run_dir(g, "train");
    }
    const TrainData data = load_train_data(cfg);
    const auto res = run_training(cfg, data, dir, opts);
    write_grad_probe(dir / "grad_probe.json", res.state, cfg, data.val.empty() ? data.unlabelled : data.val);
    std::cout << "run_dir=" << dir.string() << " checkpoint=" << res.last_checkpoint.string();
    if (res.final_eval) std::cout << " miou=" << fixed(res.final_eval->iou.miou);
    std::cout << "\n";
    return 0;
}

int cmd_eval(const Globals& g, const std::string& ckpt_path, const std::string& split_path,
             const std::string& subset, const std::string& sliding) {
    const auto dir = make_run_dir(g, "eval");
    RunConfig cfg;
    const TrainState state = restore_state(load_checkpoint(ckpt_path), &cfg);
    DatasetIndex index;
    if (fs::is_directory(split_path)) {
        index = open_dataset(split_path);
    } else {
        const DatasetIndex split = load_manifest(split_path);
        index = open_dataset(split.root);
        std::vector<std::string> keep;
        if (subset == "all" || subset == "labelled") {
            for (const auto& it : split.labelled) keep.push_back(it.id);
        }
        if (subset == "all" || subset == "unlabelled") {
            for (const auto& it : split.unlabelled) keep.push_back(it.id);
        }
        std::vector<DatasetItem> items;
        for (const auto& it : index.labelled) {
            if (std::find(keep.begin(), keep.end(), it.id) != keep.end()) items.push_back(it);
        }
        index.labelled = std::move(items);
    }
    const auto samples = load_all(index, LoadMode::labelled);
    std::optional<std::pair<Window, Window>> sl;
    if (!sliding.empty()) sl = parse_sliding(sliding);
    const EvalResult ev = evaluate(state.teachers, samples, index.num_classes, sl);

    std::ostringstream csv;
    csv << "class,iou\n";
    for (std::size_t c = 0; c < ev.iou.per_class.size(); ++c) {
        const double v = ev.iou.per_class[c];
        csv << c << "," << (std::isnan(v) ? std::string{} : fixed(v)) << "\n";
    }
    csv << "mean," << fixed(ev.iou.miou) << "\n";
    io::write_text(dir / "per_class_iou.csv", csv.str());
    write_run_json(dir, {{"command", "eval"}, {"checkpoint", ckpt_path}, {"split", split_path},
                         {"subset", subset}, {"sliding", sliding}, {"config", cfg},
                         {"seed", cfg.seed}, {"miou", ev.iou.miou},
                         {"manifest_hash", fs::is_directory(split_path) ? io::file_hash(fs::path(split_path) / "dataset.json")
                                                                         : io::file_hash(split_path)}});
    std::cout << "miou=" << fixed(ev.iou.miou) << " pixel_accuracy=" << fixed(ev.confusion.pixel_accuracy())
              << " images=" << samples.size() << " csv=" << (dir / "per_class_iou.csv").string() << "\n";
    return 0;
}

int cmd_ablate(const Globals& g, const TrainArgs& a, const std::string& arms_text, const std::string& seeds_text) {
    const RunConfig base = configured(g, a);
    std::vector<AblationArm> arms;
    for (const auto& name : split_list(arms_text)) arms.push_back(find_arm(name));
    if (arms.empty()) throw ConfigError("--arms lists no arm");
    std::vector<std::uint64_t> seeds;
    for (const auto& s : split_list(seeds_text)) {
        try {
            seeds.push_back(std::stoull(s));
        } catch (const std::exception&) {
            throw ConfigError("invalid seed '" + s + "'");
        }
    }
    if (seeds.empty()) throw ConfigError("--seeds lists no seed");
    const auto dir = make_run_dir(g, "ablate");
    const TrainData data = load_train_data(base);
    const auto results = run_ablation(base, data, arms, seeds, dir / "arms", a.verbose);
    const std::string csv = ablation_csv(base, arms, results);
    io::write_text(dir / "ablation.csv", csv);
    json arm_names = json::array();
    for (const auto& arm : arms) arm_names.push_back(arm.name);
    write_run_json(dir, {{"command", "ablate"}, {"config", base}, {"seed", base.seed}, {"arms", arm_names},
                         {"seeds", seeds}, {"manifest_hash", data.manifest_hash}});
    std::cout << csv;
    return 0;
}

int cmd_plot(const Globals& g, const std::vector<std::string>& metrics, const std::string& kind,
             const std::string& probe) {
    const auto dir = make_run_dir(g, "plot");
    std::vector<fs::path> files(metrics.begin(), metrics.end());
    std::vector<std::string> written;
    auto emit = [&](const std::string& name, const std::string& svg) {
        io::write_text(dir / name, svg);
        written.push_back((dir / name).string());
    };
    if (!probe.empty()) emit("gradients.svg", plot::render_svg(plot::gradient_chart(probe)));
    if (!files.empty()) {
        if (kind == "loss" || kind == "all") emit("loss.svg", plot::render_svg(plot::loss_chart(files)));
        if (kind == "miou" || kind == "all") emit("miou.svg", plot::render_svg(plot::miou_chart(files)));
        if (kind == "ratio") emit("miou_vs_ratio.svg", plot::render_svg(plot::ratio_chart(files)));
    }
    if (written.empty()) throw ConfigError("plot: nothing to draw (give --metrics or --probe)");
    json inputs = json::array();
    for (const auto& f : files) inputs.push_back(f.string());
    write_run_json(dir, {{"command", "plot"}, {"metrics", inputs}, {"probe", probe}, {"kind", kind},
                         {"seed", resolve_seed(g.seed, 0)}});
    for (const auto& w : written) std::cout << w << "\n";
    return 0;
}

int fail(const char* kind, const std::string& msg, int code) {
    std::string line = msg;
    for (auto& c : line) {
        if (c == '\n') c = ' ';
    }
    std::cerr << "psmt: error: " << kind << ": " << line << "\n";
    return code;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"psmt: semi-supervised segmentation with two mean teachers", "psmt"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "Run configuration (JSON)");
    app.add_option("--seed", g.seed, "Seed; overrides PSMT_SEED and the config");
    app.add_option("--out", g.out, "Parent directory of per-run output directories")->capture_default_str();
    app.add_option("--run-name", g.run_name, "Fixed run directory name instead of a timestamp");

    auto* gen = app.add_subcommand("generate", "Render the synthetic shapes dataset");
    std::size_t n = 1024;
    std::size_t val_n = 256;
    std::string dest;
    SyntheticSpec spec;
    gen->add_option("--n", n, "Training images")->capture_default_str();
    gen->add_option("--val-n", val_n, "Validation images (0: none)")->capture_default_str();
    gen->add_option("--dest", dest, "Dataset directory (default: <run>/dataset)");
    gen->add_option("--height", spec.height)->capture_default_str();
    gen->add_option("--width", spec.width)->capture_default_str();
    gen->add_option("--shapes-min", spec.shapes_min)->capture_default_str();
    gen->add_option("--shapes-max", spec.shapes_max)->capture_default_str();
    gen->add_option("--size-min", spec.size_min, "Smallest shape radius (px)")->capture_default_str();
    gen->add_option("--size-max", spec.size_max, "Largest shape radius (px)")->capture_default_str();
    gen->add_option("--noise", spec.noise)->capture_default_str();
    gen->add_flag("--textured", spec.textured, "Give each class its own texture (dots, stripes, checks)");

    auto* split = app.add_subcommand("split", "Partition a dataset into labelled and unlabelled items");
    std::string split_dataset;
    std::string ratio;
    std::string split_name;
    split->add_option("--dataset", split_dataset, "Dataset root")->required();
    split->add_option("--ratio", ratio, "Labelled fraction 1/n")->required();
    split->add_option("--name", split_name, "Manifest name under <dataset>/splits/");

    TrainArgs targs;
    auto add_train_opts = [&targs](CLI::App* sub) {
        sub->add_option("--dataset", targs.dataset, "Override config.dataset");
        sub->add_option("--split", targs.split, "Override config.split");
        sub->add_option("--val", targs.val, "Override config.val");
        sub->add_option("--epochs", targs.epochs, "Override config.epochs");
        sub->add_option("--set", targs.sets, "Dotted config override key=value (repeatable)");
        sub->add_flag("--verbose", targs.verbose, "Progress on stderr");
    };
    auto* train = app.add_subcommand("train", "Train student and teachers");
    add_train_opts(train);
    train->add_option("--resume", targs.resume, "Continue from a checkpoint");

    auto* ev = app.add_subcommand("eval", "Score the teacher ensemble of a checkpoint");
    std::string ckpt;
    std::string eval_split;
    std::string subset = "all";
    std::string sliding;
    ev->add_option("--ckpt", ckpt, "Checkpoint file")->required();
    ev->add_option("--split", eval_split, "Split manifest or dataset directory")->required();
    ev->add_option("--subset", subset, "Manifest subset: all|labelled|unlabelled")
        ->check(CLI::IsMember({"all", "labelled", "unlabelled"}))
        ->capture_default_str();
    ev->add_option("--sliding", sliding, "Sliding window HxW:SHxSW");

    auto* abl = app.add_subcommand("ablate", "Run the ablation matrix");
    add_train_opts(abl);
    std::string arms = "mt_mse,conf_ce,conf_ce_tvat,full";
    std::string seeds = "0,1,2";
    abl->add_option("--arms", arms, "Comma-separated arm names")->capture_default_str();
    abl->add_option("--seeds", seeds, "Comma-separated seeds")->capture_default_str();

    auto* plt = app.add_subcommand("plot", "Render SVG charts from metrics files");
    std::vector<std::string> metrics;
    std::string kind = "all";
    std::string probe;
    plt->add_option("--metrics", metrics, "metrics.jsonl files");
    plt->add_option("--kind", kind, "loss|miou|ratio|all")
        ->check(CLI::IsMember({"loss", "miou", "ratio", "all"}))
        ->capture_default_str();
    plt->add_option("--probe", probe, "grad_probe.json for the per-layer gradient chart");

    std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "psmt: error: usage: " << e.what() << "\n" << app.help();
        return e.get_exit_code() != 0 ? e.get_exit_code() : 64;
    }

    try {
        if (*gen) return cmd_generate(g, n, val_n, dest, spec);
        if (*split) return cmd_split(g, split_dataset, ratio, split_name);
        if (*train) return cmd_train(g, targs);
        if (*ev) return cmd_eval(g, ckpt, eval_split, subset, sliding);
        if (*abl) return cmd_ablate(g, targs, arms, seeds);
        if (*plt) return cmd_plot(g, metrics, kind, probe);
    } catch (const ConfigError& e) {
        return fail("config", e.what(), 2);
    } catch (const DataError& e) {
        return fail("data", e.what(), 3);
    } catch (const NumericError& e) {
        return fail("numeric", e.what(), 4);
    } catch (const std::exception& e) {
        return fail("internal", e.what(), 1);
    }
    return 1;
}

}  // namespace psmt::cli
