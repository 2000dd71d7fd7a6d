// gaplanes: command-line driver for the model library and experiments.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "gaplanes/experiments.hpp"
#include "gaplanes/io.hpp"
#include "gaplanes/linalg.hpp"
#include "gaplanes/selfcheck.hpp"

#ifndef GAPLANES_DEFAULT_IMAGE
#define GAPLANES_DEFAULT_IMAGE ""
#endif

using namespace gaplanes;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0, kConfigError = 1, kRuntimeError = 2;

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    bool print_config = false;
};

struct TrainDefaults {
    std::string steps, batch, lr_grids, lr_decoder, eval_every;
};

std::vector<ConfigKey> base_keys(const TrainDefaults& t) {
    return {{"seed", "0", "model initialization and minibatch seed"},
            {"threads", "1", "worker threads (results do not depend on it)"},
            {"train.steps", t.steps, "optimizer steps"},
            {"train.batch_size", t.batch, "minibatch size (points or rays)"},
            {"train.lr_grids", t.lr_grids, "learning rate of the feature grids"},
            {"train.lr_decoder", t.lr_decoder, "learning rate of the decoder"},
            {"train.optimizer", "adam", "adam, sgd or gd"},
            {"train.eval_every", t.eval_every, "steps between held-out evaluations (0: none)"},
            {"train.log_every", "50", "steps between loss log rows"}};
}

std::vector<ConfigKey> with(std::vector<ConfigKey> a, const std::vector<ConfigKey>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

std::string roster_text(const std::vector<RosterEntry>& r) {
    std::string s;
    for (const auto& e : r) s += (s.empty() ? "" : ",") + e.name();
    return s;
}

const std::vector<ConfigKey> kImageKeys = {
    {"image", GAPLANES_DEFAULT_IMAGE, "grayscale PGM (P5)"},
    {"image.size", "0", "box-downsample to this side first (0: keep)"}};

const std::vector<ConfigKey> kEvalKeys = {
    {"eval.threshold", "0.5", "mask threshold (values >= threshold are occupied)"},
    {"eval.sweep", "", "extra thresholds reported for sensitivity, e.g. 0.3,0.4,0.6"},
    {"output.masks", "true", "write predicted masks as PGM"},
    {"output.checkpoints", "false", "write model checkpoints"}};

std::vector<ConfigKey> video_keys() {
    const VideoSpec v;
    auto num = [](double x) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%g", x);
        return std::string(buf);
    };
    return {{"video.frames", std::to_string(v.frames), "frame count"},
            {"video.width", std::to_string(v.width), "frame side in pixels"},
            {"video.seed", "0", "motion phases"},
            {"video.cycles", num(v.cycles), "base motion periods over the clip"},
            {"video.disk_radius", num(v.disk_radius), "disk radius (normalized)"},
            {"video.bar_half_width", num(v.bar_half_width), "bar half width (normalized)"},
            {"video.bar", "true", "include the swaying bar"}};
}

std::vector<ConfigKey> schema_for(const std::string& cmd) {
    if (cmd == "fit-image")
        return with(with(base_keys({"2000", "4096", "1e-2", "1e-3", "0"}), kImageKeys),
                    {{"fit.combiners", "add,mul", "2D combiners"},
                     {"fit.decoders", "linear,gated,mlp", "decoders"},
                     {"fit.ks", "4,8,16,32", "line feature dims"},
                     {"fit.r1_mlp", "128", "line resolution for nonlinear decoders"},
                     {"fit.hidden", "32", "decoder hidden width"},
                     {"fit.interp", "multilinear", "interpolation modes, e.g. nearest,multilinear"},
                     {"fit.svd_max_k", "64", "longest truncated-SVD curve"}});
    if (cmd == "decomp")
        return with(with({{"seed", "0", "unused; recorded in the manifest"}, {"threads", "1", "unused"}}, kImageKeys),
                    {{"decomp.budgets", "0.1,0.1875,0.25,0.4", "parameter budgets as a fraction of m n"},
                     {"decomp.r_lows", "", "low-res sides (empty: multiples of 16)"},
                     {"decomp.sparse_fracs", "0.25,0.5,0.625,0.75,0.875,1.0", "rank splits as a fraction of the budget's max rank"},
                     {"decomp.sparse_iters", "10", "alternation rounds"},
                     {"decomp.counting", "value_only", "value_only or value_and_index"}});
    if (cmd == "seg3d") {
        const Seg3dOptions d;
        return with(with(base_keys({"600", "4096", "3e-3", "1e-3", "0"}), kEvalKeys),
                    {{"scene.seed", "0", "scene layout"},
                     {"seg3d.supervision", "tomo2d,carved3d", "tomo2d, carved3d or both"},
                     {"seg3d.width", std::to_string(d.width), "mask side in pixels"},
                     {"seg3d.train_samples", std::to_string(d.train_samples), "samples per training ray"},
                     {"seg3d.eval_samples", std::to_string(d.eval_samples), "samples per held-out ray"},
                     {"seg3d.voxels", std::to_string(d.voxel_resolution), "space-carving resolution"},
                     {"seg3d.carve_jitter", std::to_string(d.carve_jitter), "carved3d training points per voxel (0: centers)"},
                     {"seg3d.ray_jitter", d.ray_jitter ? "true" : "false", "stratified tomo2d ray samples"},
                     {"seg3d.roster", roster_text(default_roster()), "PRESET:mode list"}});
    }
    if (cmd == "video")
        return with(with(with(base_keys({"1000", "4096", "3e-3", "1e-3", "0"}), kEvalKeys), video_keys()),
                    {{"video.roster", roster_text(default_roster()), "PRESET:mode list"},
                     {"video.gate_seed", "", "shared gate seed (empty: derived from seed)"}});
    if (cmd == "stability")
        return with(with(base_keys({"1500", "4096", "1e-2", "1e-3", "100"}), video_keys()),
                    {{"stability.seeds", "0,1,2", "initialization seeds"},
                     {"stability.modes", "convex,semiconvex,nonconvex", "modes"},
                     {"stability.gate_seed", "1234", "gate seed shared across seeds"}});
    throw Error("no schema for " + cmd);
}

Config load_config(const std::string& cmd, const Common& c) {
    Config cfg(schema_for(cmd));
    if (!c.config.empty()) cfg.merge_file(c.config);
    for (const auto& s : c.sets) cfg.set_pair(s);
    if (c.seed) cfg.set("seed", std::to_string(*c.seed));
    if (c.threads) cfg.set("threads", std::to_string(*c.threads));
    return cfg;
}

TrainConfig train_config(const Config& cfg) {
    TrainConfig t;
    t.steps = cfg.get_size("train.steps");
    t.batch_size = cfg.get_size("train.batch_size");
    t.lr_grids = cfg.get_double("train.lr_grids");
    t.lr_decoder = cfg.get_double("train.lr_decoder");
    t.optimizer = parse_optimizer(cfg.get("train.optimizer"));
    t.eval_every = cfg.get_size("train.eval_every");
    t.log_every = cfg.get_size("train.log_every");
    t.threads = static_cast<int>(cfg.get_int("threads"));
    t.seed = SeededRng::derive(static_cast<std::uint64_t>(cfg.get_int("seed")), 0x7a11);
    check_train_config(t);
    return t;
}

VideoSpec video_spec(const Config& cfg) {
    VideoSpec v;
    v.frames = cfg.get_size("video.frames");
    v.width = cfg.get_size("video.width");
    v.seed = static_cast<std::uint64_t>(cfg.get_int("video.seed"));
    v.cycles = cfg.get_double("video.cycles");
    v.disk_radius = cfg.get_double("video.disk_radius");
    v.bar_half_width = cfg.get_double("video.bar_half_width");
    v.bar = cfg.get_bool("video.bar");
    check_video_spec(v);
    return v;
}

Tensor load_image(const Config& cfg) {
    const std::string path = cfg.get("image");
    if (path.empty()) throw Error("no image given; set image=<file.pgm>");
    Tensor img = read_pgm(path);
    if (const std::size_t side = cfg.get_size("image.size"); side > 0) {
        if (img.rows() != img.cols()) throw Error(path + ": image.size needs a square image");
        if (side != img.rows()) img = downsample(img, side);
    }
    return img;
}

struct Run {
    std::string cmd;
    Common common;
    std::vector<std::string> argv;
    Manifest manifest;

    void begin(const Config& cfg) {
        fs::create_directories(common.out);
        manifest.command = cmd;
        manifest.argv = argv;
        manifest.config = cfg.values();
        manifest.config_hash = cfg.hash();
        manifest.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
        manifest.threads = static_cast<int>(cfg.get_int("threads"));
        manifest.started = utc_now();
        write_text(path("config.txt"), cfg.canonical());
        manifest.outputs.push_back("config.txt");
    }
    std::string path(const std::string& name) const { return (fs::path(common.out) / name).string(); }
    void text(const std::string& name, const std::string& body) {
        fs::create_directories(fs::path(path(name)).parent_path());
        write_text(path(name), body);
        manifest.outputs.push_back(name);
    }
    void pgm(const std::string& name, const Tensor& img) {
        fs::create_directories(fs::path(path(name)).parent_path());
        write_pgm(path(name), img);
        manifest.outputs.push_back(name);
    }
    void finish() {
        manifest.finished = utc_now();
        write_text(path("manifest.json"), manifest.to_json());
    }
};

std::string slug(std::string s) {
    for (auto& ch : s)
        if (ch == ':' || ch == '/') ch = '_';
    return s;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string sweep_csv(const std::vector<RunResult>& runs, const std::vector<double>& thresholds) {
    std::string s = "model,threshold,test_iou\n";
    for (const auto& r : runs)
        for (std::size_t i = 0; i < thresholds.size() && i < r.sweep_iou.size(); ++i)
            s += r.name + "," + fmt(thresholds[i]) + "," + fmt(r.sweep_iou[i]) + "\n";
    return s;
}

std::string extra_row(const std::string& name, const std::string& supervision, double iou_value) {
    return name + ",,," + supervision + ",0,," + fmt(iou_value) + ",\n";
}

void print_runs(const std::vector<RunResult>& runs) {
    for (const auto& r : runs)
        std::printf("%-28s params %8zu  train loss %.4g  test IOU %.4f  (%.1f s)\n", r.name.c_str(), r.params,
                    r.train_loss, r.test_iou, r.seconds);
}

// ------------------------------------------------------------------ commands

void cmd_fit_image(Run& run, const Config& cfg) {
    ImageFitOptions opt;
    opt.combiners.clear();
    for (const auto& c : cfg.get_list("fit.combiners")) opt.combiners.push_back(parse_combiner(c));
    opt.decoders.clear();
    for (const auto& d : cfg.get_list("fit.decoders")) opt.decoders.push_back(parse_decoder(d));
    opt.ks = cfg.get_sizes("fit.ks");
    opt.r1_mlp = cfg.get_size("fit.r1_mlp");
    opt.hidden = cfg.get_size("fit.hidden");
    opt.interps.clear();
    for (const auto& i : cfg.get_list("fit.interp")) opt.interps.push_back(parse_interp(i));
    opt.svd_max_k = cfg.get_size("fit.svd_max_k");
    opt.train = train_config(cfg);
    opt.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));

    run.begin(cfg);
    const Tensor img = load_image(cfg);
    const auto rows = run_image_fit(img, opt);
    for (const auto& r : rows) {
        if (r.method == "svd") continue;
        run.manifest.param_counts[r.method + ":" + r.interp + ":k" + std::to_string(r.k)] = r.params;
        std::printf("%-16s %-11s k %3zu  params %8zu  PSNR %.2f dB\n", r.method.c_str(), r.interp.c_str(), r.k,
                    r.params, r.psnr);
    }
    run.text("image_fit.csv", image_fit_csv(rows));
}

void cmd_decomp(Run& run, const Config& cfg) {
    DecompOptions opt;
    opt.budgets = cfg.get_doubles("decomp.budgets");
    opt.r_lows = cfg.get_sizes("decomp.r_lows");
    opt.sparse_rank_fracs = cfg.get_doubles("decomp.sparse_fracs");
    opt.sparse_iters = static_cast<int>(cfg.get_int("decomp.sparse_iters"));
    const std::string counting = cfg.get("decomp.counting");
    if (counting == "value_only") {
        opt.counting = SparseCounting::value_only;
    } else if (counting == "value_and_index") {
        opt.counting = SparseCounting::value_and_index;
    } else {
        throw Error("config key 'decomp.counting': expected value_only or value_and_index, got " + counting);
    }

    run.begin(cfg);
    const Tensor img = load_image(cfg);
    const auto rows = decomp_sweep(img, opt);
    const auto front = pareto_front(rows);
    for (const auto& r : front)
        std::printf("budget %.4f  %-15s k %4zu  %s %6zu  PSNR %.2f dB\n", r.budget_frac, r.method.c_str(), r.k,
                    r.method == "lowrank_sparse" ? "s" : "r", r.r_low_or_s, r.psnr);
    run.text("decomp.csv", decomp_csv(rows));
    run.text("decomp_pareto.csv", decomp_csv(front));
}

std::vector<double> sweep_of(const Config& cfg) { return cfg.get_doubles("eval.sweep"); }

void cmd_seg3d(Run& run, const Config& cfg) {
    Seg3dOptions opt;
    opt.scene_seed = static_cast<std::uint64_t>(cfg.get_int("scene.seed"));
    opt.width = cfg.get_size("seg3d.width");
    opt.train_samples = cfg.get_size("seg3d.train_samples");
    opt.eval_samples = cfg.get_size("seg3d.eval_samples");
    opt.voxel_resolution = cfg.get_size("seg3d.voxels");
    opt.carve_jitter = cfg.get_size("seg3d.carve_jitter");
    opt.ray_jitter = cfg.get_bool("seg3d.ray_jitter");
    opt.roster = parse_roster(cfg.get_list("seg3d.roster"));
    opt.train = train_config(cfg);
    opt.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
    opt.threshold = cfg.get_double("eval.threshold");
    opt.threshold_sweep = sweep_of(cfg);
    opt.keep_models = cfg.get_bool("output.checkpoints");
    std::vector<Supervision> sups;
    for (const auto& s : cfg.get_list("seg3d.supervision")) sups.push_back(parse_supervision(s));
    const bool masks = cfg.get_bool("output.masks");

    run.begin(cfg);
    for (auto sup : sups) {
        const std::string tag = to_string(sup);
        const Seg3dReport rep = run_seg3d(opt, sup);
        std::printf("[%s] carved hull on held-out views: IOU %.4f\n", tag.c_str(), rep.hull_iou);
        print_runs(rep.runs);
        run.text("seg3d_" + tag + ".csv", runs_csv(rep.runs) + extra_row("hull_oracle", tag, rep.hull_iou));
        if (!opt.threshold_sweep.empty())
            run.text("seg3d_" + tag + "_sweep.csv", sweep_csv(rep.runs, opt.threshold_sweep));
        for (std::size_t i = 0; i < rep.runs.size(); ++i) {
            const auto& r = rep.runs[i];
            run.manifest.param_counts[tag + "/" + r.name] = r.params;
            run.text("logs/" + tag + "_" + slug(r.name) + ".csv", r.log.to_csv());
            if (masks)
                for (std::size_t v = 0; v < rep.data.test_views.size(); ++v)
                    run.pgm("masks/" + tag + "/" + slug(r.name) + "_" + rep.data.test_views[v].name + ".pgm",
                            rep.test_predictions[i][v]);
            if (opt.keep_models) {
                const std::string base = "checkpoints/" + tag + "_" + slug(r.name);
                fs::create_directories(fs::path(run.path(base)).parent_path());
                save_model(run.path(base), rep.models[i]);
                run.manifest.outputs.push_back(base + ".json");
            }
        }
        if (masks)
            for (std::size_t v = 0; v < rep.data.test_views.size(); ++v)
                run.pgm("masks/truth_" + rep.data.test_views[v].name + ".pgm", rep.data.test_masks[v]);
    }
}

void cmd_video(Run& run, const Config& cfg) {
    VideoOptions opt;
    opt.video = video_spec(cfg);
    opt.roster = parse_roster(cfg.get_list("video.roster"));
    opt.train = train_config(cfg);
    opt.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
    if (!cfg.get("video.gate_seed").empty()) opt.gate_seed = static_cast<std::uint64_t>(cfg.get_int("video.gate_seed"));
    opt.threshold = cfg.get_double("eval.threshold");
    opt.threshold_sweep = sweep_of(cfg);
    opt.keep_models = cfg.get_bool("output.checkpoints");
    const bool masks = cfg.get_bool("output.masks");

    run.begin(cfg);
    const VideoReport rep = run_video(opt);
    std::printf("nearest-frame copy baseline: IOU %.4f\n", rep.copy_baseline_iou);
    print_runs(rep.runs);
    run.text("video.csv", runs_csv(rep.runs) + extra_row("nearest_frame_copy", "video", rep.copy_baseline_iou));
    if (!opt.threshold_sweep.empty()) run.text("video_sweep.csv", sweep_csv(rep.runs, opt.threshold_sweep));
    const auto& tf = rep.video.test_frames;
    for (std::size_t i = 0; i < rep.runs.size(); ++i) {
        const auto& r = rep.runs[i];
        run.manifest.param_counts[r.name] = r.params;
        run.text("logs/" + slug(r.name) + ".csv", r.log.to_csv());
        if (masks)
            for (std::size_t k = 0; k < tf.size(); ++k)
                run.pgm("masks/" + slug(r.name) + "/frame" + std::to_string(tf[k]) + ".pgm",
                        frame_of(rep.test_predictions[i], k));
        if (opt.keep_models) {
            const std::string base = "checkpoints/" + slug(r.name);
            fs::create_directories(fs::path(run.path(base)).parent_path());
            save_model(run.path(base), rep.models[i]);
            run.manifest.outputs.push_back(base + ".json");
        }
    }
    if (masks)
        for (auto f : tf) run.pgm("masks/truth/frame" + std::to_string(f) + ".pgm", frame_of(rep.video.masks, f));
}

void cmd_stability(Run& run, const Config& cfg) {
    StabilityOptions opt;
    opt.video = video_spec(cfg);
    opt.seeds.clear();
    for (auto s : cfg.get_sizes("stability.seeds")) opt.seeds.push_back(s);
    opt.modes.clear();
    for (const auto& m : cfg.get_list("stability.modes")) opt.modes.push_back(parse_mode(m));
    opt.gate_seed = static_cast<std::uint64_t>(cfg.get_int("stability.gate_seed"));
    opt.train = train_config(cfg);
    opt.train.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));

    run.begin(cfg);
    const StabilityReport rep = run_stability(opt);
    print_runs(rep.runs);
    std::string traces = "run,mode,seed,step,loss,test_iou\n";
    for (std::size_t i = 0; i < rep.runs.size(); ++i) {
        const auto& r = rep.runs[i];
        run.manifest.param_counts[r.name] = r.params;
        const auto seed = opt.seeds[i % opt.seeds.size()];
        for (const auto& row : r.log.rows())
            traces += r.name + "," + to_string(r.mode) + "," + std::to_string(seed) + "," + std::to_string(row.step) +
                      "," + fmt(row.loss) + "," + (std::isnan(row.metric) ? "" : fmt(row.metric)) + "\n";
    }
    for (Mode m : opt.modes)
        std::printf("%-10s final-loss spread %.3f%%  IOU spread %.4f\n", to_string(m).c_str(),
                    100.0 * rep.loss_spread(m), rep.iou_spread(m));
    run.text("stability.csv", runs_csv(rep.runs));
    run.text("stability_traces.csv", traces);
}

Combiner2D combiner_from(const std::string& text) {
    for (auto c : {Combiner2D::add, Combiner2D::concat, Combiner2D::mul, Combiner2D::mul_plane})
        if (text == to_string(c) || text == combiner_expr(c)) return c;
    throw Error("unsupported 2D expression '" + text + "'; expected add(e1,e2), concat(e1,e2), mul(e1,e2), "
                "add(mul(e1,e2),e12) or the names add, concat, mul, mul_plane");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GA-Planes: grid-based volume models, matrix theory checks and experiments"};
    app.require_subcommand(1);
    std::vector<std::string> args(argv, argv + argc);

    Common common;
    std::string current;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", common.config, "key = value config file");
        sub->add_option("-s,--set", common.sets, "override, key=value (repeatable)");
        sub->add_option("-o,--out", common.out, "output directory")->capture_default_str();
        sub->add_option("--seed", common.seed, "seed (overrides the config)");
        sub->add_option("--threads", common.threads, "worker threads (overrides the config)");
        sub->add_flag("--print-config", common.print_config, "print the resolved config and exit");
    };
    for (const char* name : {"fit-image", "decomp", "seg3d", "video", "stability"}) {
        const char* help = std::string(name) == "fit-image"   ? "fit 2D models to an image (PSNR vs parameters)"
                           : std::string(name) == "decomp"    ? "low-rank + low-res vs low-rank + sparse sweep"
                           : std::string(name) == "seg3d"     ? "3D segmentation from masks or carved labels"
                           : std::string(name) == "video"     ? "temporal superresolution of video masks"
                                                              : "seed stability at the tiny config";
        auto* sub = app.add_subcommand(name, help);
        add_common(sub);
        sub->callback([&, name] { current = name; });
    }
    std::string image_flag;
    app.get_subcommand("fit-image")->add_option("--image", image_flag, "PGM image (same as image=...)");
    app.get_subcommand("decomp")->add_option("--image", image_flag, "PGM image (same as image=...)");

    std::size_t gradient_cases = 100;
    auto* grid = app.add_subcommand("gridcheck", "self-test: interpolation, gradients, rank bounds, convexity");
    grid->add_option("--gradient-cases", gradient_cases, "finite-difference cases per composition")
        ->capture_default_str();
    grid->callback([&] { current = "gridcheck"; });

    Model2DOptions amo;
    std::string a_expr = "mul(e1,e2)", a_decoder = "linear", a_interp = "nearest", a_out;
    std::size_t a_size = 32, a_r1 = 0;
    auto* asmb = app.add_subcommand("assemble", "assemble a random 2D model's matrix and report its rank");
    asmb->add_option("--expr", a_expr, "add(e1,e2), concat(e1,e2), mul(e1,e2) or add(mul(e1,e2),e12)")
        ->capture_default_str();
    asmb->add_option("--decoder", a_decoder, "linear, gated or mlp")->capture_default_str();
    asmb->add_option("--k", amo.k, "line feature dim")->capture_default_str();
    asmb->add_option("--size", a_size, "matrix side")->capture_default_str();
    asmb->add_option("--r1", a_r1, "line resolution (default: size)");
    asmb->add_option("--r-plane", amo.r_plane, "plane side for add(mul(e1,e2),e12)")->capture_default_str();
    asmb->add_option("--hidden", amo.hidden, "decoder hidden width")->capture_default_str();
    asmb->add_option("--interp", a_interp, "nearest or multilinear")->capture_default_str();
    asmb->add_option("--seed", amo.seed, "initialization seed")->capture_default_str();
    asmb->add_flag("--bias", amo.bias, "decoder bias");
    asmb->add_option("-o,--out", a_out, "write the matrix as a raw f32 tensor at this base path");
    asmb->callback([&] { current = "assemble"; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    if (current == "gridcheck") {
        try {
            bool all = true;
            for (const auto& r : self_check(gradient_cases)) {
                std::printf("%s %-36s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
                all = all && r.pass;
            }
            return all ? kOk : kRuntimeError;
        } catch (const std::exception& e) {
            std::fprintf(stderr, "error: %s\n", e.what());
            return kRuntimeError;
        }
    }

    if (current == "assemble") {
        Model2DOptions o = amo;
        try {
            o.combiner = combiner_from(a_expr);
            o.decoder = parse_decoder(a_decoder);
            o.interp = parse_interp(a_interp);
            o.r1 = a_r1 ? a_r1 : a_size;
            o.grid_init = 1.0;
            if (o.decoder == DecoderKind::fused) throw Error("assemble supports linear, gated and mlp decoders");
        } catch (const Error& e) {
            std::fprintf(stderr, "error: %s\n", e.what());
            return kConfigError;
        }
        try {
            const Model m(model_spec_2d(o));
            const Tensor mhat = assemble_matrix(m, a_size, a_size);
            if (!a_out.empty()) write_tensor(a_out, mhat);
            std::printf("numeric_rank %d\n", numeric_rank(mhat));
            try {
                std::printf("rank_bound %zu\n", rank_bound(o));
            } catch (const Error&) {
                std::printf("rank_bound none\n");
            }
            std::printf("params %zu\n", m.param_count());
            return kOk;
        } catch (const std::exception& e) {
            std::fprintf(stderr, "error: %s\n", e.what());
            return kRuntimeError;
        }
    }

    Run run{current, common, args, {}};
    Config cfg;
    try {
        cfg = load_config(current, common);
        if (!image_flag.empty()) cfg.set("image", image_flag);
        if (common.print_config) {
            std::cout << cfg.canonical();
            return kOk;
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfigError;
    }

    // Typed parsing of the config happens inside each command before any
    // output is written; errors there are still config errors.
    try {
        Config probe = cfg;
        if (current != "decomp") train_config(probe);
        if (current == "video" || current == "stability") video_spec(probe);
        if (current == "seg3d") {
            parse_roster(probe.get_list("seg3d.roster"));
            for (const auto& s : probe.get_list("seg3d.supervision")) parse_supervision(s);
            for (const char* k : {"seg3d.width", "seg3d.train_samples", "seg3d.eval_samples", "seg3d.voxels",
                                  "seg3d.carve_jitter", "scene.seed"})
                probe.get_size(k);
            probe.get_bool("seg3d.ray_jitter");
        }
        if (current == "video") parse_roster(probe.get_list("video.roster"));
        if (current == "fit-image" || current == "decomp") {
            if (probe.get("image").empty()) throw Error("no image given; set image=<file.pgm> or --image");
            probe.get_size("image.size");
        }
        if (current == "fit-image") {
            for (const auto& c : probe.get_list("fit.combiners")) parse_combiner(c);
            for (const auto& d : probe.get_list("fit.decoders")) parse_decoder(d);
            for (const auto& i : probe.get_list("fit.interp")) parse_interp(i);
            probe.get_sizes("fit.ks");
        }
        if (current == "seg3d" || current == "video") {
            probe.get_double("eval.threshold");
            sweep_of(probe);
            probe.get_bool("output.masks");
            probe.get_bool("output.checkpoints");
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfigError;
    }

    try {
        if (current == "fit-image") cmd_fit_image(run, cfg);
        else if (current == "decomp") cmd_decomp(run, cfg);
        else if (current == "seg3d") cmd_seg3d(run, cfg);
        else if (current == "video") cmd_video(run, cfg);
        else if (current == "stability") cmd_stability(run, cfg);
        run.finish();
        std::printf("wrote %s\n", run.path("manifest.json").c_str());
        return kOk;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kRuntimeError;
    }
}
