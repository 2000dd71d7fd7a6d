#include "gaplanes/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>
#include <thread>

#include "gaplanes/linalg.hpp"

namespace gaplanes {

namespace {

template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    const auto t = static_cast<std::size_t>(threads);
    for (std::size_t k = 0; k < t; ++k) {
        pool.emplace_back([&, k] {
            for (std::size_t i = k; i < n; i += t) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string upper(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

const Recipe& pick_recipe(const std::vector<Recipe>& overrides, const std::string& preset, Task task, Recipe& slot) {
    for (const auto& r : overrides)
        if (r.preset == preset) return r;
    slot = default_recipe(preset, task);
    return slot;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace

double iou(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw Error("iou: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool x = a[i] > 0.5, y = b[i] > 0.5;
        inter += (x && y);
        uni += (x || y);
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Tensor binarize(const Tensor& t, double threshold) {
    Tensor out = t;
    for (auto& v : out.vec()) v = v >= threshold ? 1.0 : 0.0;
    return out;
}

Recipe default_recipe(const std::string& preset_in, Task task) {
    const std::string preset = upper(preset_in);
    Recipe r;
    r.preset = preset;
    if (task == Task::seg3d) {
        if (preset == "CONCAT") {
            r.d = {36, 24, 8};
            r.r = {128, 32, 24};
        } else if (preset == "MULT") {
            r.d = {25, 25, 8};
            r.r = {128, 32, 24};
        } else if (preset == "TRIPLANE_ADD" || preset == "TRIPLANE_MUL") {
            r.d = {0, 16, 0};
            r.r = {0, 64, 0};
        } else {
            throw Error("unknown preset '" + preset_in + "'; expected CONCAT, MULT, TRIPLANE_ADD or TRIPLANE_MUL");
        }
    } else {
        if (preset == "CONCAT") {
            r.d = {32, 16, 8};
            r.r = {64, 48, 24};
        } else if (preset == "MULT") {
            r.d = {16, 16, 8};
            r.r = {64, 48, 24};
        } else if (preset == "TRIPLANE_ADD" || preset == "TRIPLANE_MUL") {
            r.d = {0, 16, 0};
            r.r = {0, 64, 0};
        } else {
            throw Error("unknown preset '" + preset_in + "'; expected CONCAT, MULT, TRIPLANE_ADD or TRIPLANE_MUL");
        }
    }
    r.hidden = 64;
    r.relax_mul = preset == "TRIPLANE_MUL";
    return r;
}

ModelSpec recipe_spec(const Recipe& r, Mode mode, std::uint64_t seed) {
    ModelSpec s;
    s.dims = 3;
    s.expr = r.preset;
    s.grids = grids_for(expr_from_name(r.preset), r.d, r.r, r.scales);
    s.mode = mode;
    s.decoder = default_decoder(mode);
    s.hidden = r.hidden;
    s.relax_mul = r.relax_mul;
    s.seed = seed;
    return s;
}

std::string RosterEntry::name() const { return preset + ":" + to_string(mode); }

RosterEntry parse_roster_entry(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw Error("roster entry '" + text + "' is not PRESET:mode");
    RosterEntry e{upper(text.substr(0, colon)), parse_mode(text.substr(colon + 1))};
    default_recipe(e.preset, Task::seg3d);  // validates the preset
    return e;
}

std::vector<RosterEntry> parse_roster(const std::vector<std::string>& items) {
    std::vector<RosterEntry> out;
    for (const auto& s : items) out.push_back(parse_roster_entry(s));
    return out;
}

std::vector<RosterEntry> default_roster() {
    return {{"CONCAT", Mode::convex},       {"CONCAT", Mode::semiconvex},       {"CONCAT", Mode::nonconvex},
            {"MULT", Mode::nonconvex},      {"TRIPLANE_ADD", Mode::convex},     {"TRIPLANE_ADD", Mode::semiconvex},
            {"TRIPLANE_ADD", Mode::nonconvex}, {"TRIPLANE_MUL", Mode::nonconvex}};
}

std::string runs_csv(const std::vector<RunResult>& runs) {
    std::string s = "model,preset,mode,supervision,params,train_loss,test_iou,seconds\n";
    for (const auto& r : runs) {
        s += r.name + "," + r.preset + "," + to_string(r.mode) + "," + r.supervision + "," + std::to_string(r.params) +
             "," + fmt(r.train_loss) + "," + fmt(r.test_iou) + "," + fmt(r.seconds) + "\n";
    }
    return s;
}

// ---------------------------------------------------------------- seg3d

std::string to_string(Supervision s) { return s == Supervision::tomo2d ? "tomo2d" : "carved3d"; }

Supervision parse_supervision(const std::string& s) {
    if (s == "tomo2d") return Supervision::tomo2d;
    if (s == "carved3d") return Supervision::carved3d;
    throw Error("unknown supervision '" + s + "'; expected tomo2d or carved3d");
}

Seg3dData make_seg3d_data(const Seg3dOptions& opt) {
    Seg3dData d;
    d.scene = opt.scene ? *opt.scene : default_scene(opt.scene_seed);
    check_scene(d.scene);
    d.train_views = seg3d_train_views();
    d.test_views = seg3d_test_views();
    for (const auto& v : d.train_views) d.train_masks.push_back(render_mask(d.scene, v, opt.width));
    for (const auto& v : d.test_views) d.test_masks.push_back(render_mask(d.scene, v, opt.width));
    d.carved = space_carve(d.train_masks, d.train_views, opt.voxel_resolution);
    return d;
}

std::vector<Tensor> seg3d_project_test(const Model& m, const Seg3dData& data, const Seg3dOptions& opt,
                                       Supervision sup) {
    const RayReduce reduce = sup == Supervision::tomo2d ? RayReduce::mean : RayReduce::max;
    std::vector<Tensor> out;
    for (const auto& view : data.test_views)
        out.push_back(project_density(m, make_rays(view, opt.width, opt.eval_samples), reduce, opt.train.threads));
    return out;
}

namespace {

Tensor stack(const std::vector<Tensor>& frames) {
    if (frames.empty()) return Tensor();
    const std::size_t area = frames[0].size();
    Tensor out({frames.size(), frames[0].rows(), frames[0].cols()});
    for (std::size_t v = 0; v < frames.size(); ++v)
        std::copy(frames[v].vec().begin(), frames[v].vec().end(),
                  out.vec().begin() + static_cast<std::ptrdiff_t>(v * area));
    return out;
}

}  // namespace

double seg3d_iou(const std::vector<Tensor>& projections, const Seg3dData& data, double threshold) {
    return iou(binarize(stack(projections), threshold), stack(data.test_masks));
}

double seg3d_test_iou(const Model& m, const Seg3dData& data, const Seg3dOptions& opt, Supervision sup) {
    return seg3d_iou(seg3d_project_test(m, data, opt, sup), data, opt.threshold);
}

Seg3dReport run_seg3d(const Seg3dOptions& opt, Supervision sup) {
    Seg3dReport report;
    report.data = make_seg3d_data(opt);
    const Seg3dData& data = report.data;
    {
        std::vector<Tensor> hull;
        for (const auto& view : data.test_views)
            hull.push_back(project_voxels(data.carved, make_rays(view, opt.width, opt.eval_samples)));
        report.hull_iou = seg3d_iou(hull, data, 0.5);
    }

    RayDataset rays;
    PointDataset voxels;
    std::unique_ptr<Objective> objective;
    if (sup == Supervision::tomo2d) {
        std::vector<RaySet> sets;
        for (const auto& v : data.train_views)
            sets.push_back(make_rays(v, opt.width, opt.train_samples,
                                     opt.ray_jitter ? std::optional<std::uint64_t>(opt.seed) : std::nullopt));
        rays = ray_dataset(sets, data.train_masks);
        objective = std::make_unique<RayObjective>(rays);
    } else {
        voxels = voxel_dataset(data.carved, opt.carve_jitter, opt.seed);
        objective = std::make_unique<PointObjective>(voxels);
    }
    const Objective& obj = *objective;
    TrainConfig train = opt.train;
    if (sup == Supervision::tomo2d) train.batch_size = std::max<std::size_t>(1, opt.train.batch_size / opt.train_samples);

    for (const auto& entry : opt.roster) {
        Recipe slot;
        const Recipe& recipe = pick_recipe(opt.recipes, entry.preset, Task::seg3d, slot);
        Model m(recipe_spec(recipe, entry.mode, opt.seed));
        const auto t0 = std::chrono::steady_clock::now();
        RunResult r;
        r.name = entry.name();
        r.preset = entry.preset;
        r.mode = entry.mode;
        r.supervision = to_string(sup);
        r.params = m.param_count();
        EvalFn eval;
        if (opt.train.eval_every > 0) eval = [&](const Model& mm) { return seg3d_test_iou(mm, data, opt, sup); };
        r.log = fit(m, obj, train, eval);
        r.train_loss = loss_and_grad(m, obj, {}, {}, opt.train.threads);
        const auto proj = seg3d_project_test(m, data, opt, sup);
        r.test_iou = seg3d_iou(proj, data, opt.threshold);
        for (double t : opt.threshold_sweep) r.sweep_iou.push_back(seg3d_iou(proj, data, t));
        r.seconds = seconds_since(t0);
        std::vector<Tensor> binary;
        for (const auto& p : proj) binary.push_back(binarize(p, opt.threshold));
        report.runs.push_back(std::move(r));
        report.test_predictions.push_back(std::move(binary));
        if (opt.keep_models) report.models.push_back(std::move(m));
    }
    return report;
}

// ---------------------------------------------------------------- video

PointDataset video_train_points(const Video& v) {
    const std::size_t frames = v.masks.dim(0), w = v.masks.dim(1);
    PointDataset d;
    d.coords.reserve(v.train_frames.size() * w * w);
    d.targets.reserve(v.train_frames.size() * w * w);
    for (auto f : v.train_frames)
        for (std::size_t i = 0; i < w; ++i)
            for (std::size_t j = 0; j < w; ++j) d.add(video_coord(i, j, f, w, frames), v.masks[(f * w + i) * w + j]);
    return d;
}

Tensor predict_test_frames(const Model& m, const Video& v, int threads) {
    const std::size_t frames = v.masks.dim(0), w = v.masks.dim(1);
    Tensor out({v.test_frames.size(), w, w});
    parallel_for(v.test_frames.size() * w, threads, [&](std::size_t row) {
        const std::size_t t = row / w, i = row % w, f = v.test_frames[t];
        for (std::size_t j = 0; j < w; ++j) {
            out[(t * w + i) * w + j] = m.predict(video_coord(i, j, f, w, frames));
        }
    });
    return out;
}

Tensor video_test_truth(const Video& v) {
    const std::size_t w = v.masks.dim(1);
    Tensor t({v.test_frames.size(), w, w});
    for (std::size_t k = 0; k < v.test_frames.size(); ++k)
        for (std::size_t p = 0; p < w * w; ++p) t[k * w * w + p] = v.masks[v.test_frames[k] * w * w + p];
    return t;
}

double video_test_iou(const Model& m, const Video& v, int threads, double threshold) {
    return iou(binarize(predict_test_frames(m, v, threads), threshold), video_test_truth(v));
}

double nearest_frame_iou(const Video& v) {
    const std::size_t w = v.masks.dim(1);
    Tensor pred({v.test_frames.size(), w, w});
    for (std::size_t k = 0; k < v.test_frames.size(); ++k) {
        const std::size_t f = v.test_frames[k];
        std::size_t best = v.train_frames.front();
        for (auto g : v.train_frames) {
            const auto dist = [f](std::size_t x) { return x > f ? x - f : f - x; };
            if (dist(g) < dist(best) || (dist(g) == dist(best) && g < best)) best = g;
        }
        for (std::size_t p = 0; p < w * w; ++p) pred[k * w * w + p] = v.masks[best * w * w + p];
    }
    return iou(pred, video_test_truth(v));
}

RunResult train_video_model(const ModelSpec& spec, const std::string& name, const Video& v, const PointDataset& data,
                            const TrainConfig& cfg, Model* out, double threshold) {
    Model m(spec);
    const auto t0 = std::chrono::steady_clock::now();
    RunResult r;
    r.name = name;
    r.preset = spec.expr;
    r.mode = spec.mode;
    r.supervision = "video";
    r.params = m.param_count();
    EvalFn eval;
    if (cfg.eval_every > 0) eval = [&](const Model& mm) { return video_test_iou(mm, v, cfg.threads, threshold); };
    const PointObjective obj(data);
    r.log = fit(m, obj, cfg, eval);
    r.train_loss = loss_and_grad(m, obj, {}, {}, cfg.threads);
    r.test_iou = video_test_iou(m, v, cfg.threads, threshold);
    r.seconds = seconds_since(t0);
    if (out) *out = std::move(m);
    return r;
}

VideoReport run_video(const VideoOptions& opt) {
    VideoReport report;
    report.video = make_video(opt.video);
    const Video& v = report.video;
    const PointDataset data = video_train_points(v);
    report.copy_baseline_iou = nearest_frame_iou(v);
    const Tensor truth = video_test_truth(v);
    for (const auto& entry : opt.roster) {
        Recipe slot;
        const Recipe& recipe = pick_recipe(opt.recipes, entry.preset, Task::video, slot);
        ModelSpec spec = recipe_spec(recipe, entry.mode, opt.seed);
        spec.gate_seed = opt.gate_seed;
        Model m(spec);
        RunResult r = train_video_model(spec, entry.name(), v, data, opt.train, &m, opt.threshold);
        r.preset = entry.preset;
        const Tensor pred = predict_test_frames(m, v, opt.train.threads);
        for (double t : opt.threshold_sweep) r.sweep_iou.push_back(iou(binarize(pred, t), truth));
        report.runs.push_back(std::move(r));
        report.test_predictions.push_back(binarize(pred, opt.threshold));
        if (opt.keep_models) report.models.push_back(std::move(m));
    }
    return report;
}

// ---------------------------------------------------------------- stability

namespace {

template <class Get>
double spread_of(const std::vector<RunResult>& runs, Mode m, Get get) {
    double lo = INFINITY, hi = -INFINITY, sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : runs) {
        if (r.mode != m) continue;
        const double x = get(r);
        lo = std::min(lo, x);
        hi = std::max(hi, x);
        sum += x;
        ++n;
    }
    if (n == 0) throw Error("no stability runs for mode " + to_string(m));
    const double mean = sum / static_cast<double>(n);
    return mean == 0.0 ? 0.0 : (hi - lo) / std::abs(mean);
}

}  // namespace

double StabilityReport::loss_spread(Mode m) const {
    return spread_of(runs, m, [](const RunResult& r) { return r.train_loss; });
}

double StabilityReport::iou_spread(Mode m) const {
    return spread_of(runs, m, [](const RunResult& r) { return r.test_iou; });
}

StabilityReport run_stability(const StabilityOptions& opt) {
    const Video v = make_video(opt.video);
    const PointDataset data = video_train_points(v);
    StabilityReport report;
    for (Mode mode : opt.modes) {
        for (auto seed : opt.seeds) {
            ModelSpec spec = recipe_spec(opt.recipe, mode, seed);
            spec.gate_seed = opt.gate_seed;
            TrainConfig cfg = opt.train;
            cfg.seed = SeededRng::derive(opt.train.seed, seed);
            RunResult r = train_video_model(spec, opt.recipe.preset + ":" + to_string(mode) + ":seed" +
                                                      std::to_string(seed),
                                            v, data, cfg);
            r.preset = opt.recipe.preset;
            report.runs.push_back(std::move(r));
        }
    }
    return report;
}

// ---------------------------------------------------------------- image fits

std::vector<ImageFitRow> svd_curve(const Tensor& image, std::size_t max_k) {
    const Svd f = svd(image);
    const double n = static_cast<double>(image.size());
    const std::size_t kmax = std::min(max_k, f.s.size());
    std::vector<ImageFitRow> rows;
    for (std::size_t k = 1; k <= kmax; ++k) {
        const double tail = tail_norm(f.s, k);
        const double err = tail * tail / n;
        ImageFitRow r;
        r.method = "svd";
        r.k = k;
        r.params = k * (image.rows() + image.cols() + 1);
        r.psnr = err <= 0.0 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(1.0 / err));
        rows.push_back(r);
    }
    return rows;
}

double svd_psnr_at_params(const std::vector<ImageFitRow>& curve, std::size_t params) {
    double best = -INFINITY;
    for (const auto& r : curve)
        if (r.method == "svd" && r.params <= params) best = std::max(best, r.psnr);
    return best;
}

ImageFitRow fit_image_model(const Tensor& image, const Model2DOptions& mo, const TrainConfig& cfg, Model* out) {
    Model m(model_spec_2d(mo));
    const PointDataset data = matrix_dataset(image);
    fit(m, data, cfg);
    ImageFitRow r;
    r.method = to_string(mo.combiner) + "+" + to_string(mo.decoder);
    r.interp = to_string(mo.interp);
    r.k = mo.k;
    r.r1 = mo.r1;
    r.params = m.param_count();
    r.psnr = psnr(assemble_matrix(m, image.rows(), image.cols()), image);
    if (out) *out = std::move(m);
    return r;
}

std::vector<ImageFitRow> run_image_fit(const Tensor& image, const ImageFitOptions& opt) {
    if (image.rank() != 2 || image.rows() != image.cols()) throw Error("image fit expects a square image");
    std::vector<ImageFitRow> rows = svd_curve(image, opt.svd_max_k);
    for (auto interp : opt.interps) {
        for (auto c : opt.combiners) {
            for (auto dec : opt.decoders) {
                for (auto k : opt.ks) {
                    Model2DOptions mo;
                    mo.combiner = c;
                    mo.decoder = dec;
                    mo.k = k;
                    mo.r1 = dec == DecoderKind::linear ? image.rows() : opt.r1_mlp;
                    mo.hidden = opt.hidden;
                    mo.interp = interp;
                    mo.bias = dec != DecoderKind::linear;
                    mo.seed = opt.seed;
                    rows.push_back(fit_image_model(image, mo, opt.train));
                }
            }
        }
    }
    return rows;
}

std::string image_fit_csv(const std::vector<ImageFitRow>& rows) {
    std::string s = "method,interp,k,r1,params,psnr\n";
    for (const auto& r : rows)
        s += r.method + "," + r.interp + "," + std::to_string(r.k) + "," + std::to_string(r.r1) + "," + std::to_string(r.params) + "," +
             fmt(r.psnr) + "\n";
    return s;
}

}  // namespace gaplanes
