#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gaplanes/baselines.hpp"
#include "gaplanes/geometry.hpp"
#include "gaplanes/theory.hpp"
#include "gaplanes/training.hpp"

namespace gaplanes {

/// Intersection over union of two binary tensors (entries > 0.5 count as set).
/// Two empty masks give 1.
double iou(const Tensor& a, const Tensor& b);

/// 1 where t >= threshold, else 0.
Tensor binarize(const Tensor& t, double threshold = 0.5);

/// Grid layout for one named architecture.
struct Recipe {
    std::string preset;  // CONCAT, MULT, TRIPLANE_ADD, TRIPLANE_MUL
    std::array<std::size_t, 3> d{};
    std::array<std::size_t, 3> r{};
    std::vector<int> scales{1};
    std::size_t hidden = 64;
    bool relax_mul = false;
};

enum class Task { seg3d, video };

/// Default sizes per task; all four presets land near 0.2M parameters.
Recipe default_recipe(const std::string& preset, Task task);

/// Model for a recipe in a mode (decoder from default_decoder).
ModelSpec recipe_spec(const Recipe& r, Mode mode, std::uint64_t seed);

/// One entry of a model roster, written "PRESET:mode".
struct RosterEntry {
    std::string preset;
    Mode mode = Mode::nonconvex;

    std::string name() const;
};

RosterEntry parse_roster_entry(const std::string& text);
std::vector<RosterEntry> parse_roster(const std::vector<std::string>& items);
/// CONCAT in all modes, MULT nonconvex, TRIPLANE_ADD in all modes, TRIPLANE_MUL nonconvex.
std::vector<RosterEntry> default_roster();

struct RunResult {
    std::string name;
    std::string preset;
    Mode mode = Mode::nonconvex;
    std::string supervision;
    std::size_t params = 0;
    double train_loss = 0.0;  // full training-set loss after the last step
    double test_iou = 0.0;
    double seconds = 0.0;
    std::vector<double> sweep_iou;  // test IOU at each threshold of the options' sweep
    MetricLog log;
};

std::string runs_csv(const std::vector<RunResult>& runs);

// ---------------------------------------------------------------- seg3d

enum class Supervision { tomo2d, carved3d };

std::string to_string(Supervision s);
Supervision parse_supervision(const std::string& s);

struct Seg3dOptions {
    std::uint64_t scene_seed = 0;
    std::optional<SceneSpec> scene;  // replaces default_scene(scene_seed)
    std::size_t width = 64;
    std::size_t train_samples = 32;  // per ray during training
    bool ray_jitter = false;         // stratified training samples instead of segment midpoints
    std::size_t eval_samples = 128;  // per ray for held-out projections
    std::size_t voxel_resolution = 64;
    std::size_t carve_jitter = 2;  // carved3d training points per voxel (0: voxel centers)
    std::vector<RosterEntry> roster = default_roster();
    std::vector<Recipe> recipes;  // overrides default_recipe by preset
    TrainConfig train;       // batch_size counts sample points; tomo2d takes batch_size / train_samples rays
    std::uint64_t seed = 0;  // model initialization
    double threshold = 0.5;
    std::vector<double> threshold_sweep;
    bool keep_models = false;
};

struct Seg3dData {
    SceneSpec scene;
    std::vector<View> train_views, test_views;
    std::vector<Tensor> train_masks, test_masks;
    VoxelLabels carved;
};

Seg3dData make_seg3d_data(const Seg3dOptions& opt);

struct Seg3dReport {
    std::vector<RunResult> runs;
    double hull_iou = 0.0;  // carved hull projected onto the held-out views
    Seg3dData data;
    std::vector<std::vector<Tensor>> test_predictions;  // per run, per held-out view (binary)
    std::vector<Model> models;                          // when keep_models
};

/// Projected density (mean for tomo2d, max for carved3d) on each held-out view.
std::vector<Tensor> seg3d_project_test(const Model& m, const Seg3dData& data, const Seg3dOptions& opt,
                                       Supervision sup);
/// IOU of thresholded projections against the held-out masks, pooled over views.
double seg3d_iou(const std::vector<Tensor>& projections, const Seg3dData& data, double threshold);
double seg3d_test_iou(const Model& m, const Seg3dData& data, const Seg3dOptions& opt, Supervision sup);

Seg3dReport run_seg3d(const Seg3dOptions& opt, Supervision sup);

// ---------------------------------------------------------------- video

struct VideoOptions {
    VideoSpec video;
    std::vector<RosterEntry> roster = default_roster();
    std::vector<Recipe> recipes;
    TrainConfig train;
    std::uint64_t seed = 0;
    std::optional<std::uint64_t> gate_seed;
    double threshold = 0.5;
    std::vector<double> threshold_sweep;
    bool keep_models = false;
};

/// Training points: every pixel of every training frame.
PointDataset video_train_points(const Video& v);

/// Raw model output on the held-out frames (test frames x w x w).
Tensor predict_test_frames(const Model& m, const Video& v, int threads = 1);
Tensor video_test_truth(const Video& v);

/// IOU of the thresholded prediction pooled over all held-out frames.
double video_test_iou(const Model& m, const Video& v, int threads = 1, double threshold = 0.5);

/// Each held-out frame copied from the nearest training frame (earlier on ties).
double nearest_frame_iou(const Video& v);

struct VideoReport {
    std::vector<RunResult> runs;
    double copy_baseline_iou = 0.0;
    Video video;
    std::vector<Tensor> test_predictions;  // per run, binary
    std::vector<Model> models;             // when keep_models
};

RunResult train_video_model(const ModelSpec& spec, const std::string& name, const Video& v, const PointDataset& data,
                            const TrainConfig& cfg, Model* out = nullptr, double threshold = 0.5);

VideoReport run_video(const VideoOptions& opt);

// ---------------------------------------------------------------- stability

struct StabilityOptions {
    VideoSpec video;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::vector<Mode> modes{Mode::convex, Mode::semiconvex, Mode::nonconvex};
    Recipe recipe{"CONCAT", {4, 4, 2}, {32, 32, 16}, {1}, 4, false};
    std::uint64_t gate_seed = 1234;  // shared across initialization seeds
    TrainConfig train;
};

struct StabilityReport {
    std::vector<RunResult> runs;  // modes-major, seeds-minor

    /// (max - min) / mean of the final training loss across seeds.
    double loss_spread(Mode m) const;
    double iou_spread(Mode m) const;
};

StabilityReport run_stability(const StabilityOptions& opt);

// ---------------------------------------------------------------- image fits

struct ImageFitOptions {
    std::vector<Combiner2D> combiners{Combiner2D::add, Combiner2D::mul};
    std::vector<DecoderKind> decoders{DecoderKind::linear, DecoderKind::gated, DecoderKind::mlp};
    std::vector<std::size_t> ks{4, 8, 16, 32};
    std::size_t r1_mlp = 128;  // line resolution of nonlinear variants; linear ones use the image size
    std::size_t hidden = 32;
    std::vector<Interp> interps{Interp::multilinear};
    TrainConfig train;
    std::uint64_t seed = 0;
    std::size_t svd_max_k = 64;
};

struct ImageFitRow {
    std::string method;  // "svd" or "<combiner>+<decoder>"
    std::string interp;  // empty for svd
    std::size_t k = 0;
    std::size_t r1 = 0;
    std::size_t params = 0;
    double psnr = 0.0;
};

std::vector<ImageFitRow> run_image_fit(const Tensor& image, const ImageFitOptions& opt);
std::string image_fit_csv(const std::vector<ImageFitRow>& rows);

/// PSNR of the rank-k truncation, k = 1..max_k, from one SVD.
std::vector<ImageFitRow> svd_curve(const Tensor& image, std::size_t max_k);

/// PSNR of the best truncated SVD whose parameter count k (m + n + 1) does not exceed params.
double svd_psnr_at_params(const std::vector<ImageFitRow>& curve, std::size_t params);

/// Trains one 2D model on the image and returns its PSNR.
ImageFitRow fit_image_model(const Tensor& image, const Model2DOptions& mo, const TrainConfig& cfg, Model* out = nullptr);

}  // namespace gaplanes
