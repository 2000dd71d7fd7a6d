#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gaplanes/model.hpp"

namespace gaplanes {

enum class Optimizer { adam, sgd, gd };

std::string to_string(Optimizer o);
Optimizer parse_optimizer(const std::string& s);

struct TrainConfig {
    std::size_t steps = 1000;
    std::size_t batch_size = 4096;  // ignored by gd, which is always full-batch
    double lr_grids = 1e-2;
    double lr_decoder = 1e-3;
    Optimizer optimizer = Optimizer::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;       // minibatch shuffling
    std::size_t eval_every = 0;   // 0: evaluate only after the last step
    std::size_t log_every = 1;
    int threads = 1;
};

void check_train_config(const TrainConfig& cfg);

struct PointDataset {
    std::vector<Coord> coords;
    std::vector<double> targets;

    std::size_t size() const { return coords.size(); }
    void add(const Coord& q, double y);
};

/// T sample points per ray; the ray's prediction is their mean.
struct RayDataset {
    std::vector<Coord> samples;  // ray-major, samples_per_ray each
    std::vector<double> targets;
    std::size_t samples_per_ray = 0;

    std::size_t size() const { return targets.size(); }
};

struct MetricRow {
    std::size_t step = 0;
    double loss = 0.0;
    double metric = std::numeric_limits<double>::quiet_NaN();
    double wall_ms = 0.0;
};

/// Append-only training record. Steps strictly increase.
class MetricLog {
public:
    void append(const MetricRow& row);
    const std::vector<MetricRow>& rows() const { return rows_; }
    bool empty() const { return rows_.empty(); }
    const MetricRow& back() const { return rows_.back(); }

    /// Last logged loss and last non-NaN metric.
    double final_loss() const;
    double final_metric() const;

    /// Equality of step, loss and metric (wall time excluded).
    bool same_trace(const MetricLog& other) const;

    /// Columns step,loss,metric,wall_ms; a missing metric is an empty field.
    std::string to_csv() const;
    void write_csv(const std::string& path) const;

private:
    std::vector<MetricRow> rows_;
};

/// Mean squared error over a subset of items plus its parameter gradient.
class Objective {
public:
    virtual ~Objective() = default;
    virtual std::size_t size() const = 0;
    /// Sum over items of the per-item squared error; adds the gradient of
    /// scale * (that sum) into grad when grad is non-empty.
    virtual double accumulate(const Model& m, std::span<const std::size_t> items, double scale,
                              std::span<double> grad) const = 0;
};

class PointObjective : public Objective {
public:
    explicit PointObjective(const PointDataset& data) : data_(data) {}
    std::size_t size() const override { return data_.size(); }
    double accumulate(const Model& m, std::span<const std::size_t> items, double scale,
                      std::span<double> grad) const override;

private:
    const PointDataset& data_;
};

class RayObjective : public Objective {
public:
    explicit RayObjective(const RayDataset& data);
    std::size_t size() const override { return data_.size(); }
    double accumulate(const Model& m, std::span<const std::size_t> items, double scale,
                      std::span<double> grad) const override;

private:
    const RayDataset& data_;
};

/// Mean loss over the given items (all items when empty) and, when grad is
/// non-empty, its gradient (overwritten). Work is split into a fixed number
/// of chunks summed by an ordered pairwise tree, so the result does not
/// depend on the thread count.
double loss_and_grad(const Model& m, const Objective& obj, std::span<const std::size_t> items, std::span<double> grad,
                     int threads = 1);

/// Pointwise MSE over a dataset slice.
double mse_loss(const Model& m, const PointDataset& data, std::span<const std::size_t> items, std::span<double> grad);

using EvalFn = std::function<double(const Model&)>;

/// Optimizer steps over seeded shuffled minibatches. Frozen parameters are
/// never touched. Throws Error on a non-finite loss.
MetricLog fit(Model& m, const Objective& obj, const TrainConfig& cfg, const EvalFn& eval = {});
MetricLog fit(Model& m, const PointDataset& data, const TrainConfig& cfg, const EvalFn& eval = {});

/// Largest eigenvalue of the loss Hessian, by power iteration on gradient
/// differences. Exact (up to convergence) when the model is linear in its
/// trainable parameters, as in convex mode.
double estimate_lipschitz(const Model& m, const Objective& obj, int iterations = 50, std::uint64_t seed = 0,
                          int threads = 1);

}  // namespace gaplanes
