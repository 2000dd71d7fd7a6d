#include "gaplanes/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>
#include <thread>

namespace gaplanes {

std::string to_string(Optimizer o) {
    switch (o) {
        case Optimizer::adam: return "adam";
        case Optimizer::sgd: return "sgd";
        case Optimizer::gd: return "gd";
    }
    return "?";
}

Optimizer parse_optimizer(const std::string& s) {
    if (s == "adam") return Optimizer::adam;
    if (s == "sgd") return Optimizer::sgd;
    if (s == "gd") return Optimizer::gd;
    throw Error("unknown optimizer '" + s + "' (expected adam, sgd or gd)");
}

void check_train_config(const TrainConfig& cfg) {
    if (cfg.steps == 0) throw Error("train.steps must be positive");
    if (cfg.batch_size == 0) throw Error("train.batch_size must be positive");
    if (!(cfg.lr_grids > 0.0) || !(cfg.lr_decoder > 0.0)) throw Error("learning rates must be positive");
    if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) {
        throw Error("adam betas must lie in [0, 1)");
    }
    if (!(cfg.eps > 0.0)) throw Error("adam eps must be positive");
    if (cfg.log_every == 0) throw Error("train.log_every must be positive");
    if (cfg.threads < 1) throw Error("threads must be at least 1");
}

void PointDataset::add(const Coord& q, double y) {
    coords.push_back(q);
    targets.push_back(y);
}

void MetricLog::append(const MetricRow& row) {
    if (!rows_.empty() && row.step <= rows_.back().step) throw Error("metric log steps must strictly increase");
    rows_.push_back(row);
}

double MetricLog::final_loss() const {
    if (rows_.empty()) throw Error("empty metric log");
    return rows_.back().loss;
}

double MetricLog::final_metric() const {
    for (auto it = rows_.rbegin(); it != rows_.rend(); ++it)
        if (!std::isnan(it->metric)) return it->metric;
    return std::numeric_limits<double>::quiet_NaN();
}

bool MetricLog::same_trace(const MetricLog& other) const {
    if (rows_.size() != other.rows_.size()) return false;
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        const auto& a = rows_[i];
        const auto& b = other.rows_[i];
        if (a.step != b.step || a.loss != b.loss) return false;
        if (std::isnan(a.metric) != std::isnan(b.metric)) return false;
        if (!std::isnan(a.metric) && a.metric != b.metric) return false;
    }
    return true;
}

std::string MetricLog::to_csv() const {
    std::string s = "step,loss,metric,wall_ms\n";
    char buf[128];
    for (const auto& r : rows_) {
        s += std::to_string(r.step);
        std::snprintf(buf, sizeof buf, ",%.17g,", r.loss);
        s += buf;
        if (!std::isnan(r.metric)) {
            std::snprintf(buf, sizeof buf, "%.17g", r.metric);
            s += buf;
        }
        std::snprintf(buf, sizeof buf, ",%.3f\n", r.wall_ms);
        s += buf;
    }
    return s;
}

void MetricLog::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << to_csv();
}

double PointObjective::accumulate(const Model& m, std::span<const std::size_t> items, double scale,
                                  std::span<double> grad) const {
    auto cache = m.make_cache();
    double sum = 0.0;
    for (auto i : items) {
        const double r = m.forward(data_.coords[i], cache) - data_.targets[i];
        sum += r * r;
        if (!grad.empty()) m.backward(cache, scale * 2.0 * r, grad);
    }
    return sum;
}

RayObjective::RayObjective(const RayDataset& data) : data_(data) {
    if (data_.samples_per_ray == 0) throw Error("rays need at least one sample");
    if (data_.samples.size() != data_.samples_per_ray * data_.targets.size()) {
        throw Error("ray sample count does not match targets");
    }
}

double RayObjective::accumulate(const Model& m, std::span<const std::size_t> items, double scale,
                                std::span<double> grad) const {
    const std::size_t t = data_.samples_per_ray;
    std::vector<Model::Cache> caches;
    caches.reserve(t);
    for (std::size_t s = 0; s < t; ++s) caches.push_back(m.make_cache());
    double sum = 0.0;
    for (auto i : items) {
        const Coord* q = data_.samples.data() + i * t;
        double mean = 0.0;
        for (std::size_t s = 0; s < t; ++s) mean += m.forward(q[s], caches[s]);
        mean /= static_cast<double>(t);
        const double r = mean - data_.targets[i];
        sum += r * r;
        if (!grad.empty()) {
            const double up = scale * 2.0 * r / static_cast<double>(t);
            for (std::size_t s = 0; s < t; ++s) m.backward(caches[s], up, grad);
        }
    }
    return sum;
}

namespace {

constexpr std::size_t kChunks = 8;

void tree_reduce(std::vector<std::vector<double>>& bufs, std::vector<double>& sums, std::size_t used) {
    for (std::size_t stride = 1; stride < used; stride *= 2) {
        for (std::size_t i = 0; i + stride < used; i += 2 * stride) {
            auto& a = bufs[i];
            const auto& b = bufs[i + stride];
            for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
            sums[i] += sums[i + stride];
        }
    }
}

}  // namespace

double loss_and_grad(const Model& m, const Objective& obj, std::span<const std::size_t> items, std::span<double> grad,
                     int threads) {
    std::vector<std::size_t> all;
    if (items.empty()) {
        all.resize(obj.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        items = all;
    }
    const std::size_t n = items.size();
    if (n == 0) throw Error("loss over an empty set of items");
    const std::size_t chunks = std::min(kChunks, n);
    const double scale = 1.0 / static_cast<double>(n);
    const bool want_grad = !grad.empty();

    std::vector<std::vector<double>> bufs(chunks);
    std::vector<double> sums(chunks, 0.0);
    auto run_chunk = [&](std::size_t c) {
        const std::size_t lo = c * n / chunks, hi = (c + 1) * n / chunks;
        if (want_grad) bufs[c].assign(m.trainable_count(), 0.0);
        sums[c] = obj.accumulate(m, items.subspan(lo, hi - lo), scale, bufs[c]);
    };

    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), chunks);
    if (workers <= 1) {
        for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
    } else {
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t c = w; c < chunks; c += workers) run_chunk(c);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    if (want_grad) {
        tree_reduce(bufs, sums, chunks);
        std::copy(bufs[0].begin(), bufs[0].end(), grad.begin());
    } else {
        for (std::size_t stride = 1; stride < chunks; stride *= 2)
            for (std::size_t i = 0; i + stride < chunks; i += 2 * stride) sums[i] += sums[i + stride];
    }
    return sums[0] * scale;
}

double mse_loss(const Model& m, const PointDataset& data, std::span<const std::size_t> items, std::span<double> grad) {
    PointObjective obj(data);
    return loss_and_grad(m, obj, items, grad);
}

MetricLog fit(Model& m, const PointDataset& data, const TrainConfig& cfg, const EvalFn& eval) {
    PointObjective obj(data);
    return fit(m, obj, cfg, eval);
}

MetricLog fit(Model& m, const Objective& obj, const TrainConfig& cfg, const EvalFn& eval) {
    check_train_config(cfg);
    const std::size_t n = obj.size();
    if (n == 0) throw Error("cannot fit an empty dataset");

    auto blocks = m.blocks();
    const std::size_t total = m.trainable_count();
    std::vector<double> grad(total, 0.0), m1, m2;
    if (cfg.optimizer == Optimizer::adam) {
        m1.assign(total, 0.0);
        m2.assign(total, 0.0);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    SeededRng rng(cfg.seed);
    std::size_t pos = n;
    const std::size_t batch = std::min(cfg.batch_size, n);

    MetricLog log;
    const auto t0 = std::chrono::steady_clock::now();
    double b1t = 1.0, b2t = 1.0;
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        std::span<const std::size_t> items;
        if (cfg.optimizer != Optimizer::gd) {
            if (pos >= n) {
                rng.shuffle(order);
                pos = 0;
            }
            const std::size_t len = std::min(batch, n - pos);
            items = std::span<const std::size_t>(order).subspan(pos, len);
            pos += len;
        }
        const double loss = loss_and_grad(m, obj, items, grad, cfg.threads);
        if (!std::isfinite(loss)) {
            throw Error("non-finite loss at step " + std::to_string(step) + " (try a smaller learning rate)");
        }

        b1t *= cfg.beta1;
        b2t *= cfg.beta2;
        for (auto& b : blocks) {
            const double lr = b.group == Group::grids ? cfg.lr_grids : cfg.lr_decoder;
            double* p = b.values.data();
            const double* g = grad.data() + b.offset;
            const std::size_t len = b.values.size();
            if (cfg.optimizer == Optimizer::adam) {
                double* mo = m1.data() + b.offset;
                double* vo = m2.data() + b.offset;
                for (std::size_t i = 0; i < len; ++i) {
                    mo[i] = cfg.beta1 * mo[i] + (1.0 - cfg.beta1) * g[i];
                    vo[i] = cfg.beta2 * vo[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                    const double mh = mo[i] / (1.0 - b1t);
                    const double vh = vo[i] / (1.0 - b2t);
                    p[i] -= lr * mh / (std::sqrt(vh) + cfg.eps);
                }
            } else {
                for (std::size_t i = 0; i < len; ++i) p[i] -= lr * g[i];
            }
        }

        const bool last = step == cfg.steps;
        const bool do_eval = eval && (last || (cfg.eval_every > 0 && step % cfg.eval_every == 0));
        if (last || do_eval || step % cfg.log_every == 0) {
            MetricRow row;
            row.step = step;
            row.loss = loss;
            if (do_eval) row.metric = eval(m);
            row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            log.append(row);
        }
    }
    return log;
}

double estimate_lipschitz(const Model& m, const Objective& obj, int iterations, std::uint64_t seed, int threads) {
    const std::size_t total = m.trainable_count();
    if (total == 0) return 0.0;
    const std::vector<double> theta = m.flat_params();
    std::vector<double> g0(total), g1(total), v(total), shifted(total);
    loss_and_grad(m, obj, {}, g0, threads);

    SeededRng rng(seed);
    for (auto& x : v) x = rng.normal();
    auto normalize = [](std::vector<double>& x) {
        double s = 0.0;
        for (double e : x) s += e * e;
        s = std::sqrt(s);
        if (s == 0.0) return 0.0;
        for (auto& e : x) e /= s;
        return s;
    };
    normalize(v);

    Model probe = m;
    constexpr double kStep = 1e-2;
    double lambda = 0.0;
    for (int it = 0; it < iterations; ++it) {
        for (std::size_t i = 0; i < total; ++i) shifted[i] = theta[i] + kStep * v[i];
        probe.set_flat_params(shifted);
        loss_and_grad(probe, obj, {}, g1, threads);
        for (std::size_t i = 0; i < total; ++i) g1[i] = (g1[i] - g0[i]) / kStep;
        double rq = 0.0;
        for (std::size_t i = 0; i < total; ++i) rq += v[i] * g1[i];
        lambda = rq;
        v = g1;
        if (normalize(v) == 0.0) break;
    }
    return lambda;
}

}  // namespace gaplanes
