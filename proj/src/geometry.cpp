#include "gaplanes/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <thread>

namespace gaplanes {

namespace {

constexpr Vec3 kCenter{0.5, 0.5, 0.5};

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

double snap(double x) { return std::abs(x) < 1e-15 ? 0.0 : x; }

struct Footprint {
    double s0, s1, t0, t1;
};

Footprint pixel_footprint(std::size_t i, std::size_t j, std::size_t w) {
    const double wd = static_cast<double>(w);
    return {static_cast<double>(j) / wd - 0.5, static_cast<double>(j + 1) / wd - 0.5,
            0.5 - static_cast<double>(i + 1) / wd, 0.5 - static_cast<double>(i) / wd};
}

std::array<double, 2> to_image(const View& v, const Vec3& p) {
    const Vec3 d = sub(p, kCenter);
    return {dot(d, v.u), dot(d, v.v)};
}

bool disk_meets(const Footprint& f, double cs, double ct, double r) {
    const double ds = cs - std::clamp(cs, f.s0, f.s1);
    const double dt = ct - std::clamp(ct, f.t0, f.t1);
    return ds * ds + dt * dt <= r * r;
}

// Separating-axis test between the pixel square and the convex hull of pts.
bool hull_meets(const Footprint& f, const std::vector<std::array<double, 2>>& pts) {
    const std::array<std::array<double, 2>, 4> sq{{{f.s0, f.t0}, {f.s1, f.t0}, {f.s1, f.t1}, {f.s0, f.t1}}};
    auto separated = [&](double nx, double ny) {
        double a0 = std::numeric_limits<double>::infinity(), a1 = -a0, b0 = a0, b1 = -a0;
        for (const auto& p : pts) {
            const double d = p[0] * nx + p[1] * ny;
            a0 = std::min(a0, d);
            a1 = std::max(a1, d);
        }
        for (const auto& p : sq) {
            const double d = p[0] * nx + p[1] * ny;
            b0 = std::min(b0, d);
            b1 = std::max(b1, d);
        }
        return a1 < b0 || b1 < a0;
    };
    if (separated(1.0, 0.0) || separated(0.0, 1.0)) return false;
    for (std::size_t a = 0; a < pts.size(); ++a) {
        for (std::size_t b = a + 1; b < pts.size(); ++b) {
            const double dx = pts[b][0] - pts[a][0], dy = pts[b][1] - pts[a][1];
            if (std::abs(dx) + std::abs(dy) < 1e-15) continue;
            if (separated(-dy, dx)) return false;
        }
    }
    return true;
}

void require_mask(const Tensor& m, std::size_t w, const char* what) {
    if (m.rank() != 2 || m.rows() != w || m.cols() != w) {
        throw Error(std::string(what) + ": mask must be " + std::to_string(w) + "x" + std::to_string(w));
    }
}

template <class Fn>
void parallel_rows(std::size_t n, int threads, Fn&& fn) {
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

}  // namespace

bool SceneSpec::inside(const Vec3& p) const {
    for (const auto& prim : primitives) {
        if (const auto* s = std::get_if<Sphere>(&prim)) {
            const Vec3 d = sub(p, s->center);
            if (dot(d, d) <= s->radius * s->radius) return true;
        } else {
            const auto& b = std::get<Box>(prim);
            if (p[0] >= b.lo[0] && p[0] <= b.hi[0] && p[1] >= b.lo[1] && p[1] <= b.hi[1] && p[2] >= b.lo[2] &&
                p[2] <= b.hi[2])
                return true;
        }
    }
    return false;
}

void check_scene(const SceneSpec& scene) {
    for (const auto& prim : scene.primitives) {
        if (const auto* s = std::get_if<Sphere>(&prim)) {
            if (!(s->radius > 0.0)) throw Error("sphere radius must be positive");
            for (double c : s->center) {
                if (c - s->radius < 0.0 || c + s->radius > 1.0) throw Error("sphere leaves the unit cube");
            }
        } else {
            const auto& b = std::get<Box>(prim);
            for (int a = 0; a < 3; ++a) {
                if (!(b.lo[a] >= 0.0 && b.hi[a] <= 1.0 && b.lo[a] <= b.hi[a])) throw Error("box leaves the unit cube");
            }
        }
    }
}

SceneSpec default_scene(std::uint64_t seed) {
    SeededRng rng(SeededRng::derive(seed, 0x5ce));
    SceneSpec s;
    s.seed = seed;
    for (int i = 0; i < 3; ++i) {
        const double r = rng.uniform(0.12, 0.2);
        Vec3 c;
        for (auto& x : c) x = rng.uniform(0.25, 0.75);
        s.primitives.emplace_back(Sphere{c, r});
    }
    Box b;
    for (int a = 0; a < 3; ++a) {
        const double half = rng.uniform(0.08, 0.16);
        const double c = rng.uniform(0.3, 0.7);
        b.lo[a] = c - half;
        b.hi[a] = c + half;
    }
    s.primitives.emplace_back(b);
    check_scene(s);
    return s;
}

View azimuth_view(int id, double deg) {
    const double a = deg * std::numbers::pi / 180.0;
    View v;
    v.id = id;
    v.name = "az" + std::to_string(static_cast<int>(std::lround(deg)));
    v.dir = {snap(std::cos(a)), snap(std::sin(a)), 0.0};
    v.u = {snap(-std::sin(a)), snap(std::cos(a)), 0.0};
    v.v = {0.0, 0.0, 1.0};
    return v;
}

View top_view(int id) {
    View v;
    v.id = id;
    v.name = "top";
    v.dir = {0.0, 0.0, -1.0};
    v.u = {1.0, 0.0, 0.0};
    v.v = {0.0, 1.0, 0.0};
    return v;
}

std::vector<View> default_views() {
    std::vector<View> out;
    for (int k = 0; k < 8; ++k) out.push_back(azimuth_view(k, 45.0 * k));
    out.push_back(top_view(8));
    return out;
}

std::vector<View> seg3d_train_views() {
    std::vector<View> out;
    for (const auto& v : default_views()) {
        if (v.id != 1 && v.id != 5) out.push_back(v);
    }
    return out;
}

std::vector<View> seg3d_test_views() {
    const auto all = default_views();
    return {all[1], all[5]};
}

RaySet make_rays(const View& view, std::size_t width, std::size_t samples_per_ray,
                 std::optional<std::uint64_t> jitter_seed) {
    if (width == 0) throw Error("image width must be positive");
    if (samples_per_ray < 2) throw Error("rays need at least 2 samples");
    RaySet rs;
    rs.view = view;
    rs.width = width;
    rs.samples_per_ray = samples_per_ray;
    rs.samples.reserve(width * width * samples_per_ray);
    const double wd = static_cast<double>(width);
    SeededRng rng(SeededRng::derive(jitter_seed.value_or(0), static_cast<std::uint64_t>(view.id)));
    for (std::size_t i = 0; i < width; ++i) {
        for (std::size_t j = 0; j < width; ++j) {
            const double s = (static_cast<double>(j) + 0.5) / wd - 0.5;
            const double t = 0.5 - (static_cast<double>(i) + 0.5) / wd;
            Vec3 o;
            for (int a = 0; a < 3; ++a) o[a] = kCenter[a] + s * view.u[a] + t * view.v[a];
            double lo = -std::numeric_limits<double>::infinity(), hi = -lo;
            for (int a = 0; a < 3; ++a) {
                if (view.dir[a] == 0.0) {
                    if (o[a] < 0.0 || o[a] > 1.0) lo = hi + 1.0;
                    continue;
                }
                double l0 = (0.0 - o[a]) / view.dir[a], l1 = (1.0 - o[a]) / view.dir[a];
                if (l0 > l1) std::swap(l0, l1);
                lo = std::max(lo, l0);
                hi = std::min(hi, l1);
            }
            for (std::size_t k = 0; k < samples_per_ray; ++k) {
                Vec3 p = o;
                const double off = jitter_seed ? rng.uniform() : 0.5;
                if (lo <= hi) {
                    const double lam = lo + (static_cast<double>(k) + off) / static_cast<double>(samples_per_ray) * (hi - lo);
                    for (int a = 0; a < 3; ++a) p[a] = o[a] + lam * view.dir[a];
                }
                rs.samples.emplace_back(p[0], p[1], p[2]);
            }
        }
    }
    return rs;
}

Tensor render_mask(const SceneSpec& scene, const View& view, std::size_t width) {
    check_scene(scene);
    Tensor mask = Tensor::matrix(width, width);
    struct Proj {
        bool sphere;
        double cs, ct, r;
        std::vector<std::array<double, 2>> corners;
    };
    std::vector<Proj> projs;
    for (const auto& prim : scene.primitives) {
        Proj p{};
        if (const auto* s = std::get_if<Sphere>(&prim)) {
            const auto c = to_image(view, s->center);
            p = Proj{true, c[0], c[1], s->radius, {}};
        } else {
            const auto& b = std::get<Box>(prim);
            p.sphere = false;
            for (int k = 0; k < 8; ++k) {
                const Vec3 c{(k & 1) ? b.hi[0] : b.lo[0], (k & 2) ? b.hi[1] : b.lo[1], (k & 4) ? b.hi[2] : b.lo[2]};
                p.corners.push_back(to_image(view, c));
            }
        }
        projs.push_back(std::move(p));
    }
    for (std::size_t i = 0; i < width; ++i) {
        for (std::size_t j = 0; j < width; ++j) {
            const Footprint f = pixel_footprint(i, j, width);
            for (const auto& p : projs) {
                if (p.sphere ? disk_meets(f, p.cs, p.ct, p.r) : hull_meets(f, p.corners)) {
                    mask(i, j) = 1.0;
                    break;
                }
            }
        }
    }
    return mask;
}

Tensor project_density(const Model& m, const RaySet& rays, RayReduce reduce, int threads) {
    if (m.dims() != 3) throw Error("projection needs a 3D model");
    const std::size_t w = rays.width, t = rays.samples_per_ray;
    Tensor img = Tensor::matrix(w, w);
    parallel_rows(w, threads, [&](std::size_t i) {
        auto cache = m.make_cache();
        for (std::size_t j = 0; j < w; ++j) {
            const std::size_t base = (i * w + j) * t;
            double acc = reduce == RayReduce::mean ? 0.0 : -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < t; ++k) {
                const double y = m.forward(rays.samples[base + k], cache);
                acc = reduce == RayReduce::mean ? acc + y : std::max(acc, y);
            }
            img(i, j) = reduce == RayReduce::mean ? acc / static_cast<double>(t) : acc;
        }
    });
    return img;
}

RayDataset ray_dataset(const std::vector<RaySet>& rays, const std::vector<Tensor>& masks) {
    if (rays.size() != masks.size()) throw Error("one mask per view is needed");
    RayDataset d;
    for (std::size_t v = 0; v < rays.size(); ++v) {
        const auto& rs = rays[v];
        require_mask(masks[v], rs.width, "ray_dataset");
        if (d.samples_per_ray == 0) d.samples_per_ray = rs.samples_per_ray;
        if (d.samples_per_ray != rs.samples_per_ray) throw Error("views use different sample counts");
        d.samples.insert(d.samples.end(), rs.samples.begin(), rs.samples.end());
        d.targets.insert(d.targets.end(), masks[v].data().begin(), masks[v].data().end());
    }
    return d;
}

std::size_t VoxelLabels::count() const {
    std::size_t n = 0;
    for (auto v : occ) n += v;
    return n;
}

Vec3 VoxelLabels::center(std::size_t i, std::size_t j, std::size_t k, std::size_t r) {
    const double rd = static_cast<double>(r);
    return {(static_cast<double>(i) + 0.5) / rd, (static_cast<double>(j) + 0.5) / rd, (static_cast<double>(k) + 0.5) / rd};
}

bool project_point(const View& view, std::size_t width, const Vec3& p, std::size_t& row, std::size_t& col) {
    const auto st = to_image(view, p);
    const double wd = static_cast<double>(width);
    const double c = std::floor((st[0] + 0.5) * wd), r = std::floor((0.5 - st[1]) * wd);
    if (c < 0.0 || r < 0.0 || c >= wd || r >= wd) return false;
    row = static_cast<std::size_t>(r);
    col = static_cast<std::size_t>(c);
    return true;
}

VoxelLabels space_carve(const std::vector<Tensor>& masks, const std::vector<View>& views, std::size_t resolution) {
    if (views.empty()) throw Error("space carving needs at least one view");
    if (masks.size() != views.size()) throw Error("one mask per view is needed");
    if (resolution == 0) throw Error("voxel resolution must be positive");
    const std::size_t w = masks[0].rows();
    for (const auto& m : masks) require_mask(m, w, "space_carve");
    VoxelLabels out;
    out.resolution = resolution;
    out.occ.assign(resolution * resolution * resolution, 1);
    for (std::size_t x = 0; x < resolution; ++x) {
        for (std::size_t y = 0; y < resolution; ++y) {
            for (std::size_t z = 0; z < resolution; ++z) {
                const Vec3 p = VoxelLabels::center(x, y, z, resolution);
                auto& cell = out.occ[(x * resolution + y) * resolution + z];
                for (std::size_t v = 0; v < views.size() && cell; ++v) {
                    std::size_t r = 0, c = 0;
                    if (project_point(views[v], w, p, r, c) && masks[v](r, c) < 0.5) cell = 0;
                }
            }
        }
    }
    return out;
}

VoxelLabels voxelize(const SceneSpec& scene, std::size_t resolution) {
    VoxelLabels out;
    out.resolution = resolution;
    out.occ.assign(resolution * resolution * resolution, 0);
    for (std::size_t x = 0; x < resolution; ++x)
        for (std::size_t y = 0; y < resolution; ++y)
            for (std::size_t z = 0; z < resolution; ++z)
                out.occ[(x * resolution + y) * resolution + z] =
                    scene.inside(VoxelLabels::center(x, y, z, resolution)) ? 1 : 0;
    return out;
}

PointDataset voxel_dataset(const VoxelLabels& labels, std::size_t jitter, std::uint64_t seed) {
    const std::size_t r = labels.resolution;
    const double rd = static_cast<double>(r);
    const std::size_t per = std::max<std::size_t>(jitter, 1);
    SeededRng rng(SeededRng::derive(seed, 0x70c));
    PointDataset d;
    d.coords.reserve(labels.occ.size() * per);
    d.targets.reserve(labels.occ.size() * per);
    for (std::size_t x = 0; x < r; ++x)
        for (std::size_t y = 0; y < r; ++y)
            for (std::size_t z = 0; z < r; ++z) {
                const double y0 = labels.at(x, y, z);
                if (jitter == 0) {
                    const Vec3 p = VoxelLabels::center(x, y, z, r);
                    d.add(Coord(p[0], p[1], p[2]), y0);
                    continue;
                }
                for (std::size_t s = 0; s < jitter; ++s) {
                    d.add(Coord((static_cast<double>(x) + rng.uniform()) / rd, (static_cast<double>(y) + rng.uniform()) / rd,
                                (static_cast<double>(z) + rng.uniform()) / rd),
                          y0);
                }
            }
    return d;
}

Tensor project_voxels(const VoxelLabels& labels, const RaySet& rays) {
    const std::size_t w = rays.width, t = rays.samples_per_ray, r = labels.resolution;
    auto cell = [r](double x) { return std::min(static_cast<std::size_t>(x * static_cast<double>(r)), r - 1); };
    Tensor img = Tensor::matrix(w, w);
    for (std::size_t p = 0; p < w * w; ++p) {
        for (std::size_t k = 0; k < t; ++k) {
            const Coord& q = rays.samples[p * t + k];
            if (labels.at(cell(q.x[0]), cell(q.x[1]), cell(q.x[2]))) {
                img[p] = 1.0;
                break;
            }
        }
    }
    return img;
}

void check_video_spec(const VideoSpec& spec) {
    if (spec.frames < 3) throw Error("video needs at least 3 frames");
    if (spec.width < 2) throw Error("video width must be at least 2");
    if (!(spec.disk_radius > 0.0)) throw Error("disk radius must be positive");
    if (spec.disk_amplitude < 0.0 || spec.bar_amplitude < 0.0) throw Error("amplitudes must be nonnegative");
    if (spec.cycles < 0.0) throw Error("cycles must be nonnegative");
}

namespace {

struct VideoPhases {
    double a, b, c;
};

VideoPhases phases(const VideoSpec& spec) {
    SeededRng rng(SeededRng::derive(spec.seed, 0x71de0));
    const double two_pi = 2.0 * std::numbers::pi;
    const double a = rng.uniform(0.0, two_pi), b = rng.uniform(0.0, two_pi), c = rng.uniform(0.0, two_pi);
    return {a, b, c};
}

double clip_time(const VideoSpec& spec, std::size_t f) {
    return static_cast<double>(f) / static_cast<double>(spec.frames - 1);
}

}  // namespace

std::array<double, 2> disk_center(const VideoSpec& spec, std::size_t frame) {
    const auto ph = phases(spec);
    const double t = clip_time(spec, frame), two_pi = 2.0 * std::numbers::pi;
    const double w = spec.cycles * two_pi * t;
    return {0.5 + spec.disk_amplitude * std::sin(w + ph.a), 0.5 + spec.disk_amplitude * std::sin(2.0 * w + ph.b)};
}

Video make_video(const VideoSpec& spec) {
    check_video_spec(spec);
    const std::size_t w = spec.width, nf = spec.frames;
    const double wd = static_cast<double>(w), two_pi = 2.0 * std::numbers::pi;
    const auto ph = phases(spec);
    Video v;
    v.masks = Tensor({nf, w, w});
    for (std::size_t f = 0; f < nf; ++f) {
        const auto dc = disk_center(spec, f);
        const double bar_x = 0.5 + spec.bar_amplitude * std::sin(1.5 * spec.cycles * two_pi * clip_time(spec, f) + ph.c);
        for (std::size_t i = 0; i < w; ++i) {
            const double y = (static_cast<double>(i) + 0.5) / wd;
            for (std::size_t j = 0; j < w; ++j) {
                const double x = (static_cast<double>(j) + 0.5) / wd;
                const double dx = x - dc[0], dy = y - dc[1];
                const bool disk = dx * dx + dy * dy <= spec.disk_radius * spec.disk_radius;
                const bool bar = spec.bar && std::abs(x - bar_x) <= spec.bar_half_width && y >= 0.15 && y <= 0.85;
                v.masks[(f * w + i) * w + j] = disk || bar ? 1.0 : 0.0;
            }
        }
        (f % 3 == 0 ? v.test_frames : v.train_frames).push_back(f);
    }
    return v;
}

Coord video_coord(std::size_t row, std::size_t col, std::size_t frame, std::size_t width, std::size_t frames) {
    const double s = static_cast<double>(width - 1);
    return Coord(static_cast<double>(row) / s, static_cast<double>(col) / s,
                 static_cast<double>(frame) / static_cast<double>(frames - 1));
}

Tensor frame_of(const Tensor& video, std::size_t f) {
    if (video.rank() != 3 || f >= video.shape()[0]) throw Error("frame index out of range");
    const std::size_t h = video.shape()[1], w = video.shape()[2];
    Tensor out = Tensor::matrix(h, w);
    std::copy_n(video.data().begin() + static_cast<std::ptrdiff_t>(f * h * w), h * w, out.data().begin());
    return out;
}

}  // namespace gaplanes
