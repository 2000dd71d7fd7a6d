#include <gtest/gtest.h>

#include <cmath>

#include "gaplanes/geometry.hpp"
#include "test_util.hpp"

using namespace gaplanes;

namespace {

double total(const Tensor& t) {
    double s = 0;
    for (double v : t.vec()) s += v;
    return s;
}

Model constant_model(double value) {
    ModelSpec s;
    s.expr = "e123";
    s.grids = {GridSpec{"e123", {2, 2, 2}, 1, 1}};
    s.decoder = DecoderKind::linear;
    Model m(s);
    m.zero_trainable();
    auto p = m.flat_params();
    p.back() = value;
    m.set_flat_params(p);
    return m;
}

SceneSpec sphere_scene(double r) {
    SceneSpec s;
    s.primitives.emplace_back(Sphere{{0.5, 0.5, 0.5}, r});
    return s;
}

bool subset(const VoxelLabels& a, const VoxelLabels& b) {
    for (std::size_t i = 0; i < a.occ.size(); ++i)
        if (a.occ[i] && !b.occ[i]) return false;
    return true;
}

}  // namespace

TEST(Views, OrthonormalFrames) {
    for (const auto& v : default_views()) {
        auto d = [](const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; };
        EXPECT_NEAR(d(v.dir, v.dir), 1.0, 1e-15);
        EXPECT_NEAR(d(v.u, v.u), 1.0, 1e-15);
        EXPECT_NEAR(d(v.v, v.v), 1.0, 1e-15);
        EXPECT_NEAR(d(v.dir, v.u), 0.0, 1e-15);
        EXPECT_NEAR(d(v.dir, v.v), 0.0, 1e-15);
        EXPECT_NEAR(d(v.u, v.v), 0.0, 1e-15);
    }
    EXPECT_EQ(default_views().size(), 9u);
    EXPECT_EQ(seg3d_train_views().size() + seg3d_test_views().size(), 9u);
}

TEST(RenderMask, EmptyAndFull) {
    SceneSpec empty;
    for (const auto& v : default_views()) EXPECT_EQ(total(render_mask(empty, v, 16)), 0.0);
    SceneSpec full;
    full.primitives.emplace_back(Box{{0, 0, 0}, {1, 1, 1}});
    for (const auto& v : default_views()) EXPECT_EQ(total(render_mask(full, v, 16)), 256.0);
    SceneSpec out;
    out.primitives.emplace_back(Sphere{{0.9, 0.5, 0.5}, 0.3});
    EXPECT_THROW(render_mask(out, default_views()[0], 8), Error);
}

TEST(RenderMask, CenteredSphereIsAnalyticDisk) {
    const double r = 0.3;
    const std::size_t w = 64;
    for (const auto& v : {default_views()[0], default_views()[2], default_views()[8], default_views()[3]}) {
        const Tensor m = render_mask(sphere_scene(r), v, w);
        for (std::size_t i = 0; i < w; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                const double s = (j + 0.5) / w - 0.5, t = 0.5 - (i + 0.5) / w;
                const double dist = std::hypot(s, t);
                const bool disk = dist <= r;
                if (disk) {
                    EXPECT_EQ(m(i, j), 1.0);
                } else if (m(i, j) == 1.0) {
                    // Footprint coverage can only add the boundary ring.
                    EXPECT_LE(dist, r + std::sqrt(0.5) / w + 1e-12);
                }
            }
        }
    }
}

TEST(RenderMask, BoxMatchesIntervalsAndSamples) {
    SceneSpec s;
    s.primitives.emplace_back(Box{{0.2, 0.3, 0.4}, {0.6, 0.55, 0.9}});
    const std::size_t w = 32;
    // Axis view along +x: u = +y, v = +z.
    const Tensor m = render_mask(s, default_views()[0], w);
    for (std::size_t i = 0; i < w; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            const double y0 = static_cast<double>(j) / w, y1 = (j + 1.0) / w;
            const double z1 = 1.0 - static_cast<double>(i) / w, z0 = 1.0 - (i + 1.0) / w;
            const bool hit = y1 >= 0.3 && y0 <= 0.55 && z1 >= 0.4 && z0 <= 0.9;
            EXPECT_EQ(m(i, j), hit ? 1.0 : 0.0) << i << "," << j;
        }
    }
    // Oblique view: every sampled interior point lands on a lit pixel.
    const View v = default_views()[1];
    const Tensor mo = render_mask(s, v, w);
    SeededRng rng(1);
    Tensor hits = Tensor::matrix(w, w);
    for (int k = 0; k < 20000; ++k) {
        const Vec3 p{rng.uniform(0.2, 0.6), rng.uniform(0.3, 0.55), rng.uniform(0.4, 0.9)};
        std::size_t r = 0, c = 0;
        ASSERT_TRUE(project_point(v, w, p, r, c));
        EXPECT_EQ(mo(r, c), 1.0);
        hits(r, c) = 1.0;
    }
    EXPECT_LE(total(mo) - total(hits), 4.0 * w);
}

TEST(Rays, SamplesLieInCubeAndSpanChord) {
    for (const auto& v : default_views()) {
        const RaySet rs = make_rays(v, 8, 16);
        ASSERT_EQ(rs.samples.size(), 8u * 8 * 16);
        for (const auto& q : rs.samples) {
            EXPECT_FALSE(q.clamped);
            for (double x : q.x) {
                EXPECT_GE(x, 0.0);
                EXPECT_LE(x, 1.0);
            }
        }
    }
    const RaySet ax = make_rays(default_views()[0], 4, 4);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(ax.samples[k].x[0], (k + 0.5) / 4, 1e-15);
    EXPECT_THROW(make_rays(default_views()[0], 4, 1), Error);
}

TEST(Projection, ConstantAndHalfModels) {
    const RaySet rs = make_rays(default_views()[3], 8, 32);
    const Tensor img = project_mean_density(constant_model(1.0), rs);
    for (double v : img.vec()) EXPECT_NEAR(v, 1.0, 1e-15);

    ModelSpec s;
    s.expr = "e1";
    s.grids = {GridSpec{"e1", {2}, 1, 1}};
    s.interp = Interp::nearest;
    s.decoder = DecoderKind::linear;
    s.bias = false;
    Model half(s);
    half.set_flat_params(std::vector<double>{0.0, 1.0, 1.0});
    const Tensor h = project_mean_density(half, make_rays(default_views()[0], 8, 32));
    for (double v : h.vec()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(Projection, MatchesLoopOracleAndIsLinear) {
    ModelSpec s;
    s.grids = grids_for(expr_from_name(s.expr), {2, 2, 2}, {4, 4, 3});
    s.mode = Mode::convex;
    s.decoder = DecoderKind::fused;
    s.gate_seed = 5;
    s.seed = 1;
    Model a(s);
    s.seed = 2;
    Model b(s);
    const RaySet rs = make_rays(default_views()[1], 6, 8);
    const Tensor pa = project_mean_density(a, rs), pb = project_mean_density(b, rs);
    for (std::size_t p = 0; p < 36; ++p) {
        double sum = 0;
        for (std::size_t k = 0; k < 8; ++k) sum += a.predict(rs.samples[p * 8 + k]);
        EXPECT_NEAR(pa[p], sum / 8, 1e-12);
    }
    auto pa_flat = a.flat_params();
    const auto pb_flat = b.flat_params();
    for (std::size_t i = 0; i < pa_flat.size(); ++i) pa_flat[i] += pb_flat[i];
    Model c = a;
    c.set_flat_params(pa_flat);
    EXPECT_LT(testutil::frob_diff(project_mean_density(c, rs), pa + pb), 1e-12);
    EXPECT_EQ(project_mean_density(c, rs, 3), project_mean_density(c, rs, 1));
}

TEST(Rays, JitterStaysInSegment) {
    const View v = default_views()[0];
    const RaySet a = make_rays(v, 4, 8, 7), b = make_rays(v, 4, 8, 7), c = make_rays(v, 4, 8, 8);
    bool moved = false, differs = false;
    for (std::size_t r = 0; r < a.rays(); ++r) {
        for (std::size_t k = 0; k < 8; ++k) {
            const double x = a.samples[r * 8 + k].x[0];
            EXPECT_GE(x, k / 8.0);
            EXPECT_LE(x, (k + 1) / 8.0);
            EXPECT_EQ(x, b.samples[r * 8 + k].x[0]);
            moved = moved || std::abs(x - (k + 0.5) / 8.0) > 1e-9;
            differs = differs || x != c.samples[r * 8 + k].x[0];
        }
    }
    EXPECT_TRUE(moved);
    EXPECT_TRUE(differs);
}

TEST(Carve, JitteredVoxelPointsKeepTheirLabel) {
    const VoxelLabels hull = voxelize(sphere_scene(0.3), 8);
    const PointDataset centers = voxel_dataset(hull);
    ASSERT_EQ(centers.size(), 512u);
    const PointDataset d = voxel_dataset(hull, 3, 11);
    ASSERT_EQ(d.size(), 3u * 512u);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const Coord& q = d.coords[i];
        std::size_t cell[3];
        for (int a = 0; a < 3; ++a) cell[a] = std::min<std::size_t>(7, static_cast<std::size_t>(q.x[a] * 8.0));
        EXPECT_EQ(d.targets[i], hull.at(cell[0], cell[1], cell[2]));
        EXPECT_EQ(d.targets[i], centers.targets[i / 3]);
    }
}

TEST(Carve, FullAndEmptyMasks) {
    const auto views = default_views();
    std::vector<Tensor> masks(views.size(), Tensor({8, 8}, 1.0));
    EXPECT_EQ(space_carve(masks, views, 10).count(), 1000u);
    masks[4].fill(0.0);
    EXPECT_EQ(space_carve(masks, views, 10).count(), 0u);
    EXPECT_THROW(space_carve({}, {}, 4), Error);
}

TEST(Carve, SteinmetzSolidOracle) {
    const double r = 0.3;
    const std::size_t w = 64, res = 64;
    const auto all = default_views();
    const std::vector<View> views{all[0], all[2], all[8]};
    std::vector<Tensor> masks;
    for (const auto& v : views) masks.push_back(render_mask(sphere_scene(r), v, w));
    const VoxelLabels hull = space_carve(masks, views, res);
    // Brute force: a voxel survives when, for each axis pair, the pixel cell
    // holding its center meets the disk of radius r.
    auto cell_meets = [&](double a, double b) {
        const double a0 = std::floor(a * w) / w, b0 = std::floor(b * w) / w;
        const double da = 0.5 - std::clamp(0.5, a0, a0 + 1.0 / w), db = 0.5 - std::clamp(0.5, b0, b0 + 1.0 / w);
        return da * da + db * db <= r * r;
    };
    std::size_t agree = 0;
    for (std::size_t x = 0; x < res; ++x)
        for (std::size_t y = 0; y < res; ++y)
            for (std::size_t z = 0; z < res; ++z) {
                const Vec3 p = VoxelLabels::center(x, y, z, res);
                const bool in = cell_meets(p[1], p[2]) && cell_meets(p[0], p[2]) && cell_meets(p[0], p[1]);
                agree += (hull.at(x, y, z) != 0) == in;
            }
    EXPECT_EQ(agree, res * res * res);
    // Tricylinder volume (16 - 8 sqrt 2) r^3, bracketed by the pixel dilation of r.
    const double vol = static_cast<double>(hull.count()) / (res * res * res);
    auto tri = [](double x) { return (16.0 - 8.0 * std::sqrt(2.0)) * x * x * x; };
    EXPECT_GT(vol, tri(r));
    EXPECT_LT(vol, tri(r + std::sqrt(0.5) / w));
}

TEST(Carve, ConservativeAndMonotone) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const SceneSpec scene = default_scene(seed);
        const auto views = default_views();
        std::vector<Tensor> masks;
        for (const auto& v : views) masks.push_back(render_mask(scene, v, 64));
        const VoxelLabels truth = voxelize(scene, 64);
        EXPECT_GT(truth.count(), 0u);
        VoxelLabels prev;
        for (std::size_t n = 1; n <= views.size(); ++n) {
            const std::vector<View> vs(views.begin(), views.begin() + static_cast<std::ptrdiff_t>(n));
            const std::vector<Tensor> ms(masks.begin(), masks.begin() + static_cast<std::ptrdiff_t>(n));
            const VoxelLabels hull = space_carve(ms, vs, 64);
            EXPECT_TRUE(subset(truth, hull)) << "seed " << seed << " views " << n;
            if (n > 1) {
                EXPECT_TRUE(subset(hull, prev));
            }
            prev = hull;
        }
    }
}

TEST(Carve, VoxelProjectionOfHullCoversMask) {
    const SceneSpec scene = default_scene(4);
    const auto train = seg3d_train_views();
    std::vector<Tensor> masks;
    for (const auto& v : train) masks.push_back(render_mask(scene, v, 32));
    const VoxelLabels hull = space_carve(masks, train, 32);
    const Tensor proj = project_voxels(hull, make_rays(train[0], 32, 64));
    double inter = 0, uni = 0;
    for (std::size_t i = 0; i < proj.size(); ++i) {
        inter += proj[i] * masks[0][i];
        uni += std::max(proj[i], masks[0][i]);
    }
    EXPECT_GT(inter / uni, 0.85);
    const PointDataset d = voxel_dataset(hull);
    EXPECT_EQ(d.size(), 32u * 32 * 32);
}

TEST(Video, SplitAndStatic) {
    VideoSpec s;
    s.frames = 9;
    s.width = 16;
    const Video v = make_video(s);
    EXPECT_EQ(v.test_frames, (std::vector<std::size_t>{0, 3, 6}));
    EXPECT_EQ(v.train_frames, (std::vector<std::size_t>{1, 2, 4, 5, 7, 8}));
    s.disk_amplitude = 0.0;
    s.bar_amplitude = 0.0;
    const Video st = make_video(s);
    for (std::size_t f = 1; f < 9; ++f) EXPECT_EQ(frame_of(st.masks, f), frame_of(st.masks, 0));
    s.frames = 2;
    EXPECT_THROW(make_video(s), Error);
}

TEST(Video, MovingDiskMatchesTrajectory) {
    VideoSpec s;
    s.bar = false;
    s.seed = 3;
    const Video v = make_video(s);
    const double w = 64.0;
    for (std::size_t f = 0; f < s.frames; f += 7) {
        const auto c = disk_center(s, f);
        const Tensor m = frame_of(v.masks, f);
        double sx = 0, sy = 0, n = 0;
        for (std::size_t i = 0; i < 64; ++i) {
            for (std::size_t j = 0; j < 64; ++j) {
                const double dist = std::hypot((j + 0.5) / w - c[0], (i + 0.5) / w - c[1]);
                if (std::abs(dist - s.disk_radius) > 1.0 / w) {
                    EXPECT_EQ(m(i, j), dist < s.disk_radius ? 1.0 : 0.0);
                }
                if (m(i, j) > 0) {
                    sx += (j + 0.5) / w;
                    sy += (i + 0.5) / w;
                    n += 1;
                }
            }
        }
        EXPECT_NEAR(sx / n, c[0], 0.5 / w);
        EXPECT_NEAR(sy / n, c[1], 0.5 / w);
    }
    const Coord q = video_coord(63, 0, 89, 64, 90);
    EXPECT_EQ(q.x[0], 1.0);
    EXPECT_EQ(q.x[1], 0.0);
    EXPECT_EQ(q.x[2], 1.0);
}
