#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gaplanes/model.hpp"
#include "gaplanes/training.hpp"

namespace gaplanes {

using Vec3 = std::array<double, 3>;

struct Sphere {
    Vec3 center{};
    double radius = 0.0;
};

struct Box {
    Vec3 lo{};
    Vec3 hi{};
};

using Primitive = std::variant<Sphere, Box>;

struct SceneSpec {
    std::vector<Primitive> primitives;
    std::uint64_t seed = 0;

    bool inside(const Vec3& p) const;
};

/// Throws unless every primitive lies in the unit cube.
void check_scene(const SceneSpec& scene);

/// Three spheres and one box, placed from the seed.
SceneSpec default_scene(std::uint64_t seed);

/// Orthographic camera. The image plane has side 1 and is centered on the
/// cube center; pixel (i, j) sits at center + s u + t v with
/// s = (j + 0.5)/w - 0.5 and t = 0.5 - (i + 0.5)/w.
struct View {
    int id = 0;
    std::string name;
    Vec3 dir{};  // unit viewing direction
    Vec3 u{};    // image right
    Vec3 v{};    // image up
};

/// Horizontal view at azimuth deg (0 looks along +x).
View azimuth_view(int id, double deg);
View top_view(int id);

/// Eight azimuths at 45 degree spacing followed by the top-down view.
std::vector<View> default_views();

/// Held-out views for seg3d evaluation (azimuths 45 and 225) and the rest.
std::vector<View> seg3d_train_views();
std::vector<View> seg3d_test_views();

struct RaySet {
    View view;
    std::size_t width = 0;
    std::size_t samples_per_ray = 0;
    std::vector<Coord> samples;  // pixel-major (row, column), samples_per_ray each

    std::size_t rays() const { return width * width; }
};

/// T samples per pixel ray inside the unit cube, one in each of T equal
/// segments of the ray-cube chord: the midpoint, or a uniform point of the
/// segment when a jitter seed is given. Rays that miss the cube get T copies
/// of their closest cube point.
RaySet make_rays(const View& view, std::size_t width, std::size_t samples_per_ray,
                 std::optional<std::uint64_t> jitter_seed = std::nullopt);

/// Binary w x w mask: a pixel is 1 when its square footprint meets the
/// projection of any primitive.
Tensor render_mask(const SceneSpec& scene, const View& view, std::size_t width);

enum class RayReduce { mean, max };

/// Per-pixel mean (or max) of the model over each ray's samples.
Tensor project_density(const Model& m, const RaySet& rays, RayReduce reduce = RayReduce::mean, int threads = 1);
inline Tensor project_mean_density(const Model& m, const RaySet& rays, int threads = 1) {
    return project_density(m, rays, RayReduce::mean, threads);
}

/// Ray dataset with mask pixels as targets.
RayDataset ray_dataset(const std::vector<RaySet>& rays, const std::vector<Tensor>& masks);

/// R^3 occupancy, index (x * R + y) * R + z, voxel centers at (i + 0.5)/R.
struct VoxelLabels {
    std::size_t resolution = 0;
    std::vector<std::uint8_t> occ;

    std::uint8_t at(std::size_t x, std::size_t y, std::size_t z) const {
        return occ[(x * resolution + y) * resolution + z];
    }
    std::size_t count() const;
    static Vec3 center(std::size_t i, std::size_t j, std::size_t k, std::size_t r);
};

/// Pixel (row, column) of a point in a view, or false when it falls off the image.
bool project_point(const View& view, std::size_t width, const Vec3& p, std::size_t& row, std::size_t& col);

/// Visual hull: a voxel stays occupied unless its center projects onto a zero
/// pixel of some mask. Centers that fall outside an image are not carved by it.
VoxelLabels space_carve(const std::vector<Tensor>& masks, const std::vector<View>& views, std::size_t resolution);

/// Occupancy of voxel centers in the scene.
VoxelLabels voxelize(const SceneSpec& scene, std::size_t resolution);

/// Point samples with occupancy targets: voxel centers when jitter is 0,
/// otherwise jitter uniform points inside each voxel cell.
PointDataset voxel_dataset(const VoxelLabels& labels, std::size_t jitter = 0, std::uint64_t seed = 0);

/// Max of the voxel labels (nearest voxel) over each ray's samples.
Tensor project_voxels(const VoxelLabels& labels, const RaySet& rays);

struct VideoSpec {
    std::size_t frames = 90;
    std::size_t width = 64;
    std::uint64_t seed = 0;
    double disk_radius = 0.2;
    double disk_amplitude = 0.25;  // Lissajous half-extent; 0 makes the disk static
    double bar_amplitude = 0.25;   // bar sway; 0 makes it static
    bool bar = true;
    double bar_half_width = 0.08;
    double cycles = 0.5;  // base motion periods over the clip; scales every frequency
};

struct Video {
    Tensor masks;  // frames x width x width
    std::vector<std::size_t> train_frames;
    std::vector<std::size_t> test_frames;  // index % 3 == 0
};

void check_video_spec(const VideoSpec& spec);

/// Disk center at frame f (normalized image coordinates: x = column, y = row).
std::array<double, 2> disk_center(const VideoSpec& spec, std::size_t frame);

Video make_video(const VideoSpec& spec);

/// Model coordinate of video pixel (row, column, frame).
Coord video_coord(std::size_t row, std::size_t col, std::size_t frame, std::size_t width, std::size_t frames);

/// Frame f of a frames x w x w tensor as a w x w matrix.
Tensor frame_of(const Tensor& video, std::size_t f);

}  // namespace gaplanes
