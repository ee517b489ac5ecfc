#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "silpack/common.hpp"
#include "silpack/field.hpp"
#include "silpack/geometry.hpp"

namespace silpack {

// Row-major grayscale image, rows = height. 1.0 marks foreground (shadow).
using Image = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Orthographic camera. Camera coordinates are rotation * p + translation;
// x runs to the image right, y up, and rays travel along +z. The image
// plane covers footprint_width x footprint_height centred on the camera axis.
struct ViewConfig {
    std::string name;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    int width = 64;
    int height = 64;
    double footprint_width = 1.0;
    double footprint_height = 1.0;

    Vec3 direction() const { return rotation.row(2).transpose(); }
    Vec3 up() const { return rotation.row(1).transpose(); }
    // Camera-plane coordinates of a pixel centre.
    Eigen::Vector2d pixel_center(int row, int col) const {
        return {(col + 0.5) / width * footprint_width - 0.5 * footprint_width,
                0.5 * footprint_height - (row + 0.5) / height * footprint_height};
    }
};

struct RenderParams {
    double tau = 0.01;
    int samples_per_ray = 64;
    // Rays span camera depth [-ray_half_extent, ray_half_extent].
    double ray_half_extent = 1.0;

    double step() const { return 2.0 * ray_half_extent / (samples_per_ray - 1); }
};

// Camera looking along `direction` with `up` as the image vertical, centred on
// `center`.
ViewConfig make_view(const std::string& name, const Vec3& direction, const Vec3& up, const Vec3& center,
                     double footprint, int resolution);

// Preset footprints are at least margin * max extent, enlarged slightly so the
// max extent covers a whole number of pixels.

// Views along +x, +y (up = +z) and straight down (up = +y).
std::vector<ViewConfig> axis_views(const Aabb& box, int resolution, double margin = 1.2);
// Four horizontal side views plus the top view.
std::vector<ViewConfig> five_views(const Aabb& box, int resolution, double margin = 1.2);

// tau = spacing / 2, sample step = spacing, rays covering the box.
RenderParams default_render_params(const Aabb& container, double spacing);

// Per-pixel derivative data recorded during the forward pass.
struct Rendering {
    struct Contribution {
        std::uint32_t object = 0;
        // w * grad and w * (grad x local) at the object's minimizing sample,
        // w = d log(1 - alpha) / dS
        Vec3 grad_sum = Vec3::Zero();
        Vec3 moment_sum = Vec3::Zero();
    };

    Image image;
    Eigen::ArrayXd transmittance;
    std::vector<std::uint32_t> offsets;
    std::vector<Contribution> contributions;
};

// Soft silhouette: along each pixel ray, object i has occupancy
// alpha_i = sigmoid(-m_i / tau) where m_i is its smallest sampled S, and
// pixel = 1 - prod_i(1 - alpha_i). alpha is smoothly tapered to zero for S
// between 6 tau and 8 tau.
Rendering render_silhouette(std::span<const WarpedField> fields, const ViewConfig& view, const RenderParams& params);

// Pose gradient (6 per field) of sum(adjoint * pixel).
Eigen::VectorXd render_backward(const Rendering& rendering, const Image& adjoint, std::span<const WarpedField> fields);

// Pixel is 1 when any ray sample lies strictly inside any field.
Image render_hard(std::span<const WarpedField> fields, const ViewConfig& view, const RenderParams& params);
Image render_hard(const ContainerSdf& sdf, const ViewConfig& view, const RenderParams& params);

// Exact orthographic projection of a triangle mesh: pixel is 1 when its
// centre ray hits any triangle.
Image project_mesh(const Mesh& mesh, const ViewConfig& view);

// Container silhouettes clipped to the bottom `height_fraction` of their
// projected height on side views (up = +z, horizontal direction). Other
// views keep the full silhouette.
std::vector<Image> make_strip_targets(const Mesh& container, std::span<const ViewConfig> views, double height_fraction);

Image threshold(const Image& img, double level = 0.5);
double iou(const Image& a, const Image& b);

// 8-bit grayscale PNG I/O. Values are clamped to [0, 1].
void save_png(const std::filesystem::path& path, const Image& img);
Image load_png(const std::filesystem::path& path);
// Binary target: pixels >= 128 become 1. Throws DimensionError on size mismatch.
Image load_target(const std::filesystem::path& path, int width, int height);

}  // namespace silpack
