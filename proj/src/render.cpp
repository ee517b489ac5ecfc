#include "silpack/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <png.h>

namespace silpack {

namespace {

// Occupancy is tapered to exactly zero between kTaperStart and kTaperEnd
// (in units of tau), so samples beyond kTaperEnd * tau can be culled without
// making the render discontinuous in the poses.
constexpr double kTaperStart = 6.0;
constexpr double kTaperEnd = 8.0;
// Below this log transmittance a ray is opaque to double precision.
constexpr double kOpaqueLogTransmittance = -40.0;
constexpr int kRowsPerChunk = 4;

// log(1 - alpha) for alpha = sigmoid(-x) * taper(x), with its x-derivative.
struct SampleTerms {
    double log_transmittance = 0.0;
    double slope = 0.0;
};

SampleTerms sample_terms(double x) {
    const double e = std::exp(-std::abs(x));
    if (x <= kTaperStart) {
        const double l = std::log1p(e);
        if (x >= 0.0) return {-l, e / (1.0 + e)};
        return {x - l, 1.0 / (1.0 + e)};
    }
    // x > 0 here: sigmoid(-x) = e / (1 + e)
    const double s_neg = e / (1.0 + e);
    const double s_pos = 1.0 / (1.0 + e);
    const double t = (x - kTaperStart) / (kTaperEnd - kTaperStart);
    const double w = 1.0 - t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
    const double dw = -30.0 * t * t * (1.0 - t) * (1.0 - t) / (kTaperEnd - kTaperStart);
    const double alpha = s_neg * w;
    return {std::log1p(-alpha), (s_neg * s_pos * w - s_neg * dw) / (1.0 - alpha)};
}

struct Interval {
    int first = 0;
    int last = -1;
    bool empty() const { return last < first; }
};

// Samples j whose local point origin + z_j * dir lies inside `box`.
Interval clip_ray(const Vec3& origin, const Vec3& dir, const Aabb& box, const RenderParams& params) {
    double z0 = -params.ray_half_extent;
    double z1 = params.ray_half_extent;
    for (int a = 0; a < 3; ++a) {
        if (std::abs(dir[a]) < 1e-15) {
            if (origin[a] < box.min[a] || origin[a] > box.max[a]) return {};
            continue;
        }
        double t1 = (box.min[a] - origin[a]) / dir[a];
        double t2 = (box.max[a] - origin[a]) / dir[a];
        if (t1 > t2) std::swap(t1, t2);
        z0 = std::max(z0, t1);
        z1 = std::min(z1, t2);
    }
    if (z1 < z0) return {};
    const double step = params.step();
    Interval iv;
    iv.first = std::max(0, static_cast<int>(std::ceil((z0 + params.ray_half_extent) / step)));
    iv.last = std::min(params.samples_per_ray - 1, static_cast<int>(std::floor((z1 + params.ray_half_extent) / step)));
    return iv;
}

Aabb inflate(const Aabb& box, double margin) {
    return {box.min - Vec3::Constant(margin), box.max + Vec3::Constant(margin)};
}

// World-space ray through a pixel: point(z) = base + z * dir.
struct Ray {
    Vec3 base;
    Vec3 dir;
};

Ray pixel_ray(const ViewConfig& view, int row, int col) {
    const Eigen::Vector2d xy = view.pixel_center(row, col);
    const Vec3 cam(xy.x(), xy.y(), 0.0);
    return {view.rotation.transpose() * (cam - view.translation), view.direction()};
}

void validate_view(const ViewConfig& view, const RenderParams& params) {
    if (view.width <= 0 || view.height <= 0) throw ParameterError("view '" + view.name + "' has empty image size");
    if (!(params.tau > 0.0)) throw ParameterError("render tau must be positive");
    if (params.samples_per_ray < 2) throw ParameterError("render needs at least two samples per ray");
    if ((view.rotation.transpose() * view.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
        throw ParameterError("view '" + view.name + "' rotation is not orthonormal");
}

}  // namespace

ViewConfig make_view(const std::string& name, const Vec3& direction, const Vec3& up, const Vec3& center,
                     double footprint, int resolution) {
    const Vec3 d = direction.normalized();
    const Vec3 u = (up - up.dot(d) * d).normalized();
    const Vec3 r = u.cross(d);
    ViewConfig v;
    v.name = name;
    v.rotation.row(0) = r.transpose();
    v.rotation.row(1) = u.transpose();
    v.rotation.row(2) = d.transpose();
    v.translation = -v.rotation * center;
    v.width = resolution;
    v.height = resolution;
    v.footprint_width = footprint;
    v.footprint_height = footprint;
    return v;
}

// At least margin * extent, and snapped so the extent spans a whole number of
// pixels with the resolution's parity: a centred box then ends on pixel edges.
static double snapped_footprint(double extent, int resolution, double margin) {
    int span = static_cast<int>(std::floor(resolution / margin));
    if ((span - resolution) % 2 != 0) --span;
    if (span < 1) return margin * extent;
    return extent * resolution / span;
}

std::vector<ViewConfig> axis_views(const Aabb& box, int resolution, double margin) {
    const double fp = snapped_footprint(box.extents().maxCoeff(), resolution, margin);
    const Vec3 c = box.center();
    return {make_view("x", Vec3::UnitX(), Vec3::UnitZ(), c, fp, resolution),
            make_view("y", Vec3::UnitY(), Vec3::UnitZ(), c, fp, resolution),
            make_view("top", -Vec3::UnitZ(), Vec3::UnitY(), c, fp, resolution)};
}

std::vector<ViewConfig> five_views(const Aabb& box, int resolution, double margin) {
    const double fp = snapped_footprint(box.extents().maxCoeff(), resolution, margin);
    const Vec3 c = box.center();
    return {make_view("+x", Vec3::UnitX(), Vec3::UnitZ(), c, fp, resolution),
            make_view("-x", -Vec3::UnitX(), Vec3::UnitZ(), c, fp, resolution),
            make_view("+y", Vec3::UnitY(), Vec3::UnitZ(), c, fp, resolution),
            make_view("-y", -Vec3::UnitY(), Vec3::UnitZ(), c, fp, resolution),
            make_view("top", -Vec3::UnitZ(), Vec3::UnitY(), c, fp, resolution)};
}

RenderParams default_render_params(const Aabb& container, double spacing) {
    RenderParams p;
    p.tau = 0.5 * spacing;
    p.ray_half_extent = 0.5 * container.extents().norm() + 2.0 * spacing;
    p.samples_per_ray = static_cast<int>(std::ceil(2.0 * p.ray_half_extent / spacing)) + 1;
    return p;
}

Rendering render_silhouette(std::span<const WarpedField> fields, const ViewConfig& view, const RenderParams& params) {
    validate_view(view, params);
    const int width = view.width;
    const int height = view.height;
    const std::size_t n_pixels = static_cast<std::size_t>(width) * height;

    Rendering out;
    out.image = Image::Zero(height, width);
    out.transmittance = Eigen::ArrayXd::Ones(static_cast<Eigen::Index>(n_pixels));
    out.offsets.assign(n_pixels + 1, 0);
    if (fields.empty()) return out;

    const double step = params.step();
    // Interpolated values stay within one cell diagonal of the true distance.
    std::vector<Aabb> cull_boxes;
    cull_boxes.reserve(fields.size());
    for (const WarpedField& f : fields)
        cull_boxes.push_back(inflate(f.support(), kTaperEnd * params.tau + 2.0 * f.grid().spec.spacing));

    const std::size_t n_chunks = (static_cast<std::size_t>(height) + kRowsPerChunk - 1) / kRowsPerChunk;
    std::vector<std::vector<Rendering::Contribution>> chunk_contrib(n_chunks);

    parallel_chunks(n_chunks, [&](std::size_t chunk) {
        struct Active {
            std::uint32_t object;
            Interval range;
            Vec3 q0;
            Vec3 dq;
            // smallest S / tau seen so far, with its sample terms
            double x_min;
            double log_t;
            double slope;
            Vec3 gradient;
            Vec3 point;
        };
        std::vector<Active> active;
        active.reserve(fields.size());
        auto& contrib = chunk_contrib[chunk];
        const int row_end = std::min(height, static_cast<int>((chunk + 1) * kRowsPerChunk));

        for (int row = static_cast<int>(chunk * kRowsPerChunk); row < row_end; ++row) {
            for (int col = 0; col < width; ++col) {
                const std::size_t pix = static_cast<std::size_t>(row) * width + col;
                const Ray ray = pixel_ray(view, row, col);

                active.clear();
                int j_min = params.samples_per_ray;
                int j_max = -1;
                for (std::size_t i = 0; i < fields.size(); ++i) {
                    const PoseFrame& fr = fields[i].frame();
                    const Vec3 q0 = fr.to_local(ray.base);
                    const Vec3 dq = fr.rotation.transpose() * ray.dir;
                    const Interval iv = clip_ray(q0, dq, cull_boxes[i], params);
                    if (iv.empty()) continue;
                    active.push_back({static_cast<std::uint32_t>(i), iv, q0, dq, kTaperEnd, 0.0, 0.0, Vec3::Zero(),
                                      Vec3::Zero()});
                    j_min = std::min(j_min, iv.first);
                    j_max = std::max(j_max, iv.last);
                }

                double log_t = 0.0;
                for (int j = j_min; j <= j_max && log_t > kOpaqueLogTransmittance; ++j) {
                    const double z = -params.ray_half_extent + j * step;
                    for (Active& a : active) {
                        if (j < a.range.first || j > a.range.last) continue;
                        const Vec3 q = a.q0 + z * a.dq;
                        const FieldSample<double> s = sample_trilinear<double>(fields[a.object].grid(), q);
                        const double x = s.value / params.tau;
                        if (x >= a.x_min) continue;
                        const SampleTerms st = sample_terms(x);
                        log_t += st.log_transmittance - a.log_t;
                        a.x_min = x;
                        a.log_t = st.log_transmittance;
                        a.slope = st.slope;
                        a.gradient = s.gradient;
                        a.point = q;
                    }
                }

                const double t = std::exp(log_t);
                out.transmittance[static_cast<Eigen::Index>(pix)] = t;
                out.image(row, col) = 1.0 - t;
                for (const Active& a : active) {
                    if (a.slope == 0.0) continue;
                    const double w = a.slope / params.tau;
                    contrib.push_back({a.object, w * a.gradient, w * a.gradient.cross(a.point)});
                }
                // per-pixel count; converted to offsets below
                out.offsets[pix + 1] = static_cast<std::uint32_t>(contrib.size());
            }
        }
    });

    // Chunk-local running counts become global offsets.
    std::size_t base = 0;
    for (std::size_t chunk = 0; chunk < n_chunks; ++chunk) {
        const std::size_t first = chunk * kRowsPerChunk * static_cast<std::size_t>(width);
        const std::size_t last = std::min(n_pixels, (chunk + 1) * kRowsPerChunk * static_cast<std::size_t>(width));
        for (std::size_t pix = first; pix < last; ++pix) out.offsets[pix + 1] += static_cast<std::uint32_t>(base);
        base += chunk_contrib[chunk].size();
    }
    out.contributions.reserve(base);
    for (auto& c : chunk_contrib) out.contributions.insert(out.contributions.end(), c.begin(), c.end());
    return out;
}

Eigen::VectorXd render_backward(const Rendering& rendering, const Image& adjoint, std::span<const WarpedField> fields) {
    if (adjoint.rows() != rendering.image.rows() || adjoint.cols() != rendering.image.cols())
        throw DimensionError("adjoint image does not match rendering");
    std::vector<Vec3> grad_acc(fields.size(), Vec3::Zero());
    std::vector<Vec3> moment_acc(fields.size(), Vec3::Zero());
    const Eigen::Index width = adjoint.cols();
    const std::size_t n_pixels = static_cast<std::size_t>(adjoint.size());
    for (std::size_t pix = 0; pix < n_pixels; ++pix) {
        const double a = adjoint(static_cast<Eigen::Index>(pix) / width, static_cast<Eigen::Index>(pix) % width);
        if (a == 0.0) continue;
        // d pixel / dS = -T * alpha / tau
        const double coef = -a * rendering.transmittance[static_cast<Eigen::Index>(pix)];
        for (std::uint32_t c = rendering.offsets[pix]; c < rendering.offsets[pix + 1]; ++c) {
            const auto& con = rendering.contributions[c];
            grad_acc[con.object] += coef * con.grad_sum;
            moment_acc[con.object] += coef * con.moment_sum;
        }
    }
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(6 * fields.size()));
    for (std::size_t i = 0; i < fields.size(); ++i)
        grad.segment<6>(static_cast<Eigen::Index>(6 * i)) = fields[i].frame().local_field_gradient(grad_acc[i], moment_acc[i]);
    return grad;
}

Image render_hard(std::span<const WarpedField> fields, const ViewConfig& view, const RenderParams& params) {
    validate_view(view, params);
    Image img = Image::Zero(view.height, view.width);
    const double step = params.step();
    for (int row = 0; row < view.height; ++row) {
        for (int col = 0; col < view.width; ++col) {
            const Ray ray = pixel_ray(view, row, col);
            bool hit = false;
            for (std::size_t i = 0; i < fields.size() && !hit; ++i) {
                const PoseFrame& fr = fields[i].frame();
                // negative interpolated values stay within one cell diagonal of the support
                const Aabb box = inflate(fields[i].support(), std::sqrt(3.0) * fields[i].grid().spec.spacing);
                const Vec3 q0 = fr.to_local(ray.base);
                const Vec3 dq = fr.rotation.transpose() * ray.dir;
                const Interval iv = clip_ray(q0, dq, box, params);
                for (int j = iv.first; j <= iv.last && !hit; ++j) {
                    const double z = -params.ray_half_extent + j * step;
                    hit = sample_trilinear<double>(fields[i].grid(), Vec3(q0 + z * dq)).value < 0.0;
                }
            }
            img(row, col) = hit ? 1.0 : 0.0;
        }
    }
    return img;
}

Image render_hard(const ContainerSdf& sdf, const ViewConfig& view, const RenderParams& params) {
    validate_view(view, params);
    Image img = Image::Zero(view.height, view.width);
    const double step = params.step();
    for (int row = 0; row < view.height; ++row) {
        for (int col = 0; col < view.width; ++col) {
            const Ray ray = pixel_ray(view, row, col);
            bool hit = false;
            for (int j = 0; j < params.samples_per_ray && !hit; ++j) {
                const double z = -params.ray_half_extent + j * step;
                hit = sdf.evaluate(ray.base + z * ray.dir).value < 0.0;
            }
            img(row, col) = hit ? 1.0 : 0.0;
        }
    }
    return img;
}

Image project_mesh(const Mesh& mesh, const ViewConfig& view) {
    Image img = Image::Zero(view.height, view.width);
    const Eigen::Matrix3Xd cam = (view.rotation * mesh.vertices).colwise() + view.translation;
    const double px_w = view.footprint_width / view.width;
    const double px_h = view.footprint_height / view.height;
    for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
        const Eigen::Vector2d a = cam.col(mesh.faces(0, f)).head<2>();
        const Eigen::Vector2d b = cam.col(mesh.faces(1, f)).head<2>();
        const Eigen::Vector2d c = cam.col(mesh.faces(2, f)).head<2>();
        const auto cross = [](const Eigen::Vector2d& u, const Eigen::Vector2d& v) { return u.x() * v.y() - u.y() * v.x(); };
        const double area = cross(b - a, c - a);
        if (area == 0.0) continue;  // edge-on
        const Eigen::Vector2d lo = a.cwiseMin(b).cwiseMin(c);
        const Eigen::Vector2d hi = a.cwiseMax(b).cwiseMax(c);
        const int col0 = std::max(0, static_cast<int>(std::floor((lo.x() + 0.5 * view.footprint_width) / px_w - 0.5)));
        const int col1 = std::min(view.width - 1, static_cast<int>(std::ceil((hi.x() + 0.5 * view.footprint_width) / px_w - 0.5)));
        const int row0 = std::max(0, static_cast<int>(std::floor((0.5 * view.footprint_height - hi.y()) / px_h - 0.5)));
        const int row1 = std::min(view.height - 1, static_cast<int>(std::ceil((0.5 * view.footprint_height - lo.y()) / px_h - 0.5)));
        const double s = area > 0.0 ? 1.0 : -1.0;
        for (int row = row0; row <= row1; ++row) {
            for (int col = col0; col <= col1; ++col) {
                if (img(row, col) != 0.0) continue;
                const Eigen::Vector2d p = view.pixel_center(row, col);
                if (s * cross(b - a, p - a) >= 0.0 && s * cross(c - b, p - b) >= 0.0 && s * cross(a - c, p - c) >= 0.0)
                    img(row, col) = 1.0;
            }
        }
    }
    return img;
}

std::vector<Image> make_strip_targets(const Mesh& container, std::span<const ViewConfig> views, double height_fraction) {
    if (!(height_fraction > 0.0 && height_fraction <= 1.0))
        throw ParameterError("strip height fraction must lie in (0, 1], got " + std::to_string(height_fraction));
    const Aabb box = bounds(container);
    const double box_volume = box.extents().prod();
    if (std::abs(mesh_volume(container) - box_volume) > 1e-9 * box_volume)
        throw ParameterError("strip targets require an axis-aligned box container");

    std::vector<Image> targets;
    targets.reserve(views.size());
    for (const ViewConfig& view : views) {
        Image img = project_mesh(container, view);
        const bool side = std::abs(view.direction().z()) < 1e-9 && view.up().isApprox(Vec3::UnitZ(), 1e-9);
        if (side && height_fraction < 1.0) {
            int top = -1;
            int bottom = -1;
            for (int row = 0; row < img.rows(); ++row) {
                if (img.row(row).maxCoeff() > 0.0) {
                    if (top < 0) top = row;
                    bottom = row;
                }
            }
            if (top >= 0) {
                const int keep = static_cast<int>(std::lround(height_fraction * (bottom - top + 1)));
                for (int row = top; row <= bottom - keep; ++row) img.row(row).setZero();
            }
        }
        targets.push_back(std::move(img));
    }
    return targets;
}

Image threshold(const Image& img, double level) { return (img >= level).cast<double>(); }

double iou(const Image& a, const Image& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("iou of differently sized images");
    const auto fa = a >= 0.5;
    const auto fb = b >= 0.5;
    const double inter = (fa && fb).cast<double>().sum();
    const double uni = (fa || fb).cast<double>().sum();
    return uni == 0.0 ? 1.0 : inter / uni;
}

void save_png(const std::filesystem::path& path, const Image& img) {
    std::vector<png_byte> bytes(static_cast<std::size_t>(img.size()));
    for (Eigen::Index r = 0; r < img.rows(); ++r) {
        for (Eigen::Index c = 0; c < img.cols(); ++c) {
            const double v = std::clamp(img(r, c), 0.0, 1.0);
            bytes[static_cast<std::size_t>(r * img.cols() + c)] = static_cast<png_byte>(std::lround(v * 255.0));
        }
    }
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.cols());
    image.height = static_cast<png_uint_32>(img.rows());
    image.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, bytes.data(), 0, nullptr))
        throw InputError("cannot write PNG " + path.string() + ": " + image.message);
}

Image load_png(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw InputError("missing image file: " + path.string());
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str()))
        throw InputError("cannot read PNG " + path.string() + ": " + image.message);
    image.format = PNG_FORMAT_GRAY;
    std::vector<png_byte> bytes(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr))
        throw InputError("cannot decode PNG " + path.string() + ": " + image.message);
    Image img(static_cast<Eigen::Index>(image.height), static_cast<Eigen::Index>(image.width));
    for (Eigen::Index r = 0; r < img.rows(); ++r)
        for (Eigen::Index c = 0; c < img.cols(); ++c)
            img(r, c) = bytes[static_cast<std::size_t>(r * img.cols() + c)] / 255.0;
    return img;
}

Image load_target(const std::filesystem::path& path, int width, int height) {
    const Image raw = load_png(path);
    if (raw.cols() != width || raw.rows() != height) {
        throw DimensionError("target " + path.string() + " is " + std::to_string(raw.cols()) + "x" +
                             std::to_string(raw.rows()) + ", view expects " + std::to_string(width) + "x" +
                             std::to_string(height));
    }
    // 8-bit values >= 128
    return (raw * 255.0 >= 127.5).cast<double>();
}

}  // namespace silpack
