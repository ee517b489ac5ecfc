#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "silpack/render.hpp"

using namespace silpack;

namespace {

struct Body {
    Mesh mesh;
    SdfGrid grid;
    Aabb support;
};

Body make_body(const Mesh& mesh, int dims) {
    return {mesh, bake_sdf(mesh, cubic_grid_spec(bounds(mesh), dims, 2)), bounds(mesh)};
}

const Body& unit_cube() {
    static const Body body = make_body(make_box_mesh(Vec3::Constant(-0.5), Vec3::Constant(0.5)), 33);
    return body;
}

const Body& small_box() {
    static const Body body = make_body(make_box_mesh(Vec3(-0.3, -0.2, -0.15), Vec3(0.3, 0.2, 0.15)), 33);
    return body;
}

RenderParams params_for(double spacing, double half_extent) {
    RenderParams p;
    p.tau = 0.5 * spacing;
    p.ray_half_extent = half_extent;
    p.samples_per_ray = static_cast<int>(std::ceil(2.0 * half_extent / spacing)) + 1;
    return p;
}

RigidPosed random_pose(std::mt19937_64& rng, double shift) {
    RigidPosed pose;
    pose.angles = oracle::random_point(rng, Vec3::Constant(-3), Vec3::Constant(3));
    pose.translation = oracle::random_point(rng, Vec3::Constant(-shift), Vec3::Constant(shift));
    return pose;
}

std::filesystem::path temp_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "silpack_render_test";
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("empty field list renders an empty image") {
    const ViewConfig view = make_view("front", Vec3::UnitX(), Vec3::UnitZ(), Vec3::Zero(), 2.0, 16);
    const Rendering r = render_silhouette({}, view, params_for(0.05, 1.0));
    CHECK(r.image.rows() == 16);
    CHECK(r.image.cols() == 16);
    CHECK(r.image.abs().maxCoeff() == 0.0);
}

TEST_CASE("unit cube front view is a centred 32 pixel square") {
    const Body& cube = unit_cube();
    const std::vector<WarpedField> fields{WarpedField(cube.grid, RigidPosed::identity(), cube.support)};
    const ViewConfig view = make_view("front", Vec3::UnitY(), Vec3::UnitZ(), Vec3::Zero(), 2.0, 64);
    const Image img = threshold(render_silhouette(fields, view, params_for(cube.grid.spec.spacing, 1.5)).image);
    int rmin = 64, rmax = -1, cmin = 64, cmax = -1;
    for (int r = 0; r < 64; ++r) {
        for (int c = 0; c < 64; ++c) {
            if (img(r, c) == 0.0) continue;
            rmin = std::min(rmin, r);
            rmax = std::max(rmax, r);
            cmin = std::min(cmin, c);
            cmax = std::max(cmax, c);
        }
    }
    CHECK(std::abs(rmax - rmin + 1 - 32) <= 1);
    CHECK(std::abs(cmax - cmin + 1 - 32) <= 1);
    CHECK(std::abs((rmin + rmax) - 63) <= 1);
    CHECK(std::abs((cmin + cmax) - 63) <= 1);
    CHECK(img.sum() == (rmax - rmin + 1) * (cmax - cmin + 1));
}

TEST_CASE("pixels stay in [0,1] and adding an object never darkens a pixel") {
    std::mt19937_64 rng(1);
    const Body& box = small_box();
    const ViewConfig view = make_view("v", Vec3(1, 2, -0.5), Vec3::UnitZ(), Vec3::Zero(), 2.0, 32);
    const RenderParams params = params_for(box.grid.spec.spacing, 1.5);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<WarpedField> fields;
        Image previous = Image::Zero(32, 32);
        for (int n = 0; n < 4; ++n) {
            fields.emplace_back(box.grid, random_pose(rng, 0.5), box.support);
            const Image img = render_silhouette(fields, view, params).image;
            CHECK(img.minCoeff() >= 0.0);
            CHECK(img.maxCoeff() <= 1.0);
            CHECK((img - previous).minCoeff() >= -1e-15);
            previous = img;
        }
    }
}

TEST_CASE("moving objects and camera together leaves the image unchanged") {
    std::mt19937_64 rng(2);
    const Body& box = small_box();
    const RenderParams params = params_for(box.grid.spec.spacing, 1.5);
    std::vector<RigidPosed> poses{random_pose(rng, 0.4), random_pose(rng, 0.4), random_pose(rng, 0.4)};
    const Vec3 offset(0.37, -1.21, 0.6);
    std::vector<WarpedField> here, there;
    for (const RigidPosed& p : poses) {
        here.emplace_back(box.grid, p, box.support);
        RigidPosed q = p;
        q.translation += offset;
        there.emplace_back(box.grid, q, box.support);
    }
    const Vec3 dir(0.3, 1.0, -0.4);
    const Image a = render_silhouette(here, make_view("a", dir, Vec3::UnitZ(), Vec3::Zero(), 2.0, 32), params).image;
    const Image b = render_silhouette(there, make_view("b", dir, Vec3::UnitZ(), offset, 2.0, 32), params).image;
    CHECK((a - b).abs().maxCoeff() < 1e-9);
}

TEST_CASE("small tau converges to the union of hard projections") {
    std::mt19937_64 rng(3);
    const Body& box = small_box();
    RenderParams params = params_for(box.grid.spec.spacing, 1.5);
    params.tau = box.grid.spec.spacing / 10.0;
    const ViewConfig view = make_view("v", Vec3(0.2, 1.0, 0.1), Vec3::UnitZ(), Vec3::Zero(), 2.4, 64);
    for (int trial = 0; trial < 3; ++trial) {
        std::vector<WarpedField> fields;
        Image hard = Image::Zero(64, 64);
        for (int n = 0; n < 3; ++n) {
            const RigidPosed p = random_pose(rng, 0.5);
            fields.emplace_back(box.grid, p, box.support);
            hard = hard.max(project_mesh(oracle::moved(box.mesh, rotation_matrix(p), p.translation), view));
        }
        const Image soft = threshold(render_silhouette(fields, view, params).image);
        CHECK((soft - hard).abs().sum() / static_cast<double>(hard.size()) < 0.01);
    }
}

TEST_CASE("an opaque front object hides whatever lies behind it") {
    const Body& cube = unit_cube();
    const ViewConfig view = make_view("front", Vec3::UnitY(), Vec3::UnitZ(), Vec3::Zero(), 2.0, 32);
    const RenderParams params = params_for(cube.grid.spec.spacing, 2.5);
    RigidPosed back;
    back.translation = Vec3(0, 1.5, 0);
    const std::vector<WarpedField> one{WarpedField(cube.grid, RigidPosed::identity(), cube.support)};
    const std::vector<WarpedField> two{one[0], WarpedField(cube.grid, back, cube.support)};
    const Image a = render_silhouette(one, view, params).image;
    const Image b = render_silhouette(two, view, params).image;
    // saturated pixels only
    for (Eigen::Index n = 0; n < a.size(); ++n) {
        if (a(n / 32, n % 32) > 1.0 - 1e-9) CHECK(std::abs(b(n / 32, n % 32) - a(n / 32, n % 32)) < 1e-6);
    }
}

TEST_CASE("render gradient of the pixel sum matches finite differences") {
    std::mt19937_64 rng(4);
    const Body& box = small_box();
    const RenderParams params = params_for(box.grid.spec.spacing, 1.5);
    const ViewConfig view = make_view("v", Vec3(0.4, 1.0, -0.3), Vec3::UnitZ(), Vec3::Zero(), 2.0, 24);
    for (int scene = 0; scene < 20; ++scene) {
        const int n = 2 + scene % 4;
        std::vector<RigidPosed> poses;
        for (int i = 0; i < n; ++i) poses.push_back(random_pose(rng, 0.4));
        const auto fields_for = [&](const Eigen::VectorXd& x) {
            std::vector<WarpedField> f;
            for (int i = 0; i < n; ++i)
                f.emplace_back(box.grid, RigidPosed::from_vector(x.segment<6>(6 * i)), box.support);
            return f;
        };
        Eigen::VectorXd x(6 * n);
        for (int i = 0; i < n; ++i) x.segment<6>(6 * i) = poses[static_cast<std::size_t>(i)].to_vector();
        const auto fields = fields_for(x);
        const Rendering r = render_silhouette(fields, view, params);
        const Eigen::VectorXd grad = render_backward(r, Image::Ones(24, 24), fields);
        const auto f = [&](const Eigen::VectorXd& y) { return render_silhouette(fields_for(y), view, params).image.sum(); };
        const Eigen::VectorXd fd = oracle::central_difference(f, x, 1e-7);
        CHECK(oracle::relative_error(grad, fd) < 1e-4);
    }
}

TEST_CASE("hard render of a box container") {
    const BoxContainerSdf box(Vec3::Zero(), Vec3(0.5, 0.5, 0.25));
    const ViewConfig view = make_view("front", Vec3::UnitY(), Vec3::UnitZ(), Vec3::Zero(), 2.0, 32);
    const Image img = render_hard(box, view, params_for(0.05, 1.0));
    CHECK(img.sum() == 16 * 8);
    const Mesh mesh = make_box_mesh(Vec3(-0.5, -0.5, -0.25), Vec3(0.5, 0.5, 0.25));
    CHECK(iou(img, project_mesh(mesh, view)) == 1.0);
}

TEST_CASE("project_mesh of a cube fills the expected pixels") {
    const Mesh cube = make_box_mesh(Vec3::Constant(-0.5), Vec3::Constant(0.5));
    const ViewConfig view = make_view("top", -Vec3::UnitZ(), Vec3::UnitY(), Vec3::Zero(), 2.0, 64);
    const Image img = project_mesh(cube, view);
    CHECK(img.sum() == 32 * 32);
    CHECK(img.block(16, 16, 32, 32).minCoeff() == 1.0);
}

TEST_CASE("view presets") {
    const Aabb box{Vec3(-1, -2, 0), Vec3(1, 2, 1)};
    const auto three = axis_views(box, 48, 1.25);
    REQUIRE(three.size() == 3);
    // 48 / 1.25 = 38.4 pixels, snapped down to 38 across the 4 unit extent
    CHECK(three[0].footprint_width == doctest::Approx(48.0 * 4.0 / 38.0));
    CHECK((three[2].direction() - Vec3(0, 0, -1)).norm() < 1e-15);
    const auto five = five_views(box, 48);
    REQUIRE(five.size() == 5);
    for (const ViewConfig& v : five) {
        CHECK((v.rotation * v.rotation.transpose() - Mat3::Identity()).norm() < 1e-12);
        CHECK(v.rotation.determinant() == doctest::Approx(1.0));
        // camera origin is the box centre
        CHECK((v.rotation.transpose() * -v.translation - box.center()).norm() < 1e-12);
    }
    const RenderParams p = default_render_params(box, 0.1);
    CHECK(p.tau == 0.05);
    CHECK(p.step() <= 0.1);
    CHECK(p.step() > 0.099);
    CHECK(p.ray_half_extent >= 0.5 * box.extents().norm());
}

TEST_CASE("strip targets keep the bottom rows of side views") {
    const Mesh container = make_box_mesh(Vec3::Constant(-1), Vec3::Constant(1));
    const auto views = axis_views(bounds(container), 64, 1.0);
    SUBCASE("full height") {
        const auto targets = make_strip_targets(container, views, 1.0);
        for (const Image& t : targets) CHECK(t.sum() == 64 * 64);
    }
    SUBCASE("half height") {
        const auto targets = make_strip_targets(container, views, 0.5);
        for (int k = 0; k < 2; ++k) {
            CHECK(targets[static_cast<std::size_t>(k)].topRows(32).sum() == 0.0);
            CHECK(targets[static_cast<std::size_t>(k)].bottomRows(32).minCoeff() == 1.0);
        }
        CHECK(targets[2].sum() == 64 * 64);
    }
    SUBCASE("invalid fraction") {
        CHECK_THROWS_AS(make_strip_targets(container, views, 0.0), ParameterError);
        CHECK_THROWS_AS(make_strip_targets(container, views, 1.5), ParameterError);
    }
}

TEST_CASE("load_target thresholds 8-bit PNGs") {
    const auto dir = temp_dir();
    Image white = Image::Ones(8, 6);
    Image black = Image::Zero(8, 6);
    Image checker(8, 6);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 6; ++c) checker(r, c) = (r + c) % 2 ? 0.9 : 0.1;
    save_png(dir / "white.png", white);
    save_png(dir / "black.png", black);
    save_png(dir / "checker.png", checker);
    CHECK(load_target(dir / "white.png", 6, 8).minCoeff() == 1.0);
    CHECK(load_target(dir / "black.png", 6, 8).maxCoeff() == 0.0);
    const Image loaded = load_target(dir / "checker.png", 6, 8);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 6; ++c) CHECK(loaded(r, c) == ((r + c) % 2 ? 1.0 : 0.0));
    CHECK_THROWS_AS(load_target(dir / "white.png", 8, 8), DimensionError);
    CHECK_THROWS_AS(load_target(dir / "absent.png", 6, 8), InputError);

    Image grey(1, 2);
    grey << 127.0 / 255.0, 128.0 / 255.0;
    save_png(dir / "edge.png", grey);
    const Image edge = load_target(dir / "edge.png", 2, 1);
    CHECK(edge(0, 0) == 0.0);
    CHECK(edge(0, 1) == 1.0);
}

TEST_CASE("iou and threshold") {
    Image a = Image::Zero(4, 4);
    Image b = Image::Zero(4, 4);
    CHECK(iou(a, b) == 1.0);
    a.topRows(2).setConstant(0.8);
    b.leftCols(2).setOnes();
    CHECK(iou(a, b) == doctest::Approx(4.0 / 12.0));
    CHECK(threshold(a).sum() == 8.0);
    CHECK_THROWS_AS(iou(a, Image::Zero(3, 4)), DimensionError);
}
