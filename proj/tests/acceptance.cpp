// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "silpack/cli.hpp"
#include "silpack/packer.hpp"

using namespace silpack;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const char* title, bool ok, const std::string& detail) {
    std::printf("%s criterion %d (%s): %s\n", ok ? "PASS" : "FAIL", id, title, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// Largest |total - (sil + intersect + lambda * extrude)| over a trace.
double bookkeeping_gap = 0.0;
std::size_t bookkeeping_steps = 0;

void record_trace(const std::vector<LossReport>& trace, double lambda) {
    for (const LossReport& r : trace) {
        bookkeeping_gap = std::max(bookkeeping_gap, std::abs(r.total - (r.sil + r.intersect + lambda * r.extrude)));
        ++bookkeeping_steps;
    }
}

Mesh unit_cube(const std::string& name = "cube") { return make_box_mesh(Vec3::Zero(), Vec3::Ones(), name); }

void gradient_correctness() {
    const auto t0 = Clock::now();
    const std::vector<Mesh> pool{make_box_mesh(Vec3::Zero(), Vec3(1.0, 0.6, 0.4), "slab"),
                                 make_icosphere(0.45, 2, "ball"), oracle::make_torus(0.4, 0.15, 24, 12),
                                 make_box_mesh(Vec3::Zero(), Vec3::Constant(0.7), "cube")};
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    const double h = 1e-7;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Mesh> objects;
        for (int i = 0; i < 2 + trial % 4; ++i) objects.push_back(pool[rng() % pool.size()]);
        SceneOptions options;
        options.container_points = 12000;
        options.object_grid_dims = 32;
        options.image_resolution = 24;
        Scene scene = make_scene(ContainerInput::box(Vec3(2.2, 1.8, 1.6)), objects, options);
        set_container_targets(scene);
        Eigen::VectorXd x = pack_poses(random_init(scene, rng()));
        for (Eigen::Index i = 0; i < x.size(); i += 6)
            x.segment<3>(i + 3) += oracle::random_point(rng, Vec3::Constant(-0.35), Vec3::Constant(0.35));
        const auto inputs = make_loss_inputs(scene);
        const LossConfig config;
        const TotalLoss t = total_loss(inputs->inputs, x, config);
        Eigen::VectorXd fd_sil(x.size()), fd_is(x.size()), fd_ext(x.size()), fd_total(x.size());
        for (Eigen::Index k = 0; k < x.size(); ++k) {
            Eigen::VectorXd a = x, b = x;
            a[k] += h;
            b[k] -= h;
            const LossReport ra = total_loss(inputs->inputs, a, config).report;
            const LossReport rb = total_loss(inputs->inputs, b, config).report;
            fd_sil[k] = (ra.sil - rb.sil) / (2 * h);
            fd_is[k] = (ra.intersect - rb.intersect) / (2 * h);
            fd_ext[k] = (ra.extrude - rb.extrude) / (2 * h);
            fd_total[k] = (ra.total - rb.total) / (2 * h);
        }
        worst = std::max({worst, oracle::relative_error(t.sil_gradient, fd_sil),
                          oracle::relative_error(t.intersect_gradient, fd_is),
                          oracle::relative_error(t.extrude_gradient, fd_ext), oracle::relative_error(t.gradient, fd_total)});
    }
    const double elapsed = seconds_since(t0);
    report(1, "gradient correctness", worst < 1e-4 && elapsed < 120.0,
           fmt("worst relative error %.3g over 20 scenes, %.1f s", worst, elapsed));
}

void sdf_oracle() {
    const std::vector<Mesh> meshes{unit_cube(), make_icosphere(0.6, 2, "ball"), oracle::make_torus(0.6, 0.25, 32, 16),
                                   oracle::make_tetrahedron(), make_box_mesh(Vec3::Zero(), Vec3(1.2, 0.5, 0.3), "slab")};
    std::mt19937_64 rng(77);
    int disagree = 0;
    double bake_gap = 0.0;
    double warp_ratio = 0.0;
    for (const Mesh& m : meshes) {
        const MeshDistance dist(m);
        const Aabb box = bounds(m);
        const Vec3 pad = 0.25 * (box.max - box.min);
        for (int n = 0; n < 1000; ++n) {
            const Vec3 p = oracle::random_point(rng, box.min - pad, box.max + pad);
            disagree += (dist.signed_distance(p) < 0.0) != oracle::inside_by_parity(m, p);
        }

        const SdfGrid grid = bake_sdf(m, cubic_grid_spec(box, 32, 2));
        for (std::size_t n = 0; n < grid.spec.point_count(); ++n) {
            const Vec3 node = grid.spec.node(n);
            bake_gap = std::max(bake_gap, std::abs(sample_trilinear<double>(grid, node).value - dist.signed_distance(node)));
        }

        for (int trial = 0; trial < 2; ++trial) {
            RigidPosed pose;
            pose.angles = oracle::random_point(rng, Vec3::Constant(-3.0), Vec3::Constant(3.0));
            pose.translation = oracle::random_point(rng, Vec3::Constant(-0.5), Vec3::Constant(0.5));
            const MeshDistance moved(oracle::moved(m, rotation_matrix(pose), pose.translation));
            const WarpedField field(grid, pose);
            for (int n = 0; n < 200; ++n) {
                const Vec3 p = apply_pose(pose, oracle::random_point(rng, box.min, box.max));
                const double err = std::abs(warped_sample(field, p).value - moved.signed_distance(p));
                warp_ratio = std::max(warp_ratio, err / grid.spec.spacing);
            }
        }
    }
    report(2, "SDF oracle equivalence", disagree == 0 && bake_gap <= 1e-12 && warp_ratio <= 2.0,
           fmt("%d/5000 sign disagreements, bake gap %.3g, warp error %.3g spacings", disagree, bake_gap, warp_ratio));
}

void intersection_oracle() {
    const Mesh cube = make_box_mesh(Vec3::Constant(-0.5), Vec3::Constant(0.5));
    const GridSpec spec = cubic_grid_spec(bounds(cube), 21, 2);
    const SdfGrid grid = bake_sdf(cube, spec);
    RigidPosed shifted;
    shifted.translation = Vec3(0.5, 0, 0);
    const std::vector<WarpedField> fields{WarpedField(grid, RigidPosed::identity()), WarpedField(grid, shifted)};
    QuerySet q;
    q.spacing = spec.spacing;
    for (int k = 0; k < 41; ++k)
        for (int j = 0; j < 41; ++j)
            for (int i = 0; i < 41; ++i) q.points.push_back(Vec3::Constant(-1.0) + spec.spacing * Vec3(i, j, k));

    double literal = 0.0, overlap = 0.0;
    const Vec3 half = Vec3::Constant(0.5);
    for (const Vec3& p : q.points) {
        const double d1 = std::max(0.0, -box_sdf<double>(half, p).value);
        const double d2 = std::max(0.0, -box_sdf<double>(half, Vec3(p - shifted.translation)).value);
        literal += d1 + d2;
        overlap += std::min(d1, d2);
    }
    const double e_overlap = std::abs(intersection_loss(fields, q, IntersectionVariant::OverlapOnly).value - overlap);
    const double e_literal = std::abs(intersection_loss(fields, q, IntersectionVariant::Literal).value - literal);
    report(3, "intersection loss oracle", overlap > 0.0 && e_overlap <= 1e-12 && e_literal <= 1e-12,
           fmt("overlap-only error %.3g, literal error %.3g", e_overlap, e_literal));
}

void unique_fit() {
    const auto t0 = Clock::now();
    const std::vector<Mesh> cube{unit_cube()};
    Scene scene = make_scene(ContainerInput::box(Vec3::Ones()), cube, SceneOptions{});
    set_container_targets(scene);
    PackConfig config;
    config.schedule = Schedule{1e-2, 1e-4, 1000};
    const PackResult r = pack(scene, config);
    record_trace(r.trace, config.loss.lambda);
    const double worst = *std::min_element(r.view_iou.begin(), r.view_iou.end());
    const double elapsed = seconds_since(t0);
    report(4, "unique-fit convergence", worst >= 0.98 && elapsed < 60.0,
           fmt("lowest view IoU %.4f after %zu iterations, %.1f s", worst, r.trace.size(), elapsed));
}

void desk_packing() {
    const auto t0 = Clock::now();
    const std::vector<Mesh> cubes(8, unit_cube());
    Scene scene = make_scene(ContainerInput::box(Vec3::Constant(2.2)), cubes, SceneOptions{});
    set_container_targets(scene);
    int good = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        PackConfig config;
        config.seed = seed;
        const PackResult r = pack(scene, config);
        record_trace(r.trace, config.loss.lambda);
        const bool ok = r.rho >= 0.6 && r.audit.max_penetration <= r.audit.lattice_spacing &&
                        r.audit.container_violations == 0;
        good += ok;
        std::printf("  seed %llu: rho %.3f, max penetration %.4f (spacing %.4f), %zu container violations\n",
                    static_cast<unsigned long long>(seed), r.rho, r.audit.max_penetration, r.audit.lattice_spacing,
                    r.audit.container_violations);
        std::fflush(stdout);
    }
    const double elapsed = seconds_since(t0);
    report(5, "desk-scale packing", good >= 8 && elapsed < 600.0,
           fmt("%d/10 seeds feasible at rho >= 0.6, %.1f s", good, elapsed));
}

void strip_physicality() {
    const double fraction = 0.5;
    const double side = 6.0;
    const std::vector<Mesh> cubes(24, unit_cube());
    Scene scene = make_scene(ContainerInput::box(Vec3::Constant(side)), cubes, SceneOptions{});
    set_strip_targets(scene, fraction);
    PackConfig config;
    config.seed = 1;
    const PackResult r = pack(scene, config);
    record_trace(r.trace, config.loss.lambda);
    const double limit = -0.5 * side + fraction * side + bounding_radius(unit_cube());
    double highest = -1e300;
    for (const Mesh& m : placed_meshes(scene, r.poses)) highest = std::max(highest, mesh_centroid(m).z());
    report(6, "strip-target physicality", highest <= limit,
           fmt("highest centroid z %.3f, limit %.3f", highest, limit));
}

void part_assembly() {
    const Mesh whole = unit_cube("whole");
    const std::vector<Mesh> parts{make_box_mesh(Vec3::Zero(), Vec3(0.5, 1, 1), "left"),
                                  make_box_mesh(Vec3(0.5, 0, 0), Vec3::Ones(), "right")};
    const AssemblyScene assembly = make_assembly_scene(parts, whole, SceneOptions{});
    int good = 0;
    double slowest = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto t0 = Clock::now();
        PackConfig config;
        config.seed = seed;
        config.init = InitMode::Perturb;
        const PackResult r = assemble(assembly, config);
        slowest = std::max(slowest, seconds_since(t0));
        record_trace(r.trace, config.loss.lambda);
        double mean = 0.0;
        for (double v : r.view_iou) mean += v / static_cast<double>(r.view_iou.size());
        good += mean >= 0.95 && r.audit.passed;
        std::printf("  seed %llu: mean IoU %.4f, audit %s\n", static_cast<unsigned long long>(seed), mean,
                    r.audit.passed ? "passed" : "failed");
        std::fflush(stdout);
    }
    report(7, "part assembly", good >= 9 && slowest < 180.0,
           fmt("%d/10 seeds with mean IoU >= 0.95 and a passing audit, slowest run %.1f s", good, slowest));
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

void determinism() {
    const fs::path dir = fs::temp_directory_path() / "silpack_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "cube.obj");
        write_obj(out, {unit_cube()});
    }
    const nlohmann::json doc = {{"objects", nlohmann::json::array({{{"path", "cube.obj"}, {"count", 3}}})},
                                {"container", {{"box", {2.2, 2.2, 2.2}}}},
                                {"grid", {{"container_points", 30000}, {"object_dims", 48}}},
                                {"optim", {{"iterations", 150}}},
                                {"seed", 11},
                                {"output", {{"dir", "out"}}}};
    std::ostringstream log;
    std::string json[2], csv[2];
    for (int run = 0; run < 2; ++run) {
        cli::cmd_pack(doc, dir, log);
        json[run] = slurp(dir / "out" / "result.json");
        csv[run] = slurp(dir / "out" / "loss.csv");
    }
    const bool ok = !json[0].empty() && !csv[0].empty() && json[0] == json[1] && csv[0] == csv[1];
    report(8, "determinism", ok,
           fmt("result.json %s, loss.csv %s", json[0] == json[1] ? "identical" : "differs",
               csv[0] == csv[1] ? "identical" : "differs"));
}

}  // namespace

int main() {
    gradient_correctness();
    sdf_oracle();
    intersection_oracle();
    unique_fit();
    desk_packing();
    strip_physicality();
    part_assembly();
    determinism();
    report(9, "loss bookkeeping", bookkeeping_steps > 0 && bookkeeping_gap <= 1e-15,
           fmt("largest gap %.3g over %zu logged steps", bookkeeping_gap, bookkeeping_steps));
    return failures == 0 ? 0 : 1;
}
