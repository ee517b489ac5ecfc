#include "silpack/packer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

namespace silpack {

namespace {

// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Vec3 uniform_direction(std::mt19937_64& rng) {
    const double z = 2.0 * uniform01(rng) - 1.0;
    const double phi = 2.0 * std::numbers::pi * uniform01(rng);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
}

// Uniform rotation (Shoemake), returned as Euler angles.
Vec3 uniform_rotation_angles(std::mt19937_64& rng) {
    const double u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    const double u3 = uniform01(rng);
    const double a = std::sqrt(1.0 - u1);
    const double b = std::sqrt(u1);
    const Eigen::Quaterniond q(b * std::cos(2.0 * std::numbers::pi * u3), a * std::sin(2.0 * std::numbers::pi * u2),
                               a * std::cos(2.0 * std::numbers::pi * u2), b * std::sin(2.0 * std::numbers::pi * u3));
    return matrix_to_euler<double>(quaternion_to_matrix(q));
}

ViewConfig normalize_view(const ViewConfig& world, const Normalization& norm) {
    ViewConfig v = world;
    v.translation = norm.scale * (world.rotation * norm.offset + world.translation);
    // rays are centred on the container in depth
    v.translation.z() = 0.0;
    v.footprint_width *= norm.scale;
    v.footprint_height *= norm.scale;
    return v;
}

bool same_geometry(const Mesh& a, const Mesh& b) {
    return a.vertices.cols() == b.vertices.cols() && a.faces.cols() == b.faces.cols() && a.vertices == b.vertices &&
           a.faces == b.faces;
}

void clip_per_object(Eigen::VectorXd& grad, double cap) {
    for (Eigen::Index i = 0; i + 6 <= grad.size(); i += 6) {
        const double n = grad.segment<6>(i).norm();
        if (n > cap) grad.segment<6>(i) *= cap / n;
    }
}

std::vector<RigidPosed> poses_from(const Eigen::VectorXd& params) { return unpack_poses(params); }

}  // namespace

// ---------------------------------------------------------------------------
// Scene construction

Scene make_scene(const ContainerInput& input, std::span<const Mesh> objects, const SceneOptions& options) {
    Scene scene;
    scene.object_grid_dims = options.object_grid_dims;

    Mesh world_mesh;
    if (input.mesh) {
        world_mesh = *input.mesh;
    } else {
        if (!(input.box_extents.array() > 0.0).all()) throw ParameterError("container box extents must be positive");
        world_mesh = make_box_mesh(input.box_center - 0.5 * input.box_extents, input.box_center + 0.5 * input.box_extents,
                                   "container");
    }
    const Aabb world_box = bounds(world_mesh);
    scene.norm.offset = world_box.center();
    scene.norm.scale = 1.0 / world_box.extents().maxCoeff();

    Container& c = scene.container;
    c.mesh = transformed(world_mesh, scene.norm.scale, scene.norm.offset);
    c.box = bounds(c.mesh);
    c.volume = mesh_volume(c.mesh);
    c.is_box = !input.mesh.has_value();
    c.lattice = grid_spec_for_points(c.box, options.container_points, 2);
    if (c.is_box) {
        c.sdf = std::make_shared<BoxContainerSdf>(Vec3::Zero(), 0.5 * c.box.extents());
    } else {
        c.sdf = std::make_shared<MeshContainerSdf>(c.mesh, c.lattice);
    }
    scene.queries = build_query_set(c.lattice, *c.sdf);
    if (scene.queries.points.empty()) throw InputError("container lattice has no interior points");

    scene.render = default_render_params(c.box, c.lattice.spacing);
    if (options.tau) {
        if (!(*options.tau > 0.0)) throw ParameterError("tau must be positive");
        scene.render.tau = *options.tau;
    }

    if (!options.custom_views.empty()) {
        for (const ViewConfig& v : options.custom_views) scene.views.push_back(normalize_view(v, scene.norm));
    } else {
        const ViewPreset preset = options.preset.value_or(c.is_box ? ViewPreset::Axis : ViewPreset::Five);
        scene.views = preset == ViewPreset::Axis ? axis_views(c.box, options.image_resolution, options.footprint_margin)
                                                 : five_views(c.box, options.image_resolution, options.footprint_margin);
    }

    for (const Mesh& m : objects) add_object(scene, m);
    return scene;
}

void add_object(Scene& scene, const Mesh& mesh) {
    SceneObject obj;
    obj.name = mesh.name;
    obj.source_centroid = mesh_centroid(mesh);
    auto normalized = std::make_shared<Mesh>(transformed(mesh, scene.norm.scale, obj.source_centroid));
    for (const SceneObject& other : scene.objects) {
        if (same_geometry(*other.mesh, *normalized)) {
            obj.mesh = other.mesh;
            obj.grid = other.grid;
            break;
        }
    }
    if (!obj.grid) {
        obj.mesh = normalized;
        obj.grid = std::make_shared<SdfGrid>(bake_sdf(*normalized, cubic_grid_spec(bounds(*normalized), scene.object_grid_dims, 2)));
    }
    obj.support = bounds(*obj.mesh);
    obj.radius = bounding_radius(*obj.mesh);
    obj.volume = mesh_volume(*obj.mesh);
    scene.objects.push_back(std::move(obj));
}

void set_container_targets(Scene& scene) {
    scene.targets.clear();
    for (const ViewConfig& v : scene.views) scene.targets.push_back(project_mesh(scene.container.mesh, v));
}

void set_strip_targets(Scene& scene, double height_fraction) {
    if (!scene.container.is_box) throw ParameterError("strip targets require a box container");
    scene.targets = make_strip_targets(scene.container.mesh, scene.views, height_fraction);
}

void set_targets(Scene& scene, std::vector<Image> targets) {
    if (targets.size() != scene.views.size())
        throw DimensionError(std::to_string(targets.size()) + " targets for " + std::to_string(scene.views.size()) +
                             " views");
    for (std::size_t k = 0; k < targets.size(); ++k) {
        if (targets[k].cols() != scene.views[k].width || targets[k].rows() != scene.views[k].height)
            throw DimensionError("target " + std::to_string(k) + " does not match view '" + scene.views[k].name + "'");
    }
    scene.targets = std::move(targets);
}

std::unique_ptr<SceneLossInputs> make_loss_inputs(const Scene& scene) {
    auto holder = std::make_unique<SceneLossInputs>();
    for (const SceneObject& o : scene.objects) {
        holder->grids.push_back(o.grid.get());
        holder->meshes.push_back(o.mesh.get());
        holder->supports.push_back(o.support);
    }
    LossInputs& in = holder->inputs;
    in.grids = holder->grids;
    in.meshes = holder->meshes;
    in.supports = holder->supports;
    in.container = scene.container.sdf.get();
    in.views = scene.views;
    in.targets = scene.targets;
    in.render = scene.render;
    in.queries = &scene.queries;
    return holder;
}

// ---------------------------------------------------------------------------
// Initialization

int estimate_initial_count(std::span<const Mesh> pool, double container_volume) {
    if (pool.empty()) throw ParameterError("object pool is empty");
    double total = 0.0;
    for (const Mesh& m : pool) total += mesh_volume(m);
    const double mean = total / static_cast<double>(pool.size());
    if (!(mean > 0.0)) throw ParameterError("mean object volume is zero");
    const double n = std::floor(container_volume / mean);
    return static_cast<int>(std::clamp(n, 0.0, static_cast<double>(pool.size())));
}

std::vector<RigidPosed> random_init(const Scene& scene, std::uint64_t seed) { return random_init(scene, seed, 0); }

std::vector<RigidPosed> random_init(const Scene& scene, std::uint64_t seed, std::size_t first) {
    const ContainerSdf& sdf = *scene.container.sdf;
    std::vector<double> depth;
    depth.reserve(scene.queries.points.size());
    double max_depth = 0.0;
    for (const Vec3& p : scene.queries.points) {
        depth.push_back(-sdf.evaluate(p).value);
        max_depth = std::max(max_depth, depth.back());
    }
    if (depth.empty()) throw InputError("container too small: no interior lattice points");

    std::mt19937_64 rng(seed);
    std::vector<RigidPosed> poses;
    std::vector<std::size_t> candidates;
    for (std::size_t i = first; i < scene.objects.size(); ++i) {
        const double need = std::min(scene.objects[i].radius, max_depth);
        candidates.clear();
        for (std::size_t n = 0; n < depth.size(); ++n) {
            if (depth[n] >= need) candidates.push_back(n);
        }
        if (candidates.empty()) throw InputError("container too small for object '" + scene.objects[i].name + "'");
        RigidPosed pose;
        pose.translation = scene.queries.points[candidates[rng() % candidates.size()]];
        pose.angles = uniform_rotation_angles(rng);
        poses.push_back(pose);
    }
    return poses;
}

std::vector<RigidPosed> perturbed_init(std::span<const RigidPosed> reference, double max_angle, double max_offset,
                                       std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<RigidPosed> out;
    for (const RigidPosed& ref : reference) {
        const Vec3 axis = uniform_direction(rng);
        const double angle = max_angle * uniform01(rng);
        const Mat3 r = Eigen::AngleAxisd(angle, axis).toRotationMatrix() * rotation_matrix(ref);
        const Vec3 dir = uniform_direction(rng);
        const double radius = max_offset * std::cbrt(uniform01(rng));
        RigidPosed p;
        p.angles = matrix_to_euler<double>(r);
        p.translation = ref.translation + radius * dir;
        out.push_back(p);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

std::vector<Image> hard_renders(const Scene& scene, std::span<const RigidPosed> poses) {
    std::vector<WarpedField> fields;
    for (std::size_t i = 0; i < scene.objects.size(); ++i)
        fields.emplace_back(*scene.objects[i].grid, poses[i], scene.objects[i].support);
    std::vector<Image> out;
    for (const ViewConfig& v : scene.views) out.push_back(render_hard(fields, v, scene.render));
    return out;
}

double packing_density(std::span<const Mesh> meshes, double container_volume) {
    if (!(container_volume > 0.0)) throw ParameterError("container volume must be positive");
    double total = 0.0;
    for (const Mesh& m : meshes) total += mesh_volume(m);
    return total / container_volume;
}

IntersectionAudit intersection_audit(const Scene& scene, std::span<const RigidPosed> poses, int multiplier) {
    if (multiplier < 1) throw ParameterError("audit multiplier must be at least 1");
    if (poses.size() != scene.objects.size()) throw DimensionError("audit: pose count differs from object count");

    const double h = scene.lattice_spacing();
    const double fine = h / multiplier;
    const Aabb region{scene.container.box.min - Vec3::Constant(2.0 * h), scene.container.box.max + Vec3::Constant(2.0 * h)};
    GridSpec lattice;
    lattice.spacing = fine;
    lattice.origin = region.min;
    for (int a = 0; a < 3; ++a)
        lattice.dims[static_cast<std::size_t>(a)] = static_cast<int>(std::floor(region.extents()[a] / fine)) + 1;

    std::map<const Mesh*, MeshDistance> exact;
    std::vector<const MeshDistance*> dist;
    std::vector<PoseFrame> frames;
    for (std::size_t i = 0; i < poses.size(); ++i) {
        const Mesh* m = scene.objects[i].mesh.get();
        auto it = exact.find(m);
        if (it == exact.end()) it = exact.emplace(m, MeshDistance(*m)).first;
        dist.push_back(&it->second);
        frames.emplace_back(poses[i]);
    }

    struct Partial {
        double max_pen = 0.0;
        std::size_t overlap = 0;
    };
    const auto nz = static_cast<std::size_t>(lattice.dims[2]);
    std::vector<Partial> partials(nz);
    parallel_chunks(nz, [&](std::size_t k) {
        Partial& part = partials[k];
        std::vector<double> depths;
        for (int j = 0; j < lattice.dims[1]; ++j) {
            for (int i = 0; i < lattice.dims[0]; ++i) {
                const Vec3 p = lattice.node(i, j, static_cast<int>(k));
                depths.clear();
                for (std::size_t o = 0; o < poses.size(); ++o) {
                    const Vec3 q = frames[o].to_local(p);
                    const SceneObject& obj = scene.objects[o];
                    if (q.squaredNorm() > obj.radius * obj.radius) continue;
                    if ((q.array() < obj.support.min.array()).any() || (q.array() > obj.support.max.array()).any()) continue;
                    const double sd = dist[o]->signed_distance(q);
                    if (sd < 0.0) depths.push_back(-sd);
                }
                if (depths.size() < 2) continue;
                std::partial_sort(depths.begin(), depths.begin() + 2, depths.end(), std::greater<>());
                ++part.overlap;
                part.max_pen = std::max(part.max_pen, depths[0] + depths[1]);
            }
        }
    });

    IntersectionAudit audit;
    double max_pen = 0.0;
    for (const Partial& p : partials) {
        max_pen = std::max(max_pen, p.max_pen);
        audit.overlap_points += p.overlap;
    }
    constexpr double kContainerTolerance = 1e-3;  // normalized units
    for (std::size_t o = 0; o < poses.size(); ++o) {
        const Eigen::Matrix3Xd& verts = scene.objects[o].mesh->vertices;
        for (Eigen::Index v = 0; v < verts.cols(); ++v) {
            if (scene.container.sdf->exact(frames[o].to_world(verts.col(v))) > kContainerTolerance)
                ++audit.container_violations;
        }
    }
    audit.passed = max_pen <= h && audit.container_violations == 0;
    audit.max_penetration = max_pen / scene.norm.scale;
    audit.lattice_spacing = h / scene.norm.scale;
    audit.fine_spacing = fine / scene.norm.scale;
    return audit;
}

// ---------------------------------------------------------------------------
// Drivers

PackResult optimize(const Scene& scene, const Eigen::VectorXd& initial, const PackConfig& config) {
    if (initial.size() != static_cast<Eigen::Index>(6 * scene.objects.size()))
        throw DimensionError("initial pose vector does not match the scene");
    if (scene.targets.size() != scene.views.size()) throw ParameterError("scene targets are not set");
    if (config.schedule.iterations < 1) throw ParameterError("iterations must be at least 1");

    const auto holder = make_loss_inputs(scene);
    PackResult result;
    result.params = initial;
    AdamState state(initial.size());
    state.beta1 = config.beta1;
    state.beta2 = config.beta2;
    state.eps_hat = config.eps_hat;

    if (!scene.objects.empty()) {
        for (int it = 0; it < config.schedule.iterations; ++it) {
            const TotalLoss tl = total_loss(holder->inputs, result.params, config.loss);
            result.trace.push_back(tl.report);
            if (config.on_iteration) config.on_iteration(it, tl.report);
            Eigen::VectorXd grad = tl.gradient;
            if (config.gradient_clip > 0.0) clip_per_object(grad, config.gradient_clip);
            adam_step(state, result.params, grad, lr_schedule(it, config.schedule));
            if (config.early_stop && it >= 50 &&
                result.trace[static_cast<std::size_t>(it - 50)].total - tl.report.total < 1e-7)
                break;
        }
    }

    result.poses = poses_from(result.params);
    const TotalLoss final_eval = total_loss(holder->inputs, result.params, config.loss);
    result.renders = final_eval.renders;
    result.n_placed = static_cast<int>(scene.objects.size());

    double volume = 0.0;
    for (const SceneObject& o : scene.objects) volume += o.volume;
    result.rho = volume / scene.container.volume;
    result.audit = intersection_audit(scene, result.poses, config.audit_multiplier);
    result.density_flagged = !result.audit.passed;

    const std::vector<Image> hard = hard_renders(scene, result.poses);
    double target_fg = 0.0;
    double uncovered = 0.0;
    for (std::size_t k = 0; k < hard.size(); ++k) {
        result.view_iou.push_back(iou(hard[k], scene.targets[k]));
        target_fg += (scene.targets[k] >= 0.5).cast<double>().sum();
        uncovered += ((scene.targets[k] >= 0.5) && (hard[k] < 0.5)).cast<double>().sum();
    }
    result.uncovered_fraction = target_fg > 0.0 ? uncovered / target_fg : 0.0;
    return result;
}

PackResult pack(const Scene& scene, const PackConfig& config) {
    const std::vector<RigidPosed> init = random_init(scene, config.seed);
    PackResult result = optimize(scene, pack_poses(init), config);
    if (!scene.objects.empty()) {
        double mean = 0.0;
        for (const SceneObject& o : scene.objects) mean += o.volume;
        mean /= static_cast<double>(scene.objects.size());
        result.n_max_estimate = static_cast<int>(std::floor(scene.container.volume / mean));
    }
    return result;
}

PackResult incremental_pack(std::span<const Mesh> pool, Scene& scene, const PackConfig& config) {
    if (pool.empty()) throw ParameterError("object pool is empty");
    const double container_volume = scene.container.volume / std::pow(scene.norm.scale, 3);
    const int n_init = estimate_initial_count(pool, container_volume);
    const int batch = config.batch > 0 ? config.batch : std::max(1, n_init / 10);
    const int pool_size = static_cast<int>(pool.size());

    auto run_fresh = [&](int n, std::uint64_t seed) {
        scene.objects.clear();
        for (int i = 0; i < n; ++i) add_object(scene, pool[static_cast<std::size_t>(i)]);
        return optimize(scene, pack_poses(random_init(scene, seed)), config);
    };

    int n = n_init;
    std::uint64_t round = 0;
    PackResult last = run_fresh(n, config.seed);
    // The starting estimate may already exceed capacity; shrink until the
    // audit passes.
    while (!last.audit.passed && n > 0) {
        n = std::max(0, n - batch);
        last = run_fresh(n, config.seed + ++round);
    }

    while (config.allow_growth && n < pool_size && last.uncovered_fraction > config.residual_threshold) {
        const int add = std::min(batch, pool_size - n);
        const std::size_t first = scene.objects.size();
        for (int i = 0; i < add; ++i) add_object(scene, pool[static_cast<std::size_t>(n + i)]);
        const std::vector<RigidPosed> fresh = random_init(scene, config.seed + ++round, first);
        Eigen::VectorXd init(static_cast<Eigen::Index>(6 * scene.objects.size()));
        init.head(last.params.size()) = last.params;
        init.tail(static_cast<Eigen::Index>(6 * fresh.size())) = pack_poses(fresh);
        PackResult grown = optimize(scene, init, config);
        if (!grown.audit.passed) {
            scene.objects.resize(first);
            break;
        }
        n += add;
        last = std::move(grown);
    }
    last.n_max_estimate = last.n_placed;
    return last;
}

AssemblyScene make_assembly_scene(std::span<const Mesh> parts, const Mesh& whole, const SceneOptions& options) {
    if (parts.empty()) throw ParameterError("assembly needs at least one part");
    double parts_volume = 0.0;
    for (const Mesh& p : parts) parts_volume += mesh_volume(p);
    const double whole_volume = mesh_volume(whole);
    if (parts_volume > 1.05 * whole_volume) {
        throw InputError("parts volume " + std::to_string(parts_volume) + " exceeds whole volume " +
                         std::to_string(whole_volume) + " by more than 5%");
    }
    SceneOptions opts = options;
    if (!opts.preset && opts.custom_views.empty()) opts.preset = ViewPreset::Five;
    AssemblyScene out{make_scene(ContainerInput::from_mesh(whole), parts, opts), {}};
    set_container_targets(out.scene);
    for (const SceneObject& o : out.scene.objects) {
        RigidPosed truth;
        truth.translation = out.scene.norm.to_normalized(o.source_centroid);
        out.ground_truth.push_back(truth);
    }
    return out;
}

PackResult assemble(const AssemblyScene& assembly, const PackConfig& config) {
    const std::vector<RigidPosed> init =
        config.init == InitMode::Perturb
            ? perturbed_init(assembly.ground_truth, config.perturb_angle, config.perturb_offset, config.seed)
            : random_init(assembly.scene, config.seed);
    PackResult result = optimize(assembly.scene, pack_poses(init), config);
    result.n_max_estimate = result.n_placed;
    return result;
}

PackResult assemble(std::span<const Mesh> parts, const Mesh& whole, const SceneOptions& options,
                    const PackConfig& config) {
    return assemble(make_assembly_scene(parts, whole, options), config);
}

RigidPosed world_pose(const Scene& scene, std::size_t object, const RigidPosed& normalized) {
    const Mat3 r = rotation_matrix(normalized);
    RigidPosed out;
    out.angles = wrapped_angles<double>(normalized.angles);
    out.translation = normalized.translation / scene.norm.scale + scene.norm.offset -
                      r * scene.objects[object].source_centroid;
    return out;
}

std::vector<Mesh> placed_meshes(const Scene& scene, std::span<const RigidPosed> poses) {
    std::vector<Mesh> out;
    for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        const PoseFrame frame(poses[i]);
        Mesh m = *scene.objects[i].mesh;
        for (Eigen::Index v = 0; v < m.vertices.cols(); ++v)
            m.vertices.col(v) = scene.norm.to_world(frame.to_world(m.vertices.col(v)));
        m.name = scene.objects[i].name.empty() ? "object_" + std::to_string(i) : scene.objects[i].name + "_" + std::to_string(i);
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace silpack
