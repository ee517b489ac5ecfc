#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "silpack/field.hpp"
#include "silpack/geometry.hpp"
#include "silpack/loss.hpp"
#include "silpack/optim.hpp"
#include "silpack/pose.hpp"
#include "silpack/render.hpp"

namespace silpack {

// Optimization happens in normalized units: p_norm = scale * (p - offset),
// with the container centred at the origin and unit maximum extent.
struct Normalization {
    double scale = 1.0;
    Vec3 offset = Vec3::Zero();

    Vec3 to_normalized(const Vec3& p) const { return scale * (p - offset); }
    Vec3 to_world(const Vec3& p) const { return p / scale + offset; }
};

struct ContainerInput {
    // Either a closed mesh or an axis-aligned box.
    std::optional<Mesh> mesh;
    Vec3 box_extents = Vec3::Zero();
    Vec3 box_center = Vec3::Zero();

    static ContainerInput box(const Vec3& extents, const Vec3& center = Vec3::Zero()) {
        ContainerInput c;
        c.box_extents = extents;
        c.box_center = center;
        return c;
    }
    static ContainerInput from_mesh(Mesh m) {
        ContainerInput c;
        c.mesh = std::move(m);
        return c;
    }
};

enum class ViewPreset { Axis, Five };

struct SceneOptions {
    std::size_t container_points = 80000;
    int object_grid_dims = 64;
    int image_resolution = 64;
    double footprint_margin = 1.2;
    std::optional<ViewPreset> preset;  // default: Axis for boxes, Five for meshes
    std::vector<ViewConfig> custom_views;  // world units; overrides preset when set
    std::optional<double> tau;  // normalized units; default lattice spacing / 2
};

struct SceneObject {
    std::string name;
    std::shared_ptr<const Mesh> mesh;  // normalized, centred on its centroid
    std::shared_ptr<const SdfGrid> grid;
    Aabb support;
    double radius = 0.0;
    double volume = 0.0;  // normalized units
    Vec3 source_centroid = Vec3::Zero();  // centroid in the input mesh frame
};

struct Container {
    Mesh mesh;  // normalized
    std::shared_ptr<const ContainerSdf> sdf;
    Aabb box;
    double volume = 0.0;  // normalized units
    bool is_box = false;
    GridSpec lattice;
};

struct Scene {
    Normalization norm;
    Container container;
    std::vector<SceneObject> objects;
    std::vector<ViewConfig> views;
    std::vector<Image> targets;
    RenderParams render;
    QuerySet queries;
    int object_grid_dims = 64;

    double lattice_spacing() const { return container.lattice.spacing; }
};

Scene make_scene(const ContainerInput& container, std::span<const Mesh> objects, const SceneOptions& options);

// Appends an object, sharing the baked grid with identical meshes already
// present.
void add_object(Scene& scene, const Mesh& mesh);

// Targets: the container's own silhouettes.
void set_container_targets(Scene& scene);
// Targets: container silhouettes clipped to the bottom `height_fraction` on
// side views.
void set_strip_targets(Scene& scene, double height_fraction);
void set_targets(Scene& scene, std::vector<Image> targets);

// Owns the pointer arrays a LossInputs refers to.
struct SceneLossInputs {
    std::vector<const SdfGrid*> grids;
    std::vector<const Mesh*> meshes;
    std::vector<Aabb> supports;
    LossInputs inputs;
};
std::unique_ptr<SceneLossInputs> make_loss_inputs(const Scene& scene);

struct IntersectionAudit {
    double max_penetration = 0.0;  // world units; sum of the two deepest depths
    std::size_t overlap_points = 0;
    std::size_t container_violations = 0;
    double lattice_spacing = 0.0;  // optimization lattice, world units
    double fine_spacing = 0.0;
    bool passed = true;
};

enum class InitMode { Random, Perturb };

struct PackConfig {
    LossConfig loss;
    Schedule schedule;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_hat = 1e-8;
    // Per-object gradient norm cap applied before each Adam step; 0 disables.
    double gradient_clip = 0.3;
    bool early_stop = false;
    std::uint64_t seed = 0;
    int audit_multiplier = 2;
    // incremental growth
    double residual_threshold = 0.03;
    int batch = 0;  // 0: max(1, N_init / 10)
    bool allow_growth = true;
    // assembly initialization
    InitMode init = InitMode::Random;
    double perturb_angle = 30.0 * 3.14159265358979323846 / 180.0;
    double perturb_offset = 0.2;  // normalized units
    std::function<void(int, const LossReport&)> on_iteration;
};

struct PackResult {
    Eigen::VectorXd params;  // normalized pose vector, 6 per object
    std::vector<RigidPosed> poses;
    double rho = 0.0;
    bool density_flagged = false;
    int n_placed = 0;
    int n_max_estimate = 0;
    std::vector<LossReport> trace;
    IntersectionAudit audit;
    std::vector<double> view_iou;
    double uncovered_fraction = 0.0;
    std::vector<Image> renders;  // soft renders of the final arrangement
};

int estimate_initial_count(std::span<const Mesh> pool, double container_volume);

std::vector<RigidPosed> random_init(const Scene& scene, std::uint64_t seed);
// Random poses for objects [first, objects.size()).
std::vector<RigidPosed> random_init(const Scene& scene, std::uint64_t seed, std::size_t first);

// Poses within `max_angle` / `max_offset` of the given reference poses.
std::vector<RigidPosed> perturbed_init(std::span<const RigidPosed> reference, double max_angle, double max_offset,
                                       std::uint64_t seed);

// Adam on the total loss starting at `initial`, then audit.
PackResult optimize(const Scene& scene, const Eigen::VectorXd& initial, const PackConfig& config);

PackResult pack(const Scene& scene, const PackConfig& config);

// Grows the object count from N_init while the audit passes and target
// pixels remain uncovered; returns the last passing configuration.
PackResult incremental_pack(std::span<const Mesh> pool, Scene& scene, const PackConfig& config);

double packing_density(std::span<const Mesh> meshes, double container_volume);

// Mesh-exact audit on a lattice `multiplier` times finer than the
// optimization lattice.
IntersectionAudit intersection_audit(const Scene& scene, std::span<const RigidPosed> poses, int multiplier = 2);

// Hard silhouettes of the arrangement.
std::vector<Image> hard_renders(const Scene& scene, std::span<const RigidPosed> poses);

struct AssemblyScene {
    Scene scene;
    std::vector<RigidPosed> ground_truth;  // input placement of each part
};

// Whole mesh as container, parts as objects, targets from the whole's
// silhouettes. Throws InputError when the parts exceed the whole by >5%.
AssemblyScene make_assembly_scene(std::span<const Mesh> parts, const Mesh& whole, const SceneOptions& options);

PackResult assemble(std::span<const Mesh> parts, const Mesh& whole, const SceneOptions& options,
                    const PackConfig& config);
PackResult assemble(const AssemblyScene& assembly, const PackConfig& config);

// Pose mapping an input-frame object onto its packed placement in input
// world units.
RigidPosed world_pose(const Scene& scene, std::size_t object, const RigidPosed& normalized);

// Input meshes moved to their packed placements, in world units.
std::vector<Mesh> placed_meshes(const Scene& scene, std::span<const RigidPosed> poses);

}  // namespace silpack
