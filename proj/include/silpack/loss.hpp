#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "silpack/common.hpp"
#include "silpack/field.hpp"
#include "silpack/geometry.hpp"
#include "silpack/render.hpp"

namespace silpack {

// total = sil + intersect + lambda * extrude
struct LossReport {
    double sil = 0.0;
    double intersect = 0.0;
    double extrude = 0.0;
    double total = 0.0;
    double lambda = 0.0;
};

enum class IntersectionVariant {
    // sum over points and containing objects of -S
    Literal,
    // sum over points of (sum of depths - deepest depth): zero unless a point
    // lies inside two or more objects
    OverlapOnly,
};

IntersectionVariant parse_intersection_variant(const std::string& name);
std::string to_string(IntersectionVariant variant);

// Fixed lattice points inside the container (S_C <= 0), lattice order.
struct QuerySet {
    std::vector<Vec3> points;
    double spacing = 0.0;
};

QuerySet build_query_set(const GridSpec& lattice, const ContainerSdf& container);

struct TermValue {
    double value = 0.0;
    Eigen::VectorXd gradient;  // 6 per object
};

struct SilhouetteLoss {
    double value = 0.0;
    std::vector<Image> adjoints;
};

// Mean squared pixel error over all K views.
SilhouetteLoss silhouette_loss(std::span<const Image> rendered, std::span<const Image> targets);

TermValue intersection_loss(std::span<const WarpedField> fields, const QuerySet& queries,
                            IntersectionVariant variant = IntersectionVariant::OverlapOnly);

// sum over objects and vertices of max(-epsilon, S_C(R v + t)).
TermValue extrusion_loss(std::span<const Mesh* const> meshes, std::span<const RigidPosed> poses,
                         const ContainerSdf& container, double epsilon);

struct LossConfig {
    IntersectionVariant variant = IntersectionVariant::OverlapOnly;
    double lambda = 0.001;
    double epsilon = 0.01;
};

// Non-owning view of everything the objective needs. Object i uses
// grids[i], meshes[i] (object frame, vertices for extrusion) and supports[i].
struct LossInputs {
    std::span<const SdfGrid* const> grids;
    std::span<const Mesh* const> meshes;
    std::span<const Aabb> supports;
    const ContainerSdf* container = nullptr;
    std::span<const ViewConfig> views;
    std::span<const Image> targets;
    RenderParams render;
    const QuerySet* queries = nullptr;
};

struct TotalLoss {
    LossReport report;
    Eigen::VectorXd gradient;
    Eigen::VectorXd sil_gradient;
    Eigen::VectorXd intersect_gradient;
    Eigen::VectorXd extrude_gradient;
    std::vector<Image> renders;
};

std::vector<RigidPosed> unpack_poses(const Eigen::VectorXd& params);
Eigen::VectorXd pack_poses(std::span<const RigidPosed> poses);

TotalLoss total_loss(const LossInputs& inputs, const Eigen::VectorXd& params, const LossConfig& config);

}  // namespace silpack
