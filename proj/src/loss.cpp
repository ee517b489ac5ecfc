#include "silpack/loss.hpp"

#include <algorithm>

namespace silpack {

namespace {

constexpr std::size_t kPointsPerChunk = 4096;

void check_finite(const TermValue& term, const char* name) {
    if (!std::isfinite(term.value)) throw NumericalError(std::string("non-finite ") + name + " loss");
    for (Eigen::Index k = 0; k < term.gradient.size(); ++k) {
        if (!std::isfinite(term.gradient[k])) {
            throw NumericalError(std::string("non-finite ") + name + " gradient for object " + std::to_string(k / 6));
        }
    }
}

}  // namespace

IntersectionVariant parse_intersection_variant(const std::string& name) {
    if (name == "literal") return IntersectionVariant::Literal;
    if (name == "overlap-only" || name == "overlap") return IntersectionVariant::OverlapOnly;
    throw ParameterError("unknown intersection variant '" + name + "' (expected literal or overlap-only)");
}

std::string to_string(IntersectionVariant variant) {
    return variant == IntersectionVariant::Literal ? "literal" : "overlap-only";
}

QuerySet build_query_set(const GridSpec& lattice, const ContainerSdf& container) {
    QuerySet q;
    q.spacing = lattice.spacing;
    for (std::size_t n = 0; n < lattice.point_count(); ++n) {
        const Vec3 p = lattice.node(n);
        if (container.evaluate(p).value <= 0.0) q.points.push_back(p);
    }
    return q;
}

SilhouetteLoss silhouette_loss(std::span<const Image> rendered, std::span<const Image> targets) {
    if (rendered.size() != targets.size())
        throw DimensionError("silhouette loss: " + std::to_string(rendered.size()) + " renders vs " +
                             std::to_string(targets.size()) + " targets");
    SilhouetteLoss out;
    const double k = static_cast<double>(rendered.size());
    for (std::size_t v = 0; v < rendered.size(); ++v) {
        if (rendered[v].rows() != targets[v].rows() || rendered[v].cols() != targets[v].cols())
            throw DimensionError("silhouette loss: view " + std::to_string(v) + " size mismatch");
        const double mn = static_cast<double>(rendered[v].size());
        const Image diff = targets[v] - rendered[v];
        out.value += diff.square().sum() / (mn * k);
        out.adjoints.push_back(-2.0 * diff / (mn * k));
    }
    return out;
}

TermValue intersection_loss(std::span<const WarpedField> fields, const QuerySet& queries, IntersectionVariant variant) {
    if (queries.points.empty()) throw ParameterError("intersection loss needs a non-empty query set");
    const std::size_t n_obj = fields.size();
    TermValue out;
    out.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(6 * n_obj));
    if (n_obj == 0) return out;

    // Outside its support inflated by one cell a field cannot be negative.
    std::vector<Aabb> reach;
    for (const WarpedField& f : fields) {
        const double h = f.grid().spec.spacing;
        reach.push_back({f.support().min - Vec3::Constant(h), f.support().max + Vec3::Constant(h)});
    }

    struct Partial {
        double value = 0.0;
        std::vector<Vec3> grad_sum;
        std::vector<Vec3> moment_sum;
    };
    const std::size_t n_points = queries.points.size();
    const std::size_t n_chunks = (n_points + kPointsPerChunk - 1) / kPointsPerChunk;
    std::vector<Partial> partials(n_chunks);

    parallel_chunks(n_chunks, [&](std::size_t chunk) {
        Partial& part = partials[chunk];
        part.grad_sum.assign(n_obj, Vec3::Zero());
        part.moment_sum.assign(n_obj, Vec3::Zero());
        struct Inside {
            std::size_t object;
            double depth;
            Vec3 grad;
            Vec3 local;
        };
        std::vector<Inside> inside;
        const std::size_t end = std::min(n_points, (chunk + 1) * kPointsPerChunk);
        for (std::size_t n = chunk * kPointsPerChunk; n < end; ++n) {
            const Vec3& p = queries.points[n];
            inside.clear();
            for (std::size_t i = 0; i < n_obj; ++i) {
                const Vec3 q = fields[i].frame().to_local(p);
                if ((q.array() < reach[i].min.array()).any() || (q.array() > reach[i].max.array()).any()) continue;
                const FieldSample<double> s = sample_trilinear<double>(fields[i].grid(), q);
                if (s.value < 0.0) inside.push_back({i, -s.value, s.gradient, q});
            }
            if (inside.empty()) continue;

            std::size_t skip = inside.size();
            if (variant == IntersectionVariant::OverlapOnly) {
                if (inside.size() < 2) continue;
                // deepest object, lowest index on ties
                skip = 0;
                for (std::size_t k = 1; k < inside.size(); ++k) {
                    if (inside[k].depth > inside[skip].depth) skip = k;
                }
            }
            for (std::size_t k = 0; k < inside.size(); ++k) {
                if (k == skip) continue;
                const Inside& in = inside[k];
                part.value += in.depth;
                // d(-S)/dS = -1
                part.grad_sum[in.object] -= in.grad;
                part.moment_sum[in.object] -= in.grad.cross(in.local);
            }
        }
    });

    std::vector<Vec3> grad_sum(n_obj, Vec3::Zero());
    std::vector<Vec3> moment_sum(n_obj, Vec3::Zero());
    for (const Partial& part : partials) {
        out.value += part.value;
        for (std::size_t i = 0; i < n_obj; ++i) {
            grad_sum[i] += part.grad_sum[i];
            moment_sum[i] += part.moment_sum[i];
        }
    }
    for (std::size_t i = 0; i < n_obj; ++i) {
        out.gradient.segment<6>(static_cast<Eigen::Index>(6 * i)) =
            fields[i].frame().local_field_gradient(grad_sum[i], moment_sum[i]);
    }
    return out;
}

TermValue extrusion_loss(std::span<const Mesh* const> meshes, std::span<const RigidPosed> poses,
                         const ContainerSdf& container, double epsilon) {
    if (!(epsilon > 0.0)) throw ParameterError("extrusion epsilon must be positive");
    if (meshes.size() != poses.size()) throw DimensionError("extrusion loss: mesh and pose counts differ");
    TermValue out;
    out.gradient = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(6 * meshes.size()));
    for (std::size_t i = 0; i < meshes.size(); ++i) {
        const PoseFrame frame(poses[i]);
        Vec6 g = Vec6::Zero();
        const Eigen::Matrix3Xd& verts = meshes[i]->vertices;
        for (Eigen::Index v = 0; v < verts.cols(); ++v) {
            const Vec3 local = verts.col(v);
            const FieldSample<double> s = container.evaluate(frame.to_world(local));
            if (s.value > -epsilon) {
                out.value += s.value;
                // d(R v + t)/d angle_k = R (w_k x v)
                g.head<3>() += frame.basis.transpose() * local.cross(frame.rotation.transpose() * s.gradient);
                g.tail<3>() += s.gradient;
            } else {
                out.value -= epsilon;
            }
        }
        out.gradient.segment<6>(static_cast<Eigen::Index>(6 * i)) = g;
    }
    return out;
}

std::vector<RigidPosed> unpack_poses(const Eigen::VectorXd& params) {
    if (params.size() % 6 != 0) throw DimensionError("pose vector length must be a multiple of 6");
    std::vector<RigidPosed> poses;
    poses.reserve(static_cast<std::size_t>(params.size() / 6));
    for (Eigen::Index i = 0; i < params.size(); i += 6) poses.push_back(RigidPosed::from_vector(params.segment<6>(i)));
    return poses;
}

Eigen::VectorXd pack_poses(std::span<const RigidPosed> poses) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(6 * poses.size()));
    for (std::size_t i = 0; i < poses.size(); ++i) v.segment<6>(static_cast<Eigen::Index>(6 * i)) = poses[i].to_vector();
    return v;
}

TotalLoss total_loss(const LossInputs& inputs, const Eigen::VectorXd& params, const LossConfig& config) {
    const std::vector<RigidPosed> poses = unpack_poses(params);
    const std::size_t n = poses.size();
    if (inputs.grids.size() != n || inputs.meshes.size() != n || inputs.supports.size() != n)
        throw DimensionError("total loss: object arrays and pose vector disagree");
    if (inputs.views.size() != inputs.targets.size()) throw DimensionError("total loss: views and targets differ");
    if (!inputs.container || !inputs.queries) throw ParameterError("total loss: container and queries are required");

    std::vector<WarpedField> fields;
    fields.reserve(n);
    for (std::size_t i = 0; i < n; ++i) fields.emplace_back(*inputs.grids[i], poses[i], inputs.supports[i]);

    TotalLoss out;
    const auto n6 = static_cast<Eigen::Index>(6 * n);

    std::vector<Rendering> renderings;
    renderings.reserve(inputs.views.size());
    for (const ViewConfig& view : inputs.views) {
        renderings.push_back(render_silhouette(fields, view, inputs.render));
        out.renders.push_back(renderings.back().image);
    }
    const SilhouetteLoss sil = silhouette_loss(out.renders, inputs.targets);
    TermValue sil_term;
    sil_term.value = sil.value;
    sil_term.gradient = Eigen::VectorXd::Zero(n6);
    for (std::size_t v = 0; v < renderings.size(); ++v)
        sil_term.gradient += render_backward(renderings[v], sil.adjoints[v], fields);

    TermValue is_term;
    if (n > 0) {
        is_term = intersection_loss(fields, *inputs.queries, config.variant);
    } else {
        is_term.gradient = Eigen::VectorXd::Zero(0);
    }
    const TermValue ext_term = extrusion_loss(inputs.meshes, poses, *inputs.container, config.epsilon);

    check_finite(sil_term, "silhouette");
    check_finite(is_term, "intersection");
    check_finite(ext_term, "extrusion");

    out.report.sil = sil_term.value;
    out.report.intersect = is_term.value;
    out.report.extrude = ext_term.value;
    out.report.lambda = config.lambda;
    out.report.total = sil_term.value + is_term.value + config.lambda * ext_term.value;
    out.sil_gradient = sil_term.gradient;
    out.intersect_gradient = is_term.gradient;
    out.extrude_gradient = ext_term.gradient;
    out.gradient = sil_term.gradient + is_term.gradient + config.lambda * ext_term.gradient;
    return out;
}

}  // namespace silpack
