#pragma once

#include <memory>

#include "silpack/common.hpp"
#include "silpack/geometry.hpp"
#include "silpack/pose.hpp"

namespace silpack {

template <typename Scalar>
struct FieldSample {
    Scalar value{};
    Eigen::Matrix<Scalar, 3, 1> gradient = Eigen::Matrix<Scalar, 3, 1>::Zero();
};

// Trilinear interpolation of the baked lattice and its analytic gradient.
// Queries outside the lattice box return the value at the clamped point
// plus the Euclidean distance to the box.
template <typename Scalar>
FieldSample<Scalar> sample_trilinear(const SdfGrid& grid, const Eigen::Matrix<Scalar, 3, 1>& p) {
    using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
    const GridSpec& spec = grid.spec;
    const Scalar inv_h = Scalar(1) / Scalar(spec.spacing);

    Vector3 u = (p - spec.origin.cast<Scalar>()) * inv_h;
    Vector3 outside = Vector3::Zero();
    bool clamped[3] = {false, false, false};
    int cell[3];
    Scalar frac[3];
    for (int a = 0; a < 3; ++a) {
        const Scalar upper = Scalar(spec.dims[static_cast<std::size_t>(a)] - 1);
        if (u[a] < Scalar(0)) {
            outside[a] = u[a];
            u[a] = Scalar(0);
            clamped[a] = true;
        } else if (u[a] > upper) {
            outside[a] = u[a] - upper;
            u[a] = upper;
            clamped[a] = true;
        }
        int c = static_cast<int>(std::floor(u[a]));
        c = std::min(c, spec.dims[static_cast<std::size_t>(a)] - 2);
        cell[a] = c;
        frac[a] = u[a] - Scalar(c);
    }

    const auto v = [&](int di, int dj, int dk) {
        return Scalar(grid.at(cell[0] + di, cell[1] + dj, cell[2] + dk));
    };
    const Scalar fx = frac[0], fy = frac[1], fz = frac[2];
    const Scalar c00 = v(0, 0, 0) + fx * (v(1, 0, 0) - v(0, 0, 0));
    const Scalar c10 = v(0, 1, 0) + fx * (v(1, 1, 0) - v(0, 1, 0));
    const Scalar c01 = v(0, 0, 1) + fx * (v(1, 0, 1) - v(0, 0, 1));
    const Scalar c11 = v(0, 1, 1) + fx * (v(1, 1, 1) - v(0, 1, 1));
    const Scalar c0 = c00 + fy * (c10 - c00);
    const Scalar c1 = c01 + fy * (c11 - c01);

    FieldSample<Scalar> s;
    s.value = c0 + fz * (c1 - c0);

    const Scalar dx0 = (v(1, 0, 0) - v(0, 0, 0)) + fy * ((v(1, 1, 0) - v(0, 1, 0)) - (v(1, 0, 0) - v(0, 0, 0)));
    const Scalar dx1 = (v(1, 0, 1) - v(0, 0, 1)) + fy * ((v(1, 1, 1) - v(0, 1, 1)) - (v(1, 0, 1) - v(0, 0, 1)));
    s.gradient[0] = (dx0 + fz * (dx1 - dx0)) * inv_h;
    s.gradient[1] = ((c10 - c00) + fz * ((c11 - c01) - (c10 - c00))) * inv_h;
    s.gradient[2] = (c1 - c0) * inv_h;

    if (clamped[0] || clamped[1] || clamped[2]) {
        for (int a = 0; a < 3; ++a) {
            if (clamped[a]) s.gradient[a] = Scalar(0);
        }
        const Vector3 offset = outside * Scalar(spec.spacing);
        const Scalar dist = offset.norm();
        if (dist > Scalar(0)) {
            s.value += dist;
            s.gradient += offset / dist;
        }
    }
    return s;
}

// Exact signed distance to the axis-aligned box [-half, half].
template <typename Scalar>
FieldSample<Scalar> box_sdf(const Eigen::Matrix<Scalar, 3, 1>& half_extents, const Eigen::Matrix<Scalar, 3, 1>& p) {
    using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
    const Vector3 q = p.cwiseAbs() - half_extents;
    const Vector3 sign = p.unaryExpr([](Scalar x) { return x < Scalar(0) ? Scalar(-1) : Scalar(1); });
    FieldSample<Scalar> s;
    const Vector3 pos = q.cwiseMax(Scalar(0));
    const Scalar out = pos.norm();
    if (out > Scalar(0)) {
        s.value = out;
        s.gradient = sign.cwiseProduct(pos) / out;
        return s;
    }
    // inside: distance to the nearest face
    int axis = 0;
    for (int a = 1; a < 3; ++a) {
        if (q[a] > q[axis]) axis = a;
    }
    s.value = q[axis];
    s.gradient[axis] = sign[axis];
    return s;
}

// Baked object SDF viewed through a rigid pose: the object is baked in its
// own frame and world queries are mapped back by R^T (p - t).
class WarpedField {
public:
    // `support` bounds the object's interior in its own frame; it defaults
    // to the lattice box.
    WarpedField(const SdfGrid& grid, const RigidPosed& pose)
        : WarpedField(grid, pose, grid.spec.box()) {}
    WarpedField(const SdfGrid& grid, const RigidPosed& pose, const Aabb& support)
        : grid_(&grid), pose_(pose), frame_(pose), support_(support) {}

    const SdfGrid& grid() const { return *grid_; }
    const RigidPosed& pose() const { return pose_; }
    const PoseFrame& frame() const { return frame_; }
    const Aabb& support() const { return support_; }

private:
    const SdfGrid* grid_;
    RigidPosed pose_;
    PoseFrame frame_;
    Aabb support_;
};

struct WarpedSample {
    double value = 0.0;
    Vec6 pose_gradient = Vec6::Zero();
};

WarpedSample warped_sample(const WarpedField& field, const Vec3& p_world);

// Container signed distance S_C with spatial gradient.
class ContainerSdf {
public:
    virtual ~ContainerSdf() = default;
    virtual FieldSample<double> evaluate(const Vec3& p) const = 0;
    // Exact distance used by audits; defaults to evaluate().
    virtual double exact(const Vec3& p) const { return evaluate(p).value; }
};

class BoxContainerSdf final : public ContainerSdf {
public:
    BoxContainerSdf(const Vec3& center, const Vec3& half_extents) : center_(center), half_(half_extents) {}
    FieldSample<double> evaluate(const Vec3& p) const override { return box_sdf<double>(half_, p - center_); }

    const Vec3& half_extents() const { return half_; }
    const Vec3& center() const { return center_; }

private:
    Vec3 center_;
    Vec3 half_;
};

class MeshContainerSdf final : public ContainerSdf {
public:
    MeshContainerSdf(const Mesh& mesh, const GridSpec& spec) : grid_(bake_sdf(mesh, spec)), exact_(mesh) {}
    FieldSample<double> evaluate(const Vec3& p) const override { return sample_trilinear<double>(grid_, p); }
    double exact(const Vec3& p) const override { return exact_.signed_distance(p); }

    const SdfGrid& grid() const { return grid_; }

private:
    SdfGrid grid_;
    MeshDistance exact_;
};

}  // namespace silpack
