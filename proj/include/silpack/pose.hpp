#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "silpack/common.hpp"

namespace silpack {

// Learnable rigid transform: rotation angles about x, y and z (radians),
// composed as R = Rz * Ry * Rx, plus a translation.
template <typename Scalar>
struct RigidPose {
    using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

    Vector3 angles = Vector3::Zero();
    Vector3 translation = Vector3::Zero();

    static RigidPose identity() { return {}; }

    // Packs as [angles, translation].
    Eigen::Matrix<Scalar, 6, 1> to_vector() const {
        Eigen::Matrix<Scalar, 6, 1> v;
        v << angles, translation;
        return v;
    }
    template <typename Derived>
    static RigidPose from_vector(const Eigen::MatrixBase<Derived>& v) {
        RigidPose p;
        p.angles = v.template head<3>();
        p.translation = v.template segment<3>(3);
        return p;
    }
};

using RigidPosed = RigidPose<double>;

// Maps an angle to (-pi, pi].
template <typename Scalar>
Scalar wrap_angle(Scalar a) {
    using std::ceil;
    const Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
    a -= two_pi * ceil((a - std::numbers::pi_v<Scalar>) / two_pi);
    return a;
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> wrapped_angles(const Eigen::Matrix<Scalar, 3, 1>& angles) {
    return angles.unaryExpr([](Scalar a) { return wrap_angle(a); });
}

template <typename Scalar>
Eigen::Quaternion<Scalar> euler_to_quaternion(const Eigen::Matrix<Scalar, 3, 1>& angles) {
    using std::cos;
    using std::sin;
    const Scalar half(0.5);
    const Eigen::Quaternion<Scalar> qx(cos(half * angles.x()), sin(half * angles.x()), Scalar(0), Scalar(0));
    const Eigen::Quaternion<Scalar> qy(cos(half * angles.y()), Scalar(0), sin(half * angles.y()), Scalar(0));
    const Eigen::Quaternion<Scalar> qz(cos(half * angles.z()), Scalar(0), Scalar(0), sin(half * angles.z()));
    Eigen::Quaternion<Scalar> q = qz * qy * qx;
    q.normalize();
    return q;
}

// Quaternions whose norm deviates from one by more than 1e-6 are normalized
// first and reported through `renormalized`.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> quaternion_to_matrix(Eigen::Quaternion<Scalar> q, bool* renormalized = nullptr) {
    using std::abs;
    const bool off = abs(q.norm() - Scalar(1)) > Scalar(1e-6);
    if (renormalized) *renormalized = off;
    if (off) q.normalize();
    const Scalar w = q.w(), x = q.x(), y = q.y(), z = q.z();
    Eigen::Matrix<Scalar, 3, 3> m;
    m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),  //
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return m;
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> rotation_matrix(const RigidPose<Scalar>& pose) {
    return quaternion_to_matrix(euler_to_quaternion(pose.angles));
}

// Inverse of the Rz*Ry*Rx composition; pitch is clamped at the poles.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> matrix_to_euler(const Eigen::Matrix<Scalar, 3, 3>& r) {
    using std::asin;
    using std::atan2;
    const Scalar s = std::clamp(-r(2, 0), Scalar(-1), Scalar(1));
    const Scalar pitch = asin(s);
    if (std::abs(s) > Scalar(1) - Scalar(1e-12)) {
        // gimbal lock: fold roll into yaw
        return {Scalar(0), pitch, atan2(-r(0, 1), r(1, 1))};
    }
    return {atan2(r(2, 1), r(2, 2)), pitch, atan2(r(1, 0), r(0, 0))};
}

// Body-frame rotation generators. Column k is the axis w_k such that
// dR/d(angle_k) = R * [w_k]x.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> angular_basis(const Eigen::Matrix<Scalar, 3, 1>& angles, const Eigen::Matrix<Scalar, 3, 3>& r) {
    using std::cos;
    using std::sin;
    Eigen::Matrix<Scalar, 3, 3> basis;
    basis.col(0) = Eigen::Matrix<Scalar, 3, 1>::UnitX();
    // Rx^T e_y
    basis.col(1) = Eigen::Matrix<Scalar, 3, 1>(Scalar(0), cos(angles.x()), -sin(angles.x()));
    // R^T e_z
    basis.col(2) = r.row(2).transpose();
    return basis;
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> apply_pose(const RigidPose<Scalar>& pose, const Eigen::Matrix<Scalar, 3, 1>& p) {
    return rotation_matrix(pose) * p + pose.translation;
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> inverse_map(const RigidPose<Scalar>& pose, const Eigen::Matrix<Scalar, 3, 1>& q) {
    return rotation_matrix(pose).transpose() * (q - pose.translation);
}

// d(R p + t) / d[angles, translation].
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 6> pose_jacobian(const RigidPose<Scalar>& pose, const Eigen::Matrix<Scalar, 3, 1>& p) {
    const Eigen::Matrix<Scalar, 3, 3> r = rotation_matrix(pose);
    const Eigen::Matrix<Scalar, 3, 3> basis = angular_basis(pose.angles, r);
    Eigen::Matrix<Scalar, 3, 6> jac;
    for (int k = 0; k < 3; ++k) jac.col(k) = r * basis.col(k).cross(p);
    jac.template rightCols<3>().setIdentity();
    return jac;
}

// Rotation and generators evaluated once per pose for hot loops.
struct PoseFrame {
    Mat3 rotation = Mat3::Identity();
    Mat3 basis = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    PoseFrame() = default;
    explicit PoseFrame(const RigidPosed& pose)
        : rotation(rotation_matrix(pose)),
          basis(angular_basis(pose.angles, rotation)),
          translation(pose.translation) {}

    Vec3 to_world(const Vec3& p) const { return rotation * p + translation; }
    Vec3 to_local(const Vec3& q) const { return rotation.transpose() * (q - translation); }

    // Pose gradient of a scalar f(to_local(q)) from accumulated
    // sum(w * grad) and sum(w * grad x local) in the object frame.
    Vec6 local_field_gradient(const Vec3& grad_sum, const Vec3& moment_sum) const {
        Vec6 g;
        g.head<3>() = basis.transpose() * moment_sum;
        g.tail<3>() = -rotation * grad_sum;
        return g;
    }
};

}  // namespace silpack
