#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "silpack/pose.hpp"

using namespace silpack;

namespace {

constexpr double kPi = std::numbers::pi;

Vec3 random_angles(std::mt19937_64& rng) {
    return oracle::random_point(rng, Vec3::Constant(-kPi), Vec3::Constant(kPi));
}

RigidPosed random_pose(std::mt19937_64& rng) {
    RigidPosed pose;
    pose.angles = random_angles(rng);
    pose.translation = oracle::random_point(rng, Vec3::Constant(-2), Vec3::Constant(2));
    return pose;
}

Mat3 composed(const Vec3& a) {
    return oracle::axis_rotation(2, a.z()) * oracle::axis_rotation(1, a.y()) * oracle::axis_rotation(0, a.x());
}

}  // namespace

TEST_CASE("euler_to_quaternion examples") {
    const Eigen::Quaterniond id = euler_to_quaternion<double>(Vec3::Zero());
    CHECK(id.w() == 1.0);
    CHECK(id.vec().norm() == 0.0);

    const Eigen::Quaterniond half = euler_to_quaternion<double>(Vec3(0, 0, kPi));
    CHECK(std::abs(half.w()) < 1e-12);
    CHECK(std::abs(half.x()) < 1e-12);
    CHECK(std::abs(half.y()) < 1e-12);
    CHECK(std::abs(half.z() - 1.0) < 1e-12);
}

TEST_CASE("quaternion matrices match the Rz*Ry*Rx composition") {
    std::mt19937_64 rng(1);
    for (int n = 0; n < 100; ++n) {
        const Vec3 a = random_angles(rng);
        const Eigen::Quaterniond q = euler_to_quaternion(a);
        CHECK(std::abs(q.norm() - 1.0) < 1e-9);
        const Mat3 m = quaternion_to_matrix(q);
        CHECK((m - composed(a)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(std::abs(m.determinant() - 1.0) < 1e-12);
    }
}

TEST_CASE("quaternion_to_matrix special cases") {
    CHECK(quaternion_to_matrix(Eigen::Quaterniond(1, 0, 0, 0)) == Mat3::Identity());
    const Mat3 expected = Vec3(-1, -1, 1).asDiagonal();
    CHECK((quaternion_to_matrix(Eigen::Quaterniond(0, 0, 0, 1)) - expected).norm() == 0.0);

    bool flagged = false;
    const Mat3 m = quaternion_to_matrix(Eigen::Quaterniond(2, 0, 0, 0), &flagged);
    CHECK(flagged);
    CHECK((m - Mat3::Identity()).norm() < 1e-15);
    quaternion_to_matrix(Eigen::Quaterniond(1, 0, 0, 0), &flagged);
    CHECK_FALSE(flagged);
}

TEST_CASE("apply_pose and inverse_map") {
    const Vec3 p(0.3, -1.2, 2.5);
    CHECK(apply_pose(RigidPosed::identity(), p) == p);
    CHECK(inverse_map(RigidPosed::identity(), p) == p);

    RigidPosed quarter;
    quarter.angles = Vec3(0, 0, kPi / 2);
    CHECK((apply_pose(quarter, Vec3(1, 0, 0)) - Vec3(0, 1, 0)).norm() < 1e-15);

    RigidPosed shift;
    shift.translation = Vec3(1, 0, 0);
    CHECK(inverse_map(shift, Vec3(1, 0, 0)).norm() == 0.0);

    std::mt19937_64 rng(2);
    for (int n = 0; n < 100; ++n) {
        const RigidPosed pose = random_pose(rng);
        const Vec3 x = oracle::random_point(rng, Vec3::Constant(-3), Vec3::Constant(3));
        CHECK((inverse_map(pose, apply_pose(pose, x)) - x).norm() < 1e-12);
    }
}

TEST_CASE("pose_jacobian structure") {
    std::mt19937_64 rng(3);
    const RigidPosed pose = random_pose(rng);
    const Eigen::Matrix<double, 3, 6> jac = pose_jacobian(pose, Vec3(0.2, 0.4, -0.7));
    CHECK(jac.rightCols<3>() == Mat3::Identity());

    const Eigen::Matrix<double, 3, 6> at_zero = pose_jacobian(RigidPosed::identity(), Vec3(1, 0, 0));
    CHECK((at_zero.col(2) - Vec3(0, 1, 0)).norm() < 1e-15);
}

TEST_CASE("pose_jacobian matches central differences") {
    std::mt19937_64 rng(4);
    for (int n = 0; n < 100; ++n) {
        const RigidPosed pose = random_pose(rng);
        const Vec3 p = oracle::random_point(rng, Vec3::Constant(-1), Vec3::Constant(1));
        const Eigen::Matrix<double, 3, 6> jac = pose_jacobian(pose, p);
        double worst = 0.0;
        for (int c = 0; c < 3; ++c) {
            const auto f = [&](const Eigen::VectorXd& x) {
                return apply_pose(RigidPosed::from_vector(x), p)[c];
            };
            const Eigen::VectorXd fd = oracle::central_difference(f, pose.to_vector(), 1e-6);
            worst = std::max(worst, (jac.row(c).transpose() - fd).cwiseAbs().maxCoeff());
        }
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("PoseFrame local gradient matches the chain rule") {
    // f = c . to_local(q), spatial gradient c
    std::mt19937_64 rng(5);
    for (int n = 0; n < 20; ++n) {
        const RigidPosed pose = random_pose(rng);
        const Vec3 q = oracle::random_point(rng, Vec3::Constant(-1), Vec3::Constant(1));
        const Vec3 c = oracle::random_point(rng, Vec3::Constant(-1), Vec3::Constant(1));
        const PoseFrame frame(pose);
        const Vec3 local = frame.to_local(q);
        const Vec6 g = frame.local_field_gradient(c, c.cross(local));
        const auto f = [&](const Eigen::VectorXd& x) { return c.dot(inverse_map(RigidPosed::from_vector(x), q)); };
        const Eigen::VectorXd fd = oracle::central_difference(f, pose.to_vector(), 1e-6);
        CHECK(oracle::relative_error(g, fd) < 1e-6);
    }
}

TEST_CASE("matrix_to_euler inverts the composition") {
    std::mt19937_64 rng(6);
    for (int n = 0; n < 100; ++n) {
        Vec3 a = random_angles(rng);
        a.y() *= 0.49;
        CHECK((matrix_to_euler(composed(a)) - a).cwiseAbs().maxCoeff() < 1e-10);
    }
    const Vec3 locked = matrix_to_euler(composed(Vec3(0.3, kPi / 2, 0.1)));
    CHECK((composed(locked) - composed(Vec3(0.3, kPi / 2, 0.1))).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("wrap_angle maps into (-pi, pi]") {
    CHECK(wrap_angle(kPi) == doctest::Approx(kPi));
    CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
    CHECK(wrap_angle(3 * kPi / 2) == doctest::Approx(-kPi / 2));
    CHECK(wrap_angle(0.25) == 0.25);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-50, 50);
    for (int n = 0; n < 1000; ++n) {
        const double a = u(rng);
        const double w = wrap_angle(a);
        CHECK(w > -kPi);
        CHECK(w <= kPi);
        CHECK(std::abs(std::remainder(a - w, 2 * kPi)) < 1e-12);
    }
}

TEST_CASE("pose templates instantiate for float") {
    RigidPose<float> pose;
    pose.angles = Eigen::Vector3f(0.f, 0.f, static_cast<float>(kPi / 2));
    const Eigen::Vector3f p = apply_pose(pose, Eigen::Vector3f(1.f, 0.f, 0.f));
    CHECK((p - Eigen::Vector3f(0.f, 1.f, 0.f)).norm() < 1e-6f);
}
