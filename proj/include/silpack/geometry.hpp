#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "silpack/common.hpp"

namespace silpack {

// Closed, consistently oriented triangle mesh. Vertices are stored as
// columns; faces are counter-clockwise when seen from outside.
struct Mesh {
    Eigen::Matrix3Xd vertices;
    Eigen::Matrix3Xi faces;
    std::string name;

    Eigen::Index vertex_count() const { return vertices.cols(); }
    Eigen::Index face_count() const { return faces.cols(); }
};

struct Aabb {
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Zero();

    Vec3 center() const { return 0.5 * (min + max); }
    Vec3 extents() const { return max - min; }
    bool contains(const Aabb& other, double tol = 0.0) const {
        return (other.min.array() >= min.array() - tol).all() &&
               (other.max.array() <= max.array() + tol).all();
    }
    double distance(const Vec3& p) const {
        return (p - p.cwiseMax(min).cwiseMin(max)).norm();
    }
};

// Regular lattice with isotropic spacing; node (i, j, k) sits at
// origin + spacing * (i, j, k).
struct GridSpec {
    Vec3 origin = Vec3::Zero();
    double spacing = 1.0;
    std::array<int, 3> dims{1, 1, 1};

    std::size_t point_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(j) +
                                                     static_cast<std::size_t>(dims[1]) * k);
    }
    Vec3 node(int i, int j, int k) const { return origin + spacing * Vec3(i, j, k); }
    Vec3 node(std::size_t flat) const;
    Aabb box() const {
        return {origin, origin + spacing * Vec3(dims[0] - 1, dims[1] - 1, dims[2] - 1)};
    }
};

// Baked signed distances, x-fastest.
struct SdfGrid {
    GridSpec spec;
    Eigen::VectorXd values;

    double at(int i, int j, int k) const { return values[static_cast<Eigen::Index>(spec.index(i, j, k))]; }
};

Mesh load_mesh(const std::filesystem::path& path);
Mesh parse_obj(std::istream& in, const std::string& name);

// Throws MeshError on out-of-range indices, open or non-manifold edges,
// inconsistent orientation, or non-positive signed volume.
void validate_mesh(const Mesh& mesh);

void write_obj(std::ostream& out, const std::vector<Mesh>& groups);

Aabb bounds(const Mesh& mesh);
double mesh_volume(const Mesh& mesh);
Vec3 mesh_centroid(const Mesh& mesh);

// Largest vertex distance from `center`.
double bounding_radius(const Mesh& mesh, const Vec3& center = Vec3::Zero());

// Returns scale * (v - offset) for every vertex.
Mesh transformed(const Mesh& mesh, double scale, const Vec3& offset);

Mesh make_box_mesh(const Vec3& min, const Vec3& max, const std::string& name = "box");
Mesh make_icosphere(double radius, int subdivisions, const std::string& name = "icosphere");

double winding_number(const Mesh& mesh, const Vec3& p);
double signed_distance(const Mesh& mesh, const Vec3& p);

// Cached triangle soup for repeated exact distance queries.
class MeshDistance {
public:
    explicit MeshDistance(const Mesh& mesh);

    double unsigned_distance(const Vec3& p) const;
    double winding_number(const Vec3& p) const;
    // Distance to the nearest triangle, negated when the generalized winding
    // number exceeds one half.
    double signed_distance(const Vec3& p) const;

    const Aabb& box() const { return box_; }

private:
    std::vector<std::array<Vec3, 3>> triangles_;
    Aabb box_;
};

// Squared distance from p to triangle (a, b, c).
double point_triangle_distance_squared(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// Cube-shaped lattice with `dims` nodes per axis covering `box` plus
// `padding` cells on every side.
GridSpec cubic_grid_spec(const Aabb& box, int dims, int padding = 2);

// Lattice covering `box` plus `padding` cells whose node count is as close
// as possible to `target_points`.
GridSpec grid_spec_for_points(const Aabb& box, std::size_t target_points, int padding = 2);

// Throws ParameterError when spec does not cover the mesh with two cells of
// padding.
SdfGrid bake_sdf(const Mesh& mesh, const GridSpec& spec);

// Little-endian blob: 3 x u32 dims, 3 x f64 origin, f64 spacing, then f32
// values x-fastest.
void write_sdf_grid(std::ostream& out, const SdfGrid& grid);
void save_sdf_grid(const std::filesystem::path& path, const SdfGrid& grid);
SdfGrid read_sdf_grid(std::istream& in);
SdfGrid load_sdf_grid(const std::filesystem::path& path);

}  // namespace silpack
