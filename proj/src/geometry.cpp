#include "silpack/geometry.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <utility>

namespace silpack {

Vec3 GridSpec::node(std::size_t flat) const {
    const auto nx = static_cast<std::size_t>(dims[0]);
    const auto ny = static_cast<std::size_t>(dims[1]);
    const auto i = static_cast<int>(flat % nx);
    const auto j = static_cast<int>((flat / nx) % ny);
    const auto k = static_cast<int>(flat / (nx * ny));
    return node(i, j, k);
}

// ---------------------------------------------------------------------------
// OBJ input / output

namespace {

int resolve_index(const std::string& token, Eigen::Index vertex_count, int line_no) {
    const std::string head = token.substr(0, token.find('/'));
    long idx = 0;
    try {
        idx = std::stol(head);
    } catch (const std::exception&) {
        throw MeshError("line " + std::to_string(line_no) + ": malformed face index '" + token + "'");
    }
    // Negative indices are relative to the vertices read so far.
    if (idx < 0) idx = static_cast<long>(vertex_count) + idx + 1;
    return static_cast<int>(idx - 1);
}

}  // namespace

Mesh parse_obj(std::istream& in, const std::string& name) {
    std::vector<Vec3> verts;
    std::vector<Eigen::Vector3i> tris;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            Vec3 v;
            if (!(ls >> v.x() >> v.y() >> v.z()))
                throw MeshError("line " + std::to_string(line_no) + ": malformed vertex");
            verts.push_back(v);
        } else if (tag == "f") {
            std::vector<int> poly;
            std::string tok;
            while (ls >> tok) poly.push_back(resolve_index(tok, static_cast<Eigen::Index>(verts.size()), line_no));
            if (poly.size() < 3)
                throw MeshError("line " + std::to_string(line_no) + ": face with fewer than 3 vertices");
            // fan triangulation
            for (std::size_t k = 1; k + 1 < poly.size(); ++k) tris.emplace_back(poly[0], poly[k], poly[k + 1]);
        }
    }

    Mesh mesh;
    mesh.name = name;
    mesh.vertices.resize(3, static_cast<Eigen::Index>(verts.size()));
    for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.col(static_cast<Eigen::Index>(i)) = verts[i];
    mesh.faces.resize(3, static_cast<Eigen::Index>(tris.size()));
    for (std::size_t i = 0; i < tris.size(); ++i) mesh.faces.col(static_cast<Eigen::Index>(i)) = tris[i];
    validate_mesh(mesh);
    return mesh;
}

Mesh load_mesh(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open mesh file: " + path.string());
    try {
        return parse_obj(in, path.stem().string());
    } catch (const MeshError& e) {
        throw MeshError(path.string() + ": " + e.what());
    }
}

void validate_mesh(const Mesh& mesh) {
    if (mesh.face_count() == 0) throw MeshError("mesh has no faces");
    const Eigen::Index nv = mesh.vertex_count();
    for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
        for (int c = 0; c < 3; ++c) {
            const int idx = mesh.faces(c, f);
            if (idx < 0 || idx >= nv)
                throw MeshError("face " + std::to_string(f) + " references vertex " + std::to_string(idx + 1) +
                                " of " + std::to_string(nv));
        }
    }

    // Every directed edge must appear exactly once and its reverse exactly once.
    std::map<std::pair<int, int>, int> directed;
    for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
        for (int c = 0; c < 3; ++c) ++directed[{mesh.faces(c, f), mesh.faces((c + 1) % 3, f)}];
    }
    for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
        for (int c = 0; c < 3; ++c) {
            const int a = mesh.faces(c, f);
            const int b = mesh.faces((c + 1) % 3, f);
            const std::string edge = "edge (" + std::to_string(a + 1) + ", " + std::to_string(b + 1) + ")";
            if (a == b) throw MeshError("degenerate " + edge + " in face " + std::to_string(f));
            const int fwd = directed[{a, b}];
            const auto rev_it = directed.find({b, a});
            const int rev = rev_it == directed.end() ? 0 : rev_it->second;
            if (fwd + rev != 2) {
                throw MeshError("non-manifold or open mesh: " + edge + " is shared by " + std::to_string(fwd + rev) +
                                " faces");
            }
            if (fwd != 1) throw MeshError("inconsistent orientation at " + edge);
        }
    }

    if (!(mesh_volume(mesh) > 0.0)) throw MeshError("mesh orientation error: signed volume is not positive");
}

void write_obj(std::ostream& out, const std::vector<Mesh>& groups) {
    out.precision(17);
    Eigen::Index base = 1;
    for (const Mesh& m : groups) {
        out << "g " << (m.name.empty() ? "object" : m.name) << '\n';
        for (Eigen::Index v = 0; v < m.vertex_count(); ++v)
            out << "v " << m.vertices(0, v) << ' ' << m.vertices(1, v) << ' ' << m.vertices(2, v) << '\n';
        for (Eigen::Index f = 0; f < m.face_count(); ++f)
            out << "f " << m.faces(0, f) + base << ' ' << m.faces(1, f) + base << ' ' << m.faces(2, f) + base << '\n';
        base += m.vertex_count();
    }
}

// ---------------------------------------------------------------------------
// Measurement

Aabb bounds(const Mesh& mesh) {
    return {mesh.vertices.rowwise().minCoeff(), mesh.vertices.rowwise().maxCoeff()};
}

double mesh_volume(const Mesh& mesh) {
    double six_v = 0.0;
    for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
        const Vec3 a = mesh.vertices.col(mesh.faces(0, f));
        const Vec3 b = mesh.vertices.col(mesh.faces(1, f));
        const Vec3 c = mesh.vertices.col(mesh.faces(2, f));
        six_v += a.dot(b.cross(c));
    }
    return six_v / 6.0;
}

Vec3 mesh_centroid(const Mesh& mesh) {
    double six_v = 0.0;
    Vec3 acc = Vec3::Zero();
    for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
        const Vec3 a = mesh.vertices.col(mesh.faces(0, f));
        const Vec3 b = mesh.vertices.col(mesh.faces(1, f));
        const Vec3 c = mesh.vertices.col(mesh.faces(2, f));
        const double w = a.dot(b.cross(c));
        six_v += w;
        acc += w * (a + b + c) / 4.0;
    }
    return acc / six_v;
}

double bounding_radius(const Mesh& mesh, const Vec3& center) {
    return (mesh.vertices.colwise() - center).colwise().norm().maxCoeff();
}

Mesh transformed(const Mesh& mesh, double scale, const Vec3& offset) {
    Mesh out = mesh;
    out.vertices = scale * (mesh.vertices.colwise() - offset);
    return out;
}

Mesh make_box_mesh(const Vec3& min, const Vec3& max, const std::string& name) {
    Mesh m;
    m.name = name;
    m.vertices.resize(3, 8);
    for (int i = 0; i < 8; ++i) {
        m.vertices.col(i) = Vec3((i & 1) ? max.x() : min.x(), (i & 2) ? max.y() : min.y(), (i & 4) ? max.z() : min.z());
    }
    // z-, z+, y-, y+, x-, x+ quads, outward winding
    const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
    m.faces.resize(3, 12);
    for (int q = 0; q < 6; ++q) {
        m.faces.col(2 * q) << quads[q][0], quads[q][1], quads[q][2];
        m.faces.col(2 * q + 1) << quads[q][0], quads[q][2], quads[q][3];
    }
    return m;
}

Mesh make_icosphere(double radius, int subdivisions, const std::string& name) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                           {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (Vec3& p : v) p.normalize();
    std::vector<Eigen::Vector3i> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
            v.push_back((v[static_cast<std::size_t>(a)] + v[static_cast<std::size_t>(b)]).normalized());
            const int id = static_cast<int>(v.size()) - 1;
            midpoint.emplace(key, id);
            return id;
        };
        std::vector<Eigen::Vector3i> next;
        next.reserve(f.size() * 4);
        for (const auto& tri : f) {
            const int ab = mid(tri[0], tri[1]);
            const int bc = mid(tri[1], tri[2]);
            const int ca = mid(tri[2], tri[0]);
            next.emplace_back(tri[0], ab, ca);
            next.emplace_back(tri[1], bc, ab);
            next.emplace_back(tri[2], ca, bc);
            next.emplace_back(ab, bc, ca);
        }
        f = std::move(next);
    }
    Mesh m;
    m.name = name;
    m.vertices.resize(3, static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) m.vertices.col(static_cast<Eigen::Index>(i)) = radius * v[i];
    m.faces.resize(3, static_cast<Eigen::Index>(f.size()));
    for (std::size_t i = 0; i < f.size(); ++i) m.faces.col(static_cast<Eigen::Index>(i)) = f[i];
    return m;
}

// ---------------------------------------------------------------------------
// Exact distance

double point_triangle_distance_squared(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    // Closest point by Voronoi region classification.
    const Vec3 ab = b - a;
    const Vec3 ac = c - a;
    const Vec3 ap = p - a;
    const double d1 = ab.dot(ap);
    const double d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return ap.squaredNorm();

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp);
    const double d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return bp.squaredNorm();

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        return (ap - v * ab).squaredNorm();
    }

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp);
    const double d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return cp.squaredNorm();

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        return (ap - w * ac).squaredNorm();
    }

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (bp - w * (c - b)).squaredNorm();
    }

    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom;
    const double w = vc * denom;
    return (ap - ab * v - ac * w).squaredNorm();
}

MeshDistance::MeshDistance(const Mesh& mesh) : box_(bounds(mesh)) {
    triangles_.reserve(static_cast<std::size_t>(mesh.face_count()));
    for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
        triangles_.push_back({mesh.vertices.col(mesh.faces(0, f)), mesh.vertices.col(mesh.faces(1, f)),
                              mesh.vertices.col(mesh.faces(2, f))});
    }
}

double MeshDistance::unsigned_distance(const Vec3& p) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& t : triangles_) best = std::min(best, point_triangle_distance_squared(p, t[0], t[1], t[2]));
    return std::sqrt(best);
}

double MeshDistance::winding_number(const Vec3& p) const {
    // Sum of signed solid angles (Van Oosterom and Strackee).
    double total = 0.0;
    for (const auto& t : triangles_) {
        const Vec3 a = t[0] - p;
        const Vec3 b = t[1] - p;
        const Vec3 c = t[2] - p;
        const double la = a.norm();
        const double lb = b.norm();
        const double lc = c.norm();
        const double num = a.dot(b.cross(c));
        const double den = la * lb * lc + a.dot(b) * lc + a.dot(c) * lb + b.dot(c) * la;
        total += 2.0 * std::atan2(num, den);
    }
    return total / (4.0 * std::numbers::pi);
}

double MeshDistance::signed_distance(const Vec3& p) const {
    const double d = unsigned_distance(p);
    if (d == 0.0) return 0.0;
    return winding_number(p) > 0.5 ? -d : d;
}

double winding_number(const Mesh& mesh, const Vec3& p) { return MeshDistance(mesh).winding_number(p); }

double signed_distance(const Mesh& mesh, const Vec3& p) { return MeshDistance(mesh).signed_distance(p); }

// ---------------------------------------------------------------------------
// Lattices and baking

GridSpec cubic_grid_spec(const Aabb& box, int dims, int padding) {
    if (dims < 2 * padding + 2) throw ParameterError("grid dims too small for padding");
    const double extent = box.extents().maxCoeff();
    GridSpec spec;
    spec.spacing = extent / static_cast<double>(dims - 1 - 2 * padding);
    if (!(spec.spacing > 0.0)) throw ParameterError("cannot build a grid around an empty box");
    spec.dims = {dims, dims, dims};
    spec.origin = box.center() - Vec3::Constant(0.5 * spec.spacing * (dims - 1));
    return spec;
}

namespace {

GridSpec padded_spec(const Aabb& box, double h, int padding) {
    GridSpec spec;
    spec.spacing = h;
    for (int a = 0; a < 3; ++a)
        spec.dims[static_cast<std::size_t>(a)] = static_cast<int>(std::ceil(box.extents()[a] / h - 1e-9)) + 1 + 2 * padding;
    for (int a = 0; a < 3; ++a) {
        const double span = h * (spec.dims[static_cast<std::size_t>(a)] - 1);
        spec.origin[a] = box.center()[a] - 0.5 * span;
    }
    return spec;
}

}  // namespace

GridSpec grid_spec_for_points(const Aabb& box, std::size_t target_points, int padding) {
    const double extent = box.extents().maxCoeff();
    if (!(extent > 0.0)) throw ParameterError("cannot build a grid around an empty box");
    // Largest spacing whose node count still reaches the target.
    double lo = extent * 1e-4;
    double hi = extent;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (padded_spec(box, mid, padding).point_count() >= target_points)
            lo = mid;
        else
            hi = mid;
    }
    const GridSpec above = padded_spec(box, lo, padding);
    const GridSpec below = padded_spec(box, hi, padding);
    const auto gap = [&](const GridSpec& s) {
        return std::abs(static_cast<double>(s.point_count()) - static_cast<double>(target_points));
    };
    return gap(below) < gap(above) ? below : above;
}

SdfGrid bake_sdf(const Mesh& mesh, const GridSpec& spec) {
    const Aabb mb = bounds(mesh);
    const Aabb padded{mb.min - Vec3::Constant(2.0 * spec.spacing), mb.max + Vec3::Constant(2.0 * spec.spacing)};
    const double tol = 1e-9 * std::max(1.0, mb.extents().maxCoeff());
    if (!(spec.spacing > 0.0) || !spec.box().contains(padded, tol))
        throw ParameterError("grid does not cover mesh '" + mesh.name + "' with two cells of padding");

    const MeshDistance dist(mesh);
    SdfGrid grid;
    grid.spec = spec;
    grid.values.resize(static_cast<Eigen::Index>(spec.point_count()));
    const std::size_t per_chunk = static_cast<std::size_t>(spec.dims[0]) * spec.dims[1];
    parallel_chunks(static_cast<std::size_t>(spec.dims[2]), [&](std::size_t k) {
        for (std::size_t n = k * per_chunk; n < (k + 1) * per_chunk; ++n)
            grid.values[static_cast<Eigen::Index>(n)] = dist.signed_distance(spec.node(n));
    });
    return grid;
}

// ---------------------------------------------------------------------------
// Binary grid format

namespace {

static_assert(std::endian::native == std::endian::little, "grid I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    char buf[sizeof(T)];
    if (!in.read(buf, sizeof(T))) throw InputError("truncated SDF grid file");
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

}  // namespace

void write_sdf_grid(std::ostream& out, const SdfGrid& grid) {
    for (int d : grid.spec.dims) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (int a = 0; a < 3; ++a) put<double>(out, grid.spec.origin[a]);
    put<double>(out, grid.spec.spacing);
    for (Eigen::Index i = 0; i < grid.values.size(); ++i) put<float>(out, static_cast<float>(grid.values[i]));
}

void save_sdf_grid(const std::filesystem::path& path, const SdfGrid& grid) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write SDF grid: " + path.string());
    write_sdf_grid(out, grid);
}

SdfGrid read_sdf_grid(std::istream& in) {
    SdfGrid grid;
    for (int& d : grid.spec.dims) {
        d = static_cast<int>(get<std::uint32_t>(in));
        if (d < 2) throw InputError("SDF grid dims must be at least 2");
    }
    for (int a = 0; a < 3; ++a) grid.spec.origin[a] = get<double>(in);
    grid.spec.spacing = get<double>(in);
    if (!(grid.spec.spacing > 0.0)) throw InputError("SDF grid spacing must be positive");
    grid.values.resize(static_cast<Eigen::Index>(grid.spec.point_count()));
    for (Eigen::Index i = 0; i < grid.values.size(); ++i) grid.values[i] = get<float>(in);
    return grid;
}

SdfGrid load_sdf_grid(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open SDF grid: " + path.string());
    return read_sdf_grid(in);
}

}  // namespace silpack
