#pragma once

#include "smoothcorr/common.hpp"

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <utility>

namespace smoothcorr {

// Immutable after construction. Vertices are rows of an n x 3 matrix,
// faces are rows of an m x 3 index matrix.
struct TriangleMesh {
    Eigen::MatrixXd vertices;
    Eigen::MatrixXi faces;
    std::string name;

    int n_vertices() const { return static_cast<int>(vertices.rows()); }
    int n_faces() const { return static_cast<int>(faces.rows()); }
};

// Per-vertex adjacency with Euclidean edge lengths; symmetric by construction.
struct EdgeGraph {
    std::vector<std::vector<std::pair<int, double>>> adjacency;

    int n_vertices() const { return static_cast<int>(adjacency.size()); }
    std::size_t n_edges() const {
        std::size_t half = 0;
        for (const auto& a : adjacency) half += a.size();
        return half / 2;
    }
};

inline double bbox_diagonal(const TriangleMesh& mesh) {
    const Eigen::Vector3d lo = mesh.vertices.colwise().minCoeff();
    const Eigen::Vector3d hi = mesh.vertices.colwise().maxCoeff();
    return (hi - lo).norm();
}

inline double face_area(const TriangleMesh& mesh, int f) {
    const Eigen::Vector3d a = mesh.vertices.row(mesh.faces(f, 0));
    const Eigen::Vector3d b = mesh.vertices.row(mesh.faces(f, 1));
    const Eigen::Vector3d c = mesh.vertices.row(mesh.faces(f, 2));
    return 0.5 * (b - a).cross(c - a).norm();
}

inline double total_area(const TriangleMesh& mesh) {
    double area = 0.0;
    for (int f = 0; f < mesh.n_faces(); ++f) area += face_area(mesh, f);
    return area;
}

// Checks every TriangleMesh invariant; `where` names the offending source.
inline void validate_mesh(const TriangleMesh& mesh, const std::string& where) {
    const int n = mesh.n_vertices();
    check(n >= 3, "invariant", where + ": mesh needs at least 3 vertices, got " + std::to_string(n));
    check(mesh.n_faces() >= 1, "invariant", where + ": mesh needs at least 1 face");
    check(mesh.vertices.allFinite(), "invariant", where + ": non-finite vertex coordinate");

    std::vector<char> referenced(static_cast<std::size_t>(n), 0);
    for (int f = 0; f < mesh.n_faces(); ++f) {
        for (int c = 0; c < 3; ++c) {
            const int v = mesh.faces(f, c);
            check(v >= 0 && v < n, "invariant",
                  where + ": face " + std::to_string(f) + " references vertex " + std::to_string(v) +
                      " outside [0, " + std::to_string(n) + ")");
            referenced[static_cast<std::size_t>(v)] = 1;
        }
        check(mesh.faces(f, 0) != mesh.faces(f, 1) && mesh.faces(f, 1) != mesh.faces(f, 2) &&
                  mesh.faces(f, 0) != mesh.faces(f, 2),
              "invariant", where + ": face " + std::to_string(f) + " has repeated vertex indices");
    }
    for (int v = 0; v < n; ++v) {
        check(referenced[static_cast<std::size_t>(v)] != 0, "invariant",
              where + ": isolated vertex " + std::to_string(v));
    }

    const double diag2 = bbox_diagonal(mesh) * bbox_diagonal(mesh);
    const double min_area = 1e-12 * diag2;
    for (int f = 0; f < mesh.n_faces(); ++f) {
        check(face_area(mesh, f) > min_area, "invariant",
              where + ": degenerate face " + std::to_string(f) + " (area below threshold)");
    }
}

inline void validate_mesh(const TriangleMesh& mesh) {
    validate_mesh(mesh, mesh.name.empty() ? "mesh" : mesh.name);
}

namespace detail {

inline bool next_content_line(std::istream& in, std::string& line) {
    while (std::getline(in, line)) {
        const auto pos = line.find_first_not_of(" \t\r\n");
        if (pos == std::string::npos) continue;
        if (line[pos] == '#') continue;
        return true;
    }
    return false;
}

inline TriangleMesh parse_off(std::istream& in, const std::string& where) {
    std::string line;
    check(detail::next_content_line(in, line), "parse", where + ": empty OFF file");
    {
        std::istringstream hs(line);
        std::string magic;
        hs >> magic;
        check(magic == "OFF", "parse", where + ": missing OFF header");
    }
    check(detail::next_content_line(in, line), "parse", where + ": missing counts line");
    long nv = 0, nf = 0, ne = 0;
    {
        std::istringstream cs(line);
        check(static_cast<bool>(cs >> nv >> nf >> ne), "parse", where + ": malformed counts line");
    }
    check(nv >= 0 && nf >= 0, "parse", where + ": negative counts");

    TriangleMesh mesh;
    mesh.vertices.resize(nv, 3);
    for (long i = 0; i < nv; ++i) {
        check(detail::next_content_line(in, line), "parse",
              where + ": truncated vertex list at vertex " + std::to_string(i));
        std::istringstream vs(line);
        double x, y, z;
        check(static_cast<bool>(vs >> x >> y >> z), "parse",
              where + ": malformed vertex line " + std::to_string(i));
        mesh.vertices.row(i) << x, y, z;
    }
    mesh.faces.resize(nf, 3);
    for (long f = 0; f < nf; ++f) {
        check(detail::next_content_line(in, line), "parse",
              where + ": truncated face list at face " + std::to_string(f));
        std::istringstream fs(line);
        long arity, a, b, c;
        check(static_cast<bool>(fs >> arity >> a >> b >> c), "parse",
              where + ": malformed face line " + std::to_string(f));
        check(arity == 3, "parse", where + ": face " + std::to_string(f) + " is not a triangle");
        mesh.faces.row(f) << static_cast<int>(a), static_cast<int>(b), static_cast<int>(c);
    }
    return mesh;
}

inline int parse_obj_index(const std::string& token, long nv, const std::string& where) {
    // token forms: "i", "i/t", "i/t/n", "i//n"; indices are 1-based,
    // negative indices count from the end.
    const std::string head = token.substr(0, token.find('/'));
    check(!head.empty(), "parse", where + ": empty face index token");
    long idx = 0;
    try {
        idx = std::stol(head);
    } catch (const std::exception&) {
        fail("parse", where + ": malformed face index '" + token + "'");
    }
    if (idx < 0) idx = nv + idx + 1;
    check(idx >= 1 && idx <= nv, "parse",
          where + ": face index " + head + " outside valid range 1.." + std::to_string(nv));
    return static_cast<int>(idx - 1);
}

inline TriangleMesh parse_obj(std::istream& in, const std::string& where) {
    TriangleMesh mesh;
    std::vector<Eigen::Vector3d> verts;
    std::vector<Eigen::Vector3i> faces;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            double x, y, z;
            check(static_cast<bool>(ls >> x >> y >> z), "parse",
                  where + ": malformed v record at line " + std::to_string(lineno));
            verts.emplace_back(x, y, z);
        } else if (tag == "f") {
            std::vector<std::string> tokens;
            std::string tok;
            while (ls >> tok) tokens.push_back(tok);
            check(tokens.size() == 3, "parse",
                  where + ": non-triangular f record at line " + std::to_string(lineno));
            const long nv = static_cast<long>(verts.size());
            faces.emplace_back(parse_obj_index(tokens[0], nv, where),
                               parse_obj_index(tokens[1], nv, where),
                               parse_obj_index(tokens[2], nv, where));
        }
        // vn / vt / usemtl / g / o / s records are ignored
    }
    mesh.vertices.resize(static_cast<long>(verts.size()), 3);
    for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<long>(i)) = verts[i];
    mesh.faces.resize(static_cast<long>(faces.size()), 3);
    for (std::size_t f = 0; f < faces.size(); ++f) mesh.faces.row(static_cast<long>(f)) = faces[f];
    return mesh;
}

}  // namespace detail

inline TriangleMesh load_mesh(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "io", "cannot open mesh file: " + path);
    const std::string ext = std::filesystem::path(path).extension().string();
    TriangleMesh mesh;
    if (ext == ".off" || ext == ".OFF") {
        mesh = detail::parse_off(in, path);
    } else if (ext == ".obj" || ext == ".OBJ") {
        mesh = detail::parse_obj(in, path);
    } else {
        fail("parse", "unsupported mesh format '" + ext + "' for " + path);
    }
    mesh.name = std::filesystem::path(path).stem().string();
    validate_mesh(mesh, path);
    return mesh;
}

inline void save_mesh_off(const TriangleMesh& mesh, const std::string& path) {
    std::ofstream out(path);
    check(out.good(), "io", "cannot open mesh file for writing: " + path);
    out << "OFF\n" << mesh.n_vertices() << " " << mesh.n_faces() << " 0\n";
    out << std::setprecision(17);
    for (int v = 0; v < mesh.n_vertices(); ++v) {
        out << mesh.vertices(v, 0) << " " << mesh.vertices(v, 1) << " " << mesh.vertices(v, 2) << "\n";
    }
    for (int f = 0; f < mesh.n_faces(); ++f) {
        out << "3 " << mesh.faces(f, 0) << " " << mesh.faces(f, 1) << " " << mesh.faces(f, 2) << "\n";
    }
    check(out.good(), "io", "write failure: " + path);
}

// Barycentric (lumped) vertex areas: each face contributes a third of its
// area to each corner. Entries are positive and sum to the total area.
inline Eigen::VectorXd vertex_areas(const TriangleMesh& mesh) {
    Eigen::VectorXd areas = Eigen::VectorXd::Zero(mesh.n_vertices());
    for (int f = 0; f < mesh.n_faces(); ++f) {
        const double third = face_area(mesh, f) / 3.0;
        for (int c = 0; c < 3; ++c) areas(mesh.faces(f, c)) += third;
    }
    return areas;
}

// Area-weighted vertex normals, unit length. Isolated normal sums of zero
// length fall back to +z so the result is always usable as a direction field.
inline Eigen::MatrixXd vertex_normals(const TriangleMesh& mesh) {
    Eigen::MatrixXd normals = Eigen::MatrixXd::Zero(mesh.n_vertices(), 3);
    for (int f = 0; f < mesh.n_faces(); ++f) {
        const Eigen::Vector3d a = mesh.vertices.row(mesh.faces(f, 0));
        const Eigen::Vector3d b = mesh.vertices.row(mesh.faces(f, 1));
        const Eigen::Vector3d c = mesh.vertices.row(mesh.faces(f, 2));
        const Eigen::Vector3d cross = (b - a).cross(c - a);  // 2x area times unit normal
        for (int corner = 0; corner < 3; ++corner) normals.row(mesh.faces(f, corner)) += cross;
    }
    for (int v = 0; v < mesh.n_vertices(); ++v) {
        const double norm = normals.row(v).norm();
        if (norm > 0.0)
            normals.row(v) /= norm;
        else
            normals.row(v) = Eigen::RowVector3d(0.0, 0.0, 1.0);
    }
    return normals;
}

inline TriangleMesh normalize_to_unit_area(const TriangleMesh& mesh) {
    const double area = total_area(mesh);
    check(area > 0.0, "invariant", "cannot normalize zero-area mesh '" + mesh.name + "'");
    TriangleMesh out = mesh;
    out.vertices *= 1.0 / std::sqrt(area);
    return out;
}

inline EdgeGraph edge_graph(const TriangleMesh& mesh) {
    const int n = mesh.n_vertices();
    std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(n));
    auto add = [&](int u, int v) {
        auto& a = nbrs[static_cast<std::size_t>(u)];
        if (std::find(a.begin(), a.end(), v) == a.end()) a.push_back(v);
    };
    for (int f = 0; f < mesh.n_faces(); ++f) {
        const int i = mesh.faces(f, 0), j = mesh.faces(f, 1), k = mesh.faces(f, 2);
        add(i, j); add(j, i);
        add(j, k); add(k, j);
        add(k, i); add(i, k);
    }
    EdgeGraph graph;
    graph.adjacency.resize(static_cast<std::size_t>(n));
    for (int u = 0; u < n; ++u) {
        auto& a = nbrs[static_cast<std::size_t>(u)];
        std::sort(a.begin(), a.end());
        for (int v : a) {
            const double len = (mesh.vertices.row(u) - mesh.vertices.row(v)).norm();
            graph.adjacency[static_cast<std::size_t>(u)].emplace_back(v, len);
        }
    }
    return graph;
}

// ---------------------------------------------------------------------------
// Vertex-to-vertex maps, shared by ground-truth files and predicted point
// maps: plain text, one 0-based target index per source vertex line.

using PointMap = std::vector<int>;

inline PointMap load_point_map(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "io", "cannot open point map file: " + path);
    PointMap pmap;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto pos = line.find_first_not_of(" \t\r\n");
        if (pos == std::string::npos) continue;
        try {
            pmap.push_back(std::stoi(line));
        } catch (const std::exception&) {
            fail("parse", path + ": malformed index at line " + std::to_string(lineno));
        }
        check(pmap.back() >= 0, "invariant", path + ": negative index at line " + std::to_string(lineno));
    }
    check(!pmap.empty(), "parse", path + ": empty point map");
    return pmap;
}

inline void save_point_map(const PointMap& pmap, const std::string& path) {
    std::ofstream out(path);
    check(out.good(), "io", "cannot open point map file for writing: " + path);
    for (int v : pmap) out << v << "\n";
    check(out.good(), "io", "write failure: " + path);
}

}  // namespace smoothcorr
