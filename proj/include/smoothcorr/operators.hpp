#pragma once

#include "smoothcorr/mesh.hpp"

namespace smoothcorr {

// Diagonal mass matrix stored as its diagonal (entries in area units).
using MassMatrix = Eigen::VectorXd;

// Cotangent stiffness matrix W with the sign convention that makes
// g' W g the Dirichlet energy of g: off-diagonals are -1/2 * sum of
// cotangents opposite the edge, diagonals make rows sum to zero.
// No cotangent clamping; boundary edges carry a single cotangent term.
inline SpMat cotangent_stiffness(const TriangleMesh& mesh) {
    constexpr double kCotCap = 1e8;
    const int n = mesh.n_vertices();
    std::vector<Triplet> triplets;
    triplets.reserve(static_cast<std::size_t>(mesh.n_faces()) * 12);
    for (int f = 0; f < mesh.n_faces(); ++f) {
        const int vi[3] = {mesh.faces(f, 0), mesh.faces(f, 1), mesh.faces(f, 2)};
        for (int c = 0; c < 3; ++c) {
            const int k = vi[c];
            const int i = vi[(c + 1) % 3];
            const int j = vi[(c + 2) % 3];
            const Eigen::Vector3d u = mesh.vertices.row(i) - mesh.vertices.row(k);
            const Eigen::Vector3d v = mesh.vertices.row(j) - mesh.vertices.row(k);
            const double cross_norm = u.cross(v).norm();
            check(cross_norm > 0.0, "invariant",
                  "near-degenerate triangle in face " + std::to_string(f));
            const double cot = u.dot(v) / cross_norm;
            check(std::abs(cot) <= kCotCap, "invariant",
                  "near-degenerate triangle in face " + std::to_string(f) +
                      " (cotangent magnitude exceeds cap)");
            const double w = 0.5 * cot;
            triplets.emplace_back(i, j, -w);
            triplets.emplace_back(j, i, -w);
            triplets.emplace_back(i, i, w);
            triplets.emplace_back(j, j, w);
        }
    }
    SpMat W(n, n);
    W.setFromTriplets(triplets.begin(), triplets.end());
    W.makeCompressed();
    return W;
}

inline MassMatrix lumped_mass(const TriangleMesh& mesh) { return vertex_areas(mesh); }

// g' W g, clamped to zero when a tiny negative value is within the PSD
// tolerance of floating-point assembly.
inline double dirichlet_energy(const SpMat& W, const Eigen::VectorXd& g) {
    check(g.size() == W.rows(), "dimension",
          "dirichlet_energy: vector length " + std::to_string(g.size()) +
              " does not match operator size " + std::to_string(W.rows()));
    const double e = g.dot(W * g);
    if (e < 0.0) {
        check(e >= -1e-9 * g.squaredNorm(), "invariant",
              "dirichlet_energy: quadratic form below PSD tolerance");
        return 0.0;
    }
    return e;
}

// ---------------------------------------------------------------------------
// Operator cache container ("SCOP"): magic, version byte, n, nnz,
// coordinate triplets, then the mass diagonal. Little-endian, 64-bit
// floats and 32-bit indices.

struct Operators {
    SpMat stiffness;
    MassMatrix mass;
};

inline void save_operators(const Operators& ops, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        check(out.good(), "io", "cannot open cache file for writing: " + tmp);
        out.write("SCOP", 4);
        binio::put_u8(out, 1);
        const auto n = static_cast<std::uint32_t>(ops.stiffness.rows());
        const auto nnz = static_cast<std::uint32_t>(ops.stiffness.nonZeros());
        binio::put_u32(out, n);
        binio::put_u32(out, nnz);
        for (int c = 0; c < ops.stiffness.outerSize(); ++c) {
            for (SpMat::InnerIterator it(ops.stiffness, c); it; ++it) {
                binio::put_u32(out, static_cast<std::uint32_t>(it.row()));
                binio::put_u32(out, static_cast<std::uint32_t>(it.col()));
                binio::put_f64(out, it.value());
            }
        }
        for (std::uint32_t i = 0; i < n; ++i) binio::put_f64(out, ops.mass(i));
        check(out.good(), "io", "write failure: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

inline Operators load_operators(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "io", "cannot open cache file: " + path);
    char magic[4];
    binio::get_bytes(in, magic, 4);
    check(std::memcmp(magic, "SCOP", 4) == 0, "parse", path + ": bad operator cache magic");
    const auto version = binio::get_u8(in);
    check(version == 1, "parse", path + ": unsupported cache version " + std::to_string(version));
    const auto n = binio::get_u32(in);
    const auto nnz = binio::get_u32(in);
    std::vector<Triplet> triplets;
    triplets.reserve(nnz);
    for (std::uint32_t t = 0; t < nnz; ++t) {
        const auto r = binio::get_u32(in);
        const auto c = binio::get_u32(in);
        const double v = binio::get_f64(in);
        check(r < n && c < n, "parse", path + ": triplet index out of range");
        triplets.emplace_back(static_cast<int>(r), static_cast<int>(c), v);
    }
    Operators ops;
    ops.stiffness.resize(n, n);
    ops.stiffness.setFromTriplets(triplets.begin(), triplets.end());
    ops.stiffness.makeCompressed();
    ops.mass.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) ops.mass(i) = binio::get_f64(in);
    check(ops.mass.minCoeff() > 0.0, "invariant", path + ": nonpositive mass entry");
    return ops;
}

}  // namespace smoothcorr
