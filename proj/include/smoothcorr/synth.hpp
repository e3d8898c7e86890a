#pragma once

#include "smoothcorr/spectral.hpp"

#include <json.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>

namespace smoothcorr {

// ---------------------------------------------------------------------------
// Templates. All are deterministic in their resolution parameters.

inline TriangleMesh make_icosphere(int subdivisions) {
    check(subdivisions >= 0 && subdivisions <= 6, "invariant",
          "icosphere: subdivision level out of range");
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Eigen::Vector3d> verts = {
        {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t},  {0, 1, t},
        {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& v : verts) v.normalize();
    std::vector<std::array<int, 3>> faces = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},  {5, 11, 4},
        {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6},  {3, 6, 8},
        {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};

    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            Eigen::Vector3d m = (verts[static_cast<std::size_t>(a)] +
                                 verts[static_cast<std::size_t>(b)]).normalized();
            verts.push_back(m);
            const int id = static_cast<int>(verts.size()) - 1;
            midpoint.emplace(key, id);
            return id;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        faces = std::move(next);
    }

    TriangleMesh mesh;
    mesh.name = "icosphere:" + std::to_string(subdivisions);
    mesh.vertices.resize(static_cast<long>(verts.size()), 3);
    for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<long>(i)) = verts[i];
    mesh.faces.resize(static_cast<long>(faces.size()), 3);
    for (std::size_t i = 0; i < faces.size(); ++i)
        mesh.faces.row(static_cast<long>(i)) << faces[i][0], faces[i][1], faces[i][2];
    validate_mesh(mesh);
    return mesh;
}

// Open side wall of a unit-radius cylinder, z in [-1, 1]: rings x segments
// quads, two triangles each, no caps.
inline TriangleMesh make_cylinder(int rings, int segments) {
    check(rings >= 1 && segments >= 3, "invariant", "cylinder: need rings >= 1, segments >= 3");
    const int n = (rings + 1) * segments;
    check(n <= 10000, "invariant", "cylinder: resolution exceeds vertex budget");
    TriangleMesh mesh;
    mesh.name = "cylinder:" + std::to_string(rings) + "x" + std::to_string(segments);
    mesh.vertices.resize(n, 3);
    for (int i = 0; i <= rings; ++i) {
        const double z = -1.0 + 2.0 * i / rings;
        for (int j = 0; j < segments; ++j) {
            const double a = 2.0 * kPi * j / segments;
            mesh.vertices.row(i * segments + j) << std::cos(a), std::sin(a), z;
        }
    }
    mesh.faces.resize(2 * rings * segments, 3);
    int f = 0;
    for (int i = 0; i < rings; ++i) {
        for (int j = 0; j < segments; ++j) {
            const int a = i * segments + j;
            const int b = i * segments + (j + 1) % segments;
            const int c = a + segments;
            const int d = b + segments;
            mesh.faces.row(f++) << a, b, d;
            mesh.faces.row(f++) << a, d, c;
        }
    }
    validate_mesh(mesh);
    return mesh;
}

// Flat rectangular plate with 3:1 aspect, alternating diagonals.
inline TriangleMesh make_bar(int resolution) {
    check(resolution >= 1, "invariant", "bar: resolution must be >= 1");
    const int nx = 3 * resolution + 1, ny = resolution + 1;
    check(nx * ny <= 10000, "invariant", "bar: resolution exceeds vertex budget");
    TriangleMesh mesh;
    mesh.name = "bar:" + std::to_string(resolution);
    mesh.vertices.resize(nx * ny, 3);
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x)
            mesh.vertices.row(y * nx + x) << 3.0 * x / (nx - 1), 1.0 * y / (ny - 1), 0.0;
    mesh.faces.resize(2 * (nx - 1) * (ny - 1), 3);
    int f = 0;
    for (int y = 0; y + 1 < ny; ++y) {
        for (int x = 0; x + 1 < nx; ++x) {
            const int a = y * nx + x, b = a + 1, c = a + nx, d = c + 1;
            if ((x + y) % 2 == 0) {
                mesh.faces.row(f++) << a, b, d;
                mesh.faces.row(f++) << a, d, c;
            } else {
                mesh.faces.row(f++) << a, b, c;
                mesh.faces.row(f++) << b, d, c;
            }
        }
    }
    validate_mesh(mesh);
    return mesh;
}

// Template string: "icosphere:S", "cylinder:RxS", "bar:R".
inline TriangleMesh generate_template(const std::string& kind_spec) {
    const auto colon = kind_spec.find(':');
    check(colon != std::string::npos, "parse",
          "template spec '" + kind_spec + "' missing ':<resolution>'");
    const std::string kind = kind_spec.substr(0, colon);
    const std::string args = kind_spec.substr(colon + 1);
    try {
        if (kind == "icosphere") return make_icosphere(std::stoi(args));
        if (kind == "bar") return make_bar(std::stoi(args));
        if (kind == "cylinder") {
            const auto x = args.find('x');
            check(x != std::string::npos, "parse", "cylinder spec needs '<rings>x<segments>'");
            return make_cylinder(std::stoi(args.substr(0, x)), std::stoi(args.substr(x + 1)));
        }
    } catch (const std::invalid_argument&) {
        fail("parse", "bad resolution in template spec '" + kind_spec + "'");
    } catch (const std::out_of_range&) {
        fail("parse", "bad resolution in template spec '" + kind_spec + "'");
    }
    fail("parse", "unknown template kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Deformation: a random low-frequency eigenfunction field applied along
// vertex normals plus a global bend about the x axis. Deterministic per
// seed; on degenerate output the magnitude is damped and the same field is
// retried, at most five times.

namespace detail {

inline bool faces_well_shaped(const TriangleMesh& mesh, double scale) {
    const double min_area = 1e-12 * scale * scale;
    for (int f = 0; f < mesh.n_faces(); ++f) {
        if (face_area(mesh, f) < min_area) return false;
        for (int c = 0; c < 3; ++c) {
            const Eigen::Vector3d p = mesh.vertices.row(mesh.faces(f, c));
            const Eigen::Vector3d q = mesh.vertices.row(mesh.faces(f, (c + 1) % 3));
            const Eigen::Vector3d r = mesh.vertices.row(mesh.faces(f, (c + 2) % 3));
            const Eigen::Vector3d u = q - p, v = r - p;
            const double cross = u.cross(v).norm();
            if (cross <= 0.0 || std::abs(u.dot(v)) / cross > 1e6) return false;
        }
    }
    return true;
}

}  // namespace detail

inline TriangleMesh deform(const TriangleMesh& mesh, const SpectralBasis& basis,
                           std::uint64_t seed, double magnitude) {
    check(magnitude >= 0.0, "invariant", "deform: magnitude must be nonnegative");
    if (magnitude == 0.0) return mesh;
    check(basis.n() == mesh.n_vertices(), "dimension", "deform: basis does not match mesh");
    check(basis.k() >= 2, "dimension", "deform: basis too small for a deformation field");

    Rng rng(seed, "deform");
    const int n_modes = std::min(8, basis.k() - 1);
    Eigen::VectorXd coeff(n_modes);
    for (int i = 0; i < n_modes; ++i) coeff(i) = rng.normal();
    const double bend = 2.0 * rng.uniform() - 1.0;

    Eigen::VectorXd field = basis.phi.middleCols(1, n_modes) * coeff;
    const double peak = field.cwiseAbs().maxCoeff();
    if (peak > 0.0) field /= peak;

    const Eigen::MatrixXd normals = vertex_normals(mesh);
    const double diag = bbox_diagonal(mesh);
    const Eigen::RowVector3d center =
        0.5 * (mesh.vertices.colwise().minCoeff() + mesh.vertices.colwise().maxCoeff());

    double mag = magnitude;
    for (int attempt = 0; attempt <= 5; ++attempt) {
        TriangleMesh out = mesh;
        out.vertices += (mag * diag) * field.asDiagonal() * normals;
        for (int v = 0; v < out.n_vertices(); ++v) {
            const double alpha = mag * bend * kPi * (out.vertices(v, 0) - center(0)) / diag;
            const double y = out.vertices(v, 1) - center(1);
            const double z = out.vertices(v, 2) - center(2);
            out.vertices(v, 1) = center(1) + y * std::cos(alpha) - z * std::sin(alpha);
            out.vertices(v, 2) = center(2) + y * std::sin(alpha) + z * std::cos(alpha);
        }
        if (detail::faces_well_shaped(out, diag)) return out;
        mag *= 0.5;
    }
    fail("invariant", "deform: persistent face degeneracy after damped retries");
}

// ---------------------------------------------------------------------------
// Shortest-edge-collapse decimation with a link-condition check. Returns the
// decimated mesh plus the map sending every original vertex to its nearest
// surviving vertex (its collapse-chain representative).

struct DecimateResult {
    TriangleMesh mesh;
    PointMap vertex_map;  // original index -> decimated index
};

inline DecimateResult decimate(const TriangleMesh& mesh, int target_vertices) {
    const int n = mesh.n_vertices();
    check(target_vertices >= 4, "invariant", "decimate: target below 4 vertices");
    check(target_vertices <= n, "invariant", "decimate: target exceeds vertex count");

    std::vector<Eigen::Vector3d> pos(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) pos[static_cast<std::size_t>(v)] = mesh.vertices.row(v);
    std::vector<std::array<int, 3>> faces(static_cast<std::size_t>(mesh.n_faces()));
    for (int f = 0; f < mesh.n_faces(); ++f)
        faces[static_cast<std::size_t>(f)] = {mesh.faces(f, 0), mesh.faces(f, 1), mesh.faces(f, 2)};
    std::vector<bool> face_alive(faces.size(), true);
    std::vector<int> parent(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) parent[static_cast<std::size_t>(v)] = v;
    const double diag = bbox_diagonal(mesh);

    auto face_ok = [&](const std::array<int, 3>& f) {
        const Eigen::Vector3d& a = pos[static_cast<std::size_t>(f[0])];
        const Eigen::Vector3d& b = pos[static_cast<std::size_t>(f[1])];
        const Eigen::Vector3d& c = pos[static_cast<std::size_t>(f[2])];
        const Eigen::Vector3d u = b - a, v = c - a;
        const double cross = u.cross(v).norm();
        if (0.5 * cross < 1e-12 * diag * diag) return false;
        const Eigen::Vector3d w = c - b;
        const double max_dot = std::max({std::abs(u.dot(v)), std::abs(u.dot(w)), std::abs(v.dot(w))});
        return max_dot / cross <= 1e6;
    };

    int alive = n;
    while (alive > target_vertices) {
        // Gather current edges and their incident data.
        std::map<std::pair<int, int>, std::vector<int>> edge_faces;
        std::map<int, std::set<int>> neighbors;
        for (std::size_t f = 0; f < faces.size(); ++f) {
            if (!face_alive[f]) continue;
            for (int c = 0; c < 3; ++c) {
                const int a = faces[f][static_cast<std::size_t>(c)];
                const int b = faces[f][static_cast<std::size_t>((c + 1) % 3)];
                edge_faces[std::minmax(a, b)].push_back(static_cast<int>(f));
                neighbors[a].insert(b);
                neighbors[b].insert(a);
            }
        }
        check(!edge_faces.empty(), "invariant", "decimate: ran out of edges");

        std::vector<std::tuple<double, int, int>> candidates;
        candidates.reserve(edge_faces.size());
        for (const auto& [edge, _] : edge_faces) {
            const double len = (pos[static_cast<std::size_t>(edge.first)] -
                                pos[static_cast<std::size_t>(edge.second)]).norm();
            candidates.emplace_back(len, edge.first, edge.second);
        }
        std::sort(candidates.begin(), candidates.end());

        bool collapsed = false;
        for (const auto& [len, u, v] : candidates) {
            const auto& shared = edge_faces[{u, v}];
            std::set<int> thirds;
            for (int f : shared)
                for (int w : faces[static_cast<std::size_t>(f)])
                    if (w != u && w != v) thirds.insert(w);
            std::vector<int> common;
            for (int w : neighbors[u])
                if (neighbors[v].count(w) > 0) common.push_back(w);
            if (common.size() != thirds.size()) continue;  // link condition

            const Eigen::Vector3d mid =
                0.5 * (pos[static_cast<std::size_t>(u)] + pos[static_cast<std::size_t>(v)]);
            const Eigen::Vector3d saved = pos[static_cast<std::size_t>(u)];
            pos[static_cast<std::size_t>(u)] = mid;
            bool geometry_ok = true;
            for (std::size_t f = 0; f < faces.size() && geometry_ok; ++f) {
                if (!face_alive[f]) continue;
                auto fc = faces[f];
                bool touches = false, dead = false;
                for (auto& w : fc) {
                    if (w == v) w = u;
                }
                for (int c = 0; c < 3; ++c) {
                    if (fc[static_cast<std::size_t>(c)] == u) touches = true;
                    if (fc[static_cast<std::size_t>(c)] == fc[static_cast<std::size_t>((c + 1) % 3)])
                        dead = true;
                }
                if (touches && !dead && !face_ok(fc)) geometry_ok = false;
            }
            if (!geometry_ok) {
                pos[static_cast<std::size_t>(u)] = saved;
                continue;
            }

            for (std::size_t f = 0; f < faces.size(); ++f) {
                if (!face_alive[f]) continue;
                auto& fc = faces[f];
                for (auto& w : fc)
                    if (w == v) w = u;
                if (fc[0] == fc[1] || fc[1] == fc[2] || fc[2] == fc[0]) face_alive[f] = false;
            }
            parent[static_cast<std::size_t>(v)] = u;
            --alive;
            collapsed = true;
            break;
        }
        check(collapsed, "invariant", "decimate: no collapsible edge left");
    }

    std::function<int(int)> find = [&](int v) {
        while (parent[static_cast<std::size_t>(v)] != v) {
            parent[static_cast<std::size_t>(v)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(v)])];
            v = parent[static_cast<std::size_t>(v)];
        }
        return v;
    };

    std::vector<int> new_index(static_cast<std::size_t>(n), -1);
    DecimateResult out;
    int next = 0;
    for (int v = 0; v < n; ++v)
        if (find(v) == v) new_index[static_cast<std::size_t>(v)] = next++;
    out.mesh.name = mesh.name + ":decimated";
    out.mesh.vertices.resize(next, 3);
    for (int v = 0; v < n; ++v)
        if (new_index[static_cast<std::size_t>(v)] >= 0)
            out.mesh.vertices.row(new_index[static_cast<std::size_t>(v)]) =
                pos[static_cast<std::size_t>(v)];
    std::vector<std::array<int, 3>> kept;
    for (std::size_t f = 0; f < faces.size(); ++f) {
        if (!face_alive[f]) continue;
        kept.push_back({new_index[static_cast<std::size_t>(faces[f][0])],
                        new_index[static_cast<std::size_t>(faces[f][1])],
                        new_index[static_cast<std::size_t>(faces[f][2])]});
    }
    out.mesh.faces.resize(static_cast<long>(kept.size()), 3);
    for (std::size_t f = 0; f < kept.size(); ++f)
        out.mesh.faces.row(static_cast<long>(f)) << kept[f][0], kept[f][1], kept[f][2];
    validate_mesh(out.mesh);

    out.vertex_map.resize(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v)
        out.vertex_map[static_cast<std::size_t>(v)] = new_index[static_cast<std::size_t>(find(v))];
    return out;
}

// ---------------------------------------------------------------------------

struct ShapePair {
    TriangleMesh mesh1, mesh2;
    PointMap gt;  // mesh1 vertex -> mesh2 vertex
    std::string generator;
    std::uint64_t seed = 0;
    double magnitude = 0.0;
};

inline ShapePair make_pair(const std::string& kind_spec, std::uint64_t seed, double magnitude,
                           double decimate_fraction = 1.0) {
    check(decimate_fraction > 0.0 && decimate_fraction <= 1.0, "invariant",
          "make_pair: decimate fraction must lie in (0, 1]");
    const TriangleMesh base = generate_template(kind_spec);
    const SpMat W = cotangent_stiffness(base);
    const MassMatrix A = lumped_mass(base);
    const int k = std::min(16, base.n_vertices() - 1);
    const SpectralBasis basis = eigenbasis(W, A, k);

    ShapePair pair;
    pair.generator = kind_spec;
    pair.seed = seed;
    pair.magnitude = magnitude;
    pair.mesh1 = deform(base, basis, substream_seed(seed, "shape", 0), magnitude);
    pair.mesh2 = deform(base, basis, substream_seed(seed, "shape", 1), magnitude);
    pair.mesh1.name = kind_spec + ":a";
    pair.mesh2.name = kind_spec + ":b";

    if (decimate_fraction < 1.0) {
        const int target =
            std::max(4, static_cast<int>(std::lround(decimate_fraction * pair.mesh2.n_vertices())));
        DecimateResult dec = decimate(pair.mesh2, target);
        pair.mesh2 = std::move(dec.mesh);
        pair.gt = std::move(dec.vertex_map);
    } else {
        pair.gt.resize(static_cast<std::size_t>(pair.mesh1.n_vertices()));
        for (std::size_t i = 0; i < pair.gt.size(); ++i) pair.gt[i] = static_cast<int>(i);
    }
    return pair;
}

// ---------------------------------------------------------------------------
// Dataset manifests: JSON {"pairs": [{mesh1, mesh2, gt, split}, ...]} with
// paths stored relative to the manifest file.

struct ManifestEntry {
    std::string mesh1, mesh2, gt;
    std::string split;  // train | test
};

struct DatasetManifest {
    std::vector<ManifestEntry> pairs;
};

inline void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    nlohmann::json j;
    j["pairs"] = nlohmann::json::array();
    for (const auto& e : manifest.pairs)
        j["pairs"].push_back(
            {{"mesh1", e.mesh1}, {"mesh2", e.mesh2}, {"gt", e.gt}, {"split", e.split}});
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        check(out.good(), "io", "cannot open manifest for writing: " + tmp);
        out << j.dump(2) << "\n";
        check(out.good(), "io", "write failure: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

// Loads a manifest and resolves every path against the manifest directory;
// all referenced files must exist.
inline DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "io", "cannot open manifest: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail("parse", path + ": " + e.what());
    }
    check(j.contains("pairs") && j["pairs"].is_array(), "parse",
          path + ": manifest missing 'pairs' array");
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    DatasetManifest manifest;
    for (const auto& p : j["pairs"]) {
        ManifestEntry e;
        try {
            e.mesh1 = (base / p.at("mesh1").get<std::string>()).string();
            e.mesh2 = (base / p.at("mesh2").get<std::string>()).string();
            e.gt = (base / p.at("gt").get<std::string>()).string();
            e.split = p.at("split").get<std::string>();
        } catch (const nlohmann::json::exception& ex) {
            fail("parse", path + ": bad manifest entry: " + ex.what());
        }
        check(e.split == "train" || e.split == "test", "parse",
              path + ": split must be train or test");
        for (const std::string& f : {e.mesh1, e.mesh2, e.gt})
            check(std::filesystem::exists(f), "io", "manifest references missing file: " + f);
        manifest.pairs.push_back(std::move(e));
    }
    return manifest;
}

// ---------------------------------------------------------------------------
// Operator/basis caching keyed by mesh file content (plus k for bases).

struct CacheStats {
    int hits = 0;
    int misses = 0;
};

struct CachedShape {
    Operators ops;
    SpectralBasis basis;
    std::string ops_path, basis_path;
};

inline std::string content_key(const std::string& mesh_path) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(hash_file(mesh_path)));
    return buf;
}

inline CachedShape ensure_cached(const std::string& mesh_path, int k,
                                 const std::string& cache_dir, CacheStats* stats = nullptr) {
    std::filesystem::create_directories(cache_dir);
    const std::string key = content_key(mesh_path);
    CachedShape out;
    out.ops_path = (std::filesystem::path(cache_dir) / (key + ".scop")).string();
    out.basis_path =
        (std::filesystem::path(cache_dir) / (key + "-k" + std::to_string(k) + ".scsb")).string();

    if (std::filesystem::exists(out.ops_path)) {
        out.ops = load_operators(out.ops_path);
        if (stats != nullptr) ++stats->hits;
    } else {
        const TriangleMesh mesh = load_mesh(mesh_path);
        out.ops.stiffness = cotangent_stiffness(mesh);
        out.ops.mass = lumped_mass(mesh);
        save_operators(out.ops, out.ops_path);
        if (stats != nullptr) ++stats->misses;
    }
    if (std::filesystem::exists(out.basis_path)) {
        out.basis = load_basis(out.basis_path, out.ops.mass);
        if (stats != nullptr) ++stats->hits;
    } else {
        out.basis = eigenbasis(out.ops.stiffness, out.ops.mass, k);
        save_basis(out.basis, out.basis_path);
        if (stats != nullptr) ++stats->misses;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Benchmark dataset generation: writes meshes, ground truth, and a manifest.

struct SynthConfig {
    std::vector<std::string> templates = {"icosphere:2", "cylinder:6x16"};
    int n_train = 20;
    int n_test = 10;
    double magnitude = 0.05;
    double decimate_fraction = 1.0;
    std::uint64_t seed = 1;
};

inline DatasetManifest generate_dataset(const SynthConfig& config, const std::string& out_dir) {
    check(!config.templates.empty(), "invariant", "generate_dataset: no templates");
    std::filesystem::create_directories(out_dir);
    DatasetManifest manifest;
    const int total = config.n_train + config.n_test;
    for (int i = 0; i < total; ++i) {
        const std::string& tmpl =
            config.templates[static_cast<std::size_t>(i) % config.templates.size()];
        const ShapePair pair = make_pair(tmpl, substream_seed(config.seed, "pair", i),
                                         config.magnitude, config.decimate_fraction);
        char tag[16];
        std::snprintf(tag, sizeof tag, "pair_%03d", i);
        ManifestEntry e;
        e.mesh1 = std::string(tag) + "_a.off";
        e.mesh2 = std::string(tag) + "_b.off";
        e.gt = std::string(tag) + ".gt";
        e.split = i < config.n_train ? "train" : "test";
        const std::filesystem::path base(out_dir);
        save_mesh_off(pair.mesh1, (base / e.mesh1).string());
        save_mesh_off(pair.mesh2, (base / e.mesh2).string());
        save_point_map(pair.gt, (base / e.gt).string());
        manifest.pairs.push_back(std::move(e));
    }
    save_manifest(manifest, (std::filesystem::path(out_dir) / "manifest.json").string());
    return manifest;
}

}  // namespace smoothcorr
