#include "smoothcorr/synth.hpp"

#include "test_util.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>

using namespace smoothcorr;
using testutil::TempDir;

namespace {

// Every edge of a closed triangle mesh borders exactly two faces.
bool is_closed(const TriangleMesh& mesh) {
    std::map<std::pair<int, int>, int> count;
    for (int f = 0; f < mesh.n_faces(); ++f)
        for (int c = 0; c < 3; ++c)
            ++count[std::minmax(mesh.faces(f, c), mesh.faces(f, (c + 1) % 3))];
    for (const auto& [edge, n] : count)
        if (n != 2) return false;
    return true;
}

int boundary_edge_count(const TriangleMesh& mesh) {
    std::map<std::pair<int, int>, int> count;
    for (int f = 0; f < mesh.n_faces(); ++f)
        for (int c = 0; c < 3; ++c)
            ++count[std::minmax(mesh.faces(f, c), mesh.faces(f, (c + 1) % 3))];
    int boundary = 0;
    for (const auto& [edge, n] : count)
        if (n == 1) ++boundary;
    return boundary;
}

SpectralBasis basis_of(const TriangleMesh& mesh, int k) {
    return eigenbasis(cotangent_stiffness(mesh), lumped_mass(mesh), k);
}

}  // namespace

TEST_CASE("icosphere counts and closedness") {
    const TriangleMesh ico0 = make_icosphere(0);
    CHECK(ico0.n_vertices() == 12);
    CHECK(ico0.n_faces() == 20);
    CHECK(is_closed(ico0));

    for (int s : {1, 2}) {
        const TriangleMesh ico = make_icosphere(s);
        CHECK(ico.n_faces() == 20 * (1 << (2 * s)));
        CHECK(ico.n_vertices() == 10 * (1 << (2 * s)) + 2);
        CHECK(is_closed(ico));
        // All vertices on the unit sphere.
        for (int v = 0; v < ico.n_vertices(); ++v)
            CHECK(ico.vertices.row(v).norm() == Catch::Approx(1.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(make_icosphere(-1), Error);
    CHECK_THROWS_AS(make_icosphere(7), Error);
}

TEST_CASE("cylinder counts and boundary") {
    const TriangleMesh cyl = make_cylinder(4, 8);
    CHECK(cyl.n_vertices() == 40);
    CHECK(cyl.n_faces() == 64);
    CHECK(boundary_edge_count(cyl) == 16);  // two open rims of 8 segments
    for (int v = 0; v < cyl.n_vertices(); ++v)
        CHECK(cyl.vertices.row(v).head<2>().norm() == Catch::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(make_cylinder(0, 8), Error);
    CHECK_THROWS_AS(make_cylinder(4, 2), Error);
}

TEST_CASE("bar counts and aspect") {
    const TriangleMesh bar = make_bar(2);
    CHECK(bar.n_vertices() == 7 * 3);
    CHECK(bar.n_faces() == 2 * 6 * 2);
    CHECK(bar.vertices.col(0).maxCoeff() == Catch::Approx(3.0));
    CHECK(bar.vertices.col(1).maxCoeff() == Catch::Approx(1.0));
    CHECK(bar.vertices.col(2).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(make_bar(0), Error);
}

TEST_CASE("template strings parse or fail loudly") {
    CHECK(generate_template("icosphere:1").n_vertices() == 42);
    CHECK(generate_template("cylinder:2x6").n_faces() == 24);
    CHECK(generate_template("bar:1").n_vertices() == 8);
    for (const std::string bad :
         {"icosphere", "icosphere:x", "cylinder:3", "torus:2", "bar:", "icosphere:99999999999999999999"}) {
        try {
            generate_template(bad);
            FAIL("expected throw for template: " + bad);
        } catch (const Error& e) {
            CHECK((e.code() == "parse" || e.code() == "invariant"));
        }
    }
}

TEST_CASE("deform with zero magnitude is the identity") {
    const TriangleMesh mesh = make_icosphere(1);
    const SpectralBasis basis = basis_of(mesh, 10);
    const TriangleMesh out = deform(mesh, basis, 42, 0.0);
    CHECK((out.vertices - mesh.vertices).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("deform is seed-deterministic and keeps connectivity") {
    const TriangleMesh mesh = make_icosphere(1);
    const SpectralBasis basis = basis_of(mesh, 10);
    const TriangleMesh a = deform(mesh, basis, 7, 0.05);
    const TriangleMesh b = deform(mesh, basis, 7, 0.05);
    const TriangleMesh c = deform(mesh, basis, 8, 0.05);
    CHECK((a.vertices - b.vertices).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.vertices - c.vertices).cwiseAbs().maxCoeff() > 0.0);
    CHECK((a.faces - mesh.faces).cwiseAbs().maxCoeff() == 0);
    CHECK_NOTHROW(validate_mesh(a));
    CHECK((a.vertices - mesh.vertices).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("deform displacement is bounded by the magnitude") {
    const TriangleMesh mesh = make_icosphere(2);
    const SpectralBasis basis = basis_of(mesh, 12);
    const double mag = 0.05;
    const TriangleMesh out = deform(mesh, basis, 3, mag);
    const double diag = bbox_diagonal(mesh);
    // Normal field bounded by mag*diag; the bend rotates by at most
    // mag*pi/2 at distance <= diag from the bend axis.
    const double bound = mag * diag * (1.0 + kPi);
    for (int v = 0; v < mesh.n_vertices(); ++v)
        CHECK((out.vertices.row(v) - mesh.vertices.row(v)).norm() <= bound + 1e-12);
}

TEST_CASE("small deformations are near-isometric") {
    const TriangleMesh mesh = make_icosphere(2);
    const SpectralBasis basis = basis_of(mesh, 16);
    const TriangleMesh out = deform(mesh, basis, 5, 0.02);
    const EdgeGraph g1 = edge_graph(mesh);
    int total = 0, close = 0;
    for (int u = 0; u < g1.n_vertices(); ++u) {
        for (const auto& [v, len] : g1.adjacency[static_cast<std::size_t>(u)]) {
            if (v < u) continue;
            const double len2 = (out.vertices.row(u) - out.vertices.row(v)).norm();
            ++total;
            if (std::abs(len2 / len - 1.0) <= 0.1) ++close;
        }
    }
    CHECK(static_cast<double>(close) / total >= 0.95);
}

TEST_CASE("decimate halves the vertex count and maps every source onto a survivor") {
    const TriangleMesh mesh = make_icosphere(2);
    const int n = mesh.n_vertices();
    const int target = n / 2;
    const DecimateResult res = decimate(mesh, target);

    CHECK(res.mesh.n_vertices() == target);
    CHECK_NOTHROW(validate_mesh(res.mesh));
    REQUIRE(res.vertex_map.size() == static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) {
        const int t = res.vertex_map[static_cast<std::size_t>(v)];
        CHECK(t >= 0);
        CHECK(t < res.mesh.n_vertices());
    }
    // Every decimated vertex is hit by at least one original.
    std::set<int> image(res.vertex_map.begin(), res.vertex_map.end());
    CHECK(static_cast<int>(image.size()) == res.mesh.n_vertices());
    // Surviving vertices keep positions reachable from the originals: each
    // mapped target lies within the collapse neighborhood.
    const double diag = bbox_diagonal(mesh);
    for (int v = 0; v < n; ++v) {
        const int t = res.vertex_map[static_cast<std::size_t>(v)];
        CHECK((mesh.vertices.row(v) - res.mesh.vertices.row(t)).norm() < diag);
    }
}

TEST_CASE("decimate validates its target") {
    const TriangleMesh mesh = make_icosphere(1);
    CHECK_THROWS_AS(decimate(mesh, 3), Error);
    CHECK_THROWS_AS(decimate(mesh, mesh.n_vertices() + 1), Error);
    const DecimateResult noop = decimate(mesh, mesh.n_vertices());
    CHECK(noop.mesh.n_vertices() == mesh.n_vertices());
}

TEST_CASE("make_pair without decimation uses the identity ground truth") {
    const ShapePair pair = make_pair("icosphere:1", 9, 0.03);
    CHECK(pair.mesh1.n_vertices() == 42);
    CHECK(pair.mesh2.n_vertices() == 42);
    for (std::size_t i = 0; i < pair.gt.size(); ++i)
        CHECK(pair.gt[i] == static_cast<int>(i));
    CHECK((pair.mesh1.vertices - pair.mesh2.vertices).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("make_pair with decimation produces a valid vertex map") {
    const ShapePair pair = make_pair("icosphere:1", 9, 0.03, 0.5);
    CHECK(pair.mesh2.n_vertices() == 21);
    REQUIRE(pair.gt.size() == static_cast<std::size_t>(pair.mesh1.n_vertices()));
    for (int t : pair.gt) {
        CHECK(t >= 0);
        CHECK(t < pair.mesh2.n_vertices());
    }
}

TEST_CASE("manifest round trip with relative paths") {
    TempDir dir;
    const TriangleMesh mesh = make_icosphere(0);
    save_mesh_off(mesh, dir.file("a.off").string());
    save_mesh_off(mesh, dir.file("b.off").string());
    save_point_map(PointMap(12, 0), dir.file("ab.gt").string());

    DatasetManifest manifest;
    manifest.pairs.push_back({"a.off", "b.off", "ab.gt", "train"});
    const auto path = dir.file("manifest.json");
    save_manifest(manifest, path.string());

    const DatasetManifest back = load_manifest(path.string());
    REQUIRE(back.pairs.size() == 1);
    CHECK(back.pairs[0].mesh1 == dir.file("a.off").string());
    CHECK(back.pairs[0].split == "train");
}

TEST_CASE("manifest loader rejects bad entries") {
    TempDir dir;
    const auto path = dir.file("manifest.json");

    testutil::write_text(path, "{ not json");
    try {
        load_manifest(path.string());
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == "parse");
    }

    testutil::write_text(path, R"({"pairs": [{"mesh1": "a.off", "mesh2": "b.off", "gt": "x.gt", "split": "train"}]})");
    try {
        load_manifest(path.string());
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == "io");  // referenced files missing
    }

    const TriangleMesh mesh = make_icosphere(0);
    save_mesh_off(mesh, dir.file("a.off").string());
    save_mesh_off(mesh, dir.file("b.off").string());
    save_point_map(PointMap(12, 0), dir.file("x.gt").string());
    testutil::write_text(path, R"({"pairs": [{"mesh1": "a.off", "mesh2": "b.off", "gt": "x.gt", "split": "validation"}]})");
    CHECK_THROWS_AS(load_manifest(path.string()), Error);
}

TEST_CASE("operator and basis caching hits on the second call with identical bytes") {
    TempDir dir;
    const TriangleMesh mesh = make_icosphere(1);
    const auto mesh_path = dir.file("shape.off");
    save_mesh_off(mesh, mesh_path.string());
    const std::string cache = dir.file("cache").string();

    CacheStats stats;
    const CachedShape first = ensure_cached(mesh_path.string(), 6, cache, &stats);
    CHECK(stats.misses == 2);
    CHECK(stats.hits == 0);
    const std::string ops_bytes = testutil::read_bytes(first.ops_path);
    const std::string basis_bytes = testutil::read_bytes(first.basis_path);

    const CachedShape second = ensure_cached(mesh_path.string(), 6, cache, &stats);
    CHECK(stats.hits == 2);
    CHECK(stats.misses == 2);
    CHECK(testutil::read_bytes(second.ops_path) == ops_bytes);
    CHECK(testutil::read_bytes(second.basis_path) == basis_bytes);
    CHECK((second.basis.phi - first.basis.phi).cwiseAbs().maxCoeff() == 0.0);

    // Different k: operators hit, basis missed, separate artifact.
    const CachedShape other_k = ensure_cached(mesh_path.string(), 8, cache, &stats);
    CHECK(other_k.basis_path != first.basis_path);
    CHECK(stats.misses == 3);
    CHECK(other_k.basis.k() == 8);

    // Touching the mesh content changes the key entirely.
    TriangleMesh moved = mesh;
    moved.vertices(0, 0) += 1e-9;
    save_mesh_off(moved, mesh_path.string());
    const CachedShape rekeyed = ensure_cached(mesh_path.string(), 6, cache, &stats);
    CHECK(rekeyed.ops_path != first.ops_path);
}

TEST_CASE("generate_dataset writes pairs and a consistent manifest") {
    TempDir dir;
    SynthConfig cfg;
    cfg.templates = {"icosphere:0", "bar:1"};
    cfg.n_train = 3;
    cfg.n_test = 2;
    cfg.magnitude = 0.02;
    cfg.seed = 4;
    const DatasetManifest manifest = generate_dataset(cfg, dir.path().string());
    REQUIRE(manifest.pairs.size() == 5);

    const DatasetManifest loaded =
        load_manifest((dir.path() / "manifest.json").string());
    REQUIRE(loaded.pairs.size() == 5);
    int train = 0, test = 0;
    for (const auto& e : loaded.pairs) {
        (e.split == "train" ? train : test) += 1;
        const TriangleMesh m1 = load_mesh(e.mesh1);
        const TriangleMesh m2 = load_mesh(e.mesh2);
        const PointMap gt = load_point_map(e.gt);
        CHECK(static_cast<int>(gt.size()) == m1.n_vertices());
        for (int t : gt) CHECK((t >= 0 && t < m2.n_vertices()));
    }
    CHECK(train == 3);
    CHECK(test == 2);

    // Alternating templates: first pair comes from the icosphere.
    CHECK(load_mesh(loaded.pairs[0].mesh1).n_vertices() == 12);
    CHECK(load_mesh(loaded.pairs[1].mesh1).n_vertices() == 8);
}

TEST_CASE("dataset generation is deterministic in the seed") {
    TempDir dir_a, dir_b;
    SynthConfig cfg;
    cfg.templates = {"icosphere:0"};
    cfg.n_train = 2;
    cfg.n_test = 0;
    cfg.magnitude = 0.04;
    cfg.seed = 11;
    generate_dataset(cfg, dir_a.path().string());
    generate_dataset(cfg, dir_b.path().string());
    for (const std::string name : {"pair_000_a.off", "pair_001_b.off", "manifest.json"}) {
        CHECK(testutil::read_bytes(dir_a.file(name)) == testutil::read_bytes(dir_b.file(name)));
    }
}
