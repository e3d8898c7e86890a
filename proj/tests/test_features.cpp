#include "smoothcorr/features.hpp"
#include "smoothcorr/synth.hpp"

#include "test_util.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace smoothcorr;
using testutil::TempDir;

namespace {

SpectralBasis sphere_basis(int subdivisions, int k) {
    const TriangleMesh mesh = make_icosphere(subdivisions);
    return eigenbasis(cotangent_stiffness(mesh), lumped_mass(mesh), k);
}

Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) m(r, c) = rng.normal();
    return m;
}

// loss(theta) = sum(upstream .* forward(theta)), the scalar whose gradient
// backward() reports.
double probe_loss(const ModelParams& params, const Eigen::MatrixXd& X, const SpectralBasis* basis,
                  const Eigen::MatrixXd& upstream) {
    return upstream.cwiseProduct(forward(params, X, basis)).sum();
}

void check_backward_against_fd(const ModelParams& params, const Eigen::MatrixXd& X,
                               const SpectralBasis* basis) {
    Rng rng(99, "upstream");
    const Eigen::MatrixXd out = forward(params, X, basis);
    const Eigen::MatrixXd upstream =
        random_matrix(rng, static_cast<int>(out.rows()), static_cast<int>(out.cols()));

    const Eigen::VectorXd analytic = flatten(backward(params, X, basis, upstream));
    const Eigen::VectorXd theta = flatten(params);
    const double step = 1e-5;
    ModelParams work = params;
    for (long i = 0; i < theta.size(); ++i) {
        Eigen::VectorXd t = theta;
        t(i) += step;
        unflatten(t, work);
        const double up = probe_loss(work, X, basis, upstream);
        t(i) -= 2.0 * step;
        unflatten(t, work);
        const double down = probe_loss(work, X, basis, upstream);
        const double fd = (up - down) / (2.0 * step);
        const double denom = std::max({1e-6, std::abs(fd), std::abs(analytic(i))});
        INFO("parameter index " << i);
        CHECK(std::abs(fd - analytic(i)) / denom < 1e-4);
    }
}

}  // namespace

TEST_CASE("init_params is seed-deterministic with the documented shapes") {
    const ModelParams a = init_params(5, 3, {8, 8}, 4, 2);
    const ModelParams b = init_params(5, 3, {8, 8}, 4, 2);
    const ModelParams c = init_params(6, 3, {8, 8}, 4, 2);
    CHECK(flatten(a) == flatten(b));
    CHECK(flatten(a) != flatten(c));

    REQUIRE(a.blocks.size() == 2);
    CHECK(a.blocks[0].log_times.size() == 3);
    CHECK(a.blocks[0].w1.rows() == 3);
    CHECK(a.blocks[0].w1.cols() == 8);
    CHECK(a.blocks[1].log_times.size() == 8);
    CHECK(a.blocks[1].w2.rows() == 8);
    CHECK(a.w_out.rows() == 8);
    CHECK(a.w_out.cols() == 4);
    CHECK(a.b_out.size() == 4);
    CHECK(param_count(a) == flatten(a).size());

    CHECK_THROWS_AS(init_params(1, 3, {8}, 4, 2), Error);
    CHECK_THROWS_AS(init_params(1, 0, {8}, 4, 1), Error);
}

TEST_CASE("zero output weights produce constant rows equal to the bias") {
    const SpectralBasis basis = sphere_basis(0, 4);
    ModelParams params = init_params(2, 3, {6}, 5, 1);
    params.w_out.setZero();
    params.b_out << 1, 2, 3, 4, 5;
    const TriangleMesh mesh = make_icosphere(0);
    const FeatureMatrix G = forward(params, mesh.vertices, &basis);
    REQUIRE(G.rows() == 12);
    REQUIRE(G.cols() == 5);
    for (int r = 0; r < G.rows(); ++r)
        CHECK((G.row(r).transpose() - params.b_out).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a single block with an identity-wired MLP reduces to spectral diffusion") {
    const TriangleMesh mesh = make_icosphere(1);
    const SpectralBasis basis = sphere_basis(1, 10);

    ModelParams params = init_params(7, 1, {1}, 1, 1);
    params.blocks[0].w2.setZero();  // kills the MLP branch; residual passes diffusion through
    params.blocks[0].b2.setZero();
    params.w_out(0, 0) = 1.0;
    params.b_out(0) = 0.0;
    params.blocks[0].log_times(0) = std::log(0.25);

    const Eigen::MatrixXd X = mesh.vertices.col(0);
    const FeatureMatrix G = forward(params, X, &basis);

    const double t = 0.25 / basis.eigenvalues.maxCoeff();
    const Eigen::MatrixXd expected =
        spectral_diffuse(basis, X, Eigen::VectorXd::Constant(1, t));
    CHECK((G - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("identity-wired head with no basis is the identity map") {
    ModelParams params = init_params(7, 1, {1}, 1, 1);
    params.blocks[0].w2.setZero();
    params.blocks[0].b2.setZero();
    params.w_out(0, 0) = 1.0;
    params.b_out(0) = 0.0;
    Rng rng(1, "x");
    const Eigen::MatrixXd X = random_matrix(rng, 20, 1);
    const FeatureMatrix G = forward(params, X, nullptr);
    CHECK((G - X).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward is equivariant under vertex permutation") {
    const TriangleMesh mesh = make_icosphere(1);
    const SpectralBasis basis = sphere_basis(1, 8);
    const ModelParams params = init_params(3, 3, {6, 6}, 4, 2);
    const FeatureMatrix G = forward(params, mesh.vertices, &basis);

    const int n = basis.n();
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = (i * 17 + 5) % n;  // 17 coprime to 42
    SpectralBasis pbasis = basis;
    Eigen::MatrixXd pX(n, 3);
    for (int i = 0; i < n; ++i) {
        pbasis.phi.row(perm[i]) = basis.phi.row(i);
        pbasis.mass(perm[i]) = basis.mass(i);
        pX.row(perm[i]) = mesh.vertices.row(i);
    }
    const FeatureMatrix pG = forward(params, pX, &pbasis);
    for (int i = 0; i < n; ++i)
        CHECK((pG.row(perm[i]) - G.row(i)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("forward validates input dimensions") {
    const SpectralBasis basis = sphere_basis(0, 4);
    const ModelParams params = init_params(1, 3, {4}, 2, 1);
    CHECK_THROWS_AS(forward(params, Eigen::MatrixXd::Ones(12, 2), &basis), Error);
    CHECK_THROWS_AS(forward(params, Eigen::MatrixXd::Ones(11, 3), &basis), Error);
}

TEST_CASE("backward matches central finite differences with a basis") {
    const TriangleMesh mesh = make_icosphere(1);
    const SpectralBasis basis = sphere_basis(1, 6);
    const ModelParams params = init_params(21, 3, {4, 4}, 3, 2);
    check_backward_against_fd(params, mesh.vertices, &basis);
}

TEST_CASE("backward matches central finite differences without a basis") {
    Rng rng(4, "x");
    const Eigen::MatrixXd X = random_matrix(rng, 15, 3);
    const ModelParams params = init_params(22, 3, {5, 5}, 3, 2);
    check_backward_against_fd(params, X, nullptr);
}

TEST_CASE("backward matches finite differences when widths break the residual") {
    const TriangleMesh mesh = make_icosphere(1);
    const SpectralBasis basis = sphere_basis(1, 5);
    // in=3 vs width 6: first block cannot be residual; second block can.
    const ModelParams params = init_params(23, 3, {6, 6}, 2, 2);
    check_backward_against_fd(params, mesh.vertices, &basis);
}

TEST_CASE("backward is linear in the upstream gradient") {
    const TriangleMesh mesh = make_icosphere(0);
    const SpectralBasis basis = sphere_basis(0, 4);
    const ModelParams params = init_params(9, 3, {4}, 2, 1);
    Rng rng(5, "upstream");
    const Eigen::MatrixXd up = random_matrix(rng, 12, 2);

    const Eigen::VectorXd g1 = flatten(backward(params, mesh.vertices, &basis, up));
    const Eigen::VectorXd g2 =
        flatten(backward(params, mesh.vertices, &basis, Eigen::MatrixXd(2.0 * up)));
    const Eigen::VectorXd gz =
        flatten(backward(params, mesh.vertices, &basis, Eigen::MatrixXd(0.0 * up)));
    CHECK((g2 - 2.0 * g1).cwiseAbs().maxCoeff() < 1e-12 * std::max(1.0, g1.cwiseAbs().maxCoeff()));
    CHECK(gz.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("l2_normalize_rows on a known row") {
    Eigen::MatrixXd G(2, 2);
    G << 3, 4, 0.5, 0;
    const Eigen::MatrixXd U = l2_normalize_rows(G);
    CHECK(U(0, 0) == Catch::Approx(0.6).epsilon(1e-15));
    CHECK(U(0, 1) == Catch::Approx(0.8).epsilon(1e-15));
    CHECK(U(1, 0) == Catch::Approx(1.0).epsilon(1e-15));

    G(1, 0) = 0.0;
    CHECK_THROWS_MATCHES(l2_normalize_rows(G), Error,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("zero-norm feature row 1")));
}

TEST_CASE("row normalization backward matches finite differences") {
    Rng rng(8, "norm");
    const Eigen::MatrixXd G = random_matrix(rng, 6, 4);
    const Eigen::MatrixXd up = random_matrix(rng, 6, 4);
    const detail::RowNormalized cache = detail::normalize_rows_cached(G);
    const Eigen::MatrixXd analytic = detail::normalize_rows_backward(cache, up);

    const double step = 1e-6;
    for (int r = 0; r < G.rows(); ++r) {
        for (int c = 0; c < G.cols(); ++c) {
            Eigen::MatrixXd g = G;
            g(r, c) += step;
            const double upv = up.cwiseProduct(detail::normalize_rows_cached(g).unit).sum();
            g(r, c) -= 2.0 * step;
            const double dnv = up.cwiseProduct(detail::normalize_rows_cached(g).unit).sum();
            const double fd = (upv - dnv) / (2.0 * step);
            CHECK(std::abs(fd - analytic(r, c)) < 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("heat kernel signature matches a direct per-vertex sum") {
    const SpectralBasis basis = sphere_basis(1, 8);
    Eigen::VectorXd times(2);
    times << 0.1, 0.7;
    const Eigen::MatrixXd hks = heat_kernel_signature(basis, times);
    REQUIRE(hks.rows() == basis.n());
    REQUIRE(hks.cols() == 2);
    for (int v = 0; v < basis.n(); v += 7) {
        for (int j = 0; j < 2; ++j) {
            double direct = 0.0;
            for (int i = 0; i < basis.k(); ++i)
                direct += std::exp(-basis.eigenvalues(i) * times(j)) * basis.phi(v, i) *
                          basis.phi(v, i);
            CHECK(hks(v, j) == Catch::Approx(direct).epsilon(1e-12));
        }
    }
    CHECK(hks.minCoeff() > 0.0);
}

TEST_CASE("heat kernel signature saturates at one over the surface area") {
    const TriangleMesh mesh = make_icosphere(1);
    const SpectralBasis basis =
        eigenbasis(cotangent_stiffness(mesh), lumped_mass(mesh), 6);
    const Eigen::MatrixXd hks =
        heat_kernel_signature(basis, Eigen::VectorXd::Constant(1, 1e6));
    const double expected = 1.0 / total_area(mesh);
    CHECK((hks.array() - expected).abs().maxCoeff() < 1e-9);
}

TEST_CASE("flatten and unflatten are inverse") {
    const ModelParams params = init_params(13, 3, {4, 6}, 5, 2);
    ModelParams other = init_params(14, 3, {4, 6}, 5, 2);
    const Eigen::VectorXd flat = flatten(params);
    unflatten(flat, other);
    CHECK(flatten(other) == flat);

    CHECK_THROWS_AS(unflatten(Eigen::VectorXd::Zero(3), other), Error);
}

TEST_CASE("checkpoint round trip restores parameters bit for bit") {
    TempDir dir;
    const ModelParams params = init_params(31, 3, {5, 7}, 4, 2);
    const auto path = dir.file("model.scmp");
    save_checkpoint(params, path.string());
    const ModelParams back = load_checkpoint(path.string());
    CHECK(back.in_dim == 3);
    CHECK(back.widths == std::vector<int>{5, 7});
    CHECK(back.out_dim == 4);
    CHECK(flatten(back) == flatten(params));

    const std::string first = testutil::read_bytes(path);
    save_checkpoint(back, path.string());
    CHECK(testutil::read_bytes(path) == first);
}

TEST_CASE("checkpoint loader rejects corrupt files") {
    TempDir dir;
    const auto path = dir.file("model.scmp");
    testutil::write_text(path, "not a checkpoint at all");
    try {
        load_checkpoint(path.string());
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == "parse");
    }

    const ModelParams params = init_params(1, 2, {3}, 2, 1);
    save_checkpoint(params, path.string());
    std::string bytes = testutil::read_bytes(path);
    bytes.resize(bytes.size() - 3);
    testutil::write_text(path, bytes);
    CHECK_THROWS_AS(load_checkpoint(path.string()), Error);
}
