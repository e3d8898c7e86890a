#include "smoothcorr/spectral.hpp"
#include "smoothcorr/synth.hpp"

#include "test_util.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace smoothcorr;
using testutil::TempDir;

namespace {

SpectralBasis sphere_basis(int subdivisions, int k, const EigOptions& opt = {}) {
    const TriangleMesh mesh = make_icosphere(subdivisions);
    return eigenbasis(cotangent_stiffness(mesh), lumped_mass(mesh), k, opt);
}

double a_orthonormality_defect(const SpectralBasis& basis) {
    const Eigen::MatrixXd gram =
        basis.phi.transpose() * (basis.mass.asDiagonal() * basis.phi);
    return (gram - Eigen::MatrixXd::Identity(basis.k(), basis.k())).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("dense eigenbasis reproduces the sphere spectrum") {
    // Unit sphere Laplace-Beltrami eigenvalues are l(l+1) with multiplicity
    // 2l+1: 0, then 2 three times, then 6 five times.
    const SpectralBasis basis = sphere_basis(2, 9);
    CHECK(std::abs(basis.eigenvalues(0)) < 1e-8);
    for (int i = 1; i <= 3; ++i)
        CHECK(basis.eigenvalues(i) == Catch::Approx(2.0).epsilon(0.05));
    for (int i = 4; i <= 8; ++i)
        CHECK(basis.eigenvalues(i) == Catch::Approx(6.0).epsilon(0.05));
    for (int i = 1; i < 9; ++i) CHECK(basis.eigenvalues(i) >= basis.eigenvalues(i - 1));
}

TEST_CASE("dense eigenbasis is A-orthonormal") {
    const SpectralBasis basis = sphere_basis(2, 12);
    CHECK(a_orthonormality_defect(basis) < 1e-7);
}

TEST_CASE("eigenpairs satisfy the generalized eigen equation") {
    const TriangleMesh mesh = make_cylinder(4, 10);
    const SpMat W = cotangent_stiffness(mesh);
    const MassMatrix A = lumped_mass(mesh);
    const SpectralBasis basis = eigenbasis(W, A, 8);
    for (int c = 0; c < basis.k(); ++c) {
        const Eigen::VectorXd resid =
            W * basis.phi.col(c) - basis.eigenvalues(c) * A.cwiseProduct(basis.phi.col(c));
        CHECK(resid.norm() < 1e-8 * std::max(1.0, basis.eigenvalues(c)));
    }
}

TEST_CASE("dirichlet energy of the i-th eigenfunction equals its eigenvalue") {
    const TriangleMesh mesh = make_icosphere(2);
    const SpMat W = cotangent_stiffness(mesh);
    const SpectralBasis basis = eigenbasis(W, lumped_mass(mesh), 10);
    CHECK(std::abs(dirichlet_energy(W, basis.phi.col(0))) < 1e-10);
    for (int i = 1; i < basis.k(); ++i) {
        const double e = dirichlet_energy(W, basis.phi.col(i));
        CHECK(e == Catch::Approx(basis.eigenvalues(i)).epsilon(1e-8));
    }
}

TEST_CASE("lanczos path agrees with the dense path") {
    const TriangleMesh mesh = make_icosphere(1);
    const SpMat W = cotangent_stiffness(mesh);
    const MassMatrix A = lumped_mass(mesh);
    const SpectralBasis dense = eigenbasis(W, A, 10);
    EigOptions opt;
    opt.dense_threshold = 1;  // force the iterative solver
    const SpectralBasis lanczos = eigenbasis(W, A, 10, opt);

    for (int i = 0; i < 10; ++i)
        CHECK(std::abs(lanczos.eigenvalues(i) - dense.eigenvalues(i)) <
              1e-6 * std::max(1.0, dense.eigenvalues(i)));
    CHECK(a_orthonormality_defect(lanczos) < 1e-7);
    for (int c = 0; c < 10; ++c) {
        const Eigen::VectorXd resid = W * lanczos.phi.col(c) -
                                      lanczos.eigenvalues(c) * A.cwiseProduct(lanczos.phi.col(c));
        CHECK(resid.norm() < 1e-5 * std::max(1.0, lanczos.eigenvalues(c)));
    }
}

TEST_CASE("eigenbasis validates arguments") {
    const TriangleMesh mesh = make_icosphere(0);
    const SpMat W = cotangent_stiffness(mesh);
    MassMatrix A = lumped_mass(mesh);
    CHECK_THROWS_AS(eigenbasis(W, A, 12), Error);  // k must stay below n
    CHECK_THROWS_AS(eigenbasis(W, A, 0), Error);
    A(3) = 0.0;
    CHECK_THROWS_AS(eigenbasis(W, A, 4), Error);
}

TEST_CASE("sign canonicalization makes the dominant entry positive") {
    const SpectralBasis basis = sphere_basis(1, 8);
    for (int c = 0; c < basis.k(); ++c) {
        int best = 0;
        for (int r = 1; r < basis.n(); ++r)
            if (std::abs(basis.phi(r, c)) > std::abs(basis.phi(best, c))) best = r;
        CHECK(basis.phi(best, c) > 0.0);
    }
}

TEST_CASE("eigenbasis records linear solves, projection path does not") {
    const TriangleMesh mesh = make_icosphere(1);
    const SpMat W = cotangent_stiffness(mesh);
    const MassMatrix A = lumped_mass(mesh);

    const auto before_eig = linear_solve_count().load();
    const SpectralBasis basis = eigenbasis(W, A, 6);
    CHECK(linear_solve_count().load() > before_eig);

    const int n = basis.n();
    const Eigen::MatrixXd Pi = Eigen::MatrixXd::Identity(n, n);
    PointMap identity(n);
    for (int i = 0; i < n; ++i) identity[i] = i;
    const auto before = linear_solve_count().load();
    const FunctionalMap C = project_softmap_to_fmap(Pi, basis, A, basis);
    const FunctionalMap C_gt = fmap_from_pointmap(identity, basis, A, basis);
    CHECK(linear_solve_count().load() == before);
    CHECK((C - C_gt).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("identity soft map projects to the identity functional map") {
    const SpectralBasis basis = sphere_basis(1, 6);
    const Eigen::MatrixXd Pi = Eigen::MatrixXd::Identity(basis.n(), basis.n());
    const FunctionalMap C = project_softmap_to_fmap(Pi, basis, basis.mass, basis);
    CHECK((C - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("fmap_from_pointmap equals projecting the binary selection matrix") {
    const SpectralBasis basis = sphere_basis(1, 5);
    const int n = basis.n();
    Rng rng(11, "pmap");
    PointMap pmap(n);
    Eigen::MatrixXd Pi = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        pmap[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        Pi(i, pmap[i]) = 1.0;
    }
    const FunctionalMap direct = fmap_from_pointmap(pmap, basis, basis.mass, basis);
    const FunctionalMap via_pi = project_softmap_to_fmap(Pi, basis, basis.mass, basis);
    CHECK((direct - via_pi).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("spectral diffusion damps eigenfunctions by exp(-lambda t)") {
    const SpectralBasis basis = sphere_basis(1, 8);
    const double t = 0.3;
    for (int i : {1, 4, 7}) {
        const Eigen::MatrixXd sig = basis.phi.col(i);
        const Eigen::MatrixXd out = spectral_diffuse(basis, sig, Eigen::VectorXd::Constant(1, t));
        const double factor = std::exp(-basis.eigenvalues(i) * t);
        CHECK((out - factor * sig).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("spectral diffusion preserves constants and kills detail at large t") {
    const SpectralBasis basis = sphere_basis(1, 10);
    const int n = basis.n();
    const Eigen::MatrixXd ones = Eigen::MatrixXd::Constant(n, 1, 1.0);
    const Eigen::MatrixXd kept =
        spectral_diffuse(basis, ones, Eigen::VectorXd::Constant(1, 5.0));
    CHECK((kept - ones).cwiseAbs().maxCoeff() < 1e-6);

    Rng rng(3, "diffuse");
    Eigen::MatrixXd noise(n, 1);
    for (int i = 0; i < n; ++i) noise(i, 0) = rng.normal();
    const Eigen::MatrixXd flat =
        spectral_diffuse(basis, noise, Eigen::VectorXd::Constant(1, 1e6));
    const double mean = basis.mass.dot(noise.col(0)) / basis.mass.sum();
    CHECK((flat.array() - mean).abs().maxCoeff() < 1e-6);
}

TEST_CASE("spectral diffusion validates inputs") {
    const SpectralBasis basis = sphere_basis(0, 4);
    const Eigen::MatrixXd sig = Eigen::MatrixXd::Ones(basis.n(), 2);
    CHECK_THROWS_AS(spectral_diffuse(basis, sig, Eigen::VectorXd::Constant(1, 0.1)), Error);
    Eigen::VectorXd times(2);
    times << 0.1, -0.1;
    CHECK_THROWS_AS(spectral_diffuse(basis, sig, times), Error);
}

TEST_CASE("basis cache round trip is exact and rewrite is byte-identical") {
    TempDir dir;
    const SpectralBasis basis = sphere_basis(1, 7);
    const auto path = dir.file("basis.scsb");
    save_basis(basis, path.string());
    const SpectralBasis back = load_basis(path.string(), basis.mass);
    CHECK((back.phi - basis.phi).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.eigenvalues - basis.eigenvalues).cwiseAbs().maxCoeff() == 0.0);

    const std::string first = testutil::read_bytes(path);
    save_basis(back, path.string());
    CHECK(testutil::read_bytes(path) == first);
}

TEST_CASE("basis cache rejects bad magic and mismatched mass") {
    TempDir dir;
    const SpectralBasis basis = sphere_basis(0, 3);
    const auto path = dir.file("basis.scsb");
    save_basis(basis, path.string());

    CHECK_THROWS_AS(load_basis(path.string(), Eigen::VectorXd::Ones(5)), Error);

    testutil::write_text(path, "XXXX-not-a-basis");
    try {
        load_basis(path.string(), basis.mass);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == "parse");
    }
}
