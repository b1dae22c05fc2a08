#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <catred/core.hpp>

using namespace catred;

TEST_CASE("annihilation operator matrix elements") {
    SpaceShape s{5};
    Op a = annihilation(s, 0);
    for (int n = 1; n < 5; ++n) CHECK(std::abs(a.m(n - 1, n) - std::sqrt((double)n)) < 1e-15);
    CHECK(a.m.cwiseAbs().sum() == doctest::Approx(std::sqrt(1.) + std::sqrt(2.) + std::sqrt(3.) + 2.0));
}

TEST_CASE("coherent state is normalized and an approximate a-eigenstate") {
    Vec c = coherent_state(2.0, 101);
    CHECK(std::abs(c.norm() - 1.0) < 1e-12);
    Mat a = annihilation_single(101);
    CHECK((a * c - 2.0 * c).norm() < 1e-10);
}

TEST_CASE("coherent tail estimate") {
    CHECK(coherent_tail(4.0, 60) < 1e-12);
    CHECK(coherent_tail(16.0, 20) > 1e-12);
}

TEST_CASE("cat steady basis is orthonormal, traced and sector structured") {
    CatBasis b = cat_steady_basis(2.0, 60);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            cplx g = trace_prod(b.S[i].adjoint(), b.S[j]);
            CHECK(std::abs(g - (i == j ? 1.0 : 0.0)) < 1e-10);
        }
    // trace content: Tr S1 = sqrt(2), others traceless
    CHECK(std::abs(b.S[0].trace() - std::sqrt(2.0)) < 1e-10);
    for (int i = 1; i < 4; ++i) CHECK(std::abs(b.S[i].trace()) < 1e-10);
    // hermiticity
    for (int i = 0; i < 4; ++i) CHECK(is_hermitian(b.S[i], 1e-12));
    // code projector is sqrt(2) S1 and idempotent
    CHECK((b.code_projector - std::sqrt(2.0) * b.S[0]).norm() < 1e-12);
    CHECK((b.code_projector * b.code_projector - b.code_projector).norm() < 1e-10);
    // populations live on the even/even and odd/odd Fock sectors exactly
    for (int i = 0; i < 61; ++i)
        for (int j = 0; j < 61; ++j) {
            if ((i - j) % 2 != 0) {
                CHECK(b.S[0](i, j) == cplx(0, 0));
                CHECK(b.S[1](i, j) == cplx(0, 0));
            } else if (((i % 2) == 1) != ((j % 2) == 1)) {
                // mixed parity entries cannot appear in the diagonal sector
                CHECK(std::abs(b.S[0](i, j)) < 1e-300);
            }
        }
}

TEST_CASE("cat basis rejects insufficient truncation") {
    CHECK_THROWS_AS(cat_steady_basis(4.0, 20), std::invalid_argument);
}

TEST_CASE("tensor products and embeddings agree") {
    SpaceShape s{3, 4};
    Op a0 = annihilation(s, 0);
    Op a1 = annihilation(s, 1);
    Op t = tensor({Op(SpaceShape{3}, annihilation_single(3)), Op(SpaceShape{4}, identity(4))});
    CHECK((a0.m - t.m).norm() < 1e-15);
    Mat e = Mat(embed_sparse(annihilation_single(4), s, 1));
    CHECK((a1.m - e).norm() < 1e-15);
    CHECK((a0.m * a1.m - a1.m * a0.m).norm() < 1e-13);  // different modes commute
}

TEST_CASE("shape mismatches are rejected") {
    Op a(SpaceShape{3}, identity(3));
    Op b(SpaceShape{4}, identity(4));
    CHECK_THROWS_AS(a * b, std::invalid_argument);
    CHECK_THROWS_AS(a + b, std::invalid_argument);
    CHECK_THROWS_AS(Op(SpaceShape{3}, identity(4)), std::invalid_argument);
    CHECK_THROWS_AS(embed_sparse(identity(3), SpaceShape{3, 4}, 1), std::invalid_argument);
}

TEST_CASE("number operator") {
    SpaceShape s{3, 3};
    Op n1 = number_op(s, 1);
    Vec v = Vec::Zero(9);
    v(3 * 1 + 2) = 1.0;  // |1,2>
    CHECK(std::abs((n1.m * v - 2.0 * v).norm()) < 1e-15);
}
