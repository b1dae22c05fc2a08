#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <catred/composite.hpp>
#include <catred/fullmodel.hpp>
#include <catred/reduction.hpp>

using namespace catred;

namespace {

// exchange Hamiltonian plus single-photon loss on both modes
Perturbation exchange_pert(int na, int nb, double eps, double kappa1) {
    Mat a = annihilation_single(na);
    Mat b = annihilation_single(nb);
    Perturbation p;
    p.hterms.push_back({eps, {a, Mat(b.adjoint())}});
    p.hterms.push_back({eps, {Mat(a.adjoint()), b}});
    p.jumps.push_back({0, Mat(std::sqrt(kappa1) * a)});
    p.jumps.push_back({1, Mat(std::sqrt(kappa1) * b)});
    return p;
}

// tensor steady basis (kron of per-factor bases), row-major factor 0 outer
SteadyBasis product_steady_basis(const SteadyBasis& a, const SteadyBasis& b) {
    SteadyBasis out;
    out.shape = SpaceShape{(int)(a.shape.dims[0]), (int)(b.shape.dims[0])};
    for (int da = 0; da < a.dbar(); ++da)
        for (int db = 0; db < b.dbar(); ++db) {
            out.S.push_back(kron(a.S[da], b.S[db]));
            out.J.push_back(kron(a.J[da], b.J[db]));
        }
    return out;
}

// joint channel whose step is exactly (local K_A) then (local K_B)
KrausChannel product_channel(const KrausChannel& ca, const KrausChannel& cb) {
    if (ca.has_u || cb.has_u) throw std::logic_error("product_channel: H-free channels only");
    KrausChannel ch;
    ch.dim = ca.dim * cb.dim;
    ch.dt = ca.dt;
    ch.has_u = false;
    ch.Mbar = kron(ca.Mbar, cb.Mbar);
    for (auto& lb : cb.Lbar) ch.Lbar.push_back(kron(ca.Mbar, lb));
    for (auto& la : ca.Lbar) ch.Lbar.push_back(kron(la, cb.Mbar));
    for (auto& la : ca.Lbar)
        for (auto& lb : cb.Lbar) ch.Lbar.push_back(Mat(std::sqrt(ca.dt) * kron(la, lb)));
    return ch;
}

Mat partial_trace_a(const Mat& j_a, const Mat& w, int na, int nb) {
    Mat out = Mat::Zero(nb, nb);
    for (int a1 = 0; a1 < na; ++a1)
        for (int a2 = 0; a2 < na; ++a2) {
            if (j_a(a2, a1) == cplx(0, 0) && std::abs(j_a(a2, a1)) == 0.0) continue;
            out += j_a(a2, a1) * w.block(a1 * nb, a2 * nb, nb, nb);
        }
    return out;
}

}  // namespace

TEST_CASE("a single local dissipator expands into three terms") {
    SpaceShape shape{3, 4};
    Perturbation p;
    p.jumps.push_back({0, Mat(0.7 * annihilation_single(3))});
    ProductTermDecomposition dec = decompose_perturbation(shape, p);
    CHECK(dec.terms.size() == 3);
    CHECK(reconstruction_residual(shape, dec, p) < 1e-12);
}

TEST_CASE("exchange perturbation with two losses has ten terms") {
    SpaceShape shape{6, 6};
    Perturbation p = exchange_pert(6, 6, 0.3, 0.05);
    ProductTermDecomposition dec = decompose_perturbation(shape, p);
    CHECK(dec.terms.size() == 10);
    CHECK(reconstruction_residual(shape, dec, p) < 1e-10);
}

TEST_CASE("zero perturbation decomposes to nothing") {
    SpaceShape shape{3, 3};
    ProductTermDecomposition dec = decompose_perturbation(shape, {});
    CHECK(dec.terms.empty());
}

TEST_CASE("malformed perturbations are rejected") {
    SpaceShape shape{3, 4};
    Perturbation bad;
    bad.hterms.push_back({1.0, {identity(3)}});  // wrong arity
    CHECK_THROWS_AS(decompose_perturbation(shape, bad), std::invalid_argument);
    Perturbation badj;
    badj.jumps.push_back({2, identity(3)});  // mode out of range
    CHECK_THROWS_AS(decompose_perturbation(shape, badj), std::invalid_argument);
}

TEST_CASE("local first and second order match the global tensor computation") {
    double alpha = std::sqrt(2.0);
    int nmax = 12;
    int n = nmax + 1;
    // the comparison is an algebraic identity in the shared channel and basis,
    // so a coarse dt is fine and keeps the series short
    double dt = 5e-2;
    CatBasis cb = cat_steady_basis(alpha, nmax, 1e-5);
    KrausChannel ca = build_channel(cat_generator(n, alpha), dt);
    // truncation at N=12 leaves a ~1e-5 steadiness defect; the local/global
    // comparison is algebraic in the same S and J, so it is unaffected
    SteadyBasis ba = compute_invariants(ca, cb.shape, cb.S, {1e-13, 8000000, 1e-3, 0.1});
    std::vector<LocalSubsystem> subs = {stabilized_subsystem(ca, ba),
                                        stabilized_subsystem(ca, ba)};

    SpaceShape shape{n, n};
    Perturbation p = exchange_pert(n, n, 0.05, 0.01);
    ProductTermDecomposition dec = decompose_perturbation(shape, p);

    SteadyBasis bg = product_steady_basis(ba, ba);
    GkslGenerator g1 = assemble_global(shape, p);

    RMat f1_local = local_first_order(subs, dec);
    RMat f1_global = first_order(bg, g1);
    CHECK((f1_local - f1_global).cast<double>().norm() < 1e-8);

    KrausChannel cg = product_channel(ca, ca);
    // the quasi-invariant J at this truncation leaves a small steady component
    ReducedGenerator red = second_order(cg, bg, g1, {1e-10, 2000000, 100, 1e-2});
    RMat f2_local = local_second_order(subs, dec);
    CHECK((f2_local - red.F[1]).cast<double>().norm() < 1e-6);
}

TEST_CASE("empty decomposition gives zero coefficients") {
    double alpha = 1.0;
    int n = 13;
    KrausChannel ca = build_channel(cat_generator(n, alpha), 1e-3);
    CatBasis cb = cat_steady_basis(alpha, n - 1, 1e-6);
    SteadyBasis ba = compute_invariants(ca, cb.shape, cb.S, {1e-10, 8000000, 1e-6, 1e-3});
    std::vector<LocalSubsystem> subs = {stabilized_subsystem(ca, ba),
                                        stabilized_subsystem(ca, ba)};
    ProductTermDecomposition dec;
    dec.factors = 2;
    CHECK(local_first_order(subs, dec).norm() == 0.0);
    CHECK(local_second_order(subs, dec).norm() == 0.0);
}

TEST_CASE("trace row of the exchange first order vanishes") {
    double alpha = std::sqrt(2.0);
    int n = 26;
    KrausChannel ca = build_channel(cat_generator(n, alpha), 1e-3);
    CatBasis cb = cat_steady_basis(alpha, n - 1, 1e-12);
    SteadyBasis ba = compute_invariants(ca, cb.shape, cb.S, {1e-13, 8000000, 1e-8, 1e-8});
    std::vector<LocalSubsystem> subs = {stabilized_subsystem(ca, ba),
                                        stabilized_subsystem(ca, ba)};
    Perturbation p = exchange_pert(n, n, 0.05, 0.01);
    RMat f1 = local_first_order(subs, decompose_perturbation(SpaceShape{n, n}, p));
    // tr rho = 2 x_{(1,1)}: its row of F1 must vanish for trace preservation
    CHECK(f1.row(0).cast<double>().norm() < 1e-9);
}

TEST_CASE("swapping the factors permutes the multi-index") {
    double a1 = 1.0, a2 = std::sqrt(2.0);
    int n = 13;
    KrausChannel c1 = build_channel(cat_generator(n, a1), 1e-3);
    KrausChannel c2 = build_channel(cat_generator(n, a2), 1e-3);
    CatBasis cb1 = cat_steady_basis(a1, n - 1, 1e-6);
    CatBasis cb2 = cat_steady_basis(a2, n - 1, 1e-5);
    SteadyBasis b1 = compute_invariants(c1, cb1.shape, cb1.S, {1e-9, 8000000, 1e-4, 1e-3});
    SteadyBasis b2 = compute_invariants(c2, cb2.shape, cb2.S, {1e-9, 8000000, 1e-4, 0.1});

    Perturbation p12 = exchange_pert(n, n, 0.04, 0.01);
    Perturbation p21;
    Mat a = annihilation_single(n);
    p21.hterms.push_back({0.04, {Mat(a.adjoint()), a}});
    p21.hterms.push_back({0.04, {a, Mat(a.adjoint())}});
    p21.jumps.push_back({1, Mat(std::sqrt(0.01) * a)});
    p21.jumps.push_back({0, Mat(std::sqrt(0.01) * a)});

    RMat f12 = local_first_order({stabilized_subsystem(c1, b1), stabilized_subsystem(c2, b2)},
                                 decompose_perturbation(SpaceShape{n, n}, p12));
    RMat f21 = local_first_order({stabilized_subsystem(c2, b2), stabilized_subsystem(c1, b1)},
                                 decompose_perturbation(SpaceShape{n, n}, p21));
    int d1 = b1.dbar(), d2 = b2.dbar();
    for (int i = 0; i < d1 * d2; ++i)
        for (int j = 0; j < d1 * d2; ++j) {
            int ip = (i % d2) * d1 + i / d2;
            int jp = (j % d2) * d1 + j / d2;
            CHECK(std::abs((double)(f12(i, j) - f21(ip, jp))) < 1e-10);
        }
}

TEST_CASE("hybrid path reproduces the full model on a small controlled-gate toy") {
    double alpha = std::sqrt(2.0);
    int nmax = 14;
    int n = nmax + 1;
    double kappa2 = 1.0, kappa1 = 0.01;
    double t_gate = 1.0 / kappa2;
    // half the controlled-rotation drive: keeps the perturbative remainder
    // (cubic in g) well inside the comparison tolerance
    double g = M_PI / (8.0 * alpha * t_gate);
    double dt = 1e-3 / (kappa2 * alpha * alpha);

    Mat a = annihilation_single(n);
    Mat qa = Mat(a + a.adjoint() - 2.0 * alpha * identity(n));
    Mat nb = Mat(a.adjoint() * a - alpha * alpha * identity(n));
    Perturbation p;
    p.hterms.push_back({g, {qa, nb}});
    p.jumps.push_back({0, Mat(std::sqrt(kappa1) * a)});
    p.jumps.push_back({1, Mat(std::sqrt(kappa1) * a)});
    SpaceShape shape{n, n};
    ProductTermDecomposition dec = decompose_perturbation(shape, p);
    CHECK(dec.terms.size() == 8);
    CHECK(reconstruction_residual(shape, dec, p) < 1e-10);

    CatBasis cb = cat_steady_basis(alpha, nmax, 1e-7);
    KrausChannel ca = build_channel(cat_generator(n, alpha, kappa2), dt);
    SteadyBasis ba = compute_invariants(ca, cb.shape, cb.S, {1e-9, 8000000, 1e-5, 1e-2});
    std::vector<LocalSubsystem> subs = {stabilized_subsystem(ca, ba),
                                        unstabilized_subsystem(SpaceShape{n})};
    HybridGenerator hg = hybrid_reduced_generator(subs, dec);

    // dissipator coefficients are real once the two anticommutator halves are
    // recombined; the sandwich term and the unstabilized-mode terms already are
    CHECK(hg.F1[2].imag().cast<double>().norm() < 1e-10);
    CHECK((hg.F1[3] + hg.F1[4]).imag().cast<double>().norm() < 1e-10);
    for (int nu = 5; nu < 8; ++nu) CHECK(hg.F1[nu].imag().cast<double>().norm() < 1e-10);

    // initial condition S_{A,1} (x) |alpha><alpha|
    Vec beta = coherent_state(alpha, n);
    Mat rho_b = beta * beta.adjoint();
    std::vector<Mat> rho0(hg.dbar, Mat::Zero(n, n));
    rho0[1] = rho_b;
    std::vector<Mat> rho_red = hybrid_evolve(hg, rho0, t_gate, dt);

    GkslGenerator g1 = assemble_global(shape, p);
    SparsePerturbation sp(g1.H.sparseView(1.0, 1e-300), [&] {
        std::vector<SpMat> js;
        for (auto& j : g1.jumps) js.push_back(j.sparseView(1.0, 1e-300));
        return js;
    }());
    Mat w = kron(ba.S[1], rho_b);
    w = full_model_evolve(shape, {{0, ca}}, sp, std::move(w), t_gate, dt);

    double scale = 0;
    for (auto& r : rho_red) scale = std::max(scale, r.norm());
    for (int dp = 0; dp < hg.dbar; ++dp) {
        Mat want = partial_trace_a(ba.J[dp], w, n, n);
        CHECK((want - rho_red[dp]).norm() < 0.05 * scale);
        // Hermiticity is preserved along the way
        CHECK((rho_red[dp] - rho_red[dp].adjoint()).norm() < 1e-9 * (t_gate / dt) / 1e3);
    }
    // trace coordinate conservation: tr rho = sqrt(2) tr rho_{B,1}
    CHECK(std::abs(rho_red[0].trace() - rho0[0].trace()) < 1e-6);
}

TEST_CASE("hybrid evolve with no terms is the identity") {
    HybridGenerator hg;
    hg.dbar = 2;
    std::srand(3);
    std::vector<Mat> rho0 = {Mat::Random(4, 4), Mat::Random(4, 4)};
    auto out = hybrid_evolve(hg, rho0, 1.0, 1e-2);
    CHECK((out[0] - rho0[0]).norm() == 0.0);
    CHECK((out[1] - rho0[1]).norm() == 0.0);
}

TEST_CASE("hybrid rejects bad configurations") {
    int n = 5;
    SpaceShape shape{n, n};
    Perturbation p;
    p.jumps.push_back({0, annihilation_single(n)});
    ProductTermDecomposition dec = decompose_perturbation(shape, p);
    std::vector<LocalSubsystem> both_free = {unstabilized_subsystem(SpaceShape{n}),
                                             unstabilized_subsystem(SpaceShape{n})};
    CHECK_THROWS_AS(hybrid_reduced_generator(both_free, dec), std::invalid_argument);
}
