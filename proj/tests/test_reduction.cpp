#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <catred/fullmodel.hpp>
#include <catred/reduction.hpp>
#include <unsupported/Eigen/MatrixFunctions>

using namespace catred;

namespace {
GkslGenerator dephasing(int, double kappa = 1.0) {
    Mat sz = Mat::Zero(2, 2);
    sz(0, 0) = 1.0;
    sz(1, 1) = -1.0;
    return GkslGenerator(Mat(), {Mat(std::sqrt(kappa) * sz)});
}
std::vector<Mat> diag_basis() {
    Mat p0 = Mat::Zero(2, 2), p1 = Mat::Zero(2, 2);
    p0(0, 0) = 1.0;
    p1(1, 1) = 1.0;
    return {p0, p1};
}
}  // namespace

TEST_CASE("first order rate matrix of perturbative damping") {
    KrausChannel ch = build_channel(dephasing(2), 1e-2);
    SteadyBasis b = compute_invariants(ch, SpaceShape{2}, diag_basis());
    double gamma = 0.03;
    Mat sm = Mat::Zero(2, 2);
    sm(0, 1) = std::sqrt(gamma);
    GkslGenerator g1(Mat(), {sm});
    RMat f1 = first_order(b, g1);
    CHECK(std::abs((double)f1(0, 1) - gamma) < 1e-12);
    CHECK(std::abs((double)f1(1, 1) + gamma) < 1e-12);
    CHECK(std::abs((double)f1(0, 0)) < 1e-12);
    CHECK(std::abs((double)f1(1, 0)) < 1e-12);
}

TEST_CASE("second order coefficient matches a Richardson eigenvalue oracle") {
    // shape [3], unique steady state |0><0|, invariant = identity, dbar = 1.
    int n = 3;
    Mat l0a = Mat::Zero(n, n);
    l0a(0, 1) = 1.0;
    Mat l0b = Mat::Zero(n, n);
    l0b(0, 2) = 1.3;
    GkslGenerator g0(Mat(), {l0a, l0b});
    double dt = 2e-3;
    KrausChannel ch = build_channel(g0, dt);
    Mat s0 = Mat::Zero(n, n);
    s0(0, 0) = 1.0;
    SteadyBasis b = compute_invariants(ch, SpaceShape{n}, {s0});
    Mat a = annihilation_single(n);
    Mat h = Mat(a + a.adjoint());
    GkslGenerator g1(h, {Mat(0.8 * a)});

    ReducedGenerator red = second_order(ch, b, g1, {1e-13, 2000000, 100});
    double f1 = (double)red.F[0](0, 0);
    double f2 = (double)red.F[1](0, 0);

    // oracle: slow eigenvalue of vec(L0 + eps L1), Richardson in eps
    Mat m0 = vectorize_generator(g0);
    Mat m1 = vectorize_generator(g1);
    auto slow_eig = [&](double eps) {
        Eigen::ComplexEigenSolver<Mat> es(Mat(m0 + eps * m1));
        double best = 1e100;
        cplx lam = 0;
        for (int i = 0; i < es.eigenvalues().size(); ++i)
            if (std::abs(es.eigenvalues()(i)) < best) {
                best = std::abs(es.eigenvalues()(i));
                lam = es.eigenvalues()(i);
            }
        return lam.real();
    };
    double e1 = 1e-3, e2 = 2e-3;
    double l1v = slow_eig(e1), l2v = slow_eig(e2);
    double f2_oracle = (l2v - 2.0 * l1v) / (2.0 * e1 * e1);
    double f1_oracle = (4.0 * l1v - l2v) / (2.0 * e1);
    CHECK(std::abs(f1 - f1_oracle) < 1e-5);
    CHECK(std::abs(f2 - f2_oracle) < 1e-4 * std::max(1.0, std::abs(f2_oracle)));
    // discrete-time correction cross-check: dt R0(L1 S) has no steady part
    CHECK(kbar(b, Mat(red.S_corr[0][0])).norm() < 1e-8);
}

TEST_CASE("higher orders terminate and keep R0 arguments off the steady space") {
    KrausChannel ch = build_channel(dephasing(2, 1.5), 1e-2);
    SteadyBasis b = compute_invariants(ch, SpaceShape{2}, diag_basis());
    Mat sm = Mat::Zero(2, 2);
    sm(0, 1) = 0.2;
    Mat sx = Mat::Zero(2, 2);
    sx(0, 1) = 0.1;
    sx(1, 0) = 0.1;
    GkslGenerator g1(sx, {sm});
    ReducedGenerator red = higher_orders(ch, b, g1, 4);
    CHECK(red.order() == 4);
    // columns of every F sum to zero: trace preservation of the reduced model
    for (auto& f : red.F)
        for (int d = 0; d < 2; ++d) {
            long double col = 0;
            // the dual weights are Tr{S_d'}; here J = S so weights are 1
            for (int dp = 0; dp < 2; ++dp) col += f(dp, d);
            CHECK(std::abs((double)col) < 1e-10);
        }
    CHECK_THROWS_AS(higher_orders(ch, b, g1, 7), std::invalid_argument);
    CHECK_THROWS_AS(higher_orders(ch, b, g1, 0), std::invalid_argument);
}

TEST_CASE("reduced propagator is the exponential of the summed orders") {
    ReducedGenerator red;
    red.dbar = 2;
    RMat f(2, 2);
    f << -0.3L, 0.1L, 0.3L, -0.1L;
    red.F.push_back(f);
    RMat g = reduced_propagator(red, 2.0);
    Eigen::MatrixXd fd = f.cast<double>();
    Eigen::MatrixXd gd = (2.0 * fd).exp();
    CHECK((g.cast<double>() - gd).norm() < 1e-12);
}

TEST_CASE("full model propagator matches a dense exponential oracle (one mode)") {
    KrausChannel ch = build_channel(dephasing(2, 1.0), 1e-3);
    SteadyBasis b = compute_invariants(ch, SpaceShape{2}, diag_basis());
    double gamma = 0.05;
    Mat sm = Mat::Zero(2, 2);
    sm(0, 1) = std::sqrt(gamma);
    GkslGenerator g1(Mat(), {sm});
    SparsePerturbation sp(SpMat(), {sm.sparseView()});
    ProductBasis pb;
    pb.shape = SpaceShape{2};
    for (int d = 0; d < 2; ++d) {
        pb.S.push_back({b.S[d]});
        pb.J.push_back({b.J[d]});
    }
    double t_final = 5.0;
    RMat g = full_model_propagator(pb.shape, {{0, ch}}, sp, pb, t_final, 1e-3);
    // oracle: exact exponential of the vectorized total generator
    Mat m = vectorize_generator(dephasing(2, 1.0)) + vectorize_generator(g1);
    Mat prop = (t_final * m).exp();
    for (int d = 0; d < 2; ++d)
        for (int dp = 0; dp < 2; ++dp) {
            Eigen::Map<Vec> vs(b.S[d].data(), 4);
            Vec evolved = prop * vs;
            Mat w = Eigen::Map<Mat>(evolved.data(), 2, 2);
            double want = trace_prod(b.J[dp], w).real();
            CHECK(std::abs((double)g(dp, d) - want) < 2e-4);
        }
}

TEST_CASE("full model propagator matches the oracle on a two-mode product space") {
    // local dephasing-like channels on each 3-level mode, weak hopping between
    int nl = 3;
    Mat nop = Mat::Zero(nl, nl);
    for (int k = 0; k < nl; ++k) nop(k, k) = k;
    GkslGenerator g0(Mat(), {nop});
    double dt = 2e-3;
    KrausChannel ch = build_channel(g0, dt);
    std::vector<Mat> sloc;
    for (int k = 0; k < nl; ++k) {
        Mat p = Mat::Zero(nl, nl);
        p(k, k) = 1.0;
        sloc.push_back(p);
    }
    SteadyBasis bl = compute_invariants(ch, SpaceShape{nl}, sloc);
    SpaceShape shape{nl, nl};
    Mat a0 = Mat(embed_sparse(annihilation_single(nl), shape, 0));
    Mat a1 = Mat(embed_sparse(annihilation_single(nl), shape, 1));
    Mat hop = Mat(0.04 * (a0 * a1.adjoint() + a1 * a0.adjoint()));
    Mat damp = Mat(0.1 * a0);
    GkslGenerator g1(hop, {damp});
    SparsePerturbation sp(hop.sparseView(), {damp.sparseView()});
    ProductBasis pb;
    pb.shape = shape;
    for (int da = 0; da < nl; ++da)
        for (int db = 0; db < nl; ++db) {
            pb.S.push_back({bl.S[da], bl.S[db]});
            pb.J.push_back({bl.J[da], bl.J[db]});
        }
    double t_final = 2.0;
    RMat g = full_model_propagator(shape, {{0, ch}, {1, ch}}, sp, pb, t_final, dt);
    // oracle on the vectorized 81-dim operator space
    GkslGenerator joint0(Mat(), {Mat(embed_sparse(nop, shape, 0)), Mat(embed_sparse(nop, shape, 1))});
    Mat m = vectorize_generator(joint0) + vectorize_generator(g1);
    Mat prop = (t_final * m).exp();
    int n = shape.dim();
    for (int d = 0; d < 9; ++d) {
        Mat s = kron(pb.S[d][0], pb.S[d][1]);
        Eigen::Map<Vec> vs(s.data(), n * n);
        Vec evolved = prop * vs;
        Mat w = Eigen::Map<Mat>(evolved.data(), n, n);
        for (int dp = 0; dp < 9; ++dp) {
            double want = trace_prod(kron(pb.J[dp][0], pb.J[dp][1]), w).real();
            CHECK(std::abs((double)g(dp, d) - want) < 5e-4);
        }
    }
}

TEST_CASE("time varying reduced step reduces to the constant case") {
    KrausChannel ch = build_channel(dephasing(2, 1.0), 1e-2);
    SteadyBasis b = compute_invariants(ch, SpaceShape{2}, diag_basis());
    Mat sm = Mat::Zero(2, 2);
    sm(0, 1) = 0.2;
    GkslGenerator g1(Mat(), {sm});
    auto gen_at = [&](double) { return g1; };
    RMat g = RMat::Identity(2, 2);
    double h = 1e-2;
    int nsteps = 200;
    for (int k = 0; k < nsteps; ++k)
        g = time_varying_reduced_step(ch, b, gen_at, k * h, h, 2, g);
    ReducedGenerator red = second_order(ch, b, g1);
    RMat gc = reduced_propagator(red, h * nsteps);
    CHECK((g - gc).cast<double>().norm() < 1e-3);
}

TEST_CASE("time varying reduced step tracks a ramped drive against quadrature") {
    // dbar=1 toy so the propagator is scalar: exp(int F(t) dt)
    int n = 3;
    Mat l0a = Mat::Zero(n, n);
    l0a(0, 1) = 1.0;
    Mat l0b = Mat::Zero(n, n);
    l0b(0, 2) = 1.3;
    KrausChannel ch = build_channel(GkslGenerator(Mat(), {l0a, l0b}), 2e-3);
    Mat s0 = Mat::Zero(n, n);
    s0(0, 0) = 1.0;
    SteadyBasis b = compute_invariants(ch, SpaceShape{n}, {s0});
    Mat a = annihilation_single(n);
    auto gen_at = [&](double t) {
        double eps = 0.1 * (1.0 + t);  // linear ramp
        return GkslGenerator(Mat(eps * (a + a.adjoint())), {Mat(0.3 * a)});
    };
    double h = 0.05;
    int nsteps = 40;
    RMat g = RMat::Identity(1, 1);
    double quad = 0.0;
    for (int k = 0; k < nsteps; ++k) {
        double t = k * h;
        g = time_varying_reduced_step(ch, b, gen_at, t, h, 2, g);
        quad += h * (double)higher_orders(ch, b, gen_at(t), 2).total()(0, 0);
    }
    CHECK(std::abs((double)g(0, 0) - std::exp(quad)) < 1e-4);
}
