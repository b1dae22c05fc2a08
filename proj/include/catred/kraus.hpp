#ifndef CATRED_KRAUS_HPP
#define CATRED_KRAUS_HPP

// Exact (trace-preserving) one-step Kraus channel approximating exp(dt L0),
// second-order accurate in dt:
//   M0 = I - dt/2 sum L^dag L,  W0 = M0^dag M0 + dt sum L^dag L,
//   K0(rho) = U ( Mb U rho U^dag Mb^dag + dt sum Lb U rho U^dag Lb^dag ) U^dag
// with Mb = M0 W0^{-1/2}, Lb = L W0^{-1/2}, U = exp(-i dt H / 2).

#include "liouvillian.hpp"

namespace catred {

struct KrausChannel {
    int dim = 0;
    double dt = 0.0;
    bool has_u = false;
    Mat U;                   // half-step unitary
    Mat Mbar;
    std::vector<Mat> Lbar;
};

Mat expm_hermitian_i(const Mat& h, double t);  // exp(-i t h), h Hermitian

inline Mat expm_hermitian_i(const Mat& h, double t) {
    Eigen::SelfAdjointEigenSolver<Mat> es(h);
    Vec phases(h.rows());
    for (int i = 0; i < h.rows(); ++i)
        phases(i) = std::exp(cplx(0, -t * es.eigenvalues()(i)));
    return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

inline KrausChannel build_channel(const GkslGenerator& g, double dt) {
    if (dt <= 0) throw std::invalid_argument("build_channel: dt must be positive");
    KrausChannel ch;
    ch.dim = g.dim;
    ch.dt = dt;
    int n = g.dim;
    if (g.H.size() && g.H.norm() > 0) {
        ch.has_u = true;
        ch.U = expm_hermitian_i(g.H, dt / 2.0);
    }
    double stiff = dt * g.jtj_sum.operatorNorm();
    if (stiff > 0.1)
        std::fputs(("build_channel: dt*|sum L^dag L| = " + std::to_string(stiff) +
                    " is large; the step stays trace preserving but loses accuracy\n")
                       .c_str(),
                   stderr);
    Mat m0 = identity(n) - 0.5 * dt * g.jtj_sum;
    Mat w0 = m0.adjoint() * m0 + dt * g.jtj_sum;
    Eigen::SelfAdjointEigenSolver<Mat> es(w0);
    if (es.eigenvalues().minCoeff() <= 0)
        throw std::runtime_error("build_channel: W0 not positive definite");
    Vec isq(n);
    for (int i = 0; i < n; ++i) isq(i) = 1.0 / std::sqrt(es.eigenvalues()(i));
    Mat wisq = es.eigenvectors() * isq.asDiagonal() * es.eigenvectors().adjoint();
    // The eigensolver mixes degenerate eigenvectors across symmetry sectors of
    // W0; restore the exact sparsity structure so that conserved sectors stay
    // exactly decoupled under iteration.
    mask_to_pattern_closure(wisq, w0, 1e-300);
    ch.Mbar = m0 * wisq;
    for (auto& L : g.jumps) ch.Lbar.push_back(L * wisq);
    return ch;
}

inline Mat step(const KrausChannel& ch, const Mat& x) {
    const Mat* in = &x;
    Mat rotated;
    if (ch.has_u) {
        rotated.noalias() = ch.U * x * ch.U.adjoint();
        in = &rotated;
    }
    Mat out;
    out.noalias() = ch.Mbar * (*in) * ch.Mbar.adjoint();
    Mat tmp;
    for (auto& L : ch.Lbar) {
        tmp.noalias() = L * (*in) * L.adjoint();
        out.noalias() += ch.dt * tmp;
    }
    if (ch.has_u) {
        tmp.noalias() = ch.U * out * ch.U.adjoint();
        return tmp;
    }
    return out;
}

inline Mat step_adjoint(const KrausChannel& ch, const Mat& x) {
    const Mat* in = &x;
    Mat rotated;
    if (ch.has_u) {
        rotated.noalias() = ch.U.adjoint() * x * ch.U;
        in = &rotated;
    }
    Mat out;
    out.noalias() = ch.Mbar.adjoint() * (*in) * ch.Mbar;
    Mat tmp;
    for (auto& L : ch.Lbar) {
        tmp.noalias() = L.adjoint() * (*in) * L;
        out.noalias() += ch.dt * tmp;
    }
    if (ch.has_u) {
        tmp.noalias() = ch.U.adjoint() * out * ch.U;
        return tmp;
    }
    return out;
}

// Explicit Kraus operators (for embedding into product spaces).
inline std::vector<Mat> kraus_ops(const KrausChannel& ch) {
    std::vector<Mat> ks;
    Mat u = ch.has_u ? ch.U : identity(ch.dim);
    ks.push_back(u * ch.Mbar * u);
    for (auto& L : ch.Lbar) ks.push_back(std::sqrt(ch.dt) * u * L * u);
    return ks;
}

// One first-order perturbation step, K1(rho) = dt * L1(rho).
inline Mat perturbation_step(const GkslGenerator& g1, double dt, const Mat& rho) {
    return dt * act(g1, rho);
}

}  // namespace catred

#endif
