#ifndef CATRED_LIOUVILLIAN_HPP
#define CATRED_LIOUVILLIAN_HPP

// GKSL (Lindblad) generators and their Hilbert-Schmidt adjoints.

#include "core.hpp"

namespace catred {

struct GkslGenerator {
    int dim = 0;
    Mat H;                    // Hermitian part (may be zero-sized for none)
    std::vector<Mat> jumps;   // decay rates folded into the operators
    std::vector<Mat> jtj;     // cached L^dag L
    Mat jtj_sum;

    GkslGenerator() = default;
    GkslGenerator(Mat h, std::vector<Mat> ls) : H(std::move(h)), jumps(std::move(ls)) {
        dim = H.size() ? (int)H.rows() : (jumps.empty() ? 0 : (int)jumps[0].rows());
        if (H.size() && !is_hermitian(H, 1e-10))
            throw std::invalid_argument("GkslGenerator: H is not Hermitian");
        jtj_sum = Mat::Zero(dim, dim);
        for (auto& L : jumps) {
            if (L.rows() != dim || L.cols() != dim)
                throw std::invalid_argument("GkslGenerator: jump dim mismatch");
            jtj.push_back(L.adjoint() * L);
            jtj_sum += jtj.back();
        }
        if (H.size() && (int)H.rows() != dim)
            throw std::invalid_argument("GkslGenerator: H dim mismatch");
    }
};

// L(rho) = -i[H,rho] + sum_k L_k rho L_k^dag - 1/2 {L_k^dag L_k, rho}
inline Mat act(const GkslGenerator& g, const Mat& rho) {
    Mat out = Mat::Zero(g.dim, g.dim);
    if (g.H.size()) out.noalias() = cplx(0, -1) * (g.H * rho - rho * g.H);
    for (auto& L : g.jumps) out.noalias() += L * rho * L.adjoint();
    out.noalias() -= 0.5 * (g.jtj_sum * rho + rho * g.jtj_sum);
    return out;
}

// Adjoint in the trace pairing: Tr{X L(rho)} = Tr{L*(X) rho} for Hermitian X.
inline Mat act_adjoint(const GkslGenerator& g, const Mat& x) {
    Mat out = Mat::Zero(g.dim, g.dim);
    if (g.H.size()) out.noalias() = cplx(0, 1) * (g.H * x - x * g.H);
    for (auto& L : g.jumps) out.noalias() += L.adjoint() * x * L;
    out.noalias() -= 0.5 * (g.jtj_sum * x + x * g.jtj_sum);
    return out;
}

// Two-photon pumping dissipator sqrt(kappa2) (a^2 - alpha^2) on one mode.
inline GkslGenerator cat_generator(int dim, double alpha, double kappa2 = 1.0) {
    Mat a = annihilation_single(dim);
    Mat L = std::sqrt(kappa2) * (a * a - alpha * alpha * identity(dim));
    return GkslGenerator(Mat(), {L});
}

// Dense superoperator matrix of L acting on vec(rho) (column stacking).
// Only intended for small test oracles.
inline Mat vectorize_generator(const GkslGenerator& g) {
    int n = g.dim;
    Mat sup = Mat::Zero(n * n, n * n);
    Mat basis = Mat::Zero(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            basis(i, j) = 1.0;
            Mat out = act(g, basis);
            basis(i, j) = 0.0;
            sup.col(j * n + i) = Eigen::Map<Vec>(out.data(), n * n);
        }
    return sup;
}

}  // namespace catred

#endif
