#ifndef CATRED_FULLMODEL_HPP
#define CATRED_FULLMODEL_HPP

// Reference integrator for the full model: nominal dynamics as exact local
// Kraus channels (one per stabilized mode), perturbation as one explicit
// Euler term dt*L1 per step.  Superoperators are never materialized; local
// channel factors act through strided views and L1 through sparse operators.

#include "invariants.hpp"

namespace catred {

namespace detail {

using StrideD = Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>;
using MapM = Eigen::Map<Mat, 0, StrideD>;
using CMapM = Eigen::Map<const Mat, 0, StrideD>;

// Y = (I_pre x M x I_post) X
inline void factor_left(const Mat& m, const Mat& x, int pre, int post, Mat& y) {
    int nloc = (int)m.rows();
    int rows = (int)x.rows(), cols = (int)x.cols();
    y.resize(rows, cols);
    for (int p = 0; p < pre; ++p)
        for (int q = 0; q < post; ++q) {
            CMapM in(x.data() + p * nloc * post + q, nloc, cols, StrideD(rows, post));
            MapM out(y.data() + p * nloc * post + q, nloc, cols, StrideD(rows, post));
            out.noalias() = m * in;
        }
}

// Y = X (I_pre x M x I_post)
inline void factor_right(const Mat& m, const Mat& x, int pre, int post, Mat& y) {
    int nloc = (int)m.rows();
    int rows = (int)x.rows(), cols = (int)x.cols();
    y.resize(rows, cols);
    for (int p = 0; p < pre; ++p)
        for (int q = 0; q < post; ++q) {
            CMapM in(x.data() + (Eigen::Index)((p * nloc) * post + q) * rows, rows, nloc,
                     StrideD(post * rows, 1));
            MapM out(y.data() + (Eigen::Index)((p * nloc) * post + q) * rows, rows, nloc,
                     StrideD(post * rows, 1));
            out.noalias() = in * m;
        }
}

}  // namespace detail

struct SparsePerturbation {
    SpMat H;  // may be empty
    std::vector<SpMat> jumps;
    SpMat jtj_sum;

    SparsePerturbation() = default;
    SparsePerturbation(SpMat h, std::vector<SpMat> ls) : H(std::move(h)), jumps(std::move(ls)) {
        int n = H.rows() ? (int)H.rows() : (int)jumps.at(0).rows();
        jtj_sum = SpMat(n, n);
        for (auto& L : jumps) jtj_sum = jtj_sum + SpMat(L.adjoint() * L);
        jtj_sum.makeCompressed();
    }
};

inline void act_sparse(const SparsePerturbation& g, const Mat& rho, Mat& out) {
    out.setZero(rho.rows(), rho.cols());
    if (g.H.rows()) out.noalias() = cplx(0, -1) * (g.H * rho - rho * g.H);
    Mat tmp;
    for (auto& L : g.jumps) {
        tmp.noalias() = L * rho;
        out.noalias() += tmp * Mat(L.adjoint());
    }
    if (g.jtj_sum.rows()) out.noalias() -= 0.5 * (g.jtj_sum * rho + rho * g.jtj_sum);
}

struct FullFactorChannel {
    int mode;
    KrausChannel ch;  // local
};

// Multi-index steady basis given per mode so J "x" S never has to be stored
// as a full product operator.
struct ProductBasis {
    SpaceShape shape;
    std::vector<std::vector<Mat>> S;  // S[d][mode]
    std::vector<std::vector<Mat>> J;
    int dbar() const { return (int)S.size(); }
};

inline ldcplx trace_kron_ld(const std::vector<Mat>& fac, const Mat& w) {
    if (fac.size() == 1) return trace_prod_ld(fac[0], w);
    if (fac.size() != 2)
        throw std::invalid_argument("trace_kron_ld: only 1 or 2 factors supported");
    const Mat& p = fac[0];
    const Mat& q = fac[1];
    int na = (int)p.rows(), nb = (int)q.rows();
    ldcplx acc(0.0L, 0.0L);
    for (int i = 0; i < na; ++i)
        for (int j = 0; j < na; ++j) {
            if (p(i, j) == cplx(0, 0)) continue;
            ldcplx blk = trace_prod_ld(q, w.block(j * nb, i * nb, nb, nb));
            acc += ldcplx(p(i, j).real(), p(i, j).imag()) * blk;
        }
    return acc;
}

// One operator evolved over [0, T]: local channels per step, first-order
// perturbation via the sparse generator.
inline Mat full_model_evolve(const SpaceShape& shape,
                             const std::vector<FullFactorChannel>& factors,
                             const SparsePerturbation& gen1, Mat w, double t_final, double dt) {
    if (shape.factors() > 2)
        throw std::invalid_argument(
            "full_model_evolve: more than 2 modes is not supported (cost grows as dim^6); "
            "use the reduced model");
    long steps = std::lround(t_final / dt);
    if (std::abs(steps * dt - t_final) > 1e-9 * std::max(t_final, 1.0))
        throw std::invalid_argument("full_model_evolve: T must be a multiple of dt");
    std::vector<int> pre(factors.size(), 1), post(factors.size(), 1);
    std::vector<std::vector<Mat>> kops;
    for (size_t f = 0; f < factors.size(); ++f) {
        int mode = factors[f].mode;
        for (int i = 0; i < mode; ++i) pre[f] *= shape.dims[i];
        for (int i = mode + 1; i < shape.factors(); ++i) post[f] *= shape.dims[i];
        kops.push_back(kraus_ops(factors[f].ch));
    }
    Mat acc, tmp, tmp2;
    for (long s = 0; s < steps; ++s) {
        for (size_t f = 0; f < factors.size(); ++f) {
            acc.setZero(w.rows(), w.cols());
            for (auto& k : kops[f]) {
                detail::factor_left(k, w, pre[f], post[f], tmp);
                detail::factor_right(Mat(k.adjoint()), tmp, pre[f], post[f], tmp2);
                acc += tmp2;
            }
            w.swap(acc);
        }
        act_sparse(gen1, w, tmp);
        w += dt * tmp;
        if (s % 200 == 0 && !(w.norm() < 1e9))
            throw std::runtime_error("full_model_evolve: integration diverged at step " +
                                     std::to_string(s));
    }
    return w;
}

// Propagator of the slow coordinates under the full model:
// G_{d',d} = Tr{J_d' W_d(T)} with W_d(0) = S_d.
inline RMat full_model_propagator(const SpaceShape& shape,
                                  const std::vector<FullFactorChannel>& factors,
                                  const SparsePerturbation& gen1, const ProductBasis& basis,
                                  double t_final, double dt) {
    int dbar = basis.dbar();
    RMat g(dbar, dbar);
    for (int d = 0; d < dbar; ++d) {
        Mat w0 = basis.S[d].size() == 1 ? basis.S[d][0] : kron_all(basis.S[d]);
        Mat w = full_model_evolve(shape, factors, gen1, std::move(w0), t_final, dt);
        for (int dp = 0; dp < dbar; ++dp) g(dp, d) = trace_kron_ld(basis.J[dp], w).real();
    }
    return g;
}

}  // namespace catred

#endif
