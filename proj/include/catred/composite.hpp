#ifndef CATRED_COMPOSITE_HPP
#define CATRED_COMPOSITE_HPP

// Tensor-structured adiabatic elimination.  The perturbation L1 is supplied
// structurally (Hamiltonian product terms plus local jumps), expanded into a
// finite sum of per-factor (L, R) sandwich pairs, and the first and second
// order reduced coefficients are then assembled from purely local traces.
// The hybrid path handles one factor without nominal dissipation by evolving
// operator-valued slow coordinates rho_{B,d} on that factor.

#include "invariants.hpp"
#include "liouvillian.hpp"
#include <map>

namespace catred {

using LdMat = Eigen::Matrix<ldcplx, Eigen::Dynamic, Eigen::Dynamic>;

// One product term of L1: X -> prod_factors (L_x X_x R_x).  Scalar weights
// are folded into the factor-0 matrices.
struct ProductTerm {
    std::vector<Mat> L, R;
};

struct ProductTermDecomposition {
    int factors = 0;
    std::vector<ProductTerm> terms;
};

// H contribution c * ops[0] (x) ops[1] (x) ... ; the summed Hamiltonian must
// come out Hermitian.  Jumps are local: kappa D_op on one mode, with the rate
// folded into op.
struct HamiltonianProduct {
    cplx coeff;
    std::vector<Mat> ops;
};

struct LocalJump {
    int mode = 0;
    Mat op;
};

struct Perturbation {
    std::vector<HamiltonianProduct> hterms;
    std::vector<LocalJump> jumps;
};

inline ProductTermDecomposition decompose_perturbation(const SpaceShape& shape,
                                                       const Perturbation& p) {
    int nf = shape.factors();
    ProductTermDecomposition dec;
    dec.factors = nf;
    std::vector<Mat> eye(nf);
    for (int x = 0; x < nf; ++x) eye[x] = identity(shape.dims[x]);
    for (const auto& h : p.hterms) {
        if ((int)h.ops.size() != nf)
            throw std::invalid_argument("decompose_perturbation: Hamiltonian term arity mismatch");
        for (int x = 0; x < nf; ++x)
            if (h.ops[x].rows() != shape.dims[x] || h.ops[x].cols() != shape.dims[x])
                throw std::invalid_argument("decompose_perturbation: Hamiltonian factor dim mismatch");
        // -i [H, rho] = -i H rho + i rho H
        ProductTerm left{h.ops, eye};
        left.L[0] *= cplx(0, -1) * h.coeff;
        ProductTerm right{eye, h.ops};
        right.R[0] *= cplx(0, 1) * h.coeff;
        dec.terms.push_back(std::move(left));
        dec.terms.push_back(std::move(right));
    }
    for (const auto& j : p.jumps) {
        if (j.mode < 0 || j.mode >= nf)
            throw std::invalid_argument("decompose_perturbation: jump mode out of range");
        if (j.op.rows() != shape.dims[j.mode] || j.op.cols() != shape.dims[j.mode])
            throw std::invalid_argument("decompose_perturbation: jump dim mismatch");
        Mat ltl = j.op.adjoint() * j.op;
        ProductTerm sandwich{eye, eye}, anticl{eye, eye}, anticr{eye, eye};
        sandwich.L[j.mode] = j.op;
        sandwich.R[j.mode] = j.op.adjoint();
        anticl.L[j.mode] = -0.5 * ltl;
        anticr.R[j.mode] = -0.5 * ltl;
        dec.terms.push_back(std::move(sandwich));
        dec.terms.push_back(std::move(anticl));
        dec.terms.push_back(std::move(anticr));
    }
    return dec;
}

// Dense generator on the full tensor space, for oracles and the full model.
inline GkslGenerator assemble_global(const SpaceShape& shape, const Perturbation& p) {
    int n = shape.dim();
    Mat h = Mat::Zero(n, n);
    for (const auto& t : p.hterms) {
        std::vector<Mat> ops = t.ops;
        ops[0] *= t.coeff;
        h += kron_all(ops);
    }
    std::vector<Mat> jumps;
    for (const auto& j : p.jumps) jumps.push_back(Mat(embed_sparse(j.op, shape, j.mode)));
    return GkslGenerator(h, jumps);
}

// Max relative residual of the term-sum against the assembled generator on
// random Hermitian product probes.  Only usable when the tensor dim is small.
inline double reconstruction_residual(const SpaceShape& shape, const ProductTermDecomposition& dec,
                                      const Perturbation& p, int nprobes = 10,
                                      unsigned seed = 12345) {
    GkslGenerator g = assemble_global(shape, p);
    std::srand(seed);
    double worst = 0.0;
    for (int k = 0; k < nprobes; ++k) {
        std::vector<Mat> probe;
        for (int x = 0; x < shape.factors(); ++x) {
            Mat m = Mat::Random(shape.dims[x], shape.dims[x]);
            probe.push_back(Mat(0.5 * (m + m.adjoint())));
        }
        Mat full = kron_all(probe);
        Mat want = act(g, full);
        Mat got = Mat::Zero(full.rows(), full.cols());
        for (const auto& t : dec.terms) {
            std::vector<Mat> parts(shape.factors());
            for (int x = 0; x < shape.factors(); ++x) parts[x] = t.L[x] * probe[x] * t.R[x];
            got += kron_all(parts);
        }
        double scale = std::max(1.0, want.norm());
        worst = std::max(worst, (want - got).norm() / scale);
    }
    return worst;
}

struct LocalSubsystem {
    SpaceShape shape;
    bool stabilized = true;
    KrausChannel ch;    // valid when stabilized
    SteadyBasis basis;  // valid when stabilized
};

inline LocalSubsystem stabilized_subsystem(const KrausChannel& ch, const SteadyBasis& b) {
    return LocalSubsystem{b.shape, true, ch, b};
}

inline LocalSubsystem unstabilized_subsystem(const SpaceShape& shape) {
    return LocalSubsystem{shape, false, {}, {}};
}

namespace detail {

inline void check_factors(const std::vector<LocalSubsystem>& subs,
                          const ProductTermDecomposition& dec) {
    if ((int)subs.size() != dec.factors)
        throw std::invalid_argument("composite: subsystem count does not match decomposition");
    for (size_t x = 0; x < subs.size(); ++x)
        for (const auto& t : dec.terms)
            if (t.L[x].rows() != subs[x].shape.dim())
                throw std::invalid_argument("composite: factor dim mismatch in decomposition");
}

// Unique (L, R) sandwich pairs of one factor across terms, with a term->pair map.
struct PairIndex {
    std::vector<Mat> L, R;
    std::vector<int> of_term;
    std::vector<bool> trivial;  // pair is (I, I): sandwich of a steady op stays steady
};

inline PairIndex index_pairs(const ProductTermDecomposition& dec, int x) {
    PairIndex pi;
    int n = dec.terms.empty() ? 0 : (int)dec.terms[0].L[x].rows();
    Mat eye = identity(n);
    for (const auto& t : dec.terms) {
        int found = -1;
        for (size_t p = 0; p < pi.L.size(); ++p) {
            double s = 1.0 + pi.L[p].norm() + pi.R[p].norm();
            if ((pi.L[p] - t.L[x]).norm() + (pi.R[p] - t.R[x]).norm() < 1e-14 * s) {
                found = (int)p;
                break;
            }
        }
        if (found < 0) {
            found = (int)pi.L.size();
            pi.L.push_back(t.L[x]);
            pi.R.push_back(t.R[x]);
            pi.trivial.push_back((t.L[x] - eye).norm() + (t.R[x] - eye).norm() < 1e-14);
        }
        pi.of_term.push_back(found);
    }
    return pi;
}

}  // namespace detail

// F1(d', d) = sum_nu prod_X Tr{J_{X,d'} L_{X,nu} S_{X,d} R_{X,nu}}.
// Multi-index flattening is row-major, factor 0 outermost.
inline RMat local_first_order(const std::vector<LocalSubsystem>& subs,
                              const ProductTermDecomposition& dec) {
    detail::check_factors(subs, dec);
    int total = 1;
    for (const auto& s : subs) {
        if (!s.stabilized)
            throw std::invalid_argument("local_first_order: all factors must be stabilized");
        total *= s.basis.dbar();
    }
    LdMat acc = LdMat::Zero(total, total);
    for (const auto& t : dec.terms) {
        LdMat prod = LdMat::Ones(1, 1);
        for (size_t x = 0; x < subs.size(); ++x) {
            const SteadyBasis& b = subs[x].basis;
            int db = b.dbar();
            LdMat tx(db, db);
            for (int d = 0; d < db; ++d) {
                Mat sandwiched = t.L[x] * b.S[d] * t.R[x];
                for (int dp = 0; dp < db; ++dp) tx(dp, d) = trace_prod_ld(b.J[dp], sandwiched);
            }
            LdMat next(prod.rows() * db, prod.cols() * db);
            for (int i = 0; i < prod.rows(); ++i)
                for (int j = 0; j < prod.cols(); ++j)
                    next.block(i * db, j * db, db, db) = prod(i, j) * tx;
            prod.swap(next);
        }
        acc += prod;
    }
    return acc.real();
}

struct SeriesOptions {
    double tol = 1e-10;
    long max_steps = 2000000;
    int window = 100;
    double stall_ratio = 0.999;  // window-gain ratio that triggers extrapolation
};

namespace detail {

// Core s-loop shared by the fully-stabilized and hybrid second orders.
// Returns, per (nu', nu), the matrix over the stabilized multi-index (d', d)
//   A[nu'][nu](d', d) = sum_s [ prod_X t_X(s) - prod_X G_X ],
// t_X(s) = Tr{J_{X,d',nu'} K_X^s(S_{X,d,nu})}, G_X its s -> inf limit.  Per s
// each distinct sandwiched operator is evolved once (deduplicated through the
// pair index) and the products are telescoped through t = G + delta so the
// decaying part never suffers cancellation.
inline std::vector<std::vector<LdMat>> second_order_series(
    const std::vector<const LocalSubsystem*>& stab, const ProductTermDecomposition& dec,
    const std::vector<detail::PairIndex>& pairs, const SeriesOptions& opt) {
    int nf = (int)stab.size();
    int nterms = (int)dec.terms.size();
    int total = 1;
    for (auto* s : stab) total *= s->basis.dbar();

    // evolved operators D_{p,d}(s) = K^s(L_p S_d R_p - Kbar(L_p S_d R_p)),
    // their duals J_{d',p'} = R_p' J_d' L_p', and the asymptotic factors
    // G(p', d', p, d) = Tr{J_{d',p'} Kbar(L_p S_d R_p)}.  All traces of one
    // factor at one s are a single stacked product P * Q with
    // P(r, :) = vec(Jdual_r^T), Q(:, c) = vec(D_c).
    struct FactorState {
        int db, np, n;
        std::vector<Mat> D;          // [p*db + d], empty matrix when identically zero
        std::vector<int> live;       // indices with nonzero D
        LdMat P;                     // (np*db, n*n) stacked transposed duals
        LdMat Q;                     // (n*n, live.size()) refreshed each s
        LdMat G;                     // (pp*db + dp, p*db + d)
        LdMat delta;                 // same layout, refreshed each s
        LdMat prev;                  // delta of the previous s
        long double lam = 0;         // per-step decay of the residual mode
        bool pure = false;           // residual is a single geometric mode
    };
    std::vector<FactorState> st(nf);
    for (int x = 0; x < nf; ++x) {
        const SteadyBasis& b = stab[x]->basis;
        const detail::PairIndex& pi = pairs[x];
        FactorState& f = st[x];
        f.db = b.dbar();
        f.np = (int)pi.L.size();
        f.n = (int)b.S[0].rows();
        f.D.resize(f.np * f.db);
        f.P = LdMat::Zero(f.np * f.db, f.n * f.n);
        f.G = LdMat::Zero(f.np * f.db, f.np * f.db);
        std::vector<Mat> steadies(f.np * f.db);
        for (int p = 0; p < f.np; ++p)
            for (int d = 0; d < f.db; ++d) {
                Mat e0 = pi.L[p] * b.S[d] * pi.R[p];
                Mat steady = kbar(b, e0);
                Mat d0 = e0 - steady;
                if (!pi.trivial[p] && d0.norm() > 1e-15 * (1.0 + e0.norm())) {
                    f.D[p * f.db + d] = d0;
                    f.live.push_back(p * f.db + d);
                }
                steadies[p * f.db + d] = std::move(steady);
            }
        for (int pp = 0; pp < f.np; ++pp)
            for (int dp = 0; dp < f.db; ++dp) {
                Mat jd = pi.R[pp] * b.J[dp] * pi.L[pp];
                Mat jdt = jd.transpose();
                f.P.row(pp * f.db + dp) =
                    Eigen::Map<Vec>(jdt.data(), f.n * f.n).transpose().cast<ldcplx>();
                for (int p = 0; p < f.np; ++p)
                    for (int d = 0; d < f.db; ++d)
                        f.G(pp * f.db + dp, p * f.db + d) =
                            trace_prod_ld(jd, steadies[p * f.db + d]);
            }
        f.Q = LdMat::Zero(f.n * f.n, (int)f.live.size());
        f.delta = LdMat::Zero(f.np * f.db, f.np * f.db);
        f.prev = f.delta;
    }

    std::vector<std::vector<LdMat>> acc(nterms, std::vector<LdMat>(nterms, LdMat::Zero(total, total)));
    std::vector<std::vector<LdMat>> snap = acc;
    auto tensor_norm = [&](const std::vector<std::vector<LdMat>>& a,
                           const std::vector<std::vector<LdMat>>& b) {
        long double s = 0;
        for (int i = 0; i < nterms; ++i)
            for (int j = 0; j < nterms; ++j) s += (a[i][j] - b[i][j]).squaredNorm();
        return (double)std::sqrt((double)s);
    };

    // stabilized multi-index strides, row-major, factor order of `stab`
    std::vector<int> stride(nf, 1);
    for (int x = nf - 2; x >= 0; --x) stride[x] = stride[x + 1] * st[x + 1].db;

    std::vector<int> dloc(nf), dploc(nf);
    double prev_gain = -1;
    for (long s = 0;; ++s) {
        for (int x = 0; x < nf; ++x) {
            FactorState& f = st[x];
            f.prev.swap(f.delta);
            for (size_t c = 0; c < f.live.size(); ++c)
                f.Q.col((int)c) =
                    Eigen::Map<const Vec>(f.D[f.live[c]].data(), f.n * f.n).cast<ldcplx>();
            LdMat tr = f.P * f.Q;
            f.delta.setZero();
            for (size_t c = 0; c < f.live.size(); ++c) f.delta.col(f.live[c]) = tr.col((int)c);
        }
        for (int nu = 0; nu < nterms; ++nu)
            for (int nup = 0; nup < nterms; ++nup) {
                LdMat& a = acc[nup][nu];
                std::fill(dloc.begin(), dloc.end(), 0);
                for (int col = 0; col < total; ++col) {
                    std::fill(dploc.begin(), dploc.end(), 0);
                    for (int row = 0; row < total; ++row) {
                        // telescoped prod t - prod G, t = G + delta
                        ldcplx sum = 0, prefix = 1;
                        for (int x = 0; x < nf; ++x) {
                            const FactorState& f = st[x];
                            int r = pairs[x].of_term[nup] * f.db + dploc[x];
                            int c = pairs[x].of_term[nu] * f.db + dloc[x];
                            ldcplx g = f.G(r, c), dl = f.delta(r, c);
                            ldcplx suffix = 1;
                            for (int y = x + 1; y < nf; ++y) {
                                const FactorState& fy = st[y];
                                suffix *= fy.G(pairs[y].of_term[nup] * fy.db + dploc[y],
                                               pairs[y].of_term[nu] * fy.db + dloc[y]);
                            }
                            sum += prefix * dl * suffix;
                            prefix *= g + dl;
                        }
                        a(row, col) += sum;
                        for (int x = nf - 1; x >= 0; --x) {
                            if (++dploc[x] < st[x].db) break;
                            dploc[x] = 0;
                        }
                    }
                    for (int x = nf - 1; x >= 0; --x) {
                        if (++dloc[x] < st[x].db) break;
                        dloc[x] = 0;
                    }
                }
            }
        if ((s + 1) % opt.window == 0) {
            long double anorm = 0;
            for (int i = 0; i < nterms; ++i)
                for (int j = 0; j < nterms; ++j) anorm += acc[i][j].squaredNorm();
            double gain = tensor_norm(acc, snap);
            if (gain < opt.tol * (1.0 + std::sqrt((double)anorm))) break;
            if (prev_gain > 0 && gain < prev_gain && gain > opt.stall_ratio * prev_gain) {
                // truncation leaves quasi-steady modes whose per-step decay is
                // far below any physical rate; their tails must be summed, not
                // truncated.  Each factor residual is checked to be a single
                // geometric mode delta_X(s+k) = lam_X^k delta_X(s); the tail of
                // every telescoped product then sums in closed form over the
                // nonempty factor subsets T with ratio Lambda_T = prod lam_X.
                bool all_pure = true;
                for (int x = 0; x < nf; ++x) {
                    FactorState& f = st[x];
                    long double pn2 = f.prev.squaredNorm();
                    long double gscale = 1.0L + f.G.norm();
                    if (f.delta.norm() < 1e-14L * gscale) {
                        f.pure = true;
                        f.lam = 0;
                        continue;
                    }
                    f.lam = pn2 > 0 ? f.prev.conjugate().cwiseProduct(f.delta).sum().real() / pn2
                                    : 0.0L;
                    f.pure = f.lam > 0.0L && f.lam < 1.0L &&
                             (f.delta - f.lam * f.prev).norm() < 1e-6L * f.delta.norm();
                    if (!f.pure) all_pure = false;
                }
                if (all_pure) {
                    for (int nu = 0; nu < nterms; ++nu)
                        for (int nup = 0; nup < nterms; ++nup) {
                            LdMat& a = acc[nup][nu];
                            std::fill(dloc.begin(), dloc.end(), 0);
                            for (int col = 0; col < total; ++col) {
                                std::fill(dploc.begin(), dploc.end(), 0);
                                for (int row = 0; row < total; ++row) {
                                    ldcplx tail = 0;
                                    for (int mask = 1; mask < (1 << nf); ++mask) {
                                        ldcplx term = 1;
                                        long double lamt = 1;
                                        bool skip = false;
                                        for (int x = 0; x < nf; ++x) {
                                            const FactorState& f = st[x];
                                            int r = pairs[x].of_term[nup] * f.db + dploc[x];
                                            int c = pairs[x].of_term[nu] * f.db + dloc[x];
                                            if (mask & (1 << x)) {
                                                if (f.lam <= 0.0L) { skip = true; break; }
                                                term *= f.delta(r, c);
                                                lamt *= f.lam;
                                            } else {
                                                term *= f.G(r, c);
                                            }
                                        }
                                        if (!skip) tail += term * (lamt / (1.0L - lamt));
                                    }
                                    a(row, col) += tail;
                                    for (int x = nf - 1; x >= 0; --x) {
                                        if (++dploc[x] < st[x].db) break;
                                        dploc[x] = 0;
                                    }
                                }
                                for (int x = nf - 1; x >= 0; --x) {
                                    if (++dloc[x] < st[x].db) break;
                                    dloc[x] = 0;
                                }
                            }
                        }
                    break;
                }
            }
            prev_gain = gain;
            snap = acc;
        }
        if (s >= opt.max_steps)
            throw std::runtime_error("second_order_series: tail did not converge after " +
                                     std::to_string(opt.max_steps) + " steps");
        for (int x = 0; x < nf; ++x)
            for (auto& dm : st[x].D)
                if (dm.size()) dm = step(stab[x]->ch, dm);
    }
    return acc;
}

inline double common_dt(const std::vector<LocalSubsystem>& subs) {
    double dt = -1;
    for (const auto& s : subs)
        if (s.stabilized) {
            if (dt < 0) dt = s.ch.dt;
            else if (std::abs(dt - s.ch.dt) > 1e-15 * dt)
                throw std::invalid_argument("composite: stabilized factors must share one dt");
        }
    if (dt < 0) throw std::invalid_argument("composite: no stabilized factor");
    return dt;
}

}  // namespace detail

// F2(d', d) over the flattened multi-index, continuous-time scale.
inline RMat local_second_order(const std::vector<LocalSubsystem>& subs,
                               const ProductTermDecomposition& dec,
                               const SeriesOptions& opt = {}) {
    detail::check_factors(subs, dec);
    int total = 1;
    std::vector<const LocalSubsystem*> stab;
    for (const auto& s : subs) {
        if (!s.stabilized)
            throw std::invalid_argument("local_second_order: all factors must be stabilized");
        stab.push_back(&s);
        total *= s.basis.dbar();
    }
    if (dec.terms.empty()) return RMat::Zero(total, total);
    double dt = detail::common_dt(subs);
    std::vector<detail::PairIndex> pairs;
    for (size_t x = 0; x < subs.size(); ++x) pairs.push_back(detail::index_pairs(dec, (int)x));
    auto series = detail::second_order_series(stab, dec, pairs, opt);
    LdMat sum = LdMat::Zero(total, total);
    for (auto& row : series)
        for (auto& a : row) sum += a;
    return (long double)dt * sum.real();
}

// Hybrid reduction: one factor carries no nominal dissipation; its slow
// coordinates are operators rho_{B,d} obeying
//   d rho_{B,d'} / dt = sum_{nu,d} F1[nu](d',d) L_B,nu rho_d R_B,nu
//                     + sum_{nu',nu,d} F2[nu'][nu](d',d) L_nu' L_nu rho_d R_nu R_nu'.
struct HybridGenerator {
    int dbar = 0;  // product of stabilized dbars
    std::vector<SpMat> LB, RB;
    std::vector<LdMat> F1;               // [nu], dbar x dbar
    std::vector<std::vector<LdMat>> F2;  // [nu'][nu], dbar x dbar
};

inline HybridGenerator hybrid_reduced_generator(const std::vector<LocalSubsystem>& subs,
                                                const ProductTermDecomposition& dec,
                                                const SeriesOptions& opt = {}) {
    detail::check_factors(subs, dec);
    int bidx = -1;
    std::vector<const LocalSubsystem*> stab;
    std::vector<int> stabx;
    for (size_t x = 0; x < subs.size(); ++x) {
        if (subs[x].stabilized) {
            stab.push_back(&subs[x]);
            stabx.push_back((int)x);
        } else if (bidx < 0) {
            bidx = (int)x;
        } else {
            throw std::invalid_argument("hybrid_reduced_generator: more than one unstabilized factor");
        }
    }
    if (bidx < 0)
        throw std::invalid_argument("hybrid_reduced_generator: no unstabilized factor");
    HybridGenerator hg;
    hg.dbar = 1;
    for (auto* s : stab) hg.dbar *= s->basis.dbar();
    int nterms = (int)dec.terms.size();
    for (int nu = 0; nu < nterms; ++nu) {
        hg.LB.push_back(dec.terms[nu].L[bidx].sparseView(1.0, 1e-300));
        hg.RB.push_back(dec.terms[nu].R[bidx].sparseView(1.0, 1e-300));
    }
    if (nterms == 0) return hg;
    double dt = detail::common_dt(subs);

    std::vector<detail::PairIndex> pairs;
    for (int x : stabx) pairs.push_back(detail::index_pairs(dec, x));

    // F1[nu](d', d) = prod_X Tr{J_{X,d'} L_X,nu S_{X,d} R_X,nu}
    for (int nu = 0; nu < nterms; ++nu) {
        LdMat prod = LdMat::Ones(1, 1);
        for (size_t k = 0; k < stab.size(); ++k) {
            const SteadyBasis& b = stab[k]->basis;
            int x = stabx[k], db = b.dbar();
            LdMat tx(db, db);
            for (int d = 0; d < db; ++d) {
                Mat sandw = dec.terms[nu].L[x] * b.S[d] * dec.terms[nu].R[x];
                for (int dp = 0; dp < db; ++dp) tx(dp, d) = trace_prod_ld(b.J[dp], sandw);
            }
            LdMat next(prod.rows() * db, prod.cols() * db);
            for (int i = 0; i < prod.rows(); ++i)
                for (int j = 0; j < prod.cols(); ++j)
                    next.block(i * db, j * db, db, db) = prod(i, j) * tx;
            prod.swap(next);
        }
        hg.F1.push_back(std::move(prod));
    }

    auto series = detail::second_order_series(stab, dec, pairs, opt);
    hg.F2.resize(nterms);
    for (int nup = 0; nup < nterms; ++nup) {
        hg.F2[nup].resize(nterms);
        for (int nu = 0; nu < nterms; ++nu) hg.F2[nup][nu] = (long double)dt * series[nup][nu];
    }

    // first-order global-trace check: tau(d') = prod_X tr S_{X,d'} should give
    // sum_{nu,d'} tau(d') F1[nu](d',d) R_nu L_nu = 0 as a B operator per d
    std::vector<ldcplx> tau(hg.dbar, 1);
    {
        int strided = hg.dbar;
        for (size_t k = 0; k < stab.size(); ++k) {
            int db = stab[k]->basis.dbar();
            strided /= db;
            for (int i = 0; i < hg.dbar; ++i)
                tau[i] *= (ldcplx)trace_prod_ld(identity(stab[k]->shape.dim()),
                                                stab[k]->basis.S[(i / strided) % db]);
        }
    }
    int nb = subs[bidx].shape.dim();
    double scale = 0;
    for (int nu = 0; nu < nterms; ++nu) scale = std::max(scale, dec.terms[nu].L[bidx].norm());
    for (int d = 0; d < hg.dbar; ++d) {
        Mat m = Mat::Zero(nb, nb);
        for (int nu = 0; nu < nterms; ++nu) {
            ldcplx c = 0;
            for (int dp = 0; dp < hg.dbar; ++dp) c += tau[dp] * hg.F1[nu](dp, d);
            m += (cplx)c * Mat(Mat(hg.RB[nu]) * Mat(hg.LB[nu]));
        }
        if (m.norm() > 1e-8 * (1.0 + scale))
            std::fputs("hybrid_reduced_generator: trace row check failed; the perturbation "
                       "may not preserve the B-trace structure\n",
                       stderr);
    }
    return hg;
}

// Heun (trapezoidal predictor-corrector) over [0, T].  The Real parameter
// controls the working precision of the B-factor states.
template <typename Real = double>
inline std::vector<Mat> hybrid_evolve(const HybridGenerator& hg, const std::vector<Mat>& rho0,
                                      double T, double dt) {
    using C = std::complex<Real>;
    using M = Eigen::Matrix<C, Eigen::Dynamic, Eigen::Dynamic>;
    using S = Eigen::SparseMatrix<C>;
    if ((int)rho0.size() != hg.dbar)
        throw std::invalid_argument("hybrid_evolve: initial state count != dbar");
    if (dt <= 0 || T < 0) throw std::invalid_argument("hybrid_evolve: bad time step");
    int nterms = (int)hg.LB.size();
    std::vector<S> lb(nterms), rb(nterms);
    for (int nu = 0; nu < nterms; ++nu) {
        lb[nu] = hg.LB[nu].cast<C>();
        rb[nu] = hg.RB[nu].cast<C>();
    }
    std::vector<M> rho(hg.dbar);
    double norm0 = 0;
    for (int d = 0; d < hg.dbar; ++d) {
        rho[d] = rho0[d].cast<C>();
        norm0 += rho0[d].norm();
    }
    std::vector<M> sandw(nterms * hg.dbar), zmat(nterms * hg.dbar);
    // out[dp] = sum_nu F1[nu](dp,.) sandwiches + second-order chains
    auto apply = [&](const std::vector<M>& in, std::vector<M>& out) {
        for (int nu = 0; nu < nterms; ++nu)
            for (int d = 0; d < hg.dbar; ++d) sandw[nu * hg.dbar + d] = lb[nu] * in[d] * rb[nu];
        for (int d = 0; d < hg.dbar; ++d) out[d].setZero(in[d].rows(), in[d].cols());
        // first order
        for (int nu = 0; nu < nterms; ++nu)
            for (int d = 0; d < hg.dbar; ++d) {
                const M& x = sandw[nu * hg.dbar + d];
                for (int dp = 0; dp < hg.dbar; ++dp) {
                    C c = (C)(std::complex<double>)hg.F1[nu](dp, d);
                    if (c != C(0)) out[dp] += c * x;
                }
            }
        // second order: Z_{nu',dp} = sum_{nu,d} F2[nu'][nu](dp,d) X_{nu,d}
        for (int nup = 0; nup < nterms; ++nup)
            for (int dp = 0; dp < hg.dbar; ++dp) {
                M z;
                for (int nu = 0; nu < nterms; ++nu)
                    for (int d = 0; d < hg.dbar; ++d) {
                        C c = (C)(std::complex<double>)hg.F2[nup][nu](dp, d);
                        if (c == C(0)) continue;
                        if (z.size() == 0) z = c * sandw[nu * hg.dbar + d];
                        else z += c * sandw[nu * hg.dbar + d];
                    }
                if (z.size()) zmat[nup * hg.dbar + dp] = std::move(z);
                else zmat[nup * hg.dbar + dp] = M();
            }
        for (int nup = 0; nup < nterms; ++nup)
            for (int dp = 0; dp < hg.dbar; ++dp) {
                const M& z = zmat[nup * hg.dbar + dp];
                if (z.size()) out[dp] += lb[nup] * z * rb[nup];
            }
    };
    long nsteps = (long)std::llround(T / dt);
    std::vector<M> k1(hg.dbar), mid(hg.dbar), k2(hg.dbar);
    for (long s = 0; s < nsteps; ++s) {
        apply(rho, k1);
        for (int d = 0; d < hg.dbar; ++d) mid[d] = rho[d] + (Real)dt * k1[d];
        apply(mid, k2);
        for (int d = 0; d < hg.dbar; ++d) rho[d] += (Real)(0.5 * dt) * (k1[d] + k2[d]);
        if ((s & 511) == 0) {
            double n = 0;
            for (auto& r : rho) n += (double)r.norm();
            if (!(n < 1e6 * (norm0 + 1.0)))
                throw std::runtime_error("hybrid_evolve: norm blow-up at step " + std::to_string(s) +
                                         "; reduce dt");
        }
    }
    std::vector<Mat> result(hg.dbar);
    for (int d = 0; d < hg.dbar; ++d) result[d] = rho[d].template cast<cplx>();
    return result;
}

}  // namespace catred

#endif
