#ifndef CATRED_INVARIANTS_HPP
#define CATRED_INVARIANTS_HPP

// Invariant operators J_d dual to a steady-state basis S_d of a channel K0:
// J_d = lim_{t->inf} (K0*)^t (S_d), Tr{J_d' S_d} = delta.  Also the zeroth
// order resolvent R0(W) = sum_{s>=0} K0^s (W - Kbar0(W)).

#include "kraus.hpp"
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>

namespace catred {

struct SteadyBasis {
    SpaceShape shape;
    std::vector<Mat> S;
    std::vector<Mat> J;
    int dbar() const { return (int)S.size(); }
};

struct InvariantOptions {
    double tol = 1e-11;
    long max_iters = 2000000;
    double steady_tol = 1e-8;    // precondition on K0(S_d) = S_d
    double duality_tol = 1e-8;   // postcondition on Tr{J_d' S_d}
    // Stagnation acceptance: truncation can split a steady eigenvalue into
    // 1 - eps with eps far below any physical rate, leaving the iterate
    // drifting for ~1/eps steps.  Once the measured per-step decay rate of
    // the decrement falls below stall_rate the loop accepts the current
    // iterate and the duality postcondition decides.
    long stall_window = 2000;
    double stall_rate = 1e-5;
    // Geometric acceleration: once the per-step increment is a single decaying
    // mode, its remaining tail is added in closed form and iteration resumes.
    // The stopping test stays authoritative, so a jump can only shorten the
    // run, never change what is accepted.
    long accel_period = 100;
};

inline SteadyBasis compute_invariants(const KrausChannel& ch, const SpaceShape& shape,
                                      const std::vector<Mat>& S,
                                      const InvariantOptions& opt = {}) {
    if (shape.dim() != ch.dim)
        throw std::invalid_argument("compute_invariants: shape/channel dim mismatch");
    for (size_t a = 0; a < S.size(); ++a) {
        for (size_t b = 0; b < S.size(); ++b) {
            cplx g = trace_prod(S[a].adjoint(), S[b]);
            double want = (a == b) ? 1.0 : 0.0;
            if (std::abs(g - want) > 1e-9)
                throw std::invalid_argument("compute_invariants: S basis not orthonormal, Gram(" +
                                            std::to_string(a) + "," + std::to_string(b) + ") = " +
                                            std::to_string(std::abs(g)));
        }
        double res = (step(ch, S[a]) - S[a]).norm();
        if (res > opt.steady_tol)
            throw std::invalid_argument("compute_invariants: S[" + std::to_string(a) +
                                        "] is not steady, |K0(S)-S| = " + std::to_string(res));
    }
    // Power-iterate m toward the dominant (quasi-)steady eigenvector of the
    // forward or adjoint map.  Truncation can split a steady eigenvalue into
    // 1 - eps with eps far below any physical rate; once the measured per-step
    // decay of the decrement drops below stall_rate the iterate is accepted.
    auto settle = [&](Mat m, bool adjoint, const char* what, size_t d) {
        long it = 0;
        double delta = 0, mark = -1.0;
        bool stalled = false;
        Mat inc, prev_inc;
        for (; it < opt.max_iters; ++it) {
            Mat next = adjoint ? step_adjoint(ch, m) : step(ch, m);
            inc = next - m;
            delta = inc.norm();
            m.swap(next);
            if (delta < opt.tol * (1.0 + m.norm())) break;
            if (opt.accel_period > 0 && (it + 1) % opt.accel_period == 0 && prev_inc.size()) {
                double nn = prev_inc.squaredNorm();
                double lam = nn > 0
                                 ? prev_inc.conjugate().cwiseProduct(inc).sum().real() / nn
                                 : 0.0;
                // never jump across a quasi-steady plateau: modes at or below
                // the stall rate are truncation artifacts that the stall logic
                // must keep, not decay to zero
                if (lam > 0.0 && lam < 1.0 - 10.0 * opt.stall_rate &&
                    (inc - lam * prev_inc).norm() < 0.3 * (1.0 - lam) * delta)
                    m += (lam / (1.0 - lam)) * inc;
            }
            prev_inc.swap(inc);
            if (opt.stall_window > 0 && (it + 1) % opt.stall_window == 0) {
                if (mark > 0 && delta < mark &&
                    -std::log(delta / mark) / (double)opt.stall_window < opt.stall_rate) {
                    stalled = true;
                    break;
                }
                mark = delta;
            }
        }
        if (it == opt.max_iters && !stalled)
            throw std::runtime_error(
                "compute_invariants: " + std::string(what) + "[" + std::to_string(d) +
                "] did not converge after " + std::to_string(opt.max_iters) +
                " iterations, last delta " + std::to_string(delta) +
                "; the spectral gap of the channel may be too small for this dt");
        return m;
    };

    SteadyBasis basis;
    basis.shape = shape;
    int n = (int)S.size();
    for (size_t d = 0; d < S.size(); ++d) basis.J.push_back(settle(S[d], true, "J", d));

    // Refine S onto the channel's own (quasi-)steady eigenvectors so that
    // Kbar0 built from (S, J) removes them exactly; without this the series
    // behind R0 pick up tails amplified by the inverse of the truncation
    // split.  For well-converged truncations this is a negligible rotation.
    std::vector<Mat> refined;
    for (size_t d = 0; d < S.size(); ++d) refined.push_back(settle(S[d], false, "S", d));
    Eigen::MatrixXcd m(n, n);
    for (int dp = 0; dp < n; ++dp)
        for (int d = 0; d < n; ++d) m(dp, d) = trace_prod(basis.J[dp], refined[d]);
    if ((m - Eigen::MatrixXcd::Identity(n, n)).norm() > opt.duality_tol)
        throw std::runtime_error(
            "compute_invariants: duality violated, |Tr{J S} - I| = " +
            std::to_string((m - Eigen::MatrixXcd::Identity(n, n)).norm()) +
            "; iterate further or check that S spans the steady space");
    Eigen::MatrixXcd minv = m.partialPivLu().solve(Eigen::MatrixXcd::Identity(n, n));
    for (int d = 0; d < n; ++d) {
        Mat s = Mat::Zero(refined[0].rows(), refined[0].cols());
        for (int q = 0; q < n; ++q) s += minv(q, d) * refined[q];
        basis.S.push_back(Mat((s + s.adjoint()) / 2.0));
    }
    for (size_t d = 0; d < S.size(); ++d) {
        double res = (step_adjoint(ch, basis.J[d]) - basis.J[d]).norm();
        if (res > opt.duality_tol)
            throw std::runtime_error("compute_invariants: J[" + std::to_string(d) +
                                     "] not invariant, residual " + std::to_string(res));
    }
    return basis;
}

// Kbar0(W) = sum_d Tr{J_d W} S_d, the projection onto the steady space.
inline Mat kbar(const SteadyBasis& b, const Mat& w) {
    Mat out = Mat::Zero(w.rows(), w.cols());
    for (int d = 0; d < b.dbar(); ++d) out += trace_prod(b.J[d], w) * b.S[d];
    return out;
}

// Adjoint projection: Kbar0*(X) = sum_d Tr{S_d X} J_d.
inline Mat kbar_adjoint(const SteadyBasis& b, const Mat& x) {
    Mat out = Mat::Zero(x.rows(), x.cols());
    for (int d = 0; d < b.dbar(); ++d) out += trace_prod(b.S[d], x) * b.J[d];
    return out;
}

struct RzeroOptions {
    double tol = 1e-10;
    long max_iters = 2000000;
    int window = 100;          // geometric-tail stopping window
    double steady_guard = 1e-6;  // allowed steady component in R0 arguments
    double stall_ratio = 0.999;  // window-gain ratio that triggers extrapolation
};

namespace detail {

// Shared series loop.  Truncation can split a steady eigenvalue into 1 - eps
// with eps below any physical rate; the leftover term then decays too slowly
// to sum step by step.  Once the per-window gain stagnates and a single
// geometric mode remains, its tail is summed in closed form.
template <typename Stepper>
Mat resolvent_sum(Mat delta, const RzeroOptions& opt, const char* name, Stepper step_once) {
    Mat acc = Mat::Zero(delta.rows(), delta.cols());
    double window_gain = 0.0, prev_gain = -1.0;
    for (long it = 0;; ++it) {
        acc += delta;
        window_gain += delta.norm();
        if ((it + 1) % opt.window == 0) {
            if (window_gain < opt.tol * (1.0 + acc.norm())) break;
            if (prev_gain > 0 && window_gain < prev_gain &&
                window_gain > opt.stall_ratio * prev_gain) {
                Mat next = step_once(delta);
                double nn = delta.squaredNorm();
                double lam = nn > 0 ? delta.conjugate().cwiseProduct(next).sum().real() / nn : 0.0;
                if (lam > 0.0 && lam < 1.0 && (next - lam * delta).norm() < 1e-4 * next.norm()) {
                    acc += next / (1.0 - lam);
                    break;
                }
            }
            prev_gain = window_gain;
            window_gain = 0.0;
        }
        if (it >= opt.max_iters)
            throw std::runtime_error(std::string(name) + ": series did not converge after " +
                                     std::to_string(opt.max_iters) + " terms");
        delta = step_once(delta);
    }
    return acc;
}

}  // namespace detail

// Discrete-time resolvent sum.  Multiply by dt for the continuous-time R0.
inline Mat rzero(const KrausChannel& ch, const SteadyBasis& b, const Mat& w,
                 const RzeroOptions& opt = {}) {
    return detail::resolvent_sum(Mat(w - kbar(b, w)), opt, "rzero",
                                 [&](const Mat& m) { return step(ch, m); });
}

// Adjoint series: sum_{s>=0} (K0*)^s (X - Kbar0*(X)).
inline Mat rzero_adjoint(const KrausChannel& ch, const SteadyBasis& b, const Mat& x,
                         const RzeroOptions& opt = {}) {
    return detail::resolvent_sum(Mat(x - kbar_adjoint(b, x)), opt, "rzero_adjoint",
                                 [&](const Mat& m) { return step_adjoint(ch, m); });
}

// ---- binary cache for computed invariants -------------------------------

inline uint64_t fnv1a(const void* data, size_t len, uint64_t h = 1469598103934665603ull) {
    const unsigned char* p = (const unsigned char*)data;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t channel_hash(const KrausChannel& ch, double tol) {
    uint64_t h = fnv1a(&ch.dt, sizeof ch.dt);
    h = fnv1a(&tol, sizeof tol, h);
    if (ch.has_u) h = fnv1a(ch.U.data(), sizeof(cplx) * ch.U.size(), h);
    h = fnv1a(ch.Mbar.data(), sizeof(cplx) * ch.Mbar.size(), h);
    for (auto& L : ch.Lbar) h = fnv1a(L.data(), sizeof(cplx) * L.size(), h);
    return h;
}

// Format: magic "CRJD", u32 version, u64 key, u32 count, u32 dim, then
// row-major complex double entries of each J_d.
inline bool save_invariants(const std::string& path, uint64_t key,
                            const std::vector<Mat>& J) {
    std::ofstream f(path, std::ios::binary);
    if (!f) return false;
    const char magic[4] = {'C', 'R', 'J', 'D'};
    uint32_t version = 1, count = (uint32_t)J.size(), dim = (uint32_t)J.at(0).rows();
    f.write(magic, 4);
    f.write((const char*)&version, 4);
    f.write((const char*)&key, 8);
    f.write((const char*)&count, 4);
    f.write((const char*)&dim, 4);
    for (auto& j : J) {
        Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> r = j;
        f.write((const char*)r.data(), sizeof(cplx) * r.size());
    }
    return (bool)f;
}

inline bool load_invariants(const std::string& path, uint64_t key, std::vector<Mat>& J) {
    std::ifstream f(path, std::ios::binary);
    if (!f) return false;
    char magic[4];
    uint32_t version = 0, count = 0, dim = 0;
    uint64_t k = 0;
    f.read(magic, 4);
    f.read((char*)&version, 4);
    f.read((char*)&k, 8);
    f.read((char*)&count, 4);
    f.read((char*)&dim, 4);
    if (!f || std::string(magic, 4) != "CRJD" || version != 1 || k != key) return false;
    J.clear();
    for (uint32_t i = 0; i < count; ++i) {
        Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> r(dim, dim);
        f.read((char*)r.data(), sizeof(cplx) * r.size());
        if (!f) return false;
        J.push_back(Mat(r));
    }
    return true;
}

// Full basis cache: the refinement makes S depend on the channel too, so J
// and S are stored together.  Format: magic "CRSB", u32 version, u64 key,
// u32 count, u32 dim, J entries then S entries, row-major complex doubles.
inline bool save_basis(const std::string& path, uint64_t key, const SteadyBasis& b) {
    std::ofstream f(path, std::ios::binary);
    if (!f) return false;
    const char magic[4] = {'C', 'R', 'S', 'B'};
    uint32_t version = 1, count = (uint32_t)b.J.size(), dim = (uint32_t)b.J.at(0).rows();
    f.write(magic, 4);
    f.write((const char*)&version, 4);
    f.write((const char*)&key, 8);
    f.write((const char*)&count, 4);
    f.write((const char*)&dim, 4);
    for (const auto* set : {&b.J, &b.S})
        for (const auto& m : *set) {
            Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> r = m;
            f.write((const char*)r.data(), sizeof(cplx) * r.size());
        }
    return (bool)f;
}

inline bool load_basis(const std::string& path, uint64_t key, SteadyBasis& b) {
    std::ifstream f(path, std::ios::binary);
    if (!f) return false;
    char magic[4];
    uint32_t version = 0, count = 0, dim = 0;
    uint64_t k = 0;
    f.read(magic, 4);
    f.read((char*)&version, 4);
    f.read((char*)&k, 8);
    f.read((char*)&count, 4);
    f.read((char*)&dim, 4);
    if (!f || std::string(magic, 4) != "CRSB" || version != 1 || k != key) return false;
    b.J.clear();
    b.S.clear();
    for (auto* set : {&b.J, &b.S})
        for (uint32_t i = 0; i < count; ++i) {
            Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> r(dim, dim);
            f.read((char*)r.data(), sizeof(cplx) * r.size());
            if (!f) return false;
            set->push_back(Mat(r));
        }
    b.shape = SpaceShape({(int)dim});
    return true;
}

}  // namespace catred

#endif
