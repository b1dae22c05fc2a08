#ifndef CATRED_TOMOGRAPHY_HPP
#define CATRED_TOMOGRAPHY_HPP

// Process tomography on the code space: error propagators E = G_ideal^-1 G,
// chi matrices in the Pauli-normalized basis, Pauli error probabilities,
// leakage coefficients, and the exponential bit-flip suppression fit.

#include "reduction.hpp"
#include <map>
#include <string>

namespace catred {

// ---- symbolic multi-qubit Pauli algebra (labels base 4: 0=I 1=X 2=Y 3=Z) ----

struct PauliProd {
    int label;
    cplx phase;
};

inline PauliProd pauli_mul_single(int a, int b) {
    if (a == 0) return {b, 1.0};
    if (b == 0) return {a, 1.0};
    if (a == b) return {0, 1.0};
    int c = a ^ b;
    bool cyclic = (a == 1 && b == 2) || (a == 2 && b == 3) || (a == 3 && b == 1);
    return {c, cyclic ? cplx(0, 1) : cplx(0, -1)};
}

inline PauliProd pauli_mul(int a, int b, int k) {
    PauliProd out{0, 1.0};
    for (int q = k - 1; q >= 0; --q) {
        int sh = 2 * q;
        PauliProd p = pauli_mul_single((a >> sh) & 3, (b >> sh) & 3);
        out.label |= p.label << sh;
        out.phase *= p.phase;
    }
    return out;
}

inline std::string pauli_name(int label, int k) {
    static const char sym[] = "IXYZ";
    std::string s(k, 'I');
    for (int q = 0; q < k; ++q) s[q] = sym[(label >> (2 * (k - 1 - q))) & 3];
    return s;
}

inline Mat pauli_matrix(int label, int k) {
    Mat x(2, 2), y(2, 2), z(2, 2);
    x << 0, 1, 1, 0;
    y << 0, cplx(0, -1), cplx(0, 1), 0;
    z << 1, 0, 0, -1;
    Mat out = identity(1);
    for (int q = k - 1; q >= 0; --q) {
        int d = (label >> (2 * q)) & 3;
        const Mat& p = d == 0 ? identity(2) : d == 1 ? x : d == 2 ? y : z;
        out = kron(out, p);
    }
    return out;
}

// PTM of a unitary: E(e, d) = 2^-k Tr{P_e U P_d U^dag}.
inline RMat ideal_gate_ptm(const Mat& u, int k) {
    int dim = 1 << (2 * k);
    RMat e(dim, dim);
    Mat uadj = u.adjoint();
    for (int d = 0; d < dim; ++d) {
        Mat m = u * pauli_matrix(d, k) * uadj;
        for (int ep = 0; ep < dim; ++ep)
            e(ep, d) = (long double)(trace_prod_ld(pauli_matrix(ep, k), m).real()) /
                       (long double)(1 << k);
    }
    return e;
}

inline RMat error_propagator(const RMat& g, const RMat& g_ideal) {
    Eigen::FullPivLU<RMat> lu(g_ideal);
    if (!lu.isInvertible()) throw std::invalid_argument("error_propagator: singular ideal gate");
    return lu.solve(g);
}

// ---- chi matrix ----
// With P_d the Pauli-normalized code-space basis, E(e,d) = sum_{mn} chi_mn
// 2^-k Tr{P_e P_m P_d P_n}.  Since P_m P_d P_n = phi(m,d,n) P_{l(m,d,n)} the
// relation inverts in closed form:
//   chi_mn = 4^-k sum_d conj(phi(m,d,n)) E(l(m,d,n), d),
// orthogonality of the structure phases guaranteeing exact round trips.
// Identity channel gives chi_11 = 1 under this normalization.

using LdChi = Eigen::Matrix<ldcplx, Eigen::Dynamic, Eigen::Dynamic>;

inline LdChi chi_from_E(const RMat& e, int k) {
    int dim = 1 << (2 * k);
    if (e.rows() != dim || e.cols() != dim)
        throw std::invalid_argument("chi_from_E: dimension does not match qubit count");
    LdChi chi = LdChi::Zero(dim, dim);
    long double inv = 1.0L;
    for (int q = 0; q < k; ++q) inv *= 0.25L;
    for (int m = 0; m < dim; ++m)
        for (int n = 0; n < dim; ++n) {
            ldcplx acc = 0;
            for (int d = 0; d < dim; ++d) {
                PauliProd md = pauli_mul(m, d, k);
                PauliProd mdn = pauli_mul(md.label, n, k);
                ldcplx phi = (ldcplx)(std::complex<double>)(md.phase * mdn.phase);
                acc += std::conj(phi) * (ldcplx)e(mdn.label, d);
            }
            chi(m, n) = inv * acc;
        }
    return chi;
}

inline RMat E_from_chi(const LdChi& chi, int k) {
    int dim = 1 << (2 * k);
    if (chi.rows() != dim || chi.cols() != dim)
        throw std::invalid_argument("E_from_chi: dimension does not match qubit count");
    RMat e = RMat::Zero(dim, dim);
    for (int m = 0; m < dim; ++m)
        for (int n = 0; n < dim; ++n)
            for (int d = 0; d < dim; ++d) {
                PauliProd md = pauli_mul(m, d, k);
                PauliProd mdn = pauli_mul(md.label, n, k);
                ldcplx phi = (ldcplx)(std::complex<double>)(md.phase * mdn.phase);
                e(mdn.label, d) += (chi(m, n) * phi).real();
            }
    return e;
}

// ---- Pauli error probabilities ----

struct PauliErrors {
    int qubits = 0;
    std::vector<std::string> labels;  // diagonal order
    RVec diag;
    long double bitflip_total = 0;  // labels containing X or Y
    long double x_total = 0;        // labels containing at least one X
    long double y_total = 0;        // labels containing at least one Y
    std::map<std::string, long double> z_errors;  // pure I/Z labels, identity excluded
};

inline PauliErrors pauli_errors(const LdChi& chi, int k) {
    int dim = 1 << (2 * k);
    PauliErrors pe;
    pe.qubits = k;
    pe.diag = RVec(dim);
    for (int m = 0; m < dim; ++m) {
        pe.labels.push_back(pauli_name(m, k));
        long double p = chi(m, m).real();
        pe.diag(m) = p;
        bool has_x = false, has_y = false;
        for (int q = 0; q < k; ++q) {
            int d = (m >> (2 * q)) & 3;
            has_x |= d == 1;
            has_y |= d == 2;
        }
        if (has_x) pe.x_total += p;
        if (has_y) pe.y_total += p;
        if (has_x || has_y) pe.bitflip_total += p;
        else if (m != 0) pe.z_errors[pe.labels.back()] = p;
    }
    return pe;
}

// ---- leakage ----
// l(t) = 1 - sum_d c_d x_d(t).  The zeroth order of c_d is the trace weight
// of S_d (sqrt(2)^k delta on the trace coordinate); order r >= 1 adds
// Tr{I_c S^(r)_d} with the correction operators of the reduction.

inline RVec leakage_coefficients(const SteadyBasis& b, const Mat& code_projector,
                                 const std::vector<std::vector<Mat>>& s_corr) {
    RVec c(b.dbar());
    for (int d = 0; d < b.dbar(); ++d) {
        ldcplx acc = trace_prod_ld(code_projector, b.S[d]);
        for (const auto& order : s_corr) acc += trace_prod_ld(code_projector, order[d]);
        c(d) = acc.real();
    }
    return c;
}

// First-order coefficients through the adjoint series: c_d - c_d^(0) =
// dt Tr{R0*(I_c) L1(S_d)}; used as an independent cross-check of the forward
// construction.
inline RVec leakage_first_order_adjoint(const KrausChannel& ch, const SteadyBasis& b,
                                        const GkslGenerator& g1, const Mat& code_projector,
                                        const RzeroOptions& opt = {}) {
    Mat radj = rzero_adjoint(ch, b, code_projector, opt);
    RVec c(b.dbar());
    for (int d = 0; d < b.dbar(); ++d)
        c(d) = (trace_prod_ld(code_projector, b.S[d]) +
                (long double)ch.dt * trace_prod_ld(radj, act(g1, b.S[d])))
                   .real();
    return c;
}

inline double leakage(const RVec& c, const RVec& x) { return (double)(1.0L - c.dot(x)); }

// ---- exponential suppression fit ----

struct FitResult {
    double a = 0;        // suppression exponent: p ~ exp(-a alpha^2)
    double sigma_a = 0;  // standard error of the slope
    double intercept = 0;
};

inline FitResult fit_bitflip_suppression(const std::vector<std::pair<double, double>>& points) {
    size_t n = points.size();
    if (n < 3) throw std::invalid_argument("fit_bitflip_suppression: need at least 3 points");
    double sx = 0, sy = 0;
    for (auto& [x, p] : points) {
        if (!(p > 0)) throw std::invalid_argument("fit_bitflip_suppression: non-positive probability");
        sx += x;
        sy += std::log(p);
    }
    double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0;
    for (auto& [x, p] : points) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (std::log(p) - my);
    }
    double slope = sxy / sxx;
    double ssr = 0;
    for (auto& [x, p] : points) {
        double r = std::log(p) - (my + slope * (x - mx));
        ssr += r * r;
    }
    FitResult f;
    f.a = -slope;
    f.sigma_a = n > 2 ? std::sqrt(ssr / (double)(n - 2) / sxx) : 0.0;
    f.intercept = my - slope * mx;
    return f;
}

}  // namespace catred

#endif
