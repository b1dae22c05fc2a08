#ifndef CATRED_CORE_HPP
#define CATRED_CORE_HPP

// Basic Hilbert-space helpers: shapes, operators on truncated Fock spaces,
// coherent and cat states, tensor products.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <complex>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace catred {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using SpMat = Eigen::SparseMatrix<cplx>;
using ldcplx = std::complex<long double>;
// Small reduced-dynamics matrices are kept in extended precision: several
// error channels of interest sit 15+ orders of magnitude below the leading
// entries, and survive only if the cancellations happen above double noise.
using RMat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using RVec = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

struct SpaceShape {
    std::vector<int> dims;

    SpaceShape() = default;
    SpaceShape(std::initializer_list<int> d) : dims(d) {}
    explicit SpaceShape(std::vector<int> d) : dims(std::move(d)) {}

    int dim() const {
        int n = 1;
        for (int d : dims) n *= d;
        return n;
    }
    int factors() const { return (int)dims.size(); }
    bool operator==(const SpaceShape& o) const { return dims == o.dims; }
    bool operator!=(const SpaceShape& o) const { return !(*this == o); }
    std::string str() const {
        std::string s = "[";
        for (size_t i = 0; i < dims.size(); ++i)
            s += (i ? "," : "") + std::to_string(dims[i]);
        return s + "]";
    }
};

// Operator tagged with the space it acts on.  Mixing shapes is a bug, not a
// broadcast, so arithmetic checks and throws.
struct Op {
    SpaceShape shape;
    Mat m;

    Op() = default;
    Op(SpaceShape s, Mat mat) : shape(std::move(s)), m(std::move(mat)) {
        if (m.rows() != shape.dim() || m.cols() != shape.dim())
            throw std::invalid_argument("Op: matrix is " + std::to_string(m.rows()) +
                                        "x" + std::to_string(m.cols()) +
                                        " but shape " + shape.str() + " has dim " +
                                        std::to_string(shape.dim()));
    }
};

inline void check_same_shape(const Op& a, const Op& b, const char* what) {
    if (a.shape != b.shape)
        throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                    a.shape.str() + " vs " + b.shape.str());
}

inline Op operator*(const Op& a, const Op& b) {
    check_same_shape(a, b, "operator*");
    return Op(a.shape, a.m * b.m);
}
inline Op operator+(const Op& a, const Op& b) {
    check_same_shape(a, b, "operator+");
    return Op(a.shape, a.m + b.m);
}
inline Op operator-(const Op& a, const Op& b) {
    check_same_shape(a, b, "operator-");
    return Op(a.shape, a.m - b.m);
}
inline Op operator*(cplx c, const Op& a) { return Op(a.shape, c * a.m); }
inline Op adjoint(const Op& a) { return Op(a.shape, a.m.adjoint()); }

inline bool is_hermitian(const Mat& m, double tol = 1e-12) {
    return (m - m.adjoint()).norm() <= tol * (1.0 + m.norm());
}

inline Mat identity(int n) { return Mat::Identity(n, n); }

inline Mat annihilation_single(int n) {
    Mat a = Mat::Zero(n, n);
    for (int k = 1; k < n; ++k) a(k - 1, k) = std::sqrt((double)k);
    return a;
}

// Kronecker product, row-major factor order (factor 0 outermost).
inline Mat kron(const Mat& a, const Mat& b) {
    Mat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline Mat kron_all(const std::vector<Mat>& ms) {
    Mat out = ms.at(0);
    for (size_t i = 1; i < ms.size(); ++i) out = kron(out, ms[i]);
    return out;
}

inline Op tensor(const std::vector<Op>& ops) {
    std::vector<int> dims;
    std::vector<Mat> ms;
    for (const auto& o : ops) {
        dims.insert(dims.end(), o.shape.dims.begin(), o.shape.dims.end());
        ms.push_back(o.m);
    }
    return Op(SpaceShape(dims), kron_all(ms));
}

// Local operator embedded into the full space as a sparse matrix.
inline SpMat embed_sparse(const Mat& local, const SpaceShape& shape, int mode) {
    int nm = shape.dims.at(mode);
    if (local.rows() != nm || local.cols() != nm)
        throw std::invalid_argument("embed_sparse: operator dim " +
                                    std::to_string(local.rows()) +
                                    " != mode dim " + std::to_string(nm));
    int pre = 1, post = 1;
    for (int i = 0; i < mode; ++i) pre *= shape.dims[i];
    for (int i = mode + 1; i < shape.factors(); ++i) post *= shape.dims[i];
    SpMat out(shape.dim(), shape.dim());
    std::vector<Eigen::Triplet<cplx>> trip;
    for (int i = 0; i < nm; ++i)
        for (int j = 0; j < nm; ++j) {
            cplx v = local(i, j);
            if (v == cplx(0.0, 0.0)) continue;
            for (int p = 0; p < pre; ++p)
                for (int q = 0; q < post; ++q)
                    trip.emplace_back((p * nm + i) * post + q, (p * nm + j) * post + q, v);
        }
    out.setFromTriplets(trip.begin(), trip.end());
    out.makeCompressed();
    return out;
}

inline Op annihilation(const SpaceShape& shape, int mode) {
    return Op(shape, Mat(embed_sparse(annihilation_single(shape.dims.at(mode)), shape, mode)));
}

inline Op number_op(const SpaceShape& shape, int mode) {
    int nm = shape.dims.at(mode);
    Mat n = Mat::Zero(nm, nm);
    for (int k = 0; k < nm; ++k) n(k, k) = (double)k;
    return Op(shape, Mat(embed_sparse(n, shape, mode)));
}

// Weight of the truncated tail of a coherent state: e^{-|a|^2} |a|^{2N} / N!.
inline double coherent_tail(double alpha_sq, int nmax) {
    return std::exp(-alpha_sq + nmax * std::log(alpha_sq) - std::lgamma(nmax + 1.0));
}

inline Vec coherent_state(cplx alpha, int dim) {
    Vec c(dim);
    c(0) = std::exp(-0.5 * std::norm(alpha));
    for (int n = 1; n < dim; ++n) c(n) = c(n - 1) * alpha / std::sqrt((double)n);
    return c;
}

// Orthonormal basis of the steady operator space of the two-photon dissipator
// with real pumping amplitude alpha.  S[0], S[1] carry the cat populations,
// S[2], S[3] the coherences.  code_projector is the projector onto the span
// of the two cat states.
struct CatBasis {
    SpaceShape shape;
    std::vector<Mat> S;
    Mat code_projector;
    Vec cat_plus, cat_minus;
};

inline CatBasis cat_steady_basis(double alpha, int nmax, double tail_tol = 1e-12) {
    double a2 = alpha * alpha;
    double tail = coherent_tail(a2, nmax);
    if (!(tail < tail_tol))
        throw std::invalid_argument("cat_steady_basis: truncation nmax=" +
                                    std::to_string(nmax) + " leaves coherent tail " +
                                    std::to_string(tail) + " for alpha^2=" +
                                    std::to_string(a2));
    int dim = nmax + 1;
    Vec cp = coherent_state(alpha, dim), cm = coherent_state(-alpha, dim);
    // normalize with the truncated norms so the basis is exactly orthonormal
    // at any admissible truncation (the analytic 1 +- e^{-2 a^2} differ by
    // the tail); C+ and C- are orthogonal exactly, by parity
    Vec catp = cp + cm, catm = cp - cm;
    catp /= catp.norm();
    catm /= catm.norm();
    Mat pp = catp * catp.adjoint();
    Mat mm = catm * catm.adjoint();
    Mat pm = catp * catm.adjoint();
    Mat mp = catm * catp.adjoint();
    double r = 1.0 / std::sqrt(2.0);
    CatBasis b;
    b.shape = SpaceShape({dim});
    b.S = {r * (pp + mm), r * (pp - mm), r * cplx(0, 1) * (pm - mp), r * (pm + mp)};
    b.code_projector = pp + mm;
    b.cat_plus = catp;
    b.cat_minus = catm;
    return b;
}

// Frobenius inner product Tr{A B} accumulated in extended precision.  This is
// the trace-duality pairing (no conjugation); callers pass the dual element.
inline ldcplx trace_prod_ld(const Mat& a, const Mat& b) {
    ldcplx acc(0.0L, 0.0L);
    int n = (int)a.rows();
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            cplx p = a(j, i) * b(i, j);
            acc += ldcplx(p.real(), p.imag());
        }
    return acc;
}

inline cplx trace_prod(const Mat& a, const Mat& b) {
    ldcplx t = trace_prod_ld(a, b);
    return cplx((double)t.real(), (double)t.imag());
}

// Zero out entries outside the multiplicative closure of the sparsity pattern
// of `ref`.  Used to keep functions of structured matrices (inverse square
// roots etc.) exactly on the symmetry sectors of their argument.
inline void mask_to_pattern_closure(Mat& x, const Mat& ref, double eps = 0.0) {
    int n = (int)ref.rows();
    using BMat = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;
    BMat pat(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) pat(i, j) = std::abs(ref(i, j)) > eps || i == j;
    for (int pass = 0; pass < 64; ++pass) {
        bool changed = false;
        BMat next = pat;
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                if (!pat(k, j)) continue;
                for (int i = 0; i < n; ++i)
                    if (pat(i, k) && !next(i, j)) { next(i, j) = true; changed = true; }
            }
        pat.swap(next);
        if (!changed) break;
    }
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            if (!pat(i, j)) x(i, j) = cplx(0.0, 0.0);
}

}  // namespace catred

#endif
