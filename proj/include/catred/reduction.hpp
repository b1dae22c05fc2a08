#ifndef CATRED_REDUCTION_HPP
#define CATRED_REDUCTION_HPP

// Reduced dynamics of the slow coordinates x_d = Tr{J_d rho}:
//   F(1)_{d',d} = Tr{J_d' L1(S_d)}
//   S(1)_d     = R0(L1(S_d))
//   F(n)_{d',d} = Tr{J_d' L1(S(n-1)_d)}
//   S(n)_d     = R0(L1(S(n-1)_d) - sum_{d''} sum_{r=1..n} F(r)_{d'',d} S(n-r)_{d''})
// with R0 the continuous-time resolvent (dt times the discrete series).
// The perturbation strength is folded into gen1, so F(n) and S(n) returned
// here absorb the eps^n factors.

#include "invariants.hpp"
#include <unsupported/Eigen/MatrixFunctions>
#include <functional>

namespace catred {

struct ReducedGenerator {
    int dbar = 0;
    std::vector<RMat> F;          // F[r-1] is the order-r contribution
    std::vector<std::vector<Mat>> S_corr;  // S_corr[r-1][d] = S(r)_d

    RMat total() const {
        RMat t = RMat::Zero(dbar, dbar);
        for (auto& f : F) t += f;
        return t;
    }
    int order() const { return (int)F.size(); }
};

inline RMat first_order(const SteadyBasis& b, const GkslGenerator& g1) {
    int n = b.dbar();
    RMat f(n, n);
    for (int d = 0; d < n; ++d) {
        Mat l1s = act(g1, b.S[d]);
        for (int dp = 0; dp < n; ++dp) f(dp, d) = trace_prod_ld(b.J[dp], l1s).real();
    }
    return f;
}

inline ReducedGenerator higher_orders(const KrausChannel& ch, const SteadyBasis& b,
                                      const GkslGenerator& g1, int order,
                                      const RzeroOptions& ropt = {}) {
    if (order < 1 || order > 6)
        throw std::invalid_argument("higher_orders: order must be in 1..6");
    int n = b.dbar();
    ReducedGenerator red;
    red.dbar = n;
    red.F.push_back(first_order(b, g1));
    std::vector<std::vector<Mat>> S_all;  // S_all[r][d], r=0 is S itself
    S_all.push_back(b.S);
    for (int r = 1; r < order; ++r) {
        // correction operators S(r)
        std::vector<Mat> s_r;
        for (int d = 0; d < n; ++d) {
            Mat arg = act(g1, S_all[r - 1][d]);
            for (int q = 1; q <= r; ++q)
                for (int dpp = 0; dpp < n; ++dpp) {
                    long double c = red.F[q - 1](dpp, d);
                    if (c != 0.0L) arg -= (double)c * S_all[r - q][dpp];
                }
            double proj = kbar(b, arg).norm();
            if (proj > ropt.steady_guard * (1.0 + arg.norm()))
                throw std::runtime_error("higher_orders: argument of R0 at order " +
                                         std::to_string(r) + " has steady component " +
                                         std::to_string(proj));
            s_r.push_back(ch.dt * rzero(ch, b, arg, ropt));
        }
        S_all.push_back(s_r);
        red.S_corr.push_back(s_r);
        RMat f(n, n);
        for (int d = 0; d < n; ++d) {
            Mat l1s = act(g1, s_r[d]);
            for (int dp = 0; dp < n; ++dp) f(dp, d) = trace_prod_ld(b.J[dp], l1s).real();
        }
        red.F.push_back(f);
    }
    return red;
}

inline ReducedGenerator second_order(const KrausChannel& ch, const SteadyBasis& b,
                                     const GkslGenerator& g1,
                                     const RzeroOptions& ropt = {}) {
    return higher_orders(ch, b, g1, 2, ropt);
}

inline RMat expm(const RMat& m) { return m.exp(); }

inline RMat reduced_propagator(const ReducedGenerator& red, double t) {
    return expm(RMat(t * red.total()));
}

// One explicit Euler step of a slowly time-varying reduced model:
// G <- (I + h F(t)) G, with F(t) rebuilt from gen1(t) at the given order.
inline RMat time_varying_reduced_step(const KrausChannel& ch, const SteadyBasis& b,
                                      const std::function<GkslGenerator(double)>& gen1_at,
                                      double t, double h, int order, const RMat& g) {
    ReducedGenerator red = higher_orders(ch, b, gen1_at(t), order);
    RMat f = red.total();
    return g + h * (f * g);
}

}  // namespace catred

#endif
