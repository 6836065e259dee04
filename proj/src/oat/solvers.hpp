#pragma once

#include "oat/geometry.hpp"
#include "oat/image.hpp"
#include "oat/sparse.hpp"
#include "oat/tensor.hpp"

namespace oat {

// Shared knob set for the primal-dual solvers. The step bound uses
// L = L_M + L_grad (plus 1 for the orthonormal wavelet block in the TV-L1
// solver); gamma = gamma_factor * fidelity weight drives the acceleration
// theta_n = 1/sqrt(1 + 2*gamma*tau_{n-1}). tensor_update_stride = 0 keeps the
// anisotropy tensor frozen at the identity (isotropic TV).
struct SolverConfig {
    int iters = 100;
    double lambda = 1e-4; // a2tv fidelity weight
    double alpha = 1.0;   // tvl1 TV weight
    double mu = 0.1;      // tvl1 wavelet weight
    double k = 0.5;
    double sigma_px = 1.5;
    double rho_px = 3.0;
    int tensor_update_stride = 1;
    double gamma_factor = 0.7;
    double tau0 = 0.5;
    double L_M = 160.0;
    double L_grad = 8.0;
    bool extrapolation = false;
    int trace_stride = 0; // 0 = no energy trace
    int levels = 3;       // tvl1 wavelet depth
    bool allow_unnormalized = false;

    void validate() const {
        require(iters >= 1, errc::invalid_argument, "solver needs iters >= 1");
        require(tau0 > 0.0, errc::invalid_argument, "tau0 must be positive");
        require(L_M >= 0.0 && L_grad >= 0.0 && L_M + L_grad > 0.0, errc::invalid_argument,
                "need a positive Lipschitz bound L_M + L_grad");
        require(gamma_factor >= 0.0, errc::invalid_argument, "gamma_factor must be >= 0");
        require(tensor_update_stride >= 0, errc::invalid_argument,
                "tensor_update_stride must be >= 0 (0 freezes A at the identity)");
        require(trace_stride >= 0, errc::invalid_argument, "trace_stride must be >= 0");
    }
};

struct TraceRow {
    int iter;
    double fidelity;
    double regularizer;
    double total;
    double tau;
    double sigma;
};

struct SolveResult {
    ImageGrid2D u;
    std::vector<TraceRow> trace;         // energy trace (primal-dual solvers)
    std::vector<double> residual_norms;  // per-iteration residuals (lsqr)
};

// Paige-Saunders LSQR for min |Mu - p|; damp > 0 solves the stacked system
// [M; damp*I] u = [p; 0]. Stops after iters steps or when the relative
// residual falls below atol. residual_norms records the (damped) residual.
SolveResult lsqr(const SparseModelMatrix& m, const ImageGrid2D& grid_shape,
                 const std::vector<double>& p, int iters, double atol = 0.0, double damp = 0.0);

// min |Mu-p|^2 + lam*|u|^2 via LSQR with damp = sqrt(lam).
SolveResult tikhonov(const SparseModelMatrix& m, const ImageGrid2D& grid_shape,
                     const std::vector<double>& p, double lam, int iters);

// Dual proximal step shared by the primal-dual solvers: the fidelity dual
// q = (q_tilde - sigma*p) / (1 + sigma/lam) and the pointwise projection of
// z onto the unit ball of per-pixel Euclidean magnitudes.
void prox_fstar(std::vector<double>& q_tilde, GradientField2D& z_tilde, double sigma_step,
                double lam, const std::vector<double>& p);

// Accelerated Chambolle-Pock for  min_u  (lambda/2)|Mu-p|^2 + |A grad u|_2,1.
// A starts as the identity and is rebuilt from the current iterate every
// tensor_update_stride iterations. The dual step reads u^n; the optional
// extrapolation flag feeds u^{n+1} + theta (u^{n+1} - u^n) instead.
SolveResult chambolle_pock_a2tv(const SparseModelMatrix& m, const ImageGrid2D& grid_shape,
                                const std::vector<double>& p, const SolverConfig& cfg);

// Same scheme for  min_u  |Mu-p|^2 + mu*|Phi u|_1 + alpha*TV(u)  with three
// dual blocks (fidelity, alpha-ball gradient dual, mu-ball wavelet dual).
SolveResult chambolle_pock_tvl1(const SparseModelMatrix& m, const ImageGrid2D& grid_shape,
                                const std::vector<double>& p, const SolverConfig& cfg);

double objective_a2tv(const ImageGrid2D& u, const TensorField2D& A, const SparseModelMatrix& m,
                      const std::vector<double>& p, double lam);
double objective_tvl1(const ImageGrid2D& u, const SparseModelMatrix& m,
                      const std::vector<double>& p, double alpha, double mu, int levels);

} // namespace oat
