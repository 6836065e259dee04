#include "oat/solvers.hpp"

#include <cmath>

namespace oat {

namespace {

double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

} // namespace

SolveResult lsqr(const SparseModelMatrix& m, const ImageGrid2D& grid_shape,
                 const std::vector<double>& p, int iters, double atol, double damp) {
    require(iters >= 1, errc::invalid_argument, "lsqr needs iters >= 1");
    require(p.size() == m.n_rows(), errc::dimension_mismatch,
            "lsqr: sinogram length does not match the matrix");
    require(grid_shape.size() == m.n_cols(), errc::dimension_mismatch,
            "lsqr: grid size does not match the matrix");

    SolveResult res;
    res.u = grid_shape;
    std::fill(res.u.values.begin(), res.u.values.end(), 0.0);
    std::vector<double>& x = res.u.values;

    std::vector<double> u = p; // bidiagonalization vectors
    std::vector<double> v(m.n_cols()), w, tmp_m(m.n_rows()), tmp_n(m.n_cols());

    double beta = norm2(u);
    const double b_norm = beta;
    if (beta == 0.0) return res; // p = 0: x = 0 is exact
    for (double& e : u) e /= beta;

    m.apply_adjoint(u, v);
    double alpha = norm2(v);
    if (alpha == 0.0) return res;
    for (double& e : v) e /= alpha;
    w = v;

    double phibar = beta, rhobar = alpha;
    double res2 = 0.0; // accumulated damping residual (sum of psi^2)

    for (int it = 0; it < iters; ++it) {
        // continue the Golub-Kahan bidiagonalization
        m.apply(v, tmp_m);
        for (std::size_t i = 0; i < u.size(); ++i) u[i] = tmp_m[i] - alpha * u[i];
        beta = norm2(u);
        if (beta > 0.0)
            for (double& e : u) e /= beta;

        m.apply_adjoint(u, tmp_n);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = tmp_n[i] - beta * v[i];
        alpha = norm2(v);
        if (alpha > 0.0)
            for (double& e : v) e /= alpha;

        // eliminate the damping entry, then the subdiagonal
        double rhobar1 = rhobar, psi = 0.0;
        if (damp > 0.0) {
            rhobar1 = std::sqrt(rhobar * rhobar + damp * damp);
            const double cs1 = rhobar / rhobar1;
            const double sn1 = damp / rhobar1;
            psi = sn1 * phibar;
            phibar = cs1 * phibar;
        }
        const double rho = std::sqrt(rhobar1 * rhobar1 + beta * beta);
        const double cs = rhobar1 / rho;
        const double sn = beta / rho;
        const double theta = sn * alpha;
        rhobar = -cs * alpha;
        const double phi = cs * phibar;
        phibar = sn * phibar;

        const double t1 = phi / rho;
        const double t2 = -theta / rho;
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] += t1 * w[i];
            w[i] = v[i] + t2 * w[i];
        }

        res2 += psi * psi;
        const double rnorm = std::sqrt(phibar * phibar + res2);
        res.residual_norms.push_back(rnorm);
        if (atol > 0.0 && rnorm <= atol * b_norm) break;
        if (beta == 0.0 || alpha == 0.0) break; // exact solution reached
    }
    return res;
}

SolveResult tikhonov(const SparseModelMatrix& m, const ImageGrid2D& grid_shape,
                     const std::vector<double>& p, double lam, int iters) {
    require(lam >= 0.0, errc::invalid_argument, "tikhonov weight must be >= 0");
    return lsqr(m, grid_shape, p, iters, 0.0, std::sqrt(lam));
}

} // namespace oat
