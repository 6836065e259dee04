#include <cmath>

#include "oat/ops.hpp"
#include "oat/solvers.hpp"

namespace oat {

namespace {

void check_normalized(const SparseModelMatrix& m, bool allow_unnormalized) {
    const double scale = m.norm_scale();
    if (allow_unnormalized) return;
    require(std::fabs(scale / 160.0 - 1.0) <= 1e-6, errc::invalid_argument,
            "model matrix is not normalized: sqrt(|M|_inf*|M|_1) = " + std::to_string(scale) +
                ", expected 160; run normalize_matrix or set allow_unnormalized");
}

double sq_norm_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

} // namespace

void prox_fstar(std::vector<double>& q_tilde, GradientField2D& z_tilde, double sigma_step,
                double lam, const std::vector<double>& p) {
    require(sigma_step > 0.0 && lam > 0.0, errc::invalid_argument,
            "prox_fstar needs positive sigma_step and lam");
    require(q_tilde.size() == p.size(), errc::dimension_mismatch,
            "prox_fstar: dual and data lengths differ");
    const double denom = 1.0 + sigma_step / lam;
    for (std::size_t i = 0; i < q_tilde.size(); ++i)
        q_tilde[i] = (q_tilde[i] - sigma_step * p[i]) / denom;
    for (std::size_t i = 0; i < z_tilde.size(); ++i) {
        const double mag = std::hypot(z_tilde.gx[i], z_tilde.gy[i]);
        if (mag > 1.0) {
            z_tilde.gx[i] /= mag;
            z_tilde.gy[i] /= mag;
        }
    }
}

double objective_a2tv(const ImageGrid2D& u, const TensorField2D& A, const SparseModelMatrix& m,
                      const std::vector<double>& p, double lam) {
    std::vector<double> mu;
    m.apply(u.values, mu);
    require(mu.size() == p.size(), errc::dimension_mismatch, "objective_a2tv: data length mismatch");
    return 0.5 * lam * sq_norm_diff(mu, p) + a2tv_value(A, u);
}

double objective_tvl1(const ImageGrid2D& u, const SparseModelMatrix& m,
                      const std::vector<double>& p, double alpha, double mu, int levels) {
    std::vector<double> y;
    m.apply(u.values, y);
    require(y.size() == p.size(), errc::dimension_mismatch, "objective_tvl1: data length mismatch");
    double l1 = 0.0;
    for (double w : haar_forward(u, levels)) l1 += std::fabs(w);
    return sq_norm_diff(y, p) + mu * l1 + alpha * tv_value(u);
}

SolveResult chambolle_pock_a2tv(const SparseModelMatrix& m, const ImageGrid2D& grid_shape,
                                const std::vector<double>& p, const SolverConfig& cfg) {
    cfg.validate();
    require(cfg.lambda > 0.0, errc::invalid_argument, "a2tv needs lambda > 0");
    require(p.size() == m.n_rows(), errc::dimension_mismatch,
            "a2tv: sinogram length does not match the matrix");
    require(grid_shape.size() == m.n_cols(), errc::dimension_mismatch,
            "a2tv: grid size does not match the matrix");
    check_normalized(m, cfg.allow_unnormalized);

    const int nx = grid_shape.nx, ny = grid_shape.ny;
    SolveResult res;
    res.u = grid_shape;
    std::fill(res.u.values.begin(), res.u.values.end(), 0.0);

    ImageGrid2D& u = res.u;
    ImageGrid2D ubar = u, uin = u;
    std::vector<double> u_prev(u.size());
    std::vector<double> q(m.n_rows(), 0.0);
    GradientField2D z(nx, ny), g(nx, ny);
    TensorField2D A(nx, ny); // identity until the first rebuild
    A.sigma_px = cfg.sigma_px;
    A.rho_px = cfg.rho_px;
    A.k = cfg.k;

    std::vector<double> mu_vec(m.n_rows()), mtq(u.size()), div(u.size());

    const double L = cfg.L_M + cfg.L_grad;
    double tau = cfg.tau0;
    double sigma = 1.0 / (cfg.tau0 * L * L);
    const double step_product = tau * sigma; // kept exact across the schedule
    const double gamma = cfg.gamma_factor * cfg.lambda;

    for (int it = 0; it < cfg.iters; ++it) {
        require(tau * sigma * L * L <= 1.0 + 1e-9, errc::numeric_failure,
                "step-size invariant tau*sigma*L^2 <= 1 violated");
        const double tau_used = tau, sigma_used = sigma;

        const ImageGrid2D& dual_in = cfg.extrapolation ? ubar : u;
        m.apply(dual_in.values, mu_vec);
        for (std::size_t i = 0; i < q.size(); ++i) q[i] += sigma * mu_vec[i];
        adaptive_gradient(A, dual_in, g);
        for (std::size_t i = 0; i < z.size(); ++i) {
            z.gx[i] += sigma * g.gx[i];
            z.gy[i] += sigma * g.gy[i];
        }
        prox_fstar(q, z, sigma, cfg.lambda, p);

        u_prev = u.values;
        m.apply_adjoint(q, mtq);
        adaptive_divergence(A, z, div);
        for (std::size_t i = 0; i < u.size(); ++i) u.values[i] -= tau * (mtq[i] + div[i]);

        const double theta = 1.0 / std::sqrt(1.0 + 2.0 * gamma * tau);
        tau *= theta;
        sigma = step_product / tau;
        if (cfg.extrapolation) {
            for (std::size_t i = 0; i < u.size(); ++i)
                ubar.values[i] = u.values[i] + theta * (u.values[i] - u_prev[i]);
        }

        if (cfg.tensor_update_stride > 0 && (it + 1) % cfg.tensor_update_stride == 0)
            A = build_tensor_field(u, cfg.sigma_px, cfg.rho_px, cfg.k);

        if (cfg.trace_stride > 0 && (it % cfg.trace_stride == 0 || it == cfg.iters - 1)) {
            m.apply(u.values, mu_vec);
            const double fid = 0.5 * cfg.lambda * sq_norm_diff(mu_vec, p);
            const double reg = a2tv_value(A, u);
            res.trace.push_back({it, fid, reg, fid + reg, tau_used, sigma_used});
        }
    }
    return res;
}

SolveResult chambolle_pock_tvl1(const SparseModelMatrix& m, const ImageGrid2D& grid_shape,
                                const std::vector<double>& p, const SolverConfig& cfg) {
    cfg.validate();
    require(cfg.alpha >= 0.0 && cfg.mu >= 0.0, errc::invalid_argument,
            "tvl1 needs alpha >= 0 and mu >= 0");
    require(p.size() == m.n_rows(), errc::dimension_mismatch,
            "tvl1: sinogram length does not match the matrix");
    require(grid_shape.size() == m.n_cols(), errc::dimension_mismatch,
            "tvl1: grid size does not match the matrix");
    check_normalized(m, cfg.allow_unnormalized);

    const int nx = grid_shape.nx, ny = grid_shape.ny;
    SolveResult res;
    res.u = grid_shape;
    std::fill(res.u.values.begin(), res.u.values.end(), 0.0);

    ImageGrid2D& u = res.u;
    ImageGrid2D ubar = u;
    std::vector<double> u_prev(u.size());
    std::vector<double> q(m.n_rows(), 0.0);
    GradientField2D z(nx, ny), g(nx, ny);
    std::vector<double> w(u.size(), 0.0), coeffs(u.size()), wback(u.size());
    std::vector<double> mu_vec(m.n_rows()), mtq(u.size()), divz(u.size());

    // |y|^2 fidelity has the conjugate prox of prox_fstar with weight 2;
    // the orthonormal wavelet adds 1 to the conservative Lipschitz sum.
    const double lam_eff = 2.0;
    const double L = cfg.L_M + cfg.L_grad + 1.0;
    double tau = cfg.tau0;
    double sigma = 1.0 / (cfg.tau0 * L * L);
    const double step_product = tau * sigma;
    const double gamma = cfg.gamma_factor * lam_eff;

    for (int it = 0; it < cfg.iters; ++it) {
        require(tau * sigma * L * L <= 1.0 + 1e-9, errc::numeric_failure,
                "step-size invariant tau*sigma*L^2 <= 1 violated");
        const double tau_used = tau, sigma_used = sigma;

        const ImageGrid2D& dual_in = cfg.extrapolation ? ubar : u;
        m.apply(dual_in.values, mu_vec);
        const double denom = 1.0 + sigma / lam_eff;
        for (std::size_t i = 0; i < q.size(); ++i)
            q[i] = (q[i] + sigma * (mu_vec[i] - p[i])) / denom;

        gradient(dual_in, g);
        for (std::size_t i = 0; i < z.size(); ++i) {
            double zx = z.gx[i] + sigma * g.gx[i];
            double zy = z.gy[i] + sigma * g.gy[i];
            if (cfg.alpha > 0.0) {
                const double mag = std::hypot(zx, zy);
                if (mag > cfg.alpha) {
                    zx *= cfg.alpha / mag;
                    zy *= cfg.alpha / mag;
                }
            } else {
                zx = 0.0;
                zy = 0.0;
            }
            z.gx[i] = zx;
            z.gy[i] = zy;
        }

        haar_forward(dual_in.values.data(), nx, ny, cfg.levels, coeffs.data());
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double wt = w[i] + sigma * coeffs[i];
            w[i] = wt > cfg.mu ? cfg.mu : (wt < -cfg.mu ? -cfg.mu : wt);
        }

        u_prev = u.values;
        m.apply_adjoint(q, mtq);
        gradient_adjoint(z, divz);
        haar_inverse(w.data(), nx, ny, cfg.levels, wback.data());
        for (std::size_t i = 0; i < u.size(); ++i)
            u.values[i] -= tau * (mtq[i] + divz[i] + wback[i]);

        const double theta = 1.0 / std::sqrt(1.0 + 2.0 * gamma * tau);
        tau *= theta;
        sigma = step_product / tau;
        if (cfg.extrapolation) {
            for (std::size_t i = 0; i < u.size(); ++i)
                ubar.values[i] = u.values[i] + theta * (u.values[i] - u_prev[i]);
        }

        if (cfg.trace_stride > 0 && (it % cfg.trace_stride == 0 || it == cfg.iters - 1)) {
            m.apply(u.values, mu_vec);
            const double fid = sq_norm_diff(mu_vec, p);
            double l1 = 0.0;
            haar_forward(u.values.data(), nx, ny, cfg.levels, coeffs.data());
            for (double c : coeffs) l1 += std::fabs(c);
            const double reg = cfg.mu * l1 + cfg.alpha * tv_value(u);
            res.trace.push_back({it, fid, reg, fid + reg, tau_used, sigma_used});
        }
    }
    return res;
}

} // namespace oat
