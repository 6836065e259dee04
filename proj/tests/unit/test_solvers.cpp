#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oat/forward.hpp"
#include "oat/ops.hpp"
#include "oat/solvers.hpp"
#include "oat/sparse.hpp"

using namespace oat;

namespace {

SparseModelMatrix scaled_identity(int n, double s) {
    SparseModelMatrix m;
    m.csr.n_rows = m.csr.n_cols = static_cast<std::uint64_t>(n);
    m.csr.row_ptr.push_back(0);
    for (int i = 0; i < n; ++i) {
        m.csr.col.push_back(static_cast<std::uint32_t>(i));
        m.csr.val.push_back(s);
        m.csr.row_ptr.push_back(static_cast<std::uint64_t>(i) + 1);
    }
    m.finalize();
    return m;
}

// rows x 4 matrix acting on the first two columns of a 2x2 grid
SparseModelMatrix embedded_matrix(const std::vector<std::vector<double>>& rows) {
    SparseModelMatrix m;
    m.csr.n_rows = rows.size();
    m.csr.n_cols = 4;
    m.csr.row_ptr.push_back(0);
    for (const auto& r : rows) {
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (r[c] != 0.0) {
                m.csr.col.push_back(static_cast<std::uint32_t>(c));
                m.csr.val.push_back(r[c]);
            }
        }
        m.csr.row_ptr.push_back(m.csr.val.size());
    }
    m.finalize();
    return m;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

} // namespace

TEST_CASE("lsqr solves an identity system in one step") {
    auto m = scaled_identity(4, 1.0);
    ImageGrid2D grid(2, 2, 0.1);
    std::vector<double> p = {1.0, 2.0, 3.0, 4.0};
    auto res = lsqr(m, grid, p, 5, 1e-12);
    CHECK(max_abs_diff(res.u.values, p) <= 1e-12);
    REQUIRE(!res.residual_norms.empty());
    CHECK(res.residual_norms.back() <= 1e-12);
    CHECK(res.residual_norms.size() < 5); // atol stop after the exact step
}

TEST_CASE("lsqr matches the normal-equation solution of a small system") {
    // rows (1,0),(0,2),(1,1) on the first two unknowns; p chosen consistent
    auto m = embedded_matrix({{1.0, 0.0}, {0.0, 2.0}, {1.0, 1.0}});
    ImageGrid2D grid(2, 2, 0.1);
    std::vector<double> p = {1.0, 4.0, 3.0};
    auto res = lsqr(m, grid, p, 20);
    CHECK(res.u.values[0] == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(res.u.values[1] == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(std::fabs(res.u.values[2]) <= 1e-10);
    CHECK(std::fabs(res.u.values[3]) <= 1e-10);
}

TEST_CASE("lsqr least-squares solution of an inconsistent system") {
    // two copies of the same measurement: minimizer is the mean
    auto m = embedded_matrix({{1.0, 0.0}, {1.0, 0.0}});
    ImageGrid2D grid(2, 2, 0.1);
    std::vector<double> p = {0.5, 2.5};
    auto res = lsqr(m, grid, p, 10);
    CHECK(res.u.values[0] == doctest::Approx(1.5).epsilon(1e-10));
    CHECK(res.residual_norms.back() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-10));
}

TEST_CASE("lsqr residuals are non-increasing") {
    SparseModelMatrix m;
    const int rows = 24, cols = 16;
    m.csr.n_rows = rows;
    m.csr.n_cols = cols;
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    m.csr.row_ptr.push_back(0);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            m.csr.col.push_back(static_cast<std::uint32_t>(c));
            m.csr.val.push_back(d(rng));
        }
        m.csr.row_ptr.push_back(m.csr.val.size());
    }
    m.finalize();

    ImageGrid2D grid(4, 4, 0.1);
    std::vector<double> p(rows);
    for (auto& v : p) v = d(rng);
    auto res = lsqr(m, grid, p, 40);
    REQUIRE(res.residual_norms.size() >= 2);
    for (std::size_t i = 1; i < res.residual_norms.size(); ++i)
        CHECK(res.residual_norms[i] <= res.residual_norms[i - 1] + 1e-12 * res.residual_norms[0]);
    CHECK(res.residual_norms.back() < res.residual_norms.front());
}

TEST_CASE("lsqr stops early when atol is reached") {
    auto m = embedded_matrix({{1.0, 0.0}, {0.0, 2.0}, {1.0, 1.0}});
    ImageGrid2D grid(2, 2, 0.1);
    std::vector<double> p = {1.0, 4.0, 3.0};
    auto res = lsqr(m, grid, p, 50, 1e-8);
    CHECK(res.residual_norms.size() < 50);
    const double bnorm = std::sqrt(1.0 + 16.0 + 9.0);
    CHECK(res.residual_norms.back() <= 1e-8 * bnorm);
}

TEST_CASE("lsqr with p = 0 returns the zero image") {
    auto m = scaled_identity(4, 3.0);
    ImageGrid2D grid(2, 2, 0.1);
    std::vector<double> p(4, 0.0);
    auto res = lsqr(m, grid, p, 10);
    for (double v : res.u.values) CHECK(v == 0.0);
    CHECK(res.residual_norms.empty());
}

TEST_CASE("tikhonov shrinks an identity system by 1/(1+lam)") {
    auto m = scaled_identity(4, 1.0);
    ImageGrid2D grid(2, 2, 0.1);
    std::vector<double> p = {1.0, -2.0, 3.0, 4.0};
    auto res = tikhonov(m, grid, p, 1.0, 20);
    for (std::size_t i = 0; i < p.size(); ++i)
        CHECK(res.u.values[i] == doctest::Approx(p[i] / 2.0).epsilon(1e-10));

    auto heavy = tikhonov(m, grid, p, 1e12, 20);
    for (double v : heavy.u.values) CHECK(std::fabs(v) <= 1e-10);

    auto plain = tikhonov(m, grid, p, 0.0, 20);
    CHECK(max_abs_diff(plain.u.values, p) <= 1e-12);
}

TEST_CASE("prox_fstar formulas") {
    std::vector<double> q = {2.0, 3.0};
    GradientField2D z(2, 2);
    z.gx = {3.0, 0.3, 0.0, -5.0};
    z.gy = {4.0, 0.4, 0.0, 0.0};
    std::vector<double> p = {4.0, 1.0};
    prox_fstar(q, z, 0.5, 2.0, p);
    CHECK(q[0] == doctest::Approx(0.0));
    CHECK(q[1] == doctest::Approx((3.0 - 0.5) / 1.25).epsilon(1e-14));
    CHECK(z.gx[0] == doctest::Approx(0.6).epsilon(1e-14));
    CHECK(z.gy[0] == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(z.gx[1] == 0.3); // already inside the unit ball
    CHECK(z.gy[1] == 0.4);
    CHECK(z.gx[3] == doctest::Approx(-1.0).epsilon(1e-14));

    std::vector<double> short_p = {1.0};
    CHECK_THROWS_AS(prox_fstar(q, z, 0.5, 2.0, short_p), error);
    CHECK_THROWS_AS(prox_fstar(q, z, 0.0, 2.0, p), error);
    CHECK_THROWS_AS(prox_fstar(q, z, 0.5, 0.0, p), error);
}

TEST_CASE("objective helpers match a term-by-term evaluation") {
    auto m = scaled_identity(64, 160.0);
    ImageGrid2D u(8, 8, 0.1);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (auto& v : u.values) v = d(rng);
    std::vector<double> p(64);
    for (auto& v : p) v = d(rng);

    std::vector<double> mu;
    m.apply(u.values, mu);
    double fid = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) fid += (mu[i] - p[i]) * (mu[i] - p[i]);

    TensorField2D A(8, 8);
    const double lam = 0.37;
    CHECK(objective_a2tv(u, A, m, p, lam) ==
          doctest::Approx(0.5 * lam * fid + tv_value(u)).epsilon(1e-12));

    const double alpha = 1.3, muw = 0.21;
    double l1 = 0.0;
    for (double w : haar_forward(u, 2)) l1 += std::fabs(w);
    CHECK(objective_tvl1(u, m, p, alpha, muw, 2) ==
          doctest::Approx(fid + muw * l1 + alpha * tv_value(u)).epsilon(1e-12));
}

TEST_CASE("a2tv on zero data stays exactly zero") {
    auto m = scaled_identity(36, 160.0);
    ImageGrid2D grid(6, 6, 0.1);
    std::vector<double> p(36, 0.0);
    SolverConfig cfg;
    cfg.iters = 7;
    cfg.lambda = 0.01;
    cfg.tensor_update_stride = 0;
    auto res = chambolle_pock_a2tv(m, grid, p, cfg);
    for (double v : res.u.values) CHECK(v == 0.0);
}

TEST_CASE("a2tv recovers a constant image through an identity model") {
    // constant targets have zero TV, so the solution is the data itself
    auto m = scaled_identity(64, 160.0);
    ImageGrid2D grid(8, 8, 0.1);
    const double c0 = 0.8;
    std::vector<double> p(64, 160.0 * c0);
    SolverConfig cfg;
    cfg.iters = 2000;
    cfg.lambda = 1.0 / 25600.0; // effective unit fidelity weight
    cfg.gamma_factor = 0.7;
    cfg.tensor_update_stride = 0;
    cfg.extrapolation = true;
    auto res = chambolle_pock_a2tv(m, grid, p, cfg);
    for (double v : res.u.values) CHECK(v == doctest::Approx(c0).epsilon(1e-6));
}

TEST_CASE("a2tv trace follows the accelerated step schedule") {
    auto m = scaled_identity(64, 160.0);
    ImageGrid2D grid(8, 8, 0.1);
    std::vector<double> p(64, 32.0);
    SolverConfig cfg;
    cfg.iters = 12;
    cfg.lambda = 0.5;
    cfg.gamma_factor = 0.9;
    cfg.trace_stride = 1;
    cfg.tensor_update_stride = 0;
    auto res = chambolle_pock_a2tv(m, grid, p, cfg);
    REQUIRE(res.trace.size() == 12);
    const double gamma = cfg.gamma_factor * cfg.lambda;
    const double prod = res.trace[0].tau * res.trace[0].sigma;
    for (std::size_t i = 0; i < res.trace.size(); ++i) {
        CHECK(res.trace[i].iter == static_cast<int>(i));
        CHECK(res.trace[i].tau * res.trace[i].sigma == doctest::Approx(prod).epsilon(1e-12));
        CHECK(res.trace[i].total ==
              doctest::Approx(res.trace[i].fidelity + res.trace[i].regularizer).epsilon(1e-14));
        if (i > 0) {
            const double theta = 1.0 / std::sqrt(1.0 + 2.0 * gamma * res.trace[i - 1].tau);
            CHECK(res.trace[i].tau == doctest::Approx(res.trace[i - 1].tau * theta).epsilon(1e-12));
        }
    }
}

TEST_CASE("a2tv with a frozen tensor matches a plain TV reference loop") {
    ImageGrid2D grid(16, 16, 0.1);
    for (int j = 0; j < 16; ++j)
        for (int i = 0; i < 16; ++i)
            if (i >= 5 && i < 11 && j >= 4 && j < 12) grid.at(i, j) = 1.0;
    DetectionGeometry g;
    g.radius_mm = 20.0;
    g.arc_deg = 270.0;
    g.n_detectors = 6;
    g.sound_speed_mm_per_us = 1.5;
    g.grueneisen = 1.0;
    g = default_time_axis(g, grid);
    auto m = build_model_matrix(grid, g, 0.25, 1);
    normalize_matrix(m);
    std::vector<double> p;
    m.apply(grid.values, p);

    SolverConfig cfg;
    cfg.iters = 25;
    cfg.lambda = 0.05;
    cfg.gamma_factor = 0.7;
    cfg.trace_stride = 1;
    cfg.tensor_update_stride = 0;
    auto res = chambolle_pock_a2tv(m, grid, p, cfg);

    // reference: same accelerated scheme written out against plain TV
    ImageGrid2D u(16, 16, 0.1);
    std::vector<double> q(p.size(), 0.0), mu_vec, mtq, div;
    GradientField2D z(16, 16), gr(16, 16);
    const double L = cfg.L_M + cfg.L_grad;
    double tau = cfg.tau0, sigma = 1.0 / (cfg.tau0 * L * L);
    const double prod = tau * sigma;
    const double gamma = cfg.gamma_factor * cfg.lambda;
    std::vector<double> totals;
    for (int it = 0; it < cfg.iters; ++it) {
        m.apply(u.values, mu_vec);
        for (std::size_t i = 0; i < q.size(); ++i) q[i] += sigma * mu_vec[i];
        gradient(u, gr);
        for (std::size_t i = 0; i < z.size(); ++i) {
            z.gx[i] += sigma * gr.gx[i];
            z.gy[i] += sigma * gr.gy[i];
        }
        prox_fstar(q, z, sigma, cfg.lambda, p);
        m.apply_adjoint(q, mtq);
        gradient_adjoint(z, div);
        for (std::size_t i = 0; i < u.size(); ++i) u.values[i] -= tau * (mtq[i] + div[i]);
        const double theta = 1.0 / std::sqrt(1.0 + 2.0 * gamma * tau);
        tau *= theta;
        sigma = prod / tau;
        m.apply(u.values, mu_vec);
        double fid = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i)
            fid += (mu_vec[i] - p[i]) * (mu_vec[i] - p[i]);
        totals.push_back(0.5 * cfg.lambda * fid + tv_value(u));
    }

    REQUIRE(res.trace.size() == totals.size());
    for (std::size_t i = 0; i < totals.size(); ++i)
        CHECK(res.trace[i].total == doctest::Approx(totals[i]).epsilon(1e-9));
    CHECK(max_abs_diff(res.u.values, u.values) <= 1e-12);
}

TEST_CASE("a2tv with periodic tensor updates improves on the zero image") {
    ImageGrid2D grid(16, 16, 0.1);
    for (int j = 4; j < 12; ++j)
        for (int i = 6; i < 10; ++i) grid.at(i, j) = 1.0;
    DetectionGeometry g;
    g.radius_mm = 20.0;
    g.arc_deg = 270.0;
    g.n_detectors = 8;
    g.sound_speed_mm_per_us = 1.5;
    g.grueneisen = 1.0;
    g = default_time_axis(g, grid);
    auto m = build_model_matrix(grid, g, 0.25, 1);
    normalize_matrix(m);
    std::vector<double> p;
    m.apply(grid.values, p);

    SolverConfig cfg;
    cfg.iters = 60;
    cfg.lambda = 0.05;
    cfg.tensor_update_stride = 10;
    cfg.sigma_px = 1.0;
    cfg.rho_px = 2.0;
    cfg.k = 0.3;
    auto res = chambolle_pock_a2tv(m, grid, p, cfg);

    TensorField2D identity(16, 16);
    ImageGrid2D zero(16, 16, 0.1);
    const double j_final = objective_a2tv(res.u, identity, m, p, cfg.lambda);
    const double j_zero = objective_a2tv(zero, identity, m, p, cfg.lambda);
    CHECK(j_final < j_zero);
    for (double v : res.u.values) CHECK(std::isfinite(v));
}

TEST_CASE("solvers reject an unnormalized matrix unless told otherwise") {
    auto m = scaled_identity(64, 1.0);
    ImageGrid2D grid(8, 8, 0.1); // divisible by 2^levels so the haar block runs
    std::vector<double> p(64, 1.0);
    SolverConfig cfg;
    cfg.iters = 3;
    CHECK_THROWS_AS(chambolle_pock_a2tv(m, grid, p, cfg), error);
    CHECK_THROWS_AS(chambolle_pock_tvl1(m, grid, p, cfg), error);
    cfg.allow_unnormalized = true;
    cfg.L_M = 1.0;
    CHECK_NOTHROW(chambolle_pock_a2tv(m, grid, p, cfg));
    CHECK_NOTHROW(chambolle_pock_tvl1(m, grid, p, cfg));
}

TEST_CASE("tvl1 without regularizers solves the least-squares system") {
    auto m = scaled_identity(64, 160.0);
    ImageGrid2D grid(8, 8, 0.1);
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    std::vector<double> target(64);
    for (auto& v : target) v = d(rng);
    std::vector<double> p(64);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = 160.0 * target[i];

    SolverConfig cfg;
    cfg.iters = 4000;
    cfg.alpha = 0.0;
    cfg.mu = 0.0;
    cfg.gamma_factor = 0.7;
    cfg.extrapolation = true;
    auto res = chambolle_pock_tvl1(m, grid, p, cfg);
    for (std::size_t i = 0; i < target.size(); ++i)
        CHECK(res.u.values[i] == doctest::Approx(target[i]).epsilon(1e-5));
}

TEST_CASE("tvl1 with mu = 0 matches a wavelet-free reference loop") {
    auto m = scaled_identity(64, 160.0);
    ImageGrid2D grid(8, 8, 0.1);
    std::vector<double> p(64);
    for (int j = 0; j < 8; ++j)
        for (int i = 0; i < 8; ++i) p[static_cast<std::size_t>(j) * 8 + i] = i < 4 ? 80.0 : 20.0;

    SolverConfig cfg;
    cfg.iters = 30;
    cfg.alpha = 0.8;
    cfg.mu = 0.0;
    cfg.gamma_factor = 0.7;
    cfg.trace_stride = 1;
    auto res = chambolle_pock_tvl1(m, grid, p, cfg);

    ImageGrid2D u(8, 8, 0.1);
    std::vector<double> q(p.size(), 0.0), mu_vec, mtq, div;
    GradientField2D z(8, 8), gr(8, 8);
    const double lam_eff = 2.0;
    const double L = cfg.L_M + cfg.L_grad + 1.0; // wavelet block still counts
    double tau = cfg.tau0, sigma = 1.0 / (cfg.tau0 * L * L);
    const double prod = tau * sigma;
    const double gamma = cfg.gamma_factor * lam_eff;
    std::vector<double> totals;
    for (int it = 0; it < cfg.iters; ++it) {
        m.apply(u.values, mu_vec);
        const double denom = 1.0 + sigma / lam_eff;
        for (std::size_t i = 0; i < q.size(); ++i)
            q[i] = (q[i] + sigma * (mu_vec[i] - p[i])) / denom;
        gradient(u, gr);
        for (std::size_t i = 0; i < z.size(); ++i) {
            double zx = z.gx[i] + sigma * gr.gx[i];
            double zy = z.gy[i] + sigma * gr.gy[i];
            const double mag = std::hypot(zx, zy);
            if (mag > cfg.alpha) {
                zx *= cfg.alpha / mag;
                zy *= cfg.alpha / mag;
            }
            z.gx[i] = zx;
            z.gy[i] = zy;
        }
        m.apply_adjoint(q, mtq);
        gradient_adjoint(z, div);
        for (std::size_t i = 0; i < u.size(); ++i) u.values[i] -= tau * (mtq[i] + div[i]);
        const double theta = 1.0 / std::sqrt(1.0 + 2.0 * gamma * tau);
        tau *= theta;
        sigma = prod / tau;
        m.apply(u.values, mu_vec);
        double fid = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i)
            fid += (mu_vec[i] - p[i]) * (mu_vec[i] - p[i]);
        totals.push_back(fid + cfg.alpha * tv_value(u));
    }

    REQUIRE(res.trace.size() == totals.size());
    for (std::size_t i = 0; i < totals.size(); ++i)
        CHECK(res.trace[i].total == doctest::Approx(totals[i]).epsilon(1e-9));
    CHECK(max_abs_diff(res.u.values, u.values) <= 1e-12);
}

TEST_CASE("overwhelming TV weight flattens the tvl1 solution") {
    // unit-scale identity keeps the fidelity curvature low enough that the
    // TV dual reaches its working magnitude well inside the iteration budget
    auto m = scaled_identity(64, 1.0);
    ImageGrid2D grid(8, 8, 0.1);
    std::vector<double> p(64);
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    double mean = 0.0;
    for (auto& v : p) {
        v = d(rng);
        mean += v;
    }
    mean /= 64.0;

    SolverConfig cfg;
    cfg.iters = 4000;
    cfg.alpha = 20.0;
    cfg.mu = 0.0;
    cfg.gamma_factor = 0.7;
    cfg.extrapolation = true;
    cfg.allow_unnormalized = true;
    cfg.L_M = 1.0;
    auto res = chambolle_pock_tvl1(m, grid, p, cfg);
    for (double v : res.u.values) CHECK(v == doctest::Approx(mean).epsilon(2e-3));
}

TEST_CASE("solver config validation") {
    SolverConfig cfg;
    cfg.iters = 0;
    CHECK_THROWS_AS(cfg.validate(), error);
    cfg = SolverConfig{};
    cfg.tau0 = 0.0;
    CHECK_THROWS_AS(cfg.validate(), error);
    cfg = SolverConfig{};
    cfg.L_M = 0.0;
    cfg.L_grad = 0.0;
    CHECK_THROWS_AS(cfg.validate(), error);
    cfg = SolverConfig{};
    cfg.tensor_update_stride = -1;
    CHECK_THROWS_AS(cfg.validate(), error);
    cfg = SolverConfig{};
    CHECK_NOTHROW(cfg.validate());
}
