#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "oat/forward.hpp"
#include "oat/geometry.hpp"
#include "oat/image.hpp"
#include "oat/sparse.hpp"

using namespace oat;

namespace {

DetectionGeometry make_geom(const ImageGrid2D& grid, int n_det, double arc_deg,
                            double radius = 40.0) {
    DetectionGeometry g;
    g.radius_mm = radius;
    g.arc_deg = arc_deg;
    g.n_detectors = n_det;
    g.sound_speed_mm_per_us = 1.5;
    g.grueneisen = 1.0;
    return default_time_axis(g, grid);
}

const SparseModelMatrix& reference_matrix_64() {
    static const ImageGrid2D grid(64, 64, 0.1);
    static const SparseModelMatrix m =
        build_model_matrix(grid, make_geom(grid, 128, 270.0), 0.25, 1);
    return m;
}

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    std::vector<double> v(n);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (auto& x : v) x = d(rng);
    return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

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

} // namespace

TEST_CASE("model matrix shape for the 64x64 reference setup") {
    const auto& m = reference_matrix_64();
    CHECK(m.n_rows() == 128u * 183u);
    CHECK(m.n_cols() == 4096u);
    CHECK(m.nnz() > 0u);
    CHECK_NOTHROW(m.csr.check_structure());
    CHECK_NOTHROW(m.csr_t.check_structure());
}

TEST_CASE("forward operator is linear and maps zero to zero") {
    const auto& m = reference_matrix_64();
    std::vector<double> zero(m.n_cols(), 0.0), p;
    m.apply(zero, p);
    for (double v : p) CHECK(v == 0.0);

    auto u = random_vec(m.n_cols(), 3);
    auto v = random_vec(m.n_cols(), 4);
    std::vector<double> w(u.size()), pu, pv, pw;
    for (std::size_t i = 0; i < u.size(); ++i) w[i] = 2.0 * u[i] - 3.0 * v[i];
    m.apply(u, pu);
    m.apply(v, pv);
    m.apply(w, pw);
    const double scale = std::max(max_abs(pu), max_abs(pv));
    for (std::size_t i = 0; i < pw.size(); ++i)
        CHECK(std::fabs(pw[i] - (2.0 * pu[i] - 3.0 * pv[i])) <= 1e-12 * scale);
}

TEST_CASE("apply_adjoint is the exact transpose product") {
    const auto& m = reference_matrix_64();
    auto u = random_vec(m.n_cols(), 7);
    auto q = random_vec(m.n_rows(), 8);
    std::vector<double> p, bt;
    m.apply(u, p);
    m.apply_adjoint(q, bt);
    const double lhs = dot(p, q);
    const double rhs = dot(u, bt);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("single center pixel produces a localized bipolar trace") {
    ImageGrid2D grid(33, 33, 0.1);
    grid.at(16, 16) = 1.0; // exact grid center on an odd grid
    DetectionGeometry g;
    g.radius_mm = 40.0;
    g.arc_deg = 360.0;
    g.n_detectors = 1;
    g.sound_speed_mm_per_us = 1.5;
    g.grueneisen = 1.0;
    g = default_time_axis(g, grid);

    auto m = build_model_matrix(grid, g, 0.25, 1);
    std::vector<double> p;
    m.apply(grid.values, p);
    REQUIRE(p.size() == static_cast<std::size_t>(g.n_samples));

    const double c = g.sound_speed_mm_per_us;
    const double peak = max_abs(p);
    REQUIRE(peak > 0.0);

    // support: bilinear footprint sqrt(2)*h around radius 40, widened by one
    // dt through the temporal stencil
    const double reach = std::sqrt(2.0) * grid.pixel_mm + c * g.dt_us + 1e-9;
    int first = -1, last = -1;
    for (int k = 0; k < g.n_samples; ++k) {
        if (p[static_cast<std::size_t>(k)] != 0.0) {
            if (first < 0) first = k;
            last = k;
            const double r = c * (g.t0_us + k * g.dt_us);
            CHECK(std::fabs(r - 40.0) <= reach);
        }
    }
    REQUIRE(first >= 0);

    // N-shaped: compression lobe first, rarefaction after
    int kmax = 0, kmin = 0;
    for (int k = 0; k < g.n_samples; ++k) {
        if (p[static_cast<std::size_t>(k)] > p[static_cast<std::size_t>(kmax)]) kmax = k;
        if (p[static_cast<std::size_t>(k)] < p[static_cast<std::size_t>(kmin)]) kmin = k;
    }
    CHECK(p[static_cast<std::size_t>(kmax)] > 0.0);
    CHECK(p[static_cast<std::size_t>(kmin)] < 0.0);
    CHECK(kmax < kmin);

    // the dominant zero crossing sits within one sample of the flight time
    double best_drop = 0.0, t_cross = -1.0;
    for (int k = first; k < last; ++k) {
        const double a = p[static_cast<std::size_t>(k)], b = p[static_cast<std::size_t>(k) + 1];
        if (a > 0.0 && b < 0.0 && a - b > best_drop) {
            best_drop = a - b;
            t_cross = g.t0_us + (k + a / (a - b)) * g.dt_us;
        }
    }
    REQUIRE(t_cross > 0.0);
    CHECK(std::fabs(t_cross - 40.0 / c) <= g.dt_us);

    // compactly supported pulse integrates to zero through the stencil
    double sum = 0.0;
    for (double v : p) sum += v;
    CHECK(std::fabs(sum) <= 1e-10 * peak);
}

TEST_CASE("four-fold symmetric phantom gives identical detector traces") {
    ImageGrid2D grid(33, 33, 0.1);
    for (int j = 0; j < 33; ++j)
        for (int i = 0; i < 33; ++i)
            if (std::hypot(i - 16.0, j - 16.0) <= 8.0) grid.at(i, j) = 1.0;

    // five detectors over a closed 360 arc: angles 90,180,270,360,450; the
    // last coincides with the first, the other four are related by quarter
    // turns that map the disk onto itself
    DetectionGeometry g;
    g.radius_mm = 40.0;
    g.arc_deg = 360.0;
    g.n_detectors = 5;
    g.sound_speed_mm_per_us = 1.5;
    g.grueneisen = 1.0;
    g = default_time_axis(g, grid);

    auto m = build_model_matrix(grid, g, 0.25, 1);
    std::vector<double> p;
    m.apply(grid.values, p);
    const int K = g.n_samples;
    const double tol = 1e-9 * max_abs(p);
    for (int d = 1; d < 5; ++d)
        for (int k = 0; k < K; ++k)
            CHECK(std::fabs(p[static_cast<std::size_t>(d) * K + k] - p[static_cast<std::size_t>(k)]) <=
                  tol);
}

TEST_CASE("halving the arc step changes no matrix entry by one percent of the peak") {
    // per-entry ratios are meaningless for pixels the arc barely grazes, so
    // the convergence measure is entrywise change against the largest entry
    ImageGrid2D grid(32, 32, 0.1);
    DetectionGeometry g = make_geom(grid, 16, 270.0);
    auto coarse = build_model_matrix(grid, g, 0.5, 1);
    auto fine = build_model_matrix(grid, g, 0.25, 1);
    REQUIRE(coarse.n_rows() == fine.n_rows());

    double peak = 0.0;
    for (double v : fine.csr.val) peak = std::max(peak, std::fabs(v));
    REQUIRE(peak > 0.0);

    double worst = 0.0;
    for (std::size_t r = 0; r < fine.n_rows(); ++r) {
        std::size_t ci = coarse.csr.row_ptr[r], ce = coarse.csr.row_ptr[r + 1];
        std::size_t fi = fine.csr.row_ptr[r], fe = fine.csr.row_ptr[r + 1];
        while (ci < ce || fi < fe) {
            if (fi == fe || (ci < ce && coarse.csr.col[ci] < fine.csr.col[fi]))
                worst = std::max(worst, std::fabs(coarse.csr.val[ci++]));
            else if (ci == ce || fine.csr.col[fi] < coarse.csr.col[ci])
                worst = std::max(worst, std::fabs(fine.csr.val[fi++]));
            else {
                worst = std::max(worst, std::fabs(coarse.csr.val[ci++] - fine.csr.val[fi++]));
            }
        }
    }
    CHECK(worst < 0.01 * peak);
}

TEST_CASE("matrix build does not depend on the number of jobs") {
    ImageGrid2D grid(32, 32, 0.1);
    DetectionGeometry g = make_geom(grid, 8, 270.0);
    auto m1 = build_model_matrix(grid, g, 0.25, 1);
    auto m4 = build_model_matrix(grid, g, 0.25, 4);
    CHECK(m1.csr.row_ptr == m4.csr.row_ptr);
    CHECK(m1.csr.col == m4.csr.col);
    CHECK(m1.csr.val == m4.csr.val);
}

TEST_CASE("build rejects inconsistent geometry") {
    ImageGrid2D grid(32, 32, 0.1);
    DetectionGeometry g = make_geom(grid, 8, 270.0);

    DetectionGeometry short_axis = g;
    short_axis.n_samples = g.n_samples / 2; // misses the far corners
    CHECK_THROWS_AS(build_model_matrix(grid, short_axis, 0.25, 1), error);

    DetectionGeometry late_start = g;
    late_start.t0_us += 1.0;
    CHECK_THROWS_AS(build_model_matrix(grid, late_start, 0.25, 1), error);

    DetectionGeometry tiny = g;
    tiny.radius_mm = 2.0; // inside the grid support
    CHECK_THROWS_AS(build_model_matrix(grid, tiny, 0.25, 1), error);

    CHECK_THROWS_AS(build_model_matrix(grid, g, 0.0, 1), error);
    CHECK_THROWS_AS(build_model_matrix(grid, g, 0.7, 1), error);
}

TEST_CASE("normalize_matrix scales to 160 and records the factor") {
    auto m = scaled_identity(4, 1.0);
    CHECK(m.norm_scale() == doctest::Approx(1.0));
    normalize_matrix(m);
    CHECK(m.norm_scale() == doctest::Approx(160.0).epsilon(1e-12));
    CHECK(m.norm_factor == doctest::Approx(1.0 / 160.0).epsilon(1e-15));
    for (double v : m.csr.val) CHECK(v == doctest::Approx(160.0).epsilon(1e-14));

    auto m2 = scaled_identity(3, 2.0);
    normalize_matrix(m2);
    CHECK(m2.norm_factor == doctest::Approx(2.0 / 160.0).epsilon(1e-15));
    for (double v : m2.csr.val) CHECK(v == doctest::Approx(160.0).epsilon(1e-14));

    // second pass is a no-op
    const double f_before = m2.norm_factor;
    normalize_matrix(m2);
    CHECK(m2.norm_factor == doctest::Approx(f_before).epsilon(1e-12));
    for (double v : m2.csr.val) CHECK(v == doctest::Approx(160.0).epsilon(1e-12));

    std::vector<double> u = {1.0, 2.0, 3.0}, p;
    m2.apply(u, p);
    CHECK(p[0] == doctest::Approx(160.0).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(320.0).epsilon(1e-12));
    CHECK(p[2] == doctest::Approx(480.0).epsilon(1e-12));
}

TEST_CASE("normalize_matrix rejects an all-zero matrix") {
    SparseModelMatrix m;
    m.csr.n_rows = m.csr.n_cols = 4;
    m.csr.row_ptr.assign(5, 0);
    m.finalize();
    CHECK_THROWS_AS(normalize_matrix(m), error);
}

TEST_CASE("matrix save/load round-trips bit for bit") {
    ImageGrid2D grid(16, 16, 0.1);
    DetectionGeometry g = make_geom(grid, 4, 270.0);
    auto m = build_model_matrix(grid, g, 0.25, 1);
    normalize_matrix(m);

    const std::string path = "test_matrix_roundtrip.oamm";
    save_matrix(m, path);
    auto r = load_matrix(path);
    CHECK(r.csr.n_rows == m.csr.n_rows);
    CHECK(r.csr.n_cols == m.csr.n_cols);
    CHECK(r.csr.row_ptr == m.csr.row_ptr);
    CHECK(r.csr.col == m.csr.col);
    CHECK(r.csr.val == m.csr.val);
    CHECK(r.norm_factor == m.norm_factor);

    SUBCASE("truncated file is rejected") {
        FILE* f = std::fopen(path.c_str(), "rb");
        REQUIRE(f);
        std::vector<unsigned char> head(64);
        REQUIRE(std::fread(head.data(), 1, head.size(), f) == head.size());
        std::fclose(f);
        f = std::fopen(path.c_str(), "wb");
        REQUIRE(f);
        std::fwrite(head.data(), 1, head.size(), f);
        std::fclose(f);
        CHECK_THROWS_AS(load_matrix(path), error);
    }

    SUBCASE("wrong magic is rejected") {
        FILE* f = std::fopen(path.c_str(), "rb+");
        REQUIRE(f);
        std::fputc('X', f);
        std::fclose(f);
        CHECK_THROWS_AS(load_matrix(path), error);
    }

    std::remove(path.c_str());
}

TEST_CASE("check_structure flags corrupted CSR data") {
    auto m = scaled_identity(4, 1.0);
    CHECK_NOTHROW(m.csr.check_structure());

    CsrMatrix bad = m.csr;
    std::swap(bad.col[1], bad.col[2]); // breaks per-row ordering across rows 1,2
    bad.row_ptr = {0, 1, 3, 3, 4};     // row 1 now holds cols {2,1}: unsorted
    CHECK_THROWS_AS(bad.check_structure(), error);

    CsrMatrix bad2 = m.csr;
    bad2.col[3] = 9; // out of range
    CHECK_THROWS_AS(bad2.check_structure(), error);

    CsrMatrix bad3 = m.csr;
    bad3.row_ptr.pop_back();
    CHECK_THROWS_AS(bad3.check_structure(), error);
}

TEST_CASE("apply validates dimensions") {
    auto m = scaled_identity(4, 1.0);
    std::vector<double> bad(3, 0.0), out;
    CHECK_THROWS_AS(m.apply(bad, out), error);
    CHECK_THROWS_AS(m.apply_adjoint(bad, out), error);
}
