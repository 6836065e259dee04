#include "oat/forward.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

namespace oat {

namespace {

constexpr double pi = 3.14159265358979323846;

// Angular intervals (radians) in which the circle of radius rho around
// (cx,cy) lies inside the axis-aligned rectangle. Crossing angles with the
// four edge lines split the circle; an interval is kept when its midpoint
// passes the inside test. Intervals are reported within one 2*pi period.
std::vector<std::pair<double, double>> circle_rect_intervals(double cx, double cy, double rho,
                                                             double xmin, double xmax, double ymin,
                                                             double ymax) {
    const double tol = 1e-12 * rho;
    auto inside = [&](double phi) {
        const double x = cx + rho * std::cos(phi);
        const double y = cy + rho * std::sin(phi);
        return x >= xmin - tol && x <= xmax + tol && y >= ymin - tol && y <= ymax + tol;
    };

    std::vector<double> cuts;
    cuts.reserve(8);
    auto add_vertical = [&](double X) {
        const double u = (X - cx) / rho;
        if (u >= -1.0 && u <= 1.0) {
            const double a = std::acos(u);
            cuts.push_back(a);
            cuts.push_back(-a);
        }
    };
    auto add_horizontal = [&](double Y) {
        const double u = (Y - cy) / rho;
        if (u >= -1.0 && u <= 1.0) {
            const double a = std::asin(u);
            cuts.push_back(a);
            cuts.push_back(pi - a);
        }
    };
    add_vertical(xmin);
    add_vertical(xmax);
    add_horizontal(ymin);
    add_horizontal(ymax);

    std::vector<std::pair<double, double>> kept;
    if (cuts.empty()) {
        if (inside(0.0)) kept.emplace_back(0.0, 2.0 * pi); // circle entirely inside
        return kept;
    }

    for (double& c : cuts) {
        c = std::fmod(c, 2.0 * pi);
        if (c < 0.0) c += 2.0 * pi;
    }
    std::sort(cuts.begin(), cuts.end());

    for (std::size_t i = 0; i < cuts.size(); ++i) {
        const double a = cuts[i];
        const double b = (i + 1 < cuts.size()) ? cuts[i + 1] : cuts[0] + 2.0 * pi;
        if (b - a <= 0.0) continue;
        if (inside(0.5 * (a + b))) kept.emplace_back(a, b);
    }
    return kept;
}

// One accumulator per worker; reset cost scales with the touched set only.
struct RowScratch {
    std::vector<double> acc;
    std::vector<char> mark;
    std::vector<std::uint32_t> touched;

    explicit RowScratch(std::size_t n) : acc(n, 0.0), mark(n, 0) {}

    void add(std::uint32_t c, double v) {
        if (!mark[c]) {
            mark[c] = 1;
            touched.push_back(c);
        }
        acc[c] += v;
    }

    void collect(std::vector<std::uint32_t>& cols, std::vector<double>& vals) {
        std::sort(touched.begin(), touched.end());
        for (std::uint32_t c : touched) {
            if (acc[c] != 0.0) {
                cols.push_back(c);
                vals.push_back(acc[c]);
            }
            acc[c] = 0.0;
            mark[c] = 0;
        }
        touched.clear();
    }
};

struct SparseRow {
    std::vector<std::uint32_t> cols;
    std::vector<double> vals;
};

struct DetectorBlock {
    std::vector<std::uint64_t> row_len;
    std::vector<std::uint32_t> cols;
    std::vector<double> vals;
};

} // namespace

SparseModelMatrix build_model_matrix(const ImageGrid2D& grid, const DetectionGeometry& geom,
                                     double arc_step_frac, int jobs) {
    grid.validate();
    geom.validate();
    require(arc_step_frac > 0.0 && arc_step_frac <= 0.5, errc::invalid_argument,
            "arc_step_frac must lie in (0, 0.5]");
    if (jobs < 1) jobs = 1;

    const double h = grid.pixel_mm;
    const int nx = grid.nx, ny = grid.ny;
    const double xmin = -(nx - 1) * 0.5 * h, xmax = (nx - 1) * 0.5 * h;
    const double ymin = -(ny - 1) * 0.5 * h, ymax = (ny - 1) * 0.5 * h;

    const double half_diag = 0.5 * std::hypot(nx * h, ny * h);
    require(geom.radius_mm > half_diag, errc::invalid_argument,
            "detectors must lie outside the image support");

    const double c = geom.sound_speed_mm_per_us;
    const int K = geom.n_samples;
    const double t0 = geom.t0_us, dt = geom.dt_us;
    const double r_lo = c * t0;
    const double r_hi = c * (t0 + (K - 1) * dt);
    const double arc_step = arc_step_frac * h;
    const double scale = geom.grueneisen / (4.0 * pi * c);

    const auto pos = detector_positions(geom);

    // Temporal support: the sampled radial range must cover every pixel.
    for (int d = 0; d < geom.n_detectors; ++d) {
        const double cx = pos[d][0], cy = pos[d][1];
        const double px = std::clamp(cx, xmin, xmax), py = std::clamp(cy, ymin, ymax);
        const double dmin = std::hypot(cx - px, cy - py);
        double dmax = 0.0;
        for (double X : {xmin, xmax})
            for (double Y : {ymin, ymax}) dmax = std::max(dmax, std::hypot(cx - X, cy - Y));
        const double slack = 1e-9 * geom.radius_mm;
        require(r_lo <= dmin + slack && dmax <= r_hi + slack, errc::invalid_argument,
                "time axis does not cover the full grid for detector " + std::to_string(d));
    }

    std::vector<DetectorBlock> blocks(static_cast<std::size_t>(geom.n_detectors));
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::string fail_msg;
    std::mutex fail_mutex;

    auto worker = [&]() {
        RowScratch scratch(static_cast<std::size_t>(nx) * ny);
        std::vector<SparseRow> arcs(static_cast<std::size_t>(K));
        std::vector<double> knots;
        const double gl = 0.5773502691896257645; // Gauss-Legendre node 1/sqrt(3)
        for (;;) {
            const int d = next.fetch_add(1);
            if (d >= geom.n_detectors || failed.load()) break;
            try {
                const double cx = pos[d][0], cy = pos[d][1];

                auto deposit = [&](double rho, double phi, double wq) {
                    const double x = cx + rho * std::cos(phi);
                    const double y = cy + rho * std::sin(phi);
                    double fx = std::clamp((x - xmin) / h, 0.0, static_cast<double>(nx - 1));
                    double fy = std::clamp((y - ymin) / h, 0.0, static_cast<double>(ny - 1));
                    const int i0 = std::min(static_cast<int>(fx), nx - 2);
                    const int j0 = std::min(static_cast<int>(fy), ny - 2);
                    const double wx = fx - i0, wy = fy - j0;
                    const std::uint32_t base =
                        static_cast<std::uint32_t>(j0) * nx + static_cast<std::uint32_t>(i0);
                    scratch.add(base, (1.0 - wx) * (1.0 - wy) * wq);
                    scratch.add(base + 1, wx * (1.0 - wy) * wq);
                    scratch.add(base + nx, (1.0 - wx) * wy * wq);
                    scratch.add(base + nx + 1, wx * wy * wq);
                };

                bool any = false;
                for (int k = 0; k < K; ++k) {
                    arcs[k].cols.clear();
                    arcs[k].vals.clear();
                    const double rho = c * (t0 + k * dt);
                    if (rho <= 0.0) continue;
                    for (const auto& [a, b] : circle_rect_intervals(cx, cy, rho, xmin, xmax, ymin, ymax)) {
                        // Split at pixel-line crossings so each piece stays in
                        // one bilinear cell; the integrand there is a trig
                        // quadratic, which two Gauss nodes per step integrate
                        // exactly, making entries step-size insensitive.
                        knots.clear();
                        knots.push_back(a);
                        knots.push_back(b);
                        auto add_crossing = [&](double raw) {
                            double phi = std::fmod(raw - a, 2.0 * pi);
                            if (phi < 0.0) phi += 2.0 * pi;
                            phi += a;
                            if (phi > a && phi < b) knots.push_back(phi);
                        };
                        for (int i = 0; i < nx; ++i) {
                            const double u = (xmin + i * h - cx) / rho;
                            if (u >= -1.0 && u <= 1.0) {
                                const double t = std::acos(u);
                                add_crossing(t);
                                add_crossing(-t);
                            }
                        }
                        for (int j = 0; j < ny; ++j) {
                            const double u = (ymin + j * h - cy) / rho;
                            if (u >= -1.0 && u <= 1.0) {
                                const double t = std::asin(u);
                                add_crossing(t);
                                add_crossing(pi - t);
                            }
                        }
                        std::sort(knots.begin(), knots.end());
                        for (std::size_t kn = 0; kn + 1 < knots.size(); ++kn) {
                            const double lo = knots[kn], hi = knots[kn + 1];
                            if (hi - lo <= 1e-15) continue;
                            const int nsub = std::max(
                                1, static_cast<int>(std::ceil((hi - lo) * rho / arc_step)));
                            const double dphi = (hi - lo) / nsub;
                            for (int s = 0; s < nsub; ++s) {
                                const double mid = lo + (s + 0.5) * dphi;
                                deposit(rho, mid - 0.5 * gl * dphi, 0.5 * dphi);
                                deposit(rho, mid + 0.5 * gl * dphi, 0.5 * dphi);
                            }
                        }
                    }
                    scratch.collect(arcs[k].cols, arcs[k].vals);
                    if (!arcs[k].cols.empty()) any = true;
                }
                if (!any)
                    fail(errc::invalid_argument,
                         "no time sample's arc intersects the grid for detector " +
                             std::to_string(d) + "; geometry and time axis are inconsistent");

                // Temporal difference: d/dt by central stencil, one-sided at the ends.
                DetectorBlock& blk = blocks[d];
                blk.row_len.assign(static_cast<std::size_t>(K), 0);
                for (int k = 0; k < K; ++k) {
                    const SparseRow* lo; // subtracted arc
                    const SparseRow* hi; // added arc
                    double w;
                    if (k == 0) {
                        lo = &arcs[0], hi = &arcs[1], w = scale / dt;
                    } else if (k == K - 1) {
                        lo = &arcs[K - 2], hi = &arcs[K - 1], w = scale / dt;
                    } else {
                        lo = &arcs[k - 1], hi = &arcs[k + 1], w = scale / (2.0 * dt);
                    }
                    for (std::size_t idx = 0; idx < hi->cols.size(); ++idx)
                        scratch.add(hi->cols[idx], w * hi->vals[idx]);
                    for (std::size_t idx = 0; idx < lo->cols.size(); ++idx)
                        scratch.add(lo->cols[idx], -w * lo->vals[idx]);
                    const std::size_t before = blk.cols.size();
                    scratch.collect(blk.cols, blk.vals);
                    blk.row_len[k] = blk.cols.size() - before;
                }
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(fail_mutex);
                if (!failed.exchange(true)) fail_msg = e.what();
            }
        }
    };

    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        const int n_threads = std::min(jobs, geom.n_detectors);
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failed.load()) fail(errc::invalid_argument, fail_msg);

    SparseModelMatrix m;
    m.csr.n_rows = static_cast<std::uint64_t>(geom.n_detectors) * K;
    m.csr.n_cols = static_cast<std::uint64_t>(nx) * ny;
    m.csr.row_ptr.reserve(m.csr.n_rows + 1);
    m.csr.row_ptr.push_back(0);
    std::uint64_t total = 0;
    for (const auto& blk : blocks) total += blk.cols.size();
    m.csr.col.reserve(total);
    m.csr.val.reserve(total);
    for (const auto& blk : blocks) {
        for (std::uint64_t len : blk.row_len) m.csr.row_ptr.push_back(m.csr.row_ptr.back() + len);
        m.csr.col.insert(m.csr.col.end(), blk.cols.begin(), blk.cols.end());
        m.csr.val.insert(m.csr.val.end(), blk.vals.begin(), blk.vals.end());
    }
    m.finalize();
    return m;
}

} // namespace oat
