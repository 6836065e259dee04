#include "oat/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oat {

void PhantomSpec::validate() const {
    require(size >= 16, errc::invalid_argument, "phantom size must be >= 16");
    require(pixel_mm > 0.0, errc::invalid_argument, "pixel_mm must be positive");
    switch (kind) {
    case Kind::vessels:
        require(vessel_count >= 0, errc::invalid_argument, "vessel count must be >= 0");
        require(width_lo_px >= 1.0 && width_hi_px >= width_lo_px, errc::invalid_argument,
                "vessel widths must be >= 1 px and ordered");
        require(curvature > 0.0, errc::invalid_argument, "curvature scale must be positive");
        break;
    case Kind::disk:
        require(disk_radius_frac > 0.0 && disk_radius_frac <= 0.45, errc::invalid_argument,
                "disk radius fraction must lie in (0, 0.45]");
        break;
    case Kind::step:
        require(step_pos_frac > 0.0 && step_pos_frac < 1.0, errc::invalid_argument,
                "step position must lie in (0, 1)");
        break;
    }
}

namespace {

struct Curve {
    std::vector<double> x, y; // dense samples
};

// Catmull-Rom through the control points, duplicated endpoints.
Curve sample_spline(const std::vector<double>& px, const std::vector<double>& py, int n_samples) {
    Curve c;
    c.x.reserve(static_cast<std::size_t>(n_samples));
    c.y.reserve(static_cast<std::size_t>(n_samples));
    const int segs = static_cast<int>(px.size()) - 1;
    auto at = [&](int i, const std::vector<double>& v) {
        return v[static_cast<std::size_t>(std::clamp(i, 0, static_cast<int>(v.size()) - 1))];
    };
    for (int s = 0; s < n_samples; ++s) {
        const double t_all = static_cast<double>(s) / (n_samples - 1) * segs;
        int seg = std::min(static_cast<int>(t_all), segs - 1);
        const double t = t_all - seg;
        const double t2 = t * t, t3 = t2 * t;
        auto interp = [&](const std::vector<double>& v) {
            const double p0 = at(seg - 1, v), p1 = at(seg, v), p2 = at(seg + 1, v),
                         p3 = at(seg + 2, v);
            return 0.5 * ((2.0 * p1) + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                          (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3);
        };
        c.x.push_back(interp(px));
        c.y.push_back(interp(py));
    }
    return c;
}

// Paints a tapering tube along the curve; max-blend so crossings keep the
// brighter vessel. Returns the number of newly covered pixels.
std::size_t splat_tube(ImageGrid2D& u, const Curve& c, double w0, double w1, double v0, double v1) {
    const int n = u.nx;
    std::size_t newly = 0;
    const int ns = static_cast<int>(c.x.size());
    for (int s = 0; s < ns; ++s) {
        const double t = static_cast<double>(s) / (ns - 1);
        const double w = w0 + (w1 - w0) * t;
        const double modulation = std::sin(t * 7.0);
        const double val = v0 + (v1 - v0) * modulation * modulation;
        const double cx = c.x[static_cast<std::size_t>(s)], cy = c.y[static_cast<std::size_t>(s)];
        const int ilo = std::max(0, static_cast<int>(std::floor(cx - w)));
        const int ihi = std::min(n - 1, static_cast<int>(std::ceil(cx + w)));
        const int jlo = std::max(0, static_cast<int>(std::floor(cy - w)));
        const int jhi = std::min(n - 1, static_cast<int>(std::ceil(cy + w)));
        for (int j = jlo; j <= jhi; ++j)
            for (int i = ilo; i <= ihi; ++i) {
                const double dx = i - cx, dy = j - cy;
                if (dx * dx + dy * dy <= w * w) {
                    double& px = u.at(i, j);
                    if (px == 0.0) ++newly;
                    px = std::max(px, val);
                }
            }
    }
    return newly;
}

} // namespace

ImageGrid2D vessel_phantom(const PhantomSpec& spec) {
    spec.validate();
    require(spec.kind == PhantomSpec::Kind::vessels, errc::invalid_argument,
            "vessel_phantom needs a vessels spec");
    const int n = spec.size;
    ImageGrid2D u(n, n, spec.pixel_mm);
    Rng rng(spec.seed);

    const double margin = 0.08 * n;
    const double span = n - 2.0 * margin;
    const std::size_t budget = static_cast<std::size_t>(0.40 * n * n);
    std::size_t covered = 0;
    Curve trunk; // vessel 0, branch anchor

    for (int v = 0; v < spec.vessel_count; ++v) {
        // draw every random number up front so skipped vessels keep the stream aligned
        double sx = margin + span * rng.uniform();
        double sy = margin + span * rng.uniform();
        const double heading = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        const double stride = spec.curvature * n * rng.uniform(0.18, 0.30);
        double turn1 = rng.uniform(-0.9, 0.9);
        double turn2 = rng.uniform(-0.9, 0.9);
        double wa = rng.uniform(spec.width_lo_px, spec.width_hi_px);
        double wb = rng.uniform(spec.width_lo_px, spec.width_hi_px);
        double va = rng.uniform(0.5, 1.0);
        double vb = rng.uniform(0.5, 1.0);
        if (wa < wb) std::swap(wa, wb); // taper outward
        if (va < vb) std::swap(va, vb);

        if (v == 1 && !trunk.x.empty()) { // branch off the middle of vessel 0
            const std::size_t mid = trunk.x.size() / 2;
            sx = trunk.x[mid];
            sy = trunk.y[mid];
        }
        if (v == 2) { // hairpin: sharp fold-back
            turn1 = 2.4;
            turn2 = 2.4;
        }

        std::vector<double> px{sx}, py{sy};
        double dir = heading;
        for (int seg = 0; seg < 3; ++seg) {
            if (seg == 1) dir += turn1;
            if (seg == 2) dir += turn2;
            double nxp = px.back() + stride * std::cos(dir);
            double nyp = py.back() + stride * std::sin(dir);
            nxp = std::clamp(nxp, 2.0, n - 3.0);
            nyp = std::clamp(nyp, 2.0, n - 3.0);
            px.push_back(nxp);
            py.push_back(nyp);
        }

        if (covered >= budget) continue; // area cap reached, keep the stream moving
        const Curve c = sample_spline(px, py, 8 * n);
        covered += splat_tube(u, c, wa, wb, va, vb);
        if (v == 0) trunk = c;
    }
    return u;
}

ImageGrid2D disk_phantom(int n, double radius_frac, double height, double pixel_mm) {
    require(n >= 2, errc::invalid_argument, "disk phantom needs n >= 2");
    require(radius_frac > 0.0 && radius_frac <= 0.45, errc::invalid_argument,
            "disk radius fraction must lie in (0, 0.45]");
    ImageGrid2D u(n, n, pixel_mm);
    const double c = (n - 1) / 2.0;
    const double r2 = (radius_frac * n) * (radius_frac * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            if ((i - c) * (i - c) + (j - c) * (j - c) <= r2) u.at(i, j) = height;
    return u;
}

ImageGrid2D step_phantom(int n, double pos_frac, double height, double pixel_mm) {
    require(n >= 2, errc::invalid_argument, "step phantom needs n >= 2");
    require(pos_frac > 0.0 && pos_frac < 1.0, errc::invalid_argument,
            "step position must lie in (0, 1)");
    ImageGrid2D u(n, n, pixel_mm);
    const int edge = static_cast<int>(pos_frac * n);
    for (int j = 0; j < n; ++j)
        for (int i = edge; i < n; ++i) u.at(i, j) = height;
    return u;
}

ImageGrid2D make_phantom(const PhantomSpec& spec) {
    spec.validate();
    switch (spec.kind) {
    case PhantomSpec::Kind::vessels:
        return vessel_phantom(spec);
    case PhantomSpec::Kind::disk:
        return disk_phantom(spec.size, spec.disk_radius_frac, spec.disk_height, spec.pixel_mm);
    case PhantomSpec::Kind::step:
        return step_phantom(spec.size, spec.step_pos_frac, 1.0, spec.pixel_mm);
    }
    fail(errc::invalid_argument, "unknown phantom kind");
}

Sinogram add_gaussian_noise(const Sinogram& p, double rel_std, std::uint64_t seed) {
    require(rel_std >= 0.0, errc::invalid_argument, "rel_std must be >= 0");
    if (rel_std == 0.0) return p;

    double pmax = -std::numeric_limits<double>::infinity();
    bool all_zero = true;
    for (double v : p.values) {
        if (v != 0.0) all_zero = false;
        pmax = std::max(pmax, v);
    }
    require(!all_zero, errc::invalid_argument,
            "cannot scale noise to an all-zero sinogram (max is 0)");
    require(pmax > 0.0, errc::invalid_argument,
            "noise scale needs a positive sinogram maximum");

    Sinogram out = p;
    Rng rng(seed);
    const double std_dev = rel_std * pmax;
    for (double& v : out.values) v += std_dev * rng.normal();
    return out;
}

std::pair<Sinogram, DetectionGeometry> subsample_projections(const Sinogram& p, int n_keep) {
    const DetectionGeometry& g = p.geom;
    g.validate();
    require(n_keep >= 1 && n_keep <= g.n_detectors, errc::invalid_argument,
            "n_keep must lie in [1, n_detectors]");
    require(g.n_detectors % n_keep == 0, errc::invalid_argument,
            "n_detectors must be divisible by n_keep");
    if (n_keep == g.n_detectors) return {p, g};

    const int s = g.n_detectors / n_keep;
    const double start =
        g.has_first_angle ? g.first_angle_deg : 90.0 + (360.0 - g.arc_deg) / 2.0;
    const double delta = g.arc_deg / (g.n_detectors - 1);

    DetectionGeometry rg = g;
    rg.n_detectors = n_keep;
    rg.has_first_angle = true;
    if (n_keep == 1) {
        // single detector sits at the arc midpoint, so shift the window
        rg.first_angle_deg = start - g.arc_deg / 2.0;
    } else {
        rg.first_angle_deg = start;
        rg.arc_deg = delta * (static_cast<double>(s) * (n_keep - 1));
    }
    rg.validate();

    Sinogram out(rg);
    const int K = g.n_samples;
    for (int j = 0; j < n_keep; ++j)
        for (int k = 0; k < K; ++k) out.at(j, k) = p.at(j * s, k);
    return {out, rg};
}

} // namespace oat
