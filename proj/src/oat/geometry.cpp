#include "oat/geometry.hpp"

#include <cmath>

namespace oat {

void DetectionGeometry::validate() const {
    require(radius_mm > 0.0, errc::invalid_argument, "detection radius must be positive");
    require(arc_deg > 0.0 && arc_deg <= 360.0, errc::invalid_argument,
            "arc_deg must lie in (0, 360]");
    require(n_detectors >= 1, errc::invalid_argument, "need at least one detector");
    require(sound_speed_mm_per_us > 0.0, errc::invalid_argument, "sound speed must be positive");
    require(grueneisen > 0.0, errc::invalid_argument, "Grueneisen parameter must be positive");
    require(dt_us > 0.0, errc::invalid_argument, "dt_us must be positive");
    require(n_samples >= 3, errc::invalid_argument, "need at least three time samples");
}

std::vector<std::array<double, 2>> detector_positions(const DetectionGeometry& geom) {
    geom.validate();
    const double pi = 3.14159265358979323846;
    const int n = geom.n_detectors;
    const double start =
        geom.has_first_angle ? geom.first_angle_deg : 90.0 + (360.0 - geom.arc_deg) / 2.0;

    std::vector<std::array<double, 2>> pts(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double theta_deg =
            (n == 1) ? start + geom.arc_deg / 2.0 : start + i * geom.arc_deg / (n - 1);
        double theta = theta_deg * pi / 180.0;
        pts[i] = {geom.radius_mm * std::cos(theta), geom.radius_mm * std::sin(theta)};
    }
    return pts;
}

DetectionGeometry default_time_axis(const DetectionGeometry& geom_partial, const ImageGrid2D& grid) {
    grid.validate();
    require(geom_partial.radius_mm > 0.0, errc::invalid_argument,
            "detection radius must be positive");
    require(geom_partial.sound_speed_mm_per_us > 0.0, errc::invalid_argument,
            "sound speed must be positive");

    const double c = geom_partial.sound_speed_mm_per_us;
    const double D = 0.5 * std::hypot(grid.nx * grid.pixel_mm, grid.ny * grid.pixel_mm);
    require(D < geom_partial.radius_mm, errc::invalid_argument,
            "grid half-diagonal reaches the detector circle; enlarge radius or shrink grid");

    DetectionGeometry g = geom_partial;
    g.t0_us = (g.radius_mm - D) / c;
    const double t_end = (g.radius_mm + D) / c;
    g.dt_us = grid.pixel_mm / (2.0 * c);
    g.n_samples = static_cast<int>(std::ceil((t_end - g.t0_us) / g.dt_us)) + 1;
    g.validate();
    return g;
}

bool DetectionGeometry::same_as(const DetectionGeometry& o) const {
    return radius_mm == o.radius_mm && arc_deg == o.arc_deg && n_detectors == o.n_detectors &&
           sound_speed_mm_per_us == o.sound_speed_mm_per_us && grueneisen == o.grueneisen &&
           t0_us == o.t0_us && dt_us == o.dt_us && n_samples == o.n_samples &&
           has_first_angle == o.has_first_angle &&
           (!has_first_angle || first_angle_deg == o.first_angle_deg);
}

} // namespace oat
