#pragma once

#include <array>
#include <vector>

#include "oat/image.hpp"

namespace oat {

// Circular detection geometry plus the shared time axis of all detectors.
// Detectors sit on a circle of radius radius_mm; arc_deg of coverage with the
// gap centered on the negative-y axis unless first_angle_deg is set (used when
// subsampling so the kept detectors stay at their original angles).
struct DetectionGeometry {
    double radius_mm = 0.0;
    double arc_deg = 0.0;
    int n_detectors = 0;
    double sound_speed_mm_per_us = 1.5;
    double grueneisen = 1.0;
    double t0_us = 0.0;
    double dt_us = 0.0;
    int n_samples = 0;
    bool has_first_angle = false;
    double first_angle_deg = 0.0;

    void validate() const;
    bool same_as(const DetectionGeometry& o) const;
};

struct Sinogram {
    DetectionGeometry geom;
    std::vector<double> values; // values[d*n_samples + k], detector-major

    Sinogram() = default;
    explicit Sinogram(const DetectionGeometry& g)
        : geom(g), values(static_cast<std::size_t>(g.n_detectors) * g.n_samples, 0.0) {}

    std::size_t size() const {
        return static_cast<std::size_t>(geom.n_detectors) * geom.n_samples;
    }
    double& at(int d, int k) { return values[static_cast<std::size_t>(d) * geom.n_samples + k]; }
    double at(int d, int k) const {
        return values[static_cast<std::size_t>(d) * geom.n_samples + k];
    }
};

// Detector centers in mm, index-ordered along the arc.
std::vector<std::array<double, 2>> detector_positions(const DetectionGeometry& geom);

// Fills t0_us/dt_us/n_samples so that every pixel of the grid lies inside the
// sampled radial range: t0 = (R-D)/c, t_end = (R+D)/c with D = half grid
// diagonal, dt = pixel_mm/(2c). Rejects grids that reach the detector circle.
DetectionGeometry default_time_axis(const DetectionGeometry& geom_partial, const ImageGrid2D& grid);

} // namespace oat
