#pragma once

#include "oat/geometry.hpp"
#include "oat/image.hpp"
#include "oat/sparse.hpp"

namespace oat {

// Builds the discrete forward operator for the circular detection geometry.
//
// Row d*n_samples + k of the intermediate system integrates the bilinearly
// interpolated image over the arc {|r - r_d| = c*t_k} clipped to the grid
// support, divided by c*t_k. The walk splits the arc at every pixel-line
// crossing so each piece sees one bilinear cell, subdivides pieces into
// steps of arc length <= arc_step_frac*pixel_mm, and places two Gauss nodes
// per step whose weights sum to the step angle (ds/rho = dphi); within a
// cell the integrand is a trig quadratic, so the quadrature is exact to
// rounding and entries are insensitive to further step refinement. The
// returned matrix composes the temporal central difference (one-sided at
// the first/last sample) scaled by grueneisen/(4*pi*c), so p = M u is the
// discretized pressure signal.
//
// jobs > 1 parallelizes over detectors; the result does not depend on jobs.
SparseModelMatrix build_model_matrix(const ImageGrid2D& grid, const DetectionGeometry& geom,
                                     double arc_step_frac, int jobs = 1);

} // namespace oat
