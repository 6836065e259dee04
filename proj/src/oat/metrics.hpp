#pragma once

#include <string>
#include <vector>

#include "oat/image.hpp"

namespace oat {

// Mean absolute distance (1/N) * sum |a - b|.
double mad(const ImageGrid2D& u_orig, const ImageGrid2D& u_star);

enum class SliceAxis { row, column };

struct ProfileSlice {
    SliceAxis axis;
    int index;
    bool normalized;
    std::vector<double> position_mm; // physical coordinate along the slice
    std::vector<double> value;
};

// Extracts row j = index (values across x) or column i = index (values
// across y). normalize divides by the slice maximum when it is positive.
ProfileSlice profile_slice(const ImageGrid2D& u, SliceAxis axis, int index,
                           bool normalize = false);

// max - min over the samples whose position lies in [lo_mm, hi_mm].
double peak_to_peak(const ProfileSlice& s, double lo_mm, double hi_mm);

struct EvalReport {
    std::vector<std::string> labels;
    std::vector<double> mads;
    std::vector<ProfileSlice> slices;       // one per label, optional (may be empty)
    std::vector<double> peak_to_peak_vals;  // parallel to labels when windowed
    double window_lo_mm = 0.0, window_hi_mm = 0.0;
    bool has_window = false;

    // CSV: position_mm column plus one value column per labeled slice.
    void write_slice_csv(const std::string& path) const;
    // JSON: the scalar metrics (mad and optional peak-to-peak per label).
    void write_scalars_json(const std::string& path) const;
};

} // namespace oat
