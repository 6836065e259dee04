#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "oat/errors.hpp"

namespace oat {

// Square-pixel image centered on the scanner origin. Row-major storage,
// values[j*nx + i] is the pixel in column i (x) and row j (y); pixel (i,j)
// has its center at ((i-(nx-1)/2)*pixel_mm, (j-(ny-1)/2)*pixel_mm).
struct ImageGrid2D {
    int nx = 0;
    int ny = 0;
    double pixel_mm = 0.0;
    std::vector<double> values;

    ImageGrid2D() = default;
    ImageGrid2D(int nx_, int ny_, double pixel_mm_)
        : nx(nx_), ny(ny_), pixel_mm(pixel_mm_), values(static_cast<std::size_t>(nx_) * ny_, 0.0) {
        validate();
    }

    std::size_t size() const { return static_cast<std::size_t>(nx) * ny; }

    double& at(int i, int j) { return values[static_cast<std::size_t>(j) * nx + i]; }
    double at(int i, int j) const { return values[static_cast<std::size_t>(j) * nx + i]; }

    double x_mm(int i) const { return (i - (nx - 1) / 2.0) * pixel_mm; }
    double y_mm(int j) const { return (j - (ny - 1) / 2.0) * pixel_mm; }

    void validate() const {
        require(nx >= 2 && ny >= 2, errc::invalid_argument, "image grid needs nx >= 2 and ny >= 2");
        require(pixel_mm > 0.0, errc::invalid_argument, "pixel_mm must be positive");
        require(values.size() == size(), errc::dimension_mismatch,
                "image value count does not match nx*ny");
    }

    bool same_shape(const ImageGrid2D& o) const { return nx == o.nx && ny == o.ny; }
};

// Pair of per-pixel arrays holding the two gradient components.
struct GradientField2D {
    int nx = 0;
    int ny = 0;
    std::vector<double> gx, gy;

    GradientField2D() = default;
    GradientField2D(int nx_, int ny_)
        : nx(nx_), ny(ny_),
          gx(static_cast<std::size_t>(nx_) * ny_, 0.0),
          gy(static_cast<std::size_t>(nx_) * ny_, 0.0) {}

    std::size_t size() const { return static_cast<std::size_t>(nx) * ny; }
};

} // namespace oat
