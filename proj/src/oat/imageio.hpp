#pragma once

#include <string>
#include <vector>

#include "oat/geometry.hpp"
#include "oat/image.hpp"
#include "oat/tensor.hpp"

namespace oat {

// Raw little-endian f64 payload plus a ".json" sidecar next to it. The
// provenance string, when non-empty, must be a serialized JSON object and is
// embedded verbatim under the "provenance" key.
void write_image(const std::string& path, const ImageGrid2D& u,
                 const std::string& provenance_json = "");
ImageGrid2D read_image(const std::string& path);

void write_sinogram(const std::string& path, const Sinogram& s,
                    const std::string& provenance_json = "");
Sinogram read_sinogram(const std::string& path);

// Debug export: interleaved f64 triplets (a11, a12, a22) row-major.
void write_tensor_field(const std::string& path, const TensorField2D& a,
                        const std::string& provenance_json = "");

// Intensity window for 16-bit PGM export. Automatic mode takes the 1st and
// 99th percentiles of the pixel values; a constant image is widened by 0.5
// on both sides so the output lands mid-scale.
struct PgmWindow {
    bool automatic = true;
    double lo = 0.0;
    double hi = 1.0;
    double p_lo = 1.0;
    double p_hi = 99.0;
};

void export_pgm(const ImageGrid2D& u, const std::string& path,
                const PgmWindow& window = {});

struct MontageTile {
    ImageGrid2D image;
    std::string label;
    // Extra numeric annotations copied into the JSON legend (parameter
    // values, error metrics).
    std::vector<std::pair<std::string, double>> annotations;
};

// Tiles row-major with 2-px black separators, one shared intensity window
// across all tiles, and a JSON legend at path + ".json".
void export_montage(const std::vector<MontageTile>& tiles, int rows, int cols,
                    const std::string& path, const PgmWindow& window = {});

// Resolves a window against concrete data (percentiles if automatic).
void resolve_window(const std::vector<double>& values, const PgmWindow& w,
                    double& lo, double& hi);

} // namespace oat
