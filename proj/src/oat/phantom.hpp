#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>

#include "oat/geometry.hpp"
#include "oat/image.hpp"

namespace oat {

// Deterministic scalar RNG: mt19937_64 stream with explicit Box-Muller so
// sequences are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; } // [0,1)
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

struct PhantomSpec {
    enum class Kind { vessels, disk, step };
    Kind kind = Kind::vessels;
    int size = 64;
    double pixel_mm = 0.1;
    std::uint64_t seed = 7;

    int vessel_count = 7;
    double width_lo_px = 1.0; // tube radius range, >= 1 px
    double width_hi_px = 1.8;
    double curvature = 1.0; // control-point wander scale

    double disk_radius_frac = 0.25;
    double disk_height = 1.0;

    double step_pos_frac = 0.5;

    void validate() const;
};

// Random smooth tubes (Catmull-Rom splines through seeded control points)
// with tapering width and modulated intensity in [0.5, 1]; vessel 1 branches
// off vessel 0 and vessel 2 folds back on itself. Rasterization stops adding
// vessels once 40% of the pixels are covered.
ImageGrid2D vessel_phantom(const PhantomSpec& spec);

// Centered indicator disk, radius radius_frac*n px, pixel-center rule.
ImageGrid2D disk_phantom(int n, double radius_frac, double height, double pixel_mm = 0.1);

// Vertical step: height for columns i >= pos_frac*n, 0 before.
ImageGrid2D step_phantom(int n, double pos_frac, double height, double pixel_mm = 0.1);

ImageGrid2D make_phantom(const PhantomSpec& spec);

// Adds i.i.d. Gaussian noise with std = rel_std * max(p) from the seeded
// generator. rel_std = 0 returns the input unchanged.
Sinogram add_gaussian_noise(const Sinogram& p, double rel_std, std::uint64_t seed);

// Keeps detectors 0, s, 2s, ... with s = n_detectors/n_keep; the reduced
// geometry pins the kept detectors at their original angles.
std::pair<Sinogram, DetectionGeometry> subsample_projections(const Sinogram& p, int n_keep);

} // namespace oat
