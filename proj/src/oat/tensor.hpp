#pragma once

#include "oat/image.hpp"

namespace oat {

// Per-pixel symmetric 2x2 anisotropy tensor A = I + (c-1) v1 v1^T, stored as
// the three planes (a11, a12, a22). Eigenvalues are {c, 1} with c in (0,1].
struct TensorField2D {
    int nx = 0;
    int ny = 0;
    std::vector<double> a11, a12, a22;
    double sigma_px = 0.0;
    double rho_px = 0.0;
    double k = 0.0;
    double mu1_avg = 0.0;

    TensorField2D() = default;
    TensorField2D(int nx_, int ny_)
        : nx(nx_), ny(ny_),
          a11(static_cast<std::size_t>(nx_) * ny_, 1.0),
          a12(static_cast<std::size_t>(nx_) * ny_, 0.0),
          a22(static_cast<std::size_t>(nx_) * ny_, 1.0) {}

    std::size_t size() const { return static_cast<std::size_t>(nx) * ny; }
};

struct StructureTensorField {
    int nx = 0;
    int ny = 0;
    std::vector<double> jxx, jxy, jyy;

    StructureTensorField() = default;
    StructureTensorField(int nx_, int ny_)
        : nx(nx_), ny(ny_),
          jxx(static_cast<std::size_t>(nx_) * ny_, 0.0),
          jxy(static_cast<std::size_t>(nx_) * ny_, 0.0),
          jyy(static_cast<std::size_t>(nx_) * ny_, 0.0) {}

    std::size_t size() const { return static_cast<std::size_t>(nx) * ny; }
};

// Separable convolution with a renormalized Gaussian truncated at radius
// ceil(3*std_px), replicate boundary. std_px = 0 returns the input.
ImageGrid2D gaussian_smooth(const ImageGrid2D& u, double std_px);

// Smooth with sigma, take central-difference gradients (replicate boundary),
// smooth the gradient outer products with rho.
StructureTensorField structure_tensor(const ImageGrid2D& u0, double sigma_px, double rho_px);

// Closed-form eigensystem of a symmetric 2x2 matrix, mu1 >= mu2; v1 is a unit
// eigenvector of mu1, fixed to (1,0) when the eigenvalues coincide within
// 1e-14 * trace.
void eig_sym2(double jxx, double jxy, double jyy, double& mu1, double& mu2, double& v1x,
              double& v1y);

// Weickert diffusivity: 1 for s <= 0, else 1 - exp(-3.31488 / (s/k)^4).
double weickert_c(double s, double k);

// A(x) = V diag(c(mu1/mu1_avg; k), 1) V^T. Falls back to the identity field
// when mu1_avg < 1e-12 * mean(u0^2) (flat image, no meaningful orientation).
TensorField2D build_tensor_field(const ImageGrid2D& u0, double sigma_px, double rho_px, double k);

// 3D eigenvalue modification rule: (c(mu1/avg), c(mu2/avg), 1).
void modify_eigs_3d(double mu1, double mu2, double mu3, double mu1_avg, double k, double& d1,
                    double& d2, double& d3);

} // namespace oat
