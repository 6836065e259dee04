#include "oat/tensor.hpp"

#include <cmath>

namespace oat {

namespace {

std::vector<double> gaussian_kernel(double std_px) {
    const int radius = static_cast<int>(std::ceil(3.0 * std_px));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i / std_px) * (i / std_px));
        k[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

// 1D correlation along x or y with replicate boundary.
void convolve_axis(const std::vector<double>& in, int nx, int ny, const std::vector<double>& kernel,
                   bool along_x, std::vector<double>& out) {
    const int radius = static_cast<int>(kernel.size() / 2);
    out.resize(in.size());
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            double acc = 0.0;
            if (along_x) {
                for (int t = -radius; t <= radius; ++t) {
                    int ii = i + t;
                    ii = ii < 0 ? 0 : (ii >= nx ? nx - 1 : ii);
                    acc += kernel[static_cast<std::size_t>(t + radius)] *
                           in[static_cast<std::size_t>(j) * nx + ii];
                }
            } else {
                for (int t = -radius; t <= radius; ++t) {
                    int jj = j + t;
                    jj = jj < 0 ? 0 : (jj >= ny ? ny - 1 : jj);
                    acc += kernel[static_cast<std::size_t>(t + radius)] *
                           in[static_cast<std::size_t>(jj) * nx + i];
                }
            }
            out[static_cast<std::size_t>(j) * nx + i] = acc;
        }
    }
}

std::vector<double> smooth_plane(const std::vector<double>& v, int nx, int ny, double std_px) {
    if (std_px == 0.0) return v;
    const auto kernel = gaussian_kernel(std_px);
    std::vector<double> tmp, out;
    convolve_axis(v, nx, ny, kernel, true, tmp);
    convolve_axis(tmp, nx, ny, kernel, false, out);
    return out;
}

} // namespace

ImageGrid2D gaussian_smooth(const ImageGrid2D& u, double std_px) {
    u.validate();
    require(std_px >= 0.0, errc::invalid_argument, "gaussian std_px must be >= 0");
    ImageGrid2D out = u;
    out.values = smooth_plane(u.values, u.nx, u.ny, std_px);
    return out;
}

StructureTensorField structure_tensor(const ImageGrid2D& u0, double sigma_px, double rho_px) {
    u0.validate();
    require(sigma_px >= 0.0 && rho_px >= 0.0, errc::invalid_argument,
            "smoothing widths must be >= 0");
    const int nx = u0.nx, ny = u0.ny;
    const std::vector<double> us = smooth_plane(u0.values, nx, ny, sigma_px);

    // Central differences with replicate boundary (edge slope halves).
    std::vector<double> gx(us.size()), gy(us.size());
    for (int j = 0; j < ny; ++j) {
        const std::size_t row = static_cast<std::size_t>(j) * nx;
        for (int i = 0; i < nx; ++i) {
            const int il = i > 0 ? i - 1 : 0;
            const int ir = i < nx - 1 ? i + 1 : nx - 1;
            gx[row + i] = (us[row + ir] - us[row + il]) * 0.5;
        }
    }
    for (int j = 0; j < ny; ++j) {
        const std::size_t row = static_cast<std::size_t>(j) * nx;
        const std::size_t up = static_cast<std::size_t>(j > 0 ? j - 1 : 0) * nx;
        const std::size_t dn = static_cast<std::size_t>(j < ny - 1 ? j + 1 : ny - 1) * nx;
        for (int i = 0; i < nx; ++i) gy[row + i] = (us[dn + i] - us[up + i]) * 0.5;
    }

    StructureTensorField J(nx, ny);
    for (std::size_t idx = 0; idx < J.size(); ++idx) {
        J.jxx[idx] = gx[idx] * gx[idx];
        J.jxy[idx] = gx[idx] * gy[idx];
        J.jyy[idx] = gy[idx] * gy[idx];
    }
    J.jxx = smooth_plane(J.jxx, nx, ny, rho_px);
    J.jxy = smooth_plane(J.jxy, nx, ny, rho_px);
    J.jyy = smooth_plane(J.jyy, nx, ny, rho_px);
    return J;
}

void eig_sym2(double jxx, double jxy, double jyy, double& mu1, double& mu2, double& v1x,
              double& v1y) {
    const double tr = jxx + jyy;
    const double half_gap = 0.5 * (jxx - jyy);
    const double disc = std::sqrt(half_gap * half_gap + jxy * jxy);
    mu1 = 0.5 * tr + disc;
    mu2 = 0.5 * tr - disc;

    if (disc <= 1e-14 * std::fabs(tr) || (disc == 0.0)) {
        v1x = 1.0;
        v1y = 0.0;
        return;
    }
    // (mu1 - jyy, jxy) solves (J - mu1 I) v = 0; fall back to the other
    // column when it degenerates (jxy == 0 and jxx < jyy).
    double vx = mu1 - jyy, vy = jxy;
    double nrm = std::hypot(vx, vy);
    if (nrm == 0.0) {
        vx = jxy;
        vy = mu1 - jxx;
        nrm = std::hypot(vx, vy);
    }
    if (nrm == 0.0) {
        v1x = 1.0;
        v1y = 0.0;
        return;
    }
    v1x = vx / nrm;
    v1y = vy / nrm;
}

double weickert_c(double s, double k) {
    require(k > 0.0 && k <= 1.0, errc::invalid_argument, "weickert k must lie in (0, 1]");
    if (s <= 0.0) return 1.0;
    const double r = s / k;
    const double r2 = r * r;
    return 1.0 - std::exp(-3.31488 / (r2 * r2));
}

TensorField2D build_tensor_field(const ImageGrid2D& u0, double sigma_px, double rho_px, double k) {
    require(k > 0.0 && k <= 1.0, errc::invalid_argument, "weickert k must lie in (0, 1]");
    TensorField2D A(u0.nx, u0.ny);
    A.sigma_px = sigma_px;
    A.rho_px = rho_px;
    A.k = k;

    double mean_sq = 0.0;
    for (double v : u0.values) mean_sq += v * v;
    mean_sq /= static_cast<double>(u0.size());
    if (mean_sq == 0.0) return A; // u0 == 0: no orientation, identity field

    const StructureTensorField J = structure_tensor(u0, sigma_px, rho_px);
    std::vector<double> mu1(J.size()), v1x(J.size()), v1y(J.size());
    double mu1_sum = 0.0;
    for (std::size_t idx = 0; idx < J.size(); ++idx) {
        double m1, m2;
        eig_sym2(J.jxx[idx], J.jxy[idx], J.jyy[idx], m1, m2, v1x[idx], v1y[idx]);
        mu1[idx] = m1;
        mu1_sum += m1;
    }
    const double mu1_avg = mu1_sum / static_cast<double>(J.size());
    A.mu1_avg = mu1_avg;
    if (mu1_avg < 1e-12 * mean_sq) return A; // flat image: keep A = I

    for (std::size_t idx = 0; idx < J.size(); ++idx) {
        const double c = weickert_c(mu1[idx] / mu1_avg, k);
        A.a11[idx] = 1.0 + (c - 1.0) * v1x[idx] * v1x[idx];
        A.a12[idx] = (c - 1.0) * v1x[idx] * v1y[idx];
        A.a22[idx] = 1.0 + (c - 1.0) * v1y[idx] * v1y[idx];
    }
    return A;
}

void modify_eigs_3d(double mu1, double mu2, double mu3, double mu1_avg, double k, double& d1,
                    double& d2, double& d3) {
    require(mu1 >= mu2 && mu2 >= mu3, errc::invalid_argument,
            "modify_eigs_3d expects mu1 >= mu2 >= mu3");
    require(mu1_avg > 0.0, errc::invalid_argument, "mu1_avg must be positive");
    d1 = weickert_c(mu1 / mu1_avg, k);
    d2 = weickert_c(mu2 / mu1_avg, k);
    d3 = 1.0;
}

} // namespace oat
