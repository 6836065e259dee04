#include "oat/ops.hpp"

#include <cmath>

#include "oat/tensor.hpp"

namespace oat {

void gradient(const ImageGrid2D& u, GradientField2D& g) {
    u.validate();
    const int nx = u.nx, ny = u.ny;
    if (g.nx != nx || g.ny != ny) g = GradientField2D(nx, ny);
    const double* v = u.values.data();
    for (int j = 0; j < ny; ++j) {
        const std::size_t row = static_cast<std::size_t>(j) * nx;
        g.gx[row] = 0.0;
        for (int i = 1; i < nx; ++i) g.gx[row + i] = v[row + i] - v[row + i - 1];
    }
    for (int i = 0; i < nx; ++i) g.gy[i] = 0.0;
    for (int j = 1; j < ny; ++j) {
        const std::size_t row = static_cast<std::size_t>(j) * nx;
        for (int i = 0; i < nx; ++i) g.gy[row + i] = v[row + i] - v[row - nx + i];
    }
}

GradientField2D gradient(const ImageGrid2D& u) {
    GradientField2D g(u.nx, u.ny);
    gradient(u, g);
    return g;
}

namespace {

// out = gradient^T (zx, zy); divergence and the adaptive adjoint share it.
void gradient_transpose(const double* zx, const double* zy, int nx, int ny, double* out) {
    const std::size_t n = static_cast<std::size_t>(nx) * ny;
    for (std::size_t idx = 0; idx < n; ++idx) out[idx] = 0.0;
    for (int j = 0; j < ny; ++j) {
        const std::size_t row = static_cast<std::size_t>(j) * nx;
        for (int i = 1; i < nx; ++i) {
            const double z = zx[row + i];
            out[row + i] += z;
            out[row + i - 1] -= z;
        }
    }
    for (int j = 1; j < ny; ++j) {
        const std::size_t row = static_cast<std::size_t>(j) * nx;
        for (int i = 0; i < nx; ++i) {
            const double z = zy[row + i];
            out[row + i] += z;
            out[row - nx + i] -= z;
        }
    }
}

} // namespace

void divergence(const GradientField2D& g, std::vector<double>& out) {
    out.resize(g.size());
    gradient_transpose(g.gx.data(), g.gy.data(), g.nx, g.ny, out.data());
    for (double& v : out) v = -v;
}

void gradient_adjoint(const GradientField2D& g, std::vector<double>& out) {
    out.resize(g.size());
    gradient_transpose(g.gx.data(), g.gy.data(), g.nx, g.ny, out.data());
}

void adaptive_gradient(const TensorField2D& A, const ImageGrid2D& u, GradientField2D& g) {
    require(A.nx == u.nx && A.ny == u.ny, errc::dimension_mismatch,
            "tensor field shape does not match the image");
    gradient(u, g);
    const std::size_t n = g.size();
    for (std::size_t idx = 0; idx < n; ++idx) {
        const double gx = g.gx[idx], gy = g.gy[idx];
        g.gx[idx] = A.a11[idx] * gx + A.a12[idx] * gy;
        g.gy[idx] = A.a12[idx] * gx + A.a22[idx] * gy;
    }
}

void adaptive_divergence(const TensorField2D& A, const GradientField2D& z,
                         std::vector<double>& out) {
    require(A.nx == z.nx && A.ny == z.ny, errc::dimension_mismatch,
            "tensor field shape does not match the dual field");
    const std::size_t n = z.size();
    std::vector<double> ax(n), ay(n);
    for (std::size_t idx = 0; idx < n; ++idx) {
        ax[idx] = A.a11[idx] * z.gx[idx] + A.a12[idx] * z.gy[idx];
        ay[idx] = A.a12[idx] * z.gx[idx] + A.a22[idx] * z.gy[idx];
    }
    out.resize(n);
    gradient_transpose(ax.data(), ay.data(), z.nx, z.ny, out.data());
}

double tv_value(const ImageGrid2D& u) {
    GradientField2D g = gradient(u);
    double s = 0.0;
    for (std::size_t idx = 0; idx < g.size(); ++idx)
        s += std::sqrt(g.gx[idx] * g.gx[idx] + g.gy[idx] * g.gy[idx]);
    return s;
}

double a2tv_value(const TensorField2D& A, const ImageGrid2D& u) {
    GradientField2D g(u.nx, u.ny);
    adaptive_gradient(A, u, g);
    double s = 0.0;
    for (std::size_t idx = 0; idx < g.size(); ++idx)
        s += std::sqrt(g.gx[idx] * g.gx[idx] + g.gy[idx] * g.gy[idx]);
    return s;
}

namespace {

const double inv_sqrt2 = 0.70710678118654752440;

void check_haar_dims(int nx, int ny, int levels) {
    require(levels >= 1, errc::invalid_argument, "haar transform needs levels >= 1");
    require(levels < 31, errc::invalid_argument, "haar level count out of range");
    const int block = 1 << levels;
    require(nx % block == 0 && ny % block == 0, errc::invalid_argument,
            "grid dimensions must be divisible by 2^levels for the haar transform");
}

} // namespace

void haar_forward(const double* u, int nx, int ny, int levels, double* w) {
    check_haar_dims(nx, ny, levels);
    const std::size_t n = static_cast<std::size_t>(nx) * ny;
    for (std::size_t idx = 0; idx < n; ++idx) w[idx] = u[idx];

    int sx = nx, sy = ny;
    std::vector<double> tmp(static_cast<std::size_t>(std::max(nx, ny)));
    for (int lev = 0; lev < levels; ++lev) {
        const int hx = sx / 2, hy = sy / 2;
        for (int j = 0; j < sy; ++j) { // rows
            double* row = w + static_cast<std::size_t>(j) * nx;
            for (int t = 0; t < hx; ++t) {
                tmp[t] = (row[2 * t] + row[2 * t + 1]) * inv_sqrt2;
                tmp[hx + t] = (row[2 * t] - row[2 * t + 1]) * inv_sqrt2;
            }
            for (int i = 0; i < sx; ++i) row[i] = tmp[i];
        }
        for (int i = 0; i < sx; ++i) { // columns
            for (int t = 0; t < hy; ++t) {
                const double a = w[static_cast<std::size_t>(2 * t) * nx + i];
                const double b = w[static_cast<std::size_t>(2 * t + 1) * nx + i];
                tmp[t] = (a + b) * inv_sqrt2;
                tmp[hy + t] = (a - b) * inv_sqrt2;
            }
            for (int j = 0; j < sy; ++j) w[static_cast<std::size_t>(j) * nx + i] = tmp[j];
        }
        sx = hx;
        sy = hy;
    }
}

void haar_inverse(const double* w, int nx, int ny, int levels, double* u) {
    check_haar_dims(nx, ny, levels);
    const std::size_t n = static_cast<std::size_t>(nx) * ny;
    for (std::size_t idx = 0; idx < n; ++idx) u[idx] = w[idx];

    std::vector<double> tmp(static_cast<std::size_t>(std::max(nx, ny)));
    for (int lev = levels - 1; lev >= 0; --lev) {
        const int sx = nx >> lev, sy = ny >> lev;
        const int hx = sx / 2, hy = sy / 2;
        for (int i = 0; i < sx; ++i) { // undo columns
            for (int t = 0; t < hy; ++t) {
                const double lo = u[static_cast<std::size_t>(t) * nx + i];
                const double hi = u[static_cast<std::size_t>(hy + t) * nx + i];
                tmp[2 * t] = (lo + hi) * inv_sqrt2;
                tmp[2 * t + 1] = (lo - hi) * inv_sqrt2;
            }
            for (int j = 0; j < sy; ++j) u[static_cast<std::size_t>(j) * nx + i] = tmp[j];
        }
        for (int j = 0; j < sy; ++j) { // undo rows
            double* row = u + static_cast<std::size_t>(j) * nx;
            for (int t = 0; t < hx; ++t) {
                tmp[2 * t] = (row[t] + row[hx + t]) * inv_sqrt2;
                tmp[2 * t + 1] = (row[t] - row[hx + t]) * inv_sqrt2;
            }
            for (int i = 0; i < sx; ++i) row[i] = tmp[i];
        }
    }
}

std::vector<double> haar_forward(const ImageGrid2D& u, int levels) {
    std::vector<double> w(u.size());
    haar_forward(u.values.data(), u.nx, u.ny, levels, w.data());
    return w;
}

} // namespace oat
