#pragma once

#include "oat/image.hpp"

namespace oat {

struct TensorField2D; // tensor.hpp

// Backward differences with zero first column/row:
//   gx(i,j) = u(i,j) - u(i-1,j)  (i is the column index, 0 on the first column)
//   gy(i,j) = u(i,j) - u(i,j-1)  (0 on the first row)
void gradient(const ImageGrid2D& u, GradientField2D& g);
GradientField2D gradient(const ImageGrid2D& u);

// Negative adjoint of gradient: <gradient(u), g> = -<u, divergence(g)>.
void divergence(const GradientField2D& g, std::vector<double>& out);

// Positive adjoint, out = gradient^T g (equals -divergence(g)).
void gradient_adjoint(const GradientField2D& g, std::vector<double>& out);

// Per pixel (g1,g2)^T = A(x) * (gx,gy)^T with the gradient above.
void adaptive_gradient(const TensorField2D& A, const ImageGrid2D& u, GradientField2D& g);

// Exact adjoint of adaptive_gradient (positive sign):
// <adaptive_gradient(A,u), z> = <u, adaptive_divergence(A,z)>.
void adaptive_divergence(const TensorField2D& A, const GradientField2D& z, std::vector<double>& out);

double tv_value(const ImageGrid2D& u);
double a2tv_value(const TensorField2D& A, const ImageGrid2D& u);

// Orthonormal 2D Haar transform: per level the filter pair (1,1)/sqrt(2),
// (1,-1)/sqrt(2) runs over rows then columns, recursing on the LL band.
// The inverse equals the transpose. nx and ny must be divisible by 2^levels.
void haar_forward(const double* u, int nx, int ny, int levels, double* w);
void haar_inverse(const double* w, int nx, int ny, int levels, double* u);
std::vector<double> haar_forward(const ImageGrid2D& u, int levels);

} // namespace oat
