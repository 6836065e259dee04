#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oat/errors.hpp"

namespace oat {

// Plain CSR storage. Column indices inside each row are strictly increasing.
struct CsrMatrix {
    std::uint64_t n_rows = 0;
    std::uint64_t n_cols = 0;
    std::vector<std::uint64_t> row_ptr; // n_rows + 1
    std::vector<std::uint32_t> col;
    std::vector<double> val;

    std::uint64_t nnz() const { return val.size(); }

    void apply(const double* x, double* y) const;           // y = A x
    void apply_transpose(const double* x, double* y) const; // y = A^T x

    double norm_inf() const; // max absolute row sum
    double norm_one() const; // max absolute column sum

    CsrMatrix transposed() const;
    void check_structure() const;
};

// Discrete forward operator p = M u together with its normalization record.
// norm_factor is the divisor applied by normalize_matrix (1 if untouched).
// A CSR copy of M^T is kept so the adjoint product runs row-sequential too.
struct SparseModelMatrix {
    CsrMatrix csr;
    CsrMatrix csr_t;
    double norm_factor = 1.0;

    std::uint64_t n_rows() const { return csr.n_rows; }
    std::uint64_t n_cols() const { return csr.n_cols; }
    std::uint64_t nnz() const { return csr.nnz(); }

    void finalize() { csr_t = csr.transposed(); }

    void apply(const std::vector<double>& u, std::vector<double>& p) const;
    void apply_adjoint(const std::vector<double>& p, std::vector<double>& u) const;

    // sqrt(|M|_inf * |M|_1); 160 after normalization.
    double norm_scale() const;
};

// Divides all entries by f = sqrt(|M|_inf * |M|_1) / 160 and accumulates f
// into norm_factor. A second pass is a no-op up to rounding (f == 1 then).
void normalize_matrix(SparseModelMatrix& m);

// Binary CSR container: magic "OAMM1\n", little-endian u64 n_rows/n_cols/nnz,
// u64 row offsets, u32 column indices, f64 values, f64 norm_factor.
void save_matrix(const SparseModelMatrix& m, const std::string& path);
SparseModelMatrix load_matrix(const std::string& path);

} // namespace oat
