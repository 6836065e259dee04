#include "oat/sparse.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace oat {

void CsrMatrix::apply(const double* x, double* y) const {
    for (std::uint64_t r = 0; r < n_rows; ++r) {
        double acc = 0.0;
        for (std::uint64_t idx = row_ptr[r]; idx < row_ptr[r + 1]; ++idx)
            acc += val[idx] * x[col[idx]];
        y[r] = acc;
    }
}

void CsrMatrix::apply_transpose(const double* x, double* y) const {
    for (std::uint64_t c = 0; c < n_cols; ++c) y[c] = 0.0;
    for (std::uint64_t r = 0; r < n_rows; ++r) {
        const double xr = x[r];
        if (xr == 0.0) continue;
        for (std::uint64_t idx = row_ptr[r]; idx < row_ptr[r + 1]; ++idx)
            y[col[idx]] += val[idx] * xr;
    }
}

double CsrMatrix::norm_inf() const {
    double best = 0.0;
    for (std::uint64_t r = 0; r < n_rows; ++r) {
        double s = 0.0;
        for (std::uint64_t idx = row_ptr[r]; idx < row_ptr[r + 1]; ++idx) s += std::fabs(val[idx]);
        if (s > best) best = s;
    }
    return best;
}

double CsrMatrix::norm_one() const {
    std::vector<double> colsum(n_cols, 0.0);
    for (std::uint64_t idx = 0; idx < nnz(); ++idx) colsum[col[idx]] += std::fabs(val[idx]);
    double best = 0.0;
    for (double s : colsum)
        if (s > best) best = s;
    return best;
}

CsrMatrix CsrMatrix::transposed() const {
    CsrMatrix t;
    t.n_rows = n_cols;
    t.n_cols = n_rows;
    t.row_ptr.assign(n_cols + 1, 0);
    t.col.resize(nnz());
    t.val.resize(nnz());

    for (std::uint64_t idx = 0; idx < nnz(); ++idx) ++t.row_ptr[col[idx] + 1];
    for (std::uint64_t c = 0; c < n_cols; ++c) t.row_ptr[c + 1] += t.row_ptr[c];

    std::vector<std::uint64_t> cursor(t.row_ptr.begin(), t.row_ptr.end() - 1);
    for (std::uint64_t r = 0; r < n_rows; ++r) {
        for (std::uint64_t idx = row_ptr[r]; idx < row_ptr[r + 1]; ++idx) {
            std::uint64_t dst = cursor[col[idx]]++;
            t.col[dst] = static_cast<std::uint32_t>(r);
            t.val[dst] = val[idx];
        }
    }
    return t;
}

void CsrMatrix::check_structure() const {
    require(row_ptr.size() == n_rows + 1, errc::dimension_mismatch, "CSR row_ptr size mismatch");
    require(row_ptr.front() == 0 && row_ptr.back() == nnz(), errc::dimension_mismatch,
            "CSR row_ptr endpoints inconsistent with nnz");
    for (std::uint64_t r = 0; r < n_rows; ++r) {
        require(row_ptr[r] <= row_ptr[r + 1], errc::dimension_mismatch, "CSR row_ptr not monotone");
        for (std::uint64_t idx = row_ptr[r]; idx < row_ptr[r + 1]; ++idx) {
            require(col[idx] < n_cols, errc::dimension_mismatch, "CSR column index out of range");
            if (idx > row_ptr[r])
                require(col[idx - 1] < col[idx], errc::dimension_mismatch,
                        "CSR columns not strictly increasing within a row");
        }
    }
}

void SparseModelMatrix::apply(const std::vector<double>& u, std::vector<double>& p) const {
    require(u.size() == n_cols(), errc::dimension_mismatch,
            "apply: image length " + std::to_string(u.size()) + " does not match n_cols " +
                std::to_string(n_cols()));
    p.resize(n_rows());
    csr.apply(u.data(), p.data());
}

void SparseModelMatrix::apply_adjoint(const std::vector<double>& p, std::vector<double>& u) const {
    require(p.size() == n_rows(), errc::dimension_mismatch,
            "apply_adjoint: sinogram length " + std::to_string(p.size()) +
                " does not match n_rows " + std::to_string(n_rows()));
    u.resize(n_cols());
    if (csr_t.n_rows == n_cols() && csr_t.nnz() == nnz())
        csr_t.apply(p.data(), u.data());
    else
        csr.apply_transpose(p.data(), u.data());
}

double SparseModelMatrix::norm_scale() const {
    return std::sqrt(csr.norm_inf() * csr.norm_one());
}

void normalize_matrix(SparseModelMatrix& m) {
    const double scale = m.norm_scale();
    require(scale > 0.0, errc::invalid_argument, "cannot normalize an all-zero matrix");
    const double f = scale / 160.0;
    for (double& v : m.csr.val) v /= f;
    m.norm_factor *= f;
    m.finalize();
}

namespace {

template <typename T> void put(std::ofstream& out, const T* data, std::size_t count) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
}

template <typename T> void get(std::ifstream& in, T* data, std::size_t count) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
    require(static_cast<std::size_t>(in.gcount()) == count * sizeof(T), errc::io_failure,
            "matrix file truncated");
}

} // namespace

static_assert(std::endian::native == std::endian::little,
              "matrix container assumes a little-endian host");

void save_matrix(const SparseModelMatrix& m, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), errc::io_failure, "cannot open " + tmp + " for writing");
        out.write("OAMM1\n", 6);
        std::uint64_t hdr[3] = {m.csr.n_rows, m.csr.n_cols, m.csr.nnz()};
        put(out, hdr, 3);
        put(out, m.csr.row_ptr.data(), m.csr.row_ptr.size());
        put(out, m.csr.col.data(), m.csr.col.size());
        put(out, m.csr.val.data(), m.csr.val.size());
        put(out, &m.norm_factor, 1);
        require(out.good(), errc::io_failure, "write failed for " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    require(!ec, errc::io_failure, "rename failed for " + path + ": " + ec.message());
}

SparseModelMatrix load_matrix(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), errc::io_failure, "cannot open matrix file " + path);

    char magic[6];
    get(in, magic, 6);
    require(std::memcmp(magic, "OAMM1\n", 6) == 0, errc::io_failure,
            path + " is not an OAMM1 matrix file");

    SparseModelMatrix m;
    std::uint64_t hdr[3];
    get(in, hdr, 3);
    m.csr.n_rows = hdr[0];
    m.csr.n_cols = hdr[1];
    m.csr.row_ptr.resize(hdr[0] + 1);
    m.csr.col.resize(hdr[2]);
    m.csr.val.resize(hdr[2]);
    get(in, m.csr.row_ptr.data(), m.csr.row_ptr.size());
    get(in, m.csr.col.data(), m.csr.col.size());
    get(in, m.csr.val.data(), m.csr.val.size());
    get(in, &m.norm_factor, 1);
    m.csr.check_structure();
    m.finalize();
    return m;
}

} // namespace oat
