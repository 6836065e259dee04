#include "oat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "oat/errors.hpp"

namespace oat {

double mad(const ImageGrid2D& u_orig, const ImageGrid2D& u_star) {
    require(u_orig.same_shape(u_star), errc::dimension_mismatch,
            "mad: image shapes differ");
    const std::size_t n = u_orig.values.size();
    require(n > 0, errc::invalid_argument, "mad: empty image");
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        acc += std::abs(u_orig.values[i] - u_star.values[i]);
    return acc / static_cast<double>(n);
}

ProfileSlice profile_slice(const ImageGrid2D& u, SliceAxis axis, int index,
                           bool normalize) {
    u.validate();
    ProfileSlice s;
    s.axis = axis;
    s.index = index;
    s.normalized = normalize;
    if (axis == SliceAxis::row) {
        require(index >= 0 && index < u.ny, errc::invalid_argument,
                "profile_slice: row index out of range");
        s.position_mm.resize(static_cast<std::size_t>(u.nx));
        s.value.resize(static_cast<std::size_t>(u.nx));
        for (int i = 0; i < u.nx; ++i) {
            s.position_mm[static_cast<std::size_t>(i)] = u.x_mm(i);
            s.value[static_cast<std::size_t>(i)] = u.at(i, index);
        }
    } else {
        require(index >= 0 && index < u.nx, errc::invalid_argument,
                "profile_slice: column index out of range");
        s.position_mm.resize(static_cast<std::size_t>(u.ny));
        s.value.resize(static_cast<std::size_t>(u.ny));
        for (int j = 0; j < u.ny; ++j) {
            s.position_mm[static_cast<std::size_t>(j)] = u.y_mm(j);
            s.value[static_cast<std::size_t>(j)] = u.at(index, j);
        }
    }
    if (normalize) {
        double m = 0.0;
        for (double v : s.value) m = std::max(m, v);
        if (m > 0.0)
            for (double& v : s.value) v /= m;
    }
    return s;
}

double peak_to_peak(const ProfileSlice& s, double lo_mm, double hi_mm) {
    require(lo_mm <= hi_mm, errc::invalid_argument,
            "peak_to_peak: window bounds reversed");
    double vmin = std::numeric_limits<double>::infinity();
    double vmax = -vmin;
    std::size_t hit = 0;
    for (std::size_t i = 0; i < s.position_mm.size(); ++i) {
        const double x = s.position_mm[i];
        if (x < lo_mm || x > hi_mm) continue;
        vmin = std::min(vmin, s.value[i]);
        vmax = std::max(vmax, s.value[i]);
        ++hit;
    }
    require(hit > 0, errc::invalid_argument,
            "peak_to_peak: no samples inside window");
    return vmax - vmin;
}

namespace {

void write_text_file(const std::string& path, const std::string& body) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        require(f.good(), errc::io_failure, "cannot open for writing: " + tmp);
        f << body;
        f.flush();
        require(f.good(), errc::io_failure, "write failed: " + tmp);
    }
    require(std::rename(tmp.c_str(), path.c_str()) == 0, errc::io_failure,
            "rename failed: " + path);
}

std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

void EvalReport::write_slice_csv(const std::string& path) const {
    require(!slices.empty(), errc::invalid_argument,
            "EvalReport: no slices to write");
    const std::size_t npos = slices.front().position_mm.size();
    for (const auto& s : slices)
        require(s.position_mm.size() == npos, errc::dimension_mismatch,
                "EvalReport: slice lengths differ");
    std::ostringstream os;
    os << "position_mm";
    for (std::size_t k = 0; k < slices.size(); ++k) {
        os << ',' << (k < labels.size() ? labels[k] : "slice" + std::to_string(k));
    }
    os << '\n';
    for (std::size_t i = 0; i < npos; ++i) {
        os << fmt_g17(slices.front().position_mm[i]);
        for (const auto& s : slices) os << ',' << fmt_g17(s.value[i]);
        os << '\n';
    }
    write_text_file(path, os.str());
}

void EvalReport::write_scalars_json(const std::string& path) const {
    std::ostringstream os;
    os << "{\n  \"metrics\": [\n";
    for (std::size_t k = 0; k < labels.size(); ++k) {
        os << "    {\"label\": \"" << labels[k] << "\"";
        if (k < mads.size()) os << ", \"mad\": " << fmt_g17(mads[k]);
        if (has_window && k < peak_to_peak_vals.size())
            os << ", \"peak_to_peak\": " << fmt_g17(peak_to_peak_vals[k]);
        os << "}";
        if (k + 1 < labels.size()) os << ',';
        os << '\n';
    }
    os << "  ]";
    if (has_window)
        os << ",\n  \"window_mm\": [" << fmt_g17(window_lo_mm) << ", "
           << fmt_g17(window_hi_mm) << "]";
    os << "\n}\n";
    write_text_file(path, os.str());
}

} // namespace oat
