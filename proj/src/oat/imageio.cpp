#include "oat/imageio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <utility>

#include <json.hpp>

#include "oat/errors.hpp"

namespace oat {

static_assert(std::endian::native == std::endian::little,
              "payloads are little-endian; big-endian hosts need byte swaps");

namespace {

using nlohmann::json;

void require_finite(const std::vector<double>& v, const std::string& what) {
    for (double x : v)
        require(std::isfinite(x), errc::invalid_argument,
                what + ": payload contains NaN or Inf");
}

void write_bytes_atomic(const std::string& path, const void* data,
                        std::size_t n) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        require(f.good(), errc::io_failure, "cannot open for writing: " + tmp);
        f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        f.flush();
        require(f.good(), errc::io_failure, "write failed: " + tmp);
    }
    require(std::rename(tmp.c_str(), path.c_str()) == 0, errc::io_failure,
            "rename failed: " + path);
}

std::vector<char> read_all(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    require(f.good(), errc::io_failure, "cannot open: " + path);
    const std::streamsize n = f.tellg();
    f.seekg(0);
    std::vector<char> buf(static_cast<std::size_t>(n));
    if (n > 0) f.read(buf.data(), n);
    require(f.good(), errc::io_failure, "read failed: " + path);
    return buf;
}

json parse_sidecar(const std::string& payload_path) {
    const std::string side = payload_path + ".json";
    std::ifstream f(side, std::ios::binary);
    require(f.good(), errc::io_failure, "missing sidecar: " + side);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        fail(errc::io_failure, "malformed sidecar " + side + ": " + e.what());
    }
    require(j.value("schema_version", -1) == 1, errc::unsupported,
            "unknown schema_version in " + side);
    require(j.value("dtype", "") == "f64le", errc::unsupported,
            "unknown dtype in " + side);
    return j;
}

void write_sidecar(const std::string& payload_path, json j,
                   const std::string& provenance_json) {
    if (!provenance_json.empty()) {
        try {
            j["provenance"] = json::parse(provenance_json);
        } catch (const std::exception& e) {
            fail(errc::invalid_argument,
                 std::string("provenance is not valid JSON: ") + e.what());
        }
    }
    const std::string body = j.dump(2) + "\n";
    write_bytes_atomic(payload_path + ".json", body.data(), body.size());
}

std::vector<double> read_payload(const std::string& path,
                                 std::size_t expected_elems) {
    const std::vector<char> raw = read_all(path);
    const std::size_t expected = expected_elems * sizeof(double);
    require(raw.size() == expected, errc::dimension_mismatch,
            "payload size mismatch in " + path + ": expected " +
                std::to_string(expected) + " bytes, got " +
                std::to_string(raw.size()));
    std::vector<double> out(expected_elems);
    std::copy(raw.begin(), raw.end(), reinterpret_cast<char*>(out.data()));
    return out;
}

} // namespace

void write_image(const std::string& path, const ImageGrid2D& u,
                 const std::string& provenance_json) {
    u.validate();
    require_finite(u.values, "write_image");
    write_bytes_atomic(path, u.values.data(), u.values.size() * sizeof(double));
    json j = {{"schema_version", 1},
              {"kind", "image"},
              {"dtype", "f64le"},
              {"shape", {u.ny, u.nx}},
              {"pixel_mm", u.pixel_mm}};
    write_sidecar(path, std::move(j), provenance_json);
}

ImageGrid2D read_image(const std::string& path) {
    const json j = parse_sidecar(path);
    require(j.value("kind", "") == "image", errc::invalid_argument,
            "sidecar kind is not image: " + path);
    require(j.contains("shape") && j["shape"].is_array() &&
                j["shape"].size() == 2,
            errc::invalid_argument, "bad shape in sidecar: " + path);
    ImageGrid2D u;
    u.ny = j["shape"][0].get<int>();
    u.nx = j["shape"][1].get<int>();
    u.pixel_mm = j.value("pixel_mm", 0.0);
    require(u.nx >= 2 && u.ny >= 2, errc::invalid_argument,
            "bad shape in sidecar: " + path);
    u.values = read_payload(path, u.size());
    u.validate();
    return u;
}

void write_sinogram(const std::string& path, const Sinogram& s,
                    const std::string& provenance_json) {
    s.geom.validate();
    require(s.values.size() == static_cast<std::size_t>(s.geom.n_detectors) *
                                   s.geom.n_samples,
            errc::dimension_mismatch, "sinogram value count mismatch");
    require_finite(s.values, "write_sinogram");
    write_bytes_atomic(path, s.values.data(), s.values.size() * sizeof(double));
    json g = {{"radius_mm", s.geom.radius_mm},
              {"arc_deg", s.geom.arc_deg},
              {"n_detectors", s.geom.n_detectors},
              {"sound_speed_mm_per_us", s.geom.sound_speed_mm_per_us},
              {"grueneisen", s.geom.grueneisen},
              {"t0_us", s.geom.t0_us},
              {"dt_us", s.geom.dt_us},
              {"n_samples", s.geom.n_samples}};
    if (s.geom.has_first_angle) g["first_angle_deg"] = s.geom.first_angle_deg;
    json j = {{"schema_version", 1},
              {"kind", "sinogram"},
              {"dtype", "f64le"},
              {"shape", {s.geom.n_detectors, s.geom.n_samples}},
              {"geometry", std::move(g)}};
    write_sidecar(path, std::move(j), provenance_json);
}

Sinogram read_sinogram(const std::string& path) {
    const json j = parse_sidecar(path);
    require(j.value("kind", "") == "sinogram", errc::invalid_argument,
            "sidecar kind is not sinogram: " + path);
    require(j.contains("geometry") && j["geometry"].is_object(),
            errc::invalid_argument, "missing geometry block: " + path);
    const json& g = j["geometry"];
    DetectionGeometry geom;
    try {
        geom.radius_mm = g.at("radius_mm").get<double>();
        geom.arc_deg = g.at("arc_deg").get<double>();
        geom.n_detectors = g.at("n_detectors").get<int>();
        geom.sound_speed_mm_per_us = g.at("sound_speed_mm_per_us").get<double>();
        geom.grueneisen = g.at("grueneisen").get<double>();
        geom.t0_us = g.at("t0_us").get<double>();
        geom.dt_us = g.at("dt_us").get<double>();
        geom.n_samples = g.at("n_samples").get<int>();
    } catch (const json::exception& e) {
        fail(errc::invalid_argument,
             "incomplete geometry block in " + path + ": " + e.what());
    }
    if (g.contains("first_angle_deg")) {
        geom.has_first_angle = true;
        geom.first_angle_deg = g["first_angle_deg"].get<double>();
    }
    geom.validate();
    require(j.contains("shape") && j["shape"].is_array() &&
                j["shape"].size() == 2 &&
                j["shape"][0].get<int>() == geom.n_detectors &&
                j["shape"][1].get<int>() == geom.n_samples,
            errc::invalid_argument,
            "shape does not match geometry block: " + path);
    Sinogram s;
    s.geom = geom;
    s.values = read_payload(path, static_cast<std::size_t>(geom.n_detectors) *
                                      geom.n_samples);
    return s;
}

void write_tensor_field(const std::string& path, const TensorField2D& a,
                        const std::string& provenance_json) {
    require(a.nx >= 2 && a.ny >= 2 && a.a11.size() == a.size() &&
                a.a12.size() == a.size() && a.a22.size() == a.size(),
            errc::dimension_mismatch, "write_tensor_field: malformed field");
    std::vector<double> interleaved(a.size() * 3);
    for (std::size_t p = 0; p < a.size(); ++p) {
        interleaved[3 * p + 0] = a.a11[p];
        interleaved[3 * p + 1] = a.a12[p];
        interleaved[3 * p + 2] = a.a22[p];
    }
    require_finite(interleaved, "write_tensor_field");
    write_bytes_atomic(path, interleaved.data(),
                       interleaved.size() * sizeof(double));
    json j = {{"schema_version", 1},
              {"kind", "tensor_field"},
              {"dtype", "f64le"},
              {"shape", {a.ny, a.nx, 3}},
              {"sigma_px", a.sigma_px},
              {"rho_px", a.rho_px},
              {"k", a.k},
              {"mu1_avg", a.mu1_avg}};
    write_sidecar(path, std::move(j), provenance_json);
}

namespace {

double percentile_linear(std::vector<double>& sorted, double p) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double idx = p / 100.0 * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(idx));
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = idx - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

std::uint16_t map_u16(double v, double lo, double hi) {
    double t = (v - lo) / (hi - lo);
    t = std::clamp(t, 0.0, 1.0);
    return static_cast<std::uint16_t>(std::llround(t * 65535.0));
}

void write_pgm16(const std::string& path, const std::vector<std::uint16_t>& px,
                 int width, int height) {
    std::string body = "P5\n" + std::to_string(width) + " " +
                       std::to_string(height) + "\n65535\n";
    body.reserve(body.size() + px.size() * 2);
    for (std::uint16_t q : px) {
        body.push_back(static_cast<char>((q >> 8) & 0xff));
        body.push_back(static_cast<char>(q & 0xff));
    }
    write_bytes_atomic(path, body.data(), body.size());
}

} // namespace

void resolve_window(const std::vector<double>& values, const PgmWindow& w,
                    double& lo, double& hi) {
    if (w.automatic) {
        require(!values.empty(), errc::invalid_argument,
                "window from empty value set");
        std::vector<double> sorted = values;
        std::sort(sorted.begin(), sorted.end());
        lo = percentile_linear(sorted, w.p_lo);
        hi = percentile_linear(sorted, w.p_hi);
        if (!(hi > lo)) {
            lo -= 0.5;
            hi += 0.5;
        }
    } else {
        require(w.hi > w.lo, errc::invalid_argument,
                "window requires hi > lo");
        lo = w.lo;
        hi = w.hi;
    }
}

void export_pgm(const ImageGrid2D& u, const std::string& path,
                const PgmWindow& window) {
    u.validate();
    require_finite(u.values, "export_pgm");
    double lo, hi;
    resolve_window(u.values, window, lo, hi);
    std::vector<std::uint16_t> px(u.size());
    for (int j = 0; j < u.ny; ++j)
        for (int i = 0; i < u.nx; ++i)
            px[static_cast<std::size_t>(j) * u.nx + i] = map_u16(u.at(i, j), lo, hi);
    write_pgm16(path, px, u.nx, u.ny);
}

void export_montage(const std::vector<MontageTile>& tiles, int rows, int cols,
                    const std::string& path, const PgmWindow& window) {
    require(!tiles.empty(), errc::invalid_argument, "montage of zero tiles");
    require(rows >= 1 && cols >= 1, errc::invalid_argument,
            "montage layout must be at least 1x1");
    require(tiles.size() == static_cast<std::size_t>(rows) * cols,
            errc::dimension_mismatch,
            "montage tile count does not match rows*cols");
    const int tw = tiles.front().image.nx;
    const int th = tiles.front().image.ny;
    std::vector<double> all;
    for (const auto& t : tiles) {
        t.image.validate();
        require(t.image.nx == tw && t.image.ny == th, errc::dimension_mismatch,
                "montage tiles have inconsistent sizes");
        require_finite(t.image.values, "export_montage");
        all.insert(all.end(), t.image.values.begin(), t.image.values.end());
    }
    double lo, hi;
    resolve_window(all, window, lo, hi);

    constexpr int sep = 2;
    const int width = cols * tw + sep * (cols - 1);
    const int height = rows * th + sep * (rows - 1);
    std::vector<std::uint16_t> px(static_cast<std::size_t>(width) * height, 0);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const ImageGrid2D& im = tiles[static_cast<std::size_t>(r) * cols + c].image;
            const int x0 = c * (tw + sep);
            const int y0 = r * (th + sep);
            for (int j = 0; j < th; ++j)
                for (int i = 0; i < tw; ++i)
                    px[static_cast<std::size_t>(y0 + j) * width + (x0 + i)] =
                        map_u16(im.at(i, j), lo, hi);
        }
    }
    write_pgm16(path, px, width, height);

    json legend = {{"rows", rows},
                   {"cols", cols},
                   {"tile_width", tw},
                   {"tile_height", th},
                   {"separator_px", sep},
                   {"window", {lo, hi}}};
    json jt = json::array();
    for (std::size_t k = 0; k < tiles.size(); ++k) {
        json e = {{"row", static_cast<int>(k) / cols},
                  {"col", static_cast<int>(k) % cols},
                  {"label", tiles[k].label}};
        for (const auto& [key, val] : tiles[k].annotations) e[key] = val;
        jt.push_back(std::move(e));
    }
    legend["tiles"] = std::move(jt);
    const std::string body = legend.dump(2) + "\n";
    write_bytes_atomic(path + ".json", body.data(), body.size());
}

} // namespace oat
