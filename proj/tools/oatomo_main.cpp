// oatomo: batch front end for the reconstruction library. Subcommands
// phantom / forward / degrade / reconstruct / scan / evaluate share one JSON
// config document; --set key=value applies dotted-path overrides on top.
//
// Exit codes: 0 success, 1 runtime or data error, 2 usage or config error.
// All failures print a single "ERROR: ..." line to stderr.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "oatomo/oatomo.h"

namespace {

using nlohmann::json;

struct CliError {
    int code;
    std::string msg;
};

[[noreturn]] void die(int code, const std::string& msg) { throw CliError{code, msg}; }

void check(oat_status s, int code = 1) {
    if (s != OAT_OK) die(code, oat_last_error());
}

struct ImgDel { void operator()(oat_image* p) const { oat_image_free(p); } };
struct SinDel { void operator()(oat_sinogram* p) const { oat_sinogram_free(p); } };
struct MatDel { void operator()(oat_matrix* p) const { oat_matrix_free(p); } };
struct TfDel { void operator()(oat_tensor_field* p) const { oat_tensor_field_free(p); } };
using ImageH = std::unique_ptr<oat_image, ImgDel>;
using SinoH = std::unique_ptr<oat_sinogram, SinDel>;
using MatrixH = std::unique_ptr<oat_matrix, MatDel>;
using TensorH = std::unique_ptr<oat_tensor_field, TfDel>;

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_text_atomic(const std::string& path, const std::string& body) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f.good()) die(1, "cannot open for writing: " + tmp);
        f << body;
        f.flush();
        if (!f.good()) die(1, "write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) die(1, "rename failed: " + path);
}

/* ------------------------------------------------------------------ */
/* Config document                                                     */

void apply_set(json& cfg, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
        die(2, "--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (...) {
        value = raw; // unquoted strings are taken literally
    }
    json* node = &cfg;
    std::size_t pos = 0;
    while (true) {
        const auto dot = key.find('.', pos);
        const std::string part = key.substr(pos, dot == std::string::npos ? dot : dot - pos);
        if (part.empty()) die(2, "--set key has an empty path segment: " + key);
        if (dot == std::string::npos) {
            (*node)[part] = value;
            break;
        }
        if (!node->contains(part) || !(*node)[part].is_object()) (*node)[part] = json::object();
        node = &(*node)[part];
        pos = dot + 1;
    }
}

json load_config(const std::string& path, const std::vector<std::string>& sets) {
    json cfg = json::object();
    if (!path.empty()) {
        std::ifstream f(path, std::ios::binary);
        if (!f.good()) die(2, "cannot read config file: " + path);
        try {
            f >> cfg;
        } catch (const std::exception& e) {
            die(2, "config is not valid JSON: " + std::string(e.what()));
        }
        if (!cfg.is_object()) die(2, "config root must be a JSON object");
    }
    for (const auto& kv : sets) apply_set(cfg, kv);
    return cfg;
}

const json* find(const json& cfg, const std::string& dotted) {
    const json* node = &cfg;
    std::size_t pos = 0;
    while (true) {
        const auto dot = dotted.find('.', pos);
        const std::string part =
            dotted.substr(pos, dot == std::string::npos ? dot : dot - pos);
        if (!node->is_object() || !node->contains(part)) return nullptr;
        node = &(*node)[part];
        if (dot == std::string::npos) return node;
        pos = dot + 1;
    }
}

double num(const json& cfg, const std::string& key, double dflt) {
    const json* v = find(cfg, key);
    if (!v) return dflt;
    if (!v->is_number()) die(2, "config key '" + key + "' must be a number");
    return v->get<double>();
}

int integer(const json& cfg, const std::string& key, int dflt) {
    const json* v = find(cfg, key);
    if (!v) return dflt;
    if (!v->is_number_integer()) die(2, "config key '" + key + "' must be an integer");
    return v->get<int>();
}

std::uint64_t uinteger(const json& cfg, const std::string& key, std::uint64_t dflt) {
    const json* v = find(cfg, key);
    if (!v) return dflt;
    if (!v->is_number_unsigned() && !v->is_number_integer())
        die(2, "config key '" + key + "' must be an integer");
    return v->get<std::uint64_t>();
}

bool boolean(const json& cfg, const std::string& key, bool dflt) {
    const json* v = find(cfg, key);
    if (!v) return dflt;
    if (!v->is_boolean()) die(2, "config key '" + key + "' must be a boolean");
    return v->get<bool>();
}

std::string str(const json& cfg, const std::string& key, const std::string& dflt) {
    const json* v = find(cfg, key);
    if (!v) return dflt;
    if (!v->is_string()) die(2, "config key '" + key + "' must be a string");
    return v->get<std::string>();
}

/* ------------------------------------------------------------------ */
/* Provenance                                                          */

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct Context {
    json cfg;
    std::vector<std::string> argv;
    int jobs = 1;

    std::string provenance(const json& seeds = json::object()) const {
        json p = {{"command", argv},
                  {"config_digest", "fnv1a:" + hex64(fnv1a(cfg.dump()))}};
        if (!seeds.empty()) p["seeds"] = seeds;
        return p.dump();
    }

    void provenance_sidecar(const std::string& artifact_path,
                            const json& seeds = json::object()) const {
        write_text_atomic(artifact_path + ".provenance.json", provenance(seeds) + "\n");
    }
};

/* ------------------------------------------------------------------ */
/* Geometry and matrix plumbing                                        */

struct GridDims {
    int nx, ny;
    double pixel_mm;
};

GridDims grid_from_config(const json& cfg) {
    GridDims g;
    g.nx = integer(cfg, "grid.nx", 256);
    g.ny = integer(cfg, "grid.ny", 256);
    g.pixel_mm = num(cfg, "grid.pixel_mm", 0.1);
    if (g.nx < 2 || g.ny < 2 || g.pixel_mm <= 0.0) die(2, "invalid grid block");
    return g;
}

oat_geometry geometry_from_config(const json& cfg, const GridDims& grid) {
    oat_geometry g;
    oat_geometry_defaults(&g);
    g.radius_mm = num(cfg, "geometry.radius_mm", g.radius_mm);
    g.arc_deg = num(cfg, "geometry.arc_deg", g.arc_deg);
    g.n_detectors = integer(cfg, "geometry.n_detectors", g.n_detectors);
    g.sound_speed_mm_per_us = num(cfg, "geometry.sound_speed_mm_per_us", g.sound_speed_mm_per_us);
    g.grueneisen = num(cfg, "geometry.grueneisen", g.grueneisen);
    if (const json* fa = find(cfg, "geometry.first_angle_deg")) {
        if (!fa->is_number()) die(2, "geometry.first_angle_deg must be a number");
        g.has_first_angle = 1;
        g.first_angle_deg = fa->get<double>();
    }
    const bool explicit_axis = find(cfg, "geometry.t0_us") && find(cfg, "geometry.dt_us") &&
                               find(cfg, "geometry.n_samples");
    if (explicit_axis) {
        g.t0_us = num(cfg, "geometry.t0_us", 0.0);
        g.dt_us = num(cfg, "geometry.dt_us", 0.0);
        g.n_samples = integer(cfg, "geometry.n_samples", 0);
    } else {
        oat_geometry filled;
        check(oat_default_time_axis(&g, grid.nx, grid.ny, grid.pixel_mm, &filled), 2);
        g = filled;
    }
    return g;
}

std::string matrix_cache_key(const oat_geometry& g, const GridDims& grid, double asf) {
    std::ostringstream os;
    os << "v1|nx=" << grid.nx << "|ny=" << grid.ny << "|h=" << g17(grid.pixel_mm)
       << "|R=" << g17(g.radius_mm) << "|arc=" << g17(g.arc_deg) << "|nd=" << g.n_detectors
       << "|c=" << g17(g.sound_speed_mm_per_us) << "|G=" << g17(g.grueneisen)
       << "|t0=" << g17(g.t0_us) << "|dt=" << g17(g.dt_us) << "|ns=" << g.n_samples
       << "|fa=" << (g.has_first_angle ? g17(g.first_angle_deg) : std::string("none"))
       << "|asf=" << g17(asf);
    return os.str();
}

std::string cache_dir() {
    const char* env = std::getenv("OATOMO_CACHE");
    return env && *env ? env : "./.oatomo-cache";
}

// Builds the model matrix for (grid, geometry), or reuses the raw matrix
// cached under OATOMO_CACHE. The cache always holds the unnormalized matrix.
MatrixH get_matrix(const oat_geometry& g, const GridDims& grid, double asf, int jobs,
                   bool normalize) {
    const std::uint64_t expect_rows =
        static_cast<std::uint64_t>(g.n_detectors) * static_cast<std::uint64_t>(g.n_samples);
    const std::uint64_t expect_cols =
        static_cast<std::uint64_t>(grid.nx) * static_cast<std::uint64_t>(grid.ny);

    namespace fs = std::filesystem;
    const fs::path dir = cache_dir();
    const fs::path file = dir / ("m_" + hex64(fnv1a(matrix_cache_key(g, grid, asf))) + ".oamm");

    MatrixH m;
    std::error_code ec;
    if (fs::exists(file, ec)) {
        oat_matrix* raw = nullptr;
        if (oat_matrix_load(file.string().c_str(), &raw) == OAT_OK) {
            m.reset(raw);
            std::uint64_t rows = 0, cols = 0;
            check(oat_matrix_shape(m.get(), &rows, &cols));
            if (rows != expect_rows || cols != expect_cols) m.reset(); // stale entry
        }
    }
    if (!m) {
        oat_matrix* raw = nullptr;
        check(oat_build_matrix(&g, grid.nx, grid.ny, grid.pixel_mm, asf, jobs, &raw));
        m.reset(raw);
        fs::create_directories(dir, ec);
        if (!ec) oat_matrix_save(m.get(), file.string().c_str()); // cache miss is not fatal
    }
    if (normalize) check(oat_matrix_normalize(m.get()));
    return m;
}

ImageH read_image_or_die(const std::string& path) {
    oat_image* raw = nullptr;
    check(oat_read_image(path.c_str(), &raw));
    return ImageH(raw);
}

SinoH read_sinogram_or_die(const std::string& path) {
    oat_sinogram* raw = nullptr;
    check(oat_read_sinogram(path.c_str(), &raw));
    return SinoH(raw);
}

/* ------------------------------------------------------------------ */
/* Method dispatch                                                     */

struct MethodSpec {
    std::string name;
    oat_solver_options opts{};
    double atol = 0.0;
    double damp = 0.0;
    double tik_lambda = 0.01;
};

MethodSpec method_from_config(const json& cfg) {
    MethodSpec m;
    m.name = str(cfg, "method.name", "");
    if (m.name != "lsqr" && m.name != "tikhonov" && m.name != "tvl1" && m.name != "a2tv")
        die(2, "unknown method" + (m.name.empty() ? "" : " '" + m.name + "'"));
    oat_solver_options_defaults(&m.opts);
    const int default_iters = (m.name == "lsqr" || m.name == "tikhonov") ? 200 : 3000;
    m.opts.iters = integer(cfg, "method.iters", default_iters);
    m.opts.lambda = num(cfg, "method.lambda", m.opts.lambda);
    m.opts.alpha = num(cfg, "method.alpha", m.opts.alpha);
    m.opts.mu = num(cfg, "method.mu", m.opts.mu);
    m.opts.k = num(cfg, "method.k", m.opts.k);
    m.opts.sigma_px = num(cfg, "method.sigma_px", m.opts.sigma_px);
    m.opts.rho_px = num(cfg, "method.rho_px", m.opts.rho_px);
    m.opts.tensor_update_stride =
        integer(cfg, "method.tensor_update_stride", m.opts.tensor_update_stride);
    m.opts.gamma_factor = num(cfg, "method.gamma_factor", m.opts.gamma_factor);
    m.opts.tau0 = num(cfg, "method.tau0", m.opts.tau0);
    m.opts.L_M = num(cfg, "method.L_M", m.opts.L_M);
    m.opts.L_grad = num(cfg, "method.L_grad", m.opts.L_grad);
    m.opts.extrapolation = boolean(cfg, "method.extrapolation", m.opts.extrapolation != 0);
    m.opts.trace_stride = integer(cfg, "method.trace_stride", m.opts.trace_stride);
    m.opts.levels = integer(cfg, "method.levels", m.opts.levels);
    m.atol = num(cfg, "method.atol", m.atol);
    m.damp = num(cfg, "method.damp", m.damp);
    m.tik_lambda = num(cfg, "method.lambda", m.tik_lambda);
    return m;
}

void set_scan_param(MethodSpec& m, const std::string& name, double value) {
    auto as_int = [&](int& dst) { dst = static_cast<int>(value); };
    if (name == "iters") as_int(m.opts.iters);
    else if (name == "lambda") { m.opts.lambda = value; m.tik_lambda = value; }
    else if (name == "alpha") m.opts.alpha = value;
    else if (name == "mu") m.opts.mu = value;
    else if (name == "k") m.opts.k = value;
    else if (name == "sigma_px") m.opts.sigma_px = value;
    else if (name == "rho_px") m.opts.rho_px = value;
    else if (name == "tensor_update_stride") as_int(m.opts.tensor_update_stride);
    else if (name == "gamma_factor") m.opts.gamma_factor = value;
    else if (name == "tau0") m.opts.tau0 = value;
    else if (name == "L_M") m.opts.L_M = value;
    else if (name == "L_grad") m.opts.L_grad = value;
    else if (name == "levels") as_int(m.opts.levels);
    else if (name == "atol") m.atol = value;
    else if (name == "damp") m.damp = value;
    else die(2, "unknown scan parameter '" + name + "'");
}

struct SolveOutput {
    ImageH u;
    std::vector<oat_trace_row> trace;
};

SolveOutput solve_one(const oat_matrix* m, const oat_sinogram* p, const GridDims& grid,
                      const MethodSpec& spec, bool want_trace) {
    SolveOutput out;
    oat_image* raw = nullptr;
    if (spec.name == "lsqr") {
        check(oat_solve_lsqr(m, p, grid.nx, grid.ny, grid.pixel_mm, spec.opts.iters, spec.atol,
                             spec.damp, &raw, nullptr, nullptr));
        out.u.reset(raw);
        return out;
    }
    if (spec.name == "tikhonov") {
        check(oat_solve_tikhonov(m, p, grid.nx, grid.ny, grid.pixel_mm, spec.opts.iters,
                                 spec.tik_lambda, &raw));
        out.u.reset(raw);
        return out;
    }
    oat_solver_options opts = spec.opts;
    if (want_trace && opts.trace_stride == 0) opts.trace_stride = 1;
    oat_trace_row* rows = nullptr;
    size_t n_rows = 0;
    oat_status s;
    if (spec.name == "a2tv")
        s = oat_solve_a2tv(m, p, grid.nx, grid.ny, grid.pixel_mm, &opts, &raw,
                           want_trace ? &rows : nullptr, want_trace ? &n_rows : nullptr);
    else
        s = oat_solve_tvl1(m, p, grid.nx, grid.ny, grid.pixel_mm, &opts, &raw,
                           want_trace ? &rows : nullptr, want_trace ? &n_rows : nullptr);
    check(s);
    out.u.reset(raw);
    if (rows) {
        out.trace.assign(rows, rows + n_rows);
        oat_free_trace(rows);
    }
    return out;
}

void write_trace_csv(const std::string& path, const std::vector<oat_trace_row>& rows) {
    std::ostringstream os;
    os << "iter,fidelity_term,regularizer_term,total,tau,sigma\n";
    for (const auto& r : rows)
        os << r.iter << ',' << g17(r.fidelity) << ',' << g17(r.regularizer) << ','
           << g17(r.total) << ',' << g17(r.tau) << ',' << g17(r.sigma) << '\n';
    write_text_atomic(path, os.str());
}

/* ------------------------------------------------------------------ */
/* Subcommands                                                         */

void cmd_phantom(const Context& ctx, const std::string& out_path) {
    const json& cfg = ctx.cfg;
    oat_phantom_spec spec;
    oat_phantom_spec_defaults(&spec);

    const std::string kind = str(cfg, "phantom.kind", "vessels");
    if (kind == "vessels") spec.kind = OAT_PHANTOM_VESSELS;
    else if (kind == "disk") spec.kind = OAT_PHANTOM_DISK;
    else if (kind == "step") spec.kind = OAT_PHANTOM_STEP;
    else die(2, "unknown phantom kind '" + kind + "'");

    const int grid_nx = integer(cfg, "grid.nx", spec.size);
    spec.size = integer(cfg, "phantom.size", grid_nx);
    spec.pixel_mm = num(cfg, "phantom.pixel_mm", num(cfg, "grid.pixel_mm", spec.pixel_mm));
    spec.seed = uinteger(cfg, "phantom.seed", spec.seed);
    spec.vessel_count = integer(cfg, "phantom.vessel_count", spec.vessel_count);
    spec.width_lo_px = num(cfg, "phantom.width_lo_px", spec.width_lo_px);
    spec.width_hi_px = num(cfg, "phantom.width_hi_px", spec.width_hi_px);
    spec.curvature = num(cfg, "phantom.curvature", spec.curvature);
    spec.disk_radius_frac = num(cfg, "phantom.disk_radius_frac", spec.disk_radius_frac);
    spec.disk_height = num(cfg, "phantom.disk_height", spec.disk_height);
    spec.step_pos_frac = num(cfg, "phantom.step_pos_frac", spec.step_pos_frac);

    oat_image* raw = nullptr;
    check(oat_make_phantom(&spec, &raw), 2);
    ImageH img(raw);
    check(oat_write_image(out_path.c_str(), img.get(),
                          ctx.provenance({{"phantom", spec.seed}}).c_str()));
}

void cmd_forward(const Context& ctx, const std::string& in_path, const std::string& out_path) {
    const json& cfg = ctx.cfg;
    ImageH img = read_image_or_die(in_path);
    GridDims grid{oat_image_nx(img.get()), oat_image_ny(img.get()),
                  oat_image_pixel_mm(img.get())};

    const oat_geometry g = geometry_from_config(cfg, grid);
    const double asf = num(cfg, "forward.arc_step_frac", 0.25);
    const bool normalize = boolean(cfg, "forward.normalize", true);
    MatrixH m = get_matrix(g, grid, asf, ctx.jobs, normalize);

    oat_sinogram* raw = nullptr;
    check(oat_matrix_apply(m.get(), img.get(), &g, &raw));
    SinoH sino(raw);
    check(oat_write_sinogram(out_path.c_str(), sino.get(), ctx.provenance().c_str()));
}

void cmd_degrade(const Context& ctx, const std::string& in_path, const std::string& out_path) {
    const json& cfg = ctx.cfg;
    SinoH sino = read_sinogram_or_die(in_path);
    oat_geometry g;
    check(oat_sinogram_geometry(sino.get(), &g));

    const int n_keep = integer(cfg, "degrade.n_keep", g.n_detectors);
    if (n_keep != g.n_detectors) {
        oat_sinogram* raw = nullptr;
        check(oat_subsample(sino.get(), n_keep, &raw));
        sino.reset(raw);
    }
    const double rel_std = num(cfg, "degrade.rel_std", 0.6);
    const std::uint64_t seed = uinteger(cfg, "degrade.seed", 1);
    if (rel_std != 0.0) {
        oat_sinogram* raw = nullptr;
        check(oat_add_noise(sino.get(), rel_std, seed, &raw));
        sino.reset(raw);
    }
    check(oat_write_sinogram(out_path.c_str(), sino.get(),
                             ctx.provenance({{"degrade", seed}}).c_str()));
}

// The sinogram file is self-describing; a geometry block in the config is
// checked against it on the fields that degradation cannot change.
void check_reconstruct_geometry(const json& cfg, const oat_geometry& file_geom) {
    if (!find(cfg, "geometry")) return;
    const double r = num(cfg, "geometry.radius_mm", file_geom.radius_mm);
    const double c = num(cfg, "geometry.sound_speed_mm_per_us", file_geom.sound_speed_mm_per_us);
    const double gr = num(cfg, "geometry.grueneisen", file_geom.grueneisen);
    if (r != file_geom.radius_mm || c != file_geom.sound_speed_mm_per_us ||
        gr != file_geom.grueneisen)
        die(1, "geometry mismatch between config and sinogram file");
}

void cmd_reconstruct(const Context& ctx, const std::string& in_path, const std::string& out_path,
                     const std::string& trace_path) {
    const json& cfg = ctx.cfg;
    MethodSpec method = method_from_config(cfg);
    SinoH sino = read_sinogram_or_die(in_path);
    oat_geometry g;
    check(oat_sinogram_geometry(sino.get(), &g));
    check_reconstruct_geometry(cfg, g);

    const GridDims grid = grid_from_config(cfg);
    const double asf = num(cfg, "forward.arc_step_frac", 0.25);
    MatrixH m = get_matrix(g, grid, asf, ctx.jobs, true);

    SolveOutput out = solve_one(m.get(), sino.get(), grid, method, !trace_path.empty());
    check(oat_write_image(out_path.c_str(), out.u.get(), ctx.provenance().c_str()));
    if (!trace_path.empty()) {
        write_trace_csv(trace_path, out.trace);
        ctx.provenance_sidecar(trace_path);
    }
}

struct ScanAxis {
    std::string name;
    std::vector<double> values;
};

ScanAxis scan_axis(const json& cfg, const std::string& block) {
    const json* b = find(cfg, block);
    if (!b || !b->is_object()) die(2, "scan config needs block '" + block + "'");
    ScanAxis a;
    a.name = b->value("name", "");
    if (a.name.empty()) die(2, "scan block '" + block + "' needs a parameter name");
    const json* vals = b->contains("values") ? &(*b)["values"] : nullptr;
    if (!vals || !vals->is_array() || vals->empty())
        die(2, "scan block '" + block + "' needs a non-empty values list");
    for (const auto& v : *vals) {
        if (!v.is_number()) die(2, "scan values must be numbers");
        a.values.push_back(v.get<double>());
    }
    return a;
}

void cmd_scan(const Context& ctx, const std::string& in_path, const std::string& ref_path,
              const std::string& montage_path, const std::string& csv_path,
              const std::string& best_path) {
    const json& cfg = ctx.cfg;
    const MethodSpec base = method_from_config(cfg);
    const ScanAxis p1 = scan_axis(cfg, "scan.param1");
    const ScanAxis p2 = scan_axis(cfg, "scan.param2");
    { // reject unknown names before any solve
        MethodSpec probe = base;
        set_scan_param(probe, p1.name, p1.values.front());
        set_scan_param(probe, p2.name, p2.values.front());
    }

    SinoH sino = read_sinogram_or_die(in_path);
    ImageH ref = read_image_or_die(ref_path);
    oat_geometry g;
    check(oat_sinogram_geometry(sino.get(), &g));
    check_reconstruct_geometry(cfg, g);

    const GridDims grid = grid_from_config(cfg);
    const double asf = num(cfg, "forward.arc_step_frac", 0.25);
    MatrixH m = get_matrix(g, grid, asf, ctx.jobs, true);

    const int rows = static_cast<int>(p1.values.size());
    const int cols = static_cast<int>(p2.values.size());
    const int n_tiles = rows * cols;

    std::vector<ImageH> tiles(static_cast<std::size_t>(n_tiles));
    std::vector<double> mads(static_cast<std::size_t>(n_tiles), 0.0);
    std::atomic<int> next{0};
    std::mutex fail_mx;
    std::optional<std::pair<int, std::string>> failure;

    auto worker = [&] {
        while (true) {
            const int t = next.fetch_add(1);
            if (t >= n_tiles) return;
            {
                std::lock_guard<std::mutex> lk(fail_mx);
                if (failure) return;
            }
            try {
                MethodSpec spec = base;
                set_scan_param(spec, p1.name, p1.values[static_cast<std::size_t>(t / cols)]);
                set_scan_param(spec, p2.name, p2.values[static_cast<std::size_t>(t % cols)]);
                SolveOutput out = solve_one(m.get(), sino.get(), grid, spec, false);
                double d = 0.0;
                check(oat_mad(ref.get(), out.u.get(), &d));
                tiles[static_cast<std::size_t>(t)] = std::move(out.u);
                mads[static_cast<std::size_t>(t)] = d;
            } catch (const CliError& e) {
                std::lock_guard<std::mutex> lk(fail_mx);
                if (!failure) failure = {t, e.msg};
            }
        }
    };
    const int n_threads = std::max(1, std::min(ctx.jobs, n_tiles));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    if (failure) {
        const int t = failure->first;
        die(1, "scan tile " + p1.name + "=" + g17(p1.values[static_cast<std::size_t>(t / cols)]) +
                   ", " + p2.name + "=" + g17(p2.values[static_cast<std::size_t>(t % cols)]) +
                   " failed: " + failure->second);
    }

    std::vector<const oat_image*> tile_ptrs;
    std::vector<std::string> labels, annots;
    std::vector<const char*> label_ptrs, annot_ptrs;
    for (int t = 0; t < n_tiles; ++t) {
        const double v1 = p1.values[static_cast<std::size_t>(t / cols)];
        const double v2 = p2.values[static_cast<std::size_t>(t % cols)];
        tile_ptrs.push_back(tiles[static_cast<std::size_t>(t)].get());
        labels.push_back(p1.name + "=" + g17(v1) + ", " + p2.name + "=" + g17(v2));
        json a = {{p1.name, v1}, {p2.name, v2}, {"mad", mads[static_cast<std::size_t>(t)]}};
        annots.push_back(a.dump());
    }
    for (const auto& s : labels) label_ptrs.push_back(s.c_str());
    for (const auto& s : annots) annot_ptrs.push_back(s.c_str());

    oat_pgm_window w;
    oat_pgm_window_defaults(&w);
    check(oat_export_montage(tile_ptrs.data(), label_ptrs.data(), annot_ptrs.data(),
                             tile_ptrs.size(), rows, cols, montage_path.c_str(), &w));
    ctx.provenance_sidecar(montage_path);

    std::vector<int> order(static_cast<std::size_t>(n_tiles));
    for (int t = 0; t < n_tiles; ++t) order[static_cast<std::size_t>(t)] = t;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return mads[static_cast<std::size_t>(a)] <
                                                mads[static_cast<std::size_t>(b)]; });
    std::ostringstream os;
    os << p1.name << ',' << p2.name << ",mad\n";
    for (int t : order)
        os << g17(p1.values[static_cast<std::size_t>(t / cols)]) << ','
           << g17(p2.values[static_cast<std::size_t>(t % cols)]) << ','
           << g17(mads[static_cast<std::size_t>(t)]) << '\n';
    write_text_atomic(csv_path, os.str());
    ctx.provenance_sidecar(csv_path);

    const int best = order.front();
    std::cout << "argmin: " << p1.name << '=' << g17(p1.values[static_cast<std::size_t>(best / cols)])
              << ' ' << p2.name << '=' << g17(p2.values[static_cast<std::size_t>(best % cols)])
              << " mad=" << g17(mads[static_cast<std::size_t>(best)]) << '\n';
    if (!best_path.empty())
        check(oat_write_image(best_path.c_str(), tiles[static_cast<std::size_t>(best)].get(),
                              ctx.provenance().c_str()));
}

void cmd_evaluate(const Context& ctx, const std::string& ref_path,
                  const std::vector<std::string>& in_paths, std::vector<std::string> labels,
                  const std::string& json_path, const std::string& csv_path) {
    const json& cfg = ctx.cfg;
    if (in_paths.empty()) die(2, "evaluate needs at least one --in image");
    if (!labels.empty() && labels.size() != in_paths.size())
        die(2, "number of --label entries must match --in entries");
    if (labels.empty())
        for (const auto& p : in_paths)
            labels.push_back(std::filesystem::path(p).stem().string());

    ImageH ref = read_image_or_die(ref_path);
    std::vector<ImageH> imgs;
    for (const auto& p : in_paths) imgs.push_back(read_image_or_die(p));

    std::vector<double> mads;
    for (const auto& im : imgs) {
        double d = 0.0;
        check(oat_mad(ref.get(), im.get(), &d));
        mads.push_back(d);
    }

    const json* slice_cfg = find(cfg, "evaluate.slice");
    const json* window_cfg = find(cfg, "evaluate.window_mm");
    double win_lo = 0.0, win_hi = 0.0;
    if (window_cfg) {
        if (!window_cfg->is_array() || window_cfg->size() != 2)
            die(2, "evaluate.window_mm must be [lo, hi]");
        win_lo = (*window_cfg)[0].get<double>();
        win_hi = (*window_cfg)[1].get<double>();
    }

    struct SliceData {
        std::vector<double> pos, val;
    };
    std::vector<SliceData> slices; // reference first, then inputs
    std::vector<double> p2p;
    if (slice_cfg || window_cfg) {
        const std::string axis_s = str(cfg, "evaluate.slice.axis", "row");
        int axis;
        if (axis_s == "row") axis = OAT_SLICE_ROW;
        else if (axis_s == "column" || axis_s == "col") axis = OAT_SLICE_COLUMN;
        else die(2, "evaluate.slice.axis must be row or column");
        const int index = integer(cfg, "evaluate.slice.index", oat_image_ny(ref.get()) / 2);
        const bool normalize = boolean(cfg, "evaluate.slice.normalize", false);

        auto take_slice = [&](const oat_image* im) {
            double* pos = nullptr;
            double* val = nullptr;
            size_t n = 0;
            check(oat_profile_slice(im, axis, index, normalize ? 1 : 0, &pos, &val, &n));
            SliceData s;
            s.pos.assign(pos, pos + n);
            s.val.assign(val, val + n);
            oat_free_doubles(pos);
            oat_free_doubles(val);
            return s;
        };
        slices.push_back(take_slice(ref.get()));
        for (const auto& im : imgs) slices.push_back(take_slice(im.get()));
        if (window_cfg) {
            for (std::size_t s = 1; s < slices.size(); ++s) {
                double v = 0.0;
                check(oat_peak_to_peak(slices[s].pos.data(), slices[s].val.data(),
                                       slices[s].pos.size(), win_lo, win_hi, &v));
                p2p.push_back(v);
            }
        }
    }

    json report;
    json metrics = json::array();
    for (std::size_t i = 0; i < in_paths.size(); ++i) {
        json e = {{"label", labels[i]}, {"mad", mads[i]}};
        if (!p2p.empty()) e["peak_to_peak"] = p2p[i];
        metrics.push_back(std::move(e));
    }
    report["metrics"] = std::move(metrics);
    if (window_cfg) report["window_mm"] = {win_lo, win_hi};
    write_text_atomic(json_path, report.dump(2) + "\n");
    ctx.provenance_sidecar(json_path);

    if (!csv_path.empty()) {
        if (slices.empty()) die(2, "evaluate --out-csv needs an evaluate.slice block");
        std::ostringstream os;
        os << "position_mm,reference";
        for (const auto& l : labels) os << ',' << l;
        os << '\n';
        for (std::size_t i = 0; i < slices.front().pos.size(); ++i) {
            os << g17(slices.front().pos[i]);
            for (const auto& s : slices) os << ',' << g17(s.val[i]);
            os << '\n';
        }
        write_text_atomic(csv_path, os.str());
        ctx.provenance_sidecar(csv_path);
    }
}

std::string one_line(std::string s) {
    for (char& c : s)
        if (c == '\n' || c == '\r') c = ' ';
    return s;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"oatomo: model-based optoacoustic tomography toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    int jobs = 1;
    std::string in_path, out_path, trace_path, ref_path;
    std::string montage_path, csv_path, best_path, json_path;
    std::vector<std::string> in_paths, labels;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_option("--set", overrides, "dotted-path override key=value")
            ->take_all();
        sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    };

    CLI::App* c_phantom = app.add_subcommand("phantom", "generate a phantom image");
    add_common(c_phantom);
    c_phantom->add_option("--out", out_path, "output .img path")->required();

    CLI::App* c_forward = app.add_subcommand("forward", "simulate detector signals");
    add_common(c_forward);
    c_forward->add_option("--in", in_path, "input image")->required();
    c_forward->add_option("--out", out_path, "output sinogram")->required();

    CLI::App* c_degrade = app.add_subcommand("degrade", "subsample and add noise");
    add_common(c_degrade);
    c_degrade->add_option("--in", in_path, "input sinogram")->required();
    c_degrade->add_option("--out", out_path, "output sinogram")->required();

    CLI::App* c_recon = app.add_subcommand("reconstruct", "solve for the image");
    add_common(c_recon);
    c_recon->add_option("--in", in_path, "input sinogram")->required();
    c_recon->add_option("--out", out_path, "output image")->required();
    c_recon->add_option("--trace", trace_path, "energy trace CSV");

    CLI::App* c_scan = app.add_subcommand("scan", "parameter grid of reconstructions");
    add_common(c_scan);
    c_scan->add_option("--in", in_path, "input sinogram")->required();
    c_scan->add_option("--reference", ref_path, "reference image for MAD")->required();
    c_scan->add_option("--out-montage", montage_path, "montage PGM")->required();
    c_scan->add_option("--out-csv", csv_path, "CSV sorted by MAD")->required();
    c_scan->add_option("--out-best", best_path, "write the argmin reconstruction");

    CLI::App* c_eval = app.add_subcommand("evaluate", "compare reconstructions");
    add_common(c_eval);
    c_eval->add_option("--reference", ref_path, "reference image")->required();
    c_eval->add_option("--in", in_paths, "reconstruction image(s)")->required()->take_all();
    c_eval->add_option("--label", labels, "label per --in entry")->take_all();
    c_eval->add_option("--out-json", json_path, "scalar metrics report")->required();
    c_eval->add_option("--out-csv", csv_path, "slice CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "ERROR: " << one_line(e.what()) << "\n";
        return 2;
    }

    try {
        Context ctx;
        ctx.cfg = load_config(config_path, overrides);
        ctx.jobs = jobs;
        for (int i = 0; i < argc; ++i) ctx.argv.emplace_back(argv[i]);

        if (app.got_subcommand(c_phantom)) cmd_phantom(ctx, out_path);
        else if (app.got_subcommand(c_forward)) cmd_forward(ctx, in_path, out_path);
        else if (app.got_subcommand(c_degrade)) cmd_degrade(ctx, in_path, out_path);
        else if (app.got_subcommand(c_recon)) cmd_reconstruct(ctx, in_path, out_path, trace_path);
        else if (app.got_subcommand(c_scan))
            cmd_scan(ctx, in_path, ref_path, montage_path, csv_path, best_path);
        else if (app.got_subcommand(c_eval))
            cmd_evaluate(ctx, ref_path, in_paths, labels, json_path, csv_path);
        return 0;
    } catch (const CliError& e) {
        std::cerr << "ERROR: " << one_line(e.msg) << "\n";
        return e.code;
    } catch (const std::exception& e) {
        std::cerr << "ERROR: " << one_line(e.what()) << "\n";
        return 1;
    }
}
