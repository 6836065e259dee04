#include "oatomo/oatomo.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "oat/errors.hpp"
#include "oat/forward.hpp"
#include "oat/geometry.hpp"
#include "oat/image.hpp"
#include "oat/imageio.hpp"
#include "oat/metrics.hpp"
#include "oat/ops.hpp"
#include "oat/phantom.hpp"
#include "oat/solvers.hpp"
#include "oat/sparse.hpp"
#include "oat/tensor.hpp"

struct oat_image {
    oat::ImageGrid2D v;
};
struct oat_sinogram {
    oat::Sinogram v;
};
struct oat_matrix {
    oat::SparseModelMatrix v;
};
struct oat_tensor_field {
    oat::TensorField2D v;
};

namespace {

thread_local std::string g_last_error = "ok";

oat_status set_error(oat_status s, const char* msg) {
    g_last_error = msg ? msg : "unknown error";
    return s;
}

oat_status map_errc(oat::errc c) {
    switch (c) {
        case oat::errc::invalid_argument: return OAT_ERR_INVALID_ARGUMENT;
        case oat::errc::dimension_mismatch: return OAT_ERR_DIMENSION_MISMATCH;
        case oat::errc::io_failure: return OAT_ERR_IO;
        case oat::errc::numeric_failure: return OAT_ERR_NUMERIC;
        case oat::errc::unsupported: return OAT_ERR_UNSUPPORTED;
    }
    return OAT_ERR_INTERNAL;
}

template <typename F>
oat_status guarded(F&& f) {
    try {
        f();
        return OAT_OK;
    } catch (const oat::error& e) {
        return set_error(map_errc(e.code()), e.what());
    } catch (const std::bad_alloc&) {
        return set_error(OAT_ERR_NUMERIC, "out of memory");
    } catch (const std::exception& e) {
        return set_error(OAT_ERR_INTERNAL, e.what());
    } catch (...) {
        return set_error(OAT_ERR_INTERNAL, "unknown exception");
    }
}

oat::DetectionGeometry to_cpp(const oat_geometry& g) {
    oat::DetectionGeometry d;
    d.radius_mm = g.radius_mm;
    d.arc_deg = g.arc_deg;
    d.n_detectors = g.n_detectors;
    d.sound_speed_mm_per_us = g.sound_speed_mm_per_us;
    d.grueneisen = g.grueneisen;
    d.t0_us = g.t0_us;
    d.dt_us = g.dt_us;
    d.n_samples = g.n_samples;
    d.has_first_angle = g.has_first_angle != 0;
    d.first_angle_deg = g.first_angle_deg;
    return d;
}

oat_geometry from_cpp(const oat::DetectionGeometry& d) {
    oat_geometry g;
    g.radius_mm = d.radius_mm;
    g.arc_deg = d.arc_deg;
    g.n_detectors = d.n_detectors;
    g.sound_speed_mm_per_us = d.sound_speed_mm_per_us;
    g.grueneisen = d.grueneisen;
    g.t0_us = d.t0_us;
    g.dt_us = d.dt_us;
    g.n_samples = d.n_samples;
    g.has_first_angle = d.has_first_angle ? 1 : 0;
    g.first_angle_deg = d.first_angle_deg;
    return g;
}

void require_arg(bool ok, const char* msg) {
    oat::require(ok, oat::errc::invalid_argument, msg);
}

oat::SolverConfig to_cpp(const oat_solver_options& o) {
    oat::SolverConfig c;
    c.iters = o.iters;
    c.lambda = o.lambda;
    c.alpha = o.alpha;
    c.mu = o.mu;
    c.k = o.k;
    c.sigma_px = o.sigma_px;
    c.rho_px = o.rho_px;
    c.tensor_update_stride = o.tensor_update_stride;
    c.gamma_factor = o.gamma_factor;
    c.tau0 = o.tau0;
    c.L_M = o.L_M;
    c.L_grad = o.L_grad;
    c.extrapolation = o.extrapolation != 0;
    c.trace_stride = o.trace_stride;
    c.levels = o.levels;
    c.allow_unnormalized = o.allow_unnormalized != 0;
    return c;
}

oat_trace_row* copy_trace(const std::vector<oat::TraceRow>& rows) {
    auto* out = new oat_trace_row[rows.size() ? rows.size() : 1];
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out[i].iter = rows[i].iter;
        out[i].fidelity = rows[i].fidelity;
        out[i].regularizer = rows[i].regularizer;
        out[i].total = rows[i].total;
        out[i].tau = rows[i].tau;
        out[i].sigma = rows[i].sigma;
    }
    return out;
}

void emit_trace(const oat::SolveResult& r, oat_trace_row** trace, size_t* n_rows) {
    if (trace && n_rows) {
        *trace = copy_trace(r.trace);
        *n_rows = r.trace.size();
    } else if (trace) {
        *trace = nullptr;
    } else if (n_rows) {
        *n_rows = 0;
    }
}

} // namespace

extern "C" {

const char* oat_last_error(void) { return g_last_error.c_str(); }

const char* oat_version(void) { return "oatomo 1.0.0"; }

void oat_geometry_defaults(oat_geometry* g) {
    if (!g) return;
    *g = oat_geometry{};
    g->radius_mm = 40.0;
    g->arc_deg = 270.0;
    g->n_detectors = 256;
    g->sound_speed_mm_per_us = 1.5;
    g->grueneisen = 1.0;
}

oat_status oat_default_time_axis(const oat_geometry* in, int32_t nx, int32_t ny,
                                 double pixel_mm, oat_geometry* out) {
    return guarded([&] {
        require_arg(in && out, "null geometry pointer");
        oat::ImageGrid2D grid(nx, ny, pixel_mm);
        *out = from_cpp(oat::default_time_axis(to_cpp(*in), grid));
    });
}

oat_status oat_image_create(int32_t nx, int32_t ny, double pixel_mm,
                            const double* values, oat_image** out) {
    return guarded([&] {
        require_arg(out != nullptr, "null output pointer");
        auto u = new oat_image{oat::ImageGrid2D(nx, ny, pixel_mm)};
        if (values)
            std::memcpy(u->v.values.data(), values, u->v.size() * sizeof(double));
        *out = u;
    });
}

int32_t oat_image_nx(const oat_image* u) { return u ? u->v.nx : 0; }
int32_t oat_image_ny(const oat_image* u) { return u ? u->v.ny : 0; }
double oat_image_pixel_mm(const oat_image* u) { return u ? u->v.pixel_mm : 0.0; }
const double* oat_image_data(const oat_image* u) {
    return u ? u->v.values.data() : nullptr;
}
void oat_image_free(oat_image* u) { delete u; }

oat_status oat_sinogram_create(const oat_geometry* g, const double* values,
                               oat_sinogram** out) {
    return guarded([&] {
        require_arg(g && out, "null pointer");
        oat::DetectionGeometry d = to_cpp(*g);
        d.validate();
        auto s = new oat_sinogram{oat::Sinogram(d)};
        if (values)
            std::memcpy(s->v.values.data(), values, s->v.size() * sizeof(double));
        *out = s;
    });
}

oat_status oat_sinogram_geometry(const oat_sinogram* s, oat_geometry* out) {
    return guarded([&] {
        require_arg(s && out, "null pointer");
        *out = from_cpp(s->v.geom);
    });
}

const double* oat_sinogram_data(const oat_sinogram* s) {
    return s ? s->v.values.data() : nullptr;
}
size_t oat_sinogram_size(const oat_sinogram* s) { return s ? s->v.size() : 0; }
void oat_sinogram_free(oat_sinogram* s) { delete s; }

void oat_phantom_spec_defaults(oat_phantom_spec* s) {
    if (!s) return;
    oat::PhantomSpec d;
    s->kind = OAT_PHANTOM_VESSELS;
    s->size = d.size;
    s->pixel_mm = d.pixel_mm;
    s->seed = d.seed;
    s->vessel_count = d.vessel_count;
    s->width_lo_px = d.width_lo_px;
    s->width_hi_px = d.width_hi_px;
    s->curvature = d.curvature;
    s->disk_radius_frac = d.disk_radius_frac;
    s->disk_height = d.disk_height;
    s->step_pos_frac = d.step_pos_frac;
}

oat_status oat_make_phantom(const oat_phantom_spec* s, oat_image** out) {
    return guarded([&] {
        require_arg(s && out, "null pointer");
        oat::PhantomSpec spec;
        switch (s->kind) {
            case OAT_PHANTOM_VESSELS: spec.kind = oat::PhantomSpec::Kind::vessels; break;
            case OAT_PHANTOM_DISK: spec.kind = oat::PhantomSpec::Kind::disk; break;
            case OAT_PHANTOM_STEP: spec.kind = oat::PhantomSpec::Kind::step; break;
            default: require_arg(false, "unknown phantom kind");
        }
        spec.size = s->size;
        spec.pixel_mm = s->pixel_mm;
        spec.seed = s->seed;
        spec.vessel_count = s->vessel_count;
        spec.width_lo_px = s->width_lo_px;
        spec.width_hi_px = s->width_hi_px;
        spec.curvature = s->curvature;
        spec.disk_radius_frac = s->disk_radius_frac;
        spec.disk_height = s->disk_height;
        spec.step_pos_frac = s->step_pos_frac;
        *out = new oat_image{oat::make_phantom(spec)};
    });
}

oat_status oat_add_noise(const oat_sinogram* s, double rel_std, uint64_t seed,
                         oat_sinogram** out) {
    return guarded([&] {
        require_arg(s && out, "null pointer");
        *out = new oat_sinogram{oat::add_gaussian_noise(s->v, rel_std, seed)};
    });
}

oat_status oat_subsample(const oat_sinogram* s, int32_t n_keep,
                         oat_sinogram** out) {
    return guarded([&] {
        require_arg(s && out, "null pointer");
        auto [sub, geom] = oat::subsample_projections(s->v, n_keep);
        (void)geom;
        *out = new oat_sinogram{std::move(sub)};
    });
}

oat_status oat_build_matrix(const oat_geometry* g, int32_t nx, int32_t ny,
                            double pixel_mm, double arc_step_frac, int32_t jobs,
                            oat_matrix** out) {
    return guarded([&] {
        require_arg(g && out, "null pointer");
        oat::ImageGrid2D grid(nx, ny, pixel_mm);
        *out = new oat_matrix{
            oat::build_model_matrix(grid, to_cpp(*g), arc_step_frac, jobs)};
    });
}

oat_status oat_matrix_shape(const oat_matrix* m, uint64_t* rows,
                            uint64_t* cols) {
    return guarded([&] {
        require_arg(m && rows && cols, "null pointer");
        *rows = m->v.csr.n_rows;
        *cols = m->v.csr.n_cols;
    });
}

oat_status oat_matrix_normalize(oat_matrix* m) {
    return guarded([&] {
        require_arg(m != nullptr, "null matrix");
        oat::normalize_matrix(m->v);
    });
}

oat_status oat_matrix_norm_factor(const oat_matrix* m, double* f) {
    return guarded([&] {
        require_arg(m && f, "null pointer");
        *f = m->v.norm_factor;
    });
}

oat_status oat_matrix_apply(const oat_matrix* m, const oat_image* u,
                            const oat_geometry* g, oat_sinogram** out) {
    return guarded([&] {
        require_arg(m && u && g && out, "null pointer");
        oat::DetectionGeometry d = to_cpp(*g);
        d.validate();
        const std::size_t rows = static_cast<std::size_t>(d.n_detectors) * d.n_samples;
        oat::require(rows == m->v.csr.n_rows && u->v.size() == m->v.csr.n_cols,
                     oat::errc::dimension_mismatch,
                     "matrix shape does not match image/geometry");
        auto s = new oat_sinogram{oat::Sinogram(d)};
        try {
            m->v.apply(u->v.values, s->v.values);
        } catch (...) {
            delete s;
            throw;
        }
        *out = s;
    });
}

oat_status oat_matrix_save(const oat_matrix* m, const char* path) {
    return guarded([&] {
        require_arg(m && path, "null pointer");
        oat::save_matrix(m->v, path);
    });
}

oat_status oat_matrix_load(const char* path, oat_matrix** out) {
    return guarded([&] {
        require_arg(path && out, "null pointer");
        *out = new oat_matrix{oat::load_matrix(path)};
    });
}

void oat_matrix_free(oat_matrix* m) { delete m; }

oat_status oat_build_tensor_field(const oat_image* u, double sigma_px,
                                  double rho_px, double k,
                                  oat_tensor_field** out) {
    return guarded([&] {
        require_arg(u && out, "null pointer");
        *out = new oat_tensor_field{oat::build_tensor_field(u->v, sigma_px, rho_px, k)};
    });
}

oat_status oat_write_tensor_field(const char* path, const oat_tensor_field* a,
                                  const char* provenance_json) {
    return guarded([&] {
        require_arg(path && a, "null pointer");
        oat::write_tensor_field(path, a->v, provenance_json ? provenance_json : "");
    });
}

void oat_tensor_field_free(oat_tensor_field* a) { delete a; }

void oat_solver_options_defaults(oat_solver_options* o) {
    if (!o) return;
    oat::SolverConfig d;
    o->iters = d.iters;
    o->lambda = d.lambda;
    o->alpha = d.alpha;
    o->mu = d.mu;
    o->k = d.k;
    o->sigma_px = d.sigma_px;
    o->rho_px = d.rho_px;
    o->tensor_update_stride = d.tensor_update_stride;
    o->gamma_factor = d.gamma_factor;
    o->tau0 = d.tau0;
    o->L_M = d.L_M;
    o->L_grad = d.L_grad;
    o->extrapolation = d.extrapolation ? 1 : 0;
    o->trace_stride = d.trace_stride;
    o->levels = d.levels;
    o->allow_unnormalized = d.allow_unnormalized ? 1 : 0;
}

void oat_free_trace(oat_trace_row* rows) { delete[] rows; }
void oat_free_doubles(double* v) { delete[] v; }

oat_status oat_solve_lsqr(const oat_matrix* m, const oat_sinogram* p,
                          int32_t nx, int32_t ny, double pixel_mm,
                          int32_t iters, double atol, double damp,
                          oat_image** out, double** residual_norms,
                          size_t* n_norms) {
    return guarded([&] {
        require_arg(m && p && out, "null pointer");
        oat::ImageGrid2D shape(nx, ny, pixel_mm);
        oat::SolveResult r = oat::lsqr(m->v, shape, p->v.values, iters, atol, damp);
        if (residual_norms && n_norms) {
            auto* v = new double[r.residual_norms.size() ? r.residual_norms.size() : 1];
            std::memcpy(v, r.residual_norms.data(),
                        r.residual_norms.size() * sizeof(double));
            *residual_norms = v;
            *n_norms = r.residual_norms.size();
        }
        *out = new oat_image{std::move(r.u)};
    });
}

oat_status oat_solve_tikhonov(const oat_matrix* m, const oat_sinogram* p,
                              int32_t nx, int32_t ny, double pixel_mm,
                              int32_t iters, double lambda, oat_image** out) {
    return guarded([&] {
        require_arg(m && p && out, "null pointer");
        oat::ImageGrid2D shape(nx, ny, pixel_mm);
        oat::SolveResult r = oat::tikhonov(m->v, shape, p->v.values, lambda, iters);
        *out = new oat_image{std::move(r.u)};
    });
}

oat_status oat_solve_a2tv(const oat_matrix* m, const oat_sinogram* p,
                          int32_t nx, int32_t ny, double pixel_mm,
                          const oat_solver_options* o, oat_image** out,
                          oat_trace_row** trace, size_t* n_rows) {
    return guarded([&] {
        require_arg(m && p && o && out, "null pointer");
        oat::ImageGrid2D shape(nx, ny, pixel_mm);
        oat::SolveResult r =
            oat::chambolle_pock_a2tv(m->v, shape, p->v.values, to_cpp(*o));
        emit_trace(r, trace, n_rows);
        *out = new oat_image{std::move(r.u)};
    });
}

oat_status oat_solve_tvl1(const oat_matrix* m, const oat_sinogram* p,
                          int32_t nx, int32_t ny, double pixel_mm,
                          const oat_solver_options* o, oat_image** out,
                          oat_trace_row** trace, size_t* n_rows) {
    return guarded([&] {
        require_arg(m && p && o && out, "null pointer");
        oat::ImageGrid2D shape(nx, ny, pixel_mm);
        oat::SolveResult r =
            oat::chambolle_pock_tvl1(m->v, shape, p->v.values, to_cpp(*o));
        emit_trace(r, trace, n_rows);
        *out = new oat_image{std::move(r.u)};
    });
}

oat_status oat_mad(const oat_image* a, const oat_image* b, double* out) {
    return guarded([&] {
        require_arg(a && b && out, "null pointer");
        *out = oat::mad(a->v, b->v);
    });
}

oat_status oat_profile_slice(const oat_image* u, int32_t axis, int32_t index,
                             int32_t normalize, double** positions,
                             double** values, size_t* n) {
    return guarded([&] {
        require_arg(u && positions && values && n, "null pointer");
        require_arg(axis == OAT_SLICE_ROW || axis == OAT_SLICE_COLUMN,
                    "axis must be OAT_SLICE_ROW or OAT_SLICE_COLUMN");
        oat::ProfileSlice s = oat::profile_slice(
            u->v, axis == OAT_SLICE_ROW ? oat::SliceAxis::row : oat::SliceAxis::column,
            index, normalize != 0);
        auto* pos = new double[s.position_mm.size()];
        auto* val = new double[s.value.size()];
        std::memcpy(pos, s.position_mm.data(), s.position_mm.size() * sizeof(double));
        std::memcpy(val, s.value.data(), s.value.size() * sizeof(double));
        *positions = pos;
        *values = val;
        *n = s.value.size();
    });
}

oat_status oat_peak_to_peak(const double* positions, const double* values,
                            size_t n, double lo_mm, double hi_mm, double* out) {
    return guarded([&] {
        require_arg(positions && values && out, "null pointer");
        oat::ProfileSlice s;
        s.axis = oat::SliceAxis::row;
        s.index = 0;
        s.normalized = false;
        s.position_mm.assign(positions, positions + n);
        s.value.assign(values, values + n);
        *out = oat::peak_to_peak(s, lo_mm, hi_mm);
    });
}

oat_status oat_write_image(const char* path, const oat_image* u,
                           const char* provenance_json) {
    return guarded([&] {
        require_arg(path && u, "null pointer");
        oat::write_image(path, u->v, provenance_json ? provenance_json : "");
    });
}

oat_status oat_read_image(const char* path, oat_image** out) {
    return guarded([&] {
        require_arg(path && out, "null pointer");
        *out = new oat_image{oat::read_image(path)};
    });
}

oat_status oat_write_sinogram(const char* path, const oat_sinogram* s,
                              const char* provenance_json) {
    return guarded([&] {
        require_arg(path && s, "null pointer");
        oat::write_sinogram(path, s->v, provenance_json ? provenance_json : "");
    });
}

oat_status oat_read_sinogram(const char* path, oat_sinogram** out) {
    return guarded([&] {
        require_arg(path && out, "null pointer");
        *out = new oat_sinogram{oat::read_sinogram(path)};
    });
}

void oat_pgm_window_defaults(oat_pgm_window* w) {
    if (!w) return;
    oat::PgmWindow d;
    w->automatic = d.automatic ? 1 : 0;
    w->lo = d.lo;
    w->hi = d.hi;
    w->p_lo = d.p_lo;
    w->p_hi = d.p_hi;
}

namespace {

oat::PgmWindow to_cpp(const oat_pgm_window* w) {
    oat::PgmWindow o;
    if (w) {
        o.automatic = w->automatic != 0;
        o.lo = w->lo;
        o.hi = w->hi;
        o.p_lo = w->p_lo;
        o.p_hi = w->p_hi;
    }
    return o;
}

} // namespace

oat_status oat_export_pgm(const oat_image* u, const char* path,
                          const oat_pgm_window* w) {
    return guarded([&] {
        require_arg(u && path, "null pointer");
        oat::export_pgm(u->v, path, to_cpp(w));
    });
}

oat_status oat_export_montage(const oat_image* const* tiles,
                              const char* const* labels,
                              const char* const* annotations_json,
                              size_t n_tiles, int32_t rows, int32_t cols,
                              const char* path, const oat_pgm_window* w) {
    return guarded([&] {
        require_arg(tiles && path, "null pointer");
        std::vector<oat::MontageTile> ts;
        ts.reserve(n_tiles);
        for (size_t i = 0; i < n_tiles; ++i) {
            require_arg(tiles[i] != nullptr, "null tile");
            oat::MontageTile t;
            t.image = tiles[i]->v;
            if (labels && labels[i]) t.label = labels[i];
            if (annotations_json && annotations_json[i]) {
                nlohmann::json j;
                try {
                    j = nlohmann::json::parse(annotations_json[i]);
                } catch (const std::exception& e) {
                    oat::fail(oat::errc::invalid_argument,
                              std::string("bad annotation JSON: ") + e.what());
                }
                oat::require(j.is_object(), oat::errc::invalid_argument,
                             "annotation JSON must be an object");
                for (auto it = j.begin(); it != j.end(); ++it) {
                    oat::require(it.value().is_number(), oat::errc::invalid_argument,
                                 "annotation values must be numbers");
                    t.annotations.emplace_back(it.key(), it.value().get<double>());
                }
            }
            ts.push_back(std::move(t));
        }
        oat::export_montage(ts, rows, cols, path, to_cpp(w));
    });
}

} // extern "C"
