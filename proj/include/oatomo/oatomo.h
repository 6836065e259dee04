/* oatomo: model-based optoacoustic tomography reconstruction.
 *
 * C interface over the C++ core. All functions return oat_status; on any
 * failure the thread-local message from oat_last_error() describes the
 * problem. Output handles are only valid when the call returned OAT_OK and
 * must be released with the matching oat_*_free function.
 *
 * Handles are independent: functions never retain pointers passed in, and
 * distinct handles may be used concurrently from different threads. Sharing
 * a single handle across threads is safe for read-only use (e.g. one matrix
 * driving several solver calls).
 */
#ifndef OATOMO_H
#define OATOMO_H

#include <stddef.h>
#include <stdint.h>

#if defined(__GNUC__)
#define OATOMO_API __attribute__((visibility("default")))
#else
#define OATOMO_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum oat_status {
    OAT_OK = 0,
    OAT_ERR_INVALID_ARGUMENT = 1,
    OAT_ERR_DIMENSION_MISMATCH = 2,
    OAT_ERR_IO = 3,
    OAT_ERR_NUMERIC = 4,
    OAT_ERR_UNSUPPORTED = 5,
    OAT_ERR_INTERNAL = 6
} oat_status;

/* Message for the most recent failing call on this thread. Never NULL. */
OATOMO_API const char* oat_last_error(void);

OATOMO_API const char* oat_version(void);

typedef struct oat_image oat_image;
typedef struct oat_sinogram oat_sinogram;
typedef struct oat_matrix oat_matrix;
typedef struct oat_tensor_field oat_tensor_field;

/* ------------------------------------------------------------------ */
/* Detection geometry                                                  */

typedef struct oat_geometry {
    double radius_mm;
    double arc_deg;
    int32_t n_detectors;
    double sound_speed_mm_per_us;
    double grueneisen;
    double t0_us;
    double dt_us;
    int32_t n_samples;
    int32_t has_first_angle; /* nonzero: first_angle_deg overrides placement */
    double first_angle_deg;
} oat_geometry;

OATOMO_API void oat_geometry_defaults(oat_geometry* g);

/* Fills t0/dt/n_samples for a grid so every arc reaching the grid is
 * sampled: t0 = (R - D)/c with D the half grid diagonal, dt = pixel/(2c),
 * samples up to (R + D)/c. */
OATOMO_API oat_status oat_default_time_axis(const oat_geometry* in, int32_t nx,
                                            int32_t ny, double pixel_mm,
                                            oat_geometry* out);

/* ------------------------------------------------------------------ */
/* Images and sinograms                                                */

/* values may be NULL for a zero image; otherwise nx*ny doubles row-major. */
OATOMO_API oat_status oat_image_create(int32_t nx, int32_t ny, double pixel_mm,
                                       const double* values, oat_image** out);
OATOMO_API int32_t oat_image_nx(const oat_image* u);
OATOMO_API int32_t oat_image_ny(const oat_image* u);
OATOMO_API double oat_image_pixel_mm(const oat_image* u);
OATOMO_API const double* oat_image_data(const oat_image* u);
OATOMO_API void oat_image_free(oat_image* u);

/* values may be NULL for zeros; otherwise n_detectors*n_samples doubles,
 * detector-major. */
OATOMO_API oat_status oat_sinogram_create(const oat_geometry* g,
                                          const double* values,
                                          oat_sinogram** out);
OATOMO_API oat_status oat_sinogram_geometry(const oat_sinogram* s,
                                            oat_geometry* out);
OATOMO_API const double* oat_sinogram_data(const oat_sinogram* s);
OATOMO_API size_t oat_sinogram_size(const oat_sinogram* s);
OATOMO_API void oat_sinogram_free(oat_sinogram* s);

/* ------------------------------------------------------------------ */
/* Phantoms and degradation                                            */

typedef enum oat_phantom_kind {
    OAT_PHANTOM_VESSELS = 0,
    OAT_PHANTOM_DISK = 1,
    OAT_PHANTOM_STEP = 2
} oat_phantom_kind;

typedef struct oat_phantom_spec {
    int32_t kind; /* oat_phantom_kind */
    int32_t size; /* square grid, >= 16 */
    double pixel_mm;
    uint64_t seed;
    int32_t vessel_count;
    double width_lo_px; /* >= 1 */
    double width_hi_px;
    double curvature;
    double disk_radius_frac;
    double disk_height;
    double step_pos_frac;
} oat_phantom_spec;

OATOMO_API void oat_phantom_spec_defaults(oat_phantom_spec* s);
OATOMO_API oat_status oat_make_phantom(const oat_phantom_spec* s,
                                       oat_image** out);

/* Gaussian noise with std = rel_std * max(values). rel_std 0 copies. */
OATOMO_API oat_status oat_add_noise(const oat_sinogram* s, double rel_std,
                                    uint64_t seed, oat_sinogram** out);

/* Keeps every (n_detectors / n_keep)-th detector starting at index 0 and
 * pins the surviving angles via first_angle_deg. */
OATOMO_API oat_status oat_subsample(const oat_sinogram* s, int32_t n_keep,
                                    oat_sinogram** out);

/* ------------------------------------------------------------------ */
/* Forward model                                                       */

OATOMO_API oat_status oat_build_matrix(const oat_geometry* g, int32_t nx,
                                       int32_t ny, double pixel_mm,
                                       double arc_step_frac, int32_t jobs,
                                       oat_matrix** out);
OATOMO_API oat_status oat_matrix_shape(const oat_matrix* m, uint64_t* rows,
                                       uint64_t* cols);
/* Scales so sqrt(norm_inf * norm_1) == 160. Idempotent. */
OATOMO_API oat_status oat_matrix_normalize(oat_matrix* m);
OATOMO_API oat_status oat_matrix_norm_factor(const oat_matrix* m, double* f);
OATOMO_API oat_status oat_matrix_apply(const oat_matrix* m, const oat_image* u,
                                       const oat_geometry* g,
                                       oat_sinogram** out);
OATOMO_API oat_status oat_matrix_save(const oat_matrix* m, const char* path);
OATOMO_API oat_status oat_matrix_load(const char* path, oat_matrix** out);
OATOMO_API void oat_matrix_free(oat_matrix* m);

/* ------------------------------------------------------------------ */
/* Anisotropy tensor                                                   */

OATOMO_API oat_status oat_build_tensor_field(const oat_image* u,
                                             double sigma_px, double rho_px,
                                             double k, oat_tensor_field** out);
OATOMO_API oat_status oat_write_tensor_field(const char* path,
                                             const oat_tensor_field* a,
                                             const char* provenance_json);
OATOMO_API void oat_tensor_field_free(oat_tensor_field* a);

/* ------------------------------------------------------------------ */
/* Solvers                                                             */

typedef struct oat_solver_options {
    int32_t iters;
    double lambda;
    double alpha;
    double mu;
    double k;
    double sigma_px;
    double rho_px;
    int32_t tensor_update_stride; /* 0 freezes the tensor at identity */
    double gamma_factor;
    double tau0;
    double L_M;
    double L_grad;
    int32_t extrapolation;
    int32_t trace_stride; /* 0 disables the energy trace */
    int32_t levels;       /* wavelet depth for tvl1 */
    int32_t allow_unnormalized;
} oat_solver_options;

OATOMO_API void oat_solver_options_defaults(oat_solver_options* o);

typedef struct oat_trace_row {
    int32_t iter;
    double fidelity;
    double regularizer;
    double total;
    double tau;
    double sigma;
} oat_trace_row;

OATOMO_API void oat_free_trace(oat_trace_row* rows);
OATOMO_API void oat_free_doubles(double* v);

/* residual_norms/n_norms may be NULL when the history is not wanted. */
OATOMO_API oat_status oat_solve_lsqr(const oat_matrix* m,
                                     const oat_sinogram* p, int32_t nx,
                                     int32_t ny, double pixel_mm,
                                     int32_t iters, double atol, double damp,
                                     oat_image** out, double** residual_norms,
                                     size_t* n_norms);
OATOMO_API oat_status oat_solve_tikhonov(const oat_matrix* m,
                                         const oat_sinogram* p, int32_t nx,
                                         int32_t ny, double pixel_mm,
                                         int32_t iters, double lambda,
                                         oat_image** out);

/* trace/n_rows may be NULL when the energy trace is not wanted. */
OATOMO_API oat_status oat_solve_a2tv(const oat_matrix* m,
                                     const oat_sinogram* p, int32_t nx,
                                     int32_t ny, double pixel_mm,
                                     const oat_solver_options* o,
                                     oat_image** out, oat_trace_row** trace,
                                     size_t* n_rows);
OATOMO_API oat_status oat_solve_tvl1(const oat_matrix* m,
                                     const oat_sinogram* p, int32_t nx,
                                     int32_t ny, double pixel_mm,
                                     const oat_solver_options* o,
                                     oat_image** out, oat_trace_row** trace,
                                     size_t* n_rows);

/* ------------------------------------------------------------------ */
/* Metrics                                                             */

OATOMO_API oat_status oat_mad(const oat_image* a, const oat_image* b,
                              double* out);

typedef enum oat_slice_axis {
    OAT_SLICE_ROW = 0,
    OAT_SLICE_COLUMN = 1
} oat_slice_axis;

/* positions/values are allocated together; free both with oat_free_doubles. */
OATOMO_API oat_status oat_profile_slice(const oat_image* u, int32_t axis,
                                        int32_t index, int32_t normalize,
                                        double** positions, double** values,
                                        size_t* n);
OATOMO_API oat_status oat_peak_to_peak(const double* positions,
                                       const double* values, size_t n,
                                       double lo_mm, double hi_mm,
                                       double* out);

/* ------------------------------------------------------------------ */
/* File formats                                                        */

OATOMO_API oat_status oat_write_image(const char* path, const oat_image* u,
                                      const char* provenance_json);
OATOMO_API oat_status oat_read_image(const char* path, oat_image** out);
OATOMO_API oat_status oat_write_sinogram(const char* path,
                                         const oat_sinogram* s,
                                         const char* provenance_json);
OATOMO_API oat_status oat_read_sinogram(const char* path, oat_sinogram** out);

typedef struct oat_pgm_window {
    int32_t automatic; /* nonzero: percentile mode */
    double lo;
    double hi;
    double p_lo;
    double p_hi;
} oat_pgm_window;

OATOMO_API void oat_pgm_window_defaults(oat_pgm_window* w);
OATOMO_API oat_status oat_export_pgm(const oat_image* u, const char* path,
                                     const oat_pgm_window* w);

/* annotations_json[i] may be NULL or a JSON object of numbers merged into
 * the legend entry for tile i. */
OATOMO_API oat_status oat_export_montage(const oat_image* const* tiles,
                                         const char* const* labels,
                                         const char* const* annotations_json,
                                         size_t n_tiles, int32_t rows,
                                         int32_t cols, const char* path,
                                         const oat_pgm_window* w);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* OATOMO_H */
