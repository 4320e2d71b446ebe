/*
 * cortifield — public C API of the implicit surface reconstruction toolkit.
 *
 * The library reconstructs closed genus-zero surfaces from 3D scalar volumes:
 * it learns an implicit field conditioned on hypercolumn image features, then
 * extracts meshes via topology correction and marching cubes. All heavy state
 * lives behind opaque handles or files; every call returns a cf_status and
 * the last error message is queryable per thread.
 */
#ifndef CORTIFIELD_H
#define CORTIFIELD_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cf_status {
    CF_OK = 0,
    CF_ERR_ARG = 1,     /* bad arguments / configuration */
    CF_ERR_DATA = 2,    /* file or content problems (parse, corrupt, mismatch) */
    CF_ERR_NUMERIC = 3, /* numeric failure (NaN loss, no surface, degenerate) */
    CF_ERR_IO = 4       /* filesystem errors */
} cf_status;

/* Message for the most recent failure on this thread; empty string if none. */
const char* cf_last_error(void);

/* Worker threads for parallel stages; <= 0 selects hardware concurrency. */
void cf_set_jobs(int jobs);

const char* cf_version(void);

/* --- volumes ---------------------------------------------------------------- */

typedef struct cf_volume cf_volume;

/* Reads NIfTI-1 (.nii) or the CFVOL1 raw format (content-sniffed). */
cf_status cf_volume_load(const char* path, cf_volume** out);
/* Writes the CFVOL1 raw format. */
cf_status cf_volume_save(const cf_volume* v, const char* path);
cf_status cf_volume_dims(const cf_volume* v, int dims[3]);
cf_status cf_volume_spacing(const cf_volume* v, double spacing[3]);
/* Voxel-to-world transform, row-major 4x4. */
cf_status cf_volume_affine(const cf_volume* v, double m[16]);
cf_status cf_volume_stats(const cf_volume* v, double* vmin, double* vmax, double* mean);
void cf_volume_free(cf_volume* v);

/* --- meshes ------------------------------------------------------------------ */

typedef struct cf_mesh cf_mesh;

/* OBJ (v/f) or OFF, by content/extension. */
cf_status cf_mesh_load(const char* path, cf_mesh** out);
cf_status cf_mesh_save(const cf_mesh* m, const char* path);
cf_status cf_mesh_counts(const cf_mesh* m, int64_t* vertices, int64_t* faces);
cf_status cf_mesh_euler_characteristic(const cf_mesh* m, int* chi);
/* Fails with CF_ERR_DATA when the mesh is not closed. */
cf_status cf_mesh_genus(const cf_mesh* m, int* genus);
void cf_mesh_free(cf_mesh* m);

/* --- transforms ---------------------------------------------------------------- */

/* 16 whitespace-separated decimals, row-major; last row must be 0 0 0 1. */
cf_status cf_transform_load(const char* path, double m[16]);
cf_status cf_transform_save(const double m[16], const char* path);

/* --- template space -------------------------------------------------------------- */

typedef struct cf_template_space {
    double bbox_min[3];
    double bbox_max[3];
} cf_template_space;

/* Default desk box: [-96, 96]^3 mm. */
void cf_template_space_init(cf_template_space* t);

/* --- synthetic cases --------------------------------------------------------------- */

typedef struct cf_synth_params {
    uint64_t seed;
    double semi_axes[3];
    double fold_amplitude_mm;
    int fold_max_degree;
    int subdivisions;
    double inner_offset_mm;
    double hemisphere_gap_mm;
    double noise_sigma;
    int dims[3];
    double spacing[3];
    double transform_translation_mm;
    double transform_rotation_deg;
    double transform_scale_lo;
    double transform_scale_hi;
} cf_synth_params;

void cf_synth_params_init(cf_synth_params* p);

/* Writes volume.cfvol, transform.txt, {left,right}_{inner,outer}.obj and
 * params.json into out_dir (which must already exist). */
cf_status cf_synth_case_write(const cf_synth_params* p, const char* out_dir);

/* --- sample pools ------------------------------------------------------------------- */

typedef struct cf_pool_params {
    int64_t size;
    double uniform_fraction;
    double sigma_mm;
    uint64_t seed;
    int representation; /* 0 = occ, 1 = sdf */
} cf_pool_params;

void cf_pool_params_init(cf_pool_params* p);

/* Builds the training pool from a case directory's four meshes. */
cf_status cf_pool_build(const char* case_dir, const cf_template_space* omega, const cf_pool_params* p,
                        const char* out_path);

/* --- model + training ------------------------------------------------------------------ */

typedef struct cf_model_params {
    int representation; /* 0 = occ, 1 = sdf */
    cf_template_space omega;
    int input_grid;
    int levels[8];
    int n_levels;
    int global_dim;
    int hypercolumns; /* 0: conditioning is the global feature only */
    int decoder_width;
    int decoder_blocks;
    uint64_t init_seed;
} cf_model_params;

void cf_model_params_init(cf_model_params* p);

typedef struct cf_train_params {
    double lr, beta1, beta2, eps, weight_decay;
    int batch_volumes, batch_points, max_steps;
    uint64_t seed;
} cf_train_params;

void cf_train_params_init(cf_train_params* p);

/* Trains a fresh float model on case directories (each must contain
 * volume.cfvol, transform.txt and the pool file named by pool_filename).
 * Writes the checkpoint and, when trace_csv is non-NULL, a per-step loss
 * trace. Fails with CF_ERR_NUMERIC if the loss becomes NaN. */
cf_status cf_train(const cf_model_params* model, const cf_train_params* tp, const char* const* case_dirs,
                   int n_cases, const char* pool_filename, const char* ckpt_out, const char* trace_csv);

/* --- reconstruction ----------------------------------------------------------------------- */

typedef struct cf_stage_seconds {
    double registration;
    double implicit_prediction;
    double topology_correction;
    double marching_cubes;
} cf_stage_seconds;

/* Full pipeline: register (or accept transform_path / reference_path),
 * evaluate the field at resolution^3, correct topology, extract meshes, map
 * them to native space, and write {hemi}_{boundary}.obj into out_dir.
 * face_rule: 0 = connectivity-consistent (default), 1 = asymptotic decider.
 * strict != 0 turns a non-converged registration into CF_ERR_NUMERIC. */
cf_status cf_reconstruct(const char* ckpt_path, const char* volume_path, const char* transform_path,
                         const char* reference_path, int resolution, int face_rule, int strict,
                         const char* out_dir, cf_stage_seconds* timings);

/* Standalone topology correction of a field volume at the given level. */
cf_status cf_topology_correct_file(const char* volume_in, double level, const char* volume_out);

/* --- metrics -------------------------------------------------------------------------------- */

/* JSON report comparing the four canonical surfaces of two directories:
 * per-surface AD/HD90/%>1mm/%>2mm/EMD, ribbon-segmentation Dice and volume
 * similarity, plus seeds and sample counts. use_icp rigidly aligns each
 * predicted surface to its reference first. Free the string with
 * cf_string_free. */
cf_status cf_metrics_report(const char* pred_dir, const char* truth_dir, int use_icp, int64_t samples,
                            uint64_t seed, char** json_out);

/* --- info ------------------------------------------------------------------------------------- */

/* kind: "ckpt", "volume", or "mesh". JSON summary; free with cf_string_free. */
cf_status cf_info_json(const char* kind, const char* path, char** json_out);

void cf_string_free(char* s);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* CORTIFIELD_H */
