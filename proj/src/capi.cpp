// C API implementation: thin adapters over the C++ core. Exceptions are
// caught at the boundary and mapped onto coarse status codes; the precise
// error text is kept per thread.
#include "cortifield.h"

#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "cortifield/errors.hpp"
#include "cortifield/implicit.hpp"
#include "cortifield/mesh.hpp"
#include "cortifield/metrics.hpp"
#include "cortifield/nn.hpp"
#include "cortifield/parallel.hpp"
#include "cortifield/reconstruct.hpp"
#include "cortifield/synth.hpp"
#include "cortifield/volume.hpp"

#define CF_EXPORT __attribute__((visibility("default")))

namespace {

thread_local std::string t_last_error;

cf_status status_of(const cf::error& e) {
    switch (e.code()) {
        case cf::errc::io_error:
            return CF_ERR_IO;
        case cf::errc::invalid_argument:
            return CF_ERR_ARG;
        case cf::errc::numeric_error:
        case cf::errc::no_surface:
        case cf::errc::no_overlap:
        case cf::errc::degenerate_transform:
        case cf::errc::degenerate_after_fallbacks:
            return CF_ERR_NUMERIC;
        default:
            return CF_ERR_DATA;
    }
}

template <typename Fn>
cf_status guarded(Fn&& fn) {
    try {
        fn();
        t_last_error.clear();
        return CF_OK;
    } catch (const cf::error& e) {
        t_last_error = e.what();
        return status_of(e);
    } catch (const std::exception& e) {
        t_last_error = e.what();
        return CF_ERR_DATA;
    } catch (...) {
        t_last_error = "unknown error";
        return CF_ERR_DATA;
    }
}

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.data(), s.size() + 1);
    return out;
}

cf::TemplateSpace to_omega(const cf_template_space& t) {
    cf::TemplateSpace o;
    o.bbox_min = {t.bbox_min[0], t.bbox_min[1], t.bbox_min[2]};
    o.bbox_max = {t.bbox_max[0], t.bbox_max[1], t.bbox_max[2]};
    return o;
}

cf::ModelConfig to_model_config(const cf_model_params& p) {
    cf::ModelConfig cfg;
    cfg.repr = p.representation == 0 ? cf::Representation::occ : cf::Representation::sdf;
    cfg.omega = to_omega(p.omega);
    cfg.encoder.input_grid = p.input_grid;
    cfg.encoder.levels.assign(p.levels, p.levels + p.n_levels);
    cfg.encoder.global_dim = p.global_dim;
    cfg.encoder.hypercolumns = p.hypercolumns != 0;
    cfg.decoder.width = p.decoder_width;
    cfg.decoder.blocks = p.decoder_blocks;
    cfg.init_seed = p.init_seed;
    return cfg;
}

} // namespace

struct cf_volume {
    cf::Volume v;
};
struct cf_mesh {
    cf::TriangleMesh m;
};

extern "C" {

CF_EXPORT const char* cf_last_error(void) { return t_last_error.c_str(); }

CF_EXPORT void cf_set_jobs(int jobs) { cf::ThreadPool::global().set_jobs(jobs); }

CF_EXPORT const char* cf_version(void) { return "cortifield 1.0.0"; }

// --- volumes -----------------------------------------------------------------

CF_EXPORT cf_status cf_volume_load(const char* path, cf_volume** out) {
    return guarded([&] {
        cf::require(path && out, cf::errc::invalid_argument, "null argument");
        *out = new cf_volume{cf::load_volume(path)};
    });
}

CF_EXPORT cf_status cf_volume_save(const cf_volume* v, const char* path) {
    return guarded([&] {
        cf::require(v && path, cf::errc::invalid_argument, "null argument");
        cf::save_raw(v->v, path);
    });
}

CF_EXPORT cf_status cf_volume_dims(const cf_volume* v, int dims[3]) {
    return guarded([&] {
        cf::require(v && dims, cf::errc::invalid_argument, "null argument");
        for (int i = 0; i < 3; ++i) dims[i] = v->v.dims[static_cast<size_t>(i)];
    });
}

CF_EXPORT cf_status cf_volume_spacing(const cf_volume* v, double spacing[3]) {
    return guarded([&] {
        cf::require(v && spacing, cf::errc::invalid_argument, "null argument");
        spacing[0] = v->v.spacing.x;
        spacing[1] = v->v.spacing.y;
        spacing[2] = v->v.spacing.z;
    });
}

CF_EXPORT cf_status cf_volume_affine(const cf_volume* v, double m[16]) {
    return guarded([&] {
        cf::require(v && m, cf::errc::invalid_argument, "null argument");
        for (int i = 0; i < 16; ++i) m[i] = v->v.affine.m[static_cast<size_t>(i)];
    });
}

CF_EXPORT cf_status cf_volume_stats(const cf_volume* v, double* vmin, double* vmax, double* mean) {
    return guarded([&] {
        cf::require(v, cf::errc::invalid_argument, "null argument");
        double lo = 0, hi = 0, acc = 0;
        if (!v->v.data.empty()) {
            lo = hi = v->v.data[0];
            for (float f : v->v.data) {
                lo = std::min(lo, double(f));
                hi = std::max(hi, double(f));
                acc += f;
            }
            acc /= double(v->v.data.size());
        }
        if (vmin) *vmin = lo;
        if (vmax) *vmax = hi;
        if (mean) *mean = acc;
    });
}

CF_EXPORT void cf_volume_free(cf_volume* v) { delete v; }

// --- meshes --------------------------------------------------------------------

CF_EXPORT cf_status cf_mesh_load(const char* path, cf_mesh** out) {
    return guarded([&] {
        cf::require(path && out, cf::errc::invalid_argument, "null argument");
        *out = new cf_mesh{cf::load_mesh(path)};
    });
}

CF_EXPORT cf_status cf_mesh_save(const cf_mesh* m, const char* path) {
    return guarded([&] {
        cf::require(m && path, cf::errc::invalid_argument, "null argument");
        cf::save_mesh(m->m, path);
    });
}

CF_EXPORT cf_status cf_mesh_counts(const cf_mesh* m, int64_t* vertices, int64_t* faces) {
    return guarded([&] {
        cf::require(m, cf::errc::invalid_argument, "null argument");
        if (vertices) *vertices = static_cast<int64_t>(m->m.vertices.size());
        if (faces) *faces = static_cast<int64_t>(m->m.faces.size());
    });
}

CF_EXPORT cf_status cf_mesh_euler_characteristic(const cf_mesh* m, int* chi) {
    return guarded([&] {
        cf::require(m && chi, cf::errc::invalid_argument, "null argument");
        *chi = cf::euler_characteristic(m->m);
    });
}

CF_EXPORT cf_status cf_mesh_genus(const cf_mesh* m, int* genus_out) {
    return guarded([&] {
        cf::require(m && genus_out, cf::errc::invalid_argument, "null argument");
        *genus_out = cf::genus(m->m);
    });
}

CF_EXPORT void cf_mesh_free(cf_mesh* m) { delete m; }

// --- transforms --------------------------------------------------------------------

CF_EXPORT cf_status cf_transform_load(const char* path, double m[16]) {
    return guarded([&] {
        cf::require(path && m, cf::errc::invalid_argument, "null argument");
        const cf::Affine t = cf::load_transform(path);
        for (int i = 0; i < 16; ++i) m[i] = t.m[static_cast<size_t>(i)];
    });
}

CF_EXPORT cf_status cf_transform_save(const double m[16], const char* path) {
    return guarded([&] {
        cf::require(path && m, cf::errc::invalid_argument, "null argument");
        cf::Affine t;
        for (int i = 0; i < 16; ++i) t.m[static_cast<size_t>(i)] = m[i];
        cf::save_transform(t, path);
    });
}

// --- defaults -----------------------------------------------------------------------

CF_EXPORT void cf_template_space_init(cf_template_space* t) {
    if (!t) return;
    for (int i = 0; i < 3; ++i) {
        t->bbox_min[i] = -96.0;
        t->bbox_max[i] = 96.0;
    }
}

CF_EXPORT void cf_synth_params_init(cf_synth_params* p) {
    if (!p) return;
    const cf::SynthParams d;
    p->seed = d.seed;
    p->semi_axes[0] = d.semi_axes.x;
    p->semi_axes[1] = d.semi_axes.y;
    p->semi_axes[2] = d.semi_axes.z;
    p->fold_amplitude_mm = d.fold_amplitude_mm;
    p->fold_max_degree = d.fold_max_degree;
    p->subdivisions = d.subdivisions;
    p->inner_offset_mm = d.inner_offset_mm;
    p->hemisphere_gap_mm = d.hemisphere_gap_mm;
    p->noise_sigma = d.noise_sigma;
    for (int i = 0; i < 3; ++i) p->dims[i] = d.dims[static_cast<size_t>(i)];
    p->spacing[0] = d.spacing.x;
    p->spacing[1] = d.spacing.y;
    p->spacing[2] = d.spacing.z;
    p->transform_translation_mm = d.transform_translation_mm;
    p->transform_rotation_deg = d.transform_rotation_deg;
    p->transform_scale_lo = d.transform_scale_lo;
    p->transform_scale_hi = d.transform_scale_hi;
}

CF_EXPORT void cf_pool_params_init(cf_pool_params* p) {
    if (!p) return;
    p->size = 200000;
    p->uniform_fraction = 0.10;
    p->sigma_mm = 1.0;
    p->seed = 0;
    p->representation = 1;
}

CF_EXPORT void cf_model_params_init(cf_model_params* p) {
    if (!p) return;
    p->representation = 1;
    cf_template_space_init(&p->omega);
    p->input_grid = 96;
    p->levels[0] = 32;
    p->levels[1] = 64;
    p->levels[2] = 128;
    p->levels[3] = 128;
    p->n_levels = 4;
    p->global_dim = 160;
    p->hypercolumns = 1;
    p->decoder_width = 256;
    p->decoder_blocks = 5;
    p->init_seed = 0;
}

CF_EXPORT void cf_train_params_init(cf_train_params* p) {
    if (!p) return;
    const cf::TrainingConfig d;
    p->lr = d.lr;
    p->beta1 = d.beta1;
    p->beta2 = d.beta2;
    p->eps = d.eps;
    p->weight_decay = d.weight_decay;
    p->batch_volumes = d.batch_volumes;
    p->batch_points = d.batch_points;
    p->max_steps = d.max_steps;
    p->seed = d.seed;
}

// --- synth ------------------------------------------------------------------------------

CF_EXPORT cf_status cf_synth_case_write(const cf_synth_params* p, const char* out_dir) {
    return guarded([&] {
        cf::require(p && out_dir, cf::errc::invalid_argument, "null argument");
        cf::SynthParams sp;
        sp.seed = p->seed;
        sp.semi_axes = {p->semi_axes[0], p->semi_axes[1], p->semi_axes[2]};
        sp.fold_amplitude_mm = p->fold_amplitude_mm;
        sp.fold_max_degree = p->fold_max_degree;
        sp.subdivisions = p->subdivisions;
        sp.inner_offset_mm = p->inner_offset_mm;
        sp.hemisphere_gap_mm = p->hemisphere_gap_mm;
        sp.noise_sigma = p->noise_sigma;
        sp.dims = {p->dims[0], p->dims[1], p->dims[2]};
        sp.spacing = {p->spacing[0], p->spacing[1], p->spacing[2]};
        sp.transform_translation_mm = p->transform_translation_mm;
        sp.transform_rotation_deg = p->transform_rotation_deg;
        sp.transform_scale_lo = p->transform_scale_lo;
        sp.transform_scale_hi = p->transform_scale_hi;
        cf::synth_write_case(cf::synth_case(sp), out_dir);
    });
}

// --- pools --------------------------------------------------------------------------------

CF_EXPORT cf_status cf_pool_build(const char* case_dir, const cf_template_space* omega,
                                  const cf_pool_params* p, const char* out_path) {
    return guarded([&] {
        cf::require(case_dir && omega && p && out_path, cf::errc::invalid_argument, "null argument");
        const cf::SurfaceSet surfaces = cf::load_surface_set(case_dir);
        const cf::SurfaceSetIndex index(surfaces);
        cf::SamplingConfig cfg;
        cfg.pool_size = p->size;
        cfg.uniform_fraction = p->uniform_fraction;
        cfg.perturbation_sigma_mm = p->sigma_mm;
        cfg.seed = p->seed;
        const cf::Representation repr =
            p->representation == 0 ? cf::Representation::occ : cf::Representation::sdf;
        cf::save_pool(cf::build_pool(index, to_omega(*omega), repr, cfg), out_path);
    });
}

// --- training ---------------------------------------------------------------------------------

CF_EXPORT cf_status cf_train(const cf_model_params* model_params, const cf_train_params* tp,
                             const char* const* case_dirs, int n_cases, const char* pool_filename,
                             const char* ckpt_out, const char* trace_csv) {
    return guarded([&] {
        cf::require(model_params && tp && case_dirs && n_cases > 0 && pool_filename && ckpt_out,
                    cf::errc::invalid_argument, "null argument");
        const cf::ModelConfig cfg = to_model_config(*model_params);
        std::vector<cf::TrainCase> dataset;
        dataset.reserve(static_cast<size_t>(n_cases));
        for (int i = 0; i < n_cases; ++i) {
            const std::string dir = case_dirs[i];
            cf::TrainCase tc;
            const cf::Volume native = cf::load_volume(dir + "/volume.cfvol");
            const cf::Affine to_template = cf::load_transform(dir + "/transform.txt");
            tc.template_volume =
                cf::resample_to_template(native, to_template, cfg.omega, cfg.encoder.input_grid);
            tc.pool = cf::load_pool(dir + "/" + pool_filename);
            dataset.push_back(std::move(tc));
        }
        cf::FieldModel<float> model(cfg);
        cf::AdamOptimizer<float> opt(model.parameters());
        cf::TrainingConfig tc;
        tc.lr = tp->lr;
        tc.beta1 = tp->beta1;
        tc.beta2 = tp->beta2;
        tc.eps = tp->eps;
        tc.weight_decay = tp->weight_decay;
        tc.batch_volumes = tp->batch_volumes;
        tc.batch_points = tp->batch_points;
        tc.max_steps = tp->max_steps;
        tc.seed = tp->seed;
        const cf::TrainResult result = cf::train(model, opt, dataset, tc);
        cf::save_checkpoint<float>(ckpt_out, model, &opt);
        if (trace_csv) {
            std::ofstream f(trace_csv);
            cf::require(f.good(), cf::errc::io_error, std::string("cannot write: ") + trace_csv);
            f << "step,loss\n";
            for (size_t s = 0; s < result.loss_trace.size(); ++s) f << s << "," << result.loss_trace[s] << "\n";
        }
        cf::require(!result.nan_loss, cf::errc::numeric_error, "training loss became NaN");
    });
}

// --- reconstruction -----------------------------------------------------------------------------

CF_EXPORT cf_status cf_reconstruct(const char* ckpt_path, const char* volume_path, const char* transform_path,
                                   const char* reference_path, int resolution, int face_rule, int strict,
                                   const char* out_dir, cf_stage_seconds* timings) {
    return guarded([&] {
        cf::require(ckpt_path && volume_path && out_dir, cf::errc::invalid_argument, "null argument");
        auto loaded = cf::load_checkpoint<float>(ckpt_path);
        const cf::Volume native = cf::load_volume(volume_path);
        cf::ReconstructOptions<float> opts;
        opts.grid.resolution = resolution;
        opts.grid.omega = loaded.model->config().omega;
        opts.face_rule = face_rule == 1 ? cf::McFaceRule::asymptotic : cf::McFaceRule::separate;
        cf::Affine transform;
        cf::Volume reference;
        if (transform_path) {
            transform = cf::load_transform(transform_path);
            opts.native_to_template = &transform;
        } else if (reference_path) {
            reference = cf::load_volume(reference_path);
            opts.reference = &reference;
        }
        const cf::ReconstructionResult result = cf::reconstruct_all(*loaded.model, native, opts);
        cf::require(!strict || result.registration.converged, cf::errc::numeric_error,
                    "registration did not converge (strict mode)");
        cf::save_surface_set(result.native, out_dir);
        if (timings) {
            *timings = {};
            for (const cf::StageTiming& t : result.timings) {
                if (t.stage == "registration") timings->registration = t.seconds;
                if (t.stage == "implicit_prediction") timings->implicit_prediction = t.seconds;
                if (t.stage == "topology_correction") timings->topology_correction = t.seconds;
                if (t.stage == "marching_cubes") timings->marching_cubes = t.seconds;
            }
        }
    });
}

CF_EXPORT cf_status cf_topology_correct_file(const char* volume_in, double level, const char* volume_out) {
    return guarded([&] {
        cf::require(volume_in && volume_out, cf::errc::invalid_argument, "null argument");
        cf::ImplicitVolume iv;
        iv.grid = cf::load_volume(volume_in);
        iv.level = static_cast<float>(level);
        cf::save_raw(cf::topology_correct(iv).grid, volume_out);
    });
}

// --- metrics ---------------------------------------------------------------------------------------

CF_EXPORT cf_status cf_metrics_report(const char* pred_dir, const char* truth_dir, int use_icp,
                                      int64_t samples, uint64_t seed, char** json_out) {
    return guarded([&] {
        cf::require(pred_dir && truth_dir && json_out, cf::errc::invalid_argument, "null argument");
        cf::SurfaceSet pred = cf::load_surface_set(pred_dir);
        const cf::SurfaceSet truth = cf::load_surface_set(truth_dir);

        nlohmann::json report;
        report["seed"] = seed;
        report["samples"] = samples;
        report["icp"] = use_icp != 0;

        for (int ch = 0; ch < 4; ++ch) {
            const char* name = cf::SurfaceSet::channel_name(ch);
            cf::TriangleMesh& p = pred.meshes[static_cast<size_t>(ch)];
            const cf::TriangleMesh& t = truth.meshes[static_cast<size_t>(ch)];
            if (use_icp) {
                cf::IcpConfig icfg;
                icfg.seed = seed;
                const cf::IcpResult icp = cf::icp_rigid(p, t, icfg);
                p = cf::transform_mesh(p, icp.transform);
                report["surfaces"][name]["icp_rms"] = icp.rms;
                report["surfaces"][name]["icp_iterations"] = icp.iterations;
            }
            cf::DiscrepancyConfig dcfg;
            dcfg.samples = samples;
            dcfg.seed = seed;
            const cf::SurfaceDiscrepancy d = cf::surface_discrepancy(p, t, dcfg);
            auto& s = report["surfaces"][name];
            s["ad_mm"] = d.ad_mm;
            s["hd90_mm"] = d.hd90_mm;
            s["median_mm"] = d.median_mm;
            s["pct_over_1mm"] = d.pct_over_1mm;
            s["pct_over_2mm"] = d.pct_over_2mm;
            s["emd"] = d.emd;
            s["sample_count"] = d.sample_count;
        }

        // Ribbon segmentation scores on a common 1 mm grid over the reference.
        cf::Box3 box = truth.meshes[0].bounds();
        for (int ch = 1; ch < 4; ++ch) {
            const cf::Box3 b = truth.meshes[static_cast<size_t>(ch)].bounds();
            box.expand(b.lo);
            box.expand(b.hi);
        }
        const cf::Vec3 lo = box.lo - cf::Vec3{4, 4, 4};
        const cf::Vec3 hi = box.hi + cf::Vec3{4, 4, 4};
        const std::array<int, 3> dims = {static_cast<int>(std::ceil(hi.x - lo.x)) + 1,
                                         static_cast<int>(std::ceil(hi.y - lo.y)) + 1,
                                         static_cast<int>(std::ceil(hi.z - lo.z)) + 1};
        const cf::Affine aff = cf::Affine::translation(lo);
        const cf::Volume ribbon_pred = cf::ribbon_segmentation(pred, dims, {1, 1, 1}, aff);
        const cf::Volume ribbon_truth = cf::ribbon_segmentation(truth, dims, {1, 1, 1}, aff);
        report["segmentation"]["dice"] = cf::dice(ribbon_pred, ribbon_truth);
        report["segmentation"]["volume_similarity"] = cf::volume_similarity(ribbon_pred, ribbon_truth);

        *json_out = dup_string(report.dump(2));
    });
}

// --- info -------------------------------------------------------------------------------------------

CF_EXPORT cf_status cf_info_json(const char* kind, const char* path, char** json_out) {
    return guarded([&] {
        cf::require(kind && path && json_out, cf::errc::invalid_argument, "null argument");
        nlohmann::json j;
        const std::string k = kind;
        if (k == "ckpt") {
            j["kind"] = "checkpoint";
            j["config"] = cf::checkpoint_config_text(path);
        } else if (k == "volume") {
            const cf::Volume v = cf::load_volume(path);
            j["kind"] = "volume";
            j["dims"] = {v.dims[0], v.dims[1], v.dims[2]};
            j["spacing"] = {v.spacing.x, v.spacing.y, v.spacing.z};
            j["affine"] = v.affine.m;
            double lo = v.data.empty() ? 0.0 : v.data[0], hi = lo, acc = 0;
            for (float f : v.data) {
                lo = std::min(lo, double(f));
                hi = std::max(hi, double(f));
                acc += f;
            }
            j["min"] = lo;
            j["max"] = hi;
            j["mean"] = v.data.empty() ? 0.0 : acc / double(v.data.size());
        } else if (k == "mesh") {
            const cf::TriangleMesh m = cf::load_mesh(path);
            j["kind"] = "mesh";
            j["vertices"] = m.vertices.size();
            j["faces"] = m.faces.size();
            j["euler_characteristic"] = cf::euler_characteristic(m);
            j["closed"] = cf::is_closed(m);
            if (cf::is_closed(m)) j["genus"] = cf::genus(m);
            const cf::Box3 b = m.bounds();
            j["bbox_min"] = {b.lo.x, b.lo.y, b.lo.z};
            j["bbox_max"] = {b.hi.x, b.hi.y, b.hi.z};
        } else {
            cf::raise(cf::errc::invalid_argument, "kind must be ckpt, volume, or mesh");
        }
        *json_out = dup_string(j.dump(2));
    });
}

CF_EXPORT void cf_string_free(char* s) { delete[] s; }

} // extern "C"
