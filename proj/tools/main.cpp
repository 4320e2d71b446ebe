// cortifield command line. The binary links only the public C API of the
// shared library; all pipeline state moves through files.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cortifield.h"

namespace {

int g_log_level = 1; // 0 quiet, 1 info, 2 debug

void log_info(const std::string& msg) {
    if (g_log_level >= 1) std::cerr << "[info] " << msg << "\n";
}
void log_debug(const std::string& msg) {
    if (g_log_level >= 2) std::cerr << "[debug] " << msg << "\n";
}

// Exit codes: 0 ok, 1 usage, 2 data, 3 numeric failure.
int exit_code_of(cf_status s) {
    switch (s) {
        case CF_OK: return 0;
        case CF_ERR_ARG: return 1;
        case CF_ERR_NUMERIC: return 3;
        default: return 2;
    }
}

int fail(cf_status s) {
    std::cerr << "error: " << cf_last_error() << "\n";
    return exit_code_of(s);
}

struct SynthArgs {
    std::string out;
    int cases = 1;
    uint64_t seed = 0;
    cf_synth_params params{};
    std::vector<double> semi_axes, spacing;
    std::vector<int> dims;
};

struct PoolArgs {
    std::string case_dir, repr = "sdf", out;
    cf_pool_params params{};
    double omega_half = 96.0;
};

struct TrainArgs {
    std::vector<std::string> cases;
    std::string repr = "sdf", out, trace, pool_file;
    cf_model_params model{};
    cf_train_params params{};
    double omega_half = 96.0;
    std::vector<int> levels;
    bool no_hypercolumns = false;
};

struct ReconstructArgs {
    std::string ckpt, volume, transform, reference, out, timing_log, face_rule = "consistent";
    int resolution = 128;
};

struct TopofixArgs {
    std::string volume, out;
    double level = 0.0;
};

struct MetricsArgs {
    std::string pred, truth, out;
    bool icp = false;
    int64_t samples = 100000;
    uint64_t seed = 0;
};

struct InfoArgs {
    std::string ckpt, volume, mesh;
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cortifield: implicit-field surface reconstruction from 3D scalar volumes"};
    app.require_subcommand(1);
    app.set_config("--config", "", "flat key=value configuration file; flags override");
    app.allow_config_extras(CLI::config_extras_mode::error);

    int jobs = 0;
    bool strict = false;
    app.add_option("--jobs", jobs, "parallel worker cap (0 = hardware)");
    app.add_option("--log-level", g_log_level, "0 quiet, 1 info, 2 debug")->check(CLI::Range(0, 2));
    app.add_flag("--strict", strict, "escalate numeric warnings (non-convergence) to errors");

    // --- synth ---------------------------------------------------------------
    SynthArgs synth;
    cf_synth_params_init(&synth.params);
    CLI::App* synth_cmd = app.add_subcommand("synth", "generate synthetic cases");
    synth_cmd->add_option("--out", synth.out, "output directory")->required();
    synth_cmd->add_option("--cases", synth.cases, "number of cases")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--seed", synth.seed, "base seed; case i uses seed+i");
    synth_cmd->add_option("--semi-axes", synth.semi_axes, "ellipsoid semi-axes (mm)")->expected(3);
    synth_cmd->add_option("--fold-amplitude", synth.params.fold_amplitude_mm, "fold amplitude (mm)");
    synth_cmd->add_option("--fold-degree", synth.params.fold_max_degree, "max spherical-harmonic degree");
    synth_cmd->add_option("--subdivisions", synth.params.subdivisions, "icosphere subdivisions");
    synth_cmd->add_option("--inner-offset", synth.params.inner_offset_mm, "inner surface offset (mm)");
    synth_cmd->add_option("--gap", synth.params.hemisphere_gap_mm, "hemisphere gap (mm)");
    synth_cmd->add_option("--noise-sigma", synth.params.noise_sigma, "intensity noise sigma");
    synth_cmd->add_option("--dims", synth.dims, "volume dims")->expected(3);
    synth_cmd->add_option("--spacing", synth.spacing, "voxel spacing (mm)")->expected(3);
    synth_cmd->add_option("--perturb-translation", synth.params.transform_translation_mm,
                          "max |translation| of the native-space perturbation (mm)");
    synth_cmd->add_option("--perturb-rotation", synth.params.transform_rotation_deg,
                          "max |rotation| of the native-space perturbation (deg)");

    // --- make-pool ------------------------------------------------------------
    PoolArgs pool;
    cf_pool_params_init(&pool.params);
    CLI::App* pool_cmd = app.add_subcommand("make-pool", "precompute a training sample pool");
    pool_cmd->add_option("--case", pool.case_dir, "case directory")->required();
    pool_cmd->add_option("--repr", pool.repr, "occ or sdf")->check(CLI::IsMember({"occ", "sdf"}));
    pool_cmd->add_option("--size", pool.params.size, "pool size")->check(CLI::PositiveNumber);
    pool_cmd->add_option("--uniform-frac", pool.params.uniform_fraction, "uniform sample fraction");
    pool_cmd->add_option("--sigma", pool.params.sigma_mm, "surface perturbation sigma (mm)");
    pool_cmd->add_option("--seed", pool.params.seed, "pool seed");
    pool_cmd->add_option("--omega-half", pool.omega_half, "template half-extent (mm)");
    pool_cmd->add_option("--out", pool.out, "output path (default CASE/pool_REPR.cfpool)");

    // --- train -----------------------------------------------------------------
    TrainArgs train;
    cf_model_params_init(&train.model);
    cf_train_params_init(&train.params);
    CLI::App* train_cmd = app.add_subcommand("train", "train the implicit field model");
    train_cmd->add_option("--cases", train.cases, "case directories")->required()->expected(-1);
    train_cmd->add_option("--repr", train.repr, "occ or sdf")->check(CLI::IsMember({"occ", "sdf"}));
    train_cmd->add_option("--steps", train.params.max_steps, "training steps")->check(CLI::PositiveNumber);
    train_cmd->add_option("--seed", train.params.seed, "training seed");
    train_cmd->add_option("--out", train.out, "checkpoint output path")->required();
    train_cmd->add_option("--trace", train.trace, "loss trace CSV (default OUT.trace.csv)");
    train_cmd->add_option("--pool-file", train.pool_file, "pool filename inside each case dir");
    train_cmd->add_option("--lr", train.params.lr, "Adam learning rate");
    train_cmd->add_option("--weight-decay", train.params.weight_decay, "decoupled weight decay");
    train_cmd->add_option("--batch-volumes", train.params.batch_volumes, "volumes per step");
    train_cmd->add_option("--batch-points", train.params.batch_points, "points per volume per step");
    train_cmd->add_option("--input-grid", train.model.input_grid, "encoder input resolution");
    train_cmd->add_option("--levels", train.levels, "encoder channels per level")->expected(-1);
    train_cmd->add_option("--global-dim", train.model.global_dim, "global feature width");
    train_cmd->add_flag("--no-hypercolumns", train.no_hypercolumns,
                        "condition the decoder on the global feature only");
    train_cmd->add_option("--width", train.model.decoder_width, "decoder width");
    train_cmd->add_option("--blocks", train.model.decoder_blocks, "decoder residual blocks");
    train_cmd->add_option("--init-seed", train.model.init_seed, "parameter init seed");
    train_cmd->add_option("--omega-half", train.omega_half, "template half-extent (mm)");

    // --- reconstruct ------------------------------------------------------------
    ReconstructArgs rec;
    CLI::App* rec_cmd = app.add_subcommand("reconstruct", "reconstruct surfaces from a volume");
    rec_cmd->add_option("--ckpt", rec.ckpt, "model checkpoint")->required();
    rec_cmd->add_option("--volume", rec.volume, "input volume")->required();
    rec_cmd->add_option("--transform", rec.transform, "native->template transform file (bypasses registration)");
    rec_cmd->add_option("--reference", rec.reference, "template-space volume to register against");
    rec_cmd->add_option("--resolution", rec.resolution, "grid resolution per axis")
        ->check(CLI::Range(8, 2047));
    rec_cmd->add_option("--out", rec.out, "output directory")->required();
    rec_cmd->add_option("--timing-log", rec.timing_log, "stage timing JSON-lines (default OUT/timings.jsonl)");
    rec_cmd->add_option("--face-rule", rec.face_rule, "marching cubes ambiguity rule")
        ->check(CLI::IsMember({"consistent", "asymptotic"}));

    // --- topofix -----------------------------------------------------------------
    TopofixArgs topo;
    CLI::App* topo_cmd = app.add_subcommand("topofix", "genus-zero topology correction of a field volume");
    topo_cmd->add_option("--volume", topo.volume, "input field volume")->required();
    topo_cmd->add_option("--level", topo.level, "level set value")->required();
    topo_cmd->add_option("--out", topo.out, "output volume path")->required();

    // --- metrics --------------------------------------------------------------------
    MetricsArgs met;
    CLI::App* met_cmd = app.add_subcommand("metrics", "compare two surface-set directories");
    met_cmd->add_option("--pred", met.pred, "predicted surfaces directory")->required();
    met_cmd->add_option("--truth", met.truth, "reference surfaces directory")->required();
    met_cmd->add_flag("--icp", met.icp, "rigidly align each prediction to its reference first");
    met_cmd->add_option("--samples", met.samples, "surface samples per direction")->check(CLI::PositiveNumber);
    met_cmd->add_option("--seed", met.seed, "sampling seed");
    met_cmd->add_option("--out", met.out, "report JSON path")->required();

    // --- info ------------------------------------------------------------------------
    InfoArgs info;
    CLI::App* info_cmd = app.add_subcommand("info", "summarize a checkpoint, volume, or mesh");
    auto* opt_ckpt = info_cmd->add_option("--ckpt", info.ckpt, "checkpoint path");
    auto* opt_vol = info_cmd->add_option("--volume", info.volume, "volume path");
    auto* opt_mesh = info_cmd->add_option("--mesh", info.mesh, "mesh path");
    opt_ckpt->excludes(opt_vol)->excludes(opt_mesh);
    opt_vol->excludes(opt_mesh);

    CLI11_PARSE(app, argc, argv);
    cf_set_jobs(jobs);

    if (*synth_cmd) {
        for (int i = 0; i < 3; ++i) {
            if (synth.semi_axes.size() == 3) synth.params.semi_axes[i] = synth.semi_axes[static_cast<size_t>(i)];
            if (synth.spacing.size() == 3) synth.params.spacing[i] = synth.spacing[static_cast<size_t>(i)];
            if (synth.dims.size() == 3) synth.params.dims[i] = synth.dims[static_cast<size_t>(i)];
        }
        std::error_code ec;
        std::filesystem::create_directories(synth.out, ec);
        for (int i = 0; i < synth.cases; ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "case_%03d", i);
            const std::string dir = synth.out + "/" + name;
            std::filesystem::create_directories(dir, ec);
            cf_synth_params p = synth.params;
            p.seed = synth.seed + static_cast<uint64_t>(i);
            log_info("synthesizing " + dir);
            if (cf_status s = cf_synth_case_write(&p, dir.c_str()); s != CF_OK) return fail(s);
        }
        return 0;
    }

    if (*pool_cmd) {
        pool.params.representation = pool.repr == "occ" ? 0 : 1;
        cf_template_space omega;
        cf_template_space_init(&omega);
        for (int i = 0; i < 3; ++i) {
            omega.bbox_min[i] = -pool.omega_half;
            omega.bbox_max[i] = pool.omega_half;
        }
        const std::string out =
            pool.out.empty() ? pool.case_dir + "/pool_" + pool.repr + ".cfpool" : pool.out;
        log_info("building pool " + out);
        if (cf_status s = cf_pool_build(pool.case_dir.c_str(), &omega, &pool.params, out.c_str()); s != CF_OK)
            return fail(s);
        return 0;
    }

    if (*train_cmd) {
        train.model.representation = train.repr == "occ" ? 0 : 1;
        for (int i = 0; i < 3; ++i) {
            train.model.omega.bbox_min[i] = -train.omega_half;
            train.model.omega.bbox_max[i] = train.omega_half;
        }
        if (!train.levels.empty()) {
            if (train.levels.size() > 8) {
                std::cerr << "error: at most 8 encoder levels\n";
                return 1;
            }
            train.model.n_levels = static_cast<int>(train.levels.size());
            for (size_t i = 0; i < train.levels.size(); ++i) train.model.levels[i] = train.levels[i];
        }
        train.model.hypercolumns = train.no_hypercolumns ? 0 : 1;
        const std::string pool_file =
            train.pool_file.empty() ? "pool_" + train.repr + ".cfpool" : train.pool_file;
        const std::string trace = train.trace.empty() ? train.out + ".trace.csv" : train.trace;
        std::vector<const char*> dirs;
        for (const std::string& d : train.cases) dirs.push_back(d.c_str());
        log_info("training on " + std::to_string(dirs.size()) + " case(s)");
        if (cf_status s = cf_train(&train.model, &train.params, dirs.data(), static_cast<int>(dirs.size()),
                                   pool_file.c_str(), train.out.c_str(), trace.c_str());
            s != CF_OK)
            return fail(s);
        log_info("checkpoint written to " + train.out);
        return 0;
    }

    if (*rec_cmd) {
        std::error_code ec;
        std::filesystem::create_directories(rec.out, ec);
        cf_stage_seconds timings{};
        log_info("reconstructing at " + std::to_string(rec.resolution) + "^3");
        const cf_status s = cf_reconstruct(
            rec.ckpt.c_str(), rec.volume.c_str(), rec.transform.empty() ? nullptr : rec.transform.c_str(),
            rec.reference.empty() ? nullptr : rec.reference.c_str(), rec.resolution,
            rec.face_rule == "asymptotic" ? 1 : 0, strict ? 1 : 0, rec.out.c_str(), &timings);
        if (s != CF_OK) return fail(s);
        const std::string tpath = rec.timing_log.empty() ? rec.out + "/timings.jsonl" : rec.timing_log;
        std::ofstream tf(tpath);
        tf << nlohmann::json{{"stage", "registration"}, {"seconds", timings.registration}}.dump() << "\n"
           << nlohmann::json{{"stage", "implicit_prediction"}, {"seconds", timings.implicit_prediction}}.dump()
           << "\n"
           << nlohmann::json{{"stage", "topology_correction"}, {"seconds", timings.topology_correction}}.dump()
           << "\n"
           << nlohmann::json{{"stage", "marching_cubes"}, {"seconds", timings.marching_cubes}}.dump() << "\n";
        log_debug("timings written to " + tpath);
        return 0;
    }

    if (*topo_cmd) {
        if (cf_status s = cf_topology_correct_file(topo.volume.c_str(), topo.level, topo.out.c_str());
            s != CF_OK)
            return fail(s);
        return 0;
    }

    if (*met_cmd) {
        char* json = nullptr;
        const cf_status s = cf_metrics_report(met.pred.c_str(), met.truth.c_str(), met.icp ? 1 : 0,
                                              met.samples, met.seed, &json);
        if (s != CF_OK) return fail(s);
        std::ofstream f(met.out);
        if (!f.good()) {
            std::cerr << "error: cannot write " << met.out << "\n";
            cf_string_free(json);
            return 2;
        }
        f << json << "\n";
        cf_string_free(json);
        log_info("report written to " + met.out);
        return 0;
    }

    if (*info_cmd) {
        std::string kind, path;
        if (!info.ckpt.empty()) {
            kind = "ckpt";
            path = info.ckpt;
        } else if (!info.volume.empty()) {
            kind = "volume";
            path = info.volume;
        } else if (!info.mesh.empty()) {
            kind = "mesh";
            path = info.mesh;
        } else {
            std::cerr << "error: info needs one of --ckpt, --volume, --mesh\n";
            return 1;
        }
        char* json = nullptr;
        if (cf_status s = cf_info_json(kind.c_str(), path.c_str(), &json); s != CF_OK) return fail(s);
        const nlohmann::json j = nlohmann::json::parse(json);
        cf_string_free(json);
        if (j["kind"] == "checkpoint") {
            std::cout << "checkpoint " << path << "\n" << j["config"].get<std::string>();
        } else if (j["kind"] == "volume") {
            std::cout << "volume " << path << "\n"
                      << "  dims     " << j["dims"][0] << " x " << j["dims"][1] << " x " << j["dims"][2] << "\n"
                      << "  spacing  " << j["spacing"][0] << " " << j["spacing"][1] << " " << j["spacing"][2]
                      << " mm\n"
                      << "  range    [" << j["min"] << ", " << j["max"] << "], mean " << j["mean"] << "\n";
        } else {
            std::cout << "mesh " << path << "\n"
                      << "  vertices " << j["vertices"] << ", faces " << j["faces"] << "\n"
                      << "  euler characteristic " << j["euler_characteristic"] << ", closed "
                      << (j["closed"].get<bool>() ? "yes" : "no");
            if (j.contains("genus")) std::cout << ", genus " << j["genus"];
            std::cout << "\n";
        }
        return 0;
    }
    return 1;
}
