// depthfuse CLI: simulate -> refine -> eval experiment workflow plus a
// one-shot render subcommand for debugging scenes. All outputs are written
// atomically; a fixed seed makes the whole run byte-identical.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "depthfuse/config.hpp"
#include "depthfuse/fusion.hpp"
#include "depthfuse/pfm.hpp"
#include "depthfuse/pipeline.hpp"
#include "depthfuse/volume.hpp"

namespace fs = std::filesystem;
using namespace depthfuse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDegenerate = 4;

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    std::optional<int> iterations;
    std::optional<int> views;
    std::optional<int> samples;
    std::vector<std::string> ablations;
};

ExperimentConfig load_with_overrides(const CommonOptions& opts) {
    ExperimentConfig cfg = load_config(opts.config_path);
    if (opts.seed) {
        cfg.seed = *opts.seed;
        cfg.perturbation.seed = *opts.seed;
    }
    if (opts.output_dir) cfg.output_dir = *opts.output_dir;
    if (opts.iterations) {
        if (*opts.iterations < 1) throw ConfigError("--iterations must be >= 1");
        cfg.fusion.iterations = *opts.iterations;
    }
    if (opts.views) {
        if (*opts.views < 1) throw ConfigError("--views must be >= 1");
        cfg.num_views = *opts.views;
    }
    if (opts.samples) {
        if (*opts.samples < 2) throw ConfigError("--samples must be >= 2");
        cfg.sampling.samples = *opts.samples;
    }
    for (const auto& name : opts.ablations) apply_ablation(cfg.fusion, name);
    return cfg;
}

int cmd_simulate(const CommonOptions& opts) {
    const ExperimentConfig cfg = load_with_overrides(opts);
    if (!cfg.scene) throw ConfigError("simulate requires an analytic scene");
    fs::create_directories(cfg.output_dir);

    const DepthMap gt = render_true_depth(*cfg.scene, cfg.intrinsics, cfg.base_pose,
                                          cfg.sampling.near, cfg.sampling.far);
    if (gt.valid_count() == 0) throw ConfigError("simulate: scene is empty along every ray");
    const DepthMap mono = simulate_monocular(gt, cfg.corruption, cfg.seed);

    write_pfm(cfg.output_dir / "gt_depth.pfm", gt);
    write_pfm(cfg.output_dir / "mono_depth.pfm", mono);
    std::cout << "wrote " << (cfg.output_dir / "gt_depth.pfm").string() << " and "
              << (cfg.output_dir / "mono_depth.pfm").string() << "\n";
    return kExitOk;
}

int cmd_refine(const CommonOptions& opts) {
    const ExperimentConfig cfg = load_with_overrides(opts);
    fs::create_directories(cfg.output_dir);

    const fs::path mono_path = cfg.output_dir / "mono_depth.pfm";
    if (!fs::exists(mono_path))
        throw IoError("missing " + mono_path.string() + " (run simulate first)");
    const DepthMap mono = read_pfm(mono_path);

    std::vector<RenderedView> injected;
    RefineSource source;
    if (cfg.injected_views_dir) {
        injected = load_injected_views(*cfg.injected_views_dir);
        for (const auto& v : injected)
            if (v.depth.width != cfg.intrinsics.width || v.depth.height != cfg.intrinsics.height)
                throw ConfigError("injected view size does not match camera.intrinsics");
        source.injected = injected;
    } else {
        source.field = &*cfg.scene;
    }

    ViewSynthesisParams views{cfg.perturbation, cfg.num_views, cfg.num_rendered};
    const RefineResult result =
        refine(mono, source, cfg.intrinsics, cfg.base_pose, cfg.sampling, views, cfg.fusion,
               cfg.seed);

    write_pfm(cfg.output_dir / "refined_depth.pfm", result.depth);
    write_pfm(cfg.output_dir / "refined_variance.pfm", result.variance);
    write_text_atomic(cfg.output_dir / "diagnostics.json",
                      diagnostics_to_json(result.diagnostics).dump(2) + "\n");

    if (result.all_degenerate()) {
        std::cerr << "refine: calibration degenerate in every iteration\n";
        return kExitDegenerate;
    }
    std::cout << "wrote " << (cfg.output_dir / "refined_depth.pfm").string() << "\n";
    return kExitOk;
}

struct EvalOptions {
    std::string pred, var, gt, baseline;
    std::string output_dir = ".";
    double grad_threshold = 0.0;
    double match_radius = 2.0;
};

int cmd_eval(const EvalOptions& opts) {
    const DepthMap pred = read_pfm(opts.pred);
    const VarianceMap var = read_pfm(opts.var);
    const DepthMap gt = read_pfm(opts.gt);
    const DepthMap baseline = read_pfm(opts.baseline);
    if (!pred.same_shape(gt) || !pred.same_shape(baseline) || !pred.same_shape(var))
        throw ConfigError("eval: input maps have mismatched dimensions");

    EvalParams params;
    params.grad_threshold = opts.grad_threshold;
    params.match_radius = opts.match_radius;
    MetricsReport report;
    try {
        report = evaluate(pred, var, gt, baseline, params);
    } catch (const MetricsError& e) {
        throw ConfigError(std::string("eval: ") + e.what());
    }

    fs::create_directories(opts.output_dir);
    write_text_atomic(fs::path(opts.output_dir) / "metrics.json",
                      metrics_to_json(report).dump(2) + "\n");
    write_text_atomic(fs::path(opts.output_dir) / "curve.csv",
                      curve_to_csv(report.uncertainty_curve));
    std::cout << metrics_to_json(report).dump(2) << "\n";
    return kExitOk;
}

int cmd_render(const CommonOptions& opts, int view_index) {
    const ExperimentConfig cfg = load_with_overrides(opts);
    if (!cfg.scene) throw ConfigError("render requires an analytic scene");
    fs::create_directories(cfg.output_dir);

    Pose pose = cfg.base_pose;
    if (view_index >= 0)
        pose = perturb_pose(cfg.base_pose, cfg.perturbation,
                            static_cast<std::uint64_t>(view_index));
    const RenderResult rr =
        render_depth_map(*cfg.scene, cfg.intrinsics, pose, cfg.sampling, rng_key(cfg.seed, 0, 0));
    write_pfm(cfg.output_dir / "render_depth.pfm", rr.depth);
    write_pfm(cfg.output_dir / "render_var.pfm", rr.variance);
    std::cout << "wrote " << (cfg.output_dir / "render_depth.pfm").string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"depthfuse: Bayesian refinement of monocular depth maps against "
                 "volume-rendered depth with per-pixel uncertainty"};
    app.require_subcommand(1);

    CommonOptions common;
    EvalOptions eval_opts;
    int render_view = -1;

    const auto add_common = [&](CLI::App* sub, bool with_pipeline_flags) {
        sub->add_option("-c,--config", common.config_path, "experiment config (JSON)")
            ->required();
        sub->add_option("--seed", common.seed, "override the global seed");
        sub->add_option("-o,--output-dir", common.output_dir, "override the output directory");
        if (with_pipeline_flags) {
            sub->add_option("--iterations", common.iterations, "refinement iterations");
            sub->add_option("--views", common.views, "synthesized views per iteration");
            sub->add_option("--samples", common.samples, "ray samples per pixel");
            sub->add_option("--ablate", common.ablations,
                            "disable one component (repeatable): constant_nerf_variance, "
                            "min_aggregation, skip_calibration, drop_monocular_prior");
        }
    };

    CLI::App* sim = app.add_subcommand("simulate", "render ground truth and the corrupted "
                                                   "monocular prior");
    add_common(sim, false);

    CLI::App* ref = app.add_subcommand("refine", "run the iterative refinement loop");
    add_common(ref, true);

    CLI::App* ev = app.add_subcommand("eval", "score a prediction against ground truth");
    ev->add_option("--pred", eval_opts.pred, "predicted depth (PFM)")->required();
    ev->add_option("--var", eval_opts.var, "predicted variance (PFM)")->required();
    ev->add_option("--gt", eval_opts.gt, "ground-truth depth (PFM)")->required();
    ev->add_option("--baseline", eval_opts.baseline, "baseline depth for sharpness/F1 (PFM)")
        ->required();
    ev->add_option("-o,--output-dir", eval_opts.output_dir, "where to write metrics.json");
    ev->add_option("--grad-threshold", eval_opts.grad_threshold,
                   "edge gradient threshold (m/px); 0 derives it from the gt range");
    ev->add_option("--match-radius", eval_opts.match_radius, "edge match radius in pixels");

    CLI::App* ren = app.add_subcommand("render", "one-shot depth+variance render of the scene");
    add_common(ren, false);
    ren->add_option("--view", render_view, "render a perturbed view index instead of the base pose");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (sim->parsed()) return cmd_simulate(common);
        if (ref->parsed()) return cmd_refine(common);
        if (ev->parsed()) return cmd_eval(eval_opts);
        if (ren->parsed()) return cmd_render(common, render_view);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const PfmError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
