#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthfuse/fusion.hpp"
#include "depthfuse/geometry.hpp"
#include "depthfuse/pfm.hpp"
#include "depthfuse/pipeline.hpp"
#include "depthfuse/scene.hpp"

// Experiment configuration and structured-file I/O: the JSON config schema,
// pose serialization (row-major rotation + translation), injected-view
// loading, and the JSON/CSV reports. Text outputs go through a temp file and
// rename, like the PFM writer.

namespace depthfuse {

class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
  public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Pose / scene JSON

inline json pose_to_json(const Pose& pose) {
    json j;
    std::vector<double> rot;
    rot.reserve(9);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) rot.push_back(pose.rotation(r, c));
    j["rotation"] = rot;  // row-major 3x3
    j["translation"] = {pose.translation.x, pose.translation.y, pose.translation.z};
    return j;
}

inline Pose pose_from_json(const json& j) {
    Pose pose;
    const auto rot = j.at("rotation").get<std::vector<double>>();
    if (rot.size() != 9) throw ConfigError("pose: rotation must hold 9 numbers (row-major)");
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) pose.rotation(r, c) = rot[static_cast<size_t>(r) * 3 + c];
    const auto t = j.at("translation").get<std::vector<double>>();
    if (t.size() != 3) throw ConfigError("pose: translation must hold 3 numbers");
    pose.translation = {t[0], t[1], t[2]};
    if (!pose.valid(1e-9))
        throw ConfigError("pose: rotation is not orthonormal with unit determinant");
    return pose;
}

inline Vec3 vec3_from_json(const json& j, const char* what) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 3) throw ConfigError(std::string(what) + ": expected 3 numbers");
    return {v[0], v[1], v[2]};
}

inline Primitive primitive_from_json(const json& j) {
    Primitive p;
    const std::string type = j.at("type").get<std::string>();
    if (type == "plane") {
        p.kind = Primitive::Kind::Plane;
        p.normal = normalized(vec3_from_json(j.at("normal"), "plane normal"));
        p.offset = j.at("offset").get<double>();
    } else if (type == "sphere") {
        p.kind = Primitive::Kind::Sphere;
        p.center = vec3_from_json(j.at("center"), "sphere center");
        p.radius = j.at("radius").get<double>();
        if (p.radius <= 0.0) throw ConfigError("sphere: radius must be positive");
    } else if (type == "box") {
        p.kind = Primitive::Kind::Box;
        p.center = vec3_from_json(j.at("center"), "box center");
        p.half_extents = vec3_from_json(j.at("half_extents"), "box half_extents");
        if (p.half_extents.x <= 0 || p.half_extents.y <= 0 || p.half_extents.z <= 0)
            throw ConfigError("box: half_extents must be positive");
    } else {
        throw ConfigError("unknown primitive type '" + type + "'");
    }
    p.peak_density = j.at("peak_density").get<double>();
    p.softness = j.at("softness").get<double>();
    if (p.peak_density < 0.0) throw ConfigError("primitive: peak_density must be >= 0");
    if (p.softness <= 0.0) throw ConfigError("primitive: softness must be > 0");
    return p;
}

inline AnalyticScene scene_from_json(const json& j) {
    std::vector<Primitive> prims;
    for (const auto& pj : j.at("primitives")) prims.push_back(primitive_from_json(pj));
    return AnalyticScene(std::move(prims));
}

// ---------------------------------------------------------------------------
// Experiment config

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "out";

    Intrinsics intrinsics;
    Pose base_pose;

    std::optional<AnalyticScene> scene;
    std::optional<std::filesystem::path> injected_views_dir;

    PerturbationSpec perturbation;
    int num_views = 10;
    int num_rendered = 0;  // 0: same as num_views

    SamplingParams sampling;
    FusionConfig fusion;
    CorruptionSpec corruption;
    EvalParams metrics;
};

inline void apply_ablation(FusionConfig& fusion, const std::string& name) {
    if (name == "constant_nerf_variance")
        fusion.constant_nerf_variance = true;
    else if (name == "min_aggregation")
        fusion.min_aggregation = true;
    else if (name == "skip_calibration")
        fusion.skip_calibration = true;
    else if (name == "drop_monocular_prior")
        fusion.drop_monocular_prior = true;
    else
        throw ConfigError("unknown ablation '" + name +
                          "' (expected constant_nerf_variance, min_aggregation, "
                          "skip_calibration, or drop_monocular_prior)");
}

inline ExperimentConfig config_from_json(const json& j,
                                         const std::filesystem::path& base_dir = ".") {
    ExperimentConfig cfg;
    try {
        cfg.seed = j.value("seed", std::uint64_t{0});
        // Outputs resolve against the working directory; inputs named by the
        // config (injected views) resolve against the config's directory.
        if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();

        const auto& cam = j.at("camera");
        const auto& in = cam.at("intrinsics");
        cfg.intrinsics.fx = in.at("fx").get<double>();
        cfg.intrinsics.fy = in.at("fy").get<double>();
        cfg.intrinsics.cx = in.at("cx").get<double>();
        cfg.intrinsics.cy = in.at("cy").get<double>();
        cfg.intrinsics.width = in.at("width").get<int>();
        cfg.intrinsics.height = in.at("height").get<int>();
        if (!cfg.intrinsics.valid())
            throw ConfigError("camera.intrinsics: need fx,fy > 0 and 0 <= cx,cy < image size");
        if (cam.contains("pose")) cfg.base_pose = pose_from_json(cam.at("pose"));

        if (j.contains("scene")) cfg.scene = scene_from_json(j.at("scene"));
        if (j.contains("injected_views_dir")) {
            cfg.injected_views_dir = base_dir / j.at("injected_views_dir").get<std::string>();
            if (!std::filesystem::is_directory(*cfg.injected_views_dir))
                throw ConfigError("injected_views_dir does not exist: " +
                                  cfg.injected_views_dir->string());
        }
        if (!cfg.scene && !cfg.injected_views_dir)
            throw ConfigError("config needs a scene or an injected_views_dir");

        if (j.contains("perturbation")) {
            const auto& p = j.at("perturbation");
            cfg.perturbation.max_rotation_deg = p.value("max_rotation_deg", 0.0);
            cfg.perturbation.max_translation_m = p.value("max_translation_m", 0.0);
            if (cfg.perturbation.max_rotation_deg < 0 || cfg.perturbation.max_translation_m < 0)
                throw ConfigError("perturbation bounds must be non-negative");
        }
        cfg.perturbation.seed = cfg.seed;

        cfg.num_views = j.value("views", 10);
        cfg.num_rendered = j.value("rendered_views", 0);
        if (cfg.num_views < 1) throw ConfigError("views must be >= 1");

        if (j.contains("sampling")) {
            const auto& s = j.at("sampling");
            cfg.sampling.near = s.value("near", cfg.sampling.near);
            cfg.sampling.far = s.value("far", cfg.sampling.far);
            cfg.sampling.samples = s.value("samples", cfg.sampling.samples);
            cfg.sampling.jitter = s.value("jitter", cfg.sampling.jitter);
        }
        if (!(cfg.sampling.near > 0.0) || !(cfg.sampling.far > cfg.sampling.near) ||
            cfg.sampling.samples < 2)
            throw ConfigError("sampling: need 0 < near < far and samples >= 2");

        if (j.contains("fusion")) {
            const auto& f = j.at("fusion");
            cfg.fusion.iterations = f.value("iterations", cfg.fusion.iterations);
            cfg.fusion.variance_floor = f.value("variance_floor", cfg.fusion.variance_floor);
            cfg.fusion.degeneracy_floor =
                f.value("degeneracy_floor", cfg.fusion.degeneracy_floor);
            if (f.contains("fixed_prior_variance"))
                cfg.fusion.fixed_prior_variance = f.at("fixed_prior_variance").get<double>();
            if (f.contains("ablations"))
                for (const auto& name : f.at("ablations"))
                    apply_ablation(cfg.fusion, name.get<std::string>());
        }
        if (cfg.fusion.iterations < 1) throw ConfigError("fusion.iterations must be >= 1");

        if (j.contains("corruption")) {
            const auto& c = j.at("corruption");
            cfg.corruption.blur_sigma_px = c.value("blur_sigma_px", 0.0);
            cfg.corruption.noise_sigma_m = c.value("noise_sigma_m", 0.0);
            cfg.corruption.affine_scale = c.value("affine_scale", 1.0);
            cfg.corruption.affine_shift_m = c.value("affine_shift_m", 0.0);
            if (cfg.corruption.affine_scale <= 0.0)
                throw ConfigError("corruption.affine_scale must be positive");
        }

        if (j.contains("metrics")) {
            const auto& m = j.at("metrics");
            cfg.metrics.grad_threshold = m.value("grad_threshold", 0.0);
            cfg.metrics.grad_threshold_fraction =
                m.value("grad_threshold_fraction", cfg.metrics.grad_threshold_fraction);
            cfg.metrics.match_radius = m.value("match_radius", cfg.metrics.match_radius);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return config_from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Injected views: view_{i}_depth.pfm / view_{i}_var.pfm / view_{i}_pose.json

inline std::vector<RenderedView> load_injected_views(const std::filesystem::path& dir) {
    std::vector<RenderedView> views;
    for (int i = 0;; ++i) {
        const auto depth_path = dir / ("view_" + std::to_string(i) + "_depth.pfm");
        if (!std::filesystem::exists(depth_path)) break;
        const auto var_path = dir / ("view_" + std::to_string(i) + "_var.pfm");
        const auto pose_path = dir / ("view_" + std::to_string(i) + "_pose.json");
        if (!std::filesystem::exists(var_path) || !std::filesystem::exists(pose_path))
            throw IoError("injected view " + std::to_string(i) +
                          " is missing its variance map or pose");
        RenderedView v;
        v.depth = read_pfm(depth_path);
        v.variance = read_pfm(var_path);
        if (!v.depth.same_shape(v.variance))
            throw IoError("injected view " + std::to_string(i) + ": depth/variance shape mismatch");
        std::ifstream pose_in(pose_path);
        if (!pose_in) throw IoError("cannot open " + pose_path.string());
        v.pose = pose_from_json(json::parse(pose_in));
        views.push_back(std::move(v));
    }
    if (views.empty()) throw IoError("no injected views found in " + dir.string());
    return views;
}

inline void save_injected_view(const std::filesystem::path& dir, int index,
                               const RenderedView& view) {
    write_pfm(dir / ("view_" + std::to_string(index) + "_depth.pfm"), view.depth);
    write_pfm(dir / ("view_" + std::to_string(index) + "_var.pfm"), view.variance);
    std::ostringstream oss;
    oss << pose_to_json(view.pose).dump(2) << "\n";
    const auto tmp = dir / ("view_" + std::to_string(index) + "_pose.json.tmp");
    {
        std::ofstream out(tmp);
        out << oss.str();
        if (!out) throw IoError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, dir / ("view_" + std::to_string(index) + "_pose.json"));
}

// ---------------------------------------------------------------------------
// Reports

inline void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out << content;
        if (!out) throw IoError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline json diagnostics_to_json(const std::vector<IterationDiagnostics>& diags) {
    json arr = json::array();
    for (const auto& d : diags) {
        arr.push_back({{"iteration", d.iteration},
                       {"a", d.a},
                       {"b", d.b},
                       {"sigma_o2", d.sigma_o2},
                       {"support_fraction", d.support_fraction},
                       {"hole_fraction", d.hole_fraction},
                       {"degenerate", d.degenerate}});
    }
    return json{{"iterations", arr}};
}

inline json metrics_to_json(const MetricsReport& report) {
    json j{{"mse", report.mse},
           {"edge_sharpness_ratio", report.edge_sharpness_ratio},
           {"edge_f1", report.edge_f1},
           {"grad_threshold", report.grad_threshold},
           {"match_radius", report.match_radius},
           {"pixel_counts",
            {{"mse", report.mse_pixels},
             {"sharpness", report.sharpness_pixels},
             {"correlation", report.correlation_pixels}}}};
    if (report.uncertainty_error_spearman)
        j["uncertainty_error_spearman"] = *report.uncertainty_error_spearman;
    else
        j["uncertainty_error_spearman"] = nullptr;
    return j;
}

inline std::string curve_to_csv(const std::vector<UncertaintyBin>& curve) {
    std::ostringstream oss;
    oss << "percentile,mean_abs_error\n";
    oss.precision(17);
    for (const auto& bin : curve) oss << bin.percentile << "," << bin.mean_abs_error << "\n";
    return oss.str();
}

}  // namespace depthfuse
