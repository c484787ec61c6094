#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "depthfuse/config.hpp"
#include "depthfuse/pfm.hpp"
#include "test_util.hpp"

// End-to-end exercises of the installed CLI binary (path injected by the
// build). Each test works in its own scratch directory.

using namespace depthfuse;
namespace fs = std::filesystem;

namespace {

struct Scratch {
    fs::path dir;
    explicit Scratch(const std::string& tag) {
        dir = fs::temp_directory_path() /
              ("depthfuse_cli_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
};

int run(const std::string& args) {
    const std::string cmd = std::string(DEPTHFUSE_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream oss;
    oss << in.rdbuf();
    return oss.str();
}

// A small, fast experiment: wall plus a box at 64x48. Output lands inside
// the scratch directory.
std::string small_config(const fs::path& out_dir, bool with_corruption = true) {
    nlohmann::json j;
    j["seed"] = 1234;
    j["output_dir"] = out_dir.string();
    j["camera"]["intrinsics"] = {{"fx", 30.0}, {"fy", 30.0}, {"cx", 32.0},
                                 {"cy", 24.0}, {"width", 64}, {"height", 48}};
    j["scene"]["primitives"] = {
        {{"type", "plane"}, {"normal", {0, 0, 1}}, {"offset", 4.2},
         {"peak_density", 60.0}, {"softness", 0.25}},
        {{"type", "box"}, {"center", {-0.4, 0.3, 2.9}}, {"half_extents", {0.5, 0.6, 0.3}},
         {"peak_density", 60.0}, {"softness", 0.25}}};
    j["perturbation"] = {{"max_rotation_deg", 1.5}, {"max_translation_m", 0.02}};
    j["views"] = 2;
    j["sampling"] = {{"near", 0.1}, {"far", 9.0}, {"samples", 40}, {"jitter", true}};
    j["fusion"] = {{"iterations", 2}};
    if (with_corruption)
        j["corruption"] = {{"blur_sigma_px", 1.5}, {"noise_sigma_m", 0.01},
                           {"affine_scale", 1.05}, {"affine_shift_m", 0.1}};
    return j.dump(2);
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
}

}  // namespace

TEST_CASE("cli: simulate is byte-identical under a fixed seed") {
    Scratch a("sim_a"), b("sim_b");
    write_file(a.dir / "config.json", small_config(a.dir / "out"));
    write_file(b.dir / "config.json", small_config(b.dir / "out"));
    REQUIRE(run("simulate -c " + (a.dir / "config.json").string()) == 0);
    REQUIRE(run("simulate -c " + (b.dir / "config.json").string()) == 0);
    CHECK(read_bytes(a.dir / "out/gt_depth.pfm") == read_bytes(b.dir / "out/gt_depth.pfm"));
    CHECK(read_bytes(a.dir / "out/mono_depth.pfm") == read_bytes(b.dir / "out/mono_depth.pfm"));
    CHECK(read_bytes(a.dir / "out/gt_depth.pfm") != read_bytes(a.dir / "out/mono_depth.pfm"));
}

TEST_CASE("cli: zero corruption leaves the monocular prior equal to gt") {
    Scratch s("sim_clean");
    write_file(s.dir / "config.json", small_config(s.dir / "out", false));
    REQUIRE(run("simulate -c " + (s.dir / "config.json").string()) == 0);
    CHECK(read_bytes(s.dir / "out/gt_depth.pfm") == read_bytes(s.dir / "out/mono_depth.pfm"));
}

TEST_CASE("cli: full run is deterministic and honors --iterations") {
    Scratch a("run_a"), b("run_b");
    for (const auto* s : {&a, &b}) {
        write_file(s->dir / "config.json", small_config(s->dir / "out"));
        REQUIRE(run("simulate -c " + (s->dir / "config.json").string()) == 0);
        REQUIRE(run("refine -c " + (s->dir / "config.json").string()) == 0);
    }
    CHECK(read_bytes(a.dir / "out/refined_depth.pfm") ==
          read_bytes(b.dir / "out/refined_depth.pfm"));
    CHECK(read_bytes(a.dir / "out/refined_variance.pfm") ==
          read_bytes(b.dir / "out/refined_variance.pfm"));
    CHECK(read_bytes(a.dir / "out/diagnostics.json") ==
          read_bytes(b.dir / "out/diagnostics.json"));

    const auto diags2 = nlohmann::json::parse(read_bytes(a.dir / "out/diagnostics.json"));
    CHECK(diags2["iterations"].size() == 2);

    REQUIRE(run("refine -c " + (a.dir / "config.json").string() + " --iterations 1") == 0);
    const auto diags1 = nlohmann::json::parse(read_bytes(a.dir / "out/diagnostics.json"));
    CHECK(diags1["iterations"].size() == 1);
}

TEST_CASE("cli: refine without a prior fails with the i/o exit code") {
    Scratch s("noprior");
    write_file(s.dir / "config.json", small_config(s.dir / "out"));
    CHECK(run("refine -c " + (s.dir / "config.json").string()) == 3);
}

TEST_CASE("cli: injected views bypass the density field") {
    Scratch s("injected");
    // Constant-depth injected views make the affine fit degenerate; seeing
    // exit code 4 proves the injected route was taken over the scene.
    fs::create_directories(s.dir / "views");
    const Intrinsics intr = testing::small_camera(64, 48, 30.0);
    RenderedView flat;
    flat.pose = Pose::identity();
    flat.depth = DepthMap(64, 48);
    flat.variance = VarianceMap(64, 48);
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 64; ++x) {
            flat.depth.set(x, y, 3.0);
            flat.variance.set(x, y, 1e-3);
        }
    save_injected_view(s.dir / "views", 0, flat);

    auto j = nlohmann::json::parse(small_config(s.dir / "out"));
    j["injected_views_dir"] = "views";
    write_file(s.dir / "config.json", j.dump(2));

    REQUIRE(run("simulate -c " + (s.dir / "config.json").string()) == 0);
    CHECK(run("refine -c " + (s.dir / "config.json").string()) == 4);

    // Depth-varying injected views refine cleanly through the same route.
    RenderedView sloped = flat;
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 64; ++x) sloped.depth.set(x, y, 2.0 + 0.02 * x + 0.01 * y);
    save_injected_view(s.dir / "views", 0, sloped);
    CHECK(run("refine -c " + (s.dir / "config.json").string()) == 0);
    CHECK(fs::exists(s.dir / "out/refined_depth.pfm"));
}

TEST_CASE("cli: eval of a perfect prediction") {
    Scratch s("eval");
    write_file(s.dir / "config.json", small_config(s.dir / "out"));
    REQUIRE(run("simulate -c " + (s.dir / "config.json").string()) == 0);
    const fs::path gt = s.dir / "out/gt_depth.pfm";

    // Constant variance map: the correlation is undefined and reported null.
    VarianceMap var(64, 48);
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 64; ++x) var.set(x, y, 1e-4);
    write_pfm(s.dir / "out/var.pfm", var);

    REQUIRE(run("eval --pred " + gt.string() + " --var " + (s.dir / "out/var.pfm").string() +
                " --gt " + gt.string() + " --baseline " + gt.string() + " -o " +
                (s.dir / "out").string()) == 0);
    const auto metrics = nlohmann::json::parse(read_bytes(s.dir / "out/metrics.json"));
    CHECK(metrics["mse"].get<double>() == 0.0);
    CHECK(metrics["edge_sharpness_ratio"].get<double>() == doctest::Approx(1.0));
    CHECK(metrics["edge_f1"].get<double>() == 1.0);
    CHECK(metrics["uncertainty_error_spearman"].is_null());
    CHECK(fs::exists(s.dir / "out/curve.csv"));
}

TEST_CASE("cli: malformed pfm input gives the i/o exit code and no output") {
    Scratch s("badpfm");
    write_file(s.dir / "config.json", small_config(s.dir / "out"));
    fs::create_directories(s.dir / "out");
    write_file(s.dir / "out/mono_depth.pfm", "Pf\n64 48\n-1.0\ntruncated");
    CHECK(run("refine -c " + (s.dir / "config.json").string()) == 3);
    CHECK_FALSE(fs::exists(s.dir / "out/refined_depth.pfm"));
    CHECK_FALSE(fs::exists(s.dir / "out/refined_depth.pfm.tmp"));
}

TEST_CASE("cli: config errors exit with code 2") {
    Scratch s("badcfg");
    write_file(s.dir / "config.json", "{ not json");
    CHECK(run("simulate -c " + (s.dir / "config.json").string()) == 2);

    auto j = nlohmann::json::parse(small_config(s.dir / "out"));
    j.erase("scene");
    write_file(s.dir / "config2.json", j.dump(2));
    CHECK(run("simulate -c " + (s.dir / "config2.json").string()) == 2);

    write_file(s.dir / "config3.json", small_config(s.dir / "out"));
    CHECK(run("refine -c " + (s.dir / "config3.json").string() + " --ablate bogus") == 2);
    CHECK(run("refine") == 2);  // missing required flags
}

TEST_CASE("cli: eval rejects mismatched dimensions") {
    Scratch s("mismatch");
    FloatMap a(8, 8), b(9, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) a.set(x, y, 2.0);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 9; ++x) b.set(x, y, 2.0);
    write_pfm(s.dir / "a.pfm", a);
    write_pfm(s.dir / "b.pfm", b);
    CHECK(run("eval --pred " + (s.dir / "a.pfm").string() + " --var " +
              (s.dir / "a.pfm").string() + " --gt " + (s.dir / "b.pfm").string() +
              " --baseline " + (s.dir / "a.pfm").string()) == 2);
}

TEST_CASE("cli: render writes a depth/variance pair") {
    Scratch s("render");
    write_file(s.dir / "config.json", small_config(s.dir / "out"));
    REQUIRE(run("render -c " + (s.dir / "config.json").string()) == 0);
    const FloatMap depth = read_pfm(s.dir / "out/render_depth.pfm");
    const FloatMap var = read_pfm(s.dir / "out/render_var.pfm");
    CHECK(depth.valid_fraction() > 0.9);
    CHECK(var.valid_fraction() > 0.9);
}
