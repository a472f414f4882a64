#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "gshs/core.hpp"
#include "gshs/hierarchy.hpp"
#include "gshs/io.hpp"
#include "gshs/raster.hpp"
#include "gshs/train.hpp"

namespace fs = std::filesystem;
using namespace gshs;

namespace {

// Camera file: one pose per line, 16 floats -- row-major 3x3 rotation,
// translation, then fx fy cx cy.
std::vector<Camera> read_camera_file(const std::string& path, int width, int height) {
    std::ifstream f(path);
    if (!f) throw IoFailure("cannot open camera file " + path);
    std::vector<Camera> cams;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream in(line);
        std::vector<double> v;
        double x;
        while (in >> x) v.push_back(x);
        if (v.size() != 16) {
            throw ParseError("camera file line " + std::to_string(line_no) + ": expected 16 floats, got " +
                             std::to_string(v.size()));
        }
        Camera cam;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) cam.rotation(r, c) = v[3 * r + c];
        cam.translation = Vec3(v[9], v[10], v[11]);
        cam.focal = Vec2(v[12], v[13]);
        cam.principal_point = Vec2(v[14], v[15]);
        cam.width = width;
        cam.height = height;
        const Mat3 gram = cam.rotation * cam.rotation.transpose();
        if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-4 || cam.focal.x() <= 0.0 ||
            cam.focal.y() <= 0.0) {
            throw ParseError("camera file line " + std::to_string(line_no) +
                             ": rotation is not orthonormal or focal is not positive");
        }
        cams.push_back(cam);
    }
    if (cams.empty()) throw ParseError("camera file " + path + " has no poses");
    return cams;
}

void print_camera_line(std::ostream& out, const Camera& cam) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g "
                  "%.17g %.17g %.17g %.17g %.17g %.17g %.17g",
                  cam.rotation(0, 0), cam.rotation(0, 1), cam.rotation(0, 2), cam.rotation(1, 0),
                  cam.rotation(1, 1), cam.rotation(1, 2), cam.rotation(2, 0), cam.rotation(2, 1),
                  cam.rotation(2, 2), cam.translation.x(), cam.translation.y(),
                  cam.translation.z(), cam.focal.x(), cam.focal.y(), cam.principal_point.x(),
                  cam.principal_point.y());
    out << buf << "\n";
}

std::string numbered(const std::string& prefix, int index, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "_%03d.%s", index, ext);
    return prefix + buf;
}

int cmd_synth(const std::string& spec, std::uint64_t seed, const std::string& out_scene,
              const std::string& out_dir, int views, int res) {
    const SyntheticTarget target = make_synthetic_target(spec, seed, views, res);
    fs::create_directories(out_dir);
    write_scene(target.ground_truth, out_scene);
    for (int v = 0; v < views; ++v) {
        write_image_ppm(target.images[v], (fs::path(out_dir) / numbered("view", v, "ppm")).string());
        print_camera_line(std::cout, target.cameras[v]);
    }
    std::cerr << "wrote " << views << " views and scene " << out_scene << "\n";
    return 0;
}

int cmd_fit(const std::string& targets_dir, const std::string& cameras_path,
            const std::string& config_path, const std::string& out_scene,
            const std::string& report_path) {
    AppConfig app;
    if (!config_path.empty()) app = read_config(config_path);

    std::vector<std::string> target_files;
    for (const auto& entry : fs::directory_iterator(targets_dir)) {
        if (entry.path().extension() == ".ppm") target_files.push_back(entry.path().string());
    }
    std::sort(target_files.begin(), target_files.end());
    if (target_files.empty()) throw IoFailure("no .ppm targets in " + targets_dir);

    std::vector<Image> targets;
    targets.reserve(target_files.size());
    for (const auto& path : target_files) targets.push_back(read_image_ppm(path));

    const std::vector<Camera> cameras =
        read_camera_file(cameras_path, targets[0].width, targets[0].height);
    if (cameras.size() != targets.size()) {
        throw ShapeMismatch("camera count " + std::to_string(cameras.size()) +
                            " != target count " + std::to_string(targets.size()));
    }

    std::ofstream report;
    if (!report_path.empty()) {
        report.open(report_path);
        if (!report) throw IoFailure("cannot open report " + report_path);
        report << "iteration,loss,psnr\n" << std::flush;
    }
    FitCallback callback = nullptr;
    if (report.is_open()) {
        callback = [&report](int it, double loss, double psnr_db) {
            report << it << "," << loss << "," << psnr_db << "\n" << std::flush;
        };
    }

    try {
        const FitReport result = fit(targets, cameras, app.fit, callback);
        write_scene(result.final_scene, out_scene);
        double mean_psnr = 0.0;
        for (double p : result.final_psnr_per_view) mean_psnr += p;
        mean_psnr /= static_cast<double>(result.final_psnr_per_view.size());
        std::cerr << "fit finished: loss " << result.final_loss << ", mean view psnr "
                  << mean_psnr << " dB, " << result.wall_seconds << " s\n";
        if (!result.invariants_ok) {
            std::cerr << "invariant violation: " << result.invariant_failure << "\n";
            return 1;
        }
    } catch (const DivergedLoss& e) {
        std::cerr << "diverged: " << e.what() << " (partial report flushed)\n";
        return 1;
    }
    return 0;
}

int cmd_render(const std::string& scene_path, const std::string& camera_path, int orbit,
               int width, int height, const std::string& out_prefix, double shrink,
               bool use_png) {
    Scene scene = read_scene(scene_path);
    if (shrink != 1.0) scene = shrink_scales(scene, shrink);

    std::vector<Camera> cams;
    if (!camera_path.empty()) {
        cams = read_camera_file(camera_path, width, height);
    } else {
        for (const auto& [yaw, pitch] : orbit_angles(orbit)) {
            cams.push_back(orbit_camera(yaw, pitch, 2.7, width, height));
        }
    }
    const GaussianSet render = scene.render_list();
    const char* ext = use_png ? "png" : "ppm";
    for (std::size_t v = 0; v < cams.size(); ++v) {
        const Image img = render_tiled(render, cams[v]);
        const std::string path = numbered(out_prefix, static_cast<int>(v), ext);
        if (use_png) write_image_png(img, path);
        else write_image_ppm(img, path);
        std::cerr << "rendered " << path << "\n";
    }
    return 0;
}

int cmd_render_levels(const std::string& scene_path, const std::string& camera_path,
                      int width, int height, const std::string& out_prefix) {
    const Scene scene = read_scene(scene_path);
    const Camera cam = read_camera_file(camera_path, width, height).front();

    for (int l = 0; l < scene.config.levels; ++l) {
        const Image img = render_tiled(scene.levels[l], cam);
        const std::string path = out_prefix + "_level" + std::to_string(l) + ".ppm";
        write_image_ppm(img, path);
        std::cerr << "level " << l << ": " << scene.levels[l].size() << " gaussians -> " << path
                  << "\n";
    }
    const Image composite = render_tiled(scene.render_list(), cam);
    write_image_ppm(composite, out_prefix + "_composite.ppm");
    std::cerr << "composite: " << scene.render_list().size() << " gaussians\n";
    return 0;
}

int cmd_info(const std::string& scene_path) {
    const Scene scene = read_scene(scene_path);
    std::printf("levels %d  base_count %d  upsample_ratio %d  delta_s %.6f\n",
                scene.config.levels, scene.config.base_count, scene.config.upsample_ratio,
                scene.config.delta_s);

    auto scale_stats = [](const GaussianSet& set) {
        double mn = 1e300, mx = -1e300, mean = 0.0;
        std::size_t count = 0;
        for (const auto& ls : set.log_scale) {
            for (int k = 0; k < 3; ++k) {
                const double s = std::exp(ls(k));
                mn = std::min(mn, s);
                mx = std::max(mx, s);
                mean += s;
                ++count;
            }
        }
        mean /= std::max<std::size_t>(count, 1);
        return std::tuple{mean, mn, mx};
    };

    for (int l = 0; l < scene.config.levels; ++l) {
        const auto [gm, gmin, gmax] = scale_stats(scene.levels[l]);
        const auto [am, amin, amax] = scale_stats(scene.anchors[l]);
        std::printf("level %d: count %zu  gaussian scale mean/min/max %.6g/%.6g/%.6g  "
                    "anchor scale mean/min/max %.6g/%.6g/%.6g\n",
                    l, scene.levels[l].size(), gm, gmin, gmax, am, amin, amax);
    }
    std::printf("total rendered %zu\n", scene.hierarchy_count());
    if (scene.background) std::printf("background %zu\n", scene.background->size());

    const InvariantReport inv = check_scene_invariants(scene);
    std::printf("invariants: %s\n", inv.ok ? "pass" : "FAIL");
    if (!inv.ok) {
        std::printf("  %s\n", inv.detail.c_str());
        return 1;
    }
    return 0;
}

std::pair<int, int> parse_res(const std::string& res) {
    const auto x = res.find('x');
    if (x == std::string::npos) {
        const int n = std::stoi(res);
        return {n, n};
    }
    return {std::stoi(res.substr(0, x)), std::stoi(res.substr(x + 1))};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical Gaussian splatting scenes: synthesize, fit, render, inspect"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "write a synthetic ground-truth scene and views");
    std::string synth_spec = "blob-cluster", synth_scene = "scene.gshs", synth_dir = ".";
    std::uint64_t synth_seed = 0;
    int synth_views = 8;
    std::string synth_res = "64";
    synth->add_option("--spec", synth_spec, "blob-cluster | two-tone-sphere | checker-card");
    synth->add_option("--seed", synth_seed, "RNG seed");
    synth->add_option("--out-scene", synth_scene, "output scene file");
    synth->add_option("--out-dir", synth_dir, "directory for view_###.ppm");
    synth->add_option("--views", synth_views, "number of orbit views");
    synth->add_option("--res", synth_res, "resolution (N or WxH)");

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "fit hierarchical residuals to target views");
    std::string fit_targets, fit_cameras, fit_config, fit_scene = "fitted.gshs", fit_report;
    fit_cmd->add_option("--targets", fit_targets, "directory of target .ppm images")->required();
    fit_cmd->add_option("--cameras", fit_cameras, "camera pose file")->required();
    fit_cmd->add_option("--config", fit_config, "key = value config file");
    fit_cmd->add_option("--out-scene", fit_scene, "output scene file");
    fit_cmd->add_option("--report", fit_report, "loss curve CSV (iteration,loss,psnr)");

    // render
    auto* render = app.add_subcommand("render", "render a scene from poses or an orbit");
    std::string render_scene, render_camera, render_out = "out", render_res = "256";
    int render_orbit = 0;
    double shrink = 1.0;
    bool render_png = false;
    render->add_option("--scene", render_scene, "scene file")->required();
    render->add_option("--camera", render_camera, "camera pose file");
    render->add_option("--orbit", render_orbit, "render N poses on the standard orbit");
    render->add_option("--res", render_res, "resolution (N or WxH)");
    render->add_option("--out", render_out, "output prefix");
    render->add_option("--shrink-factor", shrink, "scale reduction for visualization");
    render->add_flag("--png", render_png, "write PNG instead of PPM");

    // render-levels
    auto* levels = app.add_subcommand("render-levels", "render each hierarchy level separately");
    std::string lv_scene, lv_camera, lv_prefix = "level_vis", lv_res = "256";
    levels->add_option("--scene", lv_scene, "scene file")->required();
    levels->add_option("--camera", lv_camera, "camera pose file")->required();
    levels->add_option("--out-prefix", lv_prefix, "output prefix");
    levels->add_option("--res", lv_res, "resolution (N or WxH)");

    // info
    auto* info = app.add_subcommand("info", "print counts, scale statistics, invariant checks");
    std::string info_scene;
    info->add_option("--scene", info_scene, "scene file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (synth->parsed()) {
            const auto [w, h] = parse_res(synth_res);
            if (w != h) throw InvalidConfig("synthetic targets are square; pass a single size");
            return cmd_synth(synth_spec, synth_seed, synth_scene, synth_dir, synth_views, w);
        }
        if (fit_cmd->parsed()) {
            if (!fs::exists(fit_targets) || !fs::exists(fit_cameras) ||
                (!fit_config.empty() && !fs::exists(fit_config))) {
                std::cerr << "error: input path does not exist\n";
                return 2;
            }
            return cmd_fit(fit_targets, fit_cameras, fit_config, fit_scene, fit_report);
        }
        if (render->parsed()) {
            if (render_camera.empty() == (render_orbit <= 0)) {
                std::cerr << "error: pass exactly one of --camera or --orbit N\n";
                return 2;
            }
            if (!fs::exists(render_scene) ||
                (!render_camera.empty() && !fs::exists(render_camera))) {
                std::cerr << "error: input path does not exist\n";
                return 2;
            }
            const auto [w, h] = parse_res(render_res);
            return cmd_render(render_scene, render_camera, render_orbit, w, h, render_out,
                              shrink, render_png);
        }
        if (levels->parsed()) {
            if (!fs::exists(lv_scene) || !fs::exists(lv_camera)) {
                std::cerr << "error: input path does not exist\n";
                return 2;
            }
            const auto [w, h] = parse_res(lv_res);
            return cmd_render_levels(lv_scene, lv_camera, w, h, lv_prefix);
        }
        if (info->parsed()) {
            if (!fs::exists(info_scene)) {
                std::cerr << "error: input path does not exist\n";
                return 2;
            }
            return cmd_info(info_scene);
        }
    } catch (const UnknownSpec& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const InvalidConfig& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
