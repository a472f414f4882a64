#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "gshs/io.hpp"
#include "gshs/rng.hpp"

using namespace gshs;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("gshs_io_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

// random scene whose values are exactly representable in f32, so the
// write/read round trip is the identity
Scene random_f32_scene(Rng& rng, int levels, int base, int ratio, bool background) {
    HierarchyConfig cfg;
    cfg.levels = levels;
    cfg.base_count = base;
    cfg.upsample_ratio = ratio;
    cfg.delta_s = static_cast<double>(static_cast<float>(-1.234));
    auto f32 = [&](double lo, double hi) {
        return static_cast<double>(static_cast<float>(rng.uniform(lo, hi)));
    };
    auto fill = [&](GaussianSet& set, std::size_t n) {
        set.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            set.mu[i] = Vec3(f32(-1, 1), f32(-1, 1), f32(-1, 1));
            set.log_scale[i] = Vec3(f32(-4, 0), f32(-4, 0), f32(-4, 0));
            set.quat[i] = Vec4(f32(-1, 1), f32(-1, 1), f32(-1, 1), f32(-1, 1));
            set.opacity_logit[i] = f32(-3, 3);
            set.color_logit[i] = Vec3(f32(-2, 2), f32(-2, 2), f32(-2, 2));
        }
    };
    Scene scene;
    scene.config = cfg;
    scene.levels.resize(levels);
    scene.anchors.resize(levels);
    for (int l = 0; l < levels; ++l) {
        fill(scene.levels[l], cfg.level_count(l));
        fill(scene.anchors[l], cfg.level_count(l));
    }
    if (background) {
        scene.background.emplace();
        fill(*scene.background, 17);
    }
    return scene;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void dump(const std::string& path, const std::string& data) {
    std::ofstream f(path, std::ios::binary);
    f.write(data.data(), static_cast<std::streamsize>(data.size()));
}

}  // namespace

TEST_CASE("scene round trip is bit exact") {
    TempDir tmp;
    Rng rng(123);
    for (int trial = 0; trial < 5; ++trial) {
        const Scene scene = random_f32_scene(rng, 2 + trial % 2, 3, 2, trial % 2 == 0);
        const std::string path = tmp.file("scene.gshs");
        write_scene(scene, path);
        const Scene loaded = read_scene(path);

        CHECK(loaded.config.levels == scene.config.levels);
        CHECK(loaded.config.base_count == scene.config.base_count);
        CHECK(loaded.config.delta_s == scene.config.delta_s);
        CHECK(loaded.background.has_value() == scene.background.has_value());
        for (int l = 0; l < scene.config.levels; ++l) {
            CHECK(loaded.levels[l].mu == scene.levels[l].mu);
            CHECK(loaded.levels[l].log_scale == scene.levels[l].log_scale);
            CHECK(loaded.levels[l].quat == scene.levels[l].quat);
            CHECK(loaded.levels[l].opacity_logit == scene.levels[l].opacity_logit);
            CHECK(loaded.levels[l].color_logit == scene.levels[l].color_logit);
            CHECK(loaded.anchors[l].mu == scene.anchors[l].mu);
        }
        if (scene.background) {
            CHECK(loaded.background->mu == scene.background->mu);
        }

        // writing the loaded scene reproduces the file bytes
        const std::string path2 = tmp.file("scene2.gshs");
        write_scene(loaded, path2);
        CHECK(slurp(path) == slurp(path2));
    }
}

TEST_CASE("scene file error paths") {
    TempDir tmp;
    Rng rng(9);
    const Scene scene = random_f32_scene(rng, 2, 2, 2, false);
    const std::string path = tmp.file("scene.gshs");
    write_scene(scene, path);
    std::string bytes = slurp(path);

    {
        std::string bad = bytes;
        bad[0] = 'X';
        dump(tmp.file("bad_magic.gshs"), bad);
        CHECK_THROWS_AS(read_scene(tmp.file("bad_magic.gshs")), BadMagic);
    }
    {
        std::string bad = bytes;
        bad[4] = 99;  // version
        dump(tmp.file("bad_version.gshs"), bad);
        CHECK_THROWS_AS(read_scene(tmp.file("bad_version.gshs")), VersionMismatch);
    }
    {
        const std::string bad = bytes.substr(0, bytes.size() / 2);
        dump(tmp.file("truncated.gshs"), bad);
        CHECK_THROWS_AS(read_scene(tmp.file("truncated.gshs")), TruncatedFile);
    }
    {
        std::string bad = bytes + std::string(8, '\0');
        dump(tmp.file("trailing.gshs"), bad);
        CHECK_THROWS_AS(read_scene(tmp.file("trailing.gshs")), CountMismatch);
    }
    CHECK_THROWS_AS(read_scene(tmp.file("missing.gshs")), IoFailure);
}

TEST_CASE("ppm quantization rule") {
    TempDir tmp;
    Image img(1, 1);
    img.rgb = {1.0, 0.0, 0.0};
    const std::string path = tmp.file("one.ppm");
    write_image_ppm(img, path);
    const std::string bytes = slurp(path);
    CHECK(bytes == std::string("P6\n1 1\n255\n") + '\xff' + '\x00' + '\x00');

    img.rgb = {0.5, -0.2, 1.7};  // 127.5 rounds half away from zero -> 128; clamps
    write_image_ppm(img, path);
    const std::string b2 = slurp(path);
    CHECK(static_cast<unsigned char>(b2[b2.size() - 3]) == 128);
    CHECK(static_cast<unsigned char>(b2[b2.size() - 2]) == 0);
    CHECK(static_cast<unsigned char>(b2[b2.size() - 1]) == 255);
}

TEST_CASE("ppm round trips through an independent reader") {
    TempDir tmp;
    Image img(2, 2);
    img.rgb = {0.0, 0.25, 0.5, 0.75, 1.0, 0.1, 0.9, 0.33, 0.66, 0.2, 0.4, 0.6};
    const std::string path = tmp.file("grad.ppm");
    write_image_ppm(img, path);

    // independent decode
    const std::string bytes = slurp(path);
    const std::string header = "P6\n2 2\n255\n";
    REQUIRE(bytes.substr(0, header.size()) == header);
    REQUIRE(bytes.size() == header.size() + 12);
    for (int i = 0; i < 12; ++i) {
        const int expect = static_cast<int>(std::lround(std::clamp(img.rgb[i], 0.0, 1.0) * 255));
        CHECK(static_cast<unsigned char>(bytes[header.size() + i]) == expect);
    }

    const Image back = read_image_ppm(path);
    CHECK(back.width == 2);
    CHECK(back.height == 2);
    for (int i = 0; i < 12; ++i) {
        CHECK(back.rgb[i] ==
              doctest::Approx(std::lround(std::clamp(img.rgb[i], 0.0, 1.0) * 255) / 255.0)
                  .epsilon(1e-12));
    }

    // quantization is monotone
    Image mono(16, 1);
    for (int i = 0; i < 16; ++i) mono.rgb[3 * i] = i / 15.0;
    write_image_ppm(mono, tmp.file("mono.ppm"));
    const Image mono_back = read_image_ppm(tmp.file("mono.ppm"));
    for (int i = 1; i < 16; ++i) CHECK(mono_back.rgb[3 * i] >= mono_back.rgb[3 * (i - 1)]);
}

TEST_CASE("png writer emits a well-formed file") {
    TempDir tmp;
    Image img(3, 2);
    for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = (i % 7) / 6.0;
    const std::string path = tmp.file("img.png");
    write_image_png(img, path);
    const std::string bytes = slurp(path);
    REQUIRE(bytes.size() > 8);
    CHECK(bytes.substr(1, 3) == "PNG");
    CHECK(bytes.find("IHDR") != std::string::npos);
    CHECK(bytes.find("IDAT") != std::string::npos);
    CHECK(bytes.find("IEND") != std::string::npos);
}

TEST_CASE("config defaults and overrides") {
    const AppConfig def = parse_config_text("");
    CHECK(def.hierarchy.levels == 5);
    CHECK(def.hierarchy.base_count == 256);
    CHECK(def.hierarchy.upsample_ratio == 4);
    CHECK(def.hierarchy.delta_s == doctest::Approx(-std::log(3.2)).epsilon(1e-12));
    CHECK(def.weights.lambda_knn == 10.0);
    CHECK(def.weights.lambda_pose == 1.0);
    CHECK(def.weights.tau == 0.1);
    CHECK(def.weights.knn_k == 4);
    CHECK(def.fit.iterations == 2000);

    const AppConfig six = parse_config_text("levels = 6\n");
    CHECK(six.hierarchy.levels == 6);
    CHECK(six.hierarchy.base_count == 256);

    const AppConfig full = parse_config_text(
        "# comment line\n"
        "levels = 6\n"
        "image_width = 512\n"
        "image_height = 512  # trailing comment\n"
        "lambda_center = 10\n"
        "iterations = 5\n"
        "lr_position = 0.01\n"
        "seed = 7\n");
    CHECK(full.hierarchy.delta_s == doctest::Approx(-std::log(512.0 / 96.0)).epsilon(1e-12));
    CHECK(full.weights.lambda_center == 10.0);
    CHECK(full.fit.iterations == 5);
    CHECK(full.fit.lr_position == 0.01);
    CHECK(full.fit.seed == 7);
}

TEST_CASE("config rejects unknown keys and bad syntax") {
    CHECK_THROWS_AS(parse_config_text("lambda_nkn = 1\n"), UnknownKey);
    CHECK_THROWS_AS(parse_config_text("levels 6\n"), ParseError);
    CHECK_THROWS_AS(parse_config_text("levels = abc\n"), ParseError);
    CHECK_THROWS_AS(parse_config_text("levels =\n"), ParseError);
    CHECK_THROWS_AS(read_config("/nonexistent/path/config.txt"), IoFailure);
}
