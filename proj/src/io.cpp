#include "gshs/io.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gshs {

namespace {

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, double v) {
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

struct Reader {
    const std::string& data;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > data.size()) {
            throw TruncatedFile("scene file ends after " + std::to_string(data.size()) +
                                " bytes; needed " + std::to_string(pos + n));
        }
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint8_t>(data[pos]) |
                          (static_cast<std::uint16_t>(static_cast<std::uint8_t>(data[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
};

void append_set(std::string& out, const GaussianSet& set) {
    for (const auto& v : set.mu)
        for (int k = 0; k < 3; ++k) put_f32(out, v(k));
    for (const auto& v : set.log_scale)
        for (int k = 0; k < 3; ++k) put_f32(out, v(k));
    for (const auto& v : set.quat)
        for (int k = 0; k < 4; ++k) put_f32(out, v(k));
    for (double v : set.opacity_logit) put_f32(out, v);
    for (const auto& v : set.color_logit)
        for (int k = 0; k < 3; ++k) put_f32(out, v(k));
}

GaussianSet read_set(Reader& r, std::size_t n) {
    GaussianSet set;
    set.resize(n);
    for (auto& v : set.mu)
        for (int k = 0; k < 3; ++k) v(k) = r.f32();
    for (auto& v : set.log_scale)
        for (int k = 0; k < 3; ++k) v(k) = r.f32();
    for (auto& v : set.quat)
        for (int k = 0; k < 4; ++k) v(k) = r.f32();
    for (auto& v : set.opacity_logit) v = r.f32();
    for (auto& v : set.color_logit)
        for (int k = 0; k < 3; ++k) v(k) = r.f32();
    return set;
}

}  // namespace

void write_scene(const Scene& scene, const std::string& path) {
    std::string out;
    out += "GSHS";
    put_u16(out, kSceneFileVersion);
    put_u32(out, static_cast<std::uint32_t>(scene.config.levels));
    put_u32(out, static_cast<std::uint32_t>(scene.config.base_count));
    put_u32(out, static_cast<std::uint32_t>(scene.config.upsample_ratio));
    put_f32(out, scene.config.delta_s);
    put_u32(out, scene.background ? 1u : 0u);

    if (scene.levels.size() != static_cast<std::size_t>(scene.config.levels) ||
        scene.anchors.size() != scene.levels.size()) {
        throw CountMismatch("scene level arrays do not match the config");
    }
    for (int l = 0; l < scene.config.levels; ++l) {
        if (scene.levels[l].size() != scene.config.level_count(l) ||
            scene.anchors[l].size() != scene.config.level_count(l)) {
            throw CountMismatch("level " + std::to_string(l) + " count mismatch");
        }
        append_set(out, scene.levels[l]);
        append_set(out, scene.anchors[l]);
    }
    if (scene.background) {
        put_u32(out, static_cast<std::uint32_t>(scene.background->size()));
        append_set(out, *scene.background);
    }

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open " + path + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoFailure("short write to " + path);
}

Scene read_scene(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string data = ss.str();

    Reader r{data};
    r.need(4);
    if (data.compare(0, 4, "GSHS") != 0) {
        throw BadMagic("expected magic GSHS");
    }
    r.pos = 4;
    const std::uint16_t version = r.u16();
    if (version != kSceneFileVersion) {
        throw VersionMismatch("scene file version " + std::to_string(version) +
                              ", expected " + std::to_string(kSceneFileVersion));
    }
    Scene scene;
    scene.config.levels = static_cast<int>(r.u32());
    scene.config.base_count = static_cast<int>(r.u32());
    scene.config.upsample_ratio = static_cast<int>(r.u32());
    scene.config.delta_s = r.f32();
    const std::uint32_t flags = r.u32();
    if (scene.config.levels < 1 || scene.config.base_count < 1 ||
        scene.config.upsample_ratio < 1) {
        throw CountMismatch("scene header has non-positive counts");
    }

    scene.levels.resize(scene.config.levels);
    scene.anchors.resize(scene.config.levels);
    for (int l = 0; l < scene.config.levels; ++l) {
        const std::size_t n = scene.config.level_count(l);
        scene.levels[l] = read_set(r, n);
        scene.anchors[l] = read_set(r, n);
    }
    if (flags & 1u) {
        const std::uint32_t n = r.u32();
        scene.background = read_set(r, n);
    }
    if (r.pos != data.size()) {
        throw CountMismatch("scene file has " + std::to_string(data.size() - r.pos) +
                            " trailing bytes");
    }
    return scene;
}

namespace {

std::uint8_t quantize(double v) {
    const double c = std::clamp(v, 0.0, 1.0) * 255.0;
    return static_cast<std::uint8_t>(std::lround(c));
}

std::vector<std::uint8_t> quantize_rgb(const Image& img) {
    std::vector<std::uint8_t> bytes(img.rgb.size());
    for (std::size_t i = 0; i < img.rgb.size(); ++i) bytes[i] = quantize(img.rgb[i]);
    return bytes;
}

}  // namespace

void write_image_ppm(const Image& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open " + path + " for writing");
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    const auto bytes = quantize_rgb(img);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoFailure("short write to " + path);
}

Image read_image_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open " + path);
    std::string magic;
    f >> magic;
    if (magic != "P6") throw BadMagic("expected PPM magic P6, got '" + magic + "'");
    int w = 0, h = 0, maxval = 0;
    f >> w >> h >> maxval;
    if (!f || w <= 0 || h <= 0 || maxval != 255) {
        throw ParseError("unsupported PPM header in " + path);
    }
    f.get();  // single whitespace after maxval
    Image img(w, h);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(3) * w * h);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (f.gcount() != static_cast<std::streamsize>(bytes.size())) {
        throw TruncatedFile("PPM payload shorter than 3*W*H in " + path);
    }
    for (std::size_t i = 0; i < bytes.size(); ++i) img.rgb[i] = bytes[i] / 255.0;
    return img;
}

namespace {

void put_be32(std::string& out, std::uint32_t v) {
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void png_chunk(std::string& out, const char type[4], const std::string& payload) {
    put_be32(out, static_cast<std::uint32_t>(payload.size()));
    const std::size_t crc_start = out.size();
    out.append(type, 4);
    out += payload;
    const auto crc =
        crc32(0, reinterpret_cast<const Bytef*>(out.data() + crc_start), // NOLINT
              static_cast<uInt>(out.size() - crc_start));
    put_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_image_png(const Image& img, const std::string& path) {
    const auto bytes = quantize_rgb(img);

    // filter byte 0 in front of each scanline
    std::string raw;
    raw.reserve(static_cast<std::size_t>(img.height) * (1 + 3 * img.width));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back('\0');
        raw.append(reinterpret_cast<const char*>(bytes.data() + 3 * static_cast<std::size_t>(y) *
                                                                     img.width),
                   static_cast<std::size_t>(3) * img.width);
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::string compressed(comp_len, '\0');
    if (compress2(reinterpret_cast<Bytef*>(compressed.data()), &comp_len,
                  reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                  6) != Z_OK) {
        throw IoFailure("zlib compression failed");
    }
    compressed.resize(comp_len);

    std::string ihdr;
    put_be32(ihdr, static_cast<std::uint32_t>(img.width));
    put_be32(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type RGB
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // interlace

    std::string out("\x89PNG\r\n\x1a\n", 8);
    png_chunk(out, "IHDR", ihdr);
    png_chunk(out, "IDAT", compressed);
    png_chunk(out, "IEND", "");

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoFailure("cannot open " + path + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoFailure("short write to " + path);
}

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

AppConfig parse_config_text(const std::string& text) {
    // defaults, then overrides
    int levels = 5, base_count = 256, upsample_ratio = 4;
    int image_width = 256, image_height = 256;
    AppConfig cfg;

    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError("line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw ParseError("line " + std::to_string(line_no) + ": empty key or value");
        }

        auto as_int = [&](const std::string& v) {
            try {
                std::size_t used = 0;
                const int r = std::stoi(v, &used);
                if (used != v.size()) throw std::invalid_argument(v);
                return r;
            } catch (const std::exception&) {
                throw ParseError("line " + std::to_string(line_no) + ": bad integer '" + v + "'");
            }
        };
        auto as_double = [&](const std::string& v) {
            try {
                std::size_t used = 0;
                const double r = std::stod(v, &used);
                if (used != v.size()) throw std::invalid_argument(v);
                return r;
            } catch (const std::exception&) {
                throw ParseError("line " + std::to_string(line_no) + ": bad number '" + v + "'");
            }
        };

        if (key == "levels") levels = as_int(value);
        else if (key == "base_count") base_count = as_int(value);
        else if (key == "upsample_ratio") upsample_ratio = as_int(value);
        else if (key == "image_width") image_width = as_int(value);
        else if (key == "image_height") image_height = as_int(value);
        else if (key == "lambda_adv") cfg.weights.lambda_adv = as_double(value);
        else if (key == "lambda_pose") cfg.weights.lambda_pose = as_double(value);
        else if (key == "lambda_center") cfg.weights.lambda_center = as_double(value);
        else if (key == "lambda_knn") cfg.weights.lambda_knn = as_double(value);
        else if (key == "tau") cfg.weights.tau = as_double(value);
        else if (key == "knn_k") cfg.weights.knn_k = as_int(value);
        else if (key == "iterations") cfg.fit.iterations = as_int(value);
        else if (key == "lr_position") cfg.fit.lr_position = as_double(value);
        else if (key == "lr_scale") cfg.fit.lr_scale = as_double(value);
        else if (key == "lr_rotation") cfg.fit.lr_rotation = as_double(value);
        else if (key == "lr_opacity") cfg.fit.lr_opacity = as_double(value);
        else if (key == "lr_color") cfg.fit.lr_color = as_double(value);
        else if (key == "camera_count") cfg.fit.camera_count = as_int(value);
        else if (key == "seed") cfg.fit.seed = static_cast<std::uint64_t>(as_int(value));
        else throw UnknownKey("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }

    cfg.hierarchy = HierarchyConfig::make(levels, base_count, upsample_ratio, image_width,
                                          image_height);
    cfg.fit.hierarchy = cfg.hierarchy;
    cfg.fit.weights = cfg.weights;
    return cfg;
}

AppConfig read_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoFailure("cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace gshs
