// Copyright Contributors to the texsplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "texsplat/renderer.hpp"

#include <json.hpp>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace texsplat {

namespace fs = std::filesystem;

class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- images

/// Little-endian RGB PFM ("PF", negative scale). Rows are stored bottom-up.
inline void write_pfm(const fs::path &path, const Image &img) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << "PF\n" << img.width << " " << img.height << "\n-1.0\n";
    std::vector<float> row(std::size_t(img.width) * 3);
    for (int y = img.height - 1; y >= 0; --y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                row[std::size_t(x) * 3 + std::size_t(c)] = float(img.at(x, y)[c]);
        out.write(reinterpret_cast<const char *>(row.data()), std::streamsize(row.size() * sizeof(float)));
    }
    if (!out)
        throw IoError("short write to " + path.string());
}

inline Image read_pfm(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    std::string magic;
    int w = 0, h = 0;
    double scale = 0;
    in >> magic >> w >> h >> scale;
    in.get();
    if (!in || magic != "PF" || w <= 0 || h <= 0 || scale == 0)
        throw IoError(path.string() + ": not an RGB PFM file");
    const bool little = scale < 0;
    Image img(w, h);
    std::vector<float> row(std::size_t(w) * 3);
    for (int y = h - 1; y >= 0; --y) {
        in.read(reinterpret_cast<char *>(row.data()), std::streamsize(row.size() * sizeof(float)));
        if (!in)
            throw IoError(path.string() + ": truncated PFM data");
        for (int x = 0; x < w; ++x) {
            Vec3 v;
            for (int c = 0; c < 3; ++c) {
                float f = row[std::size_t(x) * 3 + std::size_t(c)];
                if (little != (std::endian::native == std::endian::little)) {
                    auto u = std::bit_cast<std::uint32_t>(f);
                    u = (u >> 24) | ((u >> 8) & 0xff00u) | ((u << 8) & 0xff0000u) | (u << 24);
                    f = std::bit_cast<float>(u);
                }
                v[c] = f;
            }
            img.set(x, y, v);
        }
    }
    return img;
}

/// 8-bit RGB PNG; values are clamped to [0,1] and rounded.
inline void write_png(const fs::path &path, const Image &img) {
    png_image pi;
    std::memset(&pi, 0, sizeof pi);
    pi.version = PNG_IMAGE_VERSION;
    pi.width = png_uint_32(img.width);
    pi.height = png_uint_32(img.height);
    pi.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buf(img.data.size());
    for (std::size_t i = 0; i < buf.size(); ++i)
        buf[i] = std::uint8_t(std::lround(std::clamp(img.data[i], Real(0), Real(1)) * 255));
    if (!png_image_write_to_file(&pi, path.string().c_str(), 0, buf.data(), 0, nullptr))
        throw IoError("cannot write " + path.string() + ": " + pi.message);
}

inline Image read_png(const fs::path &path) {
    png_image pi;
    std::memset(&pi, 0, sizeof pi);
    pi.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&pi, path.string().c_str()))
        throw IoError("cannot read " + path.string() + ": " + pi.message);
    pi.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(pi));
    if (!png_image_finish_read(&pi, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&pi);
        throw IoError("cannot decode " + path.string() + ": " + pi.message);
    }
    Image img(int(pi.width), int(pi.height));
    for (std::size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = buf[i] / Real(255);
    return img;
}

inline std::string lowercase_extension(const fs::path &p) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    return e;
}

inline Image read_image(const fs::path &path) {
    const auto e = lowercase_extension(path);
    if (e == ".pfm")
        return read_pfm(path);
    if (e == ".png")
        return read_png(path);
    throw IoError(path.string() + ": unsupported image format (use .png or .pfm)");
}

inline void write_image(const fs::path &path, const Image &img) {
    const auto e = lowercase_extension(path);
    if (e == ".pfm")
        return write_pfm(path, img);
    if (e == ".png")
        return write_png(path, img);
    throw IoError(path.string() + ": unsupported image format (use .png or .pfm)");
}

// --------------------------------------------------------------- dataset

struct Aabb {
    Vec3 lo, hi;
};

/// Optional sparse points with colors, the stand-in for SfM output.
struct PointCloud {
    std::vector<Vec3> positions;
    std::vector<Vec3> colors;
};

struct Dataset {
    std::vector<Camera> cameras;
    std::vector<Image> images;
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    /// Region initial primitives are drawn from when no points are given.
    std::optional<Aabb> bounds;
    PointCloud points;
    /// Non-fatal oddities found while loading.
    std::vector<std::string> warnings;

    void validate() const {
        if (cameras.size() != images.size())
            throw IoError("camera/image count mismatch");
        std::vector<int> seen(cameras.size(), 0);
        for (const auto *list : {&train, &test})
            for (const std::size_t i : *list) {
                if (i >= cameras.size())
                    throw IoError("split index " + std::to_string(i) + " out of range");
                if (seen[i]++)
                    throw IoError("split index " + std::to_string(i) + " listed twice");
            }
        for (std::size_t i = 0; i < cameras.size(); ++i) {
            if (!seen[i])
                throw IoError("view " + std::to_string(i) + " is in neither split");
            if (images[i].width != cameras[i].width || images[i].height != cameras[i].height)
                throw IoError("view " + std::to_string(i) + ": image size does not match camera");
        }
    }

    std::vector<Camera> train_cameras() const {
        std::vector<Camera> out;
        for (const std::size_t i : train)
            out.push_back(cameras[i]);
        return out;
    }
    std::vector<Image> train_images() const {
        std::vector<Image> out;
        for (const std::size_t i : train)
            out.push_back(images[i]);
        return out;
    }
};

using nlohmann::json;

inline json camera_to_json(const Camera &c) {
    return json{{"rotation", {c.rotation[0], c.rotation[1], c.rotation[2], c.rotation[3]}},
                {"translation", {c.translation.x, c.translation.y, c.translation.z}},
                {"fx", c.fx},
                {"fy", c.fy},
                {"cx", c.cx},
                {"cy", c.cy},
                {"width", c.width},
                {"height", c.height}};
}

inline Camera camera_from_json(const json &j, const std::string &where) {
    try {
        Camera c;
        const auto &q = j.at("rotation");
        const auto &t = j.at("translation");
        if (q.size() != 4 || t.size() != 3)
            throw IoError(where + ": rotation needs 4 values and translation 3");
        for (int k = 0; k < 4; ++k)
            c.rotation[std::size_t(k)] = q.at(std::size_t(k)).get<Real>();
        c.translation = {t.at(0).get<Real>(), t.at(1).get<Real>(), t.at(2).get<Real>()};
        c.fx = j.at("fx").get<Real>();
        c.fy = j.at("fy").get<Real>();
        c.cx = j.at("cx").get<Real>();
        c.cy = j.at("cy").get<Real>();
        c.width = j.at("width").get<int>();
        c.height = j.at("height").get<int>();
        if (c.width <= 0 || c.height <= 0 || !(c.fx > 0) || !(c.fy > 0))
            throw IoError(where + ": width, height, fx and fy must be positive");
        const Real qn = std::sqrt(c.rotation[0] * c.rotation[0] + c.rotation[1] * c.rotation[1] +
                                  c.rotation[2] * c.rotation[2] + c.rotation[3] * c.rotation[3]);
        if (!(qn > 0))
            throw IoError(where + ": zero rotation quaternion");
        return c;
    } catch (const json::exception &e) {
        throw IoError(where + ": " + e.what());
    }
}

inline json dataset_to_json(const Dataset &ds, const std::vector<std::string> &image_names) {
    json cams = json::array();
    for (std::size_t i = 0; i < ds.cameras.size(); ++i) {
        json c = camera_to_json(ds.cameras[i]);
        c["image"] = image_names[i];
        cams.push_back(c);
    }
    json j{{"cameras", cams}, {"split", {{"train", ds.train}, {"test", ds.test}}}};
    if (ds.bounds)
        j["bounds"] = {{"min", {ds.bounds->lo.x, ds.bounds->lo.y, ds.bounds->lo.z}},
                       {"max", {ds.bounds->hi.x, ds.bounds->hi.y, ds.bounds->hi.z}}};
    if (!ds.points.positions.empty()) {
        json pts = json::array();
        for (std::size_t i = 0; i < ds.points.positions.size(); ++i) {
            const Vec3 p = ds.points.positions[i], c = ds.points.colors[i];
            pts.push_back({p.x, p.y, p.z, c.x, c.y, c.z});
        }
        j["points"] = pts;
    }
    return j;
}

/// Writes `cameras.json` plus `images/NNN.<ext>`.
inline void save_dataset(const fs::path &dir, const Dataset &ds, const std::string &ext = ".pfm") {
    ds.validate();
    fs::create_directories(dir / "images");
    std::vector<std::string> names;
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        std::ostringstream name;
        name << "images/" << std::setw(3) << std::setfill('0') << i << ext;
        names.push_back(name.str());
        write_image(dir / names.back(), ds.images[i]);
    }
    std::ofstream out(dir / "cameras.json");
    if (!out)
        throw IoError("cannot write " + (dir / "cameras.json").string());
    out << dataset_to_json(ds, names).dump(2) << "\n";
}

inline Vec3 json_vec3(const json &j, const std::string &where) {
    if (!j.is_array() || j.size() != 3)
        throw IoError(where + ": expected a 3-vector");
    return {j[0].get<Real>(), j[1].get<Real>(), j[2].get<Real>()};
}

/// Reads `dir/cameras.json` and the images it names.
inline Dataset load_dataset(const fs::path &dir) {
    const fs::path cam_path = dir / "cameras.json";
    std::ifstream in(cam_path);
    if (!in)
        throw IoError("cannot open " + cam_path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception &e) {
        throw IoError(cam_path.string() + ": " + e.what());
    }
    Dataset ds;
    try {
        const auto &cams = j.at("cameras");
        std::size_t image_files = 0;
        for (std::size_t i = 0; i < cams.size(); ++i) {
            const std::string where = cam_path.string() + ": camera " + std::to_string(i);
            Camera c = camera_from_json(cams[i], where);
            if (c.cx < 0 || c.cx > c.width || c.cy < 0 || c.cy > c.height)
                ds.warnings.push_back(where + ": principal point outside the image");
            ds.cameras.push_back(c);
            if (cams[i].contains("image")) {
                ++image_files;
                const fs::path img_path = dir / cams[i]["image"].get<std::string>();
                if (!fs::exists(img_path))
                    throw IoError(img_path.string() + ": image file not found");
                ds.images.push_back(read_image(img_path));
            }
        }
        if (image_files != ds.cameras.size()) {
            // Fall back to every file in images/, sorted by name.
            std::vector<fs::path> files;
            if (fs::is_directory(dir / "images"))
                for (const auto &e : fs::directory_iterator(dir / "images"))
                    files.push_back(e.path());
            std::sort(files.begin(), files.end());
            if (image_files != 0 || files.size() != ds.cameras.size())
                throw IoError(cam_path.string() + ": camera/image count mismatch");
            ds.images.clear();
            for (const auto &f : files)
                ds.images.push_back(read_image(f));
        }
        if (j.contains("split")) {
            ds.train = j["split"].at("train").get<std::vector<std::size_t>>();
            ds.test = j["split"].at("test").get<std::vector<std::size_t>>();
        } else {
            for (std::size_t i = 0; i < ds.cameras.size(); ++i)
                (i % 8 == 7 ? ds.test : ds.train).push_back(i);
        }
        if (j.contains("bounds"))
            ds.bounds = Aabb{json_vec3(j["bounds"].at("min"), cam_path.string() + ": bounds.min"),
                             json_vec3(j["bounds"].at("max"), cam_path.string() + ": bounds.max")};
        if (j.contains("points"))
            for (const auto &p : j["points"]) {
                if (!p.is_array() || p.size() != 6)
                    throw IoError(cam_path.string() + ": each point needs x y z r g b");
                ds.points.positions.push_back({p[0].get<Real>(), p[1].get<Real>(), p[2].get<Real>()});
                ds.points.colors.push_back({p[3].get<Real>(), p[4].get<Real>(), p[5].get<Real>()});
            }
    } catch (const json::exception &e) {
        throw IoError(cam_path.string() + ": " + e.what());
    }
    try {
        ds.validate();
    } catch (const IoError &e) {
        throw IoError(cam_path.string() + ": " + e.what());
    }
    return ds;
}

// -------------------------------------------------------- synthetic scenes

/// Color raster stretched over a quad; bilinear lookup, clamped at edges.
struct RasterTexture {
    int width = 1, height = 1;
    std::vector<Real> rgb{0.5, 0.5, 0.5}; ///< row-major [y][x][c]

    Vec3 texel(int x, int y) const {
        x = std::clamp(x, 0, width - 1);
        y = std::clamp(y, 0, height - 1);
        const std::size_t b = (std::size_t(y) * std::size_t(width) + std::size_t(x)) * 3;
        return {rgb[b], rgb[b + 1], rgb[b + 2]};
    }
    void set(int x, int y, Vec3 c) {
        const std::size_t b = (std::size_t(y) * std::size_t(width) + std::size_t(x)) * 3;
        rgb[b] = c.x;
        rgb[b + 1] = c.y;
        rgb[b + 2] = c.z;
    }
};

/// Opaque or translucent textured rectangle: the ground-truth primitive of
/// the synthetic scenes.
struct Quad {
    Vec3 center;
    Vec3 axis_u{1, 0, 0}, axis_v{0, 1, 0}; ///< orthonormal
    Vec2 half_extent{1, 1};
    Real alpha = 1;
    RasterTexture texture;
};

/// Color of quad `q` at in-plane coordinates (s, t).
inline Vec3 quad_color(const Quad &q, Real s, Real t) {
    const auto &tex = q.texture;
    const Real x = (s + q.half_extent.x) / (2 * q.half_extent.x) * tex.width - 0.5;
    const Real y = (t + q.half_extent.y) / (2 * q.half_extent.y) * tex.height - 0.5;
    const int x0 = int(std::floor(x)), y0 = int(std::floor(y));
    const Real fx = x - x0, fy = y - y0;
    return tex.texel(x0, y0) * ((1 - fx) * (1 - fy)) + tex.texel(x0 + 1, y0) * (fx * (1 - fy)) +
           tex.texel(x0, y0 + 1) * ((1 - fx) * fy) + tex.texel(x0 + 1, y0 + 1) * (fx * fy);
}

/// Direct ray tracer over quads: every quad tested, hits kept in a list
/// ordered by insertion, then blended front to back over black.
inline Vec3 quad_trace(const Ray &ray, std::span<const Quad> quads) {
    struct Layer {
        Real t;
        Real alpha;
        Vec3 color;
    };
    std::vector<Layer> layers;
    for (const auto &q : quads) {
        const Vec3 n = cross(q.axis_u, q.axis_v);
        const Real denom = dot(n, ray.direction);
        if (std::abs(denom) < 1e-12)
            continue;
        const Real t = dot(n, q.center - ray.origin) / denom;
        if (t <= 1e-6)
            continue;
        const Vec3 rel = ray.origin + ray.direction * t - q.center;
        const Real s = dot(rel, q.axis_u), tt = dot(rel, q.axis_v);
        if (std::abs(s) > q.half_extent.x || std::abs(tt) > q.half_extent.y)
            continue;
        Layer l{t, q.alpha, quad_color(q, s, tt)};
        auto it = layers.begin();
        while (it != layers.end() && it->t <= t)
            ++it;
        layers.insert(it, l);
    }
    Vec3 out;
    Real trans = 1;
    for (const auto &l : layers) {
        out += l.color * (trans * l.alpha);
        trans *= 1 - l.alpha;
    }
    return out;
}

inline Image quad_render(const Camera &cam, std::span<const Quad> quads) {
    Image img(cam.width, cam.height);
    const Mat3 w2c = rotation_matrix(normalized(cam.rotation));
    const Vec3 origin = -w2c.transpose_mul(cam.translation);
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            const Vec3 d{(x + 0.5 - cam.cx) / cam.fx, (y + 0.5 - cam.cy) / cam.fy, 1};
            img.set(x, y, quad_trace({origin, normalized(w2c.transpose_mul(d))}, quads));
        }
    return img;
}

struct SyntheticSpec {
    std::string name = "textured-quad";
    int views = 8;
    int width = 64;
    int height = 64;
    std::uint64_t seed = 0;
};

struct Synthetic {
    Dataset dataset;
    std::vector<Quad> quads;
};

inline const std::vector<std::string> &synthetic_names() {
    static const std::vector<std::string> names{"textured-quad", "two-quads-occlusion", "half-flat-half-noise",
                                                "box-room"};
    return names;
}

namespace detail {

inline RasterTexture procedural_texture(int res, std::mt19937_64 &rng) {
    // Smooth color field: a few soft blobs over a gradient plus gentle stripes.
    std::uniform_real_distribution<Real> u(0, 1);
    struct Blob {
        Real x, y, r;
        Vec3 c;
    };
    std::vector<Blob> blobs;
    for (int i = 0; i < 6; ++i)
        blobs.push_back({u(rng), u(rng), 0.06 + 0.1 * u(rng), {u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5}});
    const Real freq = 3 + 2 * u(rng), phase = 6.28 * u(rng);
    RasterTexture t;
    t.width = t.height = res;
    t.rgb.assign(std::size_t(res) * std::size_t(res) * 3, 0);
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            const Real s = (x + 0.5) / res, r = (y + 0.5) / res;
            Vec3 c{0.35 + 0.3 * s, 0.45 + 0.15 * r, 0.55 - 0.25 * s};
            c += Vec3{0.08, -0.06, 0.05} * std::sin(6.2831853 * freq * (s + 0.5 * r) + phase);
            for (const auto &b : blobs) {
                const Real d2 = ((s - b.x) * (s - b.x) + (r - b.y) * (r - b.y)) / (b.r * b.r);
                c += b.c * (0.5 * std::exp(-d2));
            }
            for (int k = 0; k < 3; ++k)
                c[k] = std::clamp<Real>(c[k], 0.05, 0.95);
            t.set(x, y, c);
        }
    return t;
}

inline RasterTexture checker_texture(int res, int cells, Vec3 a, Vec3 b) {
    RasterTexture t;
    t.width = t.height = res;
    t.rgb.assign(std::size_t(res) * std::size_t(res) * 3, 0);
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x)
            t.set(x, y, ((x * cells / res) + (y * cells / res)) % 2 ? a : b);
    return t;
}

inline RasterTexture flat_texture(Vec3 c) {
    RasterTexture t;
    t.rgb = {c.x, c.y, c.z};
    return t;
}

/// Views spread over an arc in front of `target`, alternating elevation.
inline std::vector<Camera> arc_cameras(const SyntheticSpec &spec, Vec3 target, Real radius, Real spread_deg,
                                       Real focal_scale) {
    std::vector<Camera> cams;
    const Real deg = 3.14159265358979323846 / 180;
    for (int i = 0; i < spec.views; ++i) {
        const Real f = spec.views > 1 ? Real(i) / (spec.views - 1) : 0.5;
        const Real az = (-spread_deg + 2 * spread_deg * f) * deg;
        const Real el = (i % 2 ? 8 : -8) * deg;
        const Vec3 eye = target + Vec3{radius * std::sin(az) * std::cos(el), radius * std::sin(el),
                                       radius * std::cos(az) * std::cos(el)};
        cams.push_back(look_at(eye, target, {0, 1, 0}, focal_scale * spec.width, spec.width, spec.height));
    }
    return cams;
}

inline void default_split(Dataset &ds) {
    // Every fourth view (offset 1) is held out; these sit inside the arc.
    for (std::size_t i = 0; i < ds.cameras.size(); ++i)
        (ds.cameras.size() > 1 && i % 4 == 1 ? ds.test : ds.train).push_back(i);
}

inline void sample_points(Synthetic &s, std::size_t per_quad, std::mt19937_64 &rng) {
    std::uniform_real_distribution<Real> u(-1, 1);
    for (const auto &q : s.quads)
        for (std::size_t i = 0; i < per_quad; ++i) {
            const Real a = u(rng) * q.half_extent.x, b = u(rng) * q.half_extent.y;
            s.dataset.points.positions.push_back(q.center + q.axis_u * a + q.axis_v * b);
            s.dataset.points.colors.push_back(quad_color(q, a, b));
        }
}

} // namespace detail

/// Planar ground-truth scenes with reference views rendered by the quad
/// ray tracer (no code shared with the splat renderer).
inline Synthetic make_synthetic(const SyntheticSpec &spec) {
    if (spec.views < 1 || spec.width < 1 || spec.height < 1)
        throw std::invalid_argument("synthetic: views, width and height must be positive");
    std::mt19937_64 rng(spec.seed);
    Synthetic s;
    const std::string &n = spec.name;
    if (n == "textured-quad") {
        // A large quad in the plane z = 0 that fills every view.
        Quad q;
        q.half_extent = {4, 4};
        q.texture = detail::procedural_texture(96, rng);
        s.quads = {q};
        s.dataset.cameras = detail::arc_cameras(spec, {0, 0, 0}, 3, 25, 1.0);
        s.dataset.bounds = Aabb{{-2.2, -2.2, -0.02}, {2.2, 2.2, 0.02}};
    } else if (n == "half-flat-half-noise") {
        // Left (x < 0) constant, right white noise at ~2 pixel cells.
        Quad q;
        q.half_extent = {4, 4};
        const int res = 96;
        q.texture.width = q.texture.height = res;
        q.texture.rgb.assign(std::size_t(res) * res * 3, 0);
        std::uniform_real_distribution<Real> u(0.1, 0.9);
        for (int y = 0; y < res; ++y)
            for (int x = 0; x < res; ++x)
                q.texture.set(x, y, x < res / 2 ? Vec3{0.62, 0.45, 0.3} : Vec3{u(rng), u(rng), u(rng)});
        s.quads = {q};
        s.dataset.cameras = detail::arc_cameras(spec, {0, 0, 0}, 3, 25, 1.0);
        s.dataset.bounds = Aabb{{-2.2, -2.2, -0.02}, {2.2, 2.2, 0.02}};
    } else if (n == "two-quads-occlusion") {
        Quad back;
        back.center = {0, 0, -1};
        back.half_extent = {1.2, 1.2};
        back.alpha = 0.5;
        back.texture = detail::flat_texture({0.1, 0.3, 0.9});
        Quad front;
        front.center = {0, 0, 0};
        front.half_extent = {0.6, 0.6};
        front.alpha = 0.5;
        front.texture = detail::flat_texture({0.9, 0.2, 0.1});
        s.quads = {front, back};
        s.dataset.cameras = detail::arc_cameras(spec, {0, 0, 0}, 4, 15, 1.0);
        s.dataset.bounds = Aabb{{-1.2, -1.2, -1.02}, {1.2, 1.2, 0.02}};
    } else if (n == "box-room") {
        // Five textured walls of a 4 × 3 × 6 box; cameras inside near the
        // open front look toward the back wall.
        const Real hx = 2, hy = 1.5, z0 = -4, z1 = 2;
        const Real zc = (z0 + z1) / 2, hz = (z1 - z0) / 2;
        Quad backw, floor, ceil, left, right;
        backw.center = {0, 0, z0};
        backw.half_extent = {hx, hy};
        backw.texture = detail::procedural_texture(48, rng);
        floor.center = {0, -hy, zc};
        floor.axis_u = {1, 0, 0};
        floor.axis_v = {0, 0, 1};
        floor.half_extent = {hx, hz};
        floor.texture = detail::checker_texture(48, 6, {0.8, 0.75, 0.6}, {0.3, 0.25, 0.2});
        ceil = floor;
        ceil.center = {0, hy, zc};
        ceil.texture = detail::flat_texture({0.85, 0.85, 0.8});
        left.center = {-hx, 0, zc};
        left.axis_u = {0, 0, 1};
        left.axis_v = {0, 1, 0};
        left.half_extent = {hz, hy};
        left.texture = detail::procedural_texture(48, rng);
        right = left;
        right.center = {hx, 0, zc};
        right.texture = detail::checker_texture(48, 4, {0.2, 0.5, 0.3}, {0.6, 0.8, 0.5});
        s.quads = {backw, floor, ceil, left, right};
        std::uniform_real_distribution<Real> jitter(-0.5, 0.5);
        for (int i = 0; i < spec.views; ++i) {
            const Real f = spec.views > 1 ? Real(i) / (spec.views - 1) : 0.5;
            const Vec3 eye{-0.8 + 1.6 * f, (i % 2 ? 0.25 : -0.25), 1.0};
            const Vec3 target{0.6 * (f - 0.5) * 2 + 0.3 * jitter(rng), 0.2 * jitter(rng), z0};
            s.dataset.cameras.push_back(look_at(eye, target, {0, 1, 0}, 0.6 * spec.width, spec.width, spec.height));
        }
        s.dataset.bounds = Aabb{{-hx, -hy, z0}, {hx, hy, z1}};
        detail::sample_points(s, 64, rng);
    } else {
        std::string known;
        for (const auto &k : synthetic_names())
            known += (known.empty() ? "" : ", ") + k;
        throw std::invalid_argument("unknown synthetic scene '" + n + "' (known: " + known + ")");
    }
    for (const auto &c : s.dataset.cameras)
        s.dataset.images.push_back(quad_render(c, s.quads));
    detail::default_split(s.dataset);
    return s;
}

/// One surfel reproducing `q` wherever the quad covers the view: a huge flat
/// falloff, gray SH base and the raster as texel offsets around it. Raster
/// cells must be square.
inline Scene surfel_equivalent(const Quad &q) {
    const auto &tex = q.texture;
    const Real k = 2 * q.half_extent.x / tex.width;
    if (std::abs(2 * q.half_extent.y / tex.height - k) > 1e-12 * k)
        throw std::invalid_argument("surfel_equivalent: raster cells are not square");
    if (tex.width > kMaxTextureRes || tex.height > kMaxTextureRes)
        throw std::invalid_argument("surfel_equivalent: raster exceeds the texture cap");
    Primitive p;
    p.center = q.center;
    Mat3 m;
    m.col = {q.axis_u, q.axis_v, cross(q.axis_u, q.axis_v)};
    p.rotation = quat_from_matrix(m);
    p.scales = {1e6, 1e6};
    p.opacity_logit = q.alpha < 1 ? logit(q.alpha) : 40;
    for (int c = 0; c < 3; ++c)
        p.sh[std::size_t(c * kShCoeffs)] = sh_dc_from_color(0.5);
    TextureGrid g(tex.width, tex.height, k);
    for (int i = 0; i < tex.width; ++i)
        for (int j = 0; j < tex.height; ++j) {
            const Vec3 c = tex.texel(i, j);
            for (int ch = 0; ch < 3; ++ch)
                g.at(i, j, ch) = deactivate(c[ch] - 0.5);
        }
    Scene s;
    s.prims = {p};
    s.textures = TexturePool::from_grids(std::vector<TextureGrid>{g});
    return s;
}

// ------------------------------------------------------------ checkpoints

inline constexpr char kCheckpointMagic[4] = {'S', 'P', 'T', 'X'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    Scene scene;
    std::uint32_t iteration = 0;
    /// Training configuration echo (JSON text).
    std::string config;

    friend bool operator==(const Checkpoint &, const Checkpoint &) = default;
};

/// Per-primitive float32 values on disk: 58 splat parameters + texel size.
inline constexpr std::size_t kPrimFloats = 59;
/// Per-primitive layout metadata: t2p exponent, res_u, res_v, offset (u, v).
inline constexpr std::size_t kPrimMetaBytes = 4 + 4 + 4 + 8;

namespace detail {

class Writer {
  public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i)
            bytes.push_back(std::uint8_t(v >> (8 * i)));
    }
    void i32(std::int32_t v) { u32(std::uint32_t(v)); }
    void f32(Real v) { u32(std::bit_cast<std::uint32_t>(float(v))); }
    void raw(const void *p, std::size_t n) {
        const auto *b = static_cast<const std::uint8_t *>(p);
        bytes.insert(bytes.end(), b, b + n);
    }
    std::vector<std::uint8_t> bytes;
};

class Reader {
  public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size())
            throw IoError("truncated checkpoint");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= std::uint32_t(bytes_[pos_ + std::size_t(i)]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::int32_t i32() { return std::int32_t(u32()); }
    Real f32() { return std::bit_cast<float>(u32()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char *>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

  private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

} // namespace detail

/// Byte layout (little-endian):
///   "SPTX", u32 version, u32 iteration, u32 n_prims, u32 n_texels,
///   u32 config length, config bytes,
///   n_prims × 59 f32 (center 3, scales 2, rotation 4, opacity logit 1,
///                     SH 48, texel size 1),
///   n_prims × (i32 t2p exponent, u32 res_u, u32 res_v, f32 offset u, f32 offset v),
///   n_texels × 3 f32 pre-activation texels in pool order.
inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint &ck) {
    const Scene &s = ck.scene;
    if (s.textures.size() != s.prims.size())
        throw std::invalid_argument("checkpoint: texture pool does not match primitive count");
    detail::Writer w;
    w.raw(kCheckpointMagic, 4);
    w.u32(kCheckpointVersion);
    w.u32(ck.iteration);
    w.u32(std::uint32_t(s.prims.size()));
    w.u32(std::uint32_t(s.textures.total_texels()));
    w.u32(std::uint32_t(ck.config.size()));
    w.raw(ck.config.data(), ck.config.size());
    for (std::size_t i = 0; i < s.prims.size(); ++i) {
        const Primitive &p = s.prims[i];
        for (int k = 0; k < 3; ++k)
            w.f32(p.center[k]);
        w.f32(p.scales.x);
        w.f32(p.scales.y);
        for (const Real q : p.rotation)
            w.f32(q);
        w.f32(p.opacity_logit);
        for (const Real v : p.sh)
            w.f32(v);
        w.f32(s.textures.layout(i).texel_size);
    }
    for (std::size_t i = 0; i < s.prims.size(); ++i) {
        const GridLayout &l = s.textures.layout(i);
        w.i32(s.prims[i].t2p_exponent);
        w.u32(std::uint32_t(std::max(0, l.res_u)));
        w.u32(std::uint32_t(std::max(0, l.res_v)));
        w.f32(l.offset.x);
        w.f32(l.offset.y);
    }
    for (const Real v : s.textures.data())
        w.f32(v);
    return std::move(w.bytes);
}

inline Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    detail::Reader r(bytes);
    if (r.str(4) != std::string(kCheckpointMagic, 4))
        throw IoError("not a SPTX checkpoint");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw IoError("unsupported SPTX version " + std::to_string(version) + " (supported: " +
                      std::to_string(kCheckpointVersion) + ")");
    Checkpoint ck;
    ck.iteration = r.u32();
    const std::size_t n = r.u32();
    const std::size_t n_texels = r.u32();
    ck.config = r.str(r.u32());
    r.need(n * (kPrimFloats * 4 + kPrimMetaBytes));
    std::vector<Primitive> prims(n);
    std::vector<Real> texel_size(n);
    for (std::size_t i = 0; i < n; ++i) {
        Primitive &p = prims[i];
        for (int k = 0; k < 3; ++k)
            p.center[k] = r.f32();
        p.scales.x = r.f32();
        p.scales.y = r.f32();
        for (Real &q : p.rotation)
            q = r.f32();
        p.opacity_logit = r.f32();
        for (Real &v : p.sh)
            v = r.f32();
        texel_size[i] = r.f32();
    }
    std::vector<TextureGrid> grids(n);
    std::size_t counted = 0;
    for (std::size_t i = 0; i < n; ++i) {
        prims[i].t2p_exponent = r.i32();
        GridLayout &l = grids[i].layout;
        const std::uint32_t ru = r.u32(), rv = r.u32();
        if (ru > std::uint32_t(kMaxTextureRes) || rv > std::uint32_t(kMaxTextureRes))
            throw IoError("checkpoint: texture resolution out of range");
        l.res_u = int(ru);
        l.res_v = int(rv);
        l.texel_size = texel_size[i];
        l.offset.x = r.f32();
        l.offset.y = r.f32();
        counted += l.texel_count();
    }
    if (counted != n_texels)
        throw IoError("checkpoint: texel count does not match layouts");
    r.need(n_texels * 12);
    for (auto &g : grids) {
        g.texels.resize(g.layout.texel_count() * 3);
        for (Real &v : g.texels)
            v = r.f32();
    }
    if (!r.done())
        throw IoError("checkpoint: trailing bytes");
    ck.scene.prims = std::move(prims);
    ck.scene.textures = TexturePool::from_grids(grids);
    return ck;
}

inline void save_checkpoint(const fs::path &path, const Checkpoint &ck) {
    const auto bytes = serialize_checkpoint(ck);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char *>(bytes.data()), std::streamsize(bytes.size()));
    if (!out)
        throw IoError("short write to " + path.string());
}

inline Checkpoint load_checkpoint(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return deserialize_checkpoint(bytes);
    } catch (const IoError &e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

/// Rounds every stored value to float32 so the in-memory scene equals what
/// a checkpoint holds.
inline void quantize_to_storage(Scene &s) {
    for (auto &p : s.prims) {
        for (int k = 0; k < 3; ++k)
            p.center[k] = to_storage(p.center[k]);
        p.scales = {to_storage(p.scales.x), to_storage(p.scales.y)};
        for (Real &q : p.rotation)
            q = to_storage(q);
        p.opacity_logit = to_storage(p.opacity_logit);
        for (Real &v : p.sh)
            v = to_storage(v);
    }
    auto grids = s.textures.grids();
    for (auto &g : grids) {
        g.layout.texel_size = to_storage(g.layout.texel_size);
        g.layout.offset = {to_storage(g.layout.offset.x), to_storage(g.layout.offset.y)};
        for (Real &v : g.texels)
            v = to_storage(v);
    }
    s.textures = TexturePool::from_grids(grids);
}

} // namespace texsplat
