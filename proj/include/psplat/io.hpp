#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "psplat/core.hpp"

// File codecs: binary PLY point clouds and Gaussian checkpoints, PFM float
// maps (grayscale Pf and 3-channel PF), P6/P5 netpbm images and masks, and
// camera JSON. All multi-byte payloads are little-endian on disk unless the
// format header says otherwise; path-level writers go through a temp file and
// an atomic rename so failures never leave partial output.

namespace psplat::io {

static_assert(std::endian::native == std::endian::little,
              "codecs assume a little-endian host");

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// low-level helpers

namespace detail {

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& is, void* p, size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is.gcount()) != n)
        throw MalformedHeader("file body ends before the declared payload");
}

inline float bswap(float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    u = __builtin_bswap32(u);
    std::memcpy(&v, &u, 4);
    return v;
}

inline std::string next_line(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw MalformedHeader("unexpected end of header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

}  // namespace detail

// Writes through a temporary file and renames into place, so a crash or
// failure mid-write cannot leave a truncated file at `path`.
inline void atomic_write_file(const std::string& path,
                              const std::function<void(std::ostream&)>& fn) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error("cannot open for writing: " + tmp);
        fn(os);
        os.flush();
        if (!os) {
            std::remove(tmp.c_str());
            throw Error("write failed: " + tmp);
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw Error("cannot rename into place: " + path);
    }
}

// ---------------------------------------------------------------------------
// PLY

// Ingested point cloud: positions, colors in [0,1], per-point confidence
// (1.0 when the file carries no confidence property).
struct PointSet {
    std::vector<Vec3> positions;
    std::vector<Vec3> colors;
    std::vector<double> confidences;

    size_t size() const { return positions.size(); }
};

namespace detail {

struct PlyProperty {
    std::string name;
    int size = 0;      // bytes
    bool is_float = false;
    bool is_uchar = false;
    size_t offset = 0;  // within one record
};

struct PlyHeader {
    size_t vertex_count = 0;
    std::vector<PlyProperty> properties;
    size_t record_size = 0;

    const PlyProperty* find(const std::string& name) const {
        for (const auto& p : properties)
            if (p.name == name) return &p;
        return nullptr;
    }
    const PlyProperty& require(const std::string& name) const {
        const PlyProperty* p = find(name);
        if (!p) throw MissingProperty("ply: missing vertex property " + name);
        return *p;
    }
};

inline int ply_type_size(const std::string& type) {
    if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") return 1;
    if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") return 2;
    if (type == "int" || type == "uint" || type == "int32" || type == "uint32" ||
        type == "float" || type == "float32")
        return 4;
    if (type == "double" || type == "float64") return 8;
    throw MalformedHeader("ply: unknown property type " + type);
}

inline PlyHeader read_ply_header(std::istream& is) {
    if (next_line(is) != "ply") throw MalformedHeader("ply: missing magic line");
    PlyHeader header;
    bool in_vertex = false;
    bool format_seen = false;
    for (;;) {
        const std::string line = next_line(is);
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        if (word == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt == "ascii" || fmt == "binary_big_endian")
                throw UnsupportedFormat("ply: only binary_little_endian is supported");
            if (fmt != "binary_little_endian") throw MalformedHeader("ply: bad format line");
            format_seen = true;
        } else if (word == "element") {
            std::string name;
            size_t count = 0;
            ls >> name >> count;
            in_vertex = name == "vertex";
            if (in_vertex) header.vertex_count = count;
        } else if (word == "property") {
            if (!in_vertex) continue;  // properties of other elements are ignored
            std::string type, name;
            ls >> type >> name;
            if (type == "list") throw UnsupportedFormat("ply: list properties unsupported");
            PlyProperty p;
            p.name = name;
            p.size = ply_type_size(type);
            p.is_float = type == "float" || type == "float32";
            p.is_uchar = type == "uchar" || type == "uint8";
            p.offset = header.record_size;
            header.record_size += static_cast<size_t>(p.size);
            header.properties.push_back(p);
        } else if (word == "end_header") {
            break;
        } else if (word == "comment" || word == "obj_info") {
            continue;
        } else {
            throw MalformedHeader("ply: unrecognized header line: " + line);
        }
    }
    if (!format_seen) throw MalformedHeader("ply: missing format line");
    return header;
}

inline float ply_float_at(const char* record, const PlyProperty& p) {
    if (!p.is_float) throw UnsupportedFormat("ply: property " + p.name + " must be float32");
    float v;
    std::memcpy(&v, record + p.offset, 4);
    return v;
}

inline uint8_t ply_uchar_at(const char* record, const PlyProperty& p) {
    if (!p.is_uchar) throw UnsupportedFormat("ply: property " + p.name + " must be uchar");
    return static_cast<uint8_t>(record[p.offset]);
}

}  // namespace detail

inline void write_point_ply(std::ostream& os, const PointSet& points) {
    if (points.colors.size() != points.size() || points.confidences.size() != points.size())
        throw LengthMismatch("point set arrays disagree on length");
    os << "ply\nformat binary_little_endian 1.0\n";
    os << "element vertex " << points.size() << "\n";
    os << "property float x\nproperty float y\nproperty float z\n";
    os << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    os << "property float confidence\n";
    os << "end_header\n";
    for (size_t i = 0; i < points.size(); ++i) {
        const float xyz[3] = {static_cast<float>(points.positions[i][0]),
                              static_cast<float>(points.positions[i][1]),
                              static_cast<float>(points.positions[i][2])};
        detail::write_bytes(os, xyz, 12);
        for (int c = 0; c < 3; ++c) {
            const double v = std::clamp(points.colors[i][c], 0.0, 1.0);
            const uint8_t b = static_cast<uint8_t>(std::lround(v * 255.0));
            detail::write_bytes(os, &b, 1);
        }
        const float conf = static_cast<float>(points.confidences[i]);
        detail::write_bytes(os, &conf, 4);
    }
}

inline PointSet read_point_ply(std::istream& is) {
    const auto header = detail::read_ply_header(is);
    const auto& px = header.require("x");
    const auto& py = header.require("y");
    const auto& pz = header.require("z");
    const auto& pr = header.require("red");
    const auto& pg = header.require("green");
    const auto& pb = header.require("blue");
    const auto* pc = header.find("confidence");

    PointSet out;
    out.positions.reserve(header.vertex_count);
    std::vector<char> record(header.record_size);
    for (size_t i = 0; i < header.vertex_count; ++i) {
        detail::read_bytes(is, record.data(), record.size());
        out.positions.emplace_back(detail::ply_float_at(record.data(), px),
                                   detail::ply_float_at(record.data(), py),
                                   detail::ply_float_at(record.data(), pz));
        out.colors.emplace_back(detail::ply_uchar_at(record.data(), pr) / 255.0,
                                detail::ply_uchar_at(record.data(), pg) / 255.0,
                                detail::ply_uchar_at(record.data(), pb) / 255.0);
        out.confidences.push_back(pc ? detail::ply_float_at(record.data(), *pc) : 1.0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gaussian checkpoints: splatting-convention PLY. Spherical-harmonics rest
// coefficients are stored channel-major (all R, then G, then B) and the
// degree is inferred from the f_rest property count, so a checkpoint is a
// single self-describing file.

inline void write_gaussian_ply(std::ostream& os, const GaussianCloud& cloud) {
    cloud.validate();
    const int rest = (cloud.coeff_count() - 1) * 3;
    os << "ply\nformat binary_little_endian 1.0\n";
    os << "element vertex " << cloud.size() << "\n";
    os << "property float x\nproperty float y\nproperty float z\n";
    os << "property float nx\nproperty float ny\nproperty float nz\n";
    for (int c = 0; c < 3; ++c) os << "property float f_dc_" << c << "\n";
    for (int c = 0; c < rest; ++c) os << "property float f_rest_" << c << "\n";
    os << "property float opacity\n";
    for (int c = 0; c < 3; ++c) os << "property float scale_" << c << "\n";
    for (int c = 0; c < 4; ++c) os << "property float rot_" << c << "\n";
    os << "end_header\n";

    const int coeffs = cloud.coeff_count();
    std::vector<float> row(static_cast<size_t>(6 + 3 + rest + 1 + 3 + 4));
    for (size_t i = 0; i < cloud.size(); ++i) {
        size_t k = 0;
        for (int c = 0; c < 3; ++c) row[k++] = static_cast<float>(cloud.positions[i][c]);
        for (int c = 0; c < 3; ++c) row[k++] = 0.0f;  // normals kept for layout parity
        const double* sh = cloud.sh_of(i);
        for (int ch = 0; ch < 3; ++ch) row[k++] = static_cast<float>(sh[ch]);
        for (int ch = 0; ch < 3; ++ch)
            for (int m = 1; m < coeffs; ++m) row[k++] = static_cast<float>(sh[m * 3 + ch]);
        row[k++] = static_cast<float>(cloud.opacities[i]);
        for (int c = 0; c < 3; ++c) row[k++] = static_cast<float>(cloud.log_scales[i][c]);
        for (int c = 0; c < 4; ++c) row[k++] = static_cast<float>(cloud.rotations[i][c]);
        detail::write_bytes(os, row.data(), row.size() * 4);
    }
}

inline GaussianCloud read_gaussian_ply(std::istream& is) {
    const auto header = detail::read_ply_header(is);
    int rest = 0;
    while (header.find("f_rest_" + std::to_string(rest))) ++rest;
    int degree = -1;
    for (int d = 0; d <= 3; ++d)
        if (rest == (sh::coeff_count(d) - 1) * 3) degree = d;
    if (degree < 0)
        throw UnsupportedFormat("gaussian ply: f_rest count matches no degree 0..3");

    GaussianCloud cloud;
    cloud.sh_degree = degree;
    cloud.resize(header.vertex_count);
    const int coeffs = cloud.coeff_count();

    std::vector<const detail::PlyProperty*> rest_props(static_cast<size_t>(rest));
    for (int c = 0; c < rest; ++c)
        rest_props[c] = &header.require("f_rest_" + std::to_string(c));
    const auto &px = header.require("x"), &py = header.require("y"), &pz = header.require("z");
    const detail::PlyProperty* dc[3];
    for (int c = 0; c < 3; ++c) dc[c] = &header.require("f_dc_" + std::to_string(c));
    const auto& pop = header.require("opacity");
    const detail::PlyProperty *ps[3], *pq[4];
    for (int c = 0; c < 3; ++c) ps[c] = &header.require("scale_" + std::to_string(c));
    for (int c = 0; c < 4; ++c) pq[c] = &header.require("rot_" + std::to_string(c));

    std::vector<char> record(header.record_size);
    for (size_t i = 0; i < header.vertex_count; ++i) {
        detail::read_bytes(is, record.data(), record.size());
        const char* r = record.data();
        cloud.positions[i] = Vec3(detail::ply_float_at(r, px), detail::ply_float_at(r, py),
                                  detail::ply_float_at(r, pz));
        double* sh = cloud.sh_of(i);
        for (int ch = 0; ch < 3; ++ch) sh[ch] = detail::ply_float_at(r, *dc[ch]);
        for (int ch = 0; ch < 3; ++ch)
            for (int m = 1; m < coeffs; ++m)
                sh[m * 3 + ch] = detail::ply_float_at(r, *rest_props[ch * (coeffs - 1) + m - 1]);
        cloud.opacities[i] = detail::ply_float_at(r, pop);
        for (int c = 0; c < 3; ++c) cloud.log_scales[i][c] = detail::ply_float_at(r, *ps[c]);
        Vec4 q;
        for (int c = 0; c < 4; ++c) q[c] = detail::ply_float_at(r, *pq[c]);
        cloud.rotations[i] = q;
    }
    return cloud;
}

// ---------------------------------------------------------------------------
// PFM float maps. Grayscale "Pf" and 3-channel "PF"; the sign of the scale
// line encodes endianness (negative = little). Rows are stored bottom-up.
// NaN payloads survive round-trips bit-exactly.

namespace detail {

struct PfmHeader {
    bool color = false;
    int width = 0, height = 0;
    bool little_endian = true;
};

inline PfmHeader read_pfm_header(std::istream& is) {
    PfmHeader h;
    std::string magic;
    double scale = 0;
    if (!(is >> magic >> h.width >> h.height >> scale))
        throw MalformedHeader("pfm: truncated header");
    if (magic == "PF")
        h.color = true;
    else if (magic == "Pf")
        h.color = false;
    else
        throw MalformedHeader("pfm: bad magic " + magic);
    if (h.width < 1 || h.height < 1) throw MalformedHeader("pfm: bad dimensions");
    if (!std::isfinite(scale) || scale == 0.0)
        throw NonFiniteScale("pfm: scale must be finite and nonzero");
    h.little_endian = scale < 0;
    const int c = is.get();
    if (c != '\n' && c != ' ' && c != '\r' && c != '\t')
        throw MalformedHeader("pfm: missing whitespace after scale");
    return h;
}

inline void write_pfm_header(std::ostream& os, bool color, int width, int height) {
    os << (color ? "PF" : "Pf") << "\n" << width << " " << height << "\n-1.0\n";
}

}  // namespace detail

inline void write_pfm(std::ostream& os, const PixelGrid<double>& map) {
    detail::write_pfm_header(os, false, map.width, map.height);
    std::vector<float> row(static_cast<size_t>(map.width));
    for (int y = map.height - 1; y >= 0; --y) {
        for (int x = 0; x < map.width; ++x) row[static_cast<size_t>(x)] =
            static_cast<float>(map.at(y, x));
        detail::write_bytes(os, row.data(), row.size() * 4);
    }
}

inline PixelGrid<double> read_pfm(std::istream& is) {
    const auto h = detail::read_pfm_header(is);
    if (h.color) throw UnsupportedFormat("pfm: expected grayscale Pf, found color PF");
    PixelGrid<double> map(h.width, h.height, 0.0);
    std::vector<float> row(static_cast<size_t>(h.width));
    for (int y = h.height - 1; y >= 0; --y) {
        detail::read_bytes(is, row.data(), row.size() * 4);
        for (int x = 0; x < h.width; ++x) {
            const float v = h.little_endian ? row[static_cast<size_t>(x)]
                                            : detail::bswap(row[static_cast<size_t>(x)]);
            map.at(y, x) = v;
        }
    }
    return map;
}

inline void write_pfm3(std::ostream& os, const PixelGrid<Vec3>& map) {
    detail::write_pfm_header(os, true, map.width, map.height);
    std::vector<float> row(static_cast<size_t>(map.width) * 3);
    for (int y = map.height - 1; y >= 0; --y) {
        for (int x = 0; x < map.width; ++x)
            for (int c = 0; c < 3; ++c)
                row[static_cast<size_t>(x) * 3 + c] = static_cast<float>(map.at(y, x)[c]);
        detail::write_bytes(os, row.data(), row.size() * 4);
    }
}

inline PixelGrid<Vec3> read_pfm3(std::istream& is) {
    const auto h = detail::read_pfm_header(is);
    if (!h.color) throw UnsupportedFormat("pfm: expected color PF, found grayscale Pf");
    PixelGrid<Vec3> map(h.width, h.height, Vec3::Zero());
    std::vector<float> row(static_cast<size_t>(h.width) * 3);
    for (int y = h.height - 1; y >= 0; --y) {
        detail::read_bytes(is, row.data(), row.size() * 4);
        for (int x = 0; x < h.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const float v = h.little_endian ? row[static_cast<size_t>(x) * 3 + c]
                                                : detail::bswap(row[static_cast<size_t>(x) * 3 + c]);
                map.at(y, x)[c] = v;
            }
    }
    return map;
}

// ---------------------------------------------------------------------------
// netpbm: P6 images, P5 masks (0 = excluded, nonzero = included).

inline void write_ppm(std::ostream& os, const ImageBuffer& img) {
    os << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<uint8_t> row(static_cast<size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(img.at(y, x)[c], 0.0, 1.0);
                row[static_cast<size_t>(x) * 3 + c] =
                    static_cast<uint8_t>(std::lround(v * 255.0));
            }
        detail::write_bytes(os, row.data(), row.size());
    }
}

namespace detail {

inline void read_pnm_header(std::istream& is, const char* magic_want, int& width, int& height) {
    std::string magic;
    int maxval = 0;
    if (!(is >> magic >> width >> height >> maxval))
        throw MalformedHeader("pnm: truncated header");
    if (magic != magic_want)
        throw MalformedHeader(std::string("pnm: expected ") + magic_want + ", found " + magic);
    if (width < 1 || height < 1) throw MalformedHeader("pnm: bad dimensions");
    if (maxval != 255) throw UnsupportedFormat("pnm: only 8-bit (maxval 255) supported");
    if (is.get() != '\n') throw MalformedHeader("pnm: missing newline after maxval");
}

}  // namespace detail

inline ImageBuffer read_ppm(std::istream& is) {
    int width = 0, height = 0;
    detail::read_pnm_header(is, "P6", width, height);
    ImageBuffer img(width, height);
    std::vector<uint8_t> row(static_cast<size_t>(width) * 3);
    for (int y = 0; y < height; ++y) {
        detail::read_bytes(is, row.data(), row.size());
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(y, x)[c] = row[static_cast<size_t>(x) * 3 + c] / 255.0;
    }
    return img;
}

inline void write_pgm_mask(std::ostream& os, const PixelMask& mask) {
    os << "P5\n" << mask.width << " " << mask.height << "\n255\n";
    std::vector<uint8_t> row(static_cast<size_t>(mask.width));
    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x)
            row[static_cast<size_t>(x)] = mask.at(y, x) ? 255 : 0;
        detail::write_bytes(os, row.data(), row.size());
    }
}

inline PixelMask read_pgm_mask(std::istream& is) {
    int width = 0, height = 0;
    detail::read_pnm_header(is, "P5", width, height);
    PixelMask mask(width, height, false);
    std::vector<uint8_t> row(static_cast<size_t>(width));
    for (int y = 0; y < height; ++y) {
        detail::read_bytes(is, row.data(), row.size());
        for (int x = 0; x < width; ++x) mask.at(y, x) = row[static_cast<size_t>(x)] ? 1 : 0;
    }
    return mask;
}

// ---------------------------------------------------------------------------
// camera JSON: {width, height, fx, fy, cx, cy, R (9, row-major,
// camera-to-world), t (3, camera center), near, far}. A file may hold one
// camera object or an array of them. Loading validates core invariants.

inline json camera_to_json(const Camera& cam) {
    json j;
    j["width"] = cam.width;
    j["height"] = cam.height;
    j["fx"] = cam.fx;
    j["fy"] = cam.fy;
    j["cx"] = cam.cx;
    j["cy"] = cam.cy;
    json r = json::array();
    for (int row = 0; row < 3; ++row)
        for (int col = 0; col < 3; ++col) r.push_back(cam.rotation(row, col));
    j["R"] = r;
    j["t"] = json::array({cam.center[0], cam.center[1], cam.center[2]});
    j["near"] = cam.near;
    j["far"] = cam.far;
    return j;
}

inline Camera camera_from_json(const json& j) {
    if (!j.is_object()) throw SchemaError("camera json: expected an object");
    for (const char* key : {"width", "height", "fx", "fy", "cx", "cy", "R", "t", "near", "far"})
        if (!j.contains(key)) throw SchemaError(std::string("camera json: missing field ") + key);

    Camera cam;
    try {
        cam.width = j.at("width").get<int>();
        cam.height = j.at("height").get<int>();
        cam.fx = j.at("fx").get<double>();
        cam.fy = j.at("fy").get<double>();
        cam.cx = j.at("cx").get<double>();
        cam.cy = j.at("cy").get<double>();
        const auto& r = j.at("R");
        const auto& t = j.at("t");
        if (!r.is_array() || r.size() != 9) throw SchemaError("camera json: R must have 9 floats");
        if (!t.is_array() || t.size() != 3) throw SchemaError("camera json: t must have 3 floats");
        for (int row = 0; row < 3; ++row)
            for (int col = 0; col < 3; ++col)
                cam.rotation(row, col) = r.at(static_cast<size_t>(row * 3 + col)).get<double>();
        for (int c = 0; c < 3; ++c) cam.center[c] = t.at(static_cast<size_t>(c)).get<double>();
        cam.near = j.at("near").get<double>();
        cam.far = j.at("far").get<double>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("camera json: ") + e.what());
    }
    cam.validate();
    return cam;
}

inline std::vector<Camera> cameras_from_json(const json& j) {
    std::vector<Camera> cams;
    if (j.is_array()) {
        for (const auto& item : j) cams.push_back(camera_from_json(item));
    } else {
        cams.push_back(camera_from_json(j));
    }
    return cams;
}

inline json cameras_to_json(const std::vector<Camera>& cams) {
    json arr = json::array();
    for (const Camera& c : cams) arr.push_back(camera_to_json(c));
    return arr;
}

// ---------------------------------------------------------------------------
// path-level wrappers

template <typename T>
T load_stream(const std::string& path, T (*reader)(std::istream&)) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open: " + path);
    return reader(is);
}

inline PointSet load_point_ply(const std::string& path) {
    return load_stream(path, read_point_ply);
}
inline void save_point_ply(const std::string& path, const PointSet& points) {
    atomic_write_file(path, [&](std::ostream& os) { write_point_ply(os, points); });
}

inline GaussianCloud load_gaussian_ply(const std::string& path) {
    return load_stream(path, read_gaussian_ply);
}
inline void save_gaussian_ply(const std::string& path, const GaussianCloud& cloud) {
    atomic_write_file(path, [&](std::ostream& os) { write_gaussian_ply(os, cloud); });
}

inline PixelGrid<double> load_pfm(const std::string& path) { return load_stream(path, read_pfm); }
inline void save_pfm(const std::string& path, const PixelGrid<double>& map) {
    atomic_write_file(path, [&](std::ostream& os) { write_pfm(os, map); });
}

inline PixelGrid<Vec3> load_pfm3(const std::string& path) { return load_stream(path, read_pfm3); }
inline void save_pfm3(const std::string& path, const PixelGrid<Vec3>& map) {
    atomic_write_file(path, [&](std::ostream& os) { write_pfm3(os, map); });
}

inline ImageBuffer load_ppm(const std::string& path) { return load_stream(path, read_ppm); }
inline void save_ppm(const std::string& path, const ImageBuffer& img) {
    atomic_write_file(path, [&](std::ostream& os) { write_ppm(os, img); });
}

inline PixelMask load_pgm_mask(const std::string& path) {
    return load_stream(path, read_pgm_mask);
}
inline void save_pgm_mask(const std::string& path, const PixelMask& mask) {
    atomic_write_file(path, [&](std::ostream& os) { write_pgm_mask(os, mask); });
}

inline json load_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open: " + path);
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("json parse error in ") + path + ": " + e.what());
    }
}

inline void save_json(const std::string& path, const json& j) {
    atomic_write_file(path, [&](std::ostream& os) { os << j.dump(2) << "\n"; });
}

inline std::vector<Camera> load_cameras(const std::string& path) {
    return cameras_from_json(load_json(path));
}
inline void save_cameras(const std::string& path, const std::vector<Camera>& cams) {
    save_json(path, cameras_to_json(cams));
}

}  // namespace psplat::io
