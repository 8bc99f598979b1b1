// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "surfsplat/scene_io.hpp"

#include "surfsplat/error.hpp"
#include "surfsplat/sh.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace surfsplat {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::load_error, "cannot open " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    if (!in.good() && !in.eof())
        throw Error(ErrorCode::load_error, "failed reading " + path);
    return buffer.str();
}

void write_file_bytes(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error(ErrorCode::io_error, "failed writing " + path);
}

void ensure_parent_directory(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    std::error_code ec;
    if (!parent.empty()) fs::create_directories(parent, ec);
    if (ec) throw Error(ErrorCode::io_error, "cannot create directory " + parent.string());
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.17g", v);
    return buffer;
}

void put_f32(std::string& out, double v) {
    const float f = static_cast<float>(v);
    std::uint32_t u = 0;
    std::memcpy(&u, &f, sizeof(u));
    out.push_back(static_cast<char>(u & 0xff));
    out.push_back(static_cast<char>((u >> 8) & 0xff));
    out.push_back(static_cast<char>((u >> 16) & 0xff));
    out.push_back(static_cast<char>((u >> 24) & 0xff));
}

double get_f32(const std::string& data, std::size_t offset) {
    const auto byte = [&](std::size_t i) {
        return static_cast<std::uint32_t>(static_cast<unsigned char>(data[offset + i]));
    };
    const std::uint32_t u = byte(0) | (byte(1) << 8) | (byte(2) << 16) | (byte(3) << 24);
    float f = 0.0f;
    std::memcpy(&f, &u, sizeof(f));
    return static_cast<double>(f);
}

void put_u32(std::string& out, std::uint32_t u) {
    out.push_back(static_cast<char>(u & 0xff));
    out.push_back(static_cast<char>((u >> 8) & 0xff));
    out.push_back(static_cast<char>((u >> 16) & 0xff));
    out.push_back(static_cast<char>((u >> 24) & 0xff));
}

std::uint32_t get_u32(const std::string& data, std::size_t offset) {
    const auto byte = [&](std::size_t i) {
        return static_cast<std::uint32_t>(static_cast<unsigned char>(data[offset + i]));
    };
    return byte(0) | (byte(1) << 8) | (byte(2) << 16) | (byte(3) << 24);
}

// Next whitespace-delimited token, treating '#' as a to-end-of-line comment.
std::string next_pnm_token(const std::string& data, std::size_t& pos) {
    while (pos < data.size()) {
        if (std::isspace(static_cast<unsigned char>(data[pos]))) {
            ++pos;
        } else if (data[pos] == '#') {
            while (pos < data.size() && data[pos] != '\n') ++pos;
        } else {
            break;
        }
    }
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    return data.substr(start, pos - start);
}

int parse_positive_int(const std::string& token, const std::string& what,
                       const std::string& path) {
    try {
        std::size_t consumed = 0;
        const int value = std::stoi(token, &consumed);
        if (consumed != token.size() || value <= 0) throw std::invalid_argument(token);
        return value;
    } catch (const std::exception&) {
        throw Error(ErrorCode::load_error, path + ": bad " + what + " '" + token + "'");
    }
}

} // namespace

void write_image(const Image& image, const std::string& path) {
    if (image.channels != 1 && image.channels != 3)
        throw Error(ErrorCode::invalid_input, "only 1- or 3-channel images can be saved");
    if (image.width <= 0 || image.height <= 0)
        throw Error(ErrorCode::invalid_input, "cannot save an empty image");
    ensure_parent_directory(path);

    std::string out = image.channels == 3 ? "P6" : "P5";
    out += "\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    out.reserve(out.size() + image.data.size());
    for (double v : image.data) {
        const double clamped = std::clamp(v, 0.0, 1.0);
        out.push_back(static_cast<char>(std::lround(clamped * 255.0)));
    }
    write_file_bytes(path, out);
}

Image read_image(const std::string& path) {
    const std::string data = read_file_bytes(path);
    std::size_t pos = 0;
    const std::string magic = next_pnm_token(data, pos);
    int channels = 0;
    if (magic == "P6")
        channels = 3;
    else if (magic == "P5")
        channels = 1;
    else
        throw Error(ErrorCode::load_error, path + ": not a binary PPM/PGM file");

    const int width = parse_positive_int(next_pnm_token(data, pos), "width", path);
    const int height = parse_positive_int(next_pnm_token(data, pos), "height", path);
    const int maxval = parse_positive_int(next_pnm_token(data, pos), "maxval", path);
    if (maxval != 255)
        throw Error(ErrorCode::load_error, path + ": unsupported maxval " + std::to_string(maxval));
    ++pos; // single whitespace byte after maxval

    const std::size_t expected =
        static_cast<std::size_t>(width) * height * static_cast<std::size_t>(channels);
    if (data.size() - pos < expected)
        throw Error(ErrorCode::load_error, path + ": truncated pixel data");

    Image image(width, height, channels);
    for (std::size_t i = 0; i < expected; ++i)
        image.data[i] = static_cast<unsigned char>(data[pos + i]) / 255.0;
    return image;
}

void write_camera(const Camera& camera, const std::string& path) {
    ensure_parent_directory(path);
    std::string out = "surfsplat-camera v1\n";
    out += "fx " + format_double(camera.fx) + "\n";
    out += "fy " + format_double(camera.fy) + "\n";
    out += "cx " + format_double(camera.cx) + "\n";
    out += "cy " + format_double(camera.cy) + "\n";
    out += "width " + std::to_string(camera.width) + "\n";
    out += "height " + std::to_string(camera.height) + "\n";
    out += "world_to_camera\n";
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            out += format_double(camera.world_to_camera(r, c));
            out += c == 3 ? "\n" : " ";
        }
    }
    write_file_bytes(path, out);
}

Camera read_camera(const std::string& path) {
    std::istringstream in(read_file_bytes(path));
    const auto expect = [&](const std::string& keyword) {
        std::string token;
        if (!(in >> token) || token != keyword)
            throw Error(ErrorCode::load_error,
                        path + ": expected '" + keyword + "', found '" + token + "'");
    };
    const auto read_double = [&](const std::string& field) {
        double v = 0.0;
        if (!(in >> v))
            throw Error(ErrorCode::load_error, path + ": bad value for " + field);
        return v;
    };

    expect("surfsplat-camera");
    expect("v1");
    Camera camera;
    expect("fx");
    camera.fx = read_double("fx");
    expect("fy");
    camera.fy = read_double("fy");
    expect("cx");
    camera.cx = read_double("cx");
    expect("cy");
    camera.cy = read_double("cy");
    expect("width");
    camera.width = static_cast<int>(read_double("width"));
    expect("height");
    camera.height = static_cast<int>(read_double("height"));
    expect("world_to_camera");
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            camera.world_to_camera(r, c) = read_double("world_to_camera");

    try {
        camera.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::load_error, path + ": " + e.what());
    }
    return camera;
}

void write_obj(const TriangleMesh& mesh, const std::string& path) {
    ensure_parent_directory(path);
    std::string out;
    for (const Vec3& v : mesh.vertices)
        out += "v " + format_double(v.x()) + " " + format_double(v.y()) + " " +
               format_double(v.z()) + "\n";
    for (const Triangle& t : mesh.triangles)
        out += "f " + std::to_string(t[0] + 1) + " " + std::to_string(t[1] + 1) + " " +
               std::to_string(t[2] + 1) + "\n";
    write_file_bytes(path, out);
}

TriangleMesh read_obj(const std::string& path) {
    std::istringstream in(read_file_bytes(path));
    TriangleMesh mesh;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        std::istringstream fields(line);
        std::string tag;
        if (!(fields >> tag)) continue;
        if (tag == "v") {
            Vec3 v;
            if (!(fields >> v.x() >> v.y() >> v.z()))
                throw Error(ErrorCode::load_error,
                            path + ":" + std::to_string(line_number) + ": bad vertex");
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            Triangle t;
            for (int k = 0; k < 3; ++k) {
                std::string token;
                if (!(fields >> token))
                    throw Error(ErrorCode::load_error,
                                path + ":" + std::to_string(line_number) + ": bad face");
                // "i", "i/j" and "i/j/k" all start with the vertex index.
                const long index = std::strtol(token.c_str(), nullptr, 10);
                if (index < 1 || static_cast<std::size_t>(index) > mesh.vertices.size())
                    throw Error(ErrorCode::load_error, path + ":" + std::to_string(line_number) +
                                                           ": face index out of range");
                t[k] = static_cast<std::uint32_t>(index - 1);
            }
            std::string extra;
            if (fields >> extra)
                throw Error(ErrorCode::load_error, path + ":" + std::to_string(line_number) +
                                                       ": only triangles are supported");
            mesh.triangles.push_back(t);
        }
        // Ignore every other record type (comments, normals, uv, ...).
    }
    if (mesh.vertices.empty())
        throw Error(ErrorCode::load_error, path + ": no vertices found");
    mesh.recompute_normals();
    return mesh;
}

namespace {

std::size_t rest_count_for_degree(int degree) {
    return 3 * (sh_coeff_count(degree) - 1);
}

} // namespace

void write_splat_ply(const SplatCloud& cloud, const std::string& path) {
    if (cloud.empty())
        throw Error(ErrorCode::invalid_input, "refusing to save an empty splat cloud");
    const int degree = cloud.splats.front().sh_degree();
    for (const GaussianSplat& s : cloud.splats)
        if (s.sh_degree() != degree)
            throw Error(ErrorCode::invalid_input,
                        "all splats must share one spherical-harmonics degree");
    const std::size_t rest = rest_count_for_degree(degree);
    const std::size_t coeffs = sh_coeff_count(degree);

    ensure_parent_directory(path);
    std::string header = "ply\nformat binary_little_endian 1.0\n";
    header += "element vertex " + std::to_string(cloud.size()) + "\n";
    const auto prop = [&](const std::string& name) { header += "property float " + name + "\n"; };
    prop("x");
    prop("y");
    prop("z");
    prop("nx");
    prop("ny");
    prop("nz");
    for (int i = 0; i < 3; ++i) prop("f_dc_" + std::to_string(i));
    for (std::size_t i = 0; i < rest; ++i) prop("f_rest_" + std::to_string(i));
    prop("opacity");
    for (int i = 0; i < 3; ++i) prop("scale_" + std::to_string(i));
    for (int i = 0; i < 4; ++i) prop("rot_" + std::to_string(i));
    header += "end_header\n";

    std::string out = header;
    out.reserve(out.size() + cloud.size() * (17 + rest) * 4);
    for (const GaussianSplat& s : cloud.splats) {
        for (int i = 0; i < 3; ++i) put_f32(out, s.position[i]);
        for (int i = 0; i < 3; ++i) put_f32(out, 0.0);
        for (int c = 0; c < 3; ++c) put_f32(out, s.sh_coeffs[0][c]);
        // Channel-major rest block, the layout splat viewers expect.
        for (int c = 0; c < 3; ++c)
            for (std::size_t j = 1; j < coeffs; ++j) put_f32(out, s.sh_coeffs[j][c]);
        put_f32(out, s.opacity_logit);
        for (int i = 0; i < 3; ++i) put_f32(out, s.log_scale[i]);
        for (int i = 0; i < 4; ++i) put_f32(out, s.rotation[i]);
    }
    write_file_bytes(path, out);
}

SplatCloud read_splat_ply(const std::string& path) {
    const std::string data = read_file_bytes(path);
    const std::size_t header_end = data.find("end_header\n");
    if (data.rfind("ply\n", 0) != 0 || header_end == std::string::npos)
        throw Error(ErrorCode::load_error, path + ": not a binary PLY file");

    std::istringstream header(data.substr(0, header_end));
    std::string line;
    std::getline(header, line); // "ply"
    std::size_t count = 0;
    std::vector<std::string> properties;
    bool little_endian = false;
    while (std::getline(header, line)) {
        std::istringstream fields(line);
        std::string tag;
        fields >> tag;
        if (tag == "format") {
            std::string kind;
            fields >> kind;
            little_endian = kind == "binary_little_endian";
        } else if (tag == "element") {
            std::string name;
            fields >> name >> count;
            if (name != "vertex")
                throw Error(ErrorCode::load_error, path + ": unexpected element " + name);
        } else if (tag == "property") {
            std::string type, name;
            fields >> type >> name;
            if (type != "float")
                throw Error(ErrorCode::load_error, path + ": unsupported property type " + type);
            properties.push_back(name);
        } else if (tag == "comment" || tag.empty()) {
            continue;
        } else {
            throw Error(ErrorCode::load_error, path + ": unexpected header line '" + line + "'");
        }
    }
    if (!little_endian)
        throw Error(ErrorCode::load_error, path + ": expected binary_little_endian format");
    if (properties.size() < 17)
        throw Error(ErrorCode::load_error, path + ": too few properties for a splat cloud");

    const std::size_t rest = properties.size() - 17;
    int degree = -1;
    for (int d = 0; d <= kMaxShDegree; ++d)
        if (rest_count_for_degree(d) == rest) degree = d;
    if (degree < 0)
        throw Error(ErrorCode::load_error,
                    path + ": property count matches no spherical-harmonics degree");

    std::vector<std::string> expected = {"x", "y", "z", "nx", "ny", "nz",
                                         "f_dc_0", "f_dc_1", "f_dc_2"};
    for (std::size_t i = 0; i < rest; ++i) expected.push_back("f_rest_" + std::to_string(i));
    expected.push_back("opacity");
    for (int i = 0; i < 3; ++i) expected.push_back("scale_" + std::to_string(i));
    for (int i = 0; i < 4; ++i) expected.push_back("rot_" + std::to_string(i));
    for (std::size_t i = 0; i < expected.size(); ++i)
        if (properties[i] != expected[i])
            throw Error(ErrorCode::load_error, path + ": property " + std::to_string(i) +
                                                   " is '" + properties[i] + "', expected '" +
                                                   expected[i] + "'");

    const std::size_t record = properties.size() * 4;
    std::size_t pos = header_end + std::strlen("end_header\n");
    if (data.size() - pos < count * record)
        throw Error(ErrorCode::load_error, path + ": truncated splat records");

    const std::size_t coeffs = sh_coeff_count(degree);
    SplatCloud cloud;
    cloud.splats.resize(count);
    for (std::size_t i = 0; i < count; ++i, pos += record) {
        GaussianSplat& s = cloud.splats[i];
        const auto field = [&](std::size_t k) { return get_f32(data, pos + 4 * k); };
        for (int k = 0; k < 3; ++k) s.position[k] = field(k);
        s.sh_coeffs.assign(coeffs, Vec3::Zero());
        for (int c = 0; c < 3; ++c) s.sh_coeffs[0][c] = field(6 + c);
        for (int c = 0; c < 3; ++c)
            for (std::size_t j = 1; j < coeffs; ++j)
                s.sh_coeffs[j][c] = field(9 + c * (coeffs - 1) + (j - 1));
        s.opacity_logit = field(9 + rest);
        for (int k = 0; k < 3; ++k) s.log_scale[k] = field(10 + rest + k);
        for (int k = 0; k < 4; ++k) s.rotation[k] = field(13 + rest + k);
    }
    cloud.resize_generation();
    return cloud;
}

namespace {

std::string f32_blob(const std::vector<Vec3>& points) {
    std::string out;
    out.reserve(points.size() * 12);
    for (const Vec3& p : points)
        for (int k = 0; k < 3; ++k) put_f32(out, p[k]);
    return out;
}

std::vector<Vec3> f32_points(const std::string& data, const std::string& path,
                             std::size_t expected_points) {
    if (data.size() != expected_points * 12)
        throw Error(ErrorCode::load_error,
                    path + ": expected " + std::to_string(expected_points * 12) + " bytes, got " +
                        std::to_string(data.size()));
    std::vector<Vec3> points(expected_points);
    for (std::size_t i = 0; i < expected_points; ++i)
        points[i] = Vec3(get_f32(data, i * 12), get_f32(data, i * 12 + 4),
                         get_f32(data, i * 12 + 8));
    return points;
}

} // namespace

void write_morphable_model(const MorphableModel& model, const std::string& directory) {
    model.validate();
    std::error_code ec;
    fs::create_directories(directory, ec);
    if (ec) throw Error(ErrorCode::io_error, "cannot create directory " + directory);

    const std::size_t n = model.vertex_count();
    json manifest;
    manifest["format"] = "surfsplat-morphable";
    manifest["version"] = 1;
    manifest["vertex_count"] = n;
    manifest["shape_count"] = model.shape_count();
    manifest["expression_count"] = model.expression_count();
    manifest["triangle_count"] = model.triangles.size();
    manifest["template_blob"] = "template.f32";
    manifest["shape_basis_blob"] = "shape_basis.f32";
    manifest["expression_basis_blob"] = "expression_basis.f32";
    manifest["triangles_blob"] = "triangles.u32";
    manifest["face_region_mask"] = model.face_region_mask;

    write_file_bytes(directory + "/template.f32", f32_blob(model.template_vertices));
    std::string shape;
    for (const std::vector<Vec3>& basis : model.shape_basis) shape += f32_blob(basis);
    write_file_bytes(directory + "/shape_basis.f32", shape);
    std::string expression;
    for (const std::vector<Vec3>& basis : model.expression_basis) expression += f32_blob(basis);
    write_file_bytes(directory + "/expression_basis.f32", expression);
    std::string triangles;
    for (const Triangle& t : model.triangles)
        for (std::uint32_t idx : t) put_u32(triangles, idx);
    write_file_bytes(directory + "/triangles.u32", triangles);
    write_file_bytes(directory + "/model.json", manifest.dump(2) + "\n");
}

MorphableModel read_morphable_model(const std::string& directory) {
    const std::string manifest_path = directory + "/model.json";
    json manifest;
    try {
        manifest = json::parse(read_file_bytes(manifest_path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::load_error, manifest_path + ": " + e.what());
    }

    try {
        if (manifest.at("format") != "surfsplat-morphable" || manifest.at("version") != 1)
            throw Error(ErrorCode::load_error, manifest_path + ": not a morphable-model manifest");

        const std::size_t n = manifest.at("vertex_count").get<std::size_t>();
        const std::size_t shape_count = manifest.at("shape_count").get<std::size_t>();
        const std::size_t expression_count = manifest.at("expression_count").get<std::size_t>();
        const std::size_t triangle_count = manifest.at("triangle_count").get<std::size_t>();

        MorphableModel model;
        const auto blob_path = [&](const char* key) {
            return directory + "/" + manifest.at(key).get<std::string>();
        };
        model.template_vertices =
            f32_points(read_file_bytes(blob_path("template_blob")), blob_path("template_blob"), n);

        const std::string shape = read_file_bytes(blob_path("shape_basis_blob"));
        if (shape.size() != shape_count * n * 12)
            throw Error(ErrorCode::load_error, blob_path("shape_basis_blob") + ": expected " +
                                                   std::to_string(shape_count * n * 12) +
                                                   " bytes, got " + std::to_string(shape.size()));
        for (std::size_t k = 0; k < shape_count; ++k)
            model.shape_basis.push_back(f32_points(shape.substr(k * n * 12, n * 12),
                                                   blob_path("shape_basis_blob"), n));

        const std::string expression = read_file_bytes(blob_path("expression_basis_blob"));
        if (expression.size() != expression_count * n * 12)
            throw Error(ErrorCode::load_error,
                        blob_path("expression_basis_blob") + ": expected " +
                            std::to_string(expression_count * n * 12) + " bytes, got " +
                            std::to_string(expression.size()));
        for (std::size_t k = 0; k < expression_count; ++k)
            model.expression_basis.push_back(f32_points(expression.substr(k * n * 12, n * 12),
                                                        blob_path("expression_basis_blob"), n));

        const std::string triangles = read_file_bytes(blob_path("triangles_blob"));
        if (triangles.size() != triangle_count * 12)
            throw Error(ErrorCode::load_error, blob_path("triangles_blob") + ": expected " +
                                                   std::to_string(triangle_count * 12) +
                                                   " bytes, got " +
                                                   std::to_string(triangles.size()));
        for (std::size_t t = 0; t < triangle_count; ++t)
            model.triangles.push_back({get_u32(triangles, t * 12), get_u32(triangles, t * 12 + 4),
                                       get_u32(triangles, t * 12 + 8)});

        model.face_region_mask =
            manifest.at("face_region_mask").get<std::vector<std::uint8_t>>();

        model.validate();
        return model;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::load_error, manifest_path + ": " + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::load_error) throw;
        throw Error(ErrorCode::load_error, directory + ": " + e.what());
    }
}

void write_surface_params(const SurfaceParams& params, const std::string& path) {
    ensure_parent_directory(path);
    std::string out = "surfsplat-surface-params v1\n";
    out += "shape_coeffs " + std::to_string(params.shape_coeffs.size()) + "\n";
    for (Eigen::Index i = 0; i < params.shape_coeffs.size(); ++i)
        out += format_double(params.shape_coeffs[i]) + "\n";
    out += "expression_coeffs " + std::to_string(params.expression_coeffs.size()) + "\n";
    for (Eigen::Index i = 0; i < params.expression_coeffs.size(); ++i)
        out += format_double(params.expression_coeffs[i]) + "\n";
    out += "pose_rotation";
    for (int i = 0; i < 4; ++i) out += " " + format_double(params.pose_rotation[i]);
    out += "\npose_translation";
    for (int i = 0; i < 3; ++i) out += " " + format_double(params.pose_translation[i]);
    out += "\npose_scale " + format_double(params.pose_scale) + "\n";
    write_file_bytes(path, out);
}

SurfaceParams read_surface_params(const std::string& path) {
    std::istringstream in(read_file_bytes(path));
    const auto expect = [&](const std::string& keyword) {
        std::string token;
        if (!(in >> token) || token != keyword)
            throw Error(ErrorCode::load_error,
                        path + ": expected '" + keyword + "', found '" + token + "'");
    };
    const auto read_double = [&](const std::string& field) {
        double v = 0.0;
        if (!(in >> v))
            throw Error(ErrorCode::load_error, path + ": bad value for " + field);
        return v;
    };

    expect("surfsplat-surface-params");
    expect("v1");
    SurfaceParams params;
    expect("shape_coeffs");
    const int shape_count = static_cast<int>(read_double("shape_coeffs count"));
    if (shape_count < 0) throw Error(ErrorCode::load_error, path + ": negative count");
    params.shape_coeffs.resize(shape_count);
    for (int i = 0; i < shape_count; ++i) params.shape_coeffs[i] = read_double("shape coeff");
    expect("expression_coeffs");
    const int expression_count = static_cast<int>(read_double("expression_coeffs count"));
    if (expression_count < 0) throw Error(ErrorCode::load_error, path + ": negative count");
    params.expression_coeffs.resize(expression_count);
    for (int i = 0; i < expression_count; ++i)
        params.expression_coeffs[i] = read_double("expression coeff");
    expect("pose_rotation");
    for (int i = 0; i < 4; ++i) params.pose_rotation[i] = read_double("pose_rotation");
    expect("pose_translation");
    for (int i = 0; i < 3; ++i) params.pose_translation[i] = read_double("pose_translation");
    expect("pose_scale");
    params.pose_scale = read_double("pose_scale");
    return params;
}

namespace {

json config_to_json_object(const TrainConfig& c) {
    json j;
    j["iterations"] = c.iterations;
    j["sh_degree"] = c.sh_degree;
    j["seed"] = c.seed;
    j["s2s_draws"] = c.s2s_draws;
    j["optimize_surface"] = c.optimize_surface;
    j["use_surface_loss"] = c.use_surface_loss;
    j["surface_mode"] = c.surface_mode == SurfaceLossMode::splat_to_surface ? "splat_to_surface"
                                                                            : "point_to_surface";
    j["view_space_densify_enabled"] = c.view_space_densify_enabled;
    j["world_space_densify_enabled"] = c.world_space_densify_enabled;
    j["weights"] = {
        {"lambda_rgb", c.weights.lambda_rgb},
        {"lambda_s2s", c.weights.lambda_s2s},
        {"lambda_ssim", c.weights.lambda_ssim},
        {"lambda_reg",
         {{"initial", c.weights.lambda_reg_schedule.initial},
          {"final_value", c.weights.lambda_reg_schedule.final_value},
          {"decay_end_iteration", c.weights.lambda_reg_schedule.decay_end_iteration}}},
        {"reg_weights",
         {{"shape", c.weights.reg_weights.shape},
          {"expression", c.weights.reg_weights.expression}}},
    };
    j["learning_rates"] = {
        {"position", c.learning_rates.position},   {"log_scale", c.learning_rates.log_scale},
        {"rotation", c.learning_rates.rotation},   {"opacity", c.learning_rates.opacity},
        {"sh", c.learning_rates.sh},               {"surface_coeffs", c.learning_rates.surface_coeffs},
        {"pose", c.learning_rates.pose},
    };
    j["adam"] = {
        {"beta1", c.adam.beta1},
        {"beta2", c.adam.beta2},
        {"epsilon", c.adam.epsilon},
    };
    j["densify"] = {
        {"interval", c.densify.interval},
        {"window_start", c.densify.window_start},
        {"window_end", c.densify.window_end},
        {"view_grad_threshold", c.densify.view_grad_threshold},
        {"split_scale_threshold", c.densify.split_scale_threshold},
        {"split_scale_shrink", c.densify.split_scale_shrink},
        {"tau_s2s_multiplier", c.densify.tau_s2s_multiplier},
        {"tau_s2s_floor", c.densify.tau_s2s_floor},
        {"opacity_prune_threshold", c.densify.opacity_prune_threshold},
        {"scale_prune_cap", c.densify.scale_prune_cap},
        {"max_splats", c.densify.max_splats},
    };
    j["metrics_interval"] = c.metrics_interval;
    return j;
}

[[noreturn]] void unknown_key(const std::string& scope, const std::string& key) {
    throw Error(ErrorCode::load_error,
                "unknown config key \"" + (scope.empty() ? key : scope + "." + key) + "\"");
}

template <typename T>
void assign(T& slot, const json& value, const std::string& scope, const std::string& key) {
    try {
        slot = value.get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorCode::load_error,
                    "config key \"" + (scope.empty() ? key : scope + "." + key) +
                        "\" has the wrong type");
    }
}

void apply_config_object(TrainConfig& c, const json& j) {
    for (const auto& [key, value] : j.items()) {
        if (key == "iterations") assign(c.iterations, value, "", key);
        else if (key == "sh_degree") assign(c.sh_degree, value, "", key);
        else if (key == "seed") assign(c.seed, value, "", key);
        else if (key == "s2s_draws") assign(c.s2s_draws, value, "", key);
        else if (key == "optimize_surface") assign(c.optimize_surface, value, "", key);
        else if (key == "use_surface_loss") assign(c.use_surface_loss, value, "", key);
        else if (key == "surface_mode") {
            std::string mode;
            assign(mode, value, "", key);
            if (mode == "splat_to_surface")
                c.surface_mode = SurfaceLossMode::splat_to_surface;
            else if (mode == "point_to_surface")
                c.surface_mode = SurfaceLossMode::point_to_surface;
            else
                throw Error(ErrorCode::load_error, "unknown surface_mode \"" + mode + "\"");
        } else if (key == "view_space_densify_enabled")
            assign(c.view_space_densify_enabled, value, "", key);
        else if (key == "world_space_densify_enabled")
            assign(c.world_space_densify_enabled, value, "", key);
        else if (key == "weights") {
            for (const auto& [wkey, wvalue] : value.items()) {
                if (wkey == "lambda_rgb") assign(c.weights.lambda_rgb, wvalue, "weights", wkey);
                else if (wkey == "lambda_s2s") assign(c.weights.lambda_s2s, wvalue, "weights", wkey);
                else if (wkey == "lambda_ssim")
                    assign(c.weights.lambda_ssim, wvalue, "weights", wkey);
                else if (wkey == "lambda_reg") {
                    for (const auto& [rkey, rvalue] : wvalue.items()) {
                        if (rkey == "initial")
                            assign(c.weights.lambda_reg_schedule.initial, rvalue,
                                   "weights.lambda_reg", rkey);
                        else if (rkey == "final_value")
                            assign(c.weights.lambda_reg_schedule.final_value, rvalue,
                                   "weights.lambda_reg", rkey);
                        else if (rkey == "decay_end_iteration")
                            assign(c.weights.lambda_reg_schedule.decay_end_iteration, rvalue,
                                   "weights.lambda_reg", rkey);
                        else
                            unknown_key("weights.lambda_reg", rkey);
                    }
                } else if (wkey == "reg_weights") {
                    for (const auto& [rkey, rvalue] : wvalue.items()) {
                        if (rkey == "shape")
                            assign(c.weights.reg_weights.shape, rvalue, "weights.reg_weights",
                                   rkey);
                        else if (rkey == "expression")
                            assign(c.weights.reg_weights.expression, rvalue,
                                   "weights.reg_weights", rkey);
                        else
                            unknown_key("weights.reg_weights", rkey);
                    }
                } else
                    unknown_key("weights", wkey);
            }
        } else if (key == "learning_rates") {
            for (const auto& [lkey, lvalue] : value.items()) {
                if (lkey == "position") assign(c.learning_rates.position, lvalue, key, lkey);
                else if (lkey == "log_scale") assign(c.learning_rates.log_scale, lvalue, key, lkey);
                else if (lkey == "rotation") assign(c.learning_rates.rotation, lvalue, key, lkey);
                else if (lkey == "opacity") assign(c.learning_rates.opacity, lvalue, key, lkey);
                else if (lkey == "sh") assign(c.learning_rates.sh, lvalue, key, lkey);
                else if (lkey == "surface_coeffs")
                    assign(c.learning_rates.surface_coeffs, lvalue, key, lkey);
                else if (lkey == "pose") assign(c.learning_rates.pose, lvalue, key, lkey);
                else unknown_key(key, lkey);
            }
        } else if (key == "adam") {
            for (const auto& [akey, avalue] : value.items()) {
                if (akey == "beta1") assign(c.adam.beta1, avalue, key, akey);
                else if (akey == "beta2") assign(c.adam.beta2, avalue, key, akey);
                else if (akey == "epsilon") assign(c.adam.epsilon, avalue, key, akey);
                else unknown_key(key, akey);
            }
        } else if (key == "densify") {
            for (const auto& [dkey, dvalue] : value.items()) {
                if (dkey == "interval") assign(c.densify.interval, dvalue, key, dkey);
                else if (dkey == "window_start") assign(c.densify.window_start, dvalue, key, dkey);
                else if (dkey == "window_end") assign(c.densify.window_end, dvalue, key, dkey);
                else if (dkey == "view_grad_threshold")
                    assign(c.densify.view_grad_threshold, dvalue, key, dkey);
                else if (dkey == "split_scale_threshold")
                    assign(c.densify.split_scale_threshold, dvalue, key, dkey);
                else if (dkey == "split_scale_shrink")
                    assign(c.densify.split_scale_shrink, dvalue, key, dkey);
                else if (dkey == "tau_s2s_multiplier")
                    assign(c.densify.tau_s2s_multiplier, dvalue, key, dkey);
                else if (dkey == "tau_s2s_floor")
                    assign(c.densify.tau_s2s_floor, dvalue, key, dkey);
                else if (dkey == "opacity_prune_threshold")
                    assign(c.densify.opacity_prune_threshold, dvalue, key, dkey);
                else if (dkey == "scale_prune_cap")
                    assign(c.densify.scale_prune_cap, dvalue, key, dkey);
                else if (dkey == "max_splats") assign(c.densify.max_splats, dvalue, key, dkey);
                else unknown_key(key, dkey);
            }
        } else if (key == "metrics_interval") {
            assign(c.metrics_interval, value, "", key);
        } else {
            unknown_key("", key);
        }
    }
}

} // namespace

std::string train_config_to_json(const TrainConfig& config) {
    return config_to_json_object(config).dump(2) + "\n";
}

void apply_train_config_json(TrainConfig& config, const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::load_error, std::string("config: ") + e.what());
    }
    if (!j.is_object())
        throw Error(ErrorCode::load_error, "config must be a JSON object");
    apply_config_object(config, j);
}

void write_train_config(const TrainConfig& config, const std::string& path) {
    ensure_parent_directory(path);
    write_file_bytes(path, train_config_to_json(config));
}

TrainConfig read_train_config(const std::string& path) {
    TrainConfig config;
    apply_train_config_json(config, read_file_bytes(path));
    return config;
}

void write_metrics_log(const std::vector<MetricsRecord>& records, const std::string& path) {
    ensure_parent_directory(path);
    std::string out;
    for (const MetricsRecord& r : records) {
        json j;
        j["iteration"] = r.iteration;
        j["loss_total"] = r.loss_total;
        j["loss_rgb"] = r.loss_rgb;
        j["loss_s2s"] = r.loss_s2s;
        j["loss_reg"] = r.loss_reg;
        j["lambda_reg"] = r.lambda_reg;
        j["splat_count"] = r.splat_count;
        j["tau_s2s"] = r.tau_s2s;
        out += j.dump() + "\n";
    }
    write_file_bytes(path, out);
}

std::vector<MetricsRecord> read_metrics_log(const std::string& path) {
    std::istringstream in(read_file_bytes(path));
    std::vector<MetricsRecord> records;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            MetricsRecord r;
            r.iteration = j.at("iteration").get<int>();
            r.loss_total = j.at("loss_total").get<double>();
            r.loss_rgb = j.at("loss_rgb").get<double>();
            r.loss_s2s = j.at("loss_s2s").get<double>();
            r.loss_reg = j.at("loss_reg").get<double>();
            r.lambda_reg = j.at("lambda_reg").get<double>();
            r.splat_count = j.at("splat_count").get<std::size_t>();
            r.tau_s2s = j.at("tau_s2s").get<double>();
            records.push_back(r);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::load_error,
                        path + ":" + std::to_string(line_number) + ": " + e.what());
        }
    }
    return records;
}

void write_scene_manifest(const SceneManifest& manifest, const std::string& path) {
    json overrides;
    try {
        overrides = json::parse(manifest.config_overrides);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_parameter,
                    std::string("config_overrides is not valid JSON: ") + e.what());
    }
    if (!overrides.is_object())
        throw Error(ErrorCode::invalid_parameter, "config_overrides must be a JSON object");

    json j;
    j["format"] = "surfsplat-scene";
    j["version"] = 1;
    j["seed"] = manifest.seed;
    j["model"] = manifest.model_directory;
    j["views"] = json::array();
    for (const SceneManifest::ViewPaths& v : manifest.views)
        j["views"].push_back({{"image", v.image}, {"mask", v.mask}, {"camera", v.camera}});
    j["config"] = overrides;
    if (!manifest.ground_truth.mesh.empty())
        j["ground_truth"] = {{"mesh", manifest.ground_truth.mesh},
                             {"splats", manifest.ground_truth.splats},
                             {"surface_params", manifest.ground_truth.surface_params}};
    ensure_parent_directory(path);
    write_file_bytes(path, j.dump(2) + "\n");
}

SceneManifest read_scene_manifest(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file_bytes(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::load_error, path + ": " + e.what());
    }

    try {
        if (!j.is_object() || j.at("format") != "surfsplat-scene" || j.at("version") != 1)
            throw Error(ErrorCode::load_error, path + ": not a scene manifest");
        for (const auto& [key, value] : j.items()) {
            (void)value;
            if (key != "format" && key != "version" && key != "seed" && key != "model" &&
                key != "views" && key != "config" && key != "ground_truth")
                throw Error(ErrorCode::load_error, path + ": unknown manifest key \"" + key + "\"");
        }

        SceneManifest manifest;
        manifest.seed = j.at("seed").get<std::uint64_t>();
        manifest.model_directory = j.at("model").get<std::string>();
        for (const json& v : j.at("views"))
            manifest.views.push_back({v.at("image").get<std::string>(),
                                      v.at("mask").get<std::string>(),
                                      v.at("camera").get<std::string>()});
        if (manifest.views.empty())
            throw Error(ErrorCode::load_error, path + ": a scene needs at least one view");
        manifest.config_overrides = j.value("config", json::object()).dump();
        if (j.contains("ground_truth")) {
            const json& gt = j.at("ground_truth");
            manifest.ground_truth.mesh = gt.value("mesh", "");
            manifest.ground_truth.splats = gt.value("splats", "");
            manifest.ground_truth.surface_params = gt.value("surface_params", "");
        }
        return manifest;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::load_error, path + ": " + e.what());
    }
}

namespace {

std::string resolve(const std::string& root, const std::string& relative) {
    if (relative.empty()) return relative;
    if (fs::path(relative).is_absolute()) return relative;
    return (fs::path(root) / relative).string();
}

} // namespace

LoadedScene load_scene(const std::string& manifest_path) {
    LoadedScene scene;
    scene.manifest = read_scene_manifest(manifest_path);
    scene.root = fs::path(manifest_path).parent_path().string();
    if (scene.root.empty()) scene.root = ".";

    for (const SceneManifest::ViewPaths& paths : scene.manifest.views) {
        TrainingView view;
        view.image = read_image(resolve(scene.root, paths.image));
        if (view.image.channels != 3)
            throw Error(ErrorCode::load_error, paths.image + ": expected a 3-channel image");
        view.mask = read_image(resolve(scene.root, paths.mask));
        if (view.mask.channels != 1)
            throw Error(ErrorCode::load_error, paths.mask + ": expected a 1-channel mask");
        if (view.mask.width != view.image.width || view.mask.height != view.image.height)
            throw Error(ErrorCode::load_error,
                        paths.mask + ": mask size does not match " + paths.image);
        for (double& v : view.mask.data) v = v > 0.5 ? 1.0 : 0.0;
        view.camera = read_camera(resolve(scene.root, paths.camera));
        if (view.camera.width != view.image.width || view.camera.height != view.image.height)
            throw Error(ErrorCode::load_error,
                        paths.camera + ": camera viewport does not match " + paths.image);
        scene.views.push_back(std::move(view));
    }

    scene.model = read_morphable_model(resolve(scene.root, scene.manifest.model_directory));
    apply_train_config_json(scene.config, scene.manifest.config_overrides);
    scene.config.seed = scene.manifest.seed;
    return scene;
}

std::string scene_path(const LoadedScene& scene, const std::string& relative) {
    return resolve(scene.root, relative);
}

void save_checkpoint(const std::string& directory, const SplatCloud& cloud,
                     const SurfaceParams& surface, const TrainConfig& config) {
    std::error_code ec;
    fs::create_directories(directory, ec);
    if (ec) throw Error(ErrorCode::io_error, "cannot create directory " + directory);
    write_splat_ply(cloud, directory + "/splats.ply");
    write_surface_params(surface, directory + "/surface_params.txt");
    write_train_config(config, directory + "/config.json");
}

Checkpoint load_checkpoint(const std::string& directory) {
    Checkpoint checkpoint;
    checkpoint.cloud = read_splat_ply(directory + "/splats.ply");
    checkpoint.surface = read_surface_params(directory + "/surface_params.txt");
    checkpoint.config = read_train_config(directory + "/config.json");
    return checkpoint;
}

} // namespace surfsplat
