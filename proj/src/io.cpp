#include "mt3d/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mt3d {

static_assert(sizeof(float) == 4, "float32 layout assumed");

Cloud read_bin_frame(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open frame file: " + path);
    in.seekg(0, std::ios::end);
    const std::streamoff bytes = in.tellg();
    in.seekg(0, std::ios::beg);
    if (bytes % 16 != 0)
        throw Error(ErrorKind::Io, "frame file size not a multiple of 16 bytes: " + path);
    const std::size_t n = static_cast<std::size_t>(bytes / 16);
    std::vector<float> raw(n * 4);
    if (n > 0 && !in.read(reinterpret_cast<char*>(raw.data()), bytes))
        throw Error(ErrorKind::Io, "short read on frame file: " + path);

    Cloud cloud;
    cloud.points.resize(n);
    cloud.intensity.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        cloud.points[i] = {raw[4 * i + 0], raw[4 * i + 1], raw[4 * i + 2]};
        cloud.intensity[i] = raw[4 * i + 3];
    }
    return cloud;
}

void write_bin_frame(const std::string& path, const Cloud& cloud) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write frame file: " + path);
    const bool has_intensity = cloud.intensity.size() == cloud.points.size();
    std::vector<float> raw(cloud.points.size() * 4);
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        raw[4 * i + 0] = static_cast<float>(cloud.points[i].x);
        raw[4 * i + 1] = static_cast<float>(cloud.points[i].y);
        raw[4 * i + 2] = static_cast<float>(cloud.points[i].z);
        raw[4 * i + 3] = has_intensity ? static_cast<float>(cloud.intensity[i]) : 0.0f;
    }
    if (!raw.empty())
        out.write(reinterpret_cast<const char*>(raw.data()),
                  static_cast<std::streamsize>(raw.size() * 4));
    if (!out) throw Error(ErrorKind::Io, "short write on frame file: " + path);
}

std::vector<LabeledFrame> read_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open labels file: " + path);
    std::vector<LabeledFrame> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Io, path + ":" + std::to_string(lineno) +
                                           ": bad label line: " + e.what());
        }
        LabeledFrame lf;
        lf.frame = j.at("frame").get<int>();
        lf.box = Box7(j.at("cx").get<double>(), j.at("cy").get<double>(),
                      j.at("cz").get<double>(), j.at("w").get<double>(),
                      j.at("l").get<double>(), j.at("h").get<double>(),
                      j.at("theta").get<double>());
        out.push_back(lf);
    }
    return out;
}

void write_labels(const std::string& path, const std::vector<LabeledFrame>& labels) {
    std::ostringstream os;
    for (const auto& lf : labels) {
        ojson j;
        j["frame"] = lf.frame;
        j["cx"] = lf.box.cx;
        j["cy"] = lf.box.cy;
        j["cz"] = lf.box.cz;
        j["w"] = lf.box.w;
        j["l"] = lf.box.l;
        j["h"] = lf.box.h;
        j["theta"] = lf.box.theta;
        os << j.dump() << "\n";
    }
    write_text_file(path, os.str());
}

ojson config_to_json(const Config& cfg) {
    ojson j;
    j["num_tokens"] = cfg.num_tokens;
    j["channels"] = cfg.channels;
    j["capacity"] = cfg.capacity;
    j["neighbors"] = cfg.neighbors;
    j["ssm_layers"] = cfg.ssm_layers;
    j["state_dim"] = cfg.state_dim;
    j["search_scale"] = cfg.search_scale;
    j["search_margin"] = cfg.search_margin;
    j["precision_cap"] = cfg.precision_cap;
    j["quality_radius"] = cfg.quality_radius;
    j["use_gfem"] = cfg.use_gfem;
    j["use_mask_fusion"] = cfg.use_mask_fusion;
    j["gfem_scale_logits"] = cfg.gfem_scale_logits;
    j["gfem_raw_history"] = cfg.gfem_raw_history;
    j["scalar_softmax"] = cfg.scalar_softmax;
    j["fps_random_start"] = cfg.fps_random_start;
    j["fps_start_seed"] = cfg.fps_start_seed;
    return j;
}

Config config_from_json(const json& j) {
    Config cfg;
    auto geti = [&](const char* key, int dflt) { return j.value(key, dflt); };
    auto getd = [&](const char* key, double dflt) { return j.value(key, dflt); };
    auto getb = [&](const char* key, bool dflt) { return j.value(key, dflt); };
    cfg.num_tokens = geti("num_tokens", cfg.num_tokens);
    cfg.channels = geti("channels", cfg.channels);
    cfg.capacity = geti("capacity", cfg.capacity);
    cfg.neighbors = geti("neighbors", cfg.neighbors);
    cfg.ssm_layers = geti("ssm_layers", cfg.ssm_layers);
    cfg.state_dim = geti("state_dim", cfg.state_dim);
    cfg.search_scale = getd("search_scale", cfg.search_scale);
    cfg.search_margin = getd("search_margin", cfg.search_margin);
    cfg.precision_cap = getd("precision_cap", cfg.precision_cap);
    cfg.quality_radius = getd("quality_radius", cfg.quality_radius);
    cfg.use_gfem = getb("use_gfem", cfg.use_gfem);
    cfg.use_mask_fusion = getb("use_mask_fusion", cfg.use_mask_fusion);
    cfg.gfem_scale_logits = getb("gfem_scale_logits", cfg.gfem_scale_logits);
    cfg.gfem_raw_history = getb("gfem_raw_history", cfg.gfem_raw_history);
    cfg.scalar_softmax = getb("scalar_softmax", cfg.scalar_softmax);
    cfg.fps_random_start = getb("fps_random_start", cfg.fps_random_start);
    cfg.fps_start_seed = j.value("fps_start_seed", cfg.fps_start_seed);
    cfg.validate();
    return cfg;
}

Config read_config(const std::string& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Io, "bad config file " + path + ": " + e.what());
    }
    return config_from_json(j);
}

void write_config(const std::string& path, const Config& cfg) {
    write_text_file(path, config_to_json(cfg).dump(2) + "\n");
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

static std::string to_hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

std::string hash_bytes_hex(const std::string& bytes) {
    return to_hex(fnv1a64(bytes.data(), bytes.size()));
}

std::string hash_file_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open file for hashing: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return hash_bytes_hex(ss.str());
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write file: " + path);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error(ErrorKind::Io, "short write: " + path);
}

void write_manifest(const std::string& path, const RunManifest& m) {
    ojson j;
    j["command"] = m.command;
    j["config"] = m.config;
    ojson hashes = ojson::object();
    for (const auto& [p, h] : m.input_hashes) hashes[p] = h;
    j["input_hashes"] = hashes;
    j["outputs"] = m.outputs;
    j["seed"] = m.seed;
    j["elapsed_seconds"] = m.elapsed_seconds;
    write_text_file(path, j.dump(2) + "\n");
}

}  // namespace mt3d
