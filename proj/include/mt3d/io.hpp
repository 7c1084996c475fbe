#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mt3d/config.hpp"
#include "mt3d/geometry.hpp"
#include "mt3d/types.hpp"

namespace mt3d {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// Frame files: consecutive 16-byte records of little-endian float32
// (x, y, z, intensity) — the KITTI velodyne dump layout.
Cloud read_bin_frame(const std::string& path);
void write_bin_frame(const std::string& path, const Cloud& cloud);

struct LabeledFrame {
    int frame = 0;
    Box7 box;
};

// JSON-lines labels, one object per line:
// {"frame": i, "cx": .., "cy": .., "cz": .., "w": .., "l": .., "h": .., "theta": ..}
std::vector<LabeledFrame> read_labels(const std::string& path);
void write_labels(const std::string& path, const std::vector<LabeledFrame>& labels);

ojson config_to_json(const Config& cfg);
Config config_from_json(const json& j);
Config read_config(const std::string& path);
void write_config(const std::string& path, const Config& cfg);

// FNV-1a 64-bit, hex-encoded; used for input hashing and determinism checks.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::string hash_bytes_hex(const std::string& bytes);
std::string hash_file_hex(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// Sidecar describing a command run. Timing lives only here so the primary
// outputs stay bit-identical across re-runs.
struct RunManifest {
    std::string command;
    ojson config;
    std::vector<std::pair<std::string, std::string>> input_hashes;  // path, hex
    std::vector<std::string> outputs;
    std::uint64_t seed = 0;
    double elapsed_seconds = 0.0;
};

void write_manifest(const std::string& path, const RunManifest& m);

}  // namespace mt3d
