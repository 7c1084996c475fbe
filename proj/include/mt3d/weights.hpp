#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mt3d/config.hpp"
#include "mt3d/gfem.hpp"
#include "mt3d/localize.hpp"
#include "mt3d/memory.hpp"
#include "mt3d/mip.hpp"
#include "mt3d/pointops.hpp"
#include "mt3d/ssm.hpp"
#include "mt3d/types.hpp"

namespace mt3d {

// Every learnable parameter of the pipeline.
struct PipelineWeights {
    TokenizerWeights tokenizer;
    MaskEmbedWeights mask_embed;
    GFEMWeights gfem;
    MIPWeights mip;
    BiSSMStack bissm;
    HeadWeights head;

    void validate(const Config& cfg) const;
};

struct TensorSpec {
    std::string name;
    std::vector<int> shape;
};

// Names and shapes of every tensor the forward path requires for a config.
std::vector<TensorSpec> required_tensors(const Config& cfg);

// Deterministic seeded initialization. Linear weights draw from
// U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases start at zero; the state matrix
// uses negative diagonals -(1+j) with small seeded jitter; step-size biases
// place softplus(b) in [1e-3, 0.1]; scales start at one.
PipelineWeights init_weights(const Config& cfg, std::uint64_t seed);

// Binary weights file: magic "MT3D", version, config echo, named float32
// tensors, trailing CRC32. Save/load/save is byte-identical.
void save_weights(const std::string& path, const Config& cfg, const PipelineWeights& w);

struct LoadedWeights {
    Config config;
    PipelineWeights weights;
};

LoadedWeights load_weights(const std::string& path);

// Flat tensor views used by the file format and the completeness check.
std::map<std::string, Mat> weights_to_tensors(const Config& cfg, const PipelineWeights& w);
PipelineWeights weights_from_tensors(const Config& cfg, const std::map<std::string, Mat>& tensors);

}  // namespace mt3d
