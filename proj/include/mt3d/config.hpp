#pragma once

#include "mt3d/types.hpp"

namespace mt3d {

// Shared pipeline configuration. Defaults follow the reference hyperparameters:
// 128 tokens per frame, 128 channels, memory capacity 3, 4 neighbors, 3
// bidirectional SSM layers.
struct Config {
    int num_tokens = 128;  // tokens sampled per frame
    int channels = 128;    // feature channels C (must be even)
    int capacity = 3;      // memory bank capacity
    int neighbors = 4;     // KNN neighborhood size
    int ssm_layers = 3;    // bidirectional SSM layer count
    int state_dim = 16;    // SSM state dimension per channel

    double search_scale = 2.0;   // search region = previous box extents * scale
    double search_margin = 2.0;  // meters; minimum margin added per side
    double precision_cap = 2.0;  // meters; precision AUC threshold cap
    double quality_radius = 0.3; // meters; positive-proposal radius for quality targets

    bool use_gfem = true;
    bool use_mask_fusion = true;
    bool gfem_scale_logits = true;   // 1/sqrt(C/2) logit scaling
    bool gfem_raw_history = false;   // attend over raw history features instead of mask-fused ones
    bool scalar_softmax = false;     // scalar (per-neighbor) propagation weights instead of per-channel
    bool fps_random_start = false;   // seeded-random FPS start instead of the deterministic rule
    std::uint64_t fps_start_seed = 0;

    int half_channels() const { return channels / 2; }

    void validate() const {
        if (num_tokens < 1) throw Error(ErrorKind::InvalidArgument, "num_tokens must be >= 1");
        if (channels < 2 || channels % 2 != 0)
            throw Error(ErrorKind::InvalidArgument, "channels must be even and >= 2");
        if (capacity < 1) throw Error(ErrorKind::InvalidArgument, "capacity must be >= 1");
        if (neighbors < 1) throw Error(ErrorKind::InvalidArgument, "neighbors must be >= 1");
        if (ssm_layers < 1) throw Error(ErrorKind::InvalidArgument, "ssm_layers must be >= 1");
        if (state_dim < 1) throw Error(ErrorKind::InvalidArgument, "state_dim must be >= 1");
        if (search_scale <= 0.0) throw Error(ErrorKind::InvalidArgument, "search_scale must be > 0");
        if (precision_cap <= 0.0) throw Error(ErrorKind::InvalidArgument, "precision_cap must be > 0");
    }
};

}  // namespace mt3d
