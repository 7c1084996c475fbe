#pragma once

#include <cstdint>
#include <vector>

#include "mt3d/config.hpp"
#include "mt3d/flops.hpp"
#include "mt3d/geometry.hpp"
#include "mt3d/memory.hpp"
#include "mt3d/pointops.hpp"
#include "mt3d/types.hpp"

namespace mt3d {

struct PipelineWeights;

// Learnable parameters of the propagation step: a 2C -> C projection applied
// to [history feature ; current token], then per-channel scale and shift.
struct MIPWeights {
    Mat proj_w;  // C x 2C
    Vec proj_b;  // C
    Vec alpha;   // C
    Vec beta;    // C

    void validate(const Config& cfg) const;
};

struct PropagateResult {
    FeatureMatrix feats;    // N x C propagated features
    NeighborIndex neighbors;
    std::vector<Mat> weights;  // per query: k x C neighbor weights (each channel sums to 1)
};

// Neighbor-weighted propagation from aggregated history onto the current
// tokens. For each query: gather k neighbors in `hist_coords`, project
// [F_k ; token_j] through the MIP weights, softmax the k candidates
// channel-wise (or scalar-wise under cfg.scalar_softmax), and sum.
PropagateResult propagate(const Mat& coords, const FeatureMatrix& tokens, const Mat& hist_coords,
                          const FeatureMatrix& hist_feats, const Config& cfg, const MIPWeights& w,
                          MacCounter* macs = nullptr);

struct MIPForwardResult {
    Mat coords;           // N x 3 token coordinates (FPS order)
    FeatureMatrix tokens; // N x C initial token embeddings
    FeatureMatrix feats;  // N x C output features after propagation + Bi-SSM
    bool padded = false;
};

// Full forward path for one frame: tokenize, fuse history masks, optionally
// enhance tokens against the history (GFEM), propagate, then run the Bi-SSM
// stack over the tokens in FPS selection order. Cloud and bank coordinates
// must share a frame.
MIPForwardResult mip_forward(const Cloud& cloud, const MemoryBank& bank, const Config& cfg,
                             const PipelineWeights& w, MacCounter* macs = nullptr);

// Analytic multiply-accumulate count of the forward path for an input of
// n_points with a full memory bank.
std::uint64_t flops_mip(const Config& cfg, std::uint64_t n_points);

}  // namespace mt3d
