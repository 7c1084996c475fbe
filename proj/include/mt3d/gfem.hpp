#pragma once

#include <utility>

#include "mt3d/config.hpp"
#include "mt3d/flops.hpp"
#include "mt3d/types.hpp"

namespace mt3d {

// Per-group query/key/value affine maps, each (C/2) x (C/2).
struct GFEMGroup {
    Mat wq, wk, wv;
    Vec bq, bk, bv;
};

struct GFEMWeights {
    GFEMGroup g1, g2;

    void validate(int channels) const;
};

// Column split into the two channel groups; concatenation inverts it exactly.
std::pair<FeatureMatrix, FeatureMatrix> split_channels(const FeatureMatrix& x);

// Channel-grouped single-head cross-attention from current tokens to history
// rows. Attention rows are row-stochastic; the optional 1/sqrt(C/2) logit
// scaling is controlled by cfg.gfem_scale_logits.
FeatureMatrix grouped_cross_attention(const FeatureMatrix& tokens, const FeatureMatrix& history,
                                      const GFEMWeights& w, const Config& cfg,
                                      MacCounter* macs = nullptr);

}  // namespace mt3d
