#pragma once

#include <vector>

#include "mt3d/config.hpp"
#include "mt3d/flops.hpp"
#include "mt3d/geometry.hpp"
#include "mt3d/types.hpp"

namespace mt3d {

// Per-query neighbor indices into a reference point set. When the reference
// set is smaller than k the existing indices are repeated round-robin and
// `padded` is set.
struct NeighborIndex {
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> idx;  // queries x k
    bool padded = false;

    int queries() const { return static_cast<int>(idx.rows()); }
    int k() const { return static_cast<int>(idx.cols()); }
};

// Shared two-layer point embedding (3 -> C/2 -> C with rectification after
// each affine), max-pooled over the neighborhood.
struct TokenizerWeights {
    Mat w1;  // C/2 x 3
    Vec b1;  // C/2
    Mat w2;  // C x C/2
    Vec b2;  // C

    void validate(const Config& cfg) const;
};

struct TokenizedFrame {
    Mat coords;           // num_tokens x 3, FPS selection order
    FeatureMatrix feats;  // num_tokens x C
    bool padded = false;  // cloud had fewer points than requested tokens
};

// Deterministic FPS start: lowest index among lexicographically smallest
// points (x, then y, then z).
std::size_t fps_default_start(const Cloud& c);

// Greedy farthest point sampling. First selected index is `start`; output is
// selection order. Clouds smaller than n pad by cycling over the already
// selected indices.
std::vector<int> fps(const Cloud& c, int n, std::size_t start, MacCounter* macs = nullptr);

// Exhaustive k-nearest-neighbors, ties broken by smaller reference index.
NeighborIndex knn(const std::vector<Point3>& queries, const std::vector<Point3>& refs, int k,
                  MacCounter* macs = nullptr);
NeighborIndex knn(const Mat& queries, const Mat& refs, int k, MacCounter* macs = nullptr);

// FPS + neighborhood embedding: produces token coordinates and features for
// one frame. Relative coordinates (neighbor - center) feed the shared layers,
// so the result is invariant to cloud translation.
TokenizedFrame tokenize(const Cloud& c, const Config& cfg, const TokenizerWeights& w,
                        MacCounter* macs = nullptr);

}  // namespace mt3d
