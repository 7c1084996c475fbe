#pragma once

#include <cstdint>
#include <deque>

#include "mt3d/config.hpp"
#include "mt3d/flops.hpp"
#include "mt3d/types.hpp"

namespace mt3d {

// One stored frame: token coordinates, features, and soft target masks.
struct MemoryFrame {
    Mat coords;    // N x 3
    FeatureMatrix feats;  // N x C
    Vec mask;      // N, values in [0, 1]

    void validate() const;
};

// Concatenated history, oldest frame first.
struct BankView {
    Mat coords;    // rho'*N x 3
    FeatureMatrix feats;  // rho'*N x C
    Vec mask;      // rho'*N
};

// Per-row 1 -> C affine map embedding the mask channel.
struct MaskEmbedWeights {
    Vec w;  // C
    Vec b;  // C
};

// FIFO store of the last `capacity` frames with strictly increasing
// timestamps.
class MemoryBank {
public:
    explicit MemoryBank(int capacity);

    void push(MemoryFrame frame, std::int64_t timestamp);
    BankView concat() const;

    int capacity() const { return capacity_; }
    int size() const { return static_cast<int>(frames_.size()); }
    bool empty() const { return frames_.empty(); }
    const MemoryFrame& frame(int i) const { return frames_.at(i); }
    std::int64_t timestamp(int i) const { return stamps_.at(i); }
    std::int64_t last_timestamp() const { return stamps_.back(); }

private:
    int capacity_;
    std::deque<MemoryFrame> frames_;
    std::deque<std::int64_t> stamps_;
};

// F = feats + mask * w + b, applied per row.
FeatureMatrix fuse_mask(const FeatureMatrix& feats, const Vec& mask, const MaskEmbedWeights& w,
                        MacCounter* macs = nullptr);

}  // namespace mt3d
