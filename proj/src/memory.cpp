#include "mt3d/memory.hpp"

namespace mt3d {

void MemoryFrame::validate() const {
    if (coords.cols() != 3) throw Error(ErrorKind::ShapeMismatch, "frame coords must be Nx3");
    if (feats.rows() != coords.rows() || mask.size() != coords.rows())
        throw Error(ErrorKind::ShapeMismatch, "frame row counts must agree");
    for (Eigen::Index i = 0; i < mask.size(); ++i)
        if (!(mask(i) >= 0.0 && mask(i) <= 1.0))
            throw Error(ErrorKind::InvalidArgument, "mask values must lie in [0, 1]");
}

MemoryBank::MemoryBank(int capacity) : capacity_(capacity) {
    if (capacity < 1) throw Error(ErrorKind::InvalidArgument, "capacity must be >= 1");
}

void MemoryBank::push(MemoryFrame frame, std::int64_t timestamp) {
    frame.validate();
    if (!stamps_.empty() && timestamp <= stamps_.back())
        throw Error(ErrorKind::InvalidArgument, "timestamps must be strictly increasing");
    frames_.push_back(std::move(frame));
    stamps_.push_back(timestamp);
    while (static_cast<int>(frames_.size()) > capacity_) {
        frames_.pop_front();
        stamps_.pop_front();
    }
}

BankView MemoryBank::concat() const {
    if (frames_.empty()) throw Error(ErrorKind::EmptyInput, "empty memory bank");
    Eigen::Index total = 0;
    for (const auto& f : frames_) total += f.coords.rows();
    const Eigen::Index C = frames_.front().feats.cols();

    BankView v;
    v.coords.resize(total, 3);
    v.feats.resize(total, C);
    v.mask.resize(total);
    Eigen::Index row = 0;
    for (const auto& f : frames_) {
        const Eigen::Index n = f.coords.rows();
        v.coords.middleRows(row, n) = f.coords;
        v.feats.middleRows(row, n) = f.feats;
        v.mask.segment(row, n) = f.mask;
        row += n;
    }
    return v;
}

FeatureMatrix fuse_mask(const FeatureMatrix& feats, const Vec& mask, const MaskEmbedWeights& w,
                        MacCounter* macs) {
    if (mask.size() != feats.rows())
        throw Error(ErrorKind::ShapeMismatch, "mask length must match feature rows");
    if (w.w.size() != feats.cols() || w.b.size() != feats.cols())
        throw Error(ErrorKind::ShapeMismatch, "mask embed weight length must match channels");
    FeatureMatrix out = feats;
    out.noalias() += mask * w.w.transpose();
    out.rowwise() += w.b.transpose();
    if (macs) macs->add(static_cast<std::uint64_t>(feats.rows()) * feats.cols());
    return out;
}

}  // namespace mt3d
