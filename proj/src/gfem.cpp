#include "mt3d/gfem.hpp"

#include <cmath>

namespace mt3d {

namespace {

FeatureMatrix group_attention(const FeatureMatrix& tokens, const FeatureMatrix& history,
                              const GFEMGroup& g, bool scale_logits, MacCounter* macs) {
    const Eigen::Index n = tokens.rows();
    const Eigen::Index m = history.rows();
    const Eigen::Index c2 = tokens.cols();

    Mat q = tokens * g.wq.transpose();
    q.rowwise() += g.bq.transpose();
    Mat k = history * g.wk.transpose();
    k.rowwise() += g.bk.transpose();
    Mat v = history * g.wv.transpose();
    v.rowwise() += g.bv.transpose();

    Mat logits = q * k.transpose();
    if (scale_logits) logits /= std::sqrt(static_cast<double>(c2));

    // row softmax with max subtraction
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mx = logits.row(i).maxCoeff();
        logits.row(i) = (logits.row(i).array() - mx).exp();
        logits.row(i) /= logits.row(i).sum();
    }
    if (macs)
        macs->add(static_cast<std::uint64_t>(n + 2 * m) * c2 * c2 +
                  2ULL * n * m * c2 + static_cast<std::uint64_t>(n) * m);
    return logits * v;
}

}  // namespace

void GFEMWeights::validate(int channels) const {
    const int c2 = channels / 2;
    auto check = [&](const GFEMGroup& g) {
        if (g.wq.rows() != c2 || g.wq.cols() != c2 || g.wk.rows() != c2 || g.wk.cols() != c2 ||
            g.wv.rows() != c2 || g.wv.cols() != c2 || g.bq.size() != c2 || g.bk.size() != c2 ||
            g.bv.size() != c2)
            throw Error(ErrorKind::ShapeMismatch, "GFEM weight shapes inconsistent with channels");
    };
    check(g1);
    check(g2);
}

std::pair<FeatureMatrix, FeatureMatrix> split_channels(const FeatureMatrix& x) {
    if (x.cols() % 2 != 0)
        throw Error(ErrorKind::ShapeMismatch, "channel count must be even to split");
    const Eigen::Index c2 = x.cols() / 2;
    return {x.leftCols(c2), x.rightCols(c2)};
}

FeatureMatrix grouped_cross_attention(const FeatureMatrix& tokens, const FeatureMatrix& history,
                                      const GFEMWeights& w, const Config& cfg, MacCounter* macs) {
    if (tokens.cols() != history.cols())
        throw Error(ErrorKind::ShapeMismatch, "token and history channel counts differ");
    if (history.rows() < 1) throw Error(ErrorKind::EmptyInput, "empty history");
    w.validate(static_cast<int>(tokens.cols()));

    const auto [t1, t2] = split_channels(tokens);
    const auto [h1, h2] = split_channels(history);
    const FeatureMatrix o1 = group_attention(t1, h1, w.g1, cfg.gfem_scale_logits, macs);
    const FeatureMatrix o2 = group_attention(t2, h2, w.g2, cfg.gfem_scale_logits, macs);

    FeatureMatrix out(tokens.rows(), tokens.cols());
    out << o1, o2;
    return out;
}

}  // namespace mt3d
