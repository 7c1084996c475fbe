#include "mt3d/mip.hpp"

#include <algorithm>
#include <cmath>

#include "mt3d/weights.hpp"

namespace mt3d {

void MIPWeights::validate(const Config& cfg) const {
    const int c = cfg.channels;
    if (proj_w.rows() != c || proj_w.cols() != 2 * c)
        throw Error(ErrorKind::ShapeMismatch, "propagation projection must be C x 2C");
    if (proj_b.size() != c || alpha.size() != c || beta.size() != c)
        throw Error(ErrorKind::ShapeMismatch, "propagation vectors must have C entries");
}

PropagateResult propagate(const Mat& coords, const FeatureMatrix& tokens,
                          const Mat& hist_coords, const FeatureMatrix& hist_feats,
                          const Config& cfg, const MIPWeights& w, MacCounter* macs) {
    if (hist_coords.rows() < 1) throw Error(ErrorKind::EmptyInput, "empty history");
    if (coords.rows() != tokens.rows())
        throw Error(ErrorKind::ShapeMismatch, "token coords/features row mismatch");
    if (hist_coords.rows() != hist_feats.rows())
        throw Error(ErrorKind::ShapeMismatch, "history coords/features row mismatch");
    if (tokens.cols() != hist_feats.cols())
        throw Error(ErrorKind::ShapeMismatch, "token/history channel mismatch");
    w.validate(cfg);
    const int n = static_cast<int>(coords.rows());
    const int c = static_cast<int>(tokens.cols());
    const int kk = cfg.neighbors;

    PropagateResult out;
    out.neighbors = knn(coords, hist_coords, kk, macs);
    out.feats.resize(n, c);
    out.weights.reserve(static_cast<std::size_t>(n));

    Vec cat(2 * c), fused(c);
    Mat cand(kk, c);  // candidate features for one query
    for (int j = 0; j < n; ++j) {
        for (int t = 0; t < kk; ++t) {
            const int hi = out.neighbors.idx(j, t);
            cat.head(c) = hist_feats.row(hi).transpose();
            cat.tail(c) = tokens.row(j).transpose();
            fused = w.proj_w * cat + w.proj_b;
            cand.row(t) =
                (w.alpha.array() * fused.array() + w.beta.array()).transpose();
        }
        // Neighbor weights: softmax across the k candidates. Channel-wise by
        // default; the scalar variant softmaxes the per-candidate channel mean
        // and broadcasts it.
        Mat wts(kk, c);
        if (cfg.scalar_softmax) {
            Vec logit(kk);
            for (int t = 0; t < kk; ++t) logit(t) = cand.row(t).mean();
            const double mx = logit.maxCoeff();
            Vec e = (logit.array() - mx).exp();
            e /= e.sum();
            for (int t = 0; t < kk; ++t) wts.row(t).setConstant(e(t));
        } else {
            for (int ch = 0; ch < c; ++ch) {
                double mx = cand(0, ch);
                for (int t = 1; t < kk; ++t) mx = std::max(mx, cand(t, ch));
                double z = 0.0;
                for (int t = 0; t < kk; ++t) {
                    const double e = std::exp(cand(t, ch) - mx);
                    wts(t, ch) = e;
                    z += e;
                }
                for (int t = 0; t < kk; ++t) wts(t, ch) /= z;
            }
        }
        out.feats.row(j) = (wts.array() * cand.array()).colwise().sum();
        out.weights.push_back(std::move(wts));
    }
    if (macs)
        macs->add(static_cast<std::uint64_t>(n) * kk *
                  (2ull * c * c + 4ull * c));
    return out;
}

MIPForwardResult mip_forward(const Cloud& cloud, const MemoryBank& bank, const Config& cfg,
                             const PipelineWeights& w, MacCounter* macs) {
    TokenizedFrame tok = tokenize(cloud, cfg, w.tokenizer, macs);
    BankView view = bank.concat();

    FeatureMatrix hist = cfg.use_mask_fusion
                             ? fuse_mask(view.feats, view.mask, w.mask_embed, macs)
                             : view.feats;

    FeatureMatrix query = tok.feats;
    if (cfg.use_gfem) {
        const FeatureMatrix& attend = cfg.gfem_raw_history ? view.feats : hist;
        query = grouped_cross_attention(tok.feats, attend, w.gfem, cfg, macs);
    }

    PropagateResult prop = propagate(tok.coords, query, view.coords, hist, cfg, w.mip, macs);

    MIPForwardResult out;
    out.coords = tok.coords;
    out.tokens = tok.feats;
    out.feats = bi_ssm_stack(w.bissm, prop.feats,
                             identity_order(static_cast<int>(prop.feats.rows())), macs);
    out.padded = tok.padded;
    return out;
}

std::uint64_t flops_mip(const Config& cfg, std::uint64_t n_points) {
    // Mirrors the counters the instrumented path increments, assuming a full
    // memory bank and n_points >= num_tokens.
    const std::uint64_t n = n_points;
    const std::uint64_t nt = static_cast<std::uint64_t>(cfg.num_tokens);
    const std::uint64_t c = static_cast<std::uint64_t>(cfg.channels);
    const std::uint64_t c2 = c / 2;
    const std::uint64_t k = static_cast<std::uint64_t>(cfg.neighbors);
    const std::uint64_t d = static_cast<std::uint64_t>(cfg.state_dim);
    const std::uint64_t layers = static_cast<std::uint64_t>(cfg.ssm_layers);
    const std::uint64_t m = static_cast<std::uint64_t>(cfg.capacity) * nt;

    std::uint64_t total = 0;
    const std::uint64_t sel = std::min(nt, n);
    if (sel > 0) total += (sel - 1) * n * 3;   // farthest point sampling
    total += nt * n * 3;                       // token neighborhood search
    total += nt * k * (3 * c2 + c2 * c);       // neighborhood embedding
    if (cfg.use_mask_fusion) total += m * c;   // mask fusion
    if (cfg.use_gfem)                          // grouped cross-attention
        total += 2 * ((nt + 2 * m) * c2 * c2 + 2 * nt * m * c2 + nt * m);
    total += nt * m * 3;                       // propagation neighbor search
    total += nt * k * (2 * c * c + 4 * c);     // propagation core
    const std::uint64_t scan = c * c + 2 * d * c + c + 6 * c * d;
    total += layers * (2 * nt * scan + nt * (2 * c * c + 5 * c));  // Bi-SSM stack
    return total;
}

}  // namespace mt3d
