#include "mt3d/tracker.hpp"

#include <algorithm>
#include <cmath>

#include "mt3d/localize.hpp"
#include "mt3d/mip.hpp"
#include "mt3d/pointops.hpp"
#include "mt3d/ssm.hpp"

namespace mt3d {

void Tracklet::validate() const {
    if (frames.size() < 2)
        throw Error(ErrorKind::InvalidArgument, "tracklet needs at least 2 frames");
    if (frames.size() != gt.size())
        throw Error(ErrorKind::ShapeMismatch, "frame/label count mismatch");
    for (const Box7& b : gt) b.validate();
}

Box7 search_region(const Box7& box, const Config& cfg) {
    auto grow = [&](double e) {
        return std::max(cfg.search_scale * e, e + 2.0 * cfg.search_margin);
    };
    Box7 r = box;
    r.w = grow(box.w);
    r.l = grow(box.l);
    r.h = grow(box.h);
    return r;
}

Cloud crop_points(const Cloud& cloud, const Box7& region) {
    const std::vector<bool> keep = points_in_box(cloud, region);
    Cloud out;
    const bool has_i = cloud.has_intensity();
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        if (!keep[i]) continue;
        out.points.push_back(cloud.points[i]);
        if (has_i) out.intensity.push_back(cloud.intensity[i]);
    }
    return out;
}

static Mat coords_to_world(const Mat& local, const Box7& frame) {
    Mat out(local.rows(), 3);
    for (int i = 0; i < local.rows(); ++i) {
        const Point3 p =
            point_from_box_frame({local(i, 0), local(i, 1), local(i, 2)}, frame);
        out(i, 0) = p.x;
        out(i, 1) = p.y;
        out(i, 2) = p.z;
    }
    return out;
}

static Mat coords_to_frame(const Mat& world, const Box7& frame) {
    Mat out(world.rows(), 3);
    for (int i = 0; i < world.rows(); ++i) {
        const Point3 p =
            point_to_box_frame({world(i, 0), world(i, 1), world(i, 2)}, frame);
        out(i, 0) = p.x;
        out(i, 1) = p.y;
        out(i, 2) = p.z;
    }
    return out;
}

// Re-express the stored world-frame history in the current search-region frame.
static MemoryBank canonical_bank(const MemoryBank& bank, const Box7& frame) {
    MemoryBank out(bank.capacity());
    for (int i = 0; i < bank.size(); ++i) {
        MemoryFrame f = bank.frame(i);
        f.coords = coords_to_frame(f.coords, frame);
        out.push(std::move(f), bank.timestamp(i));
    }
    return out;
}

// Foreground indicator of token coordinates against the axis-aligned box of
// the canonical frame (origin-centered, zero heading).
static Vec token_mask(const Mat& coords, const Box7& sizes) {
    const Box7 canonical(0.0, 0.0, 0.0, sizes.w, sizes.l, sizes.h, 0.0);
    Vec mask(coords.rows());
    for (int j = 0; j < coords.rows(); ++j)
        mask(j) = point_in_box({coords(j, 0), coords(j, 1), coords(j, 2)}, canonical)
                      ? 1.0
                      : 0.0;
    return mask;
}

TrackerState tracker_init(const Cloud& first, const Box7& b1, const Config& cfg,
                          const PipelineWeights& w) {
    cfg.validate();
    w.validate(cfg);
    b1.validate();
    if (first.empty()) throw Error(ErrorKind::EmptyInput, "empty first frame");

    TrackerState st(cfg, w);
    const Cloud crop = crop_points(first, search_region(b1, cfg));
    if (crop.empty()) throw Error(ErrorKind::EmptyInput, "empty search region");
    const Cloud canon = to_box_frame(crop, b1);

    // Frame 1 has no history: tokenize and run the Bi-SSM stack directly.
    TokenizedFrame tok = tokenize(canon, cfg, w.tokenizer);
    FeatureMatrix e1 = bi_ssm_stack(
        w.bissm, tok.feats, identity_order(static_cast<int>(tok.feats.rows())));

    MemoryFrame mf;
    mf.coords = coords_to_world(tok.coords, b1);
    mf.feats = std::move(e1);
    mf.mask = token_mask(tok.coords, b1);
    st.bank.push(std::move(mf), 0);

    st.current_box = b1;
    st.frame_index = 1;
    return st;
}

Box7 tracker_step(TrackerState& st, const Cloud& cloud) {
    if (st.bank.empty()) throw Error(ErrorKind::InvalidArgument, "tracker not initialized");
    const Box7 prev = st.current_box;

    const Cloud crop = crop_points(cloud, search_region(prev, st.cfg));
    if (crop.empty()) {
        st.coasted = true;
        ++st.frame_index;
        return prev;
    }
    st.coasted = false;

    const Cloud canon = to_box_frame(crop, prev);
    const MemoryBank cbank = canonical_bank(st.bank, prev);
    MIPForwardResult fwd = mip_forward(canon, cbank, st.cfg, st.weights);

    const Box7 prior(0.0, 0.0, 0.0, prev.w, prev.l, prev.h, 0.0);
    auto [out, local_box] = localize(fwd.coords, fwd.feats, st.weights.head, prior);
    const Box7 world_box = box_from_frame(local_box, prev);

    MemoryFrame mf;
    mf.coords = coords_to_world(fwd.coords, prev);
    mf.feats = std::move(fwd.feats);
    mf.mask = out.mask_logits.unaryExpr([](double v) { return logistic(v); });
    st.bank.push(std::move(mf), st.frame_index);

    st.current_box = world_box;
    ++st.frame_index;
    return world_box;
}

Tracklet subsample_htv(const Tracklet& t, int interval) {
    if (interval < 1) throw Error(ErrorKind::InvalidArgument, "interval must be >= 1");
    t.validate();
    Tracklet out;
    out.klass = t.klass;
    out.source = t.source;
    for (std::size_t i = 0; i < t.frames.size(); i += interval) {
        out.frames.push_back(t.frames[i]);
        out.gt.push_back(t.gt[i]);
    }
    if (out.frames.size() < 2)
        throw Error(ErrorKind::InvalidArgument, "subsampled tracklet shorter than 2 frames");
    return out;
}

std::vector<FrameEval> run_tracklet(const Tracklet& t, const Config& cfg,
                                    const PipelineWeights& w, bool gt_replay) {
    t.validate();
    std::vector<FrameEval> out;
    out.reserve(t.frames.size());

    if (gt_replay) {
        for (std::size_t i = 0; i < t.frames.size(); ++i)
            out.push_back({t.gt[i], 1.0, 0.0, false});
        return out;
    }

    TrackerState st = tracker_init(t.frames[0], t.gt[0], cfg, w);
    out.push_back({t.gt[0], 1.0, 0.0, false});
    for (std::size_t i = 1; i < t.frames.size(); ++i) {
        const Box7 b = tracker_step(st, t.frames[i]);
        out.push_back({b, iou3d(b, t.gt[i]), center_error(b, t.gt[i]), st.coasted});
    }
    return out;
}

namespace {

struct HeadGrads {
    Vec mask_w;
    double mask_b = 0.0;
    Mat vote_w;
    Vec vote_b;
    Vec vq_w;
    double vq_b = 0.0;
    Mat box_w;
    Vec box_b;
    Vec bq_w;
    double bq_b = 0.0;

    explicit HeadGrads(int c)
        : mask_w(Vec::Zero(c)),
          vote_w(Mat::Zero(3, c)),
          vote_b(Vec::Zero(3)),
          vq_w(Vec::Zero(c)),
          box_w(Mat::Zero(4, c)),
          box_b(Vec::Zero(4)),
          bq_w(Vec::Zero(c)) {}
};

struct TrainSample {
    Mat coords;
    FeatureMatrix feats;
    LocalizeTargets tgt;
};

}  // namespace

TrainReport train_heads(PipelineWeights& w, const Tracklet& t, const Config& cfg,
                        int steps, double lr) {
    t.validate();
    if (steps < 1) throw Error(ErrorKind::InvalidArgument, "steps must be >= 1");

    // Teacher forcing: crops and bank content follow the ground-truth
    // trajectory, so features are independent of the heads being trained and
    // can be built once.
    std::vector<TrainSample> samples;
    MemoryBank bank(cfg.capacity);
    for (std::size_t i = 0; i < t.frames.size(); ++i) {
        const Box7& g = t.gt[i];
        const Cloud crop = crop_points(t.frames[i], search_region(g, cfg));
        if (crop.empty()) continue;
        const Cloud canon = to_box_frame(crop, g);

        Mat coords;
        FeatureMatrix feats;
        if (bank.empty()) {
            TokenizedFrame tok = tokenize(canon, cfg, w.tokenizer);
            coords = tok.coords;
            feats = bi_ssm_stack(w.bissm, tok.feats,
                                 identity_order(static_cast<int>(tok.feats.rows())));
        } else {
            MIPForwardResult fwd = mip_forward(canon, canonical_bank(bank, g), cfg, w);
            coords = fwd.coords;
            feats = std::move(fwd.feats);
        }

        const Vec mask = token_mask(coords, g);
        TrainSample s;
        s.coords = coords;
        s.feats = feats;
        s.tgt.fg_mask.resize(static_cast<std::size_t>(mask.size()));
        for (int j = 0; j < mask.size(); ++j) s.tgt.fg_mask[j] = mask(j) > 0.5;
        s.tgt.center = {0.0, 0.0, 0.0};  // gt center is the canonical origin
        s.tgt.theta_offset = 0.0;
        samples.push_back(std::move(s));

        MemoryFrame mf;
        mf.coords = coords_to_world(coords, g);
        mf.feats = std::move(feats);
        mf.mask = mask;
        bank.push(std::move(mf), static_cast<std::int64_t>(i));
    }
    if (samples.empty()) throw Error(ErrorKind::EmptyInput, "no usable frames to fit");

    const int c = cfg.channels;
    const Box7 dummy_prior(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0);
    auto mean_loss = [&]() {
        double total = 0.0;
        for (const auto& s : samples) {
            auto [out, box] = localize(s.coords, s.feats, w.head, dummy_prior);
            (void)box;
            total += losses(out, s.coords, s.tgt, cfg).total;
        }
        return total / static_cast<double>(samples.size());
    };

    TrainReport rep;
    for (int step = 0; step < steps; ++step) {
        HeadGrads g(c);
        double total = 0.0;
        for (const auto& s : samples) {
            auto [out, box] = localize(s.coords, s.feats, w.head, dummy_prior);
            (void)box;
            total += losses(out, s.coords, s.tgt, cfg).total;
            const LocalizeOutputGrads og = losses_backward(out, s.coords, s.tgt, cfg);
            g.mask_w += s.feats.transpose() * og.mask_logits;
            g.mask_b += og.mask_logits.sum();
            g.vote_w += og.votes.transpose() * s.feats;
            g.vote_b += og.votes.colwise().sum().transpose();
            g.vq_w += s.feats.transpose() * og.vote_quality;
            g.vq_b += og.vote_quality.sum();
            g.box_w += og.box_params.transpose() * s.feats;
            g.box_b += og.box_params.colwise().sum().transpose();
            g.bq_w += s.feats.transpose() * og.box_quality;
            g.bq_b += og.box_quality.sum();
        }
        const double inv = 1.0 / static_cast<double>(samples.size());
        rep.losses.push_back(total * inv);

        w.head.mask_w -= lr * inv * g.mask_w;
        w.head.mask_b -= lr * inv * g.mask_b;
        w.head.vote_w -= lr * inv * g.vote_w;
        w.head.vote_b -= lr * inv * g.vote_b;
        w.head.vq_w -= lr * inv * g.vq_w;
        w.head.vq_b -= lr * inv * g.vq_b;
        w.head.box_w -= lr * inv * g.box_w;
        w.head.box_b -= lr * inv * g.box_b;
        w.head.bq_w -= lr * inv * g.bq_w;
        w.head.bq_b -= lr * inv * g.bq_b;
    }
    rep.initial = rep.losses.front();
    rep.final_loss = mean_loss();
    return rep;
}

}  // namespace mt3d
