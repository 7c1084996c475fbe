#include "mt3d/oracles.hpp"

#include <algorithm>
#include <cmath>

#include "mt3d/rng.hpp"

namespace mt3d::oracle {

Mat expm(const Mat& m) {
    if (m.rows() != m.cols()) throw Error(ErrorKind::ShapeMismatch, "expm needs square input");
    const int n = static_cast<int>(m.rows());
    const double norm = m.cwiseAbs().rowwise().sum().maxCoeff();  // infinity norm
    int squarings = 0;
    if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
    const Mat t = m / std::pow(2.0, squarings);

    Mat sum = Mat::Identity(n, n);
    Mat term = Mat::Identity(n, n);
    for (int k = 1; k <= 60; ++k) {
        term = (term * t) / static_cast<double>(k);
        sum += term;
        if (term.cwiseAbs().maxCoeff() < 1e-18 * sum.cwiseAbs().maxCoeff()) break;
    }
    for (int s = 0; s < squarings; ++s) sum = sum * sum;
    return sum;
}

DiscreteLTI zoh_van_loan(const LTISystem& sys) {
    sys.validate();
    const int d = static_cast<int>(sys.a.size());
    DiscreteLTI out;
    out.abar.resize(d);
    out.bbar.resize(d);
    for (int i = 0; i < d; ++i) {
        Mat aug = Mat::Zero(2, 2);
        aug(0, 0) = sys.a(i) * sys.delta;
        aug(0, 1) = sys.b(i) * sys.delta;
        const Mat e = expm(aug);
        out.abar(i) = e(0, 0);
        out.bbar(i) = e(0, 1);
    }
    return out;
}

double iou3d_mc(const Box7& a, const Box7& b, int samples, std::uint64_t seed) {
    if (samples < 1) throw Error(ErrorKind::InvalidArgument, "need >= 1 sample");
    // Bounding box of both boxes' corners.
    double lo[3] = {1e300, 1e300, 1e300}, hi[3] = {-1e300, -1e300, -1e300};
    for (const Box7* box : {&a, &b}) {
        for (const Point3& p : box_corners(*box)) {
            lo[0] = std::min(lo[0], p.x);
            lo[1] = std::min(lo[1], p.y);
            lo[2] = std::min(lo[2], p.z);
            hi[0] = std::max(hi[0], p.x);
            hi[1] = std::max(hi[1], p.y);
            hi[2] = std::max(hi[2], p.z);
        }
    }
    const double vol =
        (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]);
    Rng rng(seed);
    std::int64_t inter = 0;
    for (int s = 0; s < samples; ++s) {
        const Point3 p{rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1]),
                       rng.uniform(lo[2], hi[2])};
        if (point_in_box(p, a) && point_in_box(p, b)) ++inter;
    }
    const double vi = vol * static_cast<double>(inter) / samples;
    const double vu = a.volume() + b.volume() - vi;
    return vu > 0.0 ? vi / vu : 0.0;
}

double success_auc_brute(const std::vector<double>& ious) {
    if (ious.empty()) throw Error(ErrorKind::EmptyInput, "no IoU values");
    // Accumulate per-frame threshold hits, then normalize: same grid, written
    // with the loops inverted relative to the production sweep.
    int hits[101] = {0};
    for (double v : ious)
        for (int i = 0; i <= 100; ++i)
            if (v > static_cast<double>(i) / 100.0) ++hits[i];
    double acc = 0.0;
    for (int i = 0; i <= 100; ++i)
        acc += static_cast<double>(hits[i]) / static_cast<double>(ious.size());
    return acc / 101.0;
}

double precision_auc_brute(const std::vector<double>& errors, double cap) {
    if (errors.empty()) throw Error(ErrorKind::EmptyInput, "no error values");
    if (cap <= 0.0) throw Error(ErrorKind::InvalidArgument, "cap must be > 0");
    int hits[101] = {0};
    for (double v : errors)
        for (int i = 0; i <= 100; ++i)
            if (v < cap * static_cast<double>(i) / 100.0) ++hits[i];
    double acc = 0.0;
    for (int i = 0; i <= 100; ++i)
        acc += static_cast<double>(hits[i]) / static_cast<double>(errors.size());
    return acc / 101.0;
}

FeatureMatrix propagate_oracle(const Mat& coords, const FeatureMatrix& tokens,
                               const Mat& hist_coords, const FeatureMatrix& hist_feats,
                               const Config& cfg, const MIPWeights& w) {
    const int n = static_cast<int>(coords.rows());
    const int c = static_cast<int>(tokens.cols());
    const int m = static_cast<int>(hist_coords.rows());
    const int kk = cfg.neighbors;
    FeatureMatrix out(n, c);

    for (int j = 0; j < n; ++j) {
        // Selection sort of history rows by (distance, index); the first kk
        // distinct rows are the neighbors, short histories pad round-robin.
        std::vector<std::pair<double, int>> order(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) {
            double d2 = 0.0;
            for (int a = 0; a < 3; ++a) {
                const double diff = coords(j, a) - hist_coords(i, a);
                d2 += diff * diff;
            }
            order[static_cast<std::size_t>(i)] = {d2, i};
        }
        std::sort(order.begin(), order.end());
        std::vector<int> nbr(static_cast<std::size_t>(kk));
        for (int t = 0; t < kk; ++t)
            nbr[static_cast<std::size_t>(t)] =
                t < m ? order[static_cast<std::size_t>(t)].second
                      : order[static_cast<std::size_t>(t % m)].second;

        // Candidate features, one neighbor at a time.
        std::vector<std::vector<double>> cand(
            static_cast<std::size_t>(kk), std::vector<double>(static_cast<std::size_t>(c)));
        for (int t = 0; t < kk; ++t) {
            for (int row = 0; row < c; ++row) {
                double acc = w.proj_b(row);
                for (int col = 0; col < c; ++col)
                    acc += w.proj_w(row, col) * hist_feats(nbr[static_cast<std::size_t>(t)], col);
                for (int col = 0; col < c; ++col)
                    acc += w.proj_w(row, c + col) * tokens(j, col);
                cand[static_cast<std::size_t>(t)][static_cast<std::size_t>(row)] =
                    w.alpha(row) * acc + w.beta(row);
            }
        }

        for (int ch = 0; ch < c; ++ch) {
            double mx = cand[0][static_cast<std::size_t>(ch)];
            for (int t = 1; t < kk; ++t)
                mx = std::max(mx, cand[static_cast<std::size_t>(t)][static_cast<std::size_t>(ch)]);
            double z = 0.0;
            for (int t = 0; t < kk; ++t)
                z += std::exp(cand[static_cast<std::size_t>(t)][static_cast<std::size_t>(ch)] - mx);
            double acc = 0.0;
            for (int t = 0; t < kk; ++t) {
                const double f = cand[static_cast<std::size_t>(t)][static_cast<std::size_t>(ch)];
                acc += (std::exp(f - mx) / z) * f;
            }
            out(j, ch) = acc;
        }
    }
    return out;
}

FeatureMatrix gfem_oracle(const FeatureMatrix& tokens, const FeatureMatrix& hist,
                          const GFEMWeights& w, const Config& cfg) {
    const int n = static_cast<int>(tokens.rows());
    const int m = static_cast<int>(hist.rows());
    const int c = static_cast<int>(tokens.cols());
    const int c2 = c / 2;
    FeatureMatrix out(n, c);

    const GFEMGroup* groups[2] = {&w.g1, &w.g2};
    for (int g = 0; g < 2; ++g) {
        const GFEMGroup& grp = *groups[g];
        const int off = g * c2;
        for (int i = 0; i < n; ++i) {
            // q_i for this group
            std::vector<double> q(static_cast<std::size_t>(c2));
            for (int r = 0; r < c2; ++r) {
                double acc = grp.bq(r);
                for (int col = 0; col < c2; ++col) acc += grp.wq(r, col) * tokens(i, off + col);
                q[static_cast<std::size_t>(r)] = acc;
            }
            // logits against every history row
            std::vector<double> logit(static_cast<std::size_t>(m));
            for (int j = 0; j < m; ++j) {
                double dot = 0.0;
                for (int r = 0; r < c2; ++r) {
                    double kr = grp.bk(r);
                    for (int col = 0; col < c2; ++col) kr += grp.wk(r, col) * hist(j, off + col);
                    dot += q[static_cast<std::size_t>(r)] * kr;
                }
                if (cfg.gfem_scale_logits) dot /= std::sqrt(static_cast<double>(c2));
                logit[static_cast<std::size_t>(j)] = dot;
            }
            double mx = logit[0];
            for (int j = 1; j < m; ++j) mx = std::max(mx, logit[static_cast<std::size_t>(j)]);
            double z = 0.0;
            for (int j = 0; j < m; ++j) z += std::exp(logit[static_cast<std::size_t>(j)] - mx);
            for (int r = 0; r < c2; ++r) {
                double acc = 0.0;
                for (int j = 0; j < m; ++j) {
                    double vr = grp.bv(r);
                    for (int col = 0; col < c2; ++col) vr += grp.wv(r, col) * hist(j, off + col);
                    acc += (std::exp(logit[static_cast<std::size_t>(j)] - mx) / z) * vr;
                }
                out(i, off + r) = acc;
            }
        }
    }
    return out;
}

}  // namespace mt3d::oracle
