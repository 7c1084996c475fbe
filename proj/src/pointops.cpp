#include "mt3d/pointops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mt3d/rng.hpp"

namespace mt3d {

namespace {

inline double dist2(const Point3& a, const Point3& b) {
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return dx * dx + dy * dy + dz * dz;
}

std::vector<Point3> mat_to_points(const Mat& m) {
    std::vector<Point3> pts(m.rows());
    for (Eigen::Index i = 0; i < m.rows(); ++i) pts[i] = {m(i, 0), m(i, 1), m(i, 2)};
    return pts;
}

}  // namespace

void TokenizerWeights::validate(const Config& cfg) const {
    const int c2 = cfg.half_channels();
    if (w1.rows() != c2 || w1.cols() != 3 || b1.size() != c2 || w2.rows() != cfg.channels ||
        w2.cols() != c2 || b2.size() != cfg.channels)
        throw Error(ErrorKind::ShapeMismatch, "tokenizer weight shapes inconsistent with config");
}

std::size_t fps_default_start(const Cloud& c) {
    if (c.empty()) throw Error(ErrorKind::EmptyInput, "empty input cloud");
    std::size_t best = 0;
    for (std::size_t i = 1; i < c.size(); ++i) {
        const Point3& p = c.points[i];
        const Point3& q = c.points[best];
        if (p.x < q.x || (p.x == q.x && (p.y < q.y || (p.y == q.y && p.z < q.z)))) best = i;
    }
    return best;
}

std::vector<int> fps(const Cloud& c, int n, std::size_t start, MacCounter* macs) {
    if (c.empty()) throw Error(ErrorKind::EmptyInput, "empty input cloud");
    if (n < 1) throw Error(ErrorKind::InvalidArgument, "sample count must be >= 1");
    if (start >= c.size()) throw Error(ErrorKind::InvalidArgument, "start index out of range");

    const std::size_t m = c.size();
    std::vector<int> chosen;
    chosen.reserve(n);
    chosen.push_back(static_cast<int>(start));

    std::vector<double> mind(m, std::numeric_limits<double>::infinity());
    const std::size_t distinct = std::min<std::size_t>(m, static_cast<std::size_t>(n));
    std::size_t last = start;
    while (chosen.size() < distinct) {
        double best = -1.0;
        std::size_t best_i = 0;
        const Point3& lp = c.points[last];
        for (std::size_t i = 0; i < m; ++i) {
            const double d = dist2(c.points[i], lp);
            if (d < mind[i]) mind[i] = d;
            if (mind[i] > best) {
                best = mind[i];
                best_i = i;
            }
        }
        if (macs) macs->add(m * 3);
        chosen.push_back(static_cast<int>(best_i));
        last = best_i;
    }
    // Cloud smaller than n: cycle deterministically over the chosen indices.
    for (std::size_t i = 0; chosen.size() < static_cast<std::size_t>(n); ++i)
        chosen.push_back(chosen[i % distinct]);
    return chosen;
}

NeighborIndex knn(const std::vector<Point3>& queries, const std::vector<Point3>& refs, int k,
                  MacCounter* macs) {
    if (refs.empty()) throw Error(ErrorKind::EmptyInput, "empty reference point set");
    if (k < 1) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");

    const int nr = static_cast<int>(refs.size());
    const int kk = std::min(k, nr);
    NeighborIndex out;
    out.idx.resize(static_cast<int>(queries.size()), k);
    out.padded = nr < k;

    std::vector<std::pair<double, int>> d(nr);
    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        for (int ri = 0; ri < nr; ++ri) d[ri] = {dist2(queries[qi], refs[ri]), ri};
        if (macs) macs->add(static_cast<std::uint64_t>(nr) * 3);
        std::partial_sort(d.begin(), d.begin() + kk, d.end());
        for (int j = 0; j < k; ++j) out.idx(static_cast<int>(qi), j) = d[j % kk].second;
    }
    return out;
}

NeighborIndex knn(const Mat& queries, const Mat& refs, int k, MacCounter* macs) {
    return knn(mat_to_points(queries), mat_to_points(refs), k, macs);
}

TokenizedFrame tokenize(const Cloud& c, const Config& cfg, const TokenizerWeights& w,
                        MacCounter* macs) {
    if (c.empty()) throw Error(ErrorKind::EmptyInput, "empty input cloud");
    w.validate(cfg);

    std::size_t start;
    if (cfg.fps_random_start) {
        Rng rng(cfg.fps_start_seed);
        start = static_cast<std::size_t>(rng.uniform_index(c.size()));
    } else {
        start = fps_default_start(c);
    }
    const std::vector<int> sel = fps(c, cfg.num_tokens, start, macs);

    std::vector<Point3> centers(sel.size());
    for (std::size_t i = 0; i < sel.size(); ++i) centers[i] = c.points[sel[i]];
    const NeighborIndex nn = knn(centers, c.points, cfg.neighbors, macs);

    TokenizedFrame out;
    out.padded = c.size() < static_cast<std::size_t>(cfg.num_tokens);
    out.coords.resize(cfg.num_tokens, 3);
    out.feats.resize(cfg.num_tokens, cfg.channels);

    const int c2 = cfg.half_channels();
    Vec rel(3), hidden(c2), feat(cfg.channels);
    for (int t = 0; t < cfg.num_tokens; ++t) {
        const Point3& ctr = centers[t];
        out.coords(t, 0) = ctr.x;
        out.coords(t, 1) = ctr.y;
        out.coords(t, 2) = ctr.z;
        Vec pooled = Vec::Constant(cfg.channels, -std::numeric_limits<double>::infinity());
        for (int j = 0; j < cfg.neighbors; ++j) {
            const Point3& nb = c.points[nn.idx(t, j)];
            rel << nb.x - ctr.x, nb.y - ctr.y, nb.z - ctr.z;
            hidden = (w.w1 * rel + w.b1).cwiseMax(0.0);
            feat = (w.w2 * hidden + w.b2).cwiseMax(0.0);
            pooled = pooled.cwiseMax(feat);
        }
        out.feats.row(t) = pooled.transpose();
        if (macs)
            macs->add(static_cast<std::uint64_t>(cfg.neighbors) *
                      (3ULL * c2 + static_cast<std::uint64_t>(c2) * cfg.channels));
    }
    return out;
}

}  // namespace mt3d
