#include <doctest.h>

#include <cmath>
#include <vector>

#include "mt3d/gfem.hpp"
#include "mt3d/oracles.hpp"
#include "mt3d/rng.hpp"
#include "test_util.hpp"

using namespace mt3d;

namespace {

GFEMGroup random_group(int half, Rng& rng) {
    GFEMGroup g;
    g.wq = testutil::random_mat(half, half, rng, 0.4);
    g.wk = testutil::random_mat(half, half, rng, 0.4);
    g.wv = testutil::random_mat(half, half, rng, 0.4);
    g.bq = testutil::random_vec(half, rng, 0.2);
    g.bk = testutil::random_vec(half, rng, 0.2);
    g.bv = testutil::random_vec(half, rng, 0.2);
    return g;
}

GFEMWeights random_gfem(int channels, Rng& rng) {
    GFEMWeights w;
    w.g1 = random_group(channels / 2, rng);
    w.g2 = random_group(channels / 2, rng);
    return w;
}

}  // namespace

TEST_SUITE("gfem") {

TEST_CASE("split_channels halves columns and concatenation inverts it") {
    Rng rng(501);
    const FeatureMatrix x = testutil::random_mat(5, 8, rng);
    const auto [a, b] = split_channels(x);
    CHECK(a.cols() == 4);
    CHECK(b.cols() == 4);
    CHECK(a.rows() == 5);
    FeatureMatrix back(5, 8);
    back << a, b;
    CHECK((back - x).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a - x.leftCols(4)).cwiseAbs().maxCoeff() == 0.0);

    const FeatureMatrix odd = testutil::random_mat(3, 5, rng);
    CHECK_THROWS_AS((void)split_channels(odd), Error);
}

TEST_CASE("single history row: every token receives that row's value") {
    Rng rng(502);
    const int C = 8;
    const GFEMWeights w = random_gfem(C, rng);
    const FeatureMatrix tokens = testutil::random_mat(6, C, rng);
    const FeatureMatrix hist = testutil::random_mat(1, C, rng);
    Config cfg;
    cfg.channels = C;

    const FeatureMatrix out = grouped_cross_attention(tokens, hist, w, cfg);
    // softmax over one key is 1, so the output is the value projection of the
    // lone history row, identical for every query
    const Vec h1 = hist.leftCols(4).row(0).transpose();
    const Vec h2 = hist.rightCols(4).row(0).transpose();
    Vec want(C);
    want << w.g1.wv * h1 + w.g1.bv, w.g2.wv * h2 + w.g2.bv;
    for (int i = 0; i < 6; ++i)
        CHECK((out.row(i).transpose() - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("groups are independent: perturbing group-2 inputs leaves group-1 output") {
    Rng rng(503);
    const int C = 8;
    const GFEMWeights w = random_gfem(C, rng);
    const FeatureMatrix tokens = testutil::random_mat(5, C, rng);
    const FeatureMatrix hist = testutil::random_mat(7, C, rng);
    Config cfg;
    cfg.channels = C;

    const FeatureMatrix base = grouped_cross_attention(tokens, hist, w, cfg);
    FeatureMatrix tokens2 = tokens;
    FeatureMatrix hist2 = hist;
    tokens2.rightCols(4).array() += 0.7;
    hist2.rightCols(4).array() -= 0.3;
    const FeatureMatrix moved = grouped_cross_attention(tokens2, hist2, w, cfg);
    CHECK((moved.leftCols(4) - base.leftCols(4)).cwiseAbs().maxCoeff() < 1e-7);
    CHECK((moved.rightCols(4) - base.rightCols(4)).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("matches the elementwise oracle") {
    Rng rng(504);
    Config cfg;
    cfg.channels = 4;
    for (int trial = 0; trial < 30; ++trial) {
        const GFEMWeights w = random_gfem(4, rng);
        const FeatureMatrix tokens = testutil::random_mat(2, 4, rng);
        const FeatureMatrix hist = testutil::random_mat(3, 4, rng);
        const FeatureMatrix out = grouped_cross_attention(tokens, hist, w, cfg);
        const FeatureMatrix want = oracle::gfem_oracle(tokens, hist, w, cfg);
        CHECK((out - want).cwiseAbs().maxCoeff() < 1e-6);
    }
    // a larger shape as well
    Config big;
    big.channels = 16;
    for (int trial = 0; trial < 10; ++trial) {
        const GFEMWeights w = random_gfem(16, rng);
        const FeatureMatrix tokens = testutil::random_mat(9, 16, rng);
        const FeatureMatrix hist = testutil::random_mat(13, 16, rng);
        const FeatureMatrix out = grouped_cross_attention(tokens, hist, w, big);
        const FeatureMatrix want = oracle::gfem_oracle(tokens, hist, w, big);
        CHECK((out - want).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("identical history rows collapse to a single value row") {
    Rng rng(505);
    const int C = 8;
    const GFEMWeights w = random_gfem(C, rng);
    const FeatureMatrix tokens = testutil::random_mat(4, C, rng);
    FeatureMatrix hist(6, C);
    const RowVec shared = testutil::random_mat(1, C, rng).row(0);
    for (int i = 0; i < 6; ++i) hist.row(i) = shared;
    Config cfg;
    cfg.channels = C;

    const FeatureMatrix out = grouped_cross_attention(tokens, hist, w, cfg);
    const Vec h1 = shared.head(4).transpose();
    const Vec h2 = shared.tail(4).transpose();
    Vec want(C);
    want << w.g1.wv * h1 + w.g1.bv, w.g2.wv * h2 + w.g2.bv;
    for (int i = 0; i < 4; ++i)
        CHECK((out.row(i).transpose() - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("output stays inside the convex hull of the value rows") {
    // C=2: each group is scalar, so the attended value must lie between the
    // min and max projected history values.
    Rng rng(506);
    Config cfg;
    cfg.channels = 2;
    for (int trial = 0; trial < 20; ++trial) {
        const GFEMWeights w = random_gfem(2, rng);
        const FeatureMatrix tokens = testutil::random_mat(3, 2, rng);
        const FeatureMatrix hist = testutil::random_mat(5, 2, rng);
        const FeatureMatrix out = grouped_cross_attention(tokens, hist, w, cfg);
        for (int g = 0; g < 2; ++g) {
            const GFEMGroup& grp = g == 0 ? w.g1 : w.g2;
            const Vec vals = (hist.col(g).array() * grp.wv(0, 0) + grp.bv(0)).matrix();
            const double lo = vals.minCoeff() - 1e-12;
            const double hi = vals.maxCoeff() + 1e-12;
            for (int i = 0; i < 3; ++i) {
                CHECK(out(i, g) >= lo);
                CHECK(out(i, g) <= hi);
            }
        }
    }
}

TEST_CASE("logit scaling toggle changes the output and the oracle tracks it") {
    Rng rng(507);
    Config cfg;
    cfg.channels = 8;
    const GFEMWeights w = random_gfem(8, rng);
    const FeatureMatrix tokens = testutil::random_mat(4, 8, rng, 1.5);
    const FeatureMatrix hist = testutil::random_mat(6, 8, rng, 1.5);

    Config unscaled = cfg;
    unscaled.gfem_scale_logits = false;
    const FeatureMatrix a = grouped_cross_attention(tokens, hist, w, cfg);
    const FeatureMatrix b = grouped_cross_attention(tokens, hist, w, unscaled);
    CHECK((a - b).cwiseAbs().maxCoeff() > 0.0);
    const FeatureMatrix want = oracle::gfem_oracle(tokens, hist, w, unscaled);
    CHECK((b - want).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("invariant to permuting history rows") {
    Rng rng(508);
    Config cfg;
    cfg.channels = 8;
    const GFEMWeights w = random_gfem(8, rng);
    const FeatureMatrix tokens = testutil::random_mat(5, 8, rng);
    const FeatureMatrix hist = testutil::random_mat(9, 8, rng);
    FeatureMatrix shuffled(9, 8);
    for (int i = 0; i < 9; ++i) shuffled.row(i) = hist.row((i * 4 + 2) % 9);
    const FeatureMatrix a = grouped_cross_attention(tokens, hist, w, cfg);
    const FeatureMatrix b = grouped_cross_attention(tokens, shuffled, w, cfg);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("shape errors") {
    Rng rng(509);
    Config cfg;
    cfg.channels = 8;
    const GFEMWeights w = random_gfem(8, rng);
    const FeatureMatrix tokens = testutil::random_mat(4, 8, rng);
    const FeatureMatrix hist6 = testutil::random_mat(3, 6, rng);
    CHECK_THROWS_AS((void)grouped_cross_attention(tokens, hist6, w, cfg), Error);
    const FeatureMatrix empty(0, 8);
    CHECK_THROWS_AS((void)grouped_cross_attention(tokens, empty, w, cfg), Error);
}

}  // TEST_SUITE
