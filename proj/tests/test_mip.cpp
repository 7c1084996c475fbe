#include <doctest.h>

#include <cmath>
#include <vector>

#include "mt3d/mip.hpp"
#include "mt3d/oracles.hpp"
#include "mt3d/rng.hpp"
#include "mt3d/weights.hpp"
#include "test_util.hpp"

using namespace mt3d;

namespace {

MIPWeights random_mip(const Config& cfg, Rng& rng) {
    MIPWeights w;
    w.proj_w = testutil::random_mat(cfg.channels, 2 * cfg.channels, rng, 0.3);
    w.proj_b = testutil::random_vec(cfg.channels, rng, 0.2);
    w.alpha = Vec::Ones(cfg.channels) + testutil::random_vec(cfg.channels, rng, 0.1);
    w.beta = testutil::random_vec(cfg.channels, rng, 0.1);
    return w;
}

// F-hat of one (history row, token row) pair, written out longhand.
Vec fhat_oracle(const Vec& hist, const Vec& token, const MIPWeights& w) {
    Vec cat(hist.size() + token.size());
    cat << hist, token;
    const Vec projected = w.proj_w * cat + w.proj_b;
    return w.alpha.cwiseProduct(projected) + w.beta;
}

MemoryBank bank_with_frames(const std::vector<MemoryFrame>& frames, int capacity) {
    MemoryBank bank(capacity);
    for (std::size_t i = 0; i < frames.size(); ++i)
        bank.push(frames[i], static_cast<std::int64_t>(i) + 1);
    return bank;
}

MemoryFrame random_frame(int n, int c, Rng& rng) {
    MemoryFrame f;
    f.coords = testutil::random_mat(n, 3, rng, 2.0);
    f.feats = testutil::random_mat(n, c, rng, 1.0);
    f.mask.resize(n);
    for (int i = 0; i < n; ++i) f.mask(i) = rng.uniform();
    return f;
}

}  // namespace

TEST_SUITE("mip") {

TEST_CASE("propagate: single neighbor has unit weight") {
    Config cfg;
    cfg.num_tokens = 3;
    cfg.channels = 6;
    cfg.neighbors = 1;
    Rng rng(401);
    const MIPWeights w = random_mip(cfg, rng);
    const Mat coords = testutil::random_mat(3, 3, rng, 2.0);
    const FeatureMatrix tokens = testutil::random_mat(3, 6, rng);
    const Mat hist_coords = testutil::random_mat(7, 3, rng, 2.0);
    const FeatureMatrix hist_feats = testutil::random_mat(7, 6, rng);

    const PropagateResult res = propagate(coords, tokens, hist_coords, hist_feats, cfg, w);
    for (int q = 0; q < 3; ++q) {
        CHECK((res.weights[q].array() - 1.0).abs().maxCoeff() == 0.0);
        const int nb = res.neighbors.idx(q, 0);
        const Vec want =
            fhat_oracle(hist_feats.row(nb).transpose(), tokens.row(q).transpose(), w);
        CHECK((res.feats.row(q).transpose() - want).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("propagate: identical candidates split weights evenly") {
    Config cfg;
    cfg.num_tokens = 2;
    cfg.channels = 4;
    cfg.neighbors = 4;
    Rng rng(402);
    const MIPWeights w = random_mip(cfg, rng);
    const Mat coords = testutil::random_mat(2, 3, rng, 1.0);
    const FeatureMatrix tokens = testutil::random_mat(2, 4, rng);
    const Mat hist_coords = testutil::random_mat(6, 3, rng, 1.0);
    FeatureMatrix hist_feats(6, 4);
    const Vec shared = testutil::random_vec(4, rng);
    for (int i = 0; i < 6; ++i) hist_feats.row(i) = shared.transpose();

    const PropagateResult res = propagate(coords, tokens, hist_coords, hist_feats, cfg, w);
    for (int q = 0; q < 2; ++q) {
        CHECK((res.weights[q].array() - 0.25).abs().maxCoeff() < 1e-15);
        const Vec want = fhat_oracle(shared, tokens.row(q).transpose(), w);
        CHECK((res.feats.row(q).transpose() - want).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("propagate matches the elementwise oracle") {
    Rng rng(403);
    // the tiny published example shape, then a larger one
    for (int variant = 0; variant < 2; ++variant) {
        Config cfg;
        cfg.num_tokens = variant == 0 ? 2 : 8;
        cfg.channels = variant == 0 ? 2 : 8;
        cfg.neighbors = variant == 0 ? 2 : 4;
        const int hist_rows = variant == 0 ? 6 : 24;  // three history frames
        for (int trial = 0; trial < 25; ++trial) {
            const MIPWeights w = random_mip(cfg, rng);
            const Mat coords = testutil::random_mat(cfg.num_tokens, 3, rng, 2.0);
            const FeatureMatrix tokens = testutil::random_mat(cfg.num_tokens, cfg.channels, rng);
            const Mat hc = testutil::random_mat(hist_rows, 3, rng, 2.0);
            const FeatureMatrix hf = testutil::random_mat(hist_rows, cfg.channels, rng);
            const PropagateResult res = propagate(coords, tokens, hc, hf, cfg, w);
            const FeatureMatrix want = oracle::propagate_oracle(coords, tokens, hc, hf, cfg, w);
            CHECK((res.feats - want).cwiseAbs().maxCoeff() < 1e-6);
        }
    }
}

TEST_CASE("propagate: neighbor weights sum to one per channel, padding included") {
    Rng rng(404);
    Config cfg;
    cfg.num_tokens = 4;
    cfg.channels = 6;
    cfg.neighbors = 5;
    const MIPWeights w = random_mip(cfg, rng);
    const Mat coords = testutil::random_mat(4, 3, rng);
    const FeatureMatrix tokens = testutil::random_mat(4, 6, rng);
    // only 3 history rows: knn pads to 5 neighbors
    const Mat hc = testutil::random_mat(3, 3, rng);
    const FeatureMatrix hf = testutil::random_mat(3, 6, rng);
    const PropagateResult res = propagate(coords, tokens, hc, hf, cfg, w);
    CHECK(res.neighbors.padded);
    for (int q = 0; q < 4; ++q) {
        const Vec colsum = res.weights[q].colwise().sum().transpose();
        CHECK((colsum.array() - 1.0).abs().maxCoeff() < 1e-12);
        CHECK(res.weights[q].minCoeff() >= 0.0);
    }
}

TEST_CASE("propagate: equivariant to relabeling history rows") {
    Rng rng(405);
    Config cfg;
    cfg.num_tokens = 5;
    cfg.channels = 8;
    cfg.neighbors = 3;
    const MIPWeights w = random_mip(cfg, rng);
    const Mat coords = testutil::random_mat(5, 3, rng, 2.0);
    const FeatureMatrix tokens = testutil::random_mat(5, 8, rng);
    const Mat hc = testutil::random_mat(12, 3, rng, 2.0);
    const FeatureMatrix hf = testutil::random_mat(12, 8, rng);

    std::vector<int> perm(12);
    for (int i = 0; i < 12; ++i) perm[i] = (i * 5 + 3) % 12;  // fixed permutation
    Mat hc2(12, 3);
    FeatureMatrix hf2(12, 8);
    for (int i = 0; i < 12; ++i) {
        hc2.row(i) = hc.row(perm[i]);
        hf2.row(i) = hf.row(perm[i]);
    }
    const FeatureMatrix a = propagate(coords, tokens, hc, hf, cfg, w).feats;
    const FeatureMatrix b = propagate(coords, tokens, hc2, hf2, cfg, w).feats;
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("propagate: output is local to the selected neighbors") {
    Rng rng(406);
    Config cfg;
    cfg.num_tokens = 4;
    cfg.channels = 6;
    cfg.neighbors = 3;
    const MIPWeights w = random_mip(cfg, rng);
    // queries and a tight history cluster near the origin, one far outlier row
    const Mat coords = testutil::random_mat(4, 3, rng, 0.5);
    const FeatureMatrix tokens = testutil::random_mat(4, 6, rng);
    Mat hc = testutil::random_mat(8, 3, rng, 0.5);
    hc.row(7) << 100.0, 100.0, 100.0;
    FeatureMatrix hf = testutil::random_mat(8, 6, rng);

    const FeatureMatrix before = propagate(coords, tokens, hc, hf, cfg, w).feats;
    hf.row(7).array() += 5.0;  // feature change only; selection cannot move
    const FeatureMatrix after = propagate(coords, tokens, hc, hf, cfg, w).feats;
    CHECK((before - after).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("propagate: scalar softmax mode") {
    Rng rng(407);
    Config cfg;
    cfg.num_tokens = 3;
    cfg.channels = 6;
    cfg.neighbors = 4;
    const MIPWeights w = random_mip(cfg, rng);
    const Mat coords = testutil::random_mat(3, 3, rng);
    const FeatureMatrix tokens = testutil::random_mat(3, 6, rng);
    const Mat hc = testutil::random_mat(9, 3, rng);
    const FeatureMatrix hf = testutil::random_mat(9, 6, rng);

    const PropagateResult chan = propagate(coords, tokens, hc, hf, cfg, w);
    Config scfg = cfg;
    scfg.scalar_softmax = true;
    const PropagateResult scal = propagate(coords, tokens, hc, hf, scfg, w);
    for (int q = 0; q < 3; ++q) {
        // one weight per neighbor, broadcast across channels
        for (int k = 0; k < 4; ++k) {
            const double first = scal.weights[q](k, 0);
            CHECK((scal.weights[q].row(k).array() - first).abs().maxCoeff() == 0.0);
        }
        const Vec colsum = scal.weights[q].colwise().sum().transpose();
        CHECK((colsum.array() - 1.0).abs().maxCoeff() < 1e-12);
    }
    CHECK((chan.feats - scal.feats).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("mip_forward: toggles are wired and shapes line up") {
    Config cfg;
    cfg.num_tokens = 8;
    cfg.channels = 16;
    cfg.neighbors = 4;
    cfg.capacity = 2;
    cfg.ssm_layers = 1;
    const PipelineWeights w = init_weights(cfg, 5);
    Rng rng(408);
    const Cloud cloud = testutil::random_cloud(64, rng, 2.0);
    std::vector<MemoryFrame> frames = {random_frame(8, 16, rng), random_frame(8, 16, rng)};
    const MemoryBank bank = bank_with_frames(frames, 2);

    const MIPForwardResult base = mip_forward(cloud, bank, cfg, w);
    CHECK(base.coords.rows() == 8);
    CHECK(base.feats.rows() == 8);
    CHECK(base.feats.cols() == 16);
    CHECK(base.tokens.rows() == 8);
    CHECK(base.feats.allFinite());

    Config no_gfem = cfg;
    no_gfem.use_gfem = false;
    CHECK((mip_forward(cloud, bank, no_gfem, w).feats - base.feats).cwiseAbs().maxCoeff() > 0.0);

    Config no_fuse = cfg;
    no_fuse.use_mask_fusion = false;
    CHECK((mip_forward(cloud, bank, no_fuse, w).feats - base.feats).cwiseAbs().maxCoeff() > 0.0);

    Config raw_hist = cfg;
    raw_hist.gfem_raw_history = true;
    CHECK((mip_forward(cloud, bank, raw_hist, w).feats - base.feats).cwiseAbs().maxCoeff() > 0.0);

    MemoryBank empty(2);
    CHECK_THROWS_AS((void)mip_forward(cloud, empty, cfg, w), Error);
}

TEST_CASE("mip_forward: repeated history frame is a no-op when k covers the bank") {
    // With k >= rho * N the padding rule replicates the lone frame's rows
    // round-robin, which is exactly the candidate multiset the repeated bank
    // produces; the softmax weights renormalize over the copies.
    Config cfg;
    cfg.num_tokens = 4;
    cfg.channels = 16;
    cfg.neighbors = 12;
    cfg.capacity = 3;
    cfg.ssm_layers = 1;
    const PipelineWeights w = init_weights(cfg, 6);
    Rng rng(409);
    const Cloud cloud = testutil::random_cloud(48, rng, 2.0);
    const MemoryFrame frame = random_frame(4, 16, rng);

    const MemoryBank single = bank_with_frames({frame}, 3);
    const MemoryBank triple = bank_with_frames({frame, frame, frame}, 3);

    const FeatureMatrix a = mip_forward(cloud, single, cfg, w).feats;
    const FeatureMatrix b = mip_forward(cloud, triple, cfg, w).feats;
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);

    // and the duplicated-input propagate stage agrees with the oracle
    const TokenizedFrame tok = tokenize(cloud, cfg, w.tokenizer);
    const BankView view = triple.concat();
    const PropagateResult res =
        propagate(tok.coords, tok.feats, view.coords, view.feats, cfg, w.mip);
    const FeatureMatrix want =
        oracle::propagate_oracle(tok.coords, tok.feats, view.coords, view.feats, cfg, w.mip);
    CHECK((res.feats - want).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("propagate: softmax renormalizes over duplicated candidates under scaled k") {
    // Tripling the history rows and tripling k leaves the propagated features
    // unchanged: each candidate's weight splits evenly across its copies.
    Rng rng(411);
    Config cfg2;
    cfg2.num_tokens = 8;
    cfg2.channels = 16;
    cfg2.neighbors = 2;
    Config cfg6 = cfg2;
    cfg6.neighbors = 6;
    Rng wrng(412);
    const MIPWeights w = random_mip(cfg2, wrng);
    const Mat coords = testutil::random_mat(8, 3, rng, 2.0);
    const FeatureMatrix tokens = testutil::random_mat(8, 16, rng);
    const Mat hc = testutil::random_mat(8, 3, rng, 2.0);
    const FeatureMatrix hf = testutil::random_mat(8, 16, rng);
    Mat hc3(24, 3);
    FeatureMatrix hf3(24, 16);
    for (int r = 0; r < 3; ++r) {
        hc3.middleRows(8 * r, 8) = hc;
        hf3.middleRows(8 * r, 8) = hf;
    }
    const FeatureMatrix a = propagate(coords, tokens, hc, hf, cfg2, w).feats;
    const FeatureMatrix b = propagate(coords, tokens, hc3, hf3, cfg6, w).feats;
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("flops_mip: positive, monotone, near-linear") {
    Config cfg;
    const std::uint64_t base = flops_mip(cfg, cfg.num_tokens);
    CHECK(base > 0);
    std::uint64_t prev = base;
    for (std::uint64_t n : {256ULL, 512ULL, 1024ULL, 2048ULL, 4096ULL, 8192ULL}) {
        const std::uint64_t cur = flops_mip(cfg, n);
        CHECK(cur >= prev);
        prev = cur;
    }
    for (std::uint64_t n : {512ULL, 1024ULL, 2048ULL, 4096ULL}) {
        const double ratio =
            static_cast<double>(flops_mip(cfg, 2 * n)) / static_cast<double>(flops_mip(cfg, n));
        CHECK(ratio <= 2.3);
    }
}

TEST_CASE("flops_mip matches an instrumented forward pass within 5%") {
    Config cfg;
    cfg.num_tokens = 32;
    cfg.channels = 32;
    cfg.neighbors = 4;
    cfg.capacity = 3;
    cfg.ssm_layers = 2;
    const PipelineWeights w = init_weights(cfg, 7);
    Rng rng(410);
    const Cloud cloud = testutil::random_cloud(1024, rng, 3.0);
    std::vector<MemoryFrame> frames;
    for (int i = 0; i < 3; ++i) frames.push_back(random_frame(32, 32, rng));
    const MemoryBank bank = bank_with_frames(frames, 3);

    MacCounter macs;
    (void)mip_forward(cloud, bank, cfg, w, &macs);
    const double analytic = static_cast<double>(flops_mip(cfg, 1024));
    const double measured = static_cast<double>(macs.macs);
    CHECK(std::abs(analytic - measured) / measured < 0.05);
}

}  // TEST_SUITE
