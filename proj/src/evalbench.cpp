#include "mt3d/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "mt3d/memory.hpp"
#include "mt3d/mip.hpp"
#include "mt3d/rng.hpp"
#include "mt3d/weights.hpp"

namespace mt3d {

static constexpr int kGridPoints = 101;

MetricCurve success_curve(const std::vector<double>& ious) {
    if (ious.empty()) throw Error(ErrorKind::EmptyInput, "no IoU values");
    MetricCurve c;
    c.thresholds.resize(kGridPoints);
    c.fractions.resize(kGridPoints);
    const double n = static_cast<double>(ious.size());
    double sum = 0.0;
    for (int i = 0; i < kGridPoints; ++i) {
        const double tau = static_cast<double>(i) / (kGridPoints - 1);
        int hits = 0;
        for (double v : ious) hits += v > tau ? 1 : 0;
        c.thresholds[i] = tau;
        c.fractions[i] = hits / n;
        sum += c.fractions[i];
    }
    c.auc = sum / kGridPoints;
    return c;
}

double success_auc(const std::vector<double>& ious) { return success_curve(ious).auc; }

MetricCurve precision_curve(const std::vector<double>& errors, double cap) {
    if (errors.empty()) throw Error(ErrorKind::EmptyInput, "no error values");
    if (cap <= 0.0) throw Error(ErrorKind::InvalidArgument, "precision cap must be > 0");
    MetricCurve c;
    c.thresholds.resize(kGridPoints);
    c.fractions.resize(kGridPoints);
    const double n = static_cast<double>(errors.size());
    double sum = 0.0;
    for (int i = 0; i < kGridPoints; ++i) {
        const double tau = cap * static_cast<double>(i) / (kGridPoints - 1);
        int hits = 0;
        for (double v : errors) hits += v < tau ? 1 : 0;
        c.thresholds[i] = tau;
        c.fractions[i] = hits / n;
        sum += c.fractions[i];
    }
    c.auc = sum / kGridPoints;
    return c;
}

double precision_auc(const std::vector<double>& errors, double cap) {
    return precision_curve(errors, cap).auc;
}

AggregateResult aggregate(const std::vector<ClassScore>& scores) {
    if (scores.empty()) throw Error(ErrorKind::EmptyInput, "nothing to aggregate");
    AggregateResult r;
    r.per_class = scores;
    double ws = 0.0, wp = 0.0, n = 0.0;
    for (const ClassScore& s : scores) {
        const double c = static_cast<double>(s.frame_count);
        ws += s.success * c;
        wp += s.precision * c;
        n += c;
    }
    if (n <= 0.0) throw Error(ErrorKind::InvalidArgument, "zero total frame count");
    r.mean_success = ws / n;
    r.mean_precision = wp / n;
    return r;
}

std::uint64_t flops_attention_baseline(const Config& cfg, std::uint64_t n) {
    if (n < 1) throw Error(ErrorKind::InvalidArgument, "n must be >= 1");
    const std::uint64_t c = static_cast<std::uint64_t>(cfg.channels);
    return 4 * n * c * c + 2 * n * n * c;
}

double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw Error(ErrorKind::InvalidArgument, "need >= 2 aligned samples for a slope");
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double lx = std::log(xs[i]);
        const double ly = std::log(ys[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

BenchReport run_bench(const Config& cfg, const std::vector<int>& sizes, int reps,
                      std::uint64_t seed) {
    if (sizes.empty()) throw Error(ErrorKind::EmptyInput, "no sizes");
    for (std::size_t i = 1; i < sizes.size(); ++i)
        if (sizes[i] <= sizes[i - 1])
            throw Error(ErrorKind::InvalidArgument, "sizes must be ascending");
    if (reps < 3) throw Error(ErrorKind::InvalidArgument, "need at least 3 repetitions");

    const PipelineWeights w = init_weights(cfg, seed);

    // Full bank of plausible token history.
    Rng rng(derive_seed(seed, 0xb6e9c));
    MemoryBank bank(cfg.capacity);
    for (int f = 0; f < cfg.capacity; ++f) {
        MemoryFrame mf;
        mf.coords = Mat(cfg.num_tokens, 3);
        mf.feats = FeatureMatrix(cfg.num_tokens, cfg.channels);
        mf.mask = Vec(cfg.num_tokens);
        for (int j = 0; j < cfg.num_tokens; ++j) {
            for (int a = 0; a < 3; ++a) mf.coords(j, a) = rng.uniform(-3.0, 3.0);
            for (int a = 0; a < cfg.channels; ++a) mf.feats(j, a) = rng.normal(0.0, 0.5);
            mf.mask(j) = rng.uniform();
        }
        bank.push(std::move(mf), f);
    }

    BenchReport rep;
    std::vector<double> ns, ours, attn;
    for (int n : sizes) {
        Cloud cloud;
        cloud.points.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            cloud.points.push_back(
                {rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(-1.0, 1.0)});

        std::vector<double> secs;
        for (int r = 0; r < reps; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            MIPForwardResult out = mip_forward(cloud, bank, cfg, w);
            const auto t1 = std::chrono::steady_clock::now();
            // fold the result into a sink so the call cannot be elided
            volatile double sink = out.feats.sum();
            (void)sink;
            secs.push_back(std::chrono::duration<double>(t1 - t0).count());
        }
        std::sort(secs.begin(), secs.end());
        const double median = secs[secs.size() / 2];

        BenchRow row;
        row.n = n;
        row.flops_ours = flops_mip(cfg, static_cast<std::uint64_t>(n));
        row.flops_attn = flops_attention_baseline(cfg, static_cast<std::uint64_t>(n));
        row.steps_per_sec = median > 0.0 ? 1.0 / median : 0.0;
        rep.rows.push_back(row);

        ns.push_back(static_cast<double>(n));
        ours.push_back(static_cast<double>(row.flops_ours));
        attn.push_back(static_cast<double>(row.flops_attn));
    }
    if (sizes.size() >= 2) {
        rep.slope_ours = loglog_slope(ns, ours);
        rep.slope_attn = loglog_slope(ns, attn);
    }
    return rep;
}

}  // namespace mt3d
