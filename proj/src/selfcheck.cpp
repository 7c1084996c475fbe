#include "mt3d/selfcheck.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "mt3d/evalbench.hpp"
#include "mt3d/geometry.hpp"
#include "mt3d/localize.hpp"
#include "mt3d/oracles.hpp"
#include "mt3d/rng.hpp"
#include "mt3d/synthgen.hpp"
#include "mt3d/tracker.hpp"

namespace mt3d {

namespace {

SelectiveParams random_selective(int c, int d, Rng& rng) {
    SelectiveParams p;
    p.a = Mat(c, d);
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < d; ++j) p.a(i, j) = -rng.uniform(0.1, 2.0);
    auto fill = [&](Mat& m, int rows, int cols, double s) {
        m.resize(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) m(i, j) = rng.normal(0.0, s);
    };
    fill(p.wb, d, c, 0.3);
    fill(p.wc, d, c, 0.3);
    fill(p.wdelta, c, c, 0.2);
    fill(p.wgate, c, c, 0.2);
    p.bdelta = Vec(c);
    p.bgate = Vec::Zero(c);
    for (int i = 0; i < c; ++i) p.bdelta(i) = rng.uniform(-2.0, -0.5);
    return p;
}

MIPWeights random_mip(int c, Rng& rng) {
    MIPWeights w;
    w.proj_w = Mat(c, 2 * c);
    w.proj_b = Vec(c);
    w.alpha = Vec(c);
    w.beta = Vec(c);
    const double s = 1.0 / std::sqrt(2.0 * c);
    for (int i = 0; i < c; ++i) {
        for (int j = 0; j < 2 * c; ++j) w.proj_w(i, j) = rng.uniform(-s, s);
        w.proj_b(i) = rng.uniform(-0.1, 0.1);
        w.alpha(i) = rng.uniform(0.5, 1.5);
        w.beta(i) = rng.uniform(-0.2, 0.2);
    }
    return w;
}

GFEMWeights random_gfem(int c, Rng& rng) {
    const int c2 = c / 2;
    GFEMWeights w;
    auto fill_group = [&](GFEMGroup& g) {
        g.wq = Mat(c2, c2);
        g.wk = Mat(c2, c2);
        g.wv = Mat(c2, c2);
        g.bq = Vec(c2);
        g.bk = Vec(c2);
        g.bv = Vec(c2);
        const double s = 1.0 / std::sqrt(static_cast<double>(c2));
        for (int i = 0; i < c2; ++i) {
            for (int j = 0; j < c2; ++j) {
                g.wq(i, j) = rng.uniform(-s, s);
                g.wk(i, j) = rng.uniform(-s, s);
                g.wv(i, j) = rng.uniform(-s, s);
            }
            g.bq(i) = rng.uniform(-0.1, 0.1);
            g.bk(i) = rng.uniform(-0.1, 0.1);
            g.bv(i) = rng.uniform(-0.1, 0.1);
        }
    };
    fill_group(w.g1);
    fill_group(w.g2);
    return w;
}

FeatureMatrix random_feats(int rows, int cols, Rng& rng, double sigma = 1.0) {
    FeatureMatrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = rng.normal(0.0, sigma);
    return m;
}

Mat random_coords(int rows, Rng& rng, double half = 3.0) {
    Mat m(rows, 3);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < 3; ++j) m(i, j) = rng.uniform(-half, half);
    return m;
}

struct Runner {
    std::vector<CheckResult>& out;
    bool fault = false;

    template <typename F>
    void run(const std::string& name, F&& body) {
        CheckResult r;
        r.name = name;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            std::ostringstream detail;
            r.pass = body(detail);
            r.detail = detail.str();
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail = std::string("exception: ") + e.what();
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.push_back(std::move(r));
    }
};

double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(1e-12, std::abs(want));
}

}  // namespace

std::vector<CheckResult> run_selfcheck(bool inject_fault) {
    std::vector<CheckResult> results;
    Runner runner{results, inject_fault};

    runner.run("zoh-vs-expm", [&](std::ostringstream& detail) {
        Rng rng(101);
        double worst = 0.0;
        for (int trial = 0; trial < 200; ++trial) {
            const int d = 1 + static_cast<int>(rng.uniform_index(8));
            LTISystem sys;
            sys.a = Vec(d);
            sys.b = Vec(d);
            sys.c = RowVec(d);
            for (int i = 0; i < d; ++i) {
                if (trial < 20) {
                    // exercise the series branch with near-zero poles
                    const double mag = rng.uniform(1e-9, 5e-5);
                    sys.a(i) = rng.uniform() < 0.5 ? mag : -mag;
                } else {
                    sys.a(i) = rng.uniform(-5.0, 5.0);
                }
                sys.b(i) = rng.uniform(-2.0, 2.0);
                sys.c(i) = rng.uniform(-1.0, 1.0);
            }
            sys.delta = 1.0 - rng.uniform();  // (0, 1]
            DiscreteLTI got = zoh_discretize(sys);
            const DiscreteLTI want = oracle::zoh_van_loan(sys);
            if (inject_fault && trial == 0) got.abar(0) += 1e-3;
            for (int i = 0; i < d; ++i) {
                worst = std::max(worst, rel_err(got.abar(i), want.abar(i)));
                worst = std::max(worst, rel_err(got.bbar(i), want.bbar(i)));
            }
        }
        detail << "max rel err " << worst;
        return worst < 1e-6;
    });

    runner.run("lti-dual-path", [&](std::ostringstream& detail) {
        Rng rng(202);
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const int d = 1 + static_cast<int>(rng.uniform_index(8));
            LTISystem sys;
            sys.a = Vec(d);
            sys.b = Vec(d);
            sys.c = RowVec(d);
            for (int i = 0; i < d; ++i) {
                sys.a(i) = -rng.uniform(0.05, 5.0);
                sys.b(i) = rng.uniform(-1.0, 1.0);
                sys.c(i) = rng.uniform(-1.0, 1.0);
            }
            sys.delta = rng.uniform(0.01, 1.0);
            const DiscreteLTI disc = zoh_discretize(sys);

            const int len = 256;
            std::vector<double> x(len);
            for (double& v : x) v = rng.uniform(-1.0, 1.0);

            const std::vector<double> ys = lti_scan(disc, sys.c, x);
            const std::vector<double> kernel = lti_kernel(disc, sys.c, len);
            double scale = 1.0;
            for (double v : ys) scale = std::max(scale, std::abs(v));
            for (int k = 0; k < len; ++k) {
                double conv = 0.0;
                for (int i = 0; i <= k; ++i) conv += kernel[i] * x[k - i];
                worst = std::max(worst, std::abs(ys[k] - conv) / scale);
            }
        }
        detail << "max rel err " << worst;
        return worst < 1e-5;
    });

    runner.run("selective-scan", [&](std::ostringstream& detail) {
        Rng rng(303);
        double worst_eq = 0.0;
        for (int trial = 0; trial < 50; ++trial) {
            const SelectiveParams p = random_selective(32, 16, rng);
            const FeatureMatrix x = random_feats(128, 32, rng);
            const FeatureMatrix a = selective_scan(p, x);
            const FeatureMatrix b = selective_scan_chunked(p, x, 16);
            const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
            worst_eq = std::max(worst_eq, (a - b).cwiseAbs().maxCoeff() / scale);
        }

        double worst_fd = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            SelectiveParams p = random_selective(4, 3, rng);
            const FeatureMatrix x = random_feats(6, 4, rng);
            const FeatureMatrix g = random_feats(6, 4, rng);
            const SelectiveGrads an = selective_scan_backward(p, x, g);

            const double h = 1e-4;
            auto loss_at = [&](const SelectiveParams& q, const FeatureMatrix& xx) {
                return (selective_scan(q, xx).array() * g.array()).sum();
            };
            auto fd_check = [&](double analytic, double* slot) {
                const double keep = *slot;
                *slot = keep + h;
                const double up = loss_at(p, x);
                *slot = keep - h;
                const double dn = loss_at(p, x);
                *slot = keep;
                const double fd = (up - dn) / (2.0 * h);
                const double scale = std::max({1e-5, std::abs(analytic), std::abs(fd)});
                worst_fd = std::max(worst_fd, std::abs(analytic - fd) / scale);
            };
            for (int i = 0; i < p.a.rows(); ++i)
                for (int j = 0; j < p.a.cols(); ++j) fd_check(an.a(i, j), &p.a(i, j));
            for (int i = 0; i < p.wb.rows(); ++i)
                for (int j = 0; j < p.wb.cols(); ++j) fd_check(an.wb(i, j), &p.wb(i, j));
            for (int i = 0; i < p.wc.rows(); ++i)
                for (int j = 0; j < p.wc.cols(); ++j) fd_check(an.wc(i, j), &p.wc(i, j));
            for (int i = 0; i < p.wdelta.rows(); ++i)
                for (int j = 0; j < p.wdelta.cols(); ++j)
                    fd_check(an.wdelta(i, j), &p.wdelta(i, j));
            for (int i = 0; i < p.bdelta.size(); ++i) fd_check(an.bdelta(i), &p.bdelta(i));
            FeatureMatrix xm = x;
            for (int i = 0; i < xm.rows(); ++i)
                for (int j = 0; j < xm.cols(); ++j) {
                    const double keep = xm(i, j);
                    xm(i, j) = keep + h;
                    const double up = (selective_scan(p, xm).array() * g.array()).sum();
                    xm(i, j) = keep - h;
                    const double dn = (selective_scan(p, xm).array() * g.array()).sum();
                    xm(i, j) = keep;
                    const double fd = (up - dn) / (2.0 * h);
                    const double scale = std::max({1e-5, std::abs(an.x(i, j)), std::abs(fd)});
                    worst_fd = std::max(worst_fd, std::abs(an.x(i, j) - fd) / scale);
                }
        }
        detail << "chunk eq " << worst_eq << ", fd rel " << worst_fd;
        return worst_eq < 1e-6 && worst_fd < 1e-3;
    });

    runner.run("propagation-oracle", [&](std::ostringstream& detail) {
        Config cfg;
        cfg.num_tokens = 8;
        cfg.channels = 8;
        cfg.neighbors = 4;
        Rng rng(404);
        double worst = 0.0, worst_sum = 0.0;
        for (int trial = 0; trial < 50; ++trial) {
            const int m = cfg.capacity * cfg.num_tokens;
            const Mat coords = random_coords(cfg.num_tokens, rng);
            const Mat hist_coords = random_coords(m, rng);
            const FeatureMatrix tokens = random_feats(cfg.num_tokens, cfg.channels, rng);
            const FeatureMatrix hist = random_feats(m, cfg.channels, rng);
            const MIPWeights w = random_mip(cfg.channels, rng);

            const PropagateResult got = propagate(coords, tokens, hist_coords, hist, cfg, w);
            const FeatureMatrix want =
                oracle::propagate_oracle(coords, tokens, hist_coords, hist, cfg, w);
            worst = std::max(worst, (got.feats - want).cwiseAbs().maxCoeff());
            for (const Mat& wt : got.weights) {
                const Vec sums = wt.colwise().sum();
                worst_sum = std::max(worst_sum, (sums.array() - 1.0).abs().maxCoeff());
            }
        }
        detail << "max abs err " << worst << ", weight sum dev " << worst_sum;
        return worst < 1e-6 && worst_sum < 1e-6;
    });

    runner.run("gfem-oracle", [&](std::ostringstream& detail) {
        Config cfg;
        cfg.channels = 8;
        Rng rng(505);
        double worst = 0.0, cross = 0.0;
        for (int trial = 0; trial < 50; ++trial) {
            const int n = 6, m = 9;
            const FeatureMatrix tokens = random_feats(n, cfg.channels, rng);
            const FeatureMatrix hist = random_feats(m, cfg.channels, rng);
            GFEMWeights w = random_gfem(cfg.channels, rng);

            const FeatureMatrix got = grouped_cross_attention(tokens, hist, w, cfg);
            const FeatureMatrix want = oracle::gfem_oracle(tokens, hist, w, cfg);
            worst = std::max(worst, (got - want).cwiseAbs().maxCoeff());

            // perturb everything group 2 touches; group 1 must not move
            const int c2 = cfg.channels / 2;
            FeatureMatrix tokens2 = tokens, hist2 = hist;
            for (int i = 0; i < n; ++i)
                for (int j = c2; j < cfg.channels; ++j) tokens2(i, j) += rng.normal(0.0, 1.0);
            for (int i = 0; i < m; ++i)
                for (int j = c2; j < cfg.channels; ++j) hist2(i, j) += rng.normal(0.0, 1.0);
            GFEMWeights w2 = w;
            w2.g2 = random_gfem(cfg.channels, rng).g2;
            const FeatureMatrix moved = grouped_cross_attention(tokens2, hist2, w2, cfg);
            cross = std::max(
                cross, (moved.leftCols(c2) - got.leftCols(c2)).cwiseAbs().maxCoeff());
        }
        detail << "max abs err " << worst << ", cross-group leak " << cross;
        return worst < 1e-6 && cross <= 1e-7;
    });

    runner.run("iou3d", [&](std::ostringstream& detail) {
        const Box7 unit(0, 0, 0, 1, 1, 1, 0);
        const Box7 shifted(0.5, 0, 0, 1, 1, 1, 0);
        const double closed = iou3d(unit, shifted);
        if (std::abs(closed - 1.0 / 3.0) > 1e-9) {
            detail << "offset-cube " << closed;
            return false;
        }
        Rng rng(606);
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            auto rand_box = [&]() {
                return Box7(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                            rng.uniform(-1.0, 1.0), rng.uniform(0.5, 2.0),
                            rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0),
                            rng.uniform(-3.14, 3.14));
            };
            const Box7 a = rand_box(), b = rand_box();
            const double exact = iou3d(a, b);
            const double mc = oracle::iou3d_mc(a, b, 100000, 1000 + trial);
            worst = std::max(worst, std::abs(exact - mc));
        }
        detail << "offset-cube exact, MC max dev " << worst;
        return worst < 0.01;
    });

    runner.run("metrics", [&](std::ostringstream& detail) {
        Rng rng(707);
        for (int trial = 0; trial < 1000; ++trial) {
            const int n = 5 + static_cast<int>(rng.uniform_index(46));
            std::vector<double> ious(n), errs(n);
            for (int i = 0; i < n; ++i) {
                ious[i] = rng.uniform();
                errs[i] = rng.uniform(0.0, 3.0);
            }
            if (success_auc(ious) != oracle::success_auc_brute(ious)) {
                detail << "success mismatch at trial " << trial;
                return false;
            }
            if (precision_auc(errs, 2.0) != oracle::precision_auc_brute(errs, 2.0)) {
                detail << "precision mismatch at trial " << trial;
                return false;
            }
        }
        const std::vector<ClassScore> table = {{"Car", 70.0, 80.0, 6424},
                                               {"Pedestrian", 64.3, 70.0, 6088},
                                               {"Van", 50.0, 60.0, 1248},
                                               {"Cyclist", 60.0, 65.0, 308}};
        const AggregateResult agg = aggregate(table);
        double num = 0.0, den = 0.0;
        for (const auto& s : table) {
            num += s.success * static_cast<double>(s.frame_count);
            den += static_cast<double>(s.frame_count);
        }
        if (std::abs(agg.mean_success - num / den) > 1e-12) {
            detail << "aggregate arithmetic off";
            return false;
        }
        detail << "1000 sweeps exact, aggregate exact";
        return true;
    });

    runner.run("losses", [&](std::ostringstream& detail) {
        Config cfg;
        // closed-form spot values
        if (std::abs(smooth_l1(0.5) - 0.125) > 1e-9) {
            detail << "smooth-l1 spot value off";
            return false;
        }
        {
            const int n = 4;
            LocalizeOutput out;
            out.mask_logits = Vec::Zero(n);
            out.votes = Mat::Zero(n, 3);
            out.vote_quality = Vec::Zero(n);
            out.box_params = Mat::Zero(n, 4);
            out.box_quality = Vec::Zero(n);
            LocalizeTargets tgt;
            tgt.fg_mask = {true, true, false, false};
            tgt.center = {10.0, 10.0, 10.0};  // far: keeps quality targets all-negative
            const Mat coords = Mat::Zero(n, 3);
            const LossBreakdown lb = losses(out, coords, tgt, cfg);
            if (std::abs(lb.mask - std::log(2.0)) > 1e-9) {
                detail << "uniform mask loss " << lb.mask;
                return false;
            }
        }

        // FD checks away from the quality boundary and the huber kink
        Rng rng(808);
        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            const int n = 6;
            const Mat coords = random_coords(n, rng, 1.5);
            LocalizeOutput out;
            out.mask_logits = random_feats(n, 1, rng).col(0);
            out.votes = random_feats(n, 3, rng, 0.4);
            out.vote_quality = random_feats(n, 1, rng).col(0);
            out.box_params = random_feats(n, 4, rng, 0.4);
            out.box_quality = random_feats(n, 1, rng).col(0);
            LocalizeTargets tgt;
            tgt.fg_mask.assign(n, false);
            for (int j = 0; j < n; ++j) tgt.fg_mask[j] = rng.uniform() < 0.5;
            tgt.fg_mask[0] = true;  // keep the foreground terms active
            tgt.center = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                          rng.uniform(-1.0, 1.0)};
            tgt.theta_offset = rng.uniform(-0.3, 0.3);

            // nudge anything sitting near a non-smooth point
            const Eigen::Vector3d g(tgt.center.x, tgt.center.y, tgt.center.z);
            for (int j = 0; j < n; ++j) {
                const Eigen::Vector3d voted =
                    coords.row(j).transpose() + out.votes.row(j).transpose();
                const Eigen::Vector3d refined =
                    voted + out.box_params.row(j).head<3>().transpose();
                if (std::abs((voted - g).norm() - cfg.quality_radius) < 0.05)
                    out.votes(j, 0) += 0.2;
                if (std::abs((refined - g).norm() - cfg.quality_radius) < 0.05)
                    out.box_params(j, 0) += 0.2;
                const Eigen::Vector3d target_off = g - voted;
                for (int p = 0; p < 3; ++p)
                    if (std::abs(std::abs(out.box_params(j, p) - target_off(p)) - 1.0) < 0.02)
                        out.box_params(j, p) += 0.1;
                if (std::abs(std::abs(out.box_params(j, 3) - tgt.theta_offset) - 1.0) < 0.02)
                    out.box_params(j, 3) += 0.1;
            }
            const GradCheckReport rep = losses_grad_check(out, coords, tgt, cfg, 1e-4);
            worst = std::max(worst, rep.max_rel);
        }
        if (worst > 1e-4) {
            detail << "fd rel " << worst;
            return false;
        }

        // smoke-level learnability on one synthetic 8-frame segment
        ScenarioSpec seg;
        seg.name = "fit-seg";
        seg.start = Box7(9.0, 1.0, 0.8, 1.8, 4.2, 1.6, 0.2);
        seg.motion = {{8, 0.2, 0.0}};
        seg.frame_count = 8;
        seg.points_per_frame = 512;
        seg.clutter_density = 0.02;
        seg.noise_sigma = 0.01;
        seg.seed = 4242;
        const Tracklet t = generate(seg);
        PipelineWeights w = init_weights(cfg, 5);
        const TrainReport rep = train_heads(w, t, cfg, 200, 0.01);
        detail << "fd rel " << worst << "; fit " << rep.initial << " -> " << rep.final_loss;
        return rep.final_loss <= 0.5 * rep.initial;
    });

    return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
    for (const CheckResult& r : results)
        if (!r.pass) return false;
    return true;
}

}  // namespace mt3d
