#include "mt3d/localize.hpp"

#include <cmath>

namespace mt3d {

void HeadWeights::validate(int channels) const {
    if (mask_w.size() != channels || vq_w.size() != channels || bq_w.size() != channels)
        throw Error(ErrorKind::ShapeMismatch, "head vectors must have C entries");
    if (vote_w.rows() != 3 || vote_w.cols() != channels || vote_b.size() != 3)
        throw Error(ErrorKind::ShapeMismatch, "vote head must be 3 x C");
    if (box_w.rows() != 4 || box_w.cols() != channels || box_b.size() != 4)
        throw Error(ErrorKind::ShapeMismatch, "box head must be 4 x C");
}

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double smooth_l1(double x) {
    const double a = std::abs(x);
    return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double smooth_l1_grad(double x) {
    if (x > 1.0) return 1.0;
    if (x < -1.0) return -1.0;
    return x;
}

// Stable -log p for a logit/target pair: max(x,0) - x*y + log1p(exp(-|x|)).
static double bce_with_logit(double x, double y) {
    return std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
}

std::pair<LocalizeOutput, Box7> localize(const Mat& coords, const FeatureMatrix& feats,
                                         const HeadWeights& w, const Box7& prior) {
    const int n = static_cast<int>(feats.rows());
    const int c = static_cast<int>(feats.cols());
    if (coords.rows() != n || coords.cols() != 3)
        throw Error(ErrorKind::ShapeMismatch, "token coords must be N x 3");
    if (n < 1) throw Error(ErrorKind::EmptyInput, "no tokens to localize");
    w.validate(c);

    LocalizeOutput out;
    out.mask_logits = (feats * w.mask_w).array() + w.mask_b;
    out.votes = (feats * w.vote_w.transpose()).rowwise() + w.vote_b.transpose();
    out.vote_quality = (feats * w.vq_w).array() + w.vq_b;
    out.box_params = (feats * w.box_w.transpose()).rowwise() + w.box_b.transpose();
    out.box_quality = (feats * w.bq_w).array() + w.bq_b;

    int best = 0;
    for (int j = 1; j < n; ++j)
        if (out.box_quality(j) > out.box_quality(best)) best = j;

    Box7 box = prior;
    box.cx = coords(best, 0) + out.votes(best, 0) + out.box_params(best, 0);
    box.cy = coords(best, 1) + out.votes(best, 1) + out.box_params(best, 1);
    box.cz = coords(best, 2) + out.votes(best, 2) + out.box_params(best, 2);
    box.theta = normalize_angle(prior.theta + out.box_params(best, 3));
    return {out, box};
}

LossBreakdown losses(const LocalizeOutput& out, const Mat& coords, const LocalizeTargets& gt,
                     const Config& cfg) {
    const int n = static_cast<int>(out.mask_logits.size());
    if (static_cast<int>(gt.fg_mask.size()) != n || coords.rows() != n)
        throw Error(ErrorKind::ShapeMismatch, "target size mismatch");
    const double r = cfg.quality_radius;
    const Eigen::Vector3d g(gt.center.x, gt.center.y, gt.center.z);

    LossBreakdown lb;
    int fg = 0;
    for (int j = 0; j < n; ++j) fg += gt.fg_mask[j] ? 1 : 0;

    for (int j = 0; j < n; ++j) {
        const double y = gt.fg_mask[j] ? 1.0 : 0.0;
        lb.mask += bce_with_logit(out.mask_logits(j), y);

        const Eigen::Vector3d voted =
            coords.row(j).transpose() + out.votes.row(j).transpose();
        const Eigen::Vector3d refined =
            voted + out.box_params.row(j).head<3>().transpose();
        const double qv = (voted - g).norm() <= r ? 1.0 : 0.0;
        const double qs = (refined - g).norm() <= r ? 1.0 : 0.0;
        lb.vote_quality += bce_with_logit(out.vote_quality(j), qv);
        lb.box_quality += bce_with_logit(out.box_quality(j), qs);

        if (gt.fg_mask[j]) {
            lb.center += (voted - g).squaredNorm() / (3.0 * fg);
            const Eigen::Vector3d target_off = g - voted;
            for (int p = 0; p < 3; ++p)
                lb.box += smooth_l1(out.box_params(j, p) - target_off(p)) / (4.0 * fg);
            lb.box += smooth_l1(out.box_params(j, 3) - gt.theta_offset) / (4.0 * fg);
        }
    }
    lb.mask /= n;
    lb.vote_quality /= n;
    lb.box_quality /= n;
    lb.total = lb.mask + lb.center + lb.vote_quality + lb.box_quality + lb.box;
    return lb;
}

LocalizeOutputGrads losses_backward(const LocalizeOutput& out, const Mat& coords,
                                    const LocalizeTargets& gt, const Config& cfg) {
    const int n = static_cast<int>(out.mask_logits.size());
    if (static_cast<int>(gt.fg_mask.size()) != n || coords.rows() != n)
        throw Error(ErrorKind::ShapeMismatch, "target size mismatch");
    const double r = cfg.quality_radius;
    const Eigen::Vector3d g(gt.center.x, gt.center.y, gt.center.z);

    int fg = 0;
    for (int j = 0; j < n; ++j) fg += gt.fg_mask[j] ? 1 : 0;

    LocalizeOutputGrads gr;
    gr.mask_logits = Vec::Zero(n);
    gr.votes = Mat::Zero(n, 3);
    gr.vote_quality = Vec::Zero(n);
    gr.box_params = Mat::Zero(n, 4);
    gr.box_quality = Vec::Zero(n);

    for (int j = 0; j < n; ++j) {
        const double y = gt.fg_mask[j] ? 1.0 : 0.0;
        gr.mask_logits(j) = (logistic(out.mask_logits(j)) - y) / n;

        const Eigen::Vector3d voted =
            coords.row(j).transpose() + out.votes.row(j).transpose();
        const Eigen::Vector3d refined =
            voted + out.box_params.row(j).head<3>().transpose();
        // Quality targets are treated as constants: their indicator has zero
        // gradient almost everywhere.
        const double qv = (voted - g).norm() <= r ? 1.0 : 0.0;
        const double qs = (refined - g).norm() <= r ? 1.0 : 0.0;
        gr.vote_quality(j) = (logistic(out.vote_quality(j)) - qv) / n;
        gr.box_quality(j) = (logistic(out.box_quality(j)) - qs) / n;

        if (gt.fg_mask[j]) {
            gr.votes.row(j) += (2.0 / (3.0 * fg)) * (voted - g).transpose();
            const Eigen::Vector3d target_off = g - voted;
            for (int p = 0; p < 3; ++p) {
                const double gl =
                    smooth_l1_grad(out.box_params(j, p) - target_off(p)) / (4.0 * fg);
                gr.box_params(j, p) += gl;
                // the residual also moves with the vote (target_off = g - voted)
                gr.votes(j, p) += gl;
            }
            gr.box_params(j, 3) +=
                smooth_l1_grad(out.box_params(j, 3) - gt.theta_offset) / (4.0 * fg);
        }
    }
    return gr;
}

GradCheckReport losses_grad_check(const LocalizeOutput& out, const Mat& coords,
                                  const LocalizeTargets& gt, const Config& cfg, double tol) {
    const double h = 1e-4;
    LocalizeOutput probe = out;
    const LocalizeOutputGrads an = losses_backward(out, coords, gt, cfg);

    GradCheckReport rep;
    auto compare = [&](double analytic, double* slot) {
        const double keep = *slot;
        *slot = keep + h;
        const double up = losses(probe, coords, gt, cfg).total;
        *slot = keep - h;
        const double dn = losses(probe, coords, gt, cfg).total;
        *slot = keep;
        const double fd = (up - dn) / (2.0 * h);
        const double scale = std::max({1e-6, std::abs(analytic), std::abs(fd)});
        rep.max_rel = std::max(rep.max_rel, std::abs(analytic - fd) / scale);
    };

    const int n = static_cast<int>(out.mask_logits.size());
    for (int j = 0; j < n; ++j) {
        compare(an.mask_logits(j), &probe.mask_logits(j));
        compare(an.vote_quality(j), &probe.vote_quality(j));
        compare(an.box_quality(j), &probe.box_quality(j));
        for (int a = 0; a < 3; ++a) compare(an.votes(j, a), &probe.votes(j, a));
        for (int a = 0; a < 4; ++a) compare(an.box_params(j, a), &probe.box_params(j, a));
    }
    rep.pass = rep.max_rel <= tol;
    return rep;
}

}  // namespace mt3d
