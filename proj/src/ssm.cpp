#include "mt3d/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace mt3d {

namespace {

constexpr double kSeriesThreshold = 1e-4;  // |a*delta| below which the series branch runs
constexpr double kRmsEps = 1e-8;

double softplus(double s) { return s > 30.0 ? s : std::log1p(std::exp(s)); }

double sigmoid(double s) {
    if (s >= 0.0) {
        const double e = std::exp(-s);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(s);
    return e / (1.0 + e);
}

double silu(double s) { return s * sigmoid(s); }

void check_permutation(const std::vector<int>& order, Eigen::Index rows) {
    if (static_cast<Eigen::Index>(order.size()) != rows)
        throw Error(ErrorKind::InvalidArgument, "order length must equal row count");
    std::vector<bool> seen(order.size(), false);
    for (int v : order) {
        if (v < 0 || v >= static_cast<int>(order.size()) || seen[v])
            throw Error(ErrorKind::InvalidArgument, "order is not a permutation");
        seen[v] = true;
    }
}

// Per-step cache for the backward pass.
struct ScanTape {
    std::vector<Vec> bk, ck, s, dt;       // per step: d, d, C, C
    std::vector<Mat> abar, ebar, hpost;   // per step: C x d
};

FeatureMatrix scan_forward(const SelectiveParams& p, const FeatureMatrix& x, ScanTape* tape,
                           MacCounter* macs) {
    p.validate();
    const int rows = static_cast<int>(x.rows());
    const int C = p.channels();
    const int d = p.state_dim();
    if (rows < 1) throw Error(ErrorKind::EmptyInput, "scan input must have at least one row");
    if (x.cols() != C) throw Error(ErrorKind::ShapeMismatch, "scan input channel mismatch");

    FeatureMatrix y(rows, C);
    Mat h = Mat::Zero(C, d);
    Mat abar(C, d), ebar(C, d);

    for (int k = 0; k < rows; ++k) {
        const Vec xk = x.row(k).transpose();
        const Vec bk = p.wb * xk;
        const Vec ck = p.wc * xk;
        const Vec s = p.wdelta * xk + p.bdelta;
        Vec dt(C);
        for (int c = 0; c < C; ++c) dt(c) = softplus(s(c));

        for (int c = 0; c < C; ++c) {
            for (int j = 0; j < d; ++j) {
                const double z = p.a(c, j) * dt(c);
                const double ab = std::exp(z);
                const double eb = dt(c) * expm1_over_x(z);
                abar(c, j) = ab;
                ebar(c, j) = eb;
                h(c, j) = ab * h(c, j) + eb * bk(j) * xk(c);
            }
        }
        for (int c = 0; c < C; ++c) {
            const double yv = ck.dot(h.row(c).transpose());
            if (!std::isfinite(yv))
                throw Error(ErrorKind::NumericOverflow,
                            "numerical overflow in scan at token " + std::to_string(k));
            y(k, c) = yv;
        }
        if (macs)
            macs->add(static_cast<std::uint64_t>(C) * C + 2ULL * d * C + C +
                      static_cast<std::uint64_t>(C) * d * 6ULL);
        if (tape) {
            tape->bk.push_back(bk);
            tape->ck.push_back(ck);
            tape->s.push_back(s);
            tape->dt.push_back(dt);
            tape->abar.push_back(abar);
            tape->ebar.push_back(ebar);
            tape->hpost.push_back(h);
        }
    }
    return y;
}

}  // namespace

void LTISystem::validate() const {
    if (a.size() == 0 || a.size() != b.size() || a.size() != c.size())
        throw Error(ErrorKind::ShapeMismatch, "LTI system dimensions inconsistent");
    if (!(delta > 0.0)) throw Error(ErrorKind::InvalidArgument, "delta must be > 0");
    if (!a.allFinite()) throw Error(ErrorKind::InvalidArgument, "state matrix must be finite");
}

void SelectiveParams::validate() const {
    const int C = channels();
    const int d = state_dim();
    if (C < 1 || d < 1) throw Error(ErrorKind::ShapeMismatch, "empty selective parameters");
    if (wb.rows() != d || wb.cols() != C || wc.rows() != d || wc.cols() != C ||
        wdelta.rows() != C || wdelta.cols() != C || bdelta.size() != C || wgate.rows() != C ||
        wgate.cols() != C || bgate.size() != C)
        throw Error(ErrorKind::ShapeMismatch, "selective parameter shapes inconsistent");
}

double expm1_over_x(double x) {
    if (std::abs(x) < kSeriesThreshold)
        return 1.0 + x * (0.5 + x * (1.0 / 6.0 + x / 24.0));
    return std::expm1(x) / x;
}

double expm1_over_x_deriv(double x) {
    if (std::abs(x) < 1e-3)
        return 0.5 + x * (1.0 / 3.0 + x * (0.125 + x / 30.0));
    return (std::exp(x) * (x - 1.0) + 1.0) / (x * x);
}

DiscreteLTI zoh_discretize(const LTISystem& sys) {
    sys.validate();
    const Eigen::Index d = sys.a.size();
    DiscreteLTI out;
    out.abar.resize(d);
    out.bbar.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        const double z = sys.a(i) * sys.delta;
        out.abar(i) = std::exp(z);
        out.bbar(i) = sys.delta * expm1_over_x(z) * sys.b(i);
    }
    return out;
}

std::vector<double> lti_kernel(const DiscreteLTI& d, const RowVec& c, int len) {
    if (len < 1) throw Error(ErrorKind::InvalidArgument, "kernel length must be >= 1");
    std::vector<double> k(len);
    Vec p = d.bbar;
    for (int i = 0; i < len; ++i) {
        k[i] = c * p;
        p = d.abar.cwiseProduct(p);
    }
    return k;
}

std::vector<double> lti_scan(const DiscreteLTI& d, const RowVec& c, const std::vector<double>& x) {
    std::vector<double> y(x.size());
    Vec h = Vec::Zero(d.abar.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        h = d.abar.cwiseProduct(h) + d.bbar * x[k];
        y[k] = c * h;
    }
    return y;
}

FeatureMatrix selective_scan(const SelectiveParams& p, const FeatureMatrix& x, MacCounter* macs) {
    return scan_forward(p, x, nullptr, macs);
}

FeatureMatrix selective_scan_chunked(const SelectiveParams& p, const FeatureMatrix& x, int chunk) {
    p.validate();
    if (chunk < 1) throw Error(ErrorKind::InvalidArgument, "chunk must be >= 1");
    const int rows = static_cast<int>(x.rows());
    const int C = p.channels();
    const int d = p.state_dim();
    if (x.cols() != C) throw Error(ErrorKind::ShapeMismatch, "scan input channel mismatch");

    FeatureMatrix y(rows, C);
    Mat h = Mat::Zero(C, d);  // carried across blocks
    for (int base = 0; base < rows; base += chunk) {
        const int end = std::min(base + chunk, rows);
        for (int k = base; k < end; ++k) {
            const Vec xk = x.row(k).transpose();
            const Vec bk = p.wb * xk;
            const Vec ck = p.wc * xk;
            const Vec s = p.wdelta * xk + p.bdelta;
            for (int c = 0; c < C; ++c) {
                const double dt = softplus(s(c));
                for (int j = 0; j < d; ++j) {
                    const double z = p.a(c, j) * dt;
                    h(c, j) = std::exp(z) * h(c, j) + dt * expm1_over_x(z) * bk(j) * xk(c);
                }
                y(k, c) = ck.dot(h.row(c).transpose());
            }
        }
    }
    return y;
}

SelectiveGrads selective_scan_backward(const SelectiveParams& p, const FeatureMatrix& x,
                                       const FeatureMatrix& upstream) {
    p.validate();
    if (upstream.rows() != x.rows() || upstream.cols() != x.cols())
        throw Error(ErrorKind::ShapeMismatch, "upstream gradient shape mismatch");

    ScanTape tape;
    scan_forward(p, x, &tape, nullptr);

    const int rows = static_cast<int>(x.rows());
    const int C = p.channels();
    const int d = p.state_dim();

    SelectiveGrads g;
    g.a = Mat::Zero(C, d);
    g.wb = Mat::Zero(d, C);
    g.wc = Mat::Zero(d, C);
    g.wdelta = Mat::Zero(C, C);
    g.bdelta = Vec::Zero(C);
    g.x = Mat::Zero(rows, C);

    Mat dh = Mat::Zero(C, d);
    for (int k = rows - 1; k >= 0; --k) {
        const Vec xk = x.row(k).transpose();
        const Vec& bk = tape.bk[k];
        const Vec& ck = tape.ck[k];
        const Vec& s = tape.s[k];
        const Vec& dt = tape.dt[k];
        const Mat& abar = tape.abar[k];
        const Mat& ebar = tape.ebar[k];
        const Mat& hpost = tape.hpost[k];
        const Mat hprev = (k == 0) ? Mat::Zero(C, d) : tape.hpost[k - 1];
        const Vec gy = upstream.row(k).transpose();

        // y(k,c) = ck . hpost.row(c)
        Vec dck = hpost.transpose() * gy;
        dh += gy * ck.transpose();

        Vec dx = Vec::Zero(C);
        Vec dbk = Vec::Zero(d);
        Vec ddt = Vec::Zero(C);
        for (int c = 0; c < C; ++c) {
            for (int j = 0; j < d; ++j) {
                const double dhv = dh(c, j);
                const double z = p.a(c, j) * dt(c);
                const double dabar = dhv * hprev(c, j);
                const double debar = dhv * bk(j) * xk(c);
                dbk(j) += dhv * ebar(c, j) * xk(c);
                dx(c) += dhv * ebar(c, j) * bk(j);
                // abar = exp(a*dt); ebar = dt * g(z) with g = (e^z - 1)/z
                ddt(c) += dabar * p.a(c, j) * abar(c, j) + debar * abar(c, j);
                g.a(c, j) += dabar * dt(c) * abar(c, j) +
                             debar * dt(c) * dt(c) * expm1_over_x_deriv(z);
                dh(c, j) = dhv * abar(c, j);
            }
        }
        Vec ds(C);
        for (int c = 0; c < C; ++c) ds(c) = ddt(c) * sigmoid(s(c));

        g.wdelta += ds * xk.transpose();
        g.bdelta += ds;
        g.wb += dbk * xk.transpose();
        g.wc += dck * xk.transpose();
        dx += p.wdelta.transpose() * ds + p.wb.transpose() * dbk + p.wc.transpose() * dck;
        g.x.row(k) = dx.transpose();
    }
    return g;
}

FeatureMatrix bi_ssm_layer(const BiSSMLayer& layer, const FeatureMatrix& x,
                           const std::vector<int>& order, MacCounter* macs) {
    const int rows = static_cast<int>(x.rows());
    const int C = static_cast<int>(x.cols());
    check_permutation(order, rows);
    if (layer.norm_scale.size() != C)
        throw Error(ErrorKind::ShapeMismatch, "norm scale length mismatch");

    FeatureMatrix serial(rows, C);
    for (int i = 0; i < rows; ++i) serial.row(i) = x.row(order[i]);
    FeatureMatrix reversed(rows, C);
    for (int i = 0; i < rows; ++i) reversed.row(i) = serial.row(rows - 1 - i);

    const FeatureMatrix yf = selective_scan(layer.fwd, serial, macs);
    const FeatureMatrix yb = selective_scan(layer.bwd, reversed, macs);

    FeatureMatrix out(rows, C);
    for (int i = 0; i < rows; ++i) {
        const Vec xs = serial.row(i).transpose();
        Vec gate_f = layer.fwd.wgate * xs + layer.fwd.bgate;
        Vec gate_b = layer.bwd.wgate * xs + layer.bwd.bgate;
        for (int c = 0; c < C; ++c) {
            gate_f(c) = silu(gate_f(c));
            gate_b(c) = silu(gate_b(c));
        }
        const Vec cf = yf.row(i).transpose().cwiseProduct(gate_f);
        const Vec cb = yb.row(rows - 1 - i).transpose().cwiseProduct(gate_b);
        Vec r = xs + cf + cb;
        const double ms = r.squaredNorm() / C;
        r *= 1.0 / std::sqrt(ms + kRmsEps);
        out.row(order[i]) = r.cwiseProduct(layer.norm_scale).transpose();
    }
    if (macs)
        macs->add(static_cast<std::uint64_t>(rows) *
                  (2ULL * C * C + 2ULL * C + 3ULL * C));
    return out;
}

FeatureMatrix bi_ssm_stack(const BiSSMStack& stack, const FeatureMatrix& x,
                           const std::vector<int>& order, MacCounter* macs) {
    if (stack.layers.empty()) throw Error(ErrorKind::InvalidArgument, "stack must have >= 1 layer");
    FeatureMatrix cur = x;
    for (const auto& layer : stack.layers) cur = bi_ssm_layer(layer, cur, order, macs);
    return cur;
}

std::vector<int> identity_order(int n) {
    std::vector<int> o(n);
    std::iota(o.begin(), o.end(), 0);
    return o;
}

}  // namespace mt3d
