#pragma once

#include <vector>

#include "mt3d/config.hpp"
#include "mt3d/flops.hpp"
#include "mt3d/types.hpp"

namespace mt3d {

// Continuous-time LTI system with diagonal state matrix.
struct LTISystem {
    Vec a;      // diagonal of A, length d
    Vec b;      // input projection, length d
    RowVec c;   // output projection, length d
    double delta = 1.0;

    void validate() const;
};

// Zero-order-hold discretization of a diagonal system.
struct DiscreteLTI {
    Vec abar;  // exp(a * delta), per entry
    Vec bbar;  // (exp(a * delta) - 1) / a * b, per entry
};

// Input-dependent scan parameters for one direction of one layer. For token x
// (C channels): state input b(x) = wb * x, readout c(x) = wc * x, step size
// delta(x) = softplus(wdelta * x + bdelta) per channel. The gate projection is
// applied by the bidirectional layer, not by the scan itself.
struct SelectiveParams {
    Mat a;       // C x d, per-channel diagonal state matrix
    Mat wb;      // d x C
    Mat wc;      // d x C
    Mat wdelta;  // C x C
    Vec bdelta;  // C
    Mat wgate;   // C x C
    Vec bgate;   // C

    int channels() const { return static_cast<int>(a.rows()); }
    int state_dim() const { return static_cast<int>(a.cols()); }
    void validate() const;
};

struct BiSSMLayer {
    SelectiveParams fwd;
    SelectiveParams bwd;
    Vec norm_scale;  // C, RMS-norm gain
};

struct BiSSMStack {
    std::vector<BiSSMLayer> layers;
};

// Gradients of selective_scan with respect to its inputs.
struct SelectiveGrads {
    Mat a;
    Mat wb;
    Mat wc;
    Mat wdelta;
    Vec bdelta;
    Mat x;  // gradient w.r.t. the input tokens
};

// Abar = exp(a*delta); Bbar = (exp(a*delta)-1)/a * b with a series expansion
// below |a*delta| < 1e-4 so the a -> 0 limit (Bbar = delta*b) is exact.
DiscreteLTI zoh_discretize(const LTISystem& sys);

// Scalar helpers shared with the input-dependent scan: (exp(x)-1)/x and its
// derivative, series-expanded near zero.
double expm1_over_x(double x);
double expm1_over_x_deriv(double x);

// K[i] = c * Abar^i * Bbar.
std::vector<double> lti_kernel(const DiscreteLTI& d, const RowVec& c, int len);

// Recurrent evaluation h_{k+1} = Abar h_k + Bbar x_k, y_k = c h_{k+1}, h_0 = 0.
std::vector<double> lti_scan(const DiscreteLTI& d, const RowVec& c, const std::vector<double>& x);

// Input-dependent scan over the rows of X (tokens x C). Per channel the state
// update uses ZOH discretization with the token-dependent step size. Throws on
// non-finite intermediates, naming the offending token.
FeatureMatrix selective_scan(const SelectiveParams& p, const FeatureMatrix& x,
                             MacCounter* macs = nullptr);

// Same recurrence evaluated in blocks of `chunk` tokens with carried state.
FeatureMatrix selective_scan_chunked(const SelectiveParams& p, const FeatureMatrix& x,
                                     int chunk = 16);

// Reverse-mode gradients of selective_scan.
SelectiveGrads selective_scan_backward(const SelectiveParams& p, const FeatureMatrix& x,
                                       const FeatureMatrix& upstream);

// One bidirectional layer: forward scan over x[order] plus backward scan over
// the reversed serialization, each gated by its direction's gate projection,
// added to the residual and RMS-normalized. `order` must be a permutation of
// the row indices.
FeatureMatrix bi_ssm_layer(const BiSSMLayer& layer, const FeatureMatrix& x,
                           const std::vector<int>& order, MacCounter* macs = nullptr);

FeatureMatrix bi_ssm_stack(const BiSSMStack& stack, const FeatureMatrix& x,
                           const std::vector<int>& order, MacCounter* macs = nullptr);

std::vector<int> identity_order(int n);

}  // namespace mt3d
