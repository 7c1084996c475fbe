#pragma once

#include <cstdint>
#include <vector>

#include "mt3d/config.hpp"
#include "mt3d/geometry.hpp"
#include "mt3d/gfem.hpp"
#include "mt3d/mip.hpp"
#include "mt3d/ssm.hpp"
#include "mt3d/types.hpp"

// Reference implementations kept deliberately naive and structurally
// independent of the production code paths. Used by the self-check command
// and the test suite to cross-validate results.
namespace mt3d::oracle {

// Dense matrix exponential, scaling and squaring with a Taylor series.
Mat expm(const Mat& m);

// ZOH discretization through the augmented-matrix identity
// expm(delta * [[a, b], [0, 0]]) = [[abar, bbar], [0, 1]], one 2x2 exponential
// per state entry. Avoids the cancellation-prone exp(a*delta)-1 form.
DiscreteLTI zoh_van_loan(const LTISystem& sys);

// Monte Carlo IoU: uniform samples over the union's bounding box.
double iou3d_mc(const Box7& a, const Box7& b, int samples, std::uint64_t seed);

// Metric sweeps as literal per-frame loops over the same 101-point grids.
double success_auc_brute(const std::vector<double>& ious);
double precision_auc_brute(const std::vector<double>& errors, double cap);

// Neighbor-weighted propagation evaluated element by element with plain
// loops (own neighbor search, own softmax).
FeatureMatrix propagate_oracle(const Mat& coords, const FeatureMatrix& tokens,
                               const Mat& hist_coords, const FeatureMatrix& hist_feats,
                               const Config& cfg, const MIPWeights& w);

// Grouped cross-attention evaluated element by element.
FeatureMatrix gfem_oracle(const FeatureMatrix& tokens, const FeatureMatrix& hist,
                          const GFEMWeights& w, const Config& cfg);

}  // namespace mt3d::oracle
