#pragma once

#include <vector>

#include "mgtta/model.hpp"
#include "mgtta/shiftgen.hpp"
#include "mgtta/tensor.hpp"

namespace mgtta {

// Per-layer feature statistics collected once on clean in-distribution data.
struct SourceStats {
  std::vector<Tensor> mu;     // per block, rank-1 [hidden]
  std::vector<Tensor> sigma;  // per block, rank-1 [hidden], standard deviations
  int sample_count = 0;
};

struct LossBreakdown {
  Scalar entropy = 0.0;
  Scalar discrepancy = 0.0;
  Scalar total = 0.0;
  Scalar lambda = 0.0;
};

// Mean/std of each block's layer-norm output over the first k samples.
SourceStats collect_source_stats(const Model& m, const LabeledSet& clean, int k = 64);

// Batch-mean Shannon entropy of softmax(logits); in [0, ln C].
Scalar entropy_term(const Tensor& logits);

// Sum over blocks of ||mu_batch - mu_src||^2 + ||sigma_batch - sigma_src||^2.
Scalar discrepancy_term(const std::vector<Tensor>& features, const SourceStats& stats);

struct TtaLossResult {
  LossBreakdown breakdown;
  Tensor grad_adaptable;  // flat, registry order
  Tensor logits;          // the forward pass the loss was computed on
};

// Entropy plus lambda-weighted statistics discrepancy, differentiated w.r.t.
// the adaptable (layer-norm affine) parameters only.
TtaLossResult tta_loss(const Model& m, const Tensor& batch, const SourceStats& stats,
                       Scalar lambda);

// Loss values without gradients (plain forward), for cheap evaluation loops.
LossBreakdown eval_tta_loss(const Model& m, const Tensor& batch, const SourceStats& stats,
                            Scalar lambda);

}  // namespace mgtta
