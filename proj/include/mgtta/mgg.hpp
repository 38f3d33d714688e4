#pragma once

#include <cstdint>

#include "mgtta/gml.hpp"
#include "mgtta/preproc.hpp"
#include "mgtta/tensor.hpp"

namespace mgtta {

inline constexpr Scalar kMggLnEps = 1e-5;

// Shared optimizer weights, applied identically to every parameter slot.
// The per-parameter memories live in the bank, not here.
struct MggWeights {
  Mat phiQ;   // d x 2
  Mat phiK;   // d x 2
  Mat phiV;   // d x 2
  RowVec phiO;  // 1 x d
  Vec lnGamma;  // d
  Vec lnBeta;   // d
  Eigen::Vector2d phiLr;
  Index d = 8;

  Index shared_param_count() const { return 3 * d * 2 + d + 2 * d + 2; }
};

struct MggState {
  MggWeights weights;
  GmlMemoryBank bank;     // one memory per adaptable scalar
  PreprocState preproc;

  Index n() const { return static_cast<Index>(bank.size()); }
};

MggWeights init_weights(Index d, std::uint64_t seed);
MggState init_state(Index n, Index d, std::uint64_t bank_seed, std::uint64_t weight_seed,
                    Scalar preproc_eps = 1e-10);

// Per slot i: ghat_i = tanh(phiO . LN(W_i (phiQ z_i) + b_i)). Outputs are
// strictly inside (-1, 1), so each downstream parameter step is bounded by
// the learning rate elementwise.
Tensor generate(const MggState& state, const Tensor& z);

// Writes z into every memory via one reconstruction-descent step. Shared
// weights are left untouched.
MggState step_memorize(MggState state, const Tensor& z);

// Aggregate reconstruction loss across the bank (diagnostic).
Scalar bank_recon_loss(const MggState& state, const Tensor& z);

struct MggWeightGrads {
  Mat dPhiQ;
  Mat dPhiK;  // identically zero under one-step truncation
  Mat dPhiV;  // identically zero under one-step truncation
  RowVec dPhiO;
  Vec dLnGamma;
  Vec dLnBeta;
  Eigen::Vector2d dPhiLr;
};

// One-step truncated meta-gradient of L = -eta * <ghat(phi_r), g_now>.
// `state` must hold the bank as it was BEFORE the memorize step that
// produced the update under scrutiny; the memory step is replayed here with
// its reconstruction gradient frozen, so only the adaptive-rate path feeds
// phiLr.
MggWeightGrads meta_grad(const MggState& state, const Tensor& z_prev, const Tensor& g_now,
                         Scalar eta);

// Gradient-descent update of the shared weights.
void apply_weight_grads(MggWeights& w, const MggWeightGrads& g, Scalar lr);

std::int64_t param_count(std::int64_t n, std::int64_t d);

}  // namespace mgtta
