#pragma once

#include <cstdint>
#include <vector>

#include "mgtta/types.hpp"

namespace mgtta {

// Gradient memory layer: one small linear map per adapted scalar parameter.
// Its weights are the memory; an online reconstruction loss writes the
// incoming gradient stream into them.
struct GmlMemory {
  Mat W;  // d x d
  Vec b;  // d
  Index d = 8;

  Index param_count() const { return d * d + d; }
};

using GmlMemoryBank = std::vector<GmlMemory>;

GmlMemory init_memory(Index d, std::uint64_t seed);
GmlMemoryBank init_bank(Index n, Index d, std::uint64_t seed);

// W h + b
Vec gml_forward(const GmlMemory& mem, const Vec& h);

// || f_GML(phiK z) - phiV z ||^2, squared Euclidean norm, no averaging
Scalar recon_loss(const GmlMemory& mem, const Eigen::Vector2d& z, const Mat& phiK,
                  const Mat& phiV);

// sigmoid(phiLr . z), strictly in (0, 1)
Scalar adaptive_lr(const Eigen::Vector2d& phiLr, const Eigen::Vector2d& z);

struct ReconGrads {
  Mat dW;  // 2 r h^T
  Vec db;  // 2 r
};
ReconGrads recon_grads(const GmlMemory& mem, const Eigen::Vector2d& z, const Mat& phiK,
                       const Mat& phiV);

// One gradient-descent step on the reconstruction loss at step size
// adaptive_lr(phiLr, z).
GmlMemory memorize(const GmlMemory& mem, const Eigen::Vector2d& z, const Mat& phiK,
                   const Mat& phiV, const Eigen::Vector2d& phiLr);

// Descent holds iff eta * (||h||^2 + 1) < 1: the residual contracts by the
// factor 1 - 2 eta (||h||^2 + 1). The +1 carries the bias column.
Scalar descent_factor(const GmlMemory& mem, const Eigen::Vector2d& z, const Mat& phiK,
                      const Eigen::Vector2d& phiLr);

std::int64_t gml_param_count(std::int64_t n, std::int64_t d);

}  // namespace mgtta
