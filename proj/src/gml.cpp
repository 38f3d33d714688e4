#include "mgtta/gml.hpp"

#include <cmath>
#include <stdexcept>

#include "mgtta/rng.hpp"

namespace mgtta {

GmlMemory init_memory(Index d, std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("init_memory: d must be >= 1");
  GmlMemory mem;
  mem.d = d;
  mem.W.resize(d, d);
  Rng rng(mix_seed(seed, 0x676d6cULL));  // "gml"
  const Scalar std = 1.0 / std::sqrt(static_cast<Scalar>(d));
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) mem.W(i, j) = rng.normal(0.0, std);
  mem.b = Vec::Zero(d);
  return mem;
}

GmlMemoryBank init_bank(Index n, Index d, std::uint64_t seed) {
  GmlMemoryBank bank;
  bank.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    bank.push_back(init_memory(d, mix_seed(seed, static_cast<std::uint64_t>(i))));
  return bank;
}

Vec gml_forward(const GmlMemory& mem, const Vec& h) {
  if (h.size() != mem.d)
    throw std::invalid_argument("gml_forward: input length " + std::to_string(h.size()) +
                                " != memory dim " + std::to_string(mem.d));
  return mem.W * h + mem.b;
}

Scalar recon_loss(const GmlMemory& mem, const Eigen::Vector2d& z, const Mat& phiK,
                  const Mat& phiV) {
  const Vec r = gml_forward(mem, phiK * z) - phiV * z;
  return r.squaredNorm();
}

Scalar adaptive_lr(const Eigen::Vector2d& phiLr, const Eigen::Vector2d& z) {
  return 1.0 / (1.0 + std::exp(-phiLr.dot(z)));
}

ReconGrads recon_grads(const GmlMemory& mem, const Eigen::Vector2d& z, const Mat& phiK,
                       const Mat& phiV) {
  const Vec h = phiK * z;
  const Vec r = gml_forward(mem, h) - phiV * z;
  return {2.0 * r * h.transpose(), 2.0 * r};
}

GmlMemory memorize(const GmlMemory& mem, const Eigen::Vector2d& z, const Mat& phiK,
                   const Mat& phiV, const Eigen::Vector2d& phiLr) {
  const ReconGrads g = recon_grads(mem, z, phiK, phiV);
  const Scalar eta = adaptive_lr(phiLr, z);
  GmlMemory out = mem;
  out.W -= eta * g.dW;
  out.b -= eta * g.db;
  return out;
}

Scalar descent_factor(const GmlMemory& mem, const Eigen::Vector2d& z, const Mat& phiK,
                      const Eigen::Vector2d& phiLr) {
  const Vec h = phiK * z;
  return adaptive_lr(phiLr, z) * (h.squaredNorm() + 1.0);
}

std::int64_t gml_param_count(std::int64_t n, std::int64_t d) {
  if (n < 1 || d < 1) throw std::invalid_argument("gml_param_count: n and d must be >= 1");
  return n * (d * d + d);
}

}  // namespace mgtta
