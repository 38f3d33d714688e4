#include "mgtta/mgg.hpp"

#include <cmath>
#include <stdexcept>

#include "mgtta/rng.hpp"

namespace mgtta {

namespace {

void check_z(const MggState& state, const Tensor& z, const char* op) {
  if (z.rank() != 2 || z.cols() != 2 || z.rows() != state.n())
    throw std::invalid_argument(std::string(op) + ": expected z of shape [" +
                                std::to_string(state.n()) + "x2], got " + z.shape_str());
}

struct LnScratch {
  Vec xhat;
  Scalar inv_std = 0.0;
};

Vec layer_norm_vec(const Vec& u, const Vec& gamma, const Vec& beta, LnScratch& s) {
  const Index d = u.size();
  const Scalar mean = u.mean();
  const Scalar var = (u.array() - mean).square().sum() / static_cast<Scalar>(d);
  s.inv_std = 1.0 / std::sqrt(var + kMggLnEps);
  s.xhat = (u.array() - mean) * s.inv_std;
  return gamma.cwiseProduct(s.xhat) + beta;
}

}  // namespace

MggWeights init_weights(Index d, std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("init_weights: d must be >= 1");
  MggWeights w;
  w.d = d;
  Rng rng(mix_seed(seed, 0x6d6767ULL));  // "mgg"
  const Scalar std = 1.0 / std::sqrt(static_cast<Scalar>(d));
  auto fill = [&](Mat& m, Index r, Index c) {
    m.resize(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = rng.normal(0.0, std);
  };
  fill(w.phiQ, d, 2);
  fill(w.phiK, d, 2);
  fill(w.phiV, d, 2);
  w.phiO.resize(d);
  for (Index j = 0; j < d; ++j) w.phiO(j) = rng.normal(0.0, std);
  w.lnGamma = Vec::Ones(d);
  w.lnBeta = Vec::Zero(d);
  w.phiLr.setZero();  // sigma(0) = 0.5 on the first step
  return w;
}

MggState init_state(Index n, Index d, std::uint64_t bank_seed, std::uint64_t weight_seed,
                    Scalar preproc_eps) {
  MggState s;
  s.weights = init_weights(d, weight_seed);
  s.bank = init_bank(n, d, bank_seed);
  s.preproc = init_preproc(n, preproc_eps);
  return s;
}

Tensor generate(const MggState& state, const Tensor& z) {
  check_z(state, z, "generate");
  const MggWeights& w = state.weights;
  Tensor out = Tensor::vector(state.n());
  LnScratch scratch;
  for (Index i = 0; i < state.n(); ++i) {
    const Eigen::Vector2d zi(z(i, 0), z(i, 1));
    const Vec u = state.bank[static_cast<std::size_t>(i)].W * (w.phiQ * zi) +
                  state.bank[static_cast<std::size_t>(i)].b;
    const Vec y = layer_norm_vec(u, w.lnGamma, w.lnBeta, scratch);
    out(i) = std::tanh(w.phiO.dot(y));
  }
  return out;
}

MggState step_memorize(MggState state, const Tensor& z) {
  check_z(state, z, "step_memorize");
  const MggWeights& w = state.weights;
  for (Index i = 0; i < state.n(); ++i) {
    const Eigen::Vector2d zi(z(i, 0), z(i, 1));
    state.bank[static_cast<std::size_t>(i)] =
        memorize(state.bank[static_cast<std::size_t>(i)], zi, w.phiK, w.phiV, w.phiLr);
  }
  return state;
}

Scalar bank_recon_loss(const MggState& state, const Tensor& z) {
  check_z(state, z, "bank_recon_loss");
  Scalar total = 0.0;
  for (Index i = 0; i < state.n(); ++i) {
    const Eigen::Vector2d zi(z(i, 0), z(i, 1));
    total += recon_loss(state.bank[static_cast<std::size_t>(i)], zi, state.weights.phiK,
                        state.weights.phiV);
  }
  return total;
}

MggWeightGrads meta_grad(const MggState& state, const Tensor& z_prev, const Tensor& g_now,
                         Scalar eta) {
  check_z(state, z_prev, "meta_grad");
  if (g_now.rank() != 1 || g_now.size() != state.n())
    throw std::invalid_argument("meta_grad: g_now shape " + g_now.shape_str() +
                                " does not match bank length " + std::to_string(state.n()));

  const MggWeights& w = state.weights;
  const Index d = w.d;
  MggWeightGrads grads;
  grads.dPhiQ = Mat::Zero(d, 2);
  grads.dPhiK = Mat::Zero(d, 2);
  grads.dPhiV = Mat::Zero(d, 2);
  grads.dPhiO = RowVec::Zero(d);
  grads.dLnGamma = Vec::Zero(d);
  grads.dLnBeta = Vec::Zero(d);
  grads.dPhiLr.setZero();

  LnScratch ln;
  for (Index i = 0; i < state.n(); ++i) {
    const Eigen::Vector2d zi(z_prev(i, 0), z_prev(i, 1));
    const GmlMemory& mem = state.bank[static_cast<std::size_t>(i)];

    // replay the memory step with its reconstruction gradient frozen
    const ReconGrads gm = recon_grads(mem, zi, w.phiK, w.phiV);
    const Scalar s = w.phiLr.dot(zi);
    const Scalar lr_gml = 1.0 / (1.0 + std::exp(-s));
    const Mat W_post = mem.W - lr_gml * gm.dW;
    const Vec b_post = mem.b - lr_gml * gm.db;

    const Vec h = w.phiQ * zi;
    const Vec u = W_post * h + b_post;
    const Vec y = layer_norm_vec(u, w.lnGamma, w.lnBeta, ln);
    const Scalar a = w.phiO.dot(y);
    const Scalar ghat = std::tanh(a);

    // L = -eta * sum_i ghat_i * g_now_i
    const Scalar dghat = -eta * g_now(i);
    const Scalar da = dghat * (1.0 - ghat * ghat);

    grads.dPhiO += da * y.transpose();
    const Vec dy = da * w.phiO.transpose();

    grads.dLnGamma += dy.cwiseProduct(ln.xhat);
    grads.dLnBeta += dy;
    const Vec dxhat = dy.cwiseProduct(w.lnGamma);
    const Scalar m1 = dxhat.mean();
    const Scalar m2 = dxhat.cwiseProduct(ln.xhat).mean();
    const Vec du = ln.inv_std * (dxhat.array() - m1 - ln.xhat.array() * m2).matrix();

    const Mat dW_post = du * h.transpose();
    const Vec dh = W_post.transpose() * du;
    grads.dPhiQ += dh * zi.transpose();

    // adaptive-rate path: W_post = W - sigma(s) * G with G constant
    const Scalar ds =
        -(dW_post.cwiseProduct(gm.dW).sum() + du.dot(gm.db)) * lr_gml * (1.0 - lr_gml);
    grads.dPhiLr += ds * zi;
  }
  return grads;
}

void apply_weight_grads(MggWeights& w, const MggWeightGrads& g, Scalar lr) {
  w.phiQ -= lr * g.dPhiQ;
  w.phiK -= lr * g.dPhiK;
  w.phiV -= lr * g.dPhiV;
  w.phiO -= lr * g.dPhiO;
  w.lnGamma -= lr * g.dLnGamma;
  w.lnBeta -= lr * g.dLnBeta;
  w.phiLr -= lr * g.dPhiLr;
}

std::int64_t param_count(std::int64_t n, std::int64_t d) { return gml_param_count(n, d); }

}  // namespace mgtta
