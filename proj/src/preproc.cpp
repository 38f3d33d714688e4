#include "mgtta/preproc.hpp"

#include <cmath>
#include <stdexcept>

namespace mgtta {

PreprocState init_preproc(Index n, Scalar eps) {
  PreprocState s;
  s.m = Tensor::vector(n);
  s.v = Tensor::vector(n);
  s.t = 0;
  s.eps = eps;
  return s;
}

PreprocResult preprocess(const PreprocState& state, const Tensor& g) {
  const Index n = state.m.size();
  if (g.rank() != 1 || g.size() != n)
    throw std::invalid_argument("preprocess: gradient shape " + g.shape_str() +
                                " does not match state length " + std::to_string(n));
  if (!g.all_finite()) throw std::invalid_argument("preprocess: non-finite gradient");

  PreprocResult out;
  out.state = state;
  out.state.m.m() = state.beta1 * state.m.m() + (1.0 - state.beta1) * g.m();
  out.state.v.m() = state.beta2 * state.v.m() + (1.0 - state.beta2) * g.m().cwiseProduct(g.m());

  const Scalar bc1 = 1.0 - std::pow(state.beta1, static_cast<Scalar>(state.t + 1));
  const Scalar bc2 = 1.0 - std::pow(state.beta2, static_cast<Scalar>(state.t + 1));

  out.z = Tensor::matrix(n, 2);
  for (Index i = 0; i < n; ++i) {
    const Scalar m_hat = out.state.m(i) / bc1;
    const Scalar v_hat = out.state.v(i) / bc2;
    const Scalar denom = std::sqrt(v_hat + state.eps);
    out.z(i, 0) = denom > 0.0 ? g(i) / denom : 0.0;
    out.z(i, 1) = denom > 0.0 ? m_hat / denom : 0.0;
  }
  out.state.t = state.t + 1;
  return out;
}

}  // namespace mgtta
