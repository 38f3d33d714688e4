#pragma once

#include <cstdint>

#include "mgtta/tensor.hpp"

namespace mgtta {

// Adam-style gradient scaling. Each raw gradient vector g becomes a two
// column tensor z = [g_scaled, momentum_scaled], dividing out the running
// magnitude so the downstream optimizer sees O(1) inputs regardless of the
// absolute gradient size.
struct PreprocState {
  Tensor m;            // first-moment EMA, length n
  Tensor v;            // second-moment EMA, length n
  std::int64_t t = 0;  // completed preprocess calls
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.99;
  Scalar eps = 1e-10;
};

PreprocState init_preproc(Index n, Scalar eps = 1e-10);

struct PreprocResult {
  Tensor z;  // n x 2, row i = (g_i scaled, m_i scaled)
  PreprocState state;
};

PreprocResult preprocess(const PreprocState& state, const Tensor& g);

}  // namespace mgtta
