#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mgtta/autodiff.hpp"
#include "mgtta/tensor.hpp"

namespace mgtta {

struct ModelConfig {
  Index input_dim = 1024;
  Index hidden_dim = 64;
  int num_blocks = 2;
  Index num_classes = 8;
  Scalar ln_eps = 1e-5;
};

struct ParamEntry {
  std::string name;
  Tensor tensor;
  bool adaptable = false;
};

// Ordered, uniquely named parameter store. Registry order fixes the layout
// of the flattened adaptable vector.
class ParamRegistry {
 public:
  void add(std::string name, Tensor t, bool adaptable);
  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::vector<ParamEntry>& entries() { return entries_; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool has(const std::string& name) const;

 private:
  std::vector<ParamEntry> entries_;
};

// MLP classifier: num_blocks x (linear -> layer_norm -> GELU) then a linear
// head. The layer-norm affine parameters are the adaptable subset.
struct Model {
  ModelConfig config;
  ParamRegistry params;
};

struct ForwardResult {
  Tensor logits;                 // B x C
  std::vector<Tensor> features;  // per block, the layer_norm output, B x hidden
};

enum class ParamFilter { kAll, kAdaptableOnly, kNone };

struct TapeForward {
  Var logits;
  std::vector<Var> features;
  // leaves for parameters selected by the filter, in registry order
  std::vector<std::pair<std::string, Var>> leaves;
};

Model build_model(const ModelConfig& cfg, std::uint64_t seed);

ForwardResult forward(const Model& m, const Tensor& batch);

// Records the forward pass on `g`; parameters matched by `filter` become
// grad-enabled leaves, the rest are constants.
TapeForward forward_tape(const Model& m, Graph& g, const Tensor& batch, ParamFilter filter);

Index adaptable_count(const Model& m);
Index total_param_count(const Model& m);

Tensor flatten_adaptable(const Model& m);
Model scatter_adaptable(Model m, const Tensor& v);

std::vector<int> predict_labels(const Tensor& logits);

}  // namespace mgtta
