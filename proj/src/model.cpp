#include "mgtta/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mgtta/rng.hpp"

namespace mgtta {

void ParamRegistry::add(std::string name, Tensor t, bool adaptable) {
  if (has(name)) throw std::invalid_argument("ParamRegistry: duplicate name " + name);
  entries_.push_back({std::move(name), std::move(t), adaptable});
}

const Tensor& ParamRegistry::at(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw std::out_of_range("ParamRegistry: no parameter named " + name);
}

Tensor& ParamRegistry::at(const std::string& name) {
  for (auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw std::out_of_range("ParamRegistry: no parameter named " + name);
}

bool ParamRegistry::has(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

namespace {

Tensor gaussian_matrix(Index rows, Index cols, Scalar std, Rng& rng) {
  Tensor t = Tensor::matrix(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) t(i, j) = rng.normal(0.0, std);
  return t;
}

inline Scalar gelu_scalar(Scalar x) {
  return x * 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
}

void layer_norm_rows_plain(Mat& x, const Tensor& gamma, const Tensor& beta, Scalar eps) {
  const Index d = x.cols();
  for (Index i = 0; i < x.rows(); ++i) {
    const Scalar mean = x.row(i).mean();
    const Scalar var = (x.row(i).array() - mean).square().sum() / static_cast<Scalar>(d);
    const Scalar inv_std = 1.0 / std::sqrt(var + eps);
    x.row(i) = ((x.row(i).array() - mean) * inv_std).matrix().cwiseProduct(gamma.m().row(0)) +
               beta.m().row(0);
  }
}

}  // namespace

Model build_model(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.input_dim < 1 || cfg.hidden_dim < 1 || cfg.num_classes < 1 || cfg.num_blocks < 1)
    throw std::invalid_argument("build_model: all dimensions must be >= 1");

  Model m;
  m.config = cfg;
  Rng rng(mix_seed(seed, 0x6d6f64656cULL));  // "model"

  Index in = cfg.input_dim;
  for (int b = 0; b < cfg.num_blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    m.params.add(p + "W", gaussian_matrix(in, cfg.hidden_dim, 0.02, rng), false);
    m.params.add(p + "b", Tensor::vector(cfg.hidden_dim), false);
    m.params.add(p + "ln.gamma", Tensor::full(cfg.hidden_dim, 1.0), true);
    m.params.add(p + "ln.beta", Tensor::vector(cfg.hidden_dim), true);
    in = cfg.hidden_dim;
  }
  m.params.add("head.W", gaussian_matrix(in, cfg.num_classes, 0.02, rng), false);
  m.params.add("head.b", Tensor::vector(cfg.num_classes), false);
  return m;
}

ForwardResult forward(const Model& m, const Tensor& batch) {
  if (batch.cols() != m.config.input_dim)
    throw std::invalid_argument("forward: batch width " + std::to_string(batch.cols()) +
                                " != input_dim " + std::to_string(m.config.input_dim));
  ForwardResult out;
  Mat x = batch.m();
  for (int b = 0; b < m.config.num_blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    Mat u = x * m.params.at(p + "W").m();
    u.rowwise() += m.params.at(p + "b").m().row(0);
    layer_norm_rows_plain(u, m.params.at(p + "ln.gamma"), m.params.at(p + "ln.beta"),
                          m.config.ln_eps);
    out.features.push_back(Tensor::matrix(u));
    x = u.unaryExpr([](Scalar v) { return gelu_scalar(v); });
  }
  Mat logits = x * m.params.at("head.W").m();
  logits.rowwise() += m.params.at("head.b").m().row(0);
  out.logits = Tensor::matrix(logits);
  return out;
}

TapeForward forward_tape(const Model& m, Graph& g, const Tensor& batch, ParamFilter filter) {
  if (batch.cols() != m.config.input_dim)
    throw std::invalid_argument("forward_tape: batch width " + std::to_string(batch.cols()) +
                                " != input_dim " + std::to_string(m.config.input_dim));
  TapeForward out;
  auto param = [&](const std::string& name, bool adaptable) {
    const bool wants_grad = filter == ParamFilter::kAll ||
                            (filter == ParamFilter::kAdaptableOnly && adaptable);
    Var v = g.leaf(m.params.at(name), wants_grad);
    if (wants_grad) out.leaves.emplace_back(name, v);
    return v;
  };

  Var x = g.constant(batch);
  for (int b = 0; b < m.config.num_blocks; ++b) {
    const std::string p = "block" + std::to_string(b) + ".";
    Var u = add_rows(matmul(x, param(p + "W", false)), param(p + "b", false));
    Var f = layer_norm(u, param(p + "ln.gamma", true), param(p + "ln.beta", true),
                       m.config.ln_eps);
    out.features.push_back(f);
    x = gelu(f);
  }
  out.logits = add_rows(matmul(x, param("head.W", false)), param("head.b", false));
  return out;
}

Index adaptable_count(const Model& m) {
  Index n = 0;
  for (const auto& e : m.params.entries())
    if (e.adaptable) n += e.tensor.size();
  return n;
}

Index total_param_count(const Model& m) {
  Index n = 0;
  for (const auto& e : m.params.entries()) n += e.tensor.size();
  return n;
}

Tensor flatten_adaptable(const Model& m) {
  Tensor v = Tensor::vector(adaptable_count(m));
  Index k = 0;
  for (const auto& e : m.params.entries()) {
    if (!e.adaptable) continue;
    for (Scalar s : e.tensor.data()) v(k++) = s;
  }
  return v;
}

Model scatter_adaptable(Model m, const Tensor& v) {
  const Index n = adaptable_count(m);
  if (v.rank() != 1 || v.size() != n)
    throw std::invalid_argument("scatter_adaptable: expected vector of length " +
                                std::to_string(n) + ", got " + v.shape_str());
  Index k = 0;
  for (auto& e : m.params.entries()) {
    if (!e.adaptable) continue;
    for (Scalar& s : e.tensor.data()) s = v(k++);
  }
  return m;
}

std::vector<int> predict_labels(const Tensor& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Index i = 0; i < logits.rows(); ++i) {
    Index best = 0;
    logits.m().row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace mgtta
