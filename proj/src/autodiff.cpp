#include "mgtta/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mgtta {

namespace {

void check_same_graph(Var a, Var b, const char* op) {
  if (a.graph == nullptr || a.graph != b.graph)
    throw std::invalid_argument(std::string(op) + ": operands belong to different graphs");
}

inline Scalar norm_pdf(Scalar x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline Scalar norm_cdf(Scalar x) { return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)); }

// Row-wise softmax with max subtraction, written into `out`.
void softmax_rows(const Mat& x, Mat& out) {
  out.resize(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Scalar mx = x.row(i).maxCoeff();
    out.row(i) = (x.row(i).array() - mx).exp();
    out.row(i) /= out.row(i).sum();
  }
}

}  // namespace

Var Graph::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::record(Tensor value, std::vector<int> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.backward = std::move(fn);
  for (int i : n.inputs)
    if (nodes_[i].requires_grad) n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::grad_buf(int id) {
  if (!grads_init_[id]) {
    const Tensor& v = nodes_[id].value;
    grads_[id] = v.rank() == 1 ? Tensor::vector(v.size()) : Tensor::matrix(v.rows(), v.cols());
    grads_init_[id] = 1;
  }
  return grads_[id];
}

void Graph::accumulate(int id, const Mat& g) {
  if (!nodes_[id].requires_grad) return;
  grad_buf(id).m() += g;
}

Gradients Graph::backward(Var output) {
  if (output.graph != this) throw std::invalid_argument("backward: node from another graph");
  const Tensor& out_val = nodes_[output.id].value;
  if (out_val.size() != 1)
    throw std::invalid_argument("backward: output must be scalar, got shape " +
                                out_val.shape_str());

  grads_.assign(nodes_.size(), Tensor());
  grads_init_.assign(nodes_.size(), 0);
  grad_buf(output.id).m()(0, 0) = 1.0;

  for (int id = output.id; id >= 0; --id) {
    const Node& n = nodes_[id];
    if (!n.requires_grad || !grads_init_[id]) continue;
    if (n.backward) n.backward(*this, id);
  }

  Gradients out;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].is_leaf && nodes_[id].requires_grad)
      out.map()[static_cast<int>(id)] =
          grads_init_[id] ? grads_[id]
                          : (nodes_[id].value.rank() == 1
                                 ? Tensor::vector(nodes_[id].value.size())
                                 : Tensor::matrix(nodes_[id].value.rows(), nodes_[id].value.cols()));
  }
  grads_.clear();
  grads_init_.clear();
  return out;
}

Var matmul(Var a, Var b) {
  check_same_graph(a, b, "matmul");
  Graph& g = *a.graph;
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  if (ta.cols() != tb.rows())
    throw std::invalid_argument("matmul: inner dimensions disagree, " + ta.shape_str() + " x " +
                                tb.shape_str());
  Tensor out = ta.rank() == 1 ? Tensor::vector((ta.m() * tb.m()).row(0).transpose())
                              : Tensor::matrix(ta.m() * tb.m());
  const int ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& gr, int out_id) {
    const Mat& gy = gr.grad_buf(out_id).m();
    gr.accumulate(ia, gy * gr.value_of(ib).m().transpose());
    gr.accumulate(ib, gr.value_of(ia).m().transpose() * gy);
  });
}

Var add(Var a, Var b) {
  check_same_graph(a, b, "add");
  Graph& g = *a.graph;
  require_shape(g.value(a).same_shape(g.value(b)), "add", g.value(a), g.value(b));
  Tensor out = g.value(a);
  out.m() += g.value(b).m();
  const int ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& gr, int out_id) {
    const Mat& gy = gr.grad_buf(out_id).m();
    gr.accumulate(ia, gy);
    gr.accumulate(ib, gy);
  });
}

Var sub(Var a, Var b) {
  check_same_graph(a, b, "sub");
  Graph& g = *a.graph;
  require_shape(g.value(a).same_shape(g.value(b)), "sub", g.value(a), g.value(b));
  Tensor out = g.value(a);
  out.m() -= g.value(b).m();
  const int ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& gr, int out_id) {
    const Mat& gy = gr.grad_buf(out_id).m();
    gr.accumulate(ia, gy);
    gr.accumulate(ib, -gy);
  });
}

Var mul(Var a, Var b) {
  check_same_graph(a, b, "mul");
  Graph& g = *a.graph;
  require_shape(g.value(a).same_shape(g.value(b)), "mul", g.value(a), g.value(b));
  Tensor out = g.value(a);
  out.m() = out.m().cwiseProduct(g.value(b).m());
  const int ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& gr, int out_id) {
    const Mat& gy = gr.grad_buf(out_id).m();
    gr.accumulate(ia, gy.cwiseProduct(gr.value_of(ib).m()));
    gr.accumulate(ib, gy.cwiseProduct(gr.value_of(ia).m()));
  });
}

Var scale(Var a, Scalar c) {
  Graph& g = *a.graph;
  Tensor out = g.value(a);
  out.m() *= c;
  const int ia = a.id;
  return g.record(std::move(out), {ia}, [ia, c](Graph& gr, int out_id) {
    gr.accumulate(ia, c * gr.grad_buf(out_id).m());
  });
}

Var add_rows(Var x, Var bias) {
  check_same_graph(x, bias, "add_rows");
  Graph& g = *x.graph;
  const Tensor& tx = g.value(x);
  const Tensor& tb = g.value(bias);
  require_shape(tb.rank() == 1 && tb.size() == tx.cols(), "add_rows", tx, tb);
  Tensor out = tx;
  out.m().rowwise() += tb.m().row(0);
  const int ix = x.id, ib = bias.id;
  return g.record(std::move(out), {ix, ib}, [ix, ib](Graph& gr, int out_id) {
    const Mat& gy = gr.grad_buf(out_id).m();
    gr.accumulate(ix, gy);
    gr.accumulate(ib, gy.colwise().sum());
  });
}

Var layer_norm(Var x, Var gamma, Var beta, Scalar eps) {
  check_same_graph(x, gamma, "layer_norm");
  check_same_graph(x, beta, "layer_norm");
  Graph& g = *x.graph;
  const Tensor& tx = g.value(x);
  const Tensor& tg = g.value(gamma);
  const Tensor& tb = g.value(beta);
  const Index d = tx.cols();
  if (d < 1) throw std::invalid_argument("layer_norm: empty feature dimension");
  if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");
  require_shape(tg.rank() == 1 && tg.size() == d, "layer_norm(gamma)", tx, tg);
  require_shape(tb.rank() == 1 && tb.size() == d, "layer_norm(beta)", tx, tb);

  // population (1/d) variance per row
  Tensor out = tx;
  Mat xhat(tx.rows(), d);
  Vec inv_std(tx.rows());
  for (Index i = 0; i < tx.rows(); ++i) {
    const Scalar mean = tx.m().row(i).mean();
    const Scalar var = (tx.m().row(i).array() - mean).square().sum() / static_cast<Scalar>(d);
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (tx.m().row(i).array() - mean) * inv_std(i);
    out.m().row(i) = xhat.row(i).cwiseProduct(tg.m().row(0)) + tb.m().row(0);
  }

  const int ix = x.id, ig = gamma.id, ib = beta.id;
  return g.record(std::move(out), {ix, ig, ib},
                  [ix, ig, ib, xhat, inv_std, d](Graph& gr, int out_id) {
                    const Mat& gy = gr.grad_buf(out_id).m();
                    const Mat& gam = gr.value_of(ig).m();
                    gr.accumulate(ig, gy.cwiseProduct(xhat).colwise().sum());
                    gr.accumulate(ib, gy.colwise().sum());
                    Mat gx(gy.rows(), gy.cols());
                    for (Index i = 0; i < gy.rows(); ++i) {
                      const RowVec dxhat = gy.row(i).cwiseProduct(gam.row(0));
                      const Scalar m1 = dxhat.mean();
                      const Scalar m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
                      gx.row(i) =
                          inv_std(i) * (dxhat.array() - m1 - xhat.row(i).array() * m2).matrix();
                    }
                    gr.accumulate(ix, gx);
                  });
}

Var softmax(Var x) {
  Graph& g = *x.graph;
  Tensor out = g.value(x);
  Mat p;
  softmax_rows(g.value(x).m(), p);
  out.m() = p;
  const int ix = x.id;
  return g.record(std::move(out), {ix}, [ix](Graph& gr, int out_id) {
    const Mat& gy = gr.grad_buf(out_id).m();
    const Mat& p = gr.value_of(out_id).m();
    Mat gx(p.rows(), p.cols());
    for (Index i = 0; i < p.rows(); ++i) {
      const Scalar dot = gy.row(i).dot(p.row(i));
      gx.row(i) = p.row(i).cwiseProduct((gy.row(i).array() - dot).matrix());
    }
    gr.accumulate(ix, gx);
  });
}

Var gelu(Var x) {
  Graph& g = *x.graph;
  Tensor out = g.value(x);
  out.m() = out.m().unaryExpr([](Scalar v) { return v * norm_cdf(v); });
  const int ix = x.id;
  return g.record(std::move(out), {ix}, [ix](Graph& gr, int out_id) {
    const Mat& gy = gr.grad_buf(out_id).m();
    const Mat& xin = gr.value_of(ix).m();
    gr.accumulate(
        ix, gy.cwiseProduct(xin.unaryExpr([](Scalar v) { return norm_cdf(v) + v * norm_pdf(v); })));
  });
}

Var tanh(Var x) {
  Graph& g = *x.graph;
  Tensor out = g.value(x);
  out.m() = out.m().array().tanh();
  const int ix = x.id;
  return g.record(std::move(out), {ix}, [ix](Graph& gr, int out_id) {
    const Mat& gy = gr.grad_buf(out_id).m();
    const Mat& y = gr.value_of(out_id).m();
    gr.accumulate(ix, gy.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var sum(Var x) {
  Graph& g = *x.graph;
  Tensor out = Tensor::vector({g.value(x).m().sum()});
  const int ix = x.id;
  return g.record(std::move(out), {ix}, [ix](Graph& gr, int out_id) {
    const Scalar gy = gr.grad_buf(out_id).m()(0, 0);
    const Tensor& xin = gr.value_of(ix);
    gr.accumulate(ix, Mat::Constant(xin.rows(), xin.cols(), gy));
  });
}

Var col_mean(Var x) {
  Graph& g = *x.graph;
  const Tensor& tx = g.value(x);
  const Index b = tx.rows();
  Tensor out = Tensor::vector(Vec(tx.m().colwise().mean().transpose()));
  const int ix = x.id;
  return g.record(std::move(out), {ix}, [ix, b](Graph& gr, int out_id) {
    const Mat& gy = gr.grad_buf(out_id).m();  // 1 x n
    Mat gx(b, gy.cols());
    gx.rowwise() = gy.row(0) / static_cast<Scalar>(b);
    gr.accumulate(ix, gx);
  });
}

Var col_std(Var x) {
  Graph& g = *x.graph;
  const Tensor& tx = g.value(x);
  if (tx.rows() < 2) throw std::invalid_argument("col_std: needs at least 2 rows");
  const Index b = tx.rows();
  RowVec mu = tx.m().colwise().mean();
  Mat centered = tx.m().rowwise() - mu;
  RowVec sigma = (centered.array().square().colwise().sum() / static_cast<Scalar>(b)).sqrt();
  Tensor out = Tensor::vector(Vec(sigma.transpose()));
  const int ix = x.id;
  return g.record(std::move(out), {ix}, [ix, b, centered, sigma](Graph& gr, int out_id) {
    const Mat& gy = gr.grad_buf(out_id).m();  // 1 x n
    Mat gx(b, gy.cols());
    for (Index j = 0; j < gy.cols(); ++j) {
      if (sigma(j) > 0.0)
        gx.col(j) = centered.col(j) * (gy(0, j) / (static_cast<Scalar>(b) * sigma(j)));
      else
        gx.col(j).setZero();  // subgradient at a constant column
    }
    gr.accumulate(ix, gx);
  });
}

Var entropy_mean(Var logits) {
  Graph& g = *logits.graph;
  const Mat& x = g.value(logits).m();
  const Index b = x.rows();
  if (b < 1) throw std::invalid_argument("entropy_mean: empty batch");

  // H(row) = lse - sum(p * logits), computed shift-stable
  Mat p(b, x.cols());
  Vec lse(b);
  Scalar total = 0.0;
  for (Index i = 0; i < b; ++i) {
    const Scalar mx = x.row(i).maxCoeff();
    const Scalar s = (x.row(i).array() - mx).exp().sum();
    lse(i) = mx + std::log(s);
    p.row(i) = (x.row(i).array() - lse(i)).exp();
    total += lse(i) - p.row(i).dot(x.row(i));
  }
  Tensor out = Tensor::vector({total / static_cast<Scalar>(b)});

  const int ix = logits.id;
  return g.record(std::move(out), {ix}, [ix, p, lse, b](Graph& gr, int out_id) {
    const Scalar gy = gr.grad_buf(out_id).m()(0, 0);
    const Mat& x = gr.value_of(ix).m();
    Mat gx(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
      const RowVec logp = x.row(i).array() - lse(i);
      const Scalar h = -p.row(i).dot(logp);
      gx.row(i) = -(gy / static_cast<Scalar>(b)) * p.row(i).cwiseProduct((logp.array() + h).matrix());
    }
    gr.accumulate(ix, gx);
  });
}

Var cross_entropy_mean(Var logits, const std::vector<int>& labels) {
  Graph& g = *logits.graph;
  const Mat& x = g.value(logits).m();
  const Index b = x.rows();
  if (static_cast<Index>(labels.size()) != b)
    throw std::invalid_argument("cross_entropy_mean: labels/batch mismatch");

  Mat p(b, x.cols());
  Scalar total = 0.0;
  for (Index i = 0; i < b; ++i) {
    const Scalar mx = x.row(i).maxCoeff();
    const Scalar lse = mx + std::log((x.row(i).array() - mx).exp().sum());
    p.row(i) = (x.row(i).array() - lse).exp();
    total += lse - x(i, labels[static_cast<std::size_t>(i)]);
  }
  Tensor out = Tensor::vector({total / static_cast<Scalar>(b)});

  const int ix = logits.id;
  return g.record(std::move(out), {ix}, [ix, p, labels, b](Graph& gr, int out_id) {
    const Scalar gy = gr.grad_buf(out_id).m()(0, 0);
    Mat gx = p;
    for (Index i = 0; i < gx.rows(); ++i) gx(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    gr.accumulate(ix, (gy / static_cast<Scalar>(b)) * gx);
  });
}

Var sq_norm(Var a) { return sum(mul(a, a)); }

}  // namespace mgtta
