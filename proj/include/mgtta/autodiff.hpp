#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "mgtta/tensor.hpp"

namespace mgtta {

class Graph;

// Handle to a recorded node. Cheap to copy; valid as long as the graph lives.
struct Var {
  Graph* graph = nullptr;
  int id = -1;
};

// Gradients of one backward pass, keyed by leaf node.
class Gradients {
 public:
  bool contains(Var v) const { return by_id_.count(v.id) > 0; }
  const Tensor& at(Var v) const { return by_id_.at(v.id); }
  std::unordered_map<int, Tensor>& map() { return by_id_; }
  const std::unordered_map<int, Tensor>& map() const { return by_id_; }

 private:
  std::unordered_map<int, Tensor> by_id_;
};

// Eager tape. Operations append nodes; backward() replays the tape in
// reverse. A graph is built per step and discarded; it is not shared
// across threads.
class Graph {
 public:
  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Tensor& value_of(int id) const { return nodes_[id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Reverse-mode gradients of a scalar output w.r.t. every grad-enabled leaf.
  Gradients backward(Var output);

  std::size_t node_count() const { return nodes_.size(); }

  // --- recording interface used by the op free functions ---
  using BackwardFn = std::function<void(Graph&, int out_id)>;
  Var record(Tensor value, std::vector<int> inputs, BackwardFn fn);

  Tensor& grad_buf(int id);        // accumulation buffer, zero-initialized on first touch
  bool has_grad(int id) const { return grads_init_[id]; }
  void accumulate(int id, const Mat& g);

 private:
  struct Node {
    Tensor value;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_leaf = false;
  };
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<char> grads_init_;
};

// --- operations -----------------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);                 // elementwise
Var scale(Var a, Scalar c);
Var add_rows(Var x, Var bias);         // adds a rank-1 bias to every row
Var layer_norm(Var x, Var gamma, Var beta, Scalar eps = 1e-5);
Var softmax(Var x);                    // per row, max-shifted
Var gelu(Var x);
Var tanh(Var x);
Var sum(Var x);                        // scalar
Var col_mean(Var x);                   // per-column batch mean -> rank-1
Var col_std(Var x);                    // per-column population std -> rank-1
Var entropy_mean(Var logits);          // batch-mean Shannon entropy of softmax rows
Var cross_entropy_mean(Var logits, const std::vector<int>& labels);

// sum of squared elements; convenience for ||a||^2 style terms
Var sq_norm(Var a);

}  // namespace mgtta
