#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ssev/rng.hpp"

namespace ssev::nn {

class NnError : public std::runtime_error {
 public:
  explicit NnError(const std::string& what) : std::runtime_error(what) {}
};

// Dense row-major 2D tensor of doubles. Scalars are 1x1, row vectors 1xN.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
  Tensor(int r, int c, std::vector<double> v) : rows(r), cols(c), data(std::move(v)) {
    if (data.size() != static_cast<size_t>(r) * c) throw NnError("tensor size mismatch");
  }
  static Tensor scalar(double v) { return Tensor(1, 1, {v}); }

  int numel() const { return rows * cols; }
  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  double item() const {
    if (numel() != 1) throw NnError("item() on non-scalar");
    return data[0];
  }
  bool all_finite() const;
};

// Reverse-mode tape. Nodes are appended in creation order, so the tape order
// is already topological; backward() walks it in reverse.
class Graph {
 public:
  // Leaves. Constants never receive gradients.
  int input(Tensor value, bool track_grad = true);
  int constant(Tensor value) { return input(std::move(value), false); }
  int scalar(double v) { return constant(Tensor::scalar(v)); }

  const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Tensor& grad(int id) const;
  bool has_grad(int id) const { return nodes_[static_cast<size_t>(id)].grad.numel() > 0; }

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients for every tracked
  // node reachable from `loss`, which must be scalar.
  void backward(int loss);

  // ---- primitive ops ----
  int matmul(int a, int b);     // A (m x k) * B (k x n)
  int matmul_nt(int a, int b);  // A (m x k) * B^T (n x k) -> m x n
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int div(int a, int b);
  int minimum(int a, int b);
  int add_rowvec(int a, int v);  // broadcast 1 x n over rows
  int mul_rowvec(int a, int v);
  int scale(int a, double k);
  int add_const(int a, double c);
  int neg(int a) { return scale(a, -1.0); }
  int relu(int a);
  int tanh_(int a);
  int exp_(int a);
  int log_(int a);
  int sqrt_(int a);
  int square(int a);
  int softplus(int a);  // log(1 + e^x), stable
  int sum(int a);       // -> 1x1
  int mean(int a);      // -> 1x1
  int row_sum(int a);   // n x m -> n x 1
  int row_mean(int a);  // n x m -> n x 1
  int bcast_col(int a, int cols);  // n x 1 -> n x cols
  int concat_cols(int a, int b);
  int slice_cols(int a, int c0, int c1);  // half-open [c0, c1)
  int softmax_rows(int a);
  int detach(int a);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until first accumulation
    bool needs_grad = false;
    std::function<void(Graph&)> back;  // empty for leaves
  };

  int push(Tensor value, bool needs_grad, std::function<void(Graph&)> back);
  Tensor& grad_buffer(int id);
  bool needs(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

  std::vector<Node> nodes_;
};

// ---- composite blocks ----

// y = x * W + b
int dense(Graph& g, int x, int w, int b);

// Per-row standardization followed by the affine (gain, bias), both 1 x n.
int layer_norm(Graph& g, int x, int gain, int bias, double eps = 1e-5);

struct AttentionOut {
  int output;  // Theta * V
  int scores;  // Theta = row-softmax(Q K^T / sqrt(d_k))
};
AttentionOut scaled_dot_attention(Graph& g, int q, int k, int v);

// ---- parameters and optimizer ----

struct ParamStore {
  struct Entry {
    std::string name;
    Tensor value;
    Tensor m;  // Adam first moment
    Tensor v;  // Adam second moment
  };
  std::vector<Entry> entries;  // stable iteration order
  std::unordered_map<std::string, int> index;
  std::int64_t step_count = 0;

  int add(const std::string& name, Tensor init);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return index.count(name) > 0; }
};

// Parameter tensors bound into a graph as tracked leaves (parallel to
// store.entries).
struct BoundParams {
  std::vector<int> ids;
  const ParamStore* store = nullptr;
  int id(const std::string& name) const;
};
BoundParams bind_params(Graph& g, const ParamStore& store);

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam step from explicit gradients (parallel to
// entries; null slots are treated as zero gradient). Returns false and
// leaves the store untouched if any gradient is non-finite.
bool adam_step(ParamStore& store, const std::vector<const Tensor*>& grads,
               const AdamConfig& cfg);

// Convenience: pulls gradients for the bound parameters out of the graph.
bool adam_step_from_graph(ParamStore& store, const Graph& g, const BoundParams& bound,
                          const AdamConfig& cfg);

// ---- initialization ----
Tensor glorot_uniform(int fan_in, int fan_out, Rng& rng);
Tensor zeros(int rows, int cols);
Tensor ones(int rows, int cols);

}  // namespace ssev::nn
