#include "ssev/nn.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>

extern "C" void openblas_set_num_threads(int);

namespace ssev::nn {

namespace {

void ensure_blas_configured() {
  static const bool done = [] {
    // Single-threaded by default: the batch-x-width gemms here are small
    // enough that thread sync costs more than it buys, and a fixed thread
    // count keeps reruns byte-identical.
    int threads = 1;
    if (const char* env = std::getenv("SSEV_BLAS_THREADS")) threads = std::atoi(env);
    if (threads < 1) threads = 1;
    openblas_set_num_threads(threads);
    return true;
  }();
  (void)done;
}

// C (+)= alpha * op(A) * op(B)
void dgemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a,
           int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  ensure_blas_configured();
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c,
              ldc);
}

}  // namespace

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

int Graph::push(Tensor value, bool needs_grad, std::function<void(Graph&)> back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Graph::input(Tensor value, bool track_grad) {
  return push(std::move(value), track_grad, nullptr);
}

const Tensor& Graph::grad(int id) const {
  static const Tensor empty;
  const Tensor& g = nodes_[static_cast<size_t>(id)].grad;
  return g.numel() > 0 ? g : empty;
}

Tensor& Graph::grad_buffer(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.numel() == 0) n.grad = Tensor(n.value.rows, n.value.cols);
  return n.grad;
}

void Graph::backward(int loss) {
  if (value(loss).numel() != 1) throw NnError("backward: loss must be scalar");
  grad_buffer(loss).data[0] = 1.0;
  for (int i = loss; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.back || n.grad.numel() == 0 || !n.needs_grad) continue;
    n.back(*this);
  }
}

// ---- op helpers ----

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw NnError(std::string(op) + ": shape mismatch");
}

}  // namespace

int Graph::matmul(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.cols != tb.rows) throw NnError("matmul: inner dimensions disagree");
  Tensor out(ta.rows, tb.cols);
  dgemm(false, false, ta.rows, tb.cols, ta.cols, 1.0, ta.data.data(), ta.cols,
        tb.data.data(), tb.cols, 0.0, out.data.data(), out.cols);
  const bool track = needs(a) || needs(b);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, b, id](Graph& g) {
      const Tensor& go = g.grad(id);
      const Tensor& ta2 = g.value(a);
      const Tensor& tb2 = g.value(b);
      if (g.needs(a)) {  // dA += dC * B^T
        Tensor& ga = g.grad_buffer(a);
        dgemm(false, true, ta2.rows, ta2.cols, tb2.cols, 1.0, go.data.data(), go.cols,
              tb2.data.data(), tb2.cols, 1.0, ga.data.data(), ga.cols);
      }
      if (g.needs(b)) {  // dB += A^T * dC
        Tensor& gb = g.grad_buffer(b);
        dgemm(true, false, tb2.rows, tb2.cols, ta2.rows, 1.0, ta2.data.data(), ta2.cols,
              go.data.data(), go.cols, 1.0, gb.data.data(), gb.cols);
      }
    };
  }
  return id;
}

int Graph::matmul_nt(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.cols != tb.cols) throw NnError("matmul_nt: inner dimensions disagree");
  Tensor out(ta.rows, tb.rows);
  dgemm(false, true, ta.rows, tb.rows, ta.cols, 1.0, ta.data.data(), ta.cols,
        tb.data.data(), tb.cols, 0.0, out.data.data(), out.cols);
  const bool track = needs(a) || needs(b);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, b, id](Graph& g) {
      const Tensor& go = g.grad(id);
      const Tensor& ta2 = g.value(a);
      const Tensor& tb2 = g.value(b);
      if (g.needs(a)) {  // dA += dC * B
        Tensor& ga = g.grad_buffer(a);
        dgemm(false, false, ta2.rows, ta2.cols, tb2.rows, 1.0, go.data.data(), go.cols,
              tb2.data.data(), tb2.cols, 1.0, ga.data.data(), ga.cols);
      }
      if (g.needs(b)) {  // dB += dC^T * A
        Tensor& gb = g.grad_buffer(b);
        dgemm(true, false, tb2.rows, tb2.cols, ta2.rows, 1.0, go.data.data(), go.cols,
              ta2.data.data(), ta2.cols, 1.0, gb.data.data(), gb.cols);
      }
    };
  }
  return id;
}

int Graph::add(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_same_shape(ta, tb, "add");
  Tensor out(ta.rows, ta.cols);
  for (int i = 0; i < out.numel(); ++i) out.data[i] = ta.data[i] + tb.data[i];
  const bool track = needs(a) || needs(b);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, b, id](Graph& g) {
      const Tensor& go = g.grad(id);
      if (g.needs(a)) {
        Tensor& ga = g.grad_buffer(a);
        for (int i = 0; i < go.numel(); ++i) ga.data[i] += go.data[i];
      }
      if (g.needs(b)) {
        Tensor& gb = g.grad_buffer(b);
        for (int i = 0; i < go.numel(); ++i) gb.data[i] += go.data[i];
      }
    };
  }
  return id;
}

int Graph::sub(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_same_shape(ta, tb, "sub");
  Tensor out(ta.rows, ta.cols);
  for (int i = 0; i < out.numel(); ++i) out.data[i] = ta.data[i] - tb.data[i];
  const bool track = needs(a) || needs(b);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, b, id](Graph& g) {
      const Tensor& go = g.grad(id);
      if (g.needs(a)) {
        Tensor& ga = g.grad_buffer(a);
        for (int i = 0; i < go.numel(); ++i) ga.data[i] += go.data[i];
      }
      if (g.needs(b)) {
        Tensor& gb = g.grad_buffer(b);
        for (int i = 0; i < go.numel(); ++i) gb.data[i] -= go.data[i];
      }
    };
  }
  return id;
}

int Graph::mul(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_same_shape(ta, tb, "mul");
  Tensor out(ta.rows, ta.cols);
  for (int i = 0; i < out.numel(); ++i) out.data[i] = ta.data[i] * tb.data[i];
  const bool track = needs(a) || needs(b);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, b, id](Graph& g) {
      const Tensor& go = g.grad(id);
      const Tensor& ta2 = g.value(a);
      const Tensor& tb2 = g.value(b);
      if (g.needs(a)) {
        Tensor& ga = g.grad_buffer(a);
        for (int i = 0; i < go.numel(); ++i) ga.data[i] += go.data[i] * tb2.data[i];
      }
      if (g.needs(b)) {
        Tensor& gb = g.grad_buffer(b);
        for (int i = 0; i < go.numel(); ++i) gb.data[i] += go.data[i] * ta2.data[i];
      }
    };
  }
  return id;
}

int Graph::div(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_same_shape(ta, tb, "div");
  Tensor out(ta.rows, ta.cols);
  for (int i = 0; i < out.numel(); ++i) out.data[i] = ta.data[i] / tb.data[i];
  const bool track = needs(a) || needs(b);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, b, id](Graph& g) {
      const Tensor& go = g.grad(id);
      const Tensor& ta2 = g.value(a);
      const Tensor& tb2 = g.value(b);
      if (g.needs(a)) {
        Tensor& ga = g.grad_buffer(a);
        for (int i = 0; i < go.numel(); ++i) ga.data[i] += go.data[i] / tb2.data[i];
      }
      if (g.needs(b)) {
        Tensor& gb = g.grad_buffer(b);
        for (int i = 0; i < go.numel(); ++i)
          gb.data[i] -= go.data[i] * ta2.data[i] / (tb2.data[i] * tb2.data[i]);
      }
    };
  }
  return id;
}

int Graph::minimum(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  check_same_shape(ta, tb, "minimum");
  Tensor out(ta.rows, ta.cols);
  for (int i = 0; i < out.numel(); ++i) out.data[i] = std::min(ta.data[i], tb.data[i]);
  const bool track = needs(a) || needs(b);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, b, id](Graph& g) {
      const Tensor& go = g.grad(id);
      const Tensor& ta2 = g.value(a);
      const Tensor& tb2 = g.value(b);
      // Subgradient: ties route to a.
      if (g.needs(a)) {
        Tensor& ga = g.grad_buffer(a);
        for (int i = 0; i < go.numel(); ++i)
          if (ta2.data[i] <= tb2.data[i]) ga.data[i] += go.data[i];
      }
      if (g.needs(b)) {
        Tensor& gb = g.grad_buffer(b);
        for (int i = 0; i < go.numel(); ++i)
          if (ta2.data[i] > tb2.data[i]) gb.data[i] += go.data[i];
      }
    };
  }
  return id;
}

int Graph::add_rowvec(int a, int v) {
  const Tensor& ta = value(a);
  const Tensor& tv = value(v);
  if (tv.rows != 1 || tv.cols != ta.cols) throw NnError("add_rowvec: expected 1 x cols");
  Tensor out(ta.rows, ta.cols);
  for (int r = 0; r < ta.rows; ++r)
    for (int c = 0; c < ta.cols; ++c) out.at(r, c) = ta.at(r, c) + tv.data[c];
  const bool track = needs(a) || needs(v);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, v, id](Graph& g) {
      const Tensor& go = g.grad(id);
      if (g.needs(a)) {
        Tensor& ga = g.grad_buffer(a);
        for (int i = 0; i < go.numel(); ++i) ga.data[i] += go.data[i];
      }
      if (g.needs(v)) {
        Tensor& gv = g.grad_buffer(v);
        for (int r = 0; r < go.rows; ++r)
          for (int c = 0; c < go.cols; ++c) gv.data[c] += go.at(r, c);
      }
    };
  }
  return id;
}

int Graph::mul_rowvec(int a, int v) {
  const Tensor& ta = value(a);
  const Tensor& tv = value(v);
  if (tv.rows != 1 || tv.cols != ta.cols) throw NnError("mul_rowvec: expected 1 x cols");
  Tensor out(ta.rows, ta.cols);
  for (int r = 0; r < ta.rows; ++r)
    for (int c = 0; c < ta.cols; ++c) out.at(r, c) = ta.at(r, c) * tv.data[c];
  const bool track = needs(a) || needs(v);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, v, id](Graph& g) {
      const Tensor& go = g.grad(id);
      const Tensor& ta2 = g.value(a);
      const Tensor& tv2 = g.value(v);
      if (g.needs(a)) {
        Tensor& ga = g.grad_buffer(a);
        for (int r = 0; r < go.rows; ++r)
          for (int c = 0; c < go.cols; ++c) ga.at(r, c) += go.at(r, c) * tv2.data[c];
      }
      if (g.needs(v)) {
        Tensor& gv = g.grad_buffer(v);
        for (int r = 0; r < go.rows; ++r)
          for (int c = 0; c < go.cols; ++c) gv.data[c] += go.at(r, c) * ta2.at(r, c);
      }
    };
  }
  return id;
}

int Graph::scale(int a, double k) {
  const Tensor& ta = value(a);
  Tensor out(ta.rows, ta.cols);
  for (int i = 0; i < out.numel(); ++i) out.data[i] = k * ta.data[i];
  const bool track = needs(a);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, k, id](Graph& g) {
      const Tensor& go = g.grad(id);
      Tensor& ga = g.grad_buffer(a);
      for (int i = 0; i < go.numel(); ++i) ga.data[i] += k * go.data[i];
    };
  }
  return id;
}

int Graph::add_const(int a, double c) {
  const Tensor& ta = value(a);
  Tensor out(ta.rows, ta.cols);
  for (int i = 0; i < out.numel(); ++i) out.data[i] = ta.data[i] + c;
  const bool track = needs(a);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, id](Graph& g) {
      const Tensor& go = g.grad(id);
      Tensor& ga = g.grad_buffer(a);
      for (int i = 0; i < go.numel(); ++i) ga.data[i] += go.data[i];
    };
  }
  return id;
}

// Unary elementwise ops share this pattern: the backward multiplies the
// upstream gradient by f'(x) recomputed from the stored forward value(s).

int Graph::relu(int a) {
  const Tensor& ta = value(a);
  Tensor out(ta.rows, ta.cols);
  for (int i = 0; i < out.numel(); ++i) out.data[i] = ta.data[i] > 0.0 ? ta.data[i] : 0.0;
  const bool track = needs(a);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, id](Graph& g) {
      const Tensor& go = g.grad(id);
      const Tensor& ta2 = g.value(a);
      Tensor& ga = g.grad_buffer(a);
      for (int i = 0; i < go.numel(); ++i)
        if (ta2.data[i] > 0.0) ga.data[i] += go.data[i];
    };
  }
  return id;
}

int Graph::tanh_(int a) {
  const Tensor& ta = value(a);
  Tensor out(ta.rows, ta.cols);
  for (int i = 0; i < out.numel(); ++i) out.data[i] = std::tanh(ta.data[i]);
  const bool track = needs(a);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, id](Graph& g) {
      const Tensor& go = g.grad(id);
      const Tensor& to = g.value(id);
      Tensor& ga = g.grad_buffer(a);
      for (int i = 0; i < go.numel(); ++i)
        ga.data[i] += go.data[i] * (1.0 - to.data[i] * to.data[i]);
    };
  }
  return id;
}

int Graph::exp_(int a) {
  const Tensor& ta = value(a);
  Tensor out(ta.rows, ta.cols);
  for (int i = 0; i < out.numel(); ++i) out.data[i] = std::exp(ta.data[i]);
  const bool track = needs(a);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, id](Graph& g) {
      const Tensor& go = g.grad(id);
      const Tensor& to = g.value(id);
      Tensor& ga = g.grad_buffer(a);
      for (int i = 0; i < go.numel(); ++i) ga.data[i] += go.data[i] * to.data[i];
    };
  }
  return id;
}

int Graph::log_(int a) {
  const Tensor& ta = value(a);
  Tensor out(ta.rows, ta.cols);
  for (int i = 0; i < out.numel(); ++i) out.data[i] = std::log(ta.data[i]);
  const bool track = needs(a);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, id](Graph& g) {
      const Tensor& go = g.grad(id);
      const Tensor& ta2 = g.value(a);
      Tensor& ga = g.grad_buffer(a);
      for (int i = 0; i < go.numel(); ++i) ga.data[i] += go.data[i] / ta2.data[i];
    };
  }
  return id;
}

int Graph::sqrt_(int a) {
  const Tensor& ta = value(a);
  Tensor out(ta.rows, ta.cols);
  for (int i = 0; i < out.numel(); ++i) out.data[i] = std::sqrt(ta.data[i]);
  const bool track = needs(a);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, id](Graph& g) {
      const Tensor& go = g.grad(id);
      const Tensor& to = g.value(id);
      Tensor& ga = g.grad_buffer(a);
      for (int i = 0; i < go.numel(); ++i) ga.data[i] += go.data[i] * 0.5 / to.data[i];
    };
  }
  return id;
}

int Graph::square(int a) {
  const Tensor& ta = value(a);
  Tensor out(ta.rows, ta.cols);
  for (int i = 0; i < out.numel(); ++i) out.data[i] = ta.data[i] * ta.data[i];
  const bool track = needs(a);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, id](Graph& g) {
      const Tensor& go = g.grad(id);
      const Tensor& ta2 = g.value(a);
      Tensor& ga = g.grad_buffer(a);
      for (int i = 0; i < go.numel(); ++i) ga.data[i] += go.data[i] * 2.0 * ta2.data[i];
    };
  }
  return id;
}

int Graph::softplus(int a) {
  const Tensor& ta = value(a);
  Tensor out(ta.rows, ta.cols);
  for (int i = 0; i < out.numel(); ++i) {
    const double x = ta.data[i];
    out.data[i] = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  const bool track = needs(a);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, id](Graph& g) {
      const Tensor& go = g.grad(id);
      const Tensor& ta2 = g.value(a);
      Tensor& ga = g.grad_buffer(a);
      for (int i = 0; i < go.numel(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-ta2.data[i]));
        ga.data[i] += go.data[i] * s;
      }
    };
  }
  return id;
}

int Graph::sum(int a) {
  const Tensor& ta = value(a);
  double acc = 0.0;
  for (double v : ta.data) acc += v;
  const bool track = needs(a);
  const int id = push(Tensor::scalar(acc), track, nullptr);
  if (track) {
    nodes_.back().back = [a, id](Graph& g) {
      const double go = g.grad(id).data[0];
      Tensor& ga = g.grad_buffer(a);
      for (double& v : ga.data) v += go;
    };
  }
  return id;
}

int Graph::mean(int a) {
  const Tensor& ta = value(a);
  double acc = 0.0;
  for (double v : ta.data) acc += v;
  const double inv = 1.0 / ta.numel();
  const bool track = needs(a);
  const int id = push(Tensor::scalar(acc * inv), track, nullptr);
  if (track) {
    nodes_.back().back = [a, id, inv](Graph& g) {
      const double go = g.grad(id).data[0] * inv;
      Tensor& ga = g.grad_buffer(a);
      for (double& v : ga.data) v += go;
    };
  }
  return id;
}

int Graph::row_sum(int a) {
  const Tensor& ta = value(a);
  Tensor out(ta.rows, 1);
  for (int r = 0; r < ta.rows; ++r) {
    double acc = 0.0;
    for (int c = 0; c < ta.cols; ++c) acc += ta.at(r, c);
    out.data[static_cast<size_t>(r)] = acc;
  }
  const bool track = needs(a);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, id](Graph& g) {
      const Tensor& go = g.grad(id);
      Tensor& ga = g.grad_buffer(a);
      for (int r = 0; r < ga.rows; ++r)
        for (int c = 0; c < ga.cols; ++c) ga.at(r, c) += go.data[static_cast<size_t>(r)];
    };
  }
  return id;
}

int Graph::row_mean(int a) {
  const int cols = value(a).cols;
  return scale(row_sum(a), 1.0 / cols);
}

int Graph::bcast_col(int a, int cols) {
  const Tensor& ta = value(a);
  if (ta.cols != 1) throw NnError("bcast_col: expected n x 1");
  Tensor out(ta.rows, cols);
  for (int r = 0; r < ta.rows; ++r)
    for (int c = 0; c < cols; ++c) out.at(r, c) = ta.data[static_cast<size_t>(r)];
  const bool track = needs(a);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, id](Graph& g) {
      const Tensor& go = g.grad(id);
      Tensor& ga = g.grad_buffer(a);
      for (int r = 0; r < go.rows; ++r) {
        double acc = 0.0;
        for (int c = 0; c < go.cols; ++c) acc += go.at(r, c);
        ga.data[static_cast<size_t>(r)] += acc;
      }
    };
  }
  return id;
}

int Graph::concat_cols(int a, int b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rows != tb.rows) throw NnError("concat_cols: row mismatch");
  Tensor out(ta.rows, ta.cols + tb.cols);
  for (int r = 0; r < ta.rows; ++r) {
    for (int c = 0; c < ta.cols; ++c) out.at(r, c) = ta.at(r, c);
    for (int c = 0; c < tb.cols; ++c) out.at(r, ta.cols + c) = tb.at(r, c);
  }
  const int acols = ta.cols;
  const bool track = needs(a) || needs(b);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, b, id, acols](Graph& g) {
      const Tensor& go = g.grad(id);
      if (g.needs(a)) {
        Tensor& ga = g.grad_buffer(a);
        for (int r = 0; r < ga.rows; ++r)
          for (int c = 0; c < ga.cols; ++c) ga.at(r, c) += go.at(r, c);
      }
      if (g.needs(b)) {
        Tensor& gb = g.grad_buffer(b);
        for (int r = 0; r < gb.rows; ++r)
          for (int c = 0; c < gb.cols; ++c) gb.at(r, c) += go.at(r, acols + c);
      }
    };
  }
  return id;
}

int Graph::slice_cols(int a, int c0, int c1) {
  const Tensor& ta = value(a);
  if (c0 < 0 || c1 > ta.cols || c0 >= c1) throw NnError("slice_cols: bad range");
  Tensor out(ta.rows, c1 - c0);
  for (int r = 0; r < ta.rows; ++r)
    for (int c = c0; c < c1; ++c) out.at(r, c - c0) = ta.at(r, c);
  const bool track = needs(a);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, id, c0](Graph& g) {
      const Tensor& go = g.grad(id);
      Tensor& ga = g.grad_buffer(a);
      for (int r = 0; r < go.rows; ++r)
        for (int c = 0; c < go.cols; ++c) ga.at(r, c0 + c) += go.at(r, c);
    };
  }
  return id;
}

int Graph::softmax_rows(int a) {
  const Tensor& ta = value(a);
  Tensor out(ta.rows, ta.cols);
  for (int r = 0; r < ta.rows; ++r) {
    double mx = ta.at(r, 0);
    for (int c = 1; c < ta.cols; ++c) mx = std::max(mx, ta.at(r, c));
    double z = 0.0;
    for (int c = 0; c < ta.cols; ++c) {
      const double e = std::exp(ta.at(r, c) - mx);
      out.at(r, c) = e;
      z += e;
    }
    for (int c = 0; c < ta.cols; ++c) out.at(r, c) /= z;
  }
  const bool track = needs(a);
  const int id = push(std::move(out), track, nullptr);
  if (track) {
    nodes_.back().back = [a, id](Graph& g) {
      // dx = p .* (dy - (dy . p))
      const Tensor& go = g.grad(id);
      const Tensor& p = g.value(id);
      Tensor& ga = g.grad_buffer(a);
      for (int r = 0; r < p.rows; ++r) {
        double dot = 0.0;
        for (int c = 0; c < p.cols; ++c) dot += go.at(r, c) * p.at(r, c);
        for (int c = 0; c < p.cols; ++c)
          ga.at(r, c) += p.at(r, c) * (go.at(r, c) - dot);
      }
    };
  }
  return id;
}

int Graph::detach(int a) { return constant(value(a)); }

// ---- composite blocks ----

int dense(Graph& g, int x, int w, int b) { return g.add_rowvec(g.matmul(x, w), b); }

int layer_norm(Graph& g, int x, int gain, int bias, double eps) {
  const int cols = g.value(x).cols;
  const int mu = g.row_mean(x);
  const int centered = g.sub(x, g.bcast_col(mu, cols));
  const int var = g.row_mean(g.square(centered));
  const int stddev = g.sqrt_(g.add_const(var, eps));
  const int normalized = g.div(centered, g.bcast_col(stddev, cols));
  return g.add_rowvec(g.mul_rowvec(normalized, gain), bias);
}

AttentionOut scaled_dot_attention(Graph& g, int q, int k, int v) {
  const int d_k = g.value(k).cols;
  const int logits = g.scale(g.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d_k)));
  const int theta = g.softmax_rows(logits);
  return {g.matmul(theta, v), theta};
}

// ---- parameters and optimizer ----

int ParamStore::add(const std::string& name, Tensor init) {
  if (index.count(name)) throw NnError("parameter already registered: " + name);
  Entry e;
  e.name = name;
  e.m = Tensor(init.rows, init.cols);
  e.v = Tensor(init.rows, init.cols);
  e.value = std::move(init);
  entries.push_back(std::move(e));
  index[name] = static_cast<int>(entries.size()) - 1;
  return static_cast<int>(entries.size()) - 1;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index.find(name);
  if (it == index.end()) throw NnError("unknown parameter: " + name);
  return entries[static_cast<size_t>(it->second)].value;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index.find(name);
  if (it == index.end()) throw NnError("unknown parameter: " + name);
  return entries[static_cast<size_t>(it->second)].value;
}

int BoundParams::id(const std::string& name) const {
  auto it = store->index.find(name);
  if (it == store->index.end()) throw NnError("unknown parameter: " + name);
  return ids[static_cast<size_t>(it->second)];
}

BoundParams bind_params(Graph& g, const ParamStore& store) {
  BoundParams bound;
  bound.store = &store;
  bound.ids.reserve(store.entries.size());
  for (const auto& e : store.entries) bound.ids.push_back(g.input(e.value, true));
  return bound;
}

bool adam_step(ParamStore& store, const std::vector<const Tensor*>& grads,
               const AdamConfig& cfg) {
  if (grads.size() != store.entries.size()) throw NnError("adam_step: gradient count mismatch");
  for (const Tensor* g : grads)
    if (g && !g->all_finite()) return false;

  store.step_count += 1;
  const double t = static_cast<double>(store.step_count);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i]) continue;
    ParamStore::Entry& e = store.entries[i];
    const Tensor& g = *grads[i];
    if (g.rows != e.value.rows || g.cols != e.value.cols)
      throw NnError("adam_step: gradient shape mismatch for " + e.name);
    for (int j = 0; j < e.value.numel(); ++j) {
      e.m.data[j] = cfg.beta1 * e.m.data[j] + (1.0 - cfg.beta1) * g.data[j];
      e.v.data[j] = cfg.beta2 * e.v.data[j] + (1.0 - cfg.beta2) * g.data[j] * g.data[j];
      const double mhat = e.m.data[j] / bc1;
      const double vhat = e.v.data[j] / bc2;
      e.value.data[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
  return true;
}

bool adam_step_from_graph(ParamStore& store, const Graph& g, const BoundParams& bound,
                          const AdamConfig& cfg) {
  std::vector<const Tensor*> grads;
  grads.reserve(bound.ids.size());
  for (int id : bound.ids) {
    const Tensor& gr = g.grad(id);
    grads.push_back(gr.numel() > 0 ? &gr : nullptr);
  }
  return adam_step(store, grads, cfg);
}

Tensor glorot_uniform(int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t(fan_in, fan_out);
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

Tensor zeros(int rows, int cols) { return Tensor(rows, cols); }

Tensor ones(int rows, int cols) {
  Tensor t(rows, cols);
  for (double& v : t.data) v = 1.0;
  return t;
}

}  // namespace ssev::nn
