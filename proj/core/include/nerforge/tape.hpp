#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nerforge/rng.hpp"
#include "nerforge/tensor.hpp"

namespace nerforge::ad {

namespace detail {

template <typename T>
inline void axpy(T a, const T* x, T* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
inline T dot(const T* a, const T* b, int n) {
  T acc = T(0);
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
inline T sigmoid(T x) {
  if (x >= T(0)) {
    T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace detail

template <typename T>
class Tape;

// Lightweight handle to a node on a tape.
template <typename T>
struct Value {
  Tape<T>* tape = nullptr;
  int32_t id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Shape& shape() const;
  std::span<const T> data() const;
  std::span<const T> grad() const;
  T scalar() const;
};

template <typename T>
struct LstmWeightRefs {
  Value<T> wx;  // [input_dim x 4*state]
  Value<T> wh;  // [state x 4*state]
  Value<T> b;   // [4*state]
};

// Dynamically recorded computation graph with reverse-mode gradients.
// Creation order is a topological order, so backward() walks the nodes
// exactly once in reverse. A tape is single-threaded; distinct tapes may
// run on distinct threads.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- graph inputs -------------------------------------------------

  Value<T> constant(std::span<const T> x, Shape s) {
    check(static_cast<int64_t>(x.size()) == s.size(), "constant: size mismatch");
    int id = new_node(s);
    std::copy(x.begin(), x.end(), nodes_[id].x.begin());
    return {this, id};
  }

  Value<T> zeros(Shape s) { return {this, new_node(s)}; }

  // Registers a trainable parameter as a leaf. Cached: repeated calls for
  // the same parameter within one tape return the same node, so its
  // gradient accumulates in one place.
  Value<T> leaf(Param<T>& p) {
    auto it = leaf_cache_.find(&p);
    if (it != leaf_cache_.end()) return {this, it->second};
    int id = new_node_external(p);
    leaf_cache_.emplace(&p, id);
    leaves_.push_back({&p, id});
    return {this, id};
  }

  // ---- ops ----------------------------------------------------------

  // y = x W + b with x either [d_in] or [n x d_in], W [d_in x d_out], b [d_out].
  Value<T> affine(Value<T> x, Value<T> w, Value<T> b) {
    const Shape& xs = shape_of(x);
    const Shape& ws = shape_of(w);
    const Shape& bs = shape_of(b);
    check(ws.rank == 2, "affine: W must be rank 2");
    check(bs.rank == 1 && bs.dim[0] == ws.dim[1], "affine: bias shape mismatch");
    const int d_in = ws.dim[0];
    const int d_out = ws.dim[1];
    int n;
    if (xs.rank == 1) {
      check(xs.dim[0] == d_in, "affine: x dim mismatch");
      n = 1;
    } else {
      check(xs.rank == 2 && xs.dim[1] == d_in, "affine: x shape mismatch");
      n = xs.dim[0];
    }
    int id = new_node(xs.rank == 1 ? Shape::vec(d_out) : Shape::mat(n, d_out));
    {
      const T* xp = data_of(x);
      const T* wp = data_of(w);
      const T* bp = data_of(b);
      T* yp = nodes_[id].x.data();
      for (int r = 0; r < n; ++r) {
        T* yr = yp + static_cast<int64_t>(r) * d_out;
        std::copy(bp, bp + d_out, yr);
        const T* xr = xp + static_cast<int64_t>(r) * d_in;
        for (int i = 0; i < d_in; ++i) {
          detail::axpy(xr[i], wp + static_cast<int64_t>(i) * d_out, yr, d_out);
        }
      }
    }
    nodes_[id].back = [this, x, w, b, id, n, d_in, d_out] {
      const T* gy = g_of(id);
      const T* xp = data_of(x);
      const T* wp = data_of(w);
      T* gx = g_mut(x);
      T* gw = g_mut(w);
      T* gb = g_mut(b);
      for (int r = 0; r < n; ++r) {
        const T* gyr = gy + static_cast<int64_t>(r) * d_out;
        const T* xr = xp + static_cast<int64_t>(r) * d_in;
        T* gxr = gx + static_cast<int64_t>(r) * d_in;
        for (int j = 0; j < d_out; ++j) gb[j] += gyr[j];
        for (int i = 0; i < d_in; ++i) {
          const T* wrow = wp + static_cast<int64_t>(i) * d_out;
          gxr[i] += detail::dot(wrow, gyr, d_out);
          detail::axpy(xr[i], gyr, gw + static_cast<int64_t>(i) * d_out, d_out);
        }
      }
    };
    return {this, id};
  }

  // Valid 1-D convolution over [L x d_c] with filters [k x d_c x f] and
  // bias [f], then max over the L-k+1 window positions per filter.
  // Gradient routes through the argmax window only; ties keep the lowest
  // position index.
  Value<T> conv1d_maxpool(Value<T> chars, Value<T> filters, Value<T> bias) {
    const Shape& cs = shape_of(chars);
    const Shape& fs = shape_of(filters);
    const Shape& bs = shape_of(bias);
    check(cs.rank == 2, "conv1d_maxpool: chars must be rank 2");
    check(fs.rank == 3, "conv1d_maxpool: filters must be rank 3");
    const int len = cs.dim[0];
    const int d_c = cs.dim[1];
    const int k = fs.dim[0];
    const int f = fs.dim[2];
    check(fs.dim[1] == d_c, "conv1d_maxpool: channel mismatch");
    check(bs.rank == 1 && bs.dim[0] == f, "conv1d_maxpool: bias shape mismatch");
    if (len < k) throw std::invalid_argument("conv1d_maxpool: sequence shorter than kernel");

    const int windows = len - k + 1;
    int id = new_node(Shape::vec(f));
    auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(f), 0);
    {
      const T* cp = data_of(chars);
      const T* fp = data_of(filters);
      const T* bp = data_of(bias);
      T* out = nodes_[id].x.data();
      std::vector<T> acc(static_cast<size_t>(f));
      bool first = true;
      for (int p = 0; p < windows; ++p) {
        std::copy(bp, bp + f, acc.begin());
        for (int a = 0; a < k; ++a) {
          const T* crow = cp + static_cast<int64_t>(p + a) * d_c;
          const T* frow = fp + static_cast<int64_t>(a) * d_c * f;
          for (int c = 0; c < d_c; ++c) {
            detail::axpy(crow[c], frow + static_cast<int64_t>(c) * f, acc.data(), f);
          }
        }
        if (first) {
          std::copy(acc.begin(), acc.end(), out);
          first = false;
        } else {
          for (int j = 0; j < f; ++j) {
            if (acc[static_cast<size_t>(j)] > out[j]) {
              out[j] = acc[static_cast<size_t>(j)];
              (*argmax)[static_cast<size_t>(j)] = p;
            }
          }
        }
      }
    }
    nodes_[id].back = [this, chars, filters, bias, id, argmax, k, d_c, f] {
      const T* gy = g_of(id);
      const T* cp = data_of(chars);
      const T* fp = data_of(filters);
      T* gc = g_mut(chars);
      T* gf = g_mut(filters);
      T* gb = g_mut(bias);
      for (int j = 0; j < f; ++j) {
        const T gj = gy[j];
        gb[j] += gj;
        const int p = (*argmax)[static_cast<size_t>(j)];
        for (int a = 0; a < k; ++a) {
          const int64_t crow = static_cast<int64_t>(p + a) * d_c;
          const int64_t frow = static_cast<int64_t>(a) * d_c * f;
          for (int c = 0; c < d_c; ++c) {
            gf[frow + static_cast<int64_t>(c) * f + j] += cp[crow + c] * gj;
            gc[crow + c] += fp[frow + static_cast<int64_t>(c) * f + j] * gj;
          }
        }
      }
    };
    return {this, id};
  }

  // One LSTM step with gates i, f, g, o packed in that order:
  //   c' = sigmoid(f) * c_prev + sigmoid(i) * tanh(g),  h' = sigmoid(o) * tanh(c')
  std::pair<Value<T>, Value<T>> lstm_step(Value<T> x, Value<T> h_prev, Value<T> c_prev,
                                          const LstmWeightRefs<T>& w) {
    const Shape& xs = shape_of(x);
    const Shape& hs = shape_of(h_prev);
    check(xs.rank == 1 && hs.rank == 1, "lstm_step: x and h must be rank 1");
    const int d = xs.dim[0];
    const int s = hs.dim[0];
    check(shape_of(c_prev) == Shape::vec(s), "lstm_step: c shape mismatch");
    check(shape_of(w.wx) == Shape::mat(d, 4 * s), "lstm_step: wx shape mismatch");
    check(shape_of(w.wh) == Shape::mat(s, 4 * s), "lstm_step: wh shape mismatch");
    check(shape_of(w.b) == Shape::vec(4 * s), "lstm_step: bias shape mismatch");

    struct Aux {
      std::vector<T> gates;  // post-activation [4s]: i, f, g, o
      std::vector<T> tc;     // tanh(c_new) [s]
      std::vector<T> gh;     // dL/dh, stashed by the h node for the c node
    };
    auto aux = std::make_shared<Aux>();
    aux->gates.resize(static_cast<size_t>(4 * s));
    aux->tc.resize(static_cast<size_t>(s));
    aux->gh.assign(static_cast<size_t>(s), T(0));

    int c_id = new_node(Shape::vec(s));
    int h_id = new_node(Shape::vec(s));
    {
      std::vector<T> pre(static_cast<size_t>(4 * s));
      const T* bp = data_of(w.b);
      std::copy(bp, bp + 4 * s, pre.begin());
      const T* xp = data_of(x);
      const T* wxp = data_of(w.wx);
      for (int i = 0; i < d; ++i) {
        detail::axpy(xp[i], wxp + static_cast<int64_t>(i) * 4 * s, pre.data(), 4 * s);
      }
      const T* hp = data_of(h_prev);
      const T* whp = data_of(w.wh);
      for (int j = 0; j < s; ++j) {
        detail::axpy(hp[j], whp + static_cast<int64_t>(j) * 4 * s, pre.data(), 4 * s);
      }
      T* gates = aux->gates.data();
      for (int j = 0; j < s; ++j) gates[j] = detail::sigmoid(pre[static_cast<size_t>(j)]);
      for (int j = s; j < 2 * s; ++j) gates[j] = detail::sigmoid(pre[static_cast<size_t>(j)]);
      for (int j = 2 * s; j < 3 * s; ++j) gates[j] = std::tanh(pre[static_cast<size_t>(j)]);
      for (int j = 3 * s; j < 4 * s; ++j) gates[j] = detail::sigmoid(pre[static_cast<size_t>(j)]);

      const T* cp = data_of(c_prev);
      T* c_new = nodes_[c_id].x.data();
      T* h_new = nodes_[h_id].x.data();
      for (int j = 0; j < s; ++j) {
        c_new[j] = gates[s + j] * cp[j] + gates[j] * gates[2 * s + j];
        aux->tc[static_cast<size_t>(j)] = std::tanh(c_new[j]);
        h_new[j] = gates[3 * s + j] * aux->tc[static_cast<size_t>(j)];
      }
    }

    // h backward runs first (created later): stash dL/dh and push the
    // tanh(c') path into the c node's gradient.
    nodes_[h_id].back = [this, h_id, c_id, aux, s] {
      const T* gh = g_of(h_id);
      T* gc = g_mut_id(c_id);
      const T* gates = aux->gates.data();
      const T* tc = aux->tc.data();
      for (int j = 0; j < s; ++j) {
        aux->gh[static_cast<size_t>(j)] = gh[j];
        gc[j] += gh[j] * gates[3 * s + j] * (T(1) - tc[j] * tc[j]);
      }
    };

    nodes_[c_id].back = [this, c_id, aux, x, h_prev, c_prev, w, d, s] {
      const T* gc = g_of(c_id);
      const T* gates = aux->gates.data();
      const T* tc = aux->tc.data();
      const T* cp = data_of(c_prev);
      std::vector<T> gpre(static_cast<size_t>(4 * s));
      for (int j = 0; j < s; ++j) {
        const T gi = gc[j] * gates[2 * s + j];
        const T gf = gc[j] * cp[j];
        const T gg = gc[j] * gates[j];
        const T go = aux->gh[static_cast<size_t>(j)] * tc[j];
        gpre[static_cast<size_t>(j)] = gi * gates[j] * (T(1) - gates[j]);
        gpre[static_cast<size_t>(s + j)] = gf * gates[s + j] * (T(1) - gates[s + j]);
        gpre[static_cast<size_t>(2 * s + j)] = gg * (T(1) - gates[2 * s + j] * gates[2 * s + j]);
        gpre[static_cast<size_t>(3 * s + j)] = go * gates[3 * s + j] * (T(1) - gates[3 * s + j]);
      }
      T* gcp = g_mut(c_prev);
      for (int j = 0; j < s; ++j) gcp[j] += gc[j] * gates[s + j];

      const T* xp = data_of(x);
      const T* hp = data_of(h_prev);
      const T* wxp = data_of(w.wx);
      const T* whp = data_of(w.wh);
      T* gx = g_mut(x);
      T* ghp = g_mut(h_prev);
      T* gwx = g_mut(w.wx);
      T* gwh = g_mut(w.wh);
      T* gb = g_mut(w.b);
      for (int j = 0; j < 4 * s; ++j) gb[j] += gpre[static_cast<size_t>(j)];
      for (int i = 0; i < d; ++i) {
        const T* wrow = wxp + static_cast<int64_t>(i) * 4 * s;
        gx[i] += detail::dot(wrow, gpre.data(), 4 * s);
        detail::axpy(xp[i], gpre.data(), gwx + static_cast<int64_t>(i) * 4 * s, 4 * s);
      }
      for (int j = 0; j < s; ++j) {
        const T* wrow = whp + static_cast<int64_t>(j) * 4 * s;
        ghp[j] += detail::dot(wrow, gpre.data(), 4 * s);
        detail::axpy(hp[j], gpre.data(), gwh + static_cast<int64_t>(j) * 4 * s, 4 * s);
      }
    };

    return {Value<T>{this, h_id}, Value<T>{this, c_id}};
  }

  // Inverted dropout: keep with probability 1-rate and scale by
  // 1/(1-rate) while training; identity at inference.
  Value<T> dropout(Value<T> x, double rate, bool training, Rng* rng) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
    const Shape& s = shape_of(x);
    const int64_t n = s.size();
    int id = new_node(s);
    if (!training || rate == 0.0) {
      std::copy(data_of(x), data_of(x) + n, nodes_[id].x.begin());
      nodes_[id].back = [this, x, id, n] {
        const T* gy = g_of(id);
        T* gx = g_mut(x);
        for (int64_t i = 0; i < n; ++i) gx[i] += gy[i];
      };
      return {this, id};
    }
    auto mask = std::make_shared<std::vector<T>>(static_cast<size_t>(n));
    const T scale = T(1.0 / (1.0 - rate));
    for (int64_t i = 0; i < n; ++i) {
      (*mask)[static_cast<size_t>(i)] = rng->bernoulli(1.0 - rate) ? scale : T(0);
    }
    const T* xp = data_of(x);
    T* yp = nodes_[id].x.data();
    for (int64_t i = 0; i < n; ++i) yp[i] = xp[i] * (*mask)[static_cast<size_t>(i)];
    nodes_[id].back = [this, x, id, mask, n] {
      const T* gy = g_of(id);
      T* gx = g_mut(x);
      for (int64_t i = 0; i < n; ++i) gx[i] += gy[i] * (*mask)[static_cast<size_t>(i)];
    };
    return {this, id};
  }

  Value<T> add(Value<T> a, Value<T> b) {
    check(shape_of(a) == shape_of(b), "add: shape mismatch");
    const Shape& s = shape_of(a);
    const int64_t n = s.size();
    int id = new_node(s);
    const T* ap = data_of(a);
    const T* bp = data_of(b);
    T* yp = nodes_[id].x.data();
    for (int64_t i = 0; i < n; ++i) yp[i] = ap[i] + bp[i];
    nodes_[id].back = [this, a, b, id, n] {
      const T* gy = g_of(id);
      T* ga = g_mut(a);
      T* gb = g_mut(b);
      for (int64_t i = 0; i < n; ++i) {
        ga[i] += gy[i];
        gb[i] += gy[i];
      }
    };
    return {this, id};
  }

  // Numerically stable log-softmax over a rank-1 vector.
  Value<T> log_softmax(Value<T> z) {
    const Shape& s = shape_of(z);
    check(s.rank == 1 && s.dim[0] >= 1, "log_softmax: need rank-1, K >= 1");
    const int k = s.dim[0];
    int id = new_node(s);
    const T* zp = data_of(z);
    T* yp = nodes_[id].x.data();
    T zmax = zp[0];
    for (int i = 1; i < k; ++i) zmax = std::max(zmax, zp[i]);
    T sum = T(0);
    for (int i = 0; i < k; ++i) sum += std::exp(zp[i] - zmax);
    const T log_z = zmax + std::log(sum);
    for (int i = 0; i < k; ++i) yp[i] = zp[i] - log_z;
    nodes_[id].back = [this, z, id, k] {
      const T* gy = g_of(id);
      const T* yp2 = data_of_id(id);
      T* gz = g_mut(z);
      T gsum = T(0);
      for (int i = 0; i < k; ++i) gsum += gy[i];
      for (int i = 0; i < k; ++i) gz[i] += gy[i] - std::exp(yp2[i]) * gsum;
    };
    return {this, id};
  }

  // Gathers rows of a [V x d] matrix; gradients scatter-add back.
  Value<T> gather_rows(Value<T> m, std::vector<int> indices) {
    const Shape& ms = shape_of(m);
    check(ms.rank == 2, "gather_rows: need rank-2 source");
    check(!indices.empty(), "gather_rows: empty index list");
    const int d = ms.dim[1];
    for (int ix : indices) check(ix >= 0 && ix < ms.dim[0], "gather_rows: index out of range");
    const int n = static_cast<int>(indices.size());
    int id = new_node(Shape::mat(n, d));
    const T* mp = data_of(m);
    T* yp = nodes_[id].x.data();
    for (int r = 0; r < n; ++r) {
      const T* src = mp + static_cast<int64_t>(indices[static_cast<size_t>(r)]) * d;
      std::copy(src, src + d, yp + static_cast<int64_t>(r) * d);
    }
    auto idx = std::make_shared<std::vector<int>>(std::move(indices));
    nodes_[id].back = [this, m, id, idx, d] {
      const T* gy = g_of(id);
      T* gm = g_mut(m);
      for (size_t r = 0; r < idx->size(); ++r) {
        detail::axpy(T(1), gy + static_cast<int64_t>(r) * d,
                     gm + static_cast<int64_t>((*idx)[r]) * d, d);
      }
    };
    return {this, id};
  }

  // Single row of a [V x d] matrix as a rank-1 vector.
  Value<T> row(Value<T> m, int index) {
    const Shape& ms = shape_of(m);
    check(ms.rank == 2, "row: need rank-2 source");
    check(index >= 0 && index < ms.dim[0], "row: index out of range");
    const int d = ms.dim[1];
    int id = new_node(Shape::vec(d));
    const T* src = data_of(m) + static_cast<int64_t>(index) * d;
    std::copy(src, src + d, nodes_[id].x.begin());
    nodes_[id].back = [this, m, id, index, d] {
      detail::axpy(T(1), g_of(id), g_mut(m) + static_cast<int64_t>(index) * d, d);
    };
    return {this, id};
  }

  // Concatenation of rank-1 vectors.
  Value<T> concat(const std::vector<Value<T>>& parts) {
    check(!parts.empty(), "concat: no inputs");
    int total = 0;
    for (const auto& p : parts) {
      check(shape_of(p).rank == 1, "concat: inputs must be rank 1");
      total += shape_of(p).dim[0];
    }
    int id = new_node(Shape::vec(total));
    T* yp = nodes_[id].x.data();
    int off = 0;
    for (const auto& p : parts) {
      const int n = shape_of(p).dim[0];
      std::copy(data_of(p), data_of(p) + n, yp + off);
      off += n;
    }
    auto parts_copy = std::make_shared<std::vector<Value<T>>>(parts);
    nodes_[id].back = [this, id, parts_copy] {
      const T* gy = g_of(id);
      int off2 = 0;
      for (const auto& p : *parts_copy) {
        const int n = shape_of(p).dim[0];
        detail::axpy(T(1), gy + off2, g_mut(p), n);
        off2 += n;
      }
    };
    return {this, id};
  }

  // Stacks rank-1 vectors of equal length into a [n x K] matrix.
  Value<T> stack_rows(const std::vector<Value<T>>& rows) {
    check(!rows.empty(), "stack_rows: no inputs");
    const int k = shape_of(rows.front()).dim[0];
    for (const auto& r : rows) {
      check(shape_of(r) == Shape::vec(k), "stack_rows: row shape mismatch");
    }
    const int n = static_cast<int>(rows.size());
    int id = new_node(Shape::mat(n, k));
    T* yp = nodes_[id].x.data();
    for (int r = 0; r < n; ++r) {
      std::copy(data_of(rows[static_cast<size_t>(r)]), data_of(rows[static_cast<size_t>(r)]) + k,
                yp + static_cast<int64_t>(r) * k);
    }
    auto rows_copy = std::make_shared<std::vector<Value<T>>>(rows);
    nodes_[id].back = [this, id, rows_copy, k] {
      const T* gy = g_of(id);
      for (size_t r = 0; r < rows_copy->size(); ++r) {
        detail::axpy(T(1), gy + static_cast<int64_t>(r) * k, g_mut((*rows_copy)[r]), k);
      }
    };
    return {this, id};
  }

  // Vertical concatenation of [n_i x K] matrices.
  Value<T> vstack(const std::vector<Value<T>>& mats) {
    check(!mats.empty(), "vstack: no inputs");
    const int k = shape_of(mats.front()).dim[1];
    int total = 0;
    for (const auto& m : mats) {
      check(shape_of(m).rank == 2 && shape_of(m).dim[1] == k, "vstack: shape mismatch");
      total += shape_of(m).dim[0];
    }
    int id = new_node(Shape::mat(total, k));
    T* yp = nodes_[id].x.data();
    int64_t off = 0;
    for (const auto& m : mats) {
      const int64_t n = shape_of(m).size();
      std::copy(data_of(m), data_of(m) + n, yp + off);
      off += n;
    }
    auto mats_copy = std::make_shared<std::vector<Value<T>>>(mats);
    nodes_[id].back = [this, id, mats_copy] {
      const T* gy = g_of(id);
      int64_t off2 = 0;
      for (const auto& m : *mats_copy) {
        const int64_t n = shape_of(m).size();
        detail::axpy(T(1), gy + off2, g_mut(m), static_cast<int>(n));
        off2 += n;
      }
    };
    return {this, id};
  }

  // Mean negative log-likelihood over unmasked positions:
  //   -(1/|mask|) * sum_{t in mask} logp[t, gold[t]]
  Value<T> masked_nll(Value<T> logp, std::vector<int> gold, std::vector<uint8_t> mask) {
    const Shape& s = shape_of(logp);
    check(s.rank == 2, "masked_nll: logp must be rank 2");
    const int n = s.dim[0];
    const int k = s.dim[1];
    check(static_cast<int>(gold.size()) == n, "masked_nll: gold length mismatch");
    check(static_cast<int>(mask.size()) == n, "masked_nll: mask length mismatch");
    int count = 0;
    for (int t = 0; t < n; ++t) {
      if (!mask[static_cast<size_t>(t)]) continue;
      check(gold[static_cast<size_t>(t)] >= 0 && gold[static_cast<size_t>(t)] < k,
            "masked_nll: gold index out of range");
      ++count;
    }
    if (count == 0) throw std::invalid_argument("masked_nll: empty mask");

    int id = new_node(Shape::scalar());
    const T* lp = data_of(logp);
    T acc = T(0);
    for (int t = 0; t < n; ++t) {
      if (mask[static_cast<size_t>(t)]) {
        acc += lp[static_cast<int64_t>(t) * k + gold[static_cast<size_t>(t)]];
      }
    }
    nodes_[id].x[0] = -acc / static_cast<T>(count);

    auto gold_p = std::make_shared<std::vector<int>>(std::move(gold));
    auto mask_p = std::make_shared<std::vector<uint8_t>>(std::move(mask));
    nodes_[id].back = [this, logp, id, gold_p, mask_p, n, k, count] {
      const T gy = g_of(id)[0];
      T* gl = g_mut(logp);
      const T w = -gy / static_cast<T>(count);
      for (int t = 0; t < n; ++t) {
        if ((*mask_p)[static_cast<size_t>(t)]) {
          gl[static_cast<int64_t>(t) * k + (*gold_p)[static_cast<size_t>(t)]] += w;
        }
      }
    };
    return {this, id};
  }

  // ---- reverse pass ---------------------------------------------------

  // Seeds d(loss)/d(loss) = 1 and walks the tape once in reverse creation
  // order, then adds leaf gradients into their parameters. May be called
  // once per tape.
  void backward(Value<T> loss) {
    check(loss.tape == this, "backward: value from another tape");
    check(shape_of(loss).rank == 0, "backward: loss must be scalar");
    check(!backward_done_, "backward: already ran on this tape");
    backward_done_ = true;
    nodes_[loss.id].g[0] = T(1);
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      if (nodes_[static_cast<size_t>(i)].back) nodes_[static_cast<size_t>(i)].back();
    }
    for (auto& [param, id] : leaves_) {
      auto& node = nodes_[static_cast<size_t>(id)];
      T* dst = param->grad.v.data();
      for (int64_t i = 0; i < node.shape.size(); ++i) dst[i] += node.g[static_cast<size_t>(i)];
    }
  }

  void reset() {
    nodes_.clear();
    leaf_cache_.clear();
    leaves_.clear();
    backward_done_ = false;
  }

  size_t node_count() const { return nodes_.size(); }

  // ---- access (used by Value and op closures) ------------------------

  const Shape& shape_of(Value<T> v) const { return nodes_[static_cast<size_t>(v.id)].shape; }
  const T* data_of(Value<T> v) const { return nodes_[static_cast<size_t>(v.id)].xp; }
  const T* data_of_id(int id) const { return nodes_[static_cast<size_t>(id)].xp; }
  const T* g_of(int id) const { return nodes_[static_cast<size_t>(id)].g.data(); }
  const T* g_of(Value<T> v) const { return g_of(v.id); }
  T* g_mut(Value<T> v) { return nodes_[static_cast<size_t>(v.id)].g.data(); }
  T* g_mut_id(int id) { return nodes_[static_cast<size_t>(id)].g.data(); }

 private:
  struct Node {
    Shape shape;
    std::vector<T> x;        // owned activations; empty for parameter leaves
    const T* xp = nullptr;   // data pointer (owned buffer or parameter storage)
    std::vector<T> g;        // gradient, zero-initialized
    std::function<void()> back;
  };

  static void check(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
  }

  int new_node(Shape s) {
    Node n;
    n.shape = s;
    n.x.assign(static_cast<size_t>(s.size()), T(0));
    n.g.assign(static_cast<size_t>(s.size()), T(0));
    n.xp = n.x.data();
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int new_node_external(Param<T>& p) {
    Node n;
    n.shape = p.value.shape;
    n.xp = p.value.v.data();
    n.g.assign(p.value.v.size(), T(0));
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Param<T>*, int> leaf_cache_;
  std::vector<std::pair<Param<T>*, int>> leaves_;
  bool backward_done_ = false;
};

template <typename T>
const Shape& Value<T>::shape() const { return tape->shape_of(*this); }

template <typename T>
std::span<const T> Value<T>::data() const {
  return {tape->data_of(*this), static_cast<size_t>(tape->shape_of(*this).size())};
}

template <typename T>
std::span<const T> Value<T>::grad() const {
  return {tape->g_of(*this), static_cast<size_t>(tape->shape_of(*this).size())};
}

template <typename T>
T Value<T>::scalar() const { return tape->data_of(*this)[0]; }

// Runs a forward and a backward LSTM scan over the sequence with zero
// initial states. The two directions share no weights.
template <typename T>
struct BiLstmOut {
  std::vector<Value<T>> fwd;  // fwd[t]: left-to-right state at t
  std::vector<Value<T>> bwd;  // bwd[t]: right-to-left state at t
};

template <typename T>
BiLstmOut<T> bilstm(Tape<T>& tape, const std::vector<Value<T>>& xs,
                    const LstmWeightRefs<T>& fw, const LstmWeightRefs<T>& bw, int state_size) {
  if (xs.empty()) throw std::invalid_argument("bilstm: empty sequence");
  const size_t n = xs.size();
  BiLstmOut<T> out;
  out.fwd.resize(n);
  out.bwd.resize(n);

  Value<T> h = tape.zeros(Shape::vec(state_size));
  Value<T> c = tape.zeros(Shape::vec(state_size));
  for (size_t t = 0; t < n; ++t) {
    auto [h2, c2] = tape.lstm_step(xs[t], h, c, fw);
    out.fwd[t] = h2;
    h = h2;
    c = c2;
  }

  h = tape.zeros(Shape::vec(state_size));
  c = tape.zeros(Shape::vec(state_size));
  for (size_t t = n; t-- > 0;) {
    auto [h2, c2] = tape.lstm_step(xs[t], h, c, bw);
    out.bwd[t] = h2;
    h = h2;
    c = c2;
  }
  return out;
}

}  // namespace nerforge::ad
