#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "uniprompt/tensor.hpp"

namespace uniprompt {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const EMat> emap(const Tensor& t) {
  return Eigen::Map<const EMat>(t.data.data(), t.rows(), t.cols());
}
inline Eigen::Map<EMat> emap(Tensor& t) {
  return Eigen::Map<EMat>(t.data.data(), t.rows(), t.cols());
}

// ---- raw matrix kernels ----------------------------------------------------

inline Tensor mm_nn(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul inner extents differ: " + shape_str(a.shape) + " x " + shape_str(b.shape));
  }
  Tensor c = Tensor::zeros({a.rows(), b.cols()});
  if (!c.empty()) emap(c).noalias() = emap(a) * emap(b);
  return c;
}

// a[m x k] * transpose(b[n x k]) -> [m x n]
inline Tensor mm_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt inner extents differ: " + shape_str(a.shape) + " x " + shape_str(b.shape) + "^T");
  }
  Tensor c = Tensor::zeros({a.rows(), b.rows()});
  if (!c.empty()) emap(c).noalias() = emap(a) * emap(b).transpose();
  return c;
}

// transpose(a[k x m]) * b[k x n] -> [m x n]
inline Tensor mm_tn(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn inner extents differ: " + shape_str(a.shape) + "^T x " + shape_str(b.shape));
  }
  Tensor c = Tensor::zeros({a.cols(), b.cols()});
  if (!c.empty()) emap(c).noalias() = emap(a).transpose() * emap(b);
  return c;
}

inline void add_into(Tensor& dst, const Tensor& src) {
  if (!dst.same_shape(src)) {
    throw ShapeError("accumulate shape mismatch " + shape_str(dst.shape) + " vs " + shape_str(src.shape));
  }
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

// ---- reverse-mode tape -----------------------------------------------------

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Records ops in execution order; backward() replays them in exact reverse
// order, accumulating gradients additively for shared inputs. One tape serves
// one training step on one thread.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  Var put(Tensor value) {
    vals_.push_back(std::move(value));
    grads_.emplace_back();
    return Var{static_cast<int>(vals_.size()) - 1};
  }

  const Tensor& val(Var v) const { return vals_[v.id]; }

  // Gradient buffer, allocated to zeros on first touch.
  Tensor& grad(Var v) {
    Tensor& g = grads_[v.id];
    if (g.shape != vals_[v.id].shape) g = Tensor::zeros(vals_[v.id].shape);
    return g;
  }

  bool has_grad(Var v) const { return grads_[v.id].shape == vals_[v.id].shape; }

  void push_back_fn(std::function<void()> fn) {
    if (recording_) nodes_.push_back(std::move(fn));
  }

  void backward(Var loss) {
    if (!recording_) throw NumericError("backward() on a non-recording tape");
    const Tensor& lv = val(loss);
    if (lv.size() != 1) throw ShapeError("backward() expects a scalar loss, got " + shape_str(lv.shape));
    grad(loss).data[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  double scalar(Var v) const {
    const Tensor& t = val(v);
    if (t.size() != 1) throw ShapeError("scalar() on non-scalar " + shape_str(t.shape));
    return t.data[0];
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  std::vector<Tensor> vals_;
  std::vector<Tensor> grads_;
  std::vector<std::function<void()>> nodes_;
  bool recording_;
};

// Binds external parameter tensors to tape leaves, one leaf per tensor no
// matter how many times it is used. Gradients are read back through here.
struct Binder {
  Tape& tape;
  std::unordered_map<const Tensor*, Var> bound;

  explicit Binder(Tape& t) : tape(t) {}

  Var operator()(const Tensor& t) {
    auto it = bound.find(&t);
    if (it != bound.end()) return it->second;
    Var v = tape.put(t);
    bound.emplace(&t, v);
    return v;
  }

  bool is_bound(const Tensor& t) const { return bound.count(&t) > 0; }

  // Zero tensor if the parameter never entered the graph.
  Tensor grad_of(const Tensor& t) const {
    auto it = bound.find(&t);
    if (it == bound.end()) return Tensor::zeros(t.shape);
    return tape.grad(it->second);
  }
};

// ---- differentiable ops ----------------------------------------------------

inline Var add(Tape& tp, Var a, Var b) {
  const Tensor& av = tp.val(a);
  const Tensor& bv = tp.val(b);
  if (!av.same_shape(bv)) {
    throw ShapeError("add shape mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
  check_finite(out, "add");
  Var o = tp.put(std::move(out));
  tp.push_back_fn([&tp, a, b, o] {
    if (!tp.has_grad(o)) return;
    add_into(tp.grad(a), tp.grad(o));
    add_into(tp.grad(b), tp.grad(o));
  });
  return o;
}

// matrix [r x c] plus a row vector [1 x c] broadcast over rows
inline Var add_row(Tape& tp, Var m, Var bias) {
  const Tensor& mv = tp.val(m);
  const Tensor& bv = tp.val(bias);
  if (bv.rows() != 1 || bv.cols() != mv.cols()) {
    throw ShapeError("add_row bias " + shape_str(bv.shape) + " does not fit " + shape_str(mv.shape));
  }
  Tensor out = mv;
  const int r = mv.rows(), c = mv.cols();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.at(i, j) += bv.data[j];
  check_finite(out, "add_row");
  Var o = tp.put(std::move(out));
  tp.push_back_fn([&tp, m, bias, o, r, c] {
    if (!tp.has_grad(o)) return;
    const Tensor& g = tp.grad(o);
    add_into(tp.grad(m), g);
    Tensor& gb = tp.grad(bias);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) gb.data[j] += g.at(i, j);
  });
  return o;
}

inline Var scale(Tape& tp, Var x, double s) {
  Tensor out = tp.val(x);
  for (double& v : out.data) v *= s;
  check_finite(out, "scale");
  Var o = tp.put(std::move(out));
  tp.push_back_fn([&tp, x, o, s] {
    if (!tp.has_grad(o)) return;
    const Tensor& g = tp.grad(o);
    Tensor& gx = tp.grad(x);
    for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += s * g.data[i];
  });
  return o;
}

inline Var matmul(Tape& tp, Var a, Var b) {
  Tensor out = mm_nn(tp.val(a), tp.val(b));
  check_finite(out, "matmul");
  Var o = tp.put(std::move(out));
  tp.push_back_fn([&tp, a, b, o] {
    if (!tp.has_grad(o)) return;
    const Tensor& g = tp.grad(o);
    add_into(tp.grad(a), mm_nt(g, tp.val(b)));
    add_into(tp.grad(b), mm_tn(tp.val(a), g));
  });
  return o;
}

// a * b^T with b stored row-major [n x k]
inline Var matmul_nt(Tape& tp, Var a, Var b) {
  Tensor out = mm_nt(tp.val(a), tp.val(b));
  check_finite(out, "matmul_nt");
  Var o = tp.put(std::move(out));
  tp.push_back_fn([&tp, a, b, o] {
    if (!tp.has_grad(o)) return;
    const Tensor& g = tp.grad(o);
    add_into(tp.grad(a), mm_nn(g, tp.val(b)));
    add_into(tp.grad(b), mm_tn(g, tp.val(a)));
  });
  return o;
}

inline Var gelu(Tape& tp, Var x) {
  const Tensor& xv = tp.val(x);
  Tensor out = xv;
  constexpr double kInvSqrt2 = 0.7071067811865476;
  for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  check_finite(out, "gelu");
  Var o = tp.put(std::move(out));
  tp.push_back_fn([&tp, x, o] {
    if (!tp.has_grad(o)) return;
    const Tensor& g = tp.grad(o);
    const Tensor& xv2 = tp.val(x);
    Tensor& gx = tp.grad(x);
    constexpr double kInvSqrt2Pi = 0.3989422804014327;
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      const double v = xv2.data[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * 0.7071067811865476));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      gx.data[i] += g.data[i] * (cdf + v * pdf);
    }
  });
  return o;
}

// Row-wise softmax with max-subtraction. key_mask (optional, size = cols,
// true = excluded) zeroes masked columns; each row must keep at least one
// unmasked column.
inline Var softmax_rows(Tape& tp, Var x, const std::vector<char>* key_mask = nullptr) {
  const Tensor& xv = tp.val(x);
  const int r = xv.rows(), c = xv.cols();
  if (c < 1) throw ShapeError("softmax on empty row, shape " + shape_str(xv.shape));
  if (key_mask && static_cast<int>(key_mask->size()) != c) {
    throw ShapeError("softmax mask length " + std::to_string(key_mask->size()) +
                     " vs width " + std::to_string(c));
  }
  Tensor out = Tensor::zeros({r, c});
  for (int i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j) {
      if (key_mask && (*key_mask)[j]) continue;
      mx = std::max(mx, xv.at(i, j));
    }
    if (!std::isfinite(mx)) throw NumericError("softmax row with every column masked");
    double sum = 0.0;
    for (int j = 0; j < c; ++j) {
      if (key_mask && (*key_mask)[j]) continue;
      const double e = std::exp(xv.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < c; ++j) out.at(i, j) /= sum;
  }
  check_finite(out, "softmax");
  Var o = tp.put(std::move(out));
  tp.push_back_fn([&tp, x, o, r, c] {
    if (!tp.has_grad(o)) return;
    const Tensor& g = tp.grad(o);
    const Tensor& p = tp.val(o);
    Tensor& gx = tp.grad(x);
    for (int i = 0; i < r; ++i) {
      double dot = 0.0;
      for (int j = 0; j < c; ++j) dot += p.at(i, j) * g.at(i, j);
      for (int j = 0; j < c; ++j) gx.at(i, j) += p.at(i, j) * (g.at(i, j) - dot);
    }
  });
  return o;
}

// Last-axis layer norm over rows, population variance, then affine.
inline Var layer_norm(Tape& tp, Var x, Var gain, Var bias, double eps = 1e-5) {
  const Tensor& xv = tp.val(x);
  const Tensor& gv = tp.val(gain);
  const Tensor& bv = tp.val(bias);
  const int r = xv.rows(), d = xv.cols();
  if (d < 1) throw ShapeError("layer_norm on zero-width input");
  if (eps <= 0.0) throw NumericError("layer_norm eps must be positive");
  if (gv.rows() != 1 || gv.cols() != d || bv.rows() != 1 || bv.cols() != d) {
    throw ShapeError("layer_norm gain/bias " + shape_str(gv.shape) + "/" + shape_str(bv.shape) +
                     " do not match width " + std::to_string(d));
  }
  Tensor xhat = Tensor::zeros({r, d});
  Tensor inv_std = Tensor::zeros({r, 1});
  Tensor out = Tensor::zeros({r, d});
  for (int i = 0; i < r; ++i) {
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += xv.at(i, j);
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = xv.at(i, j) - mean;
      var += c * c;
    }
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std.at(i, 0) = is;
    for (int j = 0; j < d; ++j) {
      const double xh = (xv.at(i, j) - mean) * is;
      xhat.at(i, j) = xh;
      out.at(i, j) = gv.data[j] * xh + bv.data[j];
    }
  }
  check_finite(out, "layer_norm");
  Var o = tp.put(std::move(out));
  tp.push_back_fn([&tp, x, gain, bias, o, xhat, inv_std, r, d] {
    if (!tp.has_grad(o)) return;
    const Tensor& g = tp.grad(o);
    const Tensor& gv2 = tp.val(gain);
    Tensor& gx = tp.grad(x);
    Tensor& gg = tp.grad(gain);
    Tensor& gb = tp.grad(bias);
    for (int i = 0; i < r; ++i) {
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (int j = 0; j < d; ++j) {
        const double dxh = g.at(i, j) * gv2.data[j];
        sum_dxhat += dxh;
        sum_dxhat_xhat += dxh * xhat.at(i, j);
        gg.data[j] += g.at(i, j) * xhat.at(i, j);
        gb.data[j] += g.at(i, j);
      }
      const double is = inv_std.at(i, 0);
      for (int j = 0; j < d; ++j) {
        const double dxh = g.at(i, j) * gv2.data[j];
        gx.at(i, j) += is * (dxh - sum_dxhat / d - xhat.at(i, j) * sum_dxhat_xhat / d);
      }
    }
  });
  return o;
}

// Rows of a table selected by index; duplicates accumulate in backward.
inline Var gather_rows(Tape& tp, Var table, const std::vector<int>& ids) {
  const Tensor& tv = tp.val(table);
  const int n = static_cast<int>(ids.size());
  const int d = tv.cols();
  for (int id : ids) {
    if (id < 0 || id >= tv.rows()) {
      throw ShapeError("gather_rows index " + std::to_string(id) + " out of range [0," +
                       std::to_string(tv.rows()) + ")");
    }
  }
  Tensor out = Tensor::zeros({n, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) = tv.at(ids[i], j);
  Var o = tp.put(std::move(out));
  tp.push_back_fn([&tp, table, o, ids, n, d] {
    if (!tp.has_grad(o)) return;
    const Tensor& g = tp.grad(o);
    Tensor& gt = tp.grad(table);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) gt.at(ids[i], j) += g.at(i, j);
  });
  return o;
}

// Entries of a 1xN row selected by index -> 1xK.
inline Var gather_entries(Tape& tp, Var rowvec, const std::vector<int>& ids) {
  const Tensor& rv = tp.val(rowvec);
  if (rv.rows() != 1) throw ShapeError("gather_entries expects a row vector, got " + shape_str(rv.shape));
  const int k = static_cast<int>(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= rv.cols()) {
      throw ShapeError("gather_entries index " + std::to_string(id) + " out of range [0," +
                       std::to_string(rv.cols()) + ")");
    }
  }
  Tensor out = Tensor::zeros({1, k});
  for (int i = 0; i < k; ++i) out.data[i] = rv.data[ids[i]];
  Var o = tp.put(std::move(out));
  tp.push_back_fn([&tp, rowvec, o, ids, k] {
    if (!tp.has_grad(o)) return;
    const Tensor& g = tp.grad(o);
    Tensor& gr = tp.grad(rowvec);
    for (int i = 0; i < k; ++i) gr.data[ids[i]] += g.data[i];
  });
  return o;
}

inline Var concat_rows(Tape& tp, Var a, Var b) {
  const Tensor& av = tp.val(a);
  const Tensor& bv = tp.val(b);
  if (av.cols() != bv.cols()) {
    throw ShapeError("concat_rows width mismatch " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
  }
  const int ra = av.rows(), rb = bv.rows(), c = av.cols();
  Tensor out = Tensor::zeros({ra + rb, c});
  std::copy(av.data.begin(), av.data.end(), out.data.begin());
  std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + av.data.size());
  Var o = tp.put(std::move(out));
  tp.push_back_fn([&tp, a, b, o, ra, rb, c] {
    if (!tp.has_grad(o)) return;
    const Tensor& g = tp.grad(o);
    Tensor& ga = tp.grad(a);
    Tensor& gb = tp.grad(b);
    for (int i = 0; i < ra; ++i)
      for (int j = 0; j < c; ++j) ga.at(i, j) += g.at(i, j);
    for (int i = 0; i < rb; ++i)
      for (int j = 0; j < c; ++j) gb.at(i, j) += g.at(ra + i, j);
  });
  return o;
}

inline Var concat_cols(Tape& tp, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols with no parts");
  const int r = tp.val(parts[0]).rows();
  int total = 0;
  for (Var p : parts) {
    if (tp.val(p).rows() != r) throw ShapeError("concat_cols row mismatch");
    total += tp.val(p).cols();
  }
  Tensor out = Tensor::zeros({r, total});
  int off = 0;
  for (Var p : parts) {
    const Tensor& pv = tp.val(p);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < pv.cols(); ++j) out.at(i, off + j) = pv.at(i, j);
    off += pv.cols();
  }
  Var o = tp.put(std::move(out));
  tp.push_back_fn([&tp, parts, o, r] {
    if (!tp.has_grad(o)) return;
    const Tensor& g = tp.grad(o);
    int off2 = 0;
    for (Var p : parts) {
      Tensor& gp = tp.grad(p);
      const int c = gp.cols();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) gp.at(i, j) += g.at(i, off2 + j);
      off2 += c;
    }
  });
  return o;
}

inline Var slice_rows(Tape& tp, Var x, int lo, int hi) {
  const Tensor& xv = tp.val(x);
  if (lo < 0 || hi > xv.rows() || lo >= hi) {
    throw ShapeError("slice_rows [" + std::to_string(lo) + "," + std::to_string(hi) + ") of " +
                     shape_str(xv.shape));
  }
  const int c = xv.cols();
  Tensor out = Tensor::zeros({hi - lo, c});
  for (int i = lo; i < hi; ++i)
    for (int j = 0; j < c; ++j) out.at(i - lo, j) = xv.at(i, j);
  Var o = tp.put(std::move(out));
  tp.push_back_fn([&tp, x, o, lo, hi, c] {
    if (!tp.has_grad(o)) return;
    const Tensor& g = tp.grad(o);
    Tensor& gx = tp.grad(x);
    for (int i = lo; i < hi; ++i)
      for (int j = 0; j < c; ++j) gx.at(i, j) += g.at(i - lo, j);
  });
  return o;
}

inline Var slice_cols(Tape& tp, Var x, int lo, int hi) {
  const Tensor& xv = tp.val(x);
  if (lo < 0 || hi > xv.cols() || lo >= hi) {
    throw ShapeError("slice_cols [" + std::to_string(lo) + "," + std::to_string(hi) + ") of " +
                     shape_str(xv.shape));
  }
  const int r = xv.rows();
  Tensor out = Tensor::zeros({r, hi - lo});
  for (int i = 0; i < r; ++i)
    for (int j = lo; j < hi; ++j) out.at(i, j - lo) = xv.at(i, j);
  Var o = tp.put(std::move(out));
  tp.push_back_fn([&tp, x, o, lo, hi, r] {
    if (!tp.has_grad(o)) return;
    const Tensor& g = tp.grad(o);
    Tensor& gx = tp.grad(x);
    for (int i = 0; i < r; ++i)
      for (int j = lo; j < hi; ++j) gx.at(i, j) += g.at(i, j - lo);
  });
  return o;
}

inline Var mean_rows(Tape& tp, Var x) {
  const Tensor& xv = tp.val(x);
  const int r = xv.rows(), c = xv.cols();
  if (r < 1) throw ShapeError("mean_rows on empty input");
  Tensor out = Tensor::zeros({1, c});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out.data[j] += xv.at(i, j) / r;
  Var o = tp.put(std::move(out));
  tp.push_back_fn([&tp, x, o, r, c] {
    if (!tp.has_grad(o)) return;
    const Tensor& g = tp.grad(o);
    Tensor& gx = tp.grad(x);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) gx.at(i, j) += g.data[j] / r;
  });
  return o;
}

// Inverted dropout; identity when rate == 0. The mask is drawn from `rng` at
// forward time and reused in backward.
inline Var dropout(Tape& tp, Var x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw NumericError("dropout rate must be < 1");
  const Tensor& xv = tp.val(x);
  Tensor mask = Tensor::zeros(xv.shape);
  const double keep = 1.0 - rate;
  for (double& m : mask.data) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
  Tensor out = xv;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask.data[i];
  Var o = tp.put(std::move(out));
  tp.push_back_fn([&tp, x, o, mask] {
    if (!tp.has_grad(o)) return;
    const Tensor& g = tp.grad(o);
    Tensor& gx = tp.grad(x);
    for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i] * mask.data[i];
  });
  return o;
}

// -log softmax(logits)[gold] for a 1xC logits row; gradient is
// softmax(logits) - one_hot(gold).
inline Var cross_entropy(Tape& tp, Var logits, int gold) {
  const Tensor& lv = tp.val(logits);
  if (lv.rows() != 1 || lv.cols() < 1) {
    throw ShapeError("cross_entropy expects a 1xC logits row, got " + shape_str(lv.shape));
  }
  const int c = lv.cols();
  if (gold < 0 || gold >= c) {
    throw ShapeError("cross_entropy gold index " + std::to_string(gold) + " out of range [0," +
                     std::to_string(c) + ")");
  }
  double mx = lv.data[0];
  for (int j = 1; j < c; ++j) mx = std::max(mx, lv.data[j]);
  double sum = 0.0;
  for (int j = 0; j < c; ++j) sum += std::exp(lv.data[j] - mx);
  const double lse = mx + std::log(sum);
  Tensor out({1, 1}, {lse - lv.data[gold]});
  check_finite(out, "cross_entropy");
  Var o = tp.put(std::move(out));
  tp.push_back_fn([&tp, logits, o, gold, mx, sum, c] {
    if (!tp.has_grad(o)) return;
    const double gs = tp.grad(o).data[0];
    const Tensor& lv2 = tp.val(logits);
    Tensor& gl = tp.grad(logits);
    for (int j = 0; j < c; ++j) {
      const double p = std::exp(lv2.data[j] - mx) / sum;
      gl.data[j] += gs * (p - (j == gold ? 1.0 : 0.0));
    }
  });
  return o;
}

// ---- non-tape convenience wrappers (numeric_core public surface) -----------

inline Tensor matmul(const Tensor& a, const Tensor& b) { return mm_nn(a, b); }

inline Tensor softmax(const Tensor& v) {
  Tape tp(false);
  return tp.val(softmax_rows(tp, tp.put(v)));
}

inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  Tape tp(false);
  return tp.val(layer_norm(tp, tp.put(x), tp.put(gain), tp.put(bias), eps));
}

inline double cross_entropy(const Tensor& logits, int gold) {
  Tape tp(false);
  return tp.scalar(cross_entropy(tp, tp.put(logits), gold));
}

}  // namespace uniprompt
