#include "arc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace arc {

namespace {

using Store = std::shared_ptr<TensorData>;

bool grad_path(const Tensor& t) { return active_tape() && t.requires_grad(); }

// Splits a shape into (outer, axis_len, inner) strides around one axis.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, int axis, const char* op) {
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw dim_error(std::string(op) + ": axis " + std::to_string(axis) +
                    " out of range for shape " + shape_str(s));
  }
  AxisSplit sp;
  for (int i = 0; i < axis; ++i) sp.outer *= static_cast<std::size_t>(s[static_cast<std::size_t>(i)]);
  sp.len = static_cast<std::size_t>(s[static_cast<std::size_t>(axis)]);
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i)
    sp.inner *= static_cast<std::size_t>(s[i]);
  return sp;
}

Shape drop_axis(const Shape& s, int axis) {
  Shape out;
  for (int i = 0; i < static_cast<int>(s.size()); ++i)
    if (i != axis) out.push_back(s[static_cast<std::size_t>(i)]);
  if (out.empty()) out.push_back(1);
  return out;
}

enum class Bin { add, sub, mul, div };

Tensor binary_op(const Tensor& a, const Tensor& b, Bin kind, const char* name) {
  const bool a_scalar = a.numel() == 1;
  const bool b_scalar = b.numel() == 1;
  if (!a_scalar && !b_scalar && a.shape() != b.shape()) {
    throw dim_error(std::string(name) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                    shape_str(b.shape()));
  }
  const Tensor& lead = a_scalar ? b : a;
  const std::size_t n = lead.numel();
  Tensor out = Tensor::zeros(lead.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values_mut();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[a_scalar ? 0 : i];
    const double y = bv[b_scalar ? 0 : i];
    switch (kind) {
      case Bin::add: ov[i] = x + y; break;
      case Bin::sub: ov[i] = x - y; break;
      case Bin::mul: ov[i] = x * y; break;
      case Bin::div: ov[i] = x / y; break;
    }
  }

  Tape* tape = active_tape();
  const bool ga = grad_path(a);
  const bool gb = grad_path(b);
  if (!ga && !gb) return out;
  out.set_requires_grad(true);
  const int a_slot = ga ? tape->ensure_slot(a.store()) : -1;
  const int b_slot = gb ? tape->ensure_slot(b.store()) : -1;
  tape->record(out.store(), [=, as = a.store(), bs = b.store()](
                                Tape& t, const std::vector<double>& go) {
    if (a_slot >= 0) {
      auto& buf = t.adjoint(a_slot, as->value.size());
      for (std::size_t i = 0; i < n; ++i) {
        const double y = bs->value[b_scalar ? 0 : i];
        double d = 0;
        switch (kind) {
          case Bin::add: d = go[i]; break;
          case Bin::sub: d = go[i]; break;
          case Bin::mul: d = go[i] * y; break;
          case Bin::div: d = go[i] / y; break;
        }
        buf[a_scalar ? 0 : i] += d;
      }
    }
    if (b_slot >= 0) {
      auto& buf = t.adjoint(b_slot, bs->value.size());
      for (std::size_t i = 0; i < n; ++i) {
        const double x = as->value[a_scalar ? 0 : i];
        const double y = bs->value[b_scalar ? 0 : i];
        double d = 0;
        switch (kind) {
          case Bin::add: d = go[i]; break;
          case Bin::sub: d = -go[i]; break;
          case Bin::mul: d = go[i] * x; break;
          case Bin::div: d = -go[i] * x / (y * y); break;
        }
        buf[b_scalar ? 0 : i] += d;
      }
    }
  });
  return out;
}

// Unary elementwise with adjoint df(x, y, go) returning the input adjoint.
template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& x, Fwd fwd, Bwd bwd) {
  const std::size_t n = x.numel();
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.values();
  auto& ov = out.values_mut();
  for (std::size_t i = 0; i < n; ++i) ov[i] = fwd(xv[i]);
  if (!grad_path(x)) return out;
  Tape* tape = active_tape();
  out.set_requires_grad(true);
  const int x_slot = tape->ensure_slot(x.store());
  tape->record(out.store(), [=, xs = x.store(), os = out.store()](
                                Tape& t, const std::vector<double>& go) {
    auto& buf = t.adjoint(x_slot, n);
    for (std::size_t i = 0; i < n; ++i) buf[i] += bwd(xs->value[i], os->value[i], go[i]);
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::div, "div"); }

Tensor neg(const Tensor& t) {
  return unary_op(t, [](double x) { return -x; },
                  [](double, double, double g) { return -g; });
}

Tensor abs(const Tensor& t) {
  return unary_op(t, [](double x) { return std::abs(x); },
                  [](double x, double, double g) { return x > 0 ? g : (x < 0 ? -g : 0.0); });
}

Tensor exp(const Tensor& t) {
  return unary_op(t, [](double x) { return std::exp(x); },
                  [](double, double y, double g) { return g * y; });
}

Tensor log(const Tensor& t) {
  for (double x : t.values()) {
    if (!(x > 0.0)) throw std::domain_error("log: non-positive input " + std::to_string(x));
  }
  return unary_op(t, [](double x) { return std::log(x); },
                  [](double x, double, double g) { return g / x; });
}

Tensor sigmoid(const Tensor& t) {
  return unary_op(t,
                  [](double x) {
                    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
                    const double e = std::exp(x);
                    return e / (1.0 + e);
                  },
                  [](double, double y, double g) { return g * y * (1.0 - y); });
}

Tensor tanh(const Tensor& t) {
  return unary_op(t, [](double x) { return std::tanh(x); },
                  [](double, double y, double g) { return g * (1.0 - y * y); });
}

Tensor clamp(const Tensor& t, double lo, double hi) {
  return unary_op(t, [=](double x) { return std::min(std::max(x, lo), hi); },
                  [=](double x, double, double g) { return (x >= lo && x <= hi) ? g : 0.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || (b.rank() != 2 && b.rank() != 1)) {
    throw dim_error("matmul: unsupported ranks " + shape_str(a.shape()) + " x " +
                    shape_str(b.shape()));
  }
  const bool vec = b.rank() == 1;
  const int m = a.dim(0), k = a.dim(1);
  const int kb = b.dim(0), n = vec ? 1 : b.dim(1);
  if (k != kb) {
    throw dim_error("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                    shape_str(b.shape()));
  }
  Tensor out = vec ? Tensor::zeros({m}) : Tensor::zeros({m, n});
  {
    const double* A = a.values().data();
    const double* B = b.values().data();
    double* C = out.values_mut().data();
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < k; ++j) {
        const double aij = A[i * k + j];
        if (aij == 0.0) continue;
        const double* Bj = B + j * n;
        double* Ci = C + i * n;
        for (int c = 0; c < n; ++c) Ci[c] += aij * Bj[c];
      }
    }
  }
  Tape* tape = active_tape();
  const bool ga = grad_path(a);
  const bool gb = grad_path(b);
  if (!ga && !gb) return out;
  out.set_requires_grad(true);
  const int a_slot = ga ? tape->ensure_slot(a.store()) : -1;
  const int b_slot = gb ? tape->ensure_slot(b.store()) : -1;
  tape->record(out.store(), [=, as = a.store(), bs = b.store()](
                                Tape& t, const std::vector<double>& go) {
    if (a_slot >= 0) {
      auto& buf = t.adjoint(a_slot, as->value.size());
      const double* B = bs->value.data();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j) {
          double s = 0;
          for (int c = 0; c < n; ++c) s += go[static_cast<std::size_t>(i * n + c)] * B[j * n + c];
          buf[static_cast<std::size_t>(i * k + j)] += s;
        }
    }
    if (b_slot >= 0) {
      auto& buf = t.adjoint(b_slot, bs->value.size());
      const double* A = as->value.data();
      for (int j = 0; j < k; ++j)
        for (int c = 0; c < n; ++c) {
          double s = 0;
          for (int i = 0; i < m; ++i) s += A[i * k + j] * go[static_cast<std::size_t>(i * n + c)];
          buf[static_cast<std::size_t>(j * n + c)] += s;
        }
    }
  });
  return out;
}

Tensor transpose(const Tensor& t) {
  if (t.rank() != 2) throw dim_error("transpose: expected rank 2, got " + shape_str(t.shape()));
  const int r = t.dim(0), c = t.dim(1);
  Tensor out = Tensor::zeros({c, r});
  const auto& xv = t.values();
  auto& ov = out.values_mut();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) ov[static_cast<std::size_t>(j * r + i)] = xv[static_cast<std::size_t>(i * c + j)];
  if (!grad_path(t)) return out;
  Tape* tape = active_tape();
  out.set_requires_grad(true);
  const int slot = tape->ensure_slot(t.store());
  tape->record(out.store(), [=](Tape& tp, const std::vector<double>& go) {
    auto& buf = tp.adjoint(slot, static_cast<std::size_t>(r) * static_cast<std::size_t>(c));
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        buf[static_cast<std::size_t>(i * c + j)] += go[static_cast<std::size_t>(j * r + i)];
  });
  return out;
}

Tensor reshape(const Tensor& t, Shape shape) {
  if (shape_numel(shape) != t.numel()) {
    throw dim_error("reshape: cannot view " + shape_str(t.shape()) + " as " + shape_str(shape));
  }
  Tensor out = Tensor::from(std::move(shape), t.values());
  if (!grad_path(t)) return out;
  Tape* tape = active_tape();
  out.set_requires_grad(true);
  const int slot = tape->ensure_slot(t.store());
  const std::size_t n = t.numel();
  tape->record(out.store(), [=](Tape& tp, const std::vector<double>& go) {
    auto& buf = tp.adjoint(slot, n);
    for (std::size_t i = 0; i < n; ++i) buf[i] += go[i];
  });
  return out;
}

Tensor flatten(const Tensor& t) { return reshape(t, {static_cast<int>(t.numel())}); }

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw dim_error("concat: no inputs");
  const Shape& first = parts[0].shape();
  int total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != static_cast<int>(first.size()))
      throw dim_error("concat: rank mismatch " + shape_str(first) + " vs " + shape_str(p.shape()));
    for (int i = 0; i < p.rank(); ++i) {
      if (i != axis && p.dim(i) != first[static_cast<std::size_t>(i)])
        throw dim_error("concat: shape mismatch " + shape_str(first) + " vs " + shape_str(p.shape()));
    }
    total += p.dim(axis);
  }
  Shape out_shape = first;
  AxisSplit sp = split_axis(first, axis, "concat");
  out_shape[static_cast<std::size_t>(axis)] = total;
  Tensor out = Tensor::zeros(out_shape);
  auto& ov = out.values_mut();
  const std::size_t out_row = static_cast<std::size_t>(total) * sp.inner;
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t plen = static_cast<std::size_t>(p.dim(axis)) * sp.inner;
    const auto& pv = p.values();
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(pv.data() + o * plen, plen, ov.data() + o * out_row + off);
    off += plen;
  }

  Tape* tape = active_tape();
  bool any = false;
  for (const Tensor& p : parts) any = any || grad_path(p);
  if (!any) return out;
  out.set_requires_grad(true);
  struct Piece {
    int slot;
    std::size_t len, off, size;
  };
  std::vector<Piece> pieces;
  off = 0;
  for (const Tensor& p : parts) {
    const std::size_t plen = static_cast<std::size_t>(p.dim(axis)) * sp.inner;
    if (grad_path(p)) pieces.push_back({tape->ensure_slot(p.store()), plen, off, p.numel()});
    off += plen;
  }
  const std::size_t outer = sp.outer;
  // keep input storages alive through the tape
  std::vector<Store> keep;
  for (const Tensor& p : parts) keep.push_back(p.store());
  tape->record(out.store(), [=, keep = std::move(keep)](Tape& tp, const std::vector<double>& go) {
    (void)keep;
    for (const Piece& pc : pieces) {
      auto& buf = tp.adjoint(pc.slot, pc.size);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < pc.len; ++i)
          buf[o * pc.len + i] += go[o * out_row + pc.off + i];
    }
  });
  return out;
}

Tensor slice(const Tensor& t, int axis, int start, int len) {
  AxisSplit sp = split_axis(t.shape(), axis, "slice");
  if (start < 0 || len <= 0 || start + len > static_cast<int>(sp.len)) {
    throw std::out_of_range("slice: range [" + std::to_string(start) + ", " +
                            std::to_string(start + len) + ") outside axis of size " +
                            std::to_string(sp.len));
  }
  Shape out_shape = t.shape();
  out_shape[static_cast<std::size_t>(axis)] = len;
  Tensor out = Tensor::zeros(out_shape);
  const auto& xv = t.values();
  auto& ov = out.values_mut();
  const std::size_t in_row = sp.len * sp.inner;
  const std::size_t out_row = static_cast<std::size_t>(len) * sp.inner;
  const std::size_t shift = static_cast<std::size_t>(start) * sp.inner;
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy_n(xv.data() + o * in_row + shift, out_row, ov.data() + o * out_row);
  if (!grad_path(t)) return out;
  Tape* tape = active_tape();
  out.set_requires_grad(true);
  const int slot = tape->ensure_slot(t.store());
  const std::size_t total = t.numel();
  const std::size_t outer = sp.outer;
  tape->record(out.store(), [=](Tape& tp, const std::vector<double>& go) {
    auto& buf = tp.adjoint(slot, total);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < out_row; ++i) buf[o * in_row + shift + i] += go[o * out_row + i];
  });
  return out;
}

namespace {

enum class Red { sum, mean, max };

Tensor reduce_all(const Tensor& t, Red kind) {
  const std::size_t n = t.numel();
  const auto& xv = t.values();
  double acc;
  std::size_t arg = 0;
  if (kind == Red::max) {
    acc = xv[0];
    for (std::size_t i = 1; i < n; ++i)
      if (xv[i] > acc) {
        acc = xv[i];
        arg = i;
      }
  } else {
    acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += xv[i];
    if (kind == Red::mean) acc /= static_cast<double>(n);
  }
  Tensor out = Tensor::scalar(acc);
  if (!grad_path(t)) return out;
  Tape* tape = active_tape();
  out.set_requires_grad(true);
  const int slot = tape->ensure_slot(t.store());
  tape->record(out.store(), [=](Tape& tp, const std::vector<double>& go) {
    auto& buf = tp.adjoint(slot, n);
    switch (kind) {
      case Red::sum:
        for (std::size_t i = 0; i < n; ++i) buf[i] += go[0];
        break;
      case Red::mean:
        for (std::size_t i = 0; i < n; ++i) buf[i] += go[0] / static_cast<double>(n);
        break;
      case Red::max: buf[arg] += go[0]; break;
    }
  });
  return out;
}

Tensor reduce_axis(const Tensor& t, int axis, Red kind, const char* name) {
  AxisSplit sp = split_axis(t.shape(), axis, name);
  Tensor out = Tensor::zeros(drop_axis(t.shape(), axis));
  const auto& xv = t.values();
  auto& ov = out.values_mut();
  std::vector<std::size_t> args;
  if (kind == Red::max) args.assign(sp.outer * sp.inner, 0);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.len * sp.inner + in;
      if (kind == Red::max) {
        double best = xv[base];
        std::size_t bi = 0;
        for (std::size_t a = 1; a < sp.len; ++a) {
          const double v = xv[base + a * sp.inner];
          if (v > best) {
            best = v;
            bi = a;
          }
        }
        ov[o * sp.inner + in] = best;
        args[o * sp.inner + in] = bi;
      } else {
        double s = 0;
        for (std::size_t a = 0; a < sp.len; ++a) s += xv[base + a * sp.inner];
        ov[o * sp.inner + in] = kind == Red::mean ? s / static_cast<double>(sp.len) : s;
      }
    }
  }
  if (!grad_path(t)) return out;
  Tape* tape = active_tape();
  out.set_requires_grad(true);
  const int slot = tape->ensure_slot(t.store());
  const std::size_t n = t.numel();
  tape->record(out.store(), [=, args = std::move(args)](Tape& tp, const std::vector<double>& go) {
    auto& buf = tp.adjoint(slot, n);
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t in = 0; in < sp.inner; ++in) {
        const std::size_t base = o * sp.len * sp.inner + in;
        const double g = go[o * sp.inner + in];
        switch (kind) {
          case Red::sum:
            for (std::size_t a = 0; a < sp.len; ++a) buf[base + a * sp.inner] += g;
            break;
          case Red::mean:
            for (std::size_t a = 0; a < sp.len; ++a)
              buf[base + a * sp.inner] += g / static_cast<double>(sp.len);
            break;
          case Red::max: buf[base + args[o * sp.inner + in] * sp.inner] += g; break;
        }
      }
  });
  return out;
}

}  // namespace

Tensor sum(const Tensor& t) { return reduce_all(t, Red::sum); }
Tensor sum(const Tensor& t, int axis) { return reduce_axis(t, axis, Red::sum, "sum"); }
Tensor mean(const Tensor& t) { return reduce_all(t, Red::mean); }
Tensor mean(const Tensor& t, int axis) { return reduce_axis(t, axis, Red::mean, "mean"); }
Tensor max_reduce(const Tensor& t) { return reduce_all(t, Red::max); }
Tensor max_reduce(const Tensor& t, int axis) { return reduce_axis(t, axis, Red::max, "max"); }

Tensor softmax(const Tensor& t) {
  if (t.rank() != 1) throw dim_error("softmax: expected rank 1, got " + shape_str(t.shape()));
  const std::size_t n = t.numel();
  const auto& xv = t.values();
  for (double x : xv) {
    if (!std::isfinite(x)) throw numeric_error("softmax: non-finite input");
  }
  double mx = xv[0];
  for (double x : xv) mx = std::max(mx, x);
  Tensor out = Tensor::zeros(t.shape());
  auto& ov = out.values_mut();
  double z = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ov[i] = std::exp(xv[i] - mx);
    z += ov[i];
  }
  for (std::size_t i = 0; i < n; ++i) ov[i] /= z;
  if (!grad_path(t)) return out;
  Tape* tape = active_tape();
  out.set_requires_grad(true);
  const int slot = tape->ensure_slot(t.store());
  tape->record(out.store(), [=, os = out.store()](Tape& tp, const std::vector<double>& go) {
    auto& buf = tp.adjoint(slot, n);
    double dot = 0;
    for (std::size_t i = 0; i < n; ++i) dot += go[i] * os->value[i];
    for (std::size_t i = 0; i < n; ++i) buf[i] += os->value[i] * (go[i] - dot);
  });
  return out;
}

}  // namespace arc
