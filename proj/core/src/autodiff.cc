// core/src/autodiff.cc

#include "mgf/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace mgf::ad {

namespace {

std::atomic<int64_t> g_next_id{1};

using EMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<EMat>;
using CMapMat = Eigen::Map<const EMat>;

MapMat as_mat(Array& a, int64_t r, int64_t c) { return MapMat(a.data(), r, c); }
CMapMat as_mat(const Array& a, int64_t r, int64_t c) {
  return CMapMat(a.data(), r, c);
}

void check_finite(const Array& a, const char* op, int64_t id) {
  for (int64_t i = 0; i < a.numel(); ++i) {
    if (!std::isfinite(a.at(i)))
      throw Error(std::string("numeric failure in op ") + op + " (node " +
                  std::to_string(id) + ")");
  }
}

[[noreturn]] void shape_error(const char* op, const Array& a, const Array& b) {
  throw Error(std::string("op ") + op + ": shape mismatch " +
              shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

[[noreturn]] void shape_error1(const char* op, const Array& a,
                               const std::string& what) {
  throw Error(std::string("op ") + op + ": " + what + ", got " +
              shape_str(a.shape()));
}

Tensor make_node(const char* op, Array value, std::vector<Tensor> parents,
                 std::function<void(const Array&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->id = g_next_id.fetch_add(1);
  check_finite(value, op, n->id);
  n->value = std::move(value);
  n->op = op;
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  n->parents = std::move(parents);
  if (n->requires_grad) n->backward_fn = std::move(backward_fn);
  return n;
}

void require_2d(const char* op, const Tensor& a) {
  if (a->value.ndim() != 2) shape_error1(op, a->value, "expected 2-D input");
}

}  // namespace

void Node::accumulate(const Array& g) {
  if (!requires_grad) return;
  if (!has_grad) {
    grad = Array(value.shape());
    has_grad = true;
  }
  for (int64_t i = 0; i < g.numel(); ++i) grad.at(i) += g.at(i);
}

Tensor leaf(Array value) {
  auto n = std::make_shared<Node>();
  n->id = g_next_id.fetch_add(1);
  check_finite(value, "leaf", n->id);
  n->value = std::move(value);
  n->requires_grad = true;
  return n;
}

Tensor constant(Array value) {
  auto n = std::make_shared<Node>();
  n->id = g_next_id.fetch_add(1);
  check_finite(value, "constant", n->id);
  n->value = std::move(value);
  n->op = "constant";
  return n;
}

Tensor constant_scalar(double v) { return constant(Array::scalar(v)); }

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
Tensor binary_same_shape(const char* op, const Tensor& a, const Tensor& b,
                         Fwd fwd, Bwd bwd) {
  if (!a->value.same_shape(b->value)) shape_error(op, a->value, b->value);
  Array out(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i)
    out.at(i) = fwd(a->value.at(i), b->value.at(i));
  auto pa = a, pb = b;
  return make_node(op, std::move(out), {a, b}, [pa, pb, bwd](const Array& g) {
    Array ga(pa->value.shape()), gb(pb->value.shape());
    for (int64_t i = 0; i < g.numel(); ++i) {
      auto [da, db] = bwd(pa->value.at(i), pb->value.at(i));
      ga.at(i) = da * g.at(i);
      gb.at(i) = db * g.at(i);
    }
    pa->accumulate(ga);
    pb->accumulate(gb);
  });
}

template <typename Fwd, typename Bwd>
Tensor unary(const char* op, const Tensor& a, Fwd fwd, Bwd bwd) {
  Array out(a->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out.at(i) = fwd(a->value.at(i));
  auto pa = a;
  return make_node(op, std::move(out), {a}, [pa, bwd](const Array& g) {
    Array ga(pa->value.shape());
    for (int64_t i = 0; i < g.numel(); ++i)
      ga.at(i) = bwd(pa->value.at(i)) * g.at(i);
    pa->accumulate(ga);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return std::pair<double, double>(1.0, 1.0); });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return std::pair<double, double>(1.0, -1.0); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y) { return std::pair<double, double>(y, x); });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary(
      "add_scalar", a, [c](double x) { return x + c; },
      [](double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double c) {
  return unary(
      "mul_scalar", a, [c](double x) { return x * c; },
      [c](double) { return c; });
}

Tensor scale(const Tensor& s, const Tensor& x) {
  if (s->value.numel() != 1)
    shape_error1("scale", s->value, "expected scalar multiplier");
  double sv = s->value.at(0);
  Array out(x->value.shape());
  for (int64_t i = 0; i < out.numel(); ++i) out.at(i) = sv * x->value.at(i);
  auto ps = s, px = x;
  return make_node("scale", std::move(out), {s, x},
                   [ps, px, sv](const Array& g) {
                     double ds = 0.0;
                     Array gx(px->value.shape());
                     for (int64_t i = 0; i < g.numel(); ++i) {
                       ds += g.at(i) * px->value.at(i);
                       gx.at(i) = sv * g.at(i);
                     }
                     ps->accumulate(Array::scalar(ds));
                     px->accumulate(gx);
                   });
}

Tensor powc(const Tensor& a, double p) {
  return unary(
      "powc", a, [p](double x) { return std::pow(x, p); },
      [p](double x) { return p * std::pow(x, p - 1.0); });
}

Tensor log(const Tensor& a) {
  return unary(
      "log", a, [](double x) { return std::log(x); },
      [](double x) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); },
      [](double x) { return std::exp(x); });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double kInvSqrt2 = 0.7071067811865475;
  constexpr double kInvSqrt2Pi = 0.3989422804014327;
  return unary(
      "gelu", a,
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x) {
        double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

Tensor abs(const Tensor& a) {
  return unary(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(
      "clamp", a,
      [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// shape
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, std::vector<int64_t> shape) {
  if (Array::count(shape) != a->value.numel())
    shape_error1("reshape", a->value,
                 "cannot reshape to " + shape_str(shape));
  Array out(shape, a->value.vec());
  auto pa = a;
  return make_node("reshape", std::move(out), {a}, [pa](const Array& g) {
    pa->accumulate(Array(pa->value.shape(), g.vec()));
  });
}

Tensor transpose(const Tensor& a) {
  require_2d("transpose", a);
  int64_t m = a->value.dim(0), n = a->value.dim(1);
  Array out({n, m});
  as_mat(out, n, m) = as_mat(a->value, m, n).transpose();
  auto pa = a;
  return make_node("transpose", std::move(out), {a}, [pa, m, n](const Array& g) {
    Array ga({m, n});
    as_mat(ga, m, n) = as_mat(g, n, m).transpose();
    pa->accumulate(ga);
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error("op concat_rows: empty input list");
  int64_t cols = parts[0]->value.ndim() == 2 ? parts[0]->value.dim(1) : 1;
  int ndim = parts[0]->value.ndim();
  int64_t rows = 0;
  for (const auto& p : parts) {
    if (p->value.ndim() != ndim ||
        (ndim == 2 && p->value.dim(1) != cols))
      shape_error("concat_rows", parts[0]->value, p->value);
    rows += p->value.dim(0);
  }
  Array out(ndim == 2 ? std::vector<int64_t>{rows, cols}
                      : std::vector<int64_t>{rows});
  int64_t r = 0;
  for (const auto& p : parts) {
    std::copy(p->value.vec().begin(), p->value.vec().end(),
              out.vec().begin() + r * cols);
    r += p->value.dim(0);
  }
  auto ps = parts;
  return make_node("concat_rows", std::move(out), parts,
                   [ps, cols](const Array& g) {
                     int64_t r = 0;
                     for (const auto& p : ps) {
                       int64_t n = p->value.numel();
                       Array gp(p->value.shape());
                       std::copy(g.vec().begin() + r * cols,
                                 g.vec().begin() + r * cols + n,
                                 gp.vec().begin());
                       r += p->value.dim(0);
                       p->accumulate(gp);
                     }
                   });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error("op concat_cols: empty input list");
  int64_t rows = parts[0]->value.dim(0);
  int64_t cols = 0;
  for (const auto& p : parts) {
    require_2d("concat_cols", p);
    if (p->value.dim(0) != rows)
      shape_error("concat_cols", parts[0]->value, p->value);
    cols += p->value.dim(1);
  }
  Array out({rows, cols});
  int64_t c = 0;
  for (const auto& p : parts) {
    int64_t pc = p->value.dim(1);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t j = 0; j < pc; ++j) out.at(r, c + j) = p->value.at(r, j);
    c += pc;
  }
  auto ps = parts;
  return make_node("concat_cols", std::move(out), parts,
                   [ps, rows](const Array& g) {
                     int64_t c = 0;
                     for (const auto& p : ps) {
                       int64_t pc = p->value.dim(1);
                       Array gp({rows, pc});
                       for (int64_t r = 0; r < rows; ++r)
                         for (int64_t j = 0; j < pc; ++j)
                           gp.at(r, j) = g.at(r, c + j);
                       c += pc;
                       p->accumulate(gp);
                     }
                   });
}

Tensor slice_rows(const Tensor& a, int64_t start, int64_t len) {
  int64_t rows = a->value.dim(0);
  if (start < 0 || len < 0 || start + len > rows)
    shape_error1("slice_rows", a->value,
                 "range [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") out of bounds");
  int64_t cols = a->value.ndim() == 2 ? a->value.dim(1) : 1;
  Array out(a->value.ndim() == 2 ? std::vector<int64_t>{len, cols}
                                 : std::vector<int64_t>{len});
  std::copy(a->value.vec().begin() + start * cols,
            a->value.vec().begin() + (start + len) * cols, out.vec().begin());
  auto pa = a;
  return make_node("slice_rows", std::move(out), {a},
                   [pa, start, cols, len](const Array& g) {
                     Array ga(pa->value.shape());
                     std::copy(g.vec().begin(), g.vec().end(),
                               ga.vec().begin() + start * cols);
                     pa->accumulate(ga);
                   });
}

Tensor slice_cols(const Tensor& a, int64_t start, int64_t len) {
  require_2d("slice_cols", a);
  int64_t rows = a->value.dim(0), cols = a->value.dim(1);
  if (start < 0 || len < 0 || start + len > cols)
    shape_error1("slice_cols", a->value,
                 "range [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") out of bounds");
  Array out({rows, len});
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < len; ++j) out.at(r, j) = a->value.at(r, start + j);
  auto pa = a;
  return make_node("slice_cols", std::move(out), {a},
                   [pa, rows, start, len](const Array& g) {
                     Array ga(pa->value.shape());
                     for (int64_t r = 0; r < rows; ++r)
                       for (int64_t j = 0; j < len; ++j)
                         ga.at(r, start + j) = g.at(r, j);
                     pa->accumulate(ga);
                   });
}

Tensor gather_rows(const Tensor& a, std::vector<int64_t> idx) {
  int64_t rows = a->value.dim(0);
  int64_t cols = a->value.ndim() == 2 ? a->value.dim(1) : 1;
  for (int64_t i : idx)
    if (i < 0 || i >= rows)
      shape_error1("gather_rows", a->value,
                   "row index " + std::to_string(i) + " out of bounds");
  int64_t m = static_cast<int64_t>(idx.size());
  Array out(a->value.ndim() == 2 ? std::vector<int64_t>{m, cols}
                                 : std::vector<int64_t>{m});
  for (int64_t i = 0; i < m; ++i)
    std::copy(a->value.vec().begin() + idx[static_cast<size_t>(i)] * cols,
              a->value.vec().begin() + (idx[static_cast<size_t>(i)] + 1) * cols,
              out.vec().begin() + i * cols);
  auto pa = a;
  return make_node("gather_rows", std::move(out), {a},
                   [pa, idx = std::move(idx), cols](const Array& g) {
                     Array ga(pa->value.shape());
                     for (size_t i = 0; i < idx.size(); ++i)
                       for (int64_t c = 0; c < cols; ++c)
                         ga.at(idx[i] * cols + c) +=
                             g.at(static_cast<int64_t>(i) * cols + c);
                     pa->accumulate(ga);
                   });
}

Tensor repeat_rows(const Tensor& a, int64_t k) {
  if (k < 1) shape_error1("repeat_rows", a->value, "k must be >= 1");
  int64_t rows = a->value.dim(0);
  int64_t cols = a->value.ndim() == 2 ? a->value.dim(1) : 1;
  Array out(a->value.ndim() == 2 ? std::vector<int64_t>{rows * k, cols}
                                 : std::vector<int64_t>{rows * k});
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < k; ++j)
      std::copy(a->value.vec().begin() + r * cols,
                a->value.vec().begin() + (r + 1) * cols,
                out.vec().begin() + (r * k + j) * cols);
  auto pa = a;
  return make_node("repeat_rows", std::move(out), {a},
                   [pa, rows, cols, k](const Array& g) {
                     Array ga(pa->value.shape());
                     for (int64_t r = 0; r < rows; ++r)
                       for (int64_t j = 0; j < k; ++j)
                         for (int64_t c = 0; c < cols; ++c)
                           ga.at(r * cols + c) += g.at((r * k + j) * cols + c);
                     pa->accumulate(ga);
                   });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (int64_t i = 0; i < a->value.numel(); ++i) s += a->value.at(i);
  auto pa = a;
  return make_node("sum_all", Array::scalar(s), {a}, [pa](const Array& g) {
    pa->accumulate(Array::full(pa->value.shape(), g.at(0)));
  });
}

Tensor mean_all(const Tensor& a) {
  if (a->value.numel() == 0)
    shape_error1("mean_all", a->value, "empty input");
  double s = 0.0;
  for (int64_t i = 0; i < a->value.numel(); ++i) s += a->value.at(i);
  double inv = 1.0 / static_cast<double>(a->value.numel());
  auto pa = a;
  return make_node("mean_all", Array::scalar(s * inv), {a},
                   [pa, inv](const Array& g) {
                     pa->accumulate(
                         Array::full(pa->value.shape(), g.at(0) * inv));
                   });
}

Tensor sum_rows(const Tensor& a) {
  require_2d("sum_rows", a);
  int64_t m = a->value.dim(0), n = a->value.dim(1);
  Array out({m});
  for (int64_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (int64_t c = 0; c < n; ++c) s += a->value.at(r, c);
    out.at(r) = s;
  }
  auto pa = a;
  return make_node("sum_rows", std::move(out), {a}, [pa, m, n](const Array& g) {
    Array ga({m, n});
    for (int64_t r = 0; r < m; ++r)
      for (int64_t c = 0; c < n; ++c) ga.at(r, c) = g.at(r);
    pa->accumulate(ga);
  });
}

Tensor sum_cols(const Tensor& a) {
  require_2d("sum_cols", a);
  int64_t m = a->value.dim(0), n = a->value.dim(1);
  Array out({n});
  for (int64_t r = 0; r < m; ++r)
    for (int64_t c = 0; c < n; ++c) out.at(c) += a->value.at(r, c);
  auto pa = a;
  return make_node("sum_cols", std::move(out), {a}, [pa, m, n](const Array& g) {
    Array ga({m, n});
    for (int64_t r = 0; r < m; ++r)
      for (int64_t c = 0; c < n; ++c) ga.at(r, c) = g.at(c);
    pa->accumulate(ga);
  });
}

// ---------------------------------------------------------------------------
// linear algebra / neural
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d("matmul", a);
  require_2d("matmul", b);
  int64_t m = a->value.dim(0), k = a->value.dim(1);
  int64_t k2 = b->value.dim(0), n = b->value.dim(1);
  if (k != k2) shape_error("matmul", a->value, b->value);
  Array out({m, n});
  as_mat(out, m, n).noalias() =
      as_mat(a->value, m, k) * as_mat(b->value, k, n);
  auto pa = a, pb = b;
  return make_node("matmul", std::move(out), {a, b},
                   [pa, pb, m, k, n](const Array& g) {
                     Array ga({m, k}), gb({k, n});
                     CMapMat gm(g.data(), m, n);
                     as_mat(ga, m, k).noalias() =
                         gm * as_mat(pb->value, k, n).transpose();
                     as_mat(gb, k, n).noalias() =
                         as_mat(pa->value, m, k).transpose() * gm;
                     pa->accumulate(ga);
                     pb->accumulate(gb);
                   });
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  require_2d("add_rowvec", a);
  if (v->value.ndim() != 1 || v->value.dim(0) != a->value.dim(1))
    shape_error("add_rowvec", a->value, v->value);
  int64_t m = a->value.dim(0), n = a->value.dim(1);
  Array out({m, n});
  for (int64_t r = 0; r < m; ++r)
    for (int64_t c = 0; c < n; ++c) out.at(r, c) = a->value.at(r, c) + v->value.at(c);
  auto pa = a, pv = v;
  return make_node("add_rowvec", std::move(out), {a, v},
                   [pa, pv, m, n](const Array& g) {
                     Array gv({n});
                     for (int64_t r = 0; r < m; ++r)
                       for (int64_t c = 0; c < n; ++c) gv.at(c) += g.at(r, c);
                     pa->accumulate(g);
                     pv->accumulate(gv);
                   });
}

Tensor mul_rowvec(const Tensor& a, const Tensor& v) {
  require_2d("mul_rowvec", a);
  if (v->value.ndim() != 1 || v->value.dim(0) != a->value.dim(1))
    shape_error("mul_rowvec", a->value, v->value);
  int64_t m = a->value.dim(0), n = a->value.dim(1);
  Array out({m, n});
  for (int64_t r = 0; r < m; ++r)
    for (int64_t c = 0; c < n; ++c)
      out.at(r, c) = a->value.at(r, c) * v->value.at(c);
  auto pa = a, pv = v;
  return make_node("mul_rowvec", std::move(out), {a, v},
                   [pa, pv, m, n](const Array& g) {
                     Array ga({m, n}), gv({n});
                     for (int64_t r = 0; r < m; ++r)
                       for (int64_t c = 0; c < n; ++c) {
                         ga.at(r, c) = g.at(r, c) * pv->value.at(c);
                         gv.at(c) += g.at(r, c) * pa->value.at(r, c);
                       }
                     pa->accumulate(ga);
                     pv->accumulate(gv);
                   });
}

Tensor softmax_rows(const Tensor& a) {
  require_2d("softmax_rows", a);
  int64_t m = a->value.dim(0), n = a->value.dim(1);
  Array out({m, n});
  for (int64_t r = 0; r < m; ++r) {
    double mx = a->value.at(r, 0);
    for (int64_t c = 1; c < n; ++c) mx = std::max(mx, a->value.at(r, c));
    double z = 0.0;
    for (int64_t c = 0; c < n; ++c) {
      double e = std::exp(a->value.at(r, c) - mx);
      out.at(r, c) = e;
      z += e;
    }
    for (int64_t c = 0; c < n; ++c) out.at(r, c) /= z;
  }
  auto pa = a;
  Array probs = out;  // saved for the backward pass
  return make_node("softmax_rows", std::move(out), {a},
                   [pa, probs = std::move(probs), m, n](const Array& g) {
                     Array ga({m, n});
                     for (int64_t r = 0; r < m; ++r) {
                       double dot = 0.0;
                       for (int64_t c = 0; c < n; ++c)
                         dot += g.at(r, c) * probs.at(r, c);
                       for (int64_t c = 0; c < n; ++c)
                         ga.at(r, c) = probs.at(r, c) * (g.at(r, c) - dot);
                     }
                     pa->accumulate(ga);
                   });
}

Tensor logsumexp_rows(const Tensor& a) {
  require_2d("logsumexp_rows", a);
  int64_t m = a->value.dim(0), n = a->value.dim(1);
  Array out({m});
  for (int64_t r = 0; r < m; ++r) {
    double mx = a->value.at(r, 0);
    for (int64_t c = 1; c < n; ++c) mx = std::max(mx, a->value.at(r, c));
    double z = 0.0;
    for (int64_t c = 0; c < n; ++c) z += std::exp(a->value.at(r, c) - mx);
    out.at(r) = mx + std::log(z);
  }
  auto pa = a;
  Array lse = out;
  return make_node("logsumexp_rows", std::move(out), {a},
                   [pa, lse = std::move(lse), m, n](const Array& g) {
                     Array ga({m, n});
                     for (int64_t r = 0; r < m; ++r)
                       for (int64_t c = 0; c < n; ++c)
                         ga.at(r, c) =
                             g.at(r) * std::exp(pa->value.at(r, c) - lse.at(r));
                     pa->accumulate(ga);
                   });
}

Tensor layer_norm_rows(const Tensor& a, double eps) {
  require_2d("layer_norm_rows", a);
  int64_t m = a->value.dim(0), n = a->value.dim(1);
  Array out({m, n});
  Array inv_std({m});
  for (int64_t r = 0; r < m; ++r) {
    double mean = 0.0;
    for (int64_t c = 0; c < n; ++c) mean += a->value.at(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t c = 0; c < n; ++c) {
      double d = a->value.at(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std.at(r) = is;
    for (int64_t c = 0; c < n; ++c)
      out.at(r, c) = (a->value.at(r, c) - mean) * is;
  }
  auto pa = a;
  Array y = out;
  return make_node(
      "layer_norm_rows", std::move(out), {a},
      [pa, y = std::move(y), inv_std = std::move(inv_std), m, n](const Array& g) {
        Array ga({m, n});
        for (int64_t r = 0; r < m; ++r) {
          double gm = 0.0, gy = 0.0;
          for (int64_t c = 0; c < n; ++c) {
            gm += g.at(r, c);
            gy += g.at(r, c) * y.at(r, c);
          }
          gm /= static_cast<double>(n);
          gy /= static_cast<double>(n);
          for (int64_t c = 0; c < n; ++c)
            ga.at(r, c) =
                inv_std.at(r) * (g.at(r, c) - gm - y.at(r, c) * gy);
        }
        pa->accumulate(ga);
      });
}

int64_t conv1d_output_length(int64_t input_len, int64_t kernel, int64_t stride,
                             int64_t padding) {
  return (input_len + 2 * padding - kernel) / stride + 1;
}

namespace {

// im2col for [t_in x c_in] input: row t of the result is the flattened
// receptive field of output step t, zeros outside the padded range.
Array im2col(const Array& x, int64_t kernel, int64_t stride, int64_t padding,
             int64_t t_out) {
  int64_t t_in = x.dim(0), c_in = x.dim(1);
  Array col({t_out, kernel * c_in});
  for (int64_t t = 0; t < t_out; ++t) {
    int64_t base = t * stride - padding;
    for (int64_t k = 0; k < kernel; ++k) {
      int64_t src = base + k;
      if (src < 0 || src >= t_in) continue;
      for (int64_t c = 0; c < c_in; ++c)
        col.at(t, k * c_in + c) = x.at(src, c);
    }
  }
  return col;
}

void col2im_add(Array& gx, const Array& gcol, int64_t kernel, int64_t stride,
                int64_t padding) {
  int64_t t_in = gx.dim(0), c_in = gx.dim(1);
  int64_t t_out = gcol.dim(0);
  for (int64_t t = 0; t < t_out; ++t) {
    int64_t base = t * stride - padding;
    for (int64_t k = 0; k < kernel; ++k) {
      int64_t dst = base + k;
      if (dst < 0 || dst >= t_in) continue;
      for (int64_t c = 0; c < c_in; ++c)
        gx.at(dst, c) += gcol.at(t, k * c_in + c);
    }
  }
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b,
              int64_t kernel, int64_t stride, int64_t padding) {
  require_2d("conv1d", x);
  require_2d("conv1d", w);
  int64_t t_in = x->value.dim(0), c_in = x->value.dim(1);
  if (w->value.dim(0) != kernel * c_in)
    shape_error("conv1d", x->value, w->value);
  int64_t c_out = w->value.dim(1);
  if (b->value.ndim() != 1 || b->value.dim(0) != c_out)
    shape_error("conv1d", w->value, b->value);
  if (t_in + 2 * padding < kernel)
    shape_error1("conv1d", x->value, "input too short for kernel");
  int64_t t_out = conv1d_output_length(t_in, kernel, stride, padding);

  Array col = im2col(x->value, kernel, stride, padding, t_out);
  Array out({t_out, c_out});
  as_mat(out, t_out, c_out).noalias() =
      as_mat(col, t_out, kernel * c_in) * as_mat(w->value, kernel * c_in, c_out);
  for (int64_t t = 0; t < t_out; ++t)
    for (int64_t c = 0; c < c_out; ++c) out.at(t, c) += b->value.at(c);

  auto px = x, pw = w, pb = b;
  return make_node(
      "conv1d", std::move(out), {x, w, b},
      [px, pw, pb, kernel, stride, padding, t_in, c_in, c_out,
       t_out](const Array& g) {
        // Recompute im2col rather than keeping it alive for the whole step.
        Array col = im2col(px->value, kernel, stride, padding, t_out);
        Array gw({kernel * c_in, c_out});
        as_mat(gw, kernel * c_in, c_out).noalias() =
            as_mat(col, t_out, kernel * c_in).transpose() *
            CMapMat(g.data(), t_out, c_out);
        Array gb({c_out});
        for (int64_t t = 0; t < t_out; ++t)
          for (int64_t c = 0; c < c_out; ++c) gb.at(c) += g.at(t, c);
        Array gcol({t_out, kernel * c_in});
        as_mat(gcol, t_out, kernel * c_in).noalias() =
            CMapMat(g.data(), t_out, c_out) *
            as_mat(pw->value, kernel * c_in, c_out).transpose();
        Array gx({t_in, c_in});
        col2im_add(gx, gcol, kernel, stride, padding);
        px->accumulate(gx);
        pw->accumulate(gw);
        pb->accumulate(gb);
      });
}

Tensor conv_transpose1d(const Tensor& x, const Tensor& w, const Tensor& b,
                        int64_t kernel, int64_t stride, int64_t padding) {
  require_2d("conv_transpose1d", x);
  require_2d("conv_transpose1d", w);
  int64_t t_in = x->value.dim(0), c_in = x->value.dim(1);
  if (w->value.dim(0) != c_in || w->value.dim(1) % kernel != 0)
    shape_error("conv_transpose1d", x->value, w->value);
  int64_t c_out = w->value.dim(1) / kernel;
  if (b->value.ndim() != 1 || b->value.dim(0) != c_out)
    shape_error("conv_transpose1d", w->value, b->value);
  int64_t t_out = (t_in - 1) * stride + kernel - 2 * padding;
  if (t_out < 1)
    shape_error1("conv_transpose1d", x->value, "input too short");

  // proj[t, k*c_out + c] = x[t] . w[:, k*c_out + c]
  Array proj({t_in, kernel * c_out});
  as_mat(proj, t_in, kernel * c_out).noalias() =
      as_mat(x->value, t_in, c_in) * as_mat(w->value, c_in, kernel * c_out);
  Array out({t_out, c_out});
  for (int64_t t = 0; t < t_in; ++t) {
    int64_t base = t * stride - padding;
    for (int64_t k = 0; k < kernel; ++k) {
      int64_t dst = base + k;
      if (dst < 0 || dst >= t_out) continue;
      for (int64_t c = 0; c < c_out; ++c)
        out.at(dst, c) += proj.at(t, k * c_out + c);
    }
  }
  for (int64_t t = 0; t < t_out; ++t)
    for (int64_t c = 0; c < c_out; ++c) out.at(t, c) += b->value.at(c);

  auto px = x, pw = w, pb = b;
  return make_node(
      "conv_transpose1d", std::move(out), {x, w, b},
      [px, pw, pb, kernel, stride, padding, t_in, c_in, c_out,
       t_out](const Array& g) {
        Array gproj({t_in, kernel * c_out});
        for (int64_t t = 0; t < t_in; ++t) {
          int64_t base = t * stride - padding;
          for (int64_t k = 0; k < kernel; ++k) {
            int64_t src = base + k;
            if (src < 0 || src >= t_out) continue;
            for (int64_t c = 0; c < c_out; ++c)
              gproj.at(t, k * c_out + c) = g.at(src, c);
          }
        }
        Array gx({t_in, c_in});
        as_mat(gx, t_in, c_in).noalias() =
            as_mat(gproj, t_in, kernel * c_out) *
            as_mat(pw->value, c_in, kernel * c_out).transpose();
        Array gw({c_in, kernel * c_out});
        as_mat(gw, c_in, kernel * c_out).noalias() =
            as_mat(px->value, t_in, c_in).transpose() *
            as_mat(gproj, t_in, kernel * c_out);
        Array gb({c_out});
        for (int64_t t = 0; t < t_out; ++t)
          for (int64_t c = 0; c < c_out; ++c) gb.at(c) += g.at(t, c);
        px->accumulate(gx);
        pw->accumulate(gw);
        pb->accumulate(gb);
      });
}

Tensor masked_sq_error(const Tensor& pred, const Array& target,
                       std::vector<int64_t> rows) {
  require_2d("masked_sq_error", pred);
  if (!pred->value.same_shape(target))
    shape_error("masked_sq_error", pred->value, target);
  int64_t n = pred->value.dim(1);
  double s = 0.0;
  for (int64_t r : rows) {
    if (r < 0 || r >= pred->value.dim(0))
      shape_error1("masked_sq_error", pred->value,
                   "row index " + std::to_string(r) + " out of bounds");
    for (int64_t c = 0; c < n; ++c) {
      double d = pred->value.at(r, c) - target.at(r, c);
      s += d * d;
    }
  }
  auto pp = pred;
  return make_node("masked_sq_error", Array::scalar(s), {pred},
                   [pp, target, rows = std::move(rows), n](const Array& g) {
                     Array gp(pp->value.shape());
                     for (int64_t r : rows)
                       for (int64_t c = 0; c < n; ++c)
                         gp.at(r, c) = 2.0 *
                                       (pp->value.at(r, c) - target.at(r, c)) *
                                       g.at(0);
                     pp->accumulate(gp);
                   });
}

Tensor take_per_row(const Tensor& a, std::vector<int64_t> idx) {
  require_2d("take_per_row", a);
  int64_t m = a->value.dim(0), n = a->value.dim(1);
  if (static_cast<int64_t>(idx.size()) != m)
    shape_error1("take_per_row", a->value, "index count mismatch");
  Array out({m});
  for (int64_t r = 0; r < m; ++r) {
    int64_t c = idx[static_cast<size_t>(r)];
    if (c < 0 || c >= n)
      shape_error1("take_per_row", a->value,
                   "column index " + std::to_string(c) + " out of bounds");
    out.at(r) = a->value.at(r, c);
  }
  auto pa = a;
  return make_node("take_per_row", std::move(out), {a},
                   [pa, idx = std::move(idx), m](const Array& g) {
                     Array ga(pa->value.shape());
                     for (int64_t r = 0; r < m; ++r)
                       ga.at(r, idx[static_cast<size_t>(r)]) = g.at(r);
                     pa->accumulate(ga);
                   });
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

void backward(const Tensor& root) {
  if (root->value.numel() != 1)
    throw Error("backward: root must be scalar, got shape " +
                shape_str(root->value.shape()));
  // Iterative post-order DFS; order depends only on graph construction.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      Node* p = node->parents[next_child].get();
      ++next_child;
      if (p->requires_grad && visited.insert(p).second)
        stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->accumulate(Array::scalar(1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->has_grad && node->backward_fn) node->backward_fn(node->grad);
  }
}

// ---------------------------------------------------------------------------
// finite differences
// ---------------------------------------------------------------------------

FdReport finite_diff_check(
    const std::function<double(const std::vector<Array>&)>& f,
    const std::vector<Array>& params, const std::vector<Array>& analytic,
    const FdOptions& opt) {
  if (params.size() != analytic.size())
    throw Error("finite_diff_check: analytic gradient count mismatch");
  FdReport report;
  std::vector<Array> work = params;
  Rng rng(opt.seed);
  for (size_t ip = 0; ip < work.size(); ++ip) {
    Array& p = work[ip];
    if (!p.same_shape(analytic[ip]))
      throw Error("finite_diff_check: gradient shape mismatch for param " +
                  std::to_string(ip));
    std::vector<int64_t> coords;
    if (p.numel() <= opt.max_coords_per_param) {
      coords.resize(static_cast<size_t>(p.numel()));
      for (size_t i = 0; i < coords.size(); ++i)
        coords[i] = static_cast<int64_t>(i);
    } else {
      std::unordered_set<int64_t> seen;
      while (static_cast<int64_t>(coords.size()) < opt.max_coords_per_param) {
        int64_t c = static_cast<int64_t>(
            rng.uniform_int(static_cast<uint64_t>(p.numel())));
        if (seen.insert(c).second) coords.push_back(c);
      }
    }
    for (int64_t c : coords) {
      double saved = p.at(c);
      double fp, fm;
      bool ok = true;
      try {
        p.at(c) = saved + opt.eps;
        fp = f(work);
        p.at(c) = saved - opt.eps;
        fm = f(work);
      } catch (const Error&) {
        ok = false;
        fp = fm = 0.0;
      }
      p.at(c) = saved;
      if (!ok || !std::isfinite(fp) || !std::isfinite(fm)) {
        ++report.skipped;
        continue;
      }
      double fd = (fp - fm) / (2.0 * opt.eps);
      double adv = analytic[ip].at(c);
      double rel =
          std::abs(adv - fd) / std::max({std::abs(adv), std::abs(fd), 1e-8});
      report.max_rel_err = std::max(report.max_rel_err, rel);
      ++report.checked;
    }
  }
  return report;
}

}  // namespace mgf::ad
