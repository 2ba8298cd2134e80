// core/include/mgf/autodiff.hpp
//
// Minimal reverse-mode automatic differentiation over dense double arrays.
// A Tensor is a node in an acyclic graph; ops compute the forward value
// eagerly and register a closure that scatters the incoming gradient to the
// parents. backward() runs the closures in reverse topological order.
//
// Every op validates shapes (errors name the op and the shapes involved) and
// rejects non-finite outputs ("numeric failure"). Values are immutable once a
// node is built; distinct graphs may live on distinct threads.

#ifndef MGF_AUTODIFF_HPP_
#define MGF_AUTODIFF_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mgf/array.hpp"

namespace mgf::ad {

struct Node;
using Tensor = std::shared_ptr<Node>;

struct Node {
  Array value;
  Array grad;             // allocated on first accumulation during backward
  bool has_grad = false;
  bool requires_grad = false;  // true when any ancestor is a differentiable leaf
  std::vector<Tensor> parents;
  // Receives d(root)/d(this node) and accumulates into the parents' grads.
  std::function<void(const Array&)> backward_fn;
  const char* op = "leaf";
  int64_t id = 0;

  void accumulate(const Array& g);
};

// Leaf with gradient tracking (model parameters and checked inputs).
Tensor leaf(Array value);
// Leaf without gradient tracking (targets, positional tables, masks).
Tensor constant(Array value);
Tensor constant_scalar(double v);

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);          // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor scale(const Tensor& s, const Tensor& x);        // s scalar node
Tensor powc(const Tensor& a, double p);                // a > 0 for fractional p
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);                          // exact erf form
Tensor abs(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);

// ---- shape ----
Tensor reshape(const Tensor& a, std::vector<int64_t> shape);
Tensor transpose(const Tensor& a);                     // 2-D
Tensor concat_rows(const std::vector<Tensor>& parts);  // stack along axis 0
Tensor concat_cols(const std::vector<Tensor>& parts);  // 2-D, along axis 1
Tensor slice_rows(const Tensor& a, int64_t start, int64_t len);
Tensor slice_cols(const Tensor& a, int64_t start, int64_t len);
Tensor gather_rows(const Tensor& a, std::vector<int64_t> idx);
Tensor repeat_rows(const Tensor& a, int64_t k);        // row i -> rows i*k..i*k+k-1

// ---- reductions ----
Tensor sum_all(const Tensor& a);                       // -> [1]
Tensor mean_all(const Tensor& a);                      // -> [1]
Tensor sum_rows(const Tensor& a);                      // [m x n] -> [m]
Tensor sum_cols(const Tensor& a);                      // [m x n] -> [n]

// ---- linear algebra / neural ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add_rowvec(const Tensor& a, const Tensor& v);   // [m x n] + [n]
Tensor mul_rowvec(const Tensor& a, const Tensor& v);
Tensor softmax_rows(const Tensor& a);
Tensor logsumexp_rows(const Tensor& a);                // [m x n] -> [m]
Tensor layer_norm_rows(const Tensor& a, double eps);   // per-row, pre-affine
// x: [t_in x c_in], w: [(kernel*c_in) x c_out], b: [c_out].
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b,
              int64_t kernel, int64_t stride, int64_t padding);
// x: [t_in x c_in], w: [c_in x (kernel*c_out)], b: [c_out];
// output length = (t_in - 1) * stride + kernel - 2 * padding.
Tensor conv_transpose1d(const Tensor& x, const Tensor& w, const Tensor& b,
                        int64_t kernel, int64_t stride, int64_t padding);
// Sum of squared residuals over the selected rows: sum_{r in rows} |pred_r - target_r|^2.
Tensor masked_sq_error(const Tensor& pred, const Array& target,
                       std::vector<int64_t> rows);
// Picks logits[i, idx[i]] per row -> [m].
Tensor take_per_row(const Tensor& a, std::vector<int64_t> idx);

int64_t conv1d_output_length(int64_t input_len, int64_t kernel, int64_t stride,
                             int64_t padding);

// Root must be scalar. Populates grads of every node that requires them.
void backward(const Tensor& root);

// ---- finite-difference verification ----
struct FdOptions {
  double eps = 1e-5;
  int64_t max_coords_per_param = 16;  // sampled when the tensor is larger
  uint64_t seed = 1;
};
struct FdReport {
  double max_rel_err = 0.0;
  int64_t checked = 0;
  int64_t skipped = 0;  // coordinates where f was non-finite when perturbed
};
// f evaluates the scalar objective at the given parameter values; analytic
// holds d f / d params from one backward() call at the unperturbed point.
FdReport finite_diff_check(
    const std::function<double(const std::vector<Array>&)>& f,
    const std::vector<Array>& params, const std::vector<Array>& analytic,
    const FdOptions& opt);

}  // namespace mgf::ad

#endif  // MGF_AUTODIFF_HPP_
