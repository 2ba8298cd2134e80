// core/include/mgf/array.hpp
//
// Dense row-major array of doubles. This is the single numeric container
// shared by the DSP kernels, the autodiff engine and the model code.

#ifndef MGF_ARRAY_HPP_
#define MGF_ARRAY_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "mgf/error.hpp"
#include "mgf/rng.hpp"

namespace mgf {

std::string shape_str(const std::vector<int64_t>& shape);

class Array {
 public:
  Array() = default;

  explicit Array(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(count(shape_)), 0.0);
  }

  Array(std::vector<int64_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (count(shape_) != static_cast<int64_t>(data_.size()))
      throw Error("array: shape " + shape_str(shape_) + " does not match " +
                  std::to_string(data_.size()) + " values");
  }

  static Array full(std::vector<int64_t> shape, double v) {
    Array a(std::move(shape));
    for (double& x : a.data_) x = v;
    return a;
  }

  static Array scalar(double v) { return Array({1}, {v}); }

  static Array random_uniform(std::vector<int64_t> shape, double lo, double hi,
                              Rng& rng) {
    Array a(std::move(shape));
    for (double& x : a.data_) x = rng.uniform(lo, hi);
    return a;
  }

  static Array random_normal(std::vector<int64_t> shape, double stddev,
                             Rng& rng) {
    Array a(std::move(shape));
    for (double& x : a.data_) x = stddev * rng.normal();
    return a;
  }

  const std::vector<int64_t>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  // 2-D helpers; most of the model lives in [time x channels] matrices.
  int64_t rows() const { return ndim() >= 1 ? shape_[0] : 0; }
  int64_t cols() const { return ndim() == 2 ? shape_[1] : (ndim() == 1 ? 1 : 0); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& at(int64_t i) { return data_[static_cast<size_t>(i)]; }
  double at(int64_t i) const { return data_[static_cast<size_t>(i)]; }
  double& at(int64_t r, int64_t c) {
    return data_[static_cast<size_t>(r * shape_[1] + c)];
  }
  double at(int64_t r, int64_t c) const {
    return data_[static_cast<size_t>(r * shape_[1] + c)];
  }

  bool same_shape(const Array& o) const { return shape_ == o.shape_; }

  static int64_t count(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
      if (d < 0) throw Error("array: negative dimension in " + shape_str(shape));
      n *= d;
    }
    return n;
  }

 private:
  std::vector<int64_t> shape_;
  std::vector<double> data_;
};

inline std::string shape_str(const std::vector<int64_t>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace mgf

#endif  // MGF_ARRAY_HPP_
