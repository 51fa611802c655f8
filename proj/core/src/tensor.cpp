#include "bistnet/tensor.hpp"

#include <atomic>
#include <cstring>
#include <sstream>

namespace bistnet {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::string_view dtype_name(DType dtype) {
  return dtype == DType::f32 ? "f32" : "f64";
}

NodeId next_node_id() {
  static std::atomic<NodeId> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

Tensor::Tensor(Shape shape, DType dtype, std::shared_ptr<const Buffer> storage)
    : storage_(std::move(storage)),
      shape_(std::move(shape)),
      dtype_(dtype),
      id_(next_node_id()) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("tensor: zero extent in shape " + shape_str(shape_));
  }
}

Tensor Tensor::zeros(Shape shape, DType dtype) { return full(std::move(shape), 0.0, dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  const std::size_t n = bistnet::numel(shape);
  return visit_dtype(dtype, [&](auto tag) {
    using T = decltype(tag);
    return adopt(std::move(shape), std::vector<T>(n, static_cast<T>(value)));
  });
}

Tensor Tensor::scalar(double value, DType dtype) { return full({}, value, dtype); }

Tensor Tensor::from_values(Shape shape, std::span<const double> values, DType dtype) {
  return visit_dtype(dtype, [&](auto tag) {
    using T = decltype(tag);
    return adopt(std::move(shape), std::vector<T>(values.begin(), values.end()));
  });
}

void Tensor::require_defined(std::string_view what) const {
  if (!storage_) throw Error("tensor: " + std::string(what) + " on undefined tensor");
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(shape_));
  }
  return shape_[axis];
}

std::size_t Tensor::numel() const { return bistnet::numel(shape_); }

Tensor Tensor::with_grad() const {
  require_defined("with_grad");
  Tensor t = *this;
  t.id_ = next_node_id();
  t.requires_grad_ = true;
  return t;
}

Tensor Tensor::detach() const {
  Tensor t = *this;
  if (requires_grad_) t.id_ = next_node_id();
  t.requires_grad_ = false;
  return t;
}

Tensor Tensor::to(DType dtype) const {
  require_defined("to");
  if (dtype == dtype_) return *this;
  return visit_dtype(dtype_, [&](auto src_tag) {
    using S = decltype(src_tag);
    auto src = values<S>();
    return visit_dtype(dtype, [&](auto dst_tag) {
      using D = decltype(dst_tag);
      return adopt(shape_, std::vector<D>(src.begin(), src.end()));
    });
  });
}

double Tensor::item() const {
  require_defined("item");
  if (numel() != 1) throw ShapeError("tensor: item() on shape " + shape_str(shape_));
  return at(0);
}

double Tensor::at(std::size_t flat_index) const {
  require_defined("at");
  if (flat_index >= numel()) throw ShapeError("tensor: index out of range");
  return visit_dtype(dtype_, [&](auto tag) {
    using T = decltype(tag);
    return static_cast<double>(values<T>()[flat_index]);
  });
}

std::vector<double> Tensor::to_vector() const {
  require_defined("to_vector");
  return visit_dtype(dtype_, [&](auto tag) {
    using T = decltype(tag);
    auto v = values<T>();
    return std::vector<double>(v.begin(), v.end());
  });
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  if (!defined() || !other.defined()) return defined() == other.defined();
  if (shape_ != other.shape_ || dtype_ != other.dtype_) return false;
  return visit_dtype(dtype_, [&](auto tag) {
    using T = decltype(tag);
    auto a = values<T>();
    auto b = other.values<T>();
    return std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
  });
}

}  // namespace bistnet
