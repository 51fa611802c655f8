#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "bistnet/error.hpp"

namespace bistnet {

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

using Shape = std::vector<std::size_t>;
using NodeId = std::uint64_t;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);
std::string_view dtype_name(DType dtype);

// Calls f(float{}) or f(double{}) so kernels can be written once as templates.
template <class F>
decltype(auto) visit_dtype(DType dtype, F&& f) {
  if (dtype == DType::f32) return f(float{});
  return f(double{});
}

template <class T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

// Immutable N-d array, row-major with the last axis fastest. Copies share storage.
// Image-like tensors use H x W x C layout throughout the library.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype = DType::f32);
  static Tensor full(Shape shape, double value, DType dtype = DType::f32);
  static Tensor scalar(double value, DType dtype = DType::f32);
  static Tensor from_values(Shape shape, std::span<const double> values,
                            DType dtype = DType::f32);

  template <class T>
  static Tensor adopt(Shape shape, std::vector<T> values);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  DType dtype() const { return dtype_; }
  NodeId id() const { return id_; }
  bool requires_grad() const { return requires_grad_; }

  // Leaf alias sharing storage, with a fresh node id and requires_grad set.
  Tensor with_grad() const;
  // Alias that no longer participates in differentiation.
  Tensor detach() const;
  // Same dtype returns an alias that stays in the graph; conversions are data.
  Tensor to(DType dtype) const;

  template <class T>
  std::span<const T> values() const;

  double item() const;
  double at(std::size_t flat_index) const;
  std::vector<double> to_vector() const;

  bool bitwise_equal(const Tensor& other) const;

 private:
  using Buffer = std::variant<std::vector<float>, std::vector<double>>;

  Tensor(Shape shape, DType dtype, std::shared_ptr<const Buffer> storage);
  void require_defined(std::string_view what) const;

  std::shared_ptr<const Buffer> storage_;
  Shape shape_;
  DType dtype_ = DType::f32;
  NodeId id_ = 0;
  bool requires_grad_ = false;

  friend class Tape;
  friend Tensor mark_recorded(Tensor t);
};

NodeId next_node_id();

template <class T>
Tensor Tensor::adopt(Shape shape, std::vector<T> values) {
  if (bistnet::numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                     std::to_string(bistnet::numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  return Tensor(std::move(shape), dtype_of<T>(),
                std::make_shared<const Buffer>(std::move(values)));
}

template <class T>
std::span<const T> Tensor::values() const {
  require_defined("values");
  if (dtype_ != dtype_of<T>()) {
    throw DTypeError(std::string("tensor: requested ") +
                     std::string(dtype_name(dtype_of<T>())) + " view of " +
                     std::string(dtype_name(dtype_)) + " tensor");
  }
  const auto& v = std::get<std::vector<T>>(*storage_);
  return {v.data(), v.size()};
}

}  // namespace bistnet
