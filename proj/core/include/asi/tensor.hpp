#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace asi {

using Real = double;
using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until first touched by backward or zero_grad
  bool requires_grad = false;
  bool is_leaf = true;  // false for outputs of recorded operations
};

}  // namespace detail

/// Dense row-major array with an optional gradient buffer.
///
/// Tensor is a reference-counted handle: copies alias the same storage, which
/// is what lets a parameter collect gradients from every place it is used.
/// Use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, Real value);
  static Tensor from(Shape shape, std::vector<Real> values);
  static Tensor scalar(Real value);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const Real> data() const;
  /// Direct mutable access; bypasses the tape (for optimizers and I/O).
  std::span<Real> mutable_data();
  Real item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const Real> grad() const;
  std::span<Real> mutable_grad();  // allocates zeros if absent
  void zero_grad();

  /// Independent copy of the data; never requires grad, never recorded.
  Tensor clone() const;
  /// Alias of the same values cut off from gradient flow.
  Tensor detach() const { return clone(); }

  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

  // Internal: used by the tape and the operation implementations.
  const std::shared_ptr<detail::TensorImpl>& impl() const noexcept { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

}  // namespace asi
