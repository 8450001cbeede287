#include "asi/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "asi/errors.hpp"

namespace asi {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::shared_ptr<detail::TensorImpl> make_impl(Shape shape, std::vector<Real> values) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dims must be positive, got " + shape_string(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  return impl;
}

const detail::TensorImpl& checked(const std::shared_ptr<detail::TensorImpl>& impl) {
  if (!impl) throw ContractError("use of an undefined tensor");
  return *impl;
}

}  // namespace

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), Real{0}); }

Tensor Tensor::full(Shape shape, Real value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<Real>(n, value)));
}

Tensor Tensor::from(Shape shape, std::vector<Real> values) {
  return Tensor(make_impl(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(Real value) { return from({1}, {value}); }

const Shape& Tensor::shape() const { return checked(impl_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(impl_).data.size(); }

std::span<const Real> Tensor::data() const { return checked(impl_).data; }

std::span<Real> Tensor::mutable_data() {
  checked(impl_);
  return impl_->data;
}

Real Tensor::item() const {
  const auto& impl = checked(impl_);
  if (impl.data.size() != 1) {
    throw ContractError("item() on a tensor of shape " + shape_string(impl.shape));
  }
  return impl.data.front();
}

bool Tensor::requires_grad() const { return checked(impl_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  checked(impl_);
  impl_->requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const { return checked(impl_).is_leaf; }

bool Tensor::has_grad() const { return !checked(impl_).grad.empty(); }

std::span<const Real> Tensor::grad() const { return checked(impl_).grad; }

std::span<Real> Tensor::mutable_grad() {
  checked(impl_);
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), Real{0});
  return impl_->grad;
}

void Tensor::zero_grad() {
  checked(impl_);
  impl_->grad.assign(impl_->data.size(), Real{0});
}

Tensor Tensor::clone() const {
  const auto& impl = checked(impl_);
  return Tensor(make_impl(impl.shape, impl.data));
}

}  // namespace asi
