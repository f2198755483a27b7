#include "mret/tensor.hpp"

#include <cmath>
#include <sstream>

namespace mret {

namespace {
Precision g_precision = Precision::f32;
}

Precision precision() { return g_precision; }
void set_precision(Precision p) { g_precision = p; }

PrecisionScope::PrecisionScope(Precision p) : saved_(g_precision) { g_precision = p; }
PrecisionScope::~PrecisionScope() { g_precision = saved_; }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

static void validate_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != shape_numel(shape_))
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_str(shape_));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double round_to_precision(double v) {
  if (g_precision == Precision::f32) return static_cast<double>(static_cast<float>(v));
  return v;
}

void Tensor::round_to_precision() {
  if (g_precision != Precision::f32) return;
  for (double& v : data_) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace mret
