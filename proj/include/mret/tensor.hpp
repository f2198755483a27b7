#pragma once

// Dense row-major tensors and the session-wide numeric precision setting.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mret {

using Shape = std::vector<std::size_t>;

class NumericsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public NumericsError {
 public:
  using NumericsError::NumericsError;
};

/// Storage is always double; in f32 mode every primitive result is rounded to
/// the nearest binary32 value, so tensors stay exactly float-representable.
enum class Precision { f32, f64 };

Precision precision();
void set_precision(Precision p);

/// Restores the previous precision on scope exit.
class PrecisionScope {
 public:
  explicit PrecisionScope(Precision p);
  ~PrecisionScope();
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision saved_;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 2-D element access.
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  /// Value of a single-element tensor.
  double item() const;

  Tensor reshaped(Shape shape) const;

  bool all_finite() const;

  /// Rounds every element to the active precision.
  void round_to_precision();

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

double round_to_precision(double v);

}  // namespace mret
