#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace eal {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);
bool all_finite(std::span<const double> values);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

struct TensorStorage {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until a backward pass reaches this tensor
  bool requires_grad = false;
  bool is_leaf = true;
  std::uint64_t tape_id = 0;
};

}  // namespace detail

/// Dense row-major float64 array with optional gradient tracking.
///
/// Copies share storage (like a handle); use clone() for a deep copy. Leaves
/// created with requires_grad=true are trainable parameters: optimizers write
/// through mutable_data() and every handle observes the update.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);

  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return s_->values.size(); }

  std::span<const double> data() const { return s_->values; }
  std::span<double> mutable_data() { return s_->values; }
  const std::vector<double>& values() const { return s_->values; }

  double item() const;
  double at(std::size_t i) const { return s_->values.at(i); }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool on);
  bool is_leaf() const { return s_->is_leaf; }

  bool has_grad() const { return !s_->grad.empty(); }
  std::span<const double> grad() const { return s_->grad; }
  void zero_grad();

  /// Deep copy with no gradient tracking.
  Tensor detach() const;
  /// Deep copy keeping the requires_grad flag (as a fresh leaf).
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

  // Internal: used by ops and the tape.
  explicit Tensor(std::shared_ptr<detail::TensorStorage> s) : s_(std::move(s)) {}
  const std::shared_ptr<detail::TensorStorage>& storage() const { return s_; }

 private:
  std::shared_ptr<detail::TensorStorage> s_;
};

/// Records differentiable operations performed on the current thread while it
/// is alive. One tape serves exactly one backward pass.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  /// Reverse-mode accumulation from a scalar loss into every reachable tensor.
  /// Leaves that were used on this tape but are not reachable receive zero grads.
  void backward(const Tensor& loss);

  std::size_t size() const { return records_.size(); }
  std::vector<std::string> op_names() const;
  bool consumed() const { return consumed_; }
  std::uint64_t id() const { return id_; }

  using Rule = std::function<void(std::span<const double> out_grad)>;

  void record(std::string_view op,
              const std::vector<std::shared_ptr<detail::TensorStorage>>& inputs,
              const std::shared_ptr<detail::TensorStorage>& output, Rule rule);

 private:
  struct Record {
    std::string_view op;
    std::vector<std::shared_ptr<detail::TensorStorage>> inputs;
    std::shared_ptr<detail::TensorStorage> output;
    Rule rule;
  };

  std::vector<Record> records_;
  std::uint64_t id_;
  bool consumed_ = false;
  Tape* previous_;
};

/// backward() on the tape that is active on this thread.
void backward(const Tensor& loss);

}  // namespace eal
