#include "eal/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace eal {

namespace {

thread_local Tape* current_tape = nullptr;
std::atomic<std::uint64_t> next_tape_id{1};

void check_finite_values(const std::vector<double>& values, std::string_view what) {
  if (!all_finite(values)) throw NumericError("non-finite value in " + std::string(what));
}

}  // namespace

bool all_finite(std::span<const double> values) {
  // x - x is 0 for finite x and NaN otherwise. Independent lanes let the
  // compiler vectorize without reassociating.
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  const std::size_t n = values.size(), body = n - n % 4;
  for (std::size_t i = 0; i < body; i += 4) {
    for (std::size_t l = 0; l < 4; ++l) acc[l] += values[i + l] - values[i + l];
  }
  for (std::size_t i = body; i < n; ++i) acc[0] += values[i] - values[i];
  return acc[0] + acc[1] + acc[2] + acc[3] == 0.0;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

Tensor::Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : s_(std::make_shared<detail::TensorStorage>()) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  check_finite_values(values, "tensor construction");
  s_->shape = std::move(shape);
  s_->values = std::move(values);
  s_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return filled(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor(Shape{rows, cols}, std::move(values), requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const auto n = values.size();
  return Tensor(Shape{n}, std::move(values), requires_grad);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(shape()));
  }
  return s_->shape[axis];
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  return s_->values[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw DimensionError("at(row, col) needs a matrix, got " + shape_string(shape()));
  if (row >= s_->shape[0] || col >= s_->shape[1]) throw std::out_of_range("matrix index");
  return s_->values[row * s_->shape[1] + col];
}

void Tensor::set_requires_grad(bool on) {
  if (!s_->is_leaf) throw TapeError("requires_grad can only be toggled on leaf tensors");
  s_->requires_grad = on;
}

void Tensor::zero_grad() {
  if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(s_->shape, s_->values, false); }

Tensor Tensor::clone() const { return Tensor(s_->shape, s_->values, s_->requires_grad); }

Tape::Tape() : id_(next_tape_id.fetch_add(1)), previous_(current_tape) { current_tape = this; }

Tape::~Tape() { current_tape = previous_; }

Tape* Tape::active() { return current_tape; }

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(records_.size());
  for (const auto& r : records_) names.emplace_back(r.op);
  return names;
}

void Tape::record(std::string_view op,
                  const std::vector<std::shared_ptr<detail::TensorStorage>>& inputs,
                  const std::shared_ptr<detail::TensorStorage>& output, Rule rule) {
  if (consumed_) throw TapeError("cannot record onto a tape after backward()");
  output->is_leaf = false;
  output->requires_grad = true;
  output->tape_id = id_;
  records_.push_back(Record{op, inputs, output, std::move(rule)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw TapeError("backward() already ran on this tape; run a new forward pass");
  if (loss.size() != 1) {
    throw DimensionError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  const auto& ls = loss.storage();
  if (ls->tape_id != id_) throw TapeError("loss was not produced on this tape");
  consumed_ = true;

  ls->grad.assign(1, 1.0);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // not reachable from the loss
    it->rule(it->output->grad);
  }

  std::unordered_set<const detail::TensorStorage*> seen;
  for (const auto& r : records_) {
    for (const auto& in : r.inputs) {
      if (in->is_leaf && in->requires_grad && seen.insert(in.get()).second && in->grad.empty()) {
        in->grad.assign(in->values.size(), 0.0);
      }
    }
  }
  for (const auto& r : records_) {
    check_finite_values(r.output->grad, "gradient of " + std::string(r.op));
  }
}

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (!tape) throw TapeError("backward() called with no active tape");
  tape->backward(loss);
}

}  // namespace eal
