#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eal/tensor.hpp"

namespace eal {

enum class OptimizerKind { sgd_momentum, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double momentum = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Holds one moment buffer per registered parameter (Adam uses both, SGD only m).
class Optimizer {
 public:
  Optimizer(std::vector<Tensor> params, OptimizerConfig config);

  void step();
  void zero_grad();

  const OptimizerConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  std::uint64_t step_count() const { return steps_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<double>& first_moment(std::size_t i) const { return m_.at(i); }
  const std::vector<double>& second_moment(std::size_t i) const { return v_.at(i); }

 private:
  std::vector<Tensor> params_;
  OptimizerConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t steps_ = 0;
};

// Named parameter list, the unit stored in checkpoints.
struct NamedTensor {
  std::string name;
  Tensor value;
};

// Binary layout, all integers little-endian:
//   "EALCKPT\0" | u32 version | u32 count |
//   count x { u32 name_len | name bytes | u32 rank | u64 dims[rank] | f64 data[] }
inline constexpr std::uint32_t checkpoint_version = 1;

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);
// Copies stored values into same-named, same-shaped tensors of `into`.
void restore_checkpoint(const std::string& path, std::vector<NamedTensor>& into);

}  // namespace eal
