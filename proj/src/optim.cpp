#include "eal/optim.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

namespace eal {

Optimizer::Optimizer(std::vector<Tensor> params, OptimizerConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    if (!p.is_leaf() || !p.requires_grad()) {
      throw TapeError("optimizer parameters must be leaves with requires_grad");
    }
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(config_.kind == OptimizerKind::adam ? p.size() : 0, 0.0);
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Optimizer::step() {
  for (const auto& p : params_) {
    if (!p.has_grad()) throw TapeError("optimizer step without gradients; call backward() first");
  }
  ++steps_;
  const double lr = config_.learning_rate;
  if (config_.kind == OptimizerKind::sgd_momentum) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto theta = params_[i].mutable_data();
      auto g = params_[i].grad();
      auto& vel = m_[i];
      for (std::size_t j = 0; j < theta.size(); ++j) {
        vel[j] = config_.momentum * vel[j] + g[j];
        theta[j] -= lr * vel[j];
      }
    }
    return;
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto theta = params_[i].mutable_data();
    auto g = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      theta[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.epsilon);
    }
  }
}

namespace {

constexpr char magic[8] = {'E', 'A', 'L', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian host");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw std::runtime_error("truncated checkpoint " + path);
  }
  return value;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(magic, sizeof magic);
  put<std::uint32_t>(out, checkpoint_version);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rank()));
    for (auto d : t.value.shape()) put<std::uint64_t>(out, d);
    for (double v : t.value.data()) put<double>(out, v);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  char head[8];
  if (!in.read(head, sizeof head) || std::memcmp(head, magic, sizeof magic) != 0) {
    throw std::runtime_error(path + " is not a checkpoint");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != checkpoint_version) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(in, path);
  std::vector<NamedTensor> result;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get<std::uint32_t>(in, path), '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name.size()))) {
      throw std::runtime_error("truncated checkpoint " + path);
    }
    Shape shape(get<std::uint32_t>(in, path));
    for (auto& d : shape) d = get<std::uint64_t>(in, path);
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = get<double>(in, path);
    result.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  return result;
}

void restore_checkpoint(const std::string& path, std::vector<NamedTensor>& into) {
  std::map<std::string, Tensor> stored;
  for (auto& t : load_checkpoint(path)) stored.emplace(t.name, t.value);
  for (auto& t : into) {
    auto it = stored.find(t.name);
    if (it == stored.end()) throw std::runtime_error("checkpoint lacks tensor " + t.name);
    if (it->second.shape() != t.value.shape()) {
      throw DimensionError("checkpoint tensor " + t.name + " has shape " +
                           shape_string(it->second.shape()) + ", expected " +
                           shape_string(t.value.shape()));
    }
    auto dst = t.value.mutable_data();
    std::copy(it->second.data().begin(), it->second.data().end(), dst.begin());
  }
}

}  // namespace eal
