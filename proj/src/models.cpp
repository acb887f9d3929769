#include "eal/models.hpp"

#include <cmath>

#include "eal/ops.hpp"

namespace eal {

namespace {

double fan_in_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

void append(std::vector<NamedTensor>& into, std::vector<NamedTensor> more) {
  for (auto& t : more) into.push_back(std::move(t));
}

AttentionConfig attention_config(const TransformerConfig& c) {
  AttentionConfig a;
  a.variant = c.attention;
  a.n = c.p;
  a.d = c.d_model;
  a.heads = c.heads;
  a.band_l = c.band_l;
  a.output_projection = true;
  return a;
}

}  // namespace

void validate(const TransformerConfig& c) {
  if (c.p == 0 || c.d == 0 || c.d_model == 0 || c.ffn_width == 0 || c.heads == 0) {
    throw DimensionError("transformer extents must be positive");
  }
  if (c.blocks == 0) throw DimensionError("transformer needs at least one block");
  validate(attention_config(c));
}

void validate(const LstmConfig& c) {
  if (c.p == 0 || c.d == 0 || c.hidden == 0) throw DimensionError("lstm extents must be positive");
}

Tensor last_rows(const Tensor& windows, std::size_t batch, std::size_t p) {
  const auto d = windows.dim(1);
  return reshape(slice(reshape(windows, {batch, p, d}), 1, p - 1, p), {batch, d});
}

void Forecaster::set_increment_scale(const std::vector<double>& scale) {
  const auto d = scale.size();
  std::vector<double> diag(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) diag[i * d + i] = scale[i];
  increment_diag_ = Tensor({d, d}, std::move(diag));
}

Tensor Forecaster::finish(const Tensor& decoded, const Tensor& windows, std::size_t batch, bool increment) const {
  if (!increment) return decoded;
  const Tensor step = increment_diag_ ? matmul(decoded, *increment_diag_) : decoded;
  return add(step, last_rows(windows, batch, window()));
}

Time2Vec::Time2Vec(std::size_t p, std::size_t d, std::size_t d_model, Rng& rng) : p_(p) {
  omega = uniform_param({d_model}, 1.0, rng);
  phi = uniform_param({d_model}, 1.0, rng);
  w_embed = uniform_param({d, d_model}, fan_in_bound(d), rng);
  b_embed = uniform_param({d_model}, fan_in_bound(d), rng);
  std::vector<double> t(p);
  for (std::size_t i = 0; i < p; ++i) t[i] = static_cast<double>(i);
  times_ = Tensor({p, 1}, std::move(t));
}

Tensor Time2Vec::positional() const {
  const auto dm = omega.dim(0);
  Tensor lin = add_bias(matmul(times_, reshape(omega, {1, dm})), phi);
  if (dm == 1) return lin;
  return concat({slice(lin, 1, 0, 1), sin(slice(lin, 1, 1, dm))}, 1);
}

Tensor Time2Vec::forward(const Tensor& x, std::size_t batch) const {
  Tensor pos = positional();
  if (batch > 1) pos = tile(pos, batch);
  return add(add_bias(matmul(x, w_embed), b_embed), pos);
}

std::vector<NamedTensor> Time2Vec::parameters(const std::string& prefix) const {
  return {{prefix + "omega", omega}, {prefix + "phi", phi}, {prefix + "w_embed", w_embed},
          {prefix + "b_embed", b_embed}};
}

EncoderBlock::EncoderBlock(const TransformerConfig& c, Rng& rng)
    : attention(attention_config(c), rng), residual_norm_(c.residual_norm) {
  const auto dm = c.d_model, f = c.ffn_width;
  if (residual_norm_) {
    ln1_gain = Tensor::filled({dm}, 1.0, true);
    ln1_bias = Tensor::zeros({dm}, true);
    ln2_gain = Tensor::filled({dm}, 1.0, true);
    ln2_bias = Tensor::zeros({dm}, true);
  }
  w1 = uniform_param({dm, f}, fan_in_bound(dm), rng);
  b1 = uniform_param({f}, fan_in_bound(dm), rng);
  w2 = uniform_param({f, dm}, fan_in_bound(f), rng);
  b2 = uniform_param({dm}, fan_in_bound(f), rng);
}

Tensor EncoderBlock::forward(const Tensor& x, std::size_t batch) const {
  Tensor a = attention.forward(x, batch);
  Tensor r1 = residual_norm_ ? layer_norm(add(x, a), ln1_gain, ln1_bias) : a;
  Tensor ffn = add_bias(matmul(relu(add_bias(matmul(r1, w1), b1)), w2), b2);
  return residual_norm_ ? layer_norm(add(r1, ffn), ln2_gain, ln2_bias) : ffn;
}

std::vector<NamedTensor> EncoderBlock::parameters(const std::string& prefix) const {
  auto p = attention.parameters(prefix + "attn.");
  if (residual_norm_) {
    append(p, {{prefix + "ln1.gain", ln1_gain}, {prefix + "ln1.bias", ln1_bias},
               {prefix + "ln2.gain", ln2_gain}, {prefix + "ln2.bias", ln2_bias}});
  }
  append(p, {{prefix + "ffn.w1", w1}, {prefix + "ffn.b1", b1}, {prefix + "ffn.w2", w2},
             {prefix + "ffn.b2", b2}});
  return p;
}

ConvDecoder::ConvDecoder(std::size_t p, std::size_t d_model, std::size_t d, Rng& rng)
    : p_(p), d_model_(d_model) {
  kernels = uniform_param({d_model, 1, p}, fan_in_bound(p), rng);
  conv_bias = uniform_param({d_model}, fan_in_bound(p), rng);
  w_out = uniform_param({d_model, d}, fan_in_bound(d_model), rng);
  b_out = uniform_param({d}, fan_in_bound(d_model), rng);
}

Tensor ConvDecoder::forward(const Tensor& h, std::size_t batch) const {
  Tensor channels = transpose(reshape(h, {batch, p_, d_model_}));  // [B, d_model, p]
  Tensor pooled = reshape(conv1d(channels, kernels, conv_bias, d_model_), {batch, d_model_});
  return add_bias(matmul(pooled, w_out), b_out);
}

std::vector<NamedTensor> ConvDecoder::parameters(const std::string& prefix) const {
  return {{prefix + "conv.kernels", kernels}, {prefix + "conv.bias", conv_bias},
          {prefix + "w_out", w_out}, {prefix + "b_out", b_out}};
}

Transformer::Transformer(const TransformerConfig& c, Rng& rng)
    : embed((validate(c), c.p), c.d, c.d_model, rng), decoder(c.p, c.d_model, c.d, rng), config_(c) {
  for (std::size_t i = 0; i < c.blocks; ++i) blocks.emplace_back(c, rng);
}

Tensor Transformer::forward(const Tensor& windows, std::size_t batch) const {
  Tensor h = embed.forward(windows, batch);
  for (const auto& b : blocks) h = b.forward(h, batch);
  return finish(decoder.forward(h, batch), windows, batch, config_.predict_increment);
}

std::vector<NamedTensor> Transformer::parameters() const {
  auto p = embed.parameters("embed.");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    append(p, blocks[i].parameters("block" + std::to_string(i) + "."));
  }
  append(p, decoder.parameters("decoder."));
  return p;
}

std::size_t Transformer::formula_param_count() const { return transformer_param_count(config_); }

std::string Transformer::name() const {
  return "transformer_" + to_string(config_.attention);
}

std::size_t transformer_param_count(const TransformerConfig& c) {
  validate(c);
  const auto dm = c.d_model, f = c.ffn_width;
  const std::size_t embed = 2 * dm + c.d * dm + dm;
  const std::size_t block = attention_param_count(attention_config(c)) + (c.residual_norm ? 4 * dm : 0) +
                            dm * f + f + f * dm + dm;
  const std::size_t decoder = dm * c.p + dm + dm * c.d + c.d;
  return embed + c.blocks * block + decoder;
}

Lstm::Lstm(const LstmConfig& c, Rng& rng) : config_(c) {
  validate(c);
  const auto hd = c.hidden;
  w_x = uniform_param({c.d, 4 * hd}, fan_in_bound(hd), rng);
  w_h = uniform_param({hd, 4 * hd}, fan_in_bound(hd), rng);
  bias = uniform_param({4 * hd}, fan_in_bound(hd), rng);
  w_out = uniform_param({hd, c.d}, fan_in_bound(hd), rng);
  b_out = uniform_param({c.d}, fan_in_bound(hd), rng);
}

Tensor Lstm::final_hidden(const Tensor& windows, std::size_t batch) const {
  const auto p = config_.p, hd = config_.hidden;
  if (windows.rank() != 2 || windows.dim(0) != batch * p || windows.dim(1) != config_.d) {
    throw DimensionError("lstm expects [" + std::to_string(batch * p) + "x" + std::to_string(config_.d) +
                         "], got " + shape_string(windows.shape()));
  }
  Tensor xw = reshape(matmul(windows, w_x), {batch, p, 4 * hd});
  std::optional<Tensor> h, c;
  for (std::size_t t = 0; t < p; ++t) {
    Tensor gates = add_bias(reshape(slice(xw, 1, t, t + 1), {batch, 4 * hd}), bias);
    if (h) gates = add(gates, matmul(*h, w_h));
    Tensor i = sigmoid(slice(gates, 1, 0, hd));
    Tensor f = sigmoid(slice(gates, 1, hd, 2 * hd));
    Tensor g = tanh(slice(gates, 1, 2 * hd, 3 * hd));
    Tensor o = sigmoid(slice(gates, 1, 3 * hd, 4 * hd));
    c = c ? add(hadamard(f, *c), hadamard(i, g)) : hadamard(i, g);
    h = hadamard(o, tanh(*c));
  }
  return *h;
}

Tensor Lstm::forward(const Tensor& windows, std::size_t batch) const {
  const Tensor h = final_hidden(windows, batch);
  return finish(add_bias(matmul(h, w_out), b_out), windows, batch, config_.predict_increment);
}

std::vector<NamedTensor> Lstm::parameters() const {
  return {{"w_x", w_x}, {"w_h", w_h}, {"bias", bias}, {"w_out", w_out}, {"b_out", b_out}};
}

std::size_t Lstm::formula_param_count() const { return lstm_param_count(config_); }

std::size_t lstm_param_count(const LstmConfig& c) {
  validate(c);
  return c.d * 4 * c.hidden + c.hidden * 4 * c.hidden + 4 * c.hidden + c.hidden * c.d + c.d;
}

}  // namespace eal
