#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "eal/attention.hpp"

namespace eal {

struct TransformerConfig {
  std::size_t p = 64;
  std::size_t d = 3;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t ffn_width = 64;
  std::size_t blocks = 1;
  AttentionVariant attention = AttentionVariant::easy_dense;
  std::size_t band_l = 0;
  bool residual_norm = true;
  bool predict_increment = false;  // output = last window row + increment_scale * decoded value
};

struct LstmConfig {
  std::size_t p = 64;
  std::size_t d = 3;
  std::size_t hidden = 128;
  bool predict_increment = false;
};

void validate(const TransformerConfig& c);
void validate(const LstmConfig& c);

// Maps a batch of windows stacked as [B*p, d] to next-step predictions [B, d].
class Forecaster {
 public:
  virtual ~Forecaster() = default;
  virtual Tensor forward(const Tensor& windows, std::size_t batch) const = 0;
  virtual std::vector<NamedTensor> parameters() const = 0;
  virtual std::size_t formula_param_count() const = 0;
  virtual std::size_t window() const = 0;
  virtual std::size_t features() const = 0;
  virtual std::string name() const = 0;

  // Per-feature spread of one-step increments, used when predicting increments.
  void set_increment_scale(const std::vector<double>& scale);

 protected:
  Tensor finish(const Tensor& decoded, const Tensor& windows, std::size_t batch, bool increment) const;

 private:
  std::optional<Tensor> increment_diag_;
};

class Time2Vec {
 public:
  Time2Vec(std::size_t p, std::size_t d, std::size_t d_model, Rng& rng);
  // [B*p, d] -> [B*p, d_model]
  Tensor forward(const Tensor& x, std::size_t batch) const;
  // Positional part alone, [p, d_model]: channel 0 linear, the rest periodic.
  Tensor positional() const;
  std::vector<NamedTensor> parameters(const std::string& prefix) const;

  Tensor omega, phi;      // [d_model]
  Tensor w_embed, b_embed;  // [d, d_model], [d_model]

 private:
  std::size_t p_;
  Tensor times_;  // [p, 1]
};

class EncoderBlock {
 public:
  EncoderBlock(const TransformerConfig& c, Rng& rng);
  Tensor forward(const Tensor& x, std::size_t batch) const;
  std::vector<NamedTensor> parameters(const std::string& prefix) const;

  Attention attention;
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  Tensor w1, b1, w2, b2;

 private:
  bool residual_norm_;
};

// Depthwise valid convolution of width p over time (p -> 1 per channel),
// followed by a linear map d_model -> d.
class ConvDecoder {
 public:
  ConvDecoder(std::size_t p, std::size_t d_model, std::size_t d, Rng& rng);
  Tensor forward(const Tensor& h, std::size_t batch) const;  // [B*p, d_model] -> [B, d]
  std::vector<NamedTensor> parameters(const std::string& prefix) const;

  Tensor kernels, conv_bias;  // [d_model, 1, p], [d_model]
  Tensor w_out, b_out;        // [d_model, d], [d]

 private:
  std::size_t p_, d_model_;
};

class Transformer : public Forecaster {
 public:
  Transformer(const TransformerConfig& c, Rng& rng);
  Tensor forward(const Tensor& windows, std::size_t batch) const override;
  std::vector<NamedTensor> parameters() const override;
  std::size_t formula_param_count() const override;
  std::size_t window() const override { return config_.p; }
  std::size_t features() const override { return config_.d; }
  std::string name() const override;
  const TransformerConfig& config() const { return config_; }

  Time2Vec embed;
  std::vector<EncoderBlock> blocks;
  ConvDecoder decoder;

 private:
  TransformerConfig config_;
};

class Lstm : public Forecaster {
 public:
  Lstm(const LstmConfig& c, Rng& rng);
  Tensor forward(const Tensor& windows, std::size_t batch) const override;
  std::vector<NamedTensor> parameters() const override;
  std::size_t formula_param_count() const override;
  std::size_t window() const override { return config_.p; }
  std::size_t features() const override { return config_.d; }
  std::string name() const override { return "lstm"; }
  const LstmConfig& config() const { return config_; }
  // Hidden state after the last window step, [B, hidden].
  Tensor final_hidden(const Tensor& windows, std::size_t batch) const;

  // Gate blocks ordered input, forget, cell, output along the 4*hidden axis.
  Tensor w_x, w_h, bias;  // [d, 4H], [H, 4H], [4H]
  Tensor w_out, b_out;    // [H, d], [d]

 private:
  LstmConfig config_;
};

std::size_t transformer_param_count(const TransformerConfig& c);
std::size_t lstm_param_count(const LstmConfig& c);

// Last row of every window, [B, d].
Tensor last_rows(const Tensor& windows, std::size_t batch, std::size_t p);

}  // namespace eal
