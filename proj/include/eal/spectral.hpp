#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "eal/attention.hpp"
#include "eal/dynsys.hpp"

namespace eal {

struct SpectralDecomposition {
  std::size_t m = 0;
  std::vector<double> amplitude;  // |X_k|
  std::vector<double> phase;      // arg X_k
  std::vector<double> frequency;  // k / M, cycles per sample
  // Units are bins k in [0, M/2]; a unit stands for k and its conjugate M-k.
  std::vector<std::size_t> top_k;

  std::complex<double> coefficient(std::size_t k) const { return std::polar(amplitude[k], phase[k]); }
  // Bins in [0, M/2] sorted by descending amplitude, ties by ascending index.
  std::vector<std::size_t> ranked_units() const;
};

// Direct O(M^2) transform, X_k = sum_t x_t exp(-2 pi i k t / M).
SpectralDecomposition dft(const std::vector<double>& signal);
// Synthesizes only the listed bins; each listed k also brings in its conjugate.
std::vector<double> idft(const SpectralDecomposition& s, const std::vector<std::size_t>& keep);
std::vector<std::size_t> all_units(std::size_t m);

// Smallest K (conjugate pairs counted once) whose truncation reaches the target
// reconstruction energy in percent. Sets s.top_k to the chosen units.
std::size_t select_top_k(SpectralDecomposition& s, const std::vector<double>& signal, double target_energy);
// Fixed-K mode.
void select_top_k_fixed(SpectralDecomposition& s, std::size_t k);

// Real contribution of bin k and its conjugate.
std::vector<double> component_wave(const SpectralDecomposition& s, std::size_t k);
// Period in samples of bin k, infinite for the DC bin.
double component_period(const SpectralDecomposition& s, std::size_t k);
// max(2, ceil(P)) capped at `cap`.
std::size_t module_input_size(double period, std::size_t cap);

double rel_l2(const std::vector<double>& reference, const std::vector<double>& approx);
double reconstruction_energy(const std::vector<double>& reference, const std::vector<double>& approx);

struct ReconstructionConfig {
  AttentionVariant variant = AttentionVariant::easy_dense;
  std::size_t epochs = 1000;
  std::size_t batch = 8;
  double learning_rate = 1e-3;
  double momentum = 0.0;
  std::size_t input_cap = 64;
  std::uint64_t seed = 0;
};

struct ComponentResult {
  std::size_t bin = 0;
  std::size_t input_size = 0;
  double period = 0.0;
  double amplitude = 0.0;
  double error = 0.0;  // relative l2 of the learned unit wave
  bool diverged = false;
  std::string message;
  std::vector<double> learned;  // scaled back to the component's amplitude
  std::vector<double> loss_curve;
};

struct ReconstructionResult {
  std::vector<double> reconstruction;
  std::vector<ComponentResult> components;
  double mean_error = 0.0;  // mean of the per-component relative errors
  double energy = 0.0;
  double oracle_energy = 0.0;  // energy of the exact K-bin truncation
  std::size_t parameters = 0;
};

// Trains one single-head attention module per selected unit and sums the
// learned components. Set `threads` above 1 to train modules concurrently.
ReconstructionResult multi_attention_reconstruct(const std::vector<double>& signal,
                                                 const SpectralDecomposition& spectrum,
                                                 const ReconstructionConfig& config,
                                                 std::size_t threads = 1);

// Thin SVD A = U diag(s) V^T of an m x n row-major matrix by one-sided Jacobi
// rotations; s descending, signs fixed so each column of U has a positive
// largest-magnitude entry.
struct Svd {
  std::size_t rows = 0, cols = 0, rank = 0;  // rank here is min(rows, cols)
  std::vector<double> u;  // [rows, rank]
  std::vector<double> s;  // [rank]
  std::vector<double> v;  // [cols, rank]

  std::vector<double> reconstruct() const;
};

Svd svd(const std::vector<double>& a, std::size_t rows, std::size_t cols);

// One matrix family analyzed per time sample and per window row i.
struct SvdFamily {
  std::string name;
  std::vector<std::vector<Svd>> samples;  // [sample][row]
  double max_reconstruction_error = 0.0;
};

// For window row r_i (a feature vector) the families are the self-combination
// r_i^T r_i, the weighted product W_q W_k^T r_i^T r_i, and the row softmax of
// that product scaled by 1/sqrt(k).
struct SvdReport {
  std::vector<std::size_t> times;
  SvdFamily combination;
  SvdFamily weighted;
  SvdFamily score;
  std::vector<std::vector<double>> alpha_diagonal;  // per sample, diagonal of the live attention
  std::vector<std::string> failures;
};

// Analyzes a sine self-attention module over the input stream.
SvdReport svd_analyze(const SineDataset& data, const Attention& self_attention);

}  // namespace eal
