#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "uiqbench/embedstore.hpp"
#include "uiqbench/error.hpp"

namespace uiqbench {

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return std::span<double>(data).subspan(r * cols, cols); }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data).subspan(r * cols, cols);
  }
  Matrix transposed() const;

  bool operator==(const Matrix&) const = default;
};

// Uniform double in [0, 1) from a stateless hash of the key tuple.
double counter_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c,
                       std::uint64_t d);

inline constexpr double kLayerNormEpsilon = 1e-5;
inline constexpr std::size_t kRetrievalDim = 512;

/// Bias-free linear map followed by dropout, layer norm and L2 normalization.
///
/// `weight` is in_dim x out_dim so that a row batch X projects as X * weight.
/// Dropout is active only in training mode and uses inverted scaling.
struct ProjectionHead {
  Matrix weight;
  std::vector<double> ln_gamma;
  std::vector<double> ln_beta;
  double dropout_rate = 0.1;

  std::size_t in_dim() const noexcept { return weight.rows; }
  std::size_t out_dim() const noexcept { return weight.cols; }

  // Xavier-uniform weights, gamma = 1, beta = 0. `stream` separates heads that share a seed.
  static ProjectionHead initialize(std::size_t in_dim, std::size_t out_dim, std::uint64_t seed,
                                   std::uint64_t stream, double dropout_rate = 0.1);

  bool operator==(const ProjectionHead&) const = default;
};

// Dropout mask key: (seed, stream, step, row_key[r], column).
struct DropoutKey {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::uint64_t step = 0;
  std::span<const std::uint64_t> row_keys;  // empty: batch position is the row key
};

// Intermediates kept for backpropagation.
struct HeadActivations {
  Matrix input;
  Matrix mask;   // dropout multipliers (0 or 1/(1-p)); empty in eval mode
  Matrix xhat;   // layer-norm normalized values
  std::vector<double> rstd;
  std::vector<double> norms;  // L2 norm of each layer-norm output row
  Matrix output;              // unit-norm rows
};

HeadActivations forward_with_cache(const ProjectionHead& head, const Matrix& batch, bool train_mode,
                                   const DropoutKey& key = {});
Matrix forward(const ProjectionHead& head, const Matrix& batch, bool train_mode,
               const DropoutKey& key = {});

struct HeadGradients {
  Matrix weight;
  std::vector<double> ln_gamma;
  std::vector<double> ln_beta;
};

HeadGradients backward(const ProjectionHead& head, const HeadActivations& acts, const Matrix& grad_output);

// Symmetric InfoNCE over a square similarity matrix S (rows: text, cols: audio):
// 0.5 * (mean_i CE(row i -> i) + mean_j CE(col j -> j)) on logits S / tau.
double infonce_loss(const Matrix& sim, double tau);
// Exact gradient of infonce_loss with respect to each entry of S.
Matrix infonce_grad(const Matrix& sim, double tau);

struct ContrastiveStep {
  double loss = 0.0;
  HeadGradients text;
  HeadGradients audio;
};

// Loss and parameter gradients for one batch of aligned (text, audio) rows.
ContrastiveStep contrastive_step(const ProjectionHead& text_head, const ProjectionHead& audio_head,
                                 const Matrix& text_batch, const Matrix& audio_batch, double tau,
                                 bool train_mode, const DropoutKey& text_key = {},
                                 const DropoutKey& audio_key = {});

struct TrainConfig {
  double temperature = 0.07;
  double learning_rate = 3e-4;
  std::size_t batch_size = 64;
  std::size_t max_steps = 1000;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double weight_decay = 0.0;
  // Epochs without validation R@10 improvement before stopping; 0 disables.
  std::size_t patience = 0;

  void validate() const;
};

struct TrainPair {
  std::size_t text_row = 0;
  std::size_t audio_row = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  // steps completed at the end of this epoch
  double val_recall_at_10 = 0.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainTrace {
  std::vector<double> step_loss;
  std::vector<EpochRecord> epochs;
  bool early_stopped = false;
  std::size_t best_epoch = 0;

  bool operator==(const TrainTrace&) const = default;
};

struct TrainResult {
  ProjectionHead text_head;
  ProjectionHead audio_head;
  TrainTrace trace;
};

class DivergenceError : public ValidationError {
 public:
  DivergenceError(std::size_t step, const std::string& what) : ValidationError(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// AdamW over both heads. When validation pairs are supplied, R@10 is measured
// at the end of each epoch and the best-scoring heads are returned.
TrainResult train(ProjectionHead text_head, ProjectionHead audio_head, const EmbeddingSet& text_emb,
                  const EmbeddingSet& audio_emb, const std::vector<TrainPair>& train_pairs,
                  const std::vector<TrainPair>& val_pairs, const TrainConfig& cfg);

// Eval-mode projection of every row in `set`; the result is float32 and normalized.
EmbeddingSet project(const ProjectionHead& head, const EmbeddingSet& set);

// R@k (percent) of text->audio retrieval over the audio rows referenced by `pairs`.
double pair_recall_at_k(const ProjectionHead& text_head, const ProjectionHead& audio_head,
                        const EmbeddingSet& text_emb, const EmbeddingSet& audio_emb,
                        const std::vector<TrainPair>& pairs, std::size_t k);

// Checkpoint: weight matrix in the embedding container at `path` (rows "w<i>")
// plus "<path>.head.json" with layer-norm parameters and dropout rate.
void save_checkpoint(const ProjectionHead& head, const std::filesystem::path& path);
ProjectionHead load_checkpoint(const std::filesystem::path& path);

void save_trace(const TrainTrace& trace, const std::filesystem::path& path);

}  // namespace uiqbench
