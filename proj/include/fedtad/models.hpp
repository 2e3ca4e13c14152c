#pragma once

// The two trainable networks: a 2-layer GCN node classifier and the
// conditional MLP feature generator, plus the losses built on them.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedtad/graph.hpp"
#include "fedtad/tensor.hpp"

namespace fedtad {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Ordered (name, tensor) list: the unit exchanged between clients and server.
class ModelWeights {
 public:
  void add(std::string name, Matrix value, bool trainable = true);

  std::size_t size() const noexcept { return entries_.size(); }
  NamedTensor& operator[](std::size_t i) { return entries_[i]; }
  const NamedTensor& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;

  /// Pointers to every tensor in order, for optimizers.
  std::vector<Tensor*> parameters();
  void set_requires_grad(bool track);
  void zero_grad();

  /// Identical names and shapes in identical order.
  bool same_architecture(const ModelWeights& other) const;
  /// Copies values only; throws ShapeError naming the first mismatching tensor.
  void assign_values(const ModelWeights& other);
  /// Values equal bit-for-bit.
  bool values_equal(const ModelWeights& other) const;

 private:
  std::vector<NamedTensor> entries_;
};

/// {"tensors": [{"name", "shape": [rows, cols], "values": [row-major]}]}
void write_checkpoint(const ModelWeights& weights, const std::filesystem::path& path);
ModelWeights read_checkpoint(const std::filesystem::path& path);

enum class Mode { train, eval };

class GcnModel {
 public:
  GcnModel() = default;
  /// Glorot-uniform initialization from `seed`.
  GcnModel(std::size_t in_dim, std::size_t hidden_dim, std::size_t num_classes, double dropout, std::uint64_t seed);

  std::size_t in_dim() const noexcept { return in_dim_; }
  std::size_t hidden_dim() const noexcept { return hidden_dim_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  double dropout() const noexcept { return dropout_; }

  ModelWeights& weights() noexcept { return weights_; }
  const ModelWeights& weights() const noexcept { return weights_; }

 private:
  std::size_t in_dim_ = 0;
  std::size_t hidden_dim_ = 0;
  std::size_t num_classes_ = 0;
  double dropout_ = 0.0;
  ModelWeights weights_;
};

/// A relu(A drop(X) W1) W2 with A the normalized adjacency. Gradients reach
/// the model tensors that have requires_grad set. Dropout only in train mode.
Var gcn_forward(Tape& tape, GcnModel& model, const NormalizedAdjacency& adj, Var x, Mode mode,
                std::uint64_t dropout_seed);
/// Same computation with every weight treated as a constant.
Var gcn_forward(Tape& tape, const GcnModel& model, const NormalizedAdjacency& adj, Var x);

/// Eval-mode logits without keeping a tape around.
Matrix gcn_logits(const GcnModel& model, const NormalizedAdjacency& adj, const Matrix& x);

/// Mean over `mask` of -log softmax(logits)[label]. Throws on an empty mask.
Var masked_cross_entropy(Var logits, std::span<const int> labels, std::span<const std::uint32_t> mask);

/// Number of rows in `mask` whose argmax (ties: lowest class) equals the label.
std::size_t count_correct(const Matrix& logits, std::span<const int> labels, std::span<const std::uint32_t> mask);

class GeneratorModel {
 public:
  GeneratorModel() = default;
  /// MLP (noise ++ onehot(label)) -> hidden -> relu -> out_dim, Glorot init from `seed`.
  GeneratorModel(std::size_t noise_dim, std::size_t num_classes, std::size_t hidden_dim, std::size_t out_dim,
                 std::uint64_t seed);

  std::size_t noise_dim() const noexcept { return noise_dim_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t out_dim() const noexcept { return out_dim_; }

  ModelWeights& weights() noexcept { return weights_; }
  const ModelWeights& weights() const noexcept { return weights_; }

  /// Generator input rows noise_i ++ onehot(labels_i).
  Matrix input_rows(const Matrix& noise, std::span<const int> labels) const;
  Var forward(Tape& tape, const Matrix& noise, std::span<const int> labels);

 private:
  std::size_t noise_dim_ = 0;
  std::size_t num_classes_ = 0;
  std::size_t out_dim_ = 0;
  ModelWeights weights_;
  Matrix input_;  // kept alive for the tape that borrows it
};

struct GeneratorInputs {
  Matrix noise;             // B x noise_dim, standard normal
  std::vector<int> labels;  // floor(B/C) per class, remainder to the lowest class ids
};

/// Label-balanced labels plus Gaussian noise, deterministic per seed.
GeneratorInputs sample_generator_inputs(std::size_t count, std::size_t num_classes, std::size_t noise_dim,
                                        std::uint64_t seed);

/// Pseudo features and labels for `count` nodes (no gradient tracking).
std::pair<Matrix, std::vector<int>> generate_features(GeneratorModel& gen, std::size_t count, std::uint64_t seed);

/// Links each row to its k largest inner products (self excluded, ties to the
/// lower index), then symmetrizes by union. Throws ShapeError when k >= rows.
Adjacency knn_adjacency(const Matrix& x, std::size_t k);

/// Mean pairwise cosine similarity over all B^2 ordered pairs, diagonal included.
Var diversity_loss(Var x);
double diversity_loss(const Matrix& x);

}  // namespace fedtad
