#include "fedtad/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "fedtad/errors.hpp"

namespace fedtad {
namespace {

Matrix glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  Matrix m(fan_in, fan_out);
  for (auto& v : m.values()) v = dist(rng);
  return m;
}

}  // namespace

void ModelWeights::add(std::string name, Matrix value, bool trainable) {
  entries_.push_back({std::move(name), Tensor(std::move(value), trainable)});
}

Tensor& ModelWeights::at(std::string_view name) {
  for (auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw Error("no tensor named '" + std::string(name) + "'");
}

const Tensor& ModelWeights::at(std::string_view name) const {
  return const_cast<ModelWeights*>(this)->at(name);
}

std::vector<Tensor*> ModelWeights::parameters() {
  std::vector<Tensor*> out;
  out.reserve(entries_.size());
  for (auto& e : entries_) out.push_back(&e.tensor);
  return out;
}

void ModelWeights::set_requires_grad(bool track) {
  for (auto& e : entries_) e.tensor.requires_grad = track;
}

void ModelWeights::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

bool ModelWeights::same_architecture(const ModelWeights& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name) return false;
    if (!entries_[i].tensor.value.same_shape(other.entries_[i].tensor.value)) return false;
  }
  return true;
}

void ModelWeights::assign_values(const ModelWeights& other) {
  if (entries_.size() != other.entries_.size()) throw ShapeError("assign_values: tensor count mismatch");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& src = other.entries_[i];
    if (src.name != entries_[i].name || !src.tensor.value.same_shape(entries_[i].tensor.value))
      throw ShapeError("assign_values: mismatch at tensor '" + entries_[i].name + "'");
    entries_[i].tensor.value = src.tensor.value;
  }
}

bool ModelWeights::values_equal(const ModelWeights& other) const {
  if (!same_architecture(other)) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (!(entries_[i].tensor.value == other.entries_[i].tensor.value)) return false;
  return true;
}

void write_checkpoint(const ModelWeights& weights, const std::filesystem::path& path) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& e : weights) {
    const Matrix& v = e.tensor.value;
    tensors.push_back({{"name", e.name},
                       {"shape", {v.rows(), v.cols()}},
                       {"values", std::vector<double>(v.values().begin(), v.values().end())}});
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << nlohmann::json{{"tensors", tensors}}.dump() << "\n";
}

ModelWeights read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    ModelWeights w;
    for (const auto& t : j.at("tensors")) {
      const auto shape = t.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) throw ShapeError("checkpoint tensor shape must have two dims");
      w.add(t.at("name").get<std::string>(), Matrix(shape[0], shape[1], t.at("values").get<std::vector<double>>()));
    }
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

GcnModel::GcnModel(std::size_t in_dim, std::size_t hidden_dim, std::size_t num_classes, double dropout,
                   std::uint64_t seed)
    : in_dim_(in_dim), hidden_dim_(hidden_dim), num_classes_(num_classes), dropout_(dropout) {
  std::mt19937_64 rng(seed);
  weights_.add("conv1.weight", glorot(in_dim, hidden_dim, rng));
  weights_.add("conv2.weight", glorot(hidden_dim, num_classes, rng));
}

Var gcn_forward(Tape& tape, GcnModel& model, const NormalizedAdjacency& adj, Var x, Mode mode,
                std::uint64_t dropout_seed) {
  if (x.cols() != model.in_dim())
    throw ShapeError("gcn_forward: features have " + std::to_string(x.cols()) + " columns, model expects " +
                     std::to_string(model.in_dim()));
  const Var w1 = tape.input(model.weights()[0].tensor);
  const Var w2 = tape.input(model.weights()[1].tensor);
  const Var dropped = mode == Mode::train ? dropout(x, model.dropout(), dropout_seed) : x;
  const Var hidden = relu(spmm(adj.matrix, matmul(dropped, w1)));
  return spmm(adj.matrix, matmul(hidden, w2));
}

Var gcn_forward(Tape& tape, const GcnModel& model, const NormalizedAdjacency& adj, Var x) {
  if (x.cols() != model.in_dim())
    throw ShapeError("gcn_forward: features have " + std::to_string(x.cols()) + " columns, model expects " +
                     std::to_string(model.in_dim()));
  const Var w1 = tape.input(model.weights()[0].tensor.value);
  const Var w2 = tape.input(model.weights()[1].tensor.value);
  const Var hidden = relu(spmm(adj.matrix, matmul(x, w1)));
  return spmm(adj.matrix, matmul(hidden, w2));
}

Matrix gcn_logits(const GcnModel& model, const NormalizedAdjacency& adj, const Matrix& x) {
  Tape tape;
  return gcn_forward(tape, model, adj, tape.input(x)).value();
}

Var masked_cross_entropy(Var logits, std::span<const int> labels, std::span<const std::uint32_t> mask) {
  if (mask.empty()) throw ShapeError("masked_cross_entropy: empty mask");
  std::vector<double> weights(logits.rows(), 0.0);
  const double w = 1.0 / static_cast<double>(mask.size());
  for (auto i : mask) {
    if (i >= logits.rows()) throw ShapeError("masked_cross_entropy: mask index out of range");
    weights[i] += w;
  }
  return weighted_nll(log_softmax(logits), labels, weights);
}

std::size_t count_correct(const Matrix& logits, std::span<const int> labels, std::span<const std::uint32_t> mask) {
  std::size_t correct = 0;
  for (auto i : mask) {
    const auto row = logits.row(i);
    const auto pred = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (pred == labels[i]) ++correct;
  }
  return correct;
}

GeneratorModel::GeneratorModel(std::size_t noise_dim, std::size_t num_classes, std::size_t hidden_dim,
                               std::size_t out_dim, std::uint64_t seed)
    : noise_dim_(noise_dim), num_classes_(num_classes), out_dim_(out_dim) {
  std::mt19937_64 rng(seed);
  weights_.add("fc1.weight", glorot(noise_dim + num_classes, hidden_dim, rng));
  weights_.add("fc1.bias", Matrix(1, hidden_dim));
  weights_.add("fc2.weight", glorot(hidden_dim, out_dim, rng));
  weights_.add("fc2.bias", Matrix(1, out_dim));
}

Matrix GeneratorModel::input_rows(const Matrix& noise, std::span<const int> labels) const {
  if (noise.cols() != noise_dim_ || noise.rows() != labels.size())
    throw ShapeError("generator: noise is " + std::to_string(noise.rows()) + "x" + std::to_string(noise.cols()) +
                     " for " + std::to_string(labels.size()) + " labels");
  Matrix in(noise.rows(), noise_dim_ + num_classes_);
  for (std::size_t i = 0; i < noise.rows(); ++i) {
    std::copy(noise.row(i).begin(), noise.row(i).end(), in.row(i).begin());
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes_)
      throw ShapeError("generator: label out of range");
    in(i, noise_dim_ + static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return in;
}

Var GeneratorModel::forward(Tape& tape, const Matrix& noise, std::span<const int> labels) {
  const Var in = tape.constant(input_rows(noise, labels));
  const Var h = relu(add(matmul(in, tape.input(weights_[0].tensor)), tape.input(weights_[1].tensor)));
  return add(matmul(h, tape.input(weights_[2].tensor)), tape.input(weights_[3].tensor));
}

GeneratorInputs sample_generator_inputs(std::size_t count, std::size_t num_classes, std::size_t noise_dim,
                                        std::uint64_t seed) {
  if (num_classes == 0) throw ShapeError("sample_generator_inputs: no classes");
  GeneratorInputs in;
  in.labels.reserve(count);
  const std::size_t per = count / num_classes;
  const std::size_t extra = count % num_classes;
  for (std::size_t c = 0; c < num_classes; ++c)
    in.labels.insert(in.labels.end(), per + (c < extra ? 1 : 0), static_cast<int>(c));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  in.noise = Matrix(count, noise_dim);
  for (auto& v : in.noise.values()) v = z(rng);
  return in;
}

std::pair<Matrix, std::vector<int>> generate_features(GeneratorModel& gen, std::size_t count, std::uint64_t seed) {
  GeneratorInputs in = sample_generator_inputs(count, gen.num_classes(), gen.noise_dim(), seed);
  Tape tape;
  Matrix x = gen.forward(tape, in.noise, in.labels).value();
  return {std::move(x), std::move(in.labels)};
}

Adjacency knn_adjacency(const Matrix& x, std::size_t k) {
  const std::size_t b = x.rows();
  if (k >= b) throw ShapeError("knn_adjacency: k=" + std::to_string(k) + " must be < " + std::to_string(b) + " rows");
  Matrix sim(b, b);
  linalg::matmul_nt_acc(x, x, sim);
  std::vector<Edge> edges;
  edges.reserve(b * k);
  std::vector<std::uint32_t> idx;
  for (std::size_t u = 0; u < b; ++u) {
    idx.resize(b);
    std::iota(idx.begin(), idx.end(), 0u);
    idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(u));
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::uint32_t a, std::uint32_t c) {
                        if (sim(u, a) != sim(u, c)) return sim(u, a) > sim(u, c);
                        return a < c;
                      });
    for (std::size_t j = 0; j < k; ++j) edges.push_back({static_cast<std::uint32_t>(u), idx[j]});
  }
  return Adjacency::from_edges(b, edges);
}

Var diversity_loss(Var x) { return mean(cosine_similarity_matrix(x)); }

double diversity_loss(const Matrix& x) {
  Tape tape;
  return diversity_loss(tape.input(x)).item();
}

}  // namespace fedtad
