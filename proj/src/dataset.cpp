#include "fedtad/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string_view>

#include <json.hpp>

#include "fedtad/errors.hpp"

namespace fedtad {
namespace {

using json = nlohmann::json;
using Kind = DatasetError::Kind;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError(Kind::missing_file, path.string(), 0, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Calls fn(line_number, line) for every non-empty line.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view() : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    fn(line_no, line);
  }
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::size_t meta_count(const json& meta, const char* key, const std::string& file) {
  if (!meta.contains(key) || !meta[key].is_number_integer() || meta[key].get<long long>() < 0)
    throw DatasetError(Kind::malformed_row, file, 0, std::string("missing or invalid \"") + key + "\"");
  return meta[key].get<std::size_t>();
}

std::vector<std::uint32_t> split_ids(const json& j, const char* key, std::size_t n, const std::string& file) {
  std::vector<std::uint32_t> ids;
  if (!j.contains(key)) return ids;
  for (const auto& v : j[key]) {
    if (!v.is_number_integer() || v.get<long long>() < 0 || v.get<std::size_t>() >= n)
      throw DatasetError(Kind::invalid_value, file, 0, std::string("\"") + key + "\" index out of range");
    ids.push_back(v.get<std::uint32_t>());
  }
  return ids;
}

void write_real(std::string& out, double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError(Kind::missing_file, path.string(), 0, "cannot write file");
  out << content;
}

}  // namespace

void SbmSpec::validate() const {
  if (nodes_per_class.empty()) throw ConfigError("sbm: nodes_per_class must be nonempty");
  if (!(intra_prob >= 0.0 && intra_prob <= 1.0)) throw ConfigError("sbm: intra_prob outside [0,1]");
  if (!(inter_prob >= 0.0 && inter_prob <= 1.0)) throw ConfigError("sbm: inter_prob outside [0,1]");
  if (!(class_center_separation >= 0.0)) throw ConfigError("sbm: class_center_separation must be >= 0");
  if (!(noise_std >= 0.0)) throw ConfigError("sbm: noise_std must be >= 0");
  if (feature_dim == 0) throw ConfigError("sbm: feature_dim must be >= 1");
}

DatasetBundle load_dataset(const std::filesystem::path& dir) {
  const auto meta_path = dir / "meta.json";
  const std::string meta_file = meta_path.string();
  json meta;
  try {
    meta = json::parse(read_file(meta_path));
  } catch (const json::parse_error& e) {
    throw DatasetError(Kind::malformed_row, meta_file, 0, std::string("invalid JSON: ") + e.what());
  }
  const std::size_t n = meta_count(meta, "num_nodes", meta_file);
  const std::size_t num_classes = meta_count(meta, "num_classes", meta_file);
  const std::size_t f = meta_count(meta, "feature_dim", meta_file);
  if (num_classes < 1) throw DatasetError(Kind::invalid_value, meta_file, 0, "num_classes must be >= 1");
  DatasetBundle bundle;
  bundle.name = meta.value("name", dir.filename().string());

  // labels
  const std::string labels_file = (dir / "labels.csv").string();
  std::vector<int> labels;
  labels.reserve(n);
  for_each_line(read_file(dir / "labels.csv"), [&](std::size_t line_no, std::string_view line) {
    int y = 0;
    if (!parse_number(line, y)) throw DatasetError(Kind::malformed_row, labels_file, line_no, "not an integer");
    if (y != kUnlabeled && (y < 0 || static_cast<std::size_t>(y) >= num_classes)) {
      throw DatasetError(Kind::invalid_value, labels_file, line_no,
                         "label " + std::to_string(y) + " outside [0," + std::to_string(num_classes) + ")");
    }
    labels.push_back(y);
  });
  if (labels.size() != n) {
    throw DatasetError(Kind::count_mismatch, labels_file, 0,
                       std::to_string(labels.size()) + " labels, meta.json says " + std::to_string(n));
  }

  // features
  const std::string features_file = (dir / "features.csv").string();
  std::vector<double> values;
  values.reserve(n * f);
  std::size_t rows = 0;
  for_each_line(read_file(dir / "features.csv"), [&](std::size_t line_no, std::string_view line) {
    std::size_t arity = 0;
    while (true) {
      const auto comma = line.find(',');
      double v = 0.0;
      if (!parse_number(line.substr(0, comma), v))
        throw DatasetError(Kind::malformed_row, features_file, line_no, "not a real number");
      values.push_back(v);
      ++arity;
      if (comma == std::string_view::npos) break;
      line.remove_prefix(comma + 1);
    }
    if (arity != f) {
      throw DatasetError(Kind::malformed_row, features_file, line_no,
                         std::to_string(arity) + " values, expected " + std::to_string(f));
    }
    ++rows;
  });
  if (rows != n) {
    throw DatasetError(Kind::count_mismatch, features_file, 0,
                       std::to_string(rows) + " rows, meta.json says " + std::to_string(n));
  }

  // edges
  const std::string edges_file = (dir / "edges.csv").string();
  std::vector<Edge> edges;
  for_each_line(read_file(dir / "edges.csv"), [&](std::size_t line_no, std::string_view line) {
    const auto comma = line.find(',');
    std::uint32_t u = 0, v = 0;
    if (comma == std::string_view::npos || !parse_number(line.substr(0, comma), u) ||
        !parse_number(line.substr(comma + 1), v)) {
      throw DatasetError(Kind::malformed_row, edges_file, line_no, "expected \"u,v\"");
    }
    if (u >= n || v >= n) {
      throw DatasetError(Kind::invalid_value, edges_file, line_no,
                         "endpoint out of range for " + std::to_string(n) + " nodes");
    }
    edges.push_back({u, v});
  });

  bundle.graph = build_graph(edges, Matrix(n, f, std::move(values)), std::move(labels), static_cast<int>(num_classes));

  const auto split_path = dir / "split.json";
  if (std::filesystem::exists(split_path)) {
    const std::string split_file = split_path.string();
    json j;
    try {
      j = json::parse(read_file(split_path));
    } catch (const json::parse_error& e) {
      throw DatasetError(Kind::malformed_row, split_file, 0, std::string("invalid JSON: ") + e.what());
    }
    DatasetSplit split{split_ids(j, "train", n, split_file), split_ids(j, "val", n, split_file),
                       split_ids(j, "test", n, split_file)};
    std::vector<char> seen(n, 0);
    for (const auto* part : {&split.train, &split.val, &split.test}) {
      for (auto id : *part) {
        if (seen[id]) throw DatasetError(Kind::invalid_value, split_file, 0, "split sets overlap at node " + std::to_string(id));
        seen[id] = 1;
      }
    }
    bundle.split = std::move(split);
  }
  return bundle;
}

void save_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const Graph& g = bundle.graph;
  json meta = {{"num_nodes", g.num_nodes()},
               {"num_classes", g.num_classes()},
               {"feature_dim", g.feature_dim()},
               {"name", bundle.name}};
  write_file(dir / "meta.json", meta.dump() + "\n");

  std::string edges;
  for (const Edge& e : g.edge_list()) edges += std::to_string(e.u) + "," + std::to_string(e.v) + "\n";
  write_file(dir / "edges.csv", edges);

  std::string features;
  features.reserve(g.num_nodes() * g.feature_dim() * 2);
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    const auto row = g.features().row(i);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) features += ',';
      write_real(features, row[c]);
    }
    features += '\n';
  }
  write_file(dir / "features.csv", features);

  std::string labels;
  for (int y : g.labels()) labels += std::to_string(y) + "\n";
  write_file(dir / "labels.csv", labels);

  if (bundle.split) {
    json s = {{"train", bundle.split->train}, {"val", bundle.split->val}, {"test", bundle.split->test}};
    write_file(dir / "split.json", s.dump() + "\n");
  }
}

DatasetBundle generate_sbm(const SbmSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::vector<int> labels;
  for (std::size_t c = 0; c < spec.nodes_per_class.size(); ++c)
    labels.insert(labels.end(), spec.nodes_per_class[c], static_cast<int>(c));
  const std::size_t n = labels.size();

  std::vector<Edge> edges;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      const double p = labels[u] == labels[v] ? spec.intra_prob : spec.inter_prob;
      if (unit(rng) < p) edges.push_back({static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v)});
    }
  }

  Matrix features(n, spec.feature_dim);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t c = 0; c < spec.feature_dim; ++c) features(u, c) = spec.noise_std * noise(rng);
    features(u, static_cast<std::size_t>(labels[u]) % spec.feature_dim) += spec.class_center_separation;
  }

  DatasetBundle bundle;
  bundle.name = "sbm";
  bundle.graph = build_graph(edges, std::move(features), std::move(labels), spec.num_classes());
  return bundle;
}

Matrix row_normalize(Matrix features) {
  for (std::size_t r = 0; r < features.rows(); ++r) {
    auto row = features.row(r);
    double s = 0.0;
    for (double v : row) s += std::abs(v);
    if (s > 0.0)
      for (auto& v : row) v /= s;
  }
  return features;
}

}  // namespace fedtad
