#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "ppgnn/model.hpp"
#include "ppgnn/util.hpp"

namespace ppgnn {

namespace fs = std::filesystem;
using Json = nlohmann::json;

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, std::string_view data) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("short write to " + path.string());
}

/// Lowercase hex SHA-256 of a byte string.
inline std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw IoError("SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 15]);
  }
  return out;
}

inline std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

// ---------------------------------------------------------------------------
// Dataset directory: edges.tsv, features.tsv, labels.tsv, splits.json.

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

inline std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    start = nl + 1;
  }
  return out;
}

inline long long parse_int(std::string_view tok, const std::string& where) {
  std::string s(tok);
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    throw ValidationError(where + ": malformed integer '" + s + "'");
  }
  if (used != s.size()) throw ValidationError(where + ": malformed integer '" + s + "'");
  return v;
}

inline double parse_double(std::string_view tok, const std::string& where) {
  std::string s(tok);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ValidationError(where + ": malformed number '" + s + "'");
  }
  if (used != s.size() || !std::isfinite(v)) throw ValidationError(where + ": malformed number '" + s + "'");
  return v;
}

inline std::string at_line(const char* file, std::size_t lineno) {
  return std::string(file) + " line " + std::to_string(lineno);
}

}  // namespace detail

/// Reads and validates a dataset directory. Node count comes from
/// features.tsv; the class count is the largest label plus one.
inline Dataset load_dataset(const fs::path& dir) {
  for (const char* f : {"edges.tsv", "features.tsv", "labels.tsv", "splits.json"}) {
    if (!fs::exists(dir / f)) throw IoError("missing file: " + (dir / f).string());
  }

  Dataset ds;
  {
    const std::string text = read_file(dir / "features.tsv");
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 0;
    for (std::string_view line : detail::lines_of(text)) {
      ++lineno;
      if (line.empty()) continue;
      const auto toks = detail::split_tabs(line);
      if (!rows.empty() && toks.size() != rows.front().size()) {
        throw ValidationError(detail::at_line("features.tsv", lineno) + ": expected " +
                              std::to_string(rows.front().size()) + " columns, found " + std::to_string(toks.size()));
      }
      std::vector<double> row;
      for (auto t : toks) row.push_back(detail::parse_double(t, detail::at_line("features.tsv", lineno)));
      rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ValidationError("features.tsv is empty");
    ds.features.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < rows[i].size(); ++j) ds.features(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
  }
  const Index n = ds.features.rows();

  {
    const std::string text = read_file(dir / "edges.tsv");
    std::vector<Edge> edges;
    std::size_t lineno = 0;
    for (std::string_view line : detail::lines_of(text)) {
      ++lineno;
      if (line.empty()) continue;
      const auto toks = detail::split_tabs(line);
      const std::string where = detail::at_line("edges.tsv", lineno);
      if (toks.size() != 2) throw ValidationError(where + ": expected src<TAB>dst");
      const Index u = detail::parse_int(toks[0], where);
      const Index v = detail::parse_int(toks[1], where);
      if (u < 0 || u >= n || v < 0 || v >= n) {
        throw ValidationError(where + ": index out of range (" + std::to_string(u) + ", " + std::to_string(v) +
                              ") for n=" + std::to_string(n));
      }
      edges.push_back({u, v});
    }
    ds.graph = build_graph(n, edges);
  }

  {
    const std::string text = read_file(dir / "labels.tsv");
    std::vector<int> labels(static_cast<std::size_t>(n), -1);
    std::size_t lineno = 0;
    int max_label = -1;
    for (std::string_view line : detail::lines_of(text)) {
      ++lineno;
      if (line.empty()) continue;
      const auto toks = detail::split_tabs(line);
      const std::string where = detail::at_line("labels.tsv", lineno);
      if (toks.size() != 2) throw ValidationError(where + ": expected node<TAB>label");
      const Index node = detail::parse_int(toks[0], where);
      const long long label = detail::parse_int(toks[1], where);
      if (node < 0 || node >= n) throw ValidationError(where + ": node " + std::to_string(node) + " out of range");
      if (label < 0 || label > 1'000'000) throw ValidationError(where + ": invalid label " + std::to_string(label));
      if (labels[node] != -1) throw ValidationError(where + ": duplicate label for node " + std::to_string(node));
      labels[node] = static_cast<int>(label);
      max_label = std::max(max_label, static_cast<int>(label));
    }
    for (Index i = 0; i < n; ++i) {
      if (labels[i] < 0) throw ValidationError("labels.tsv: node " + std::to_string(i) + " has no label");
    }
    ds.labels = std::move(labels);
    ds.num_classes = max_label + 1;
    if (ds.num_classes < 2) throw ValidationError("labels.tsv: need at least 2 classes");
  }

  {
    Json j;
    try {
      j = Json::parse(read_file(dir / "splits.json"));
    } catch (const Json::parse_error& e) {
      throw ValidationError(std::string("splits.json: ") + e.what());
    }
    auto grab = [&](const char* key) {
      if (!j.contains(key) || !j[key].is_array()) throw ValidationError(std::string("splits.json: missing array '") + key + "'");
      std::vector<Index> out;
      for (const auto& v : j[key]) {
        if (!v.is_number_integer()) throw ValidationError(std::string("splits.json: non-integer entry in '") + key + "'");
        out.push_back(v.get<Index>());
      }
      return out;
    };
    ds.train = grab("train");
    ds.val = grab("val");
    ds.test = grab("test");
  }
  ds.validate();
  return ds;
}

inline void write_dataset(const fs::path& dir, const Dataset& ds) {
  ds.validate();
  fs::create_directories(dir);
  std::string edges;
  for (const Edge& e : ds.graph.edges()) edges += std::to_string(e.src) + '\t' + std::to_string(e.dst) + '\n';
  write_file(dir / "edges.tsv", edges);

  std::string feats;
  for (Index i = 0; i < ds.features.rows(); ++i) {
    for (Index j = 0; j < ds.features.cols(); ++j) {
      if (j > 0) feats += '\t';
      feats += format_double(ds.features(i, j));
    }
    feats += '\n';
  }
  write_file(dir / "features.tsv", feats);

  std::string labels;
  for (Index i = 0; i < ds.num_nodes(); ++i) labels += std::to_string(i) + '\t' + std::to_string(ds.labels[i]) + '\n';
  write_file(dir / "labels.tsv", labels);

  Json j = {{"train", ds.train}, {"val", ds.val}, {"test", ds.test}};
  write_file(dir / "splits.json", j.dump() + "\n");
}

// ---------------------------------------------------------------------------
// Eigensystem cache.
//
// Layout (little-endian): 16-byte magic "SPECFILT-EIG\0\0\0\0"; uint64 n,
// k_low, k_high; (k_low + k_high) float64 eigenvalues ascending; n x (k_low +
// k_high) float64 eigenvectors column-major. A trailer follows the payload:
// float64 tolerance and the 32-byte SHA-256 of the edges.tsv it came from.

inline constexpr std::array<char, 16> kEigenMagic{'S', 'P', 'E', 'C', 'F', 'I', 'L', 'T',
                                                  '-', 'E', 'I', 'G', '\0', '\0', '\0', '\0'};

struct EigenCacheKey {
  std::array<unsigned char, 32> edges_sha256{};
  double tol = 0.0;
  friend bool operator==(const EigenCacheKey&, const EigenCacheKey&) = default;
};

inline EigenCacheKey make_cache_key(std::string_view edges_tsv, double tol) {
  EigenCacheKey key;
  unsigned int len = 0;
  EVP_Digest(edges_tsv.data(), edges_tsv.size(), key.edges_sha256.data(), &len, EVP_sha256(), nullptr);
  key.tol = tol;
  return key;
}

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T> && (sizeof(T) == 8));
  std::uint64_t bits = 0;
  std::memcpy(&bits, &value, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::string_view in, std::size_t& at) {
  if (at + 8 > in.size()) throw IoError("eigen cache truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  at += 8;
  T value;
  std::memcpy(&value, &bits, 8);
  return value;
}

}  // namespace detail

inline std::string encode_eigen_cache(const EigenSystem& es, const EigenCacheKey& key) {
  std::string out(kEigenMagic.begin(), kEigenMagic.end());
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(es.source_n));
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(es.bottom_count));
  detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(es.top_count));
  for (Index j = 0; j < es.size(); ++j) detail::put_le<double>(out, es.eigenvalues[j]);
  for (Index j = 0; j < es.size(); ++j) {
    for (Index i = 0; i < es.source_n; ++i) detail::put_le<double>(out, es.eigenvectors(i, j));
  }
  detail::put_le<double>(out, key.tol);
  out.append(reinterpret_cast<const char*>(key.edges_sha256.data()), key.edges_sha256.size());
  return out;
}

struct EigenCache {
  EigenSystem system;
  EigenCacheKey key;
};

inline EigenCache decode_eigen_cache(std::string_view data) {
  if (data.size() < 16 || !std::equal(kEigenMagic.begin(), kEigenMagic.end(), data.begin())) {
    throw IoError("eigen cache: bad magic header");
  }
  std::size_t at = 16;
  EigenCache c;
  const auto n = detail::get_le<std::uint64_t>(data, at);
  const auto k_low = detail::get_le<std::uint64_t>(data, at);
  const auto k_high = detail::get_le<std::uint64_t>(data, at);
  const std::uint64_t k = k_low + k_high;
  if (k > n || n > (1ULL << 31)) throw IoError("eigen cache: inconsistent counts");
  if (data.size() != 16 + 24 + 8 * (k + n * k) + 8 + 32) throw IoError("eigen cache: unexpected size");
  EigenSystem& es = c.system;
  es.source_n = static_cast<Index>(n);
  es.bottom_count = static_cast<Index>(k_low);
  es.top_count = static_cast<Index>(k_high);
  es.eigenvalues.resize(static_cast<Index>(k));
  for (Index j = 0; j < es.eigenvalues.size(); ++j) es.eigenvalues[j] = detail::get_le<double>(data, at);
  es.eigenvectors.resize(static_cast<Index>(n), static_cast<Index>(k));
  for (Index j = 0; j < es.eigenvectors.cols(); ++j) {
    for (Index i = 0; i < es.source_n; ++i) es.eigenvectors(i, j) = detail::get_le<double>(data, at);
  }
  es.complete = k == n;
  c.key.tol = detail::get_le<double>(data, at);
  std::memcpy(c.key.edges_sha256.data(), data.data() + at, 32);
  return c;
}

inline void write_eigen_cache(const fs::path& path, const EigenSystem& es, const EigenCacheKey& key) {
  write_file(path, encode_eigen_cache(es, key));
}

inline EigenCache read_eigen_cache(const fs::path& path) { return decode_eigen_cache(read_file(path)); }

// ---------------------------------------------------------------------------
// Checkpoint JSON (schema_version 1). Float arrays are row-major; floats are
// written with 17 significant digits.

namespace detail {

// nlohmann serializes doubles with enough digits to round-trip; emit them as
// raw 17g literals so output is stable across library versions.
inline Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json vector_json(const Vector& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Matrix matrix_from(const Json& j, Index rows, Index cols, const char* name) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows) throw ValidationError(std::string("checkpoint: bad shape for ") + name);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    if (!j[i].is_array() || static_cast<Index>(j[i].size()) != cols) {
      throw ValidationError(std::string("checkpoint: bad shape for ") + name);
    }
    for (Index c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

inline Vector vector_from(const Json& j, const char* name) {
  if (!j.is_array()) throw ValidationError(std::string("checkpoint: ") + name + " must be an array");
  Vector v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

inline Json bins_json(const std::vector<Bin>& bins) {
  Json a = Json::array();
  for (const Bin& b : bins) a.push_back({{"begin", b.begin}, {"end", b.end}, {"lambda_min", b.lam_min}, {"lambda_max", b.lam_max}});
  return a;
}

inline std::vector<Bin> bins_from(const Json& j) {
  std::vector<Bin> out;
  for (const auto& b : j) {
    out.push_back({b.at("begin").get<Index>(), b.at("end").get<Index>(), b.at("lambda_min").get<double>(),
                   b.at("lambda_max").get<double>()});
  }
  return out;
}

}  // namespace detail

struct Checkpoint {
  ModelParams params;
  std::uint64_t seed = 0;
  Index k_extreme = 0;  // per-end restriction the partition indexes into
};

inline std::string dump_json(const Json& j) {
  // 17 significant digits for every float, independent of the library's
  // shortest-round-trip formatter.
  std::string out;
  std::function<void(const Json&)> emit = [&](const Json& v) {
    switch (v.type()) {
      case Json::value_t::object: {
        out += '{';
        bool first = true;
        for (auto it = v.begin(); it != v.end(); ++it) {
          if (!first) out += ',';
          first = false;
          out += Json(it.key()).dump();
          out += ':';
          emit(it.value());
        }
        out += '}';
        break;
      }
      case Json::value_t::array: {
        out += '[';
        for (std::size_t i = 0; i < v.size(); ++i) {
          if (i > 0) out += ',';
          emit(v[i]);
        }
        out += ']';
        break;
      }
      case Json::value_t::number_float: {
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ValidationError("cannot serialize non-finite value");
        out += format_double(d);
        break;
      }
      default:
        out += v.dump();
    }
  };
  emit(j);
  return out;
}

inline Json checkpoint_json(const Checkpoint& c) {
  const ModelParams& p = c.params;
  const FilterBank& f = p.filter;
  Json low = Json::array();
  for (const auto& v : f.low_coeffs) low.push_back(detail::vector_json(v));
  Json high = Json::array();
  for (const auto& v : f.high_coeffs) high.push_back(detail::vector_json(v));
  return Json{{"schema_version", 1},
              {"dims", {{"in", p.dims.in}, {"hidden", p.dims.hidden}, {"classes", p.dims.classes}}},
              {"w1", detail::matrix_json(p.w1)},
              {"b1", detail::vector_json(p.b1)},
              {"w2", detail::matrix_json(p.w2)},
              {"b2", detail::vector_json(p.b2)},
              {"partition", {{"low", detail::bins_json(f.partition.low_bins)}, {"high", detail::bins_json(f.partition.high_bins)}}},
              {"low_coeffs", low},
              {"high_coeffs", high},
              {"gpr_coeffs", detail::vector_json(f.gpr_coeffs)},
              {"etas", {{"low", f.eta_low}, {"high", f.eta_high}, {"gpr", f.eta_gpr}}},
              {"k_extreme", c.k_extreme},
              {"seed", c.seed}};
}

inline Checkpoint checkpoint_from_json(const Json& j) {
  if (j.value("schema_version", 0) != 1) throw ValidationError("checkpoint: unsupported schema_version");
  Checkpoint c;
  try {
    ModelParams& p = c.params;
    p.dims = {j.at("dims").at("in").get<Index>(), j.at("dims").at("hidden").get<Index>(),
              j.at("dims").at("classes").get<Index>()};
    const Index first_out = p.dims.linear() ? p.dims.classes : p.dims.hidden;
    p.w1 = detail::matrix_from(j.at("w1"), p.dims.in, first_out, "w1");
    p.b1 = detail::vector_from(j.at("b1"), "b1");
    if (p.dims.linear()) {
      p.w2.resize(0, 0);
    } else {
      p.w2 = detail::matrix_from(j.at("w2"), p.dims.hidden, p.dims.classes, "w2");
    }
    p.b2 = detail::vector_from(j.at("b2"), "b2");
    p.filter.partition.low_bins = detail::bins_from(j.at("partition").at("low"));
    p.filter.partition.high_bins = detail::bins_from(j.at("partition").at("high"));
    for (const auto& v : j.at("low_coeffs")) p.filter.low_coeffs.push_back(detail::vector_from(v, "low_coeffs"));
    for (const auto& v : j.at("high_coeffs")) p.filter.high_coeffs.push_back(detail::vector_from(v, "high_coeffs"));
    p.filter.gpr_coeffs = detail::vector_from(j.at("gpr_coeffs"), "gpr_coeffs");
    p.filter.eta_low = j.at("etas").at("low").get<double>();
    p.filter.eta_high = j.at("etas").at("high").get<double>();
    p.filter.eta_gpr = j.at("etas").at("gpr").get<double>();
    c.k_extreme = j.value("k_extreme", Index{0});
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
  c.params.validate();
  return c;
}

inline void write_checkpoint(const fs::path& path, const Checkpoint& c) {
  write_file(path, dump_json(checkpoint_json(c)) + "\n");
}

inline Checkpoint read_checkpoint(const fs::path& path) {
  try {
    return checkpoint_from_json(Json::parse(read_file(path)));
  } catch (const Json::parse_error& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
}

/// `lambda,response` rows in ascending eigenvalue order.
inline std::string frequency_response_csv(const Vector& eigenvalues, const Vector& response) {
  std::vector<Index> order(static_cast<std::size_t>(eigenvalues.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return eigenvalues[a] < eigenvalues[b]; });
  std::string out = "lambda,response\n";
  for (Index j : order) out += format_double(eigenvalues[j]) + ',' + format_double(response[j]) + '\n';
  return out;
}

}  // namespace ppgnn
