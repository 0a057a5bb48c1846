#pragma once

// Feature-set container, FSET1 / CSV serialization and a synthetic generator
// standing in for backbone activations.

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fewshot/errors.hpp"

namespace fewshot {

using FeatureMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Label = std::uint32_t;

enum class FileFormat { binary, csv };

/// Labeled matrix of nonnegative feature vectors, one row per sample.
///
/// Immutable once built; `create` enforces n, h, c >= 1, labels < c,
/// finite nonnegative entries and no empty class.
class FeatureSet {
 public:
  static FeatureSet create(FeatureMatrix features, std::vector<Label> labels,
                           std::uint32_t class_count, std::string name = {}) {
    FeatureSet set;
    set.features_ = std::move(features);
    set.labels_ = std::move(labels);
    set.class_count_ = class_count;
    set.name_ = std::move(name);
    set.validate();
    set.index_classes();
    return set;
  }

  const FeatureMatrix& features() const noexcept { return features_; }
  const std::vector<Label>& labels() const noexcept { return labels_; }
  std::uint32_t class_count() const noexcept { return class_count_; }
  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t dim() const noexcept {
    return static_cast<std::size_t>(features_.cols());
  }
  const std::string& name() const noexcept { return name_; }

  // Row indices belonging to class `c`, ascending.
  const std::vector<std::size_t>& rows_of(Label c) const {
    return class_rows_.at(c);
  }

  friend bool operator==(const FeatureSet& a, const FeatureSet& b) {
    return a.class_count_ == b.class_count_ && a.labels_ == b.labels_ &&
           a.features_.rows() == b.features_.rows() &&
           a.features_.cols() == b.features_.cols() &&
           a.features_ == b.features_;
  }

 private:
  FeatureSet() = default;

  void validate() const {
    const auto n = static_cast<std::size_t>(features_.rows());
    if (n == 0 || features_.cols() == 0) {
      throw ValidationError("feature set must have at least one row and column");
    }
    if (class_count_ == 0) {
      throw ValidationError("class_count must be at least 1");
    }
    if (labels_.size() != n) {
      throw ValidationError("label count " + std::to_string(labels_.size()) +
                            " does not match row count " + std::to_string(n));
    }
    std::vector<bool> seen(class_count_, false);
    for (std::size_t i = 0; i < n; ++i) {
      if (labels_[i] >= class_count_) {
        throw ValidationError("label " + std::to_string(labels_[i]) +
                              " at row " + std::to_string(i) +
                              " exceeds class_count " +
                              std::to_string(class_count_));
      }
      seen[labels_[i]] = true;
    }
    for (Eigen::Index r = 0; r < features_.rows(); ++r) {
      for (Eigen::Index c = 0; c < features_.cols(); ++c) {
        const float v = features_(r, c);
        if (!std::isfinite(v)) {
          throw ValidationError("non-finite feature at (" + std::to_string(r) +
                                ", " + std::to_string(c) + ")");
        }
        if (v < 0.0f) {
          throw ValidationError("negative feature at (" + std::to_string(r) +
                                ", " + std::to_string(c) + ")");
        }
      }
    }
    for (std::uint32_t c = 0; c < class_count_; ++c) {
      if (!seen[c]) {
        throw ValidationError("class " + std::to_string(c) + " has no rows");
      }
    }
  }

  void index_classes() {
    class_rows_.assign(class_count_, {});
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      class_rows_[labels_[i]].push_back(i);
    }
  }

  FeatureMatrix features_;
  std::vector<Label> labels_;
  std::uint32_t class_count_ = 0;
  std::string name_;
  std::vector<std::vector<std::size_t>> class_rows_;
};

namespace detail {

inline constexpr std::string_view kFsetMagic = "FSET1";

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::string printable_bytes(std::string_view bytes) {
  std::ostringstream os;
  os << '"';
  for (unsigned char ch : bytes) {
    if (ch >= 0x20 && ch < 0x7F && ch != '"' && ch != '\\') {
      os << static_cast<char>(ch);
    } else {
      os << "\\x" << std::hex << std::setw(2) << std::setfill('0')
         << static_cast<int>(ch) << std::dec;
    }
  }
  os << '"';
  return os.str();
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) {
    throw IoError("read failure on " + path.string());
  }
  return buf.str();
}

// Writes via a sibling temp file and renames, so a failed write never leaves
// a partial destination behind.
inline void write_file_atomically(const std::filesystem::path& path,
                                  const std::string& bytes) {
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw IoError("write failure on " + path.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw IoError("cannot move output into place at " + path.string() + ": " +
                  ec.message());
  }
}

inline std::string encode_binary(const FeatureSet& set) {
  const auto n = static_cast<std::uint32_t>(set.size());
  const auto h = static_cast<std::uint32_t>(set.dim());
  std::string out;
  out.reserve(kFsetMagic.size() + 12 + 4 * n + 4 * std::size_t{n} * h);
  out.append(kFsetMagic);
  put_u32(out, n);
  put_u32(out, h);
  put_u32(out, set.class_count());
  for (Label l : set.labels()) put_u32(out, l);
  const auto& f = set.features();
  for (std::uint32_t r = 0; r < n; ++r) {
    for (std::uint32_t c = 0; c < h; ++c) {
      put_u32(out, std::bit_cast<std::uint32_t>(f(r, c)));
    }
  }
  return out;
}

inline FeatureSet decode_binary(std::string_view bytes, std::string name) {
  const std::size_t header = kFsetMagic.size() + 12;
  if (bytes.size() < kFsetMagic.size() ||
      bytes.substr(0, kFsetMagic.size()) != kFsetMagic) {
    throw IoError("bad FSET1 magic: expected \"FSET1\", found " +
                  printable_bytes(bytes.substr(0, kFsetMagic.size())));
  }
  if (bytes.size() < header) {
    throw IoError("truncated FSET1 header (" + std::to_string(bytes.size()) +
                  " bytes)");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t n = get_u32(p + 5);
  const std::uint32_t h = get_u32(p + 9);
  const std::uint32_t c = get_u32(p + 13);
  const std::uint64_t expected =
      header + 4ull * n + 4ull * static_cast<std::uint64_t>(n) * h;
  if (bytes.size() != expected) {
    throw IoError("FSET1 size mismatch: header declares n=" +
                  std::to_string(n) + ", h=" + std::to_string(h) +
                  " (expecting " + std::to_string(expected) +
                  " bytes), file has " + std::to_string(bytes.size()));
  }
  std::vector<Label> labels(n);
  const unsigned char* cursor = p + header;
  for (std::uint32_t i = 0; i < n; ++i, cursor += 4) labels[i] = get_u32(cursor);
  FeatureMatrix features(n, h);
  for (std::uint32_t r = 0; r < n; ++r) {
    for (std::uint32_t col = 0; col < h; ++col, cursor += 4) {
      features(r, col) = std::bit_cast<float>(get_u32(cursor));
    }
  }
  return FeatureSet::create(std::move(features), std::move(labels), c,
                            std::move(name));
}

inline std::string encode_csv(const FeatureSet& set) {
  std::ostringstream os;
  os << "label";
  for (std::size_t c = 0; c < set.dim(); ++c) os << ",f" << c;
  os << '\n';
  os << std::setprecision(std::numeric_limits<float>::max_digits10);
  const auto& f = set.features();
  for (std::size_t r = 0; r < set.size(); ++r) {
    os << set.labels()[r];
    for (std::size_t c = 0; c < set.dim(); ++c) {
      os << ',' << f(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
    os << '\n';
  }
  return os.str();
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline FeatureSet decode_csv(std::string_view text, std::string name) {
  std::vector<std::string_view> lines;
  for (auto line : split(text, '\n')) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) throw IoError("empty CSV feature file");
  const auto head = split(lines.front(), ',');
  if (head.size() < 2 || head.front() != "label") {
    throw IoError("CSV header must be label,f0,...; found " +
                  printable_bytes(lines.front().substr(0, 32)));
  }
  const std::size_t h = head.size() - 1;
  const std::size_t n = lines.size() - 1;
  if (n == 0) throw IoError("CSV feature file has a header but no rows");
  FeatureMatrix features(static_cast<Eigen::Index>(n),
                         static_cast<Eigen::Index>(h));
  std::vector<Label> labels(n);
  Label max_label = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto fields = split(lines[r + 1], ',');
    if (fields.size() != h + 1) {
      throw IoError("CSV row " + std::to_string(r) + " has " +
                    std::to_string(fields.size()) + " fields, expected " +
                    std::to_string(h + 1));
    }
    Label label = 0;
    auto [lp, lec] = std::from_chars(fields[0].data(),
                                     fields[0].data() + fields[0].size(), label);
    if (lec != std::errc{} || lp != fields[0].data() + fields[0].size()) {
      throw IoError("CSV row " + std::to_string(r) + ": bad label '" +
                    std::string(fields[0]) + "'");
    }
    labels[r] = label;
    max_label = std::max(max_label, label);
    for (std::size_t c = 0; c < h; ++c) {
      const auto field = fields[c + 1];
      float v = 0.0f;
      auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc{} || p != field.data() + field.size()) {
        throw IoError("CSV row " + std::to_string(r) + ", column " +
                      std::to_string(c) + ": cannot parse '" +
                      std::string(field) + "'");
      }
      features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  }
  return FeatureSet::create(std::move(features), std::move(labels),
                            max_label + 1, std::move(name));
}

}  // namespace detail

// Guesses the format from the extension: ".csv" is CSV, anything else FSET1.
inline FileFormat format_for_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? FileFormat::csv : FileFormat::binary;
}

inline FeatureSet load_feature_set(const std::filesystem::path& path,
                                   FileFormat format) {
  const std::string bytes = detail::read_file(path);
  if (format == FileFormat::binary) {
    return detail::decode_binary(bytes, path.string());
  }
  return detail::decode_csv(bytes, path.string());
}

inline void save_feature_set(const FeatureSet& set,
                             const std::filesystem::path& path,
                             FileFormat format) {
  detail::write_file_atomically(path, format == FileFormat::binary
                                          ? detail::encode_binary(set)
                                          : detail::encode_csv(set));
}

struct SyntheticConfig {
  std::uint32_t class_count = 20;
  std::uint32_t per_class = 600;
  std::uint32_t dim = 64;
  double center_scale = 1.0;
  double noise_sigma = 0.3;
  std::uint64_t seed = 42;

  void validate() const {
    if (class_count < 2) throw ValidationError("class_count must be >= 2");
    if (per_class < 2) throw ValidationError("per_class must be >= 2");
    if (dim < 2) throw ValidationError("dim must be >= 2");
    if (!(center_scale > 0.0) || !std::isfinite(center_scale)) {
      throw ValidationError("center_scale must be positive");
    }
    if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma)) {
      throw ValidationError("noise_sigma must be positive");
    }
  }
};

/// Rectified Gaussian clusters: class centers uniform in [0, center_scale]^dim,
/// each row max(0, center + N(0, noise_sigma^2)). Rows are class-major.
namespace detail {

inline Eigen::MatrixXd draw_centers(const SyntheticConfig& config,
                                    std::mt19937_64& rng) {
  std::uniform_real_distribution<double> center_dist(0.0, config.center_scale);
  Eigen::MatrixXd centers(config.class_count, config.dim);
  for (Eigen::Index c = 0; c < centers.rows(); ++c) {
    for (Eigen::Index j = 0; j < centers.cols(); ++j) {
      centers(c, j) = center_dist(rng);
    }
  }
  return centers;
}

}  // namespace detail

// Class centers used by generate_synthetic for the same config.
inline Eigen::MatrixXd synthetic_centers(const SyntheticConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  return detail::draw_centers(config, rng);
}

inline FeatureSet generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  const Eigen::MatrixXd centers = detail::draw_centers(config, rng);
  std::normal_distribution<double> noise(0.0, config.noise_sigma);

  const std::size_t n = std::size_t{config.class_count} * config.per_class;
  FeatureMatrix features(static_cast<Eigen::Index>(n), config.dim);
  std::vector<Label> labels(n);
  std::size_t row = 0;
  for (std::uint32_t c = 0; c < config.class_count; ++c) {
    for (std::uint32_t i = 0; i < config.per_class; ++i, ++row) {
      labels[row] = c;
      for (std::uint32_t j = 0; j < config.dim; ++j) {
        const double v = centers(c, j) + noise(rng);
        features(static_cast<Eigen::Index>(row), j) =
            static_cast<float>(std::max(0.0, v));
      }
    }
  }
  std::ostringstream name;
  name << "synthetic(classes=" << config.class_count
       << ",per_class=" << config.per_class << ",dim=" << config.dim
       << ",center_scale=" << config.center_scale
       << ",noise=" << config.noise_sigma << ",seed=" << config.seed << ")";
  return FeatureSet::create(std::move(features), std::move(labels),
                            config.class_count, name.str());
}

}  // namespace fewshot
