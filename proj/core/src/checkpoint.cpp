// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecbm/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "ecbm/error.hpp"

namespace ecbm {
namespace {

constexpr char kMagic[4] = {'E', 'C', 'B', 'M'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>(v >> (8 * i)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      out_.push_back(static_cast<char>(bits >> (8 * i)));
    }
  }
  void bytes(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
      bits |= static_cast<std::uint64_t>(
                  static_cast<unsigned char>(in_[pos_ + i]))
              << (8 * i);
    }
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }
  std::string_view bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string_view s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) {
      throw ParseError(std::string("checkpoint truncated while reading ") +
                       what + " at byte " + std::to_string(pos_));
    }
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Theta& theta) {
  const ModelConfig& c = theta.config();
  Writer w;
  w.bytes(std::string_view(kMagic, 4));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(c.num_concepts));
  w.u32(static_cast<std::uint32_t>(c.num_classes));
  w.u32(static_cast<std::uint32_t>(c.feature_dim));
  w.u32(static_cast<std::uint32_t>(c.embed_dim));
  w.f64(c.dropout);
  w.f64(c.lambda_concept);
  w.f64(c.lambda_global);
  w.f64(c.lambda_concept_inf);
  w.f64(c.lambda_global_inf);
  w.u32(static_cast<std::uint32_t>(theta.params().size()));
  for (const auto& [name, value] : theta.params()) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.u32(static_cast<std::uint32_t>(value.shape().size()));
    for (std::size_t e : value.shape()) w.u32(static_cast<std::uint32_t>(e));
    for (double v : value.values()) w.f64(v);
  }
  return w.take();
}

Theta decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(4, "magic") != std::string_view(kMagic, 4)) {
    throw ParseError("not a checkpoint: bad magic");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " +
                     std::to_string(version));
  }
  ModelConfig c;
  c.num_concepts = r.u32("config");
  c.num_classes = r.u32("config");
  c.feature_dim = r.u32("config");
  c.embed_dim = r.u32("config");
  c.dropout = r.f64("config");
  c.lambda_concept = r.f64("config");
  c.lambda_global = r.f64("config");
  c.lambda_concept_inf = r.f64("config");
  c.lambda_global_inf = r.f64("config");
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("checkpoint config invalid: ") + e.what());
  }
  Theta theta(c);
  const std::uint32_t count = r.u32("record count");
  if (count != theta.params().size()) {
    throw ParseError("checkpoint holds " + std::to_string(count) +
                     " records, model needs " +
                     std::to_string(theta.params().size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32("record name length");
    const std::string name(r.bytes(len, "record name"));
    auto it = theta.params().find(name);
    if (it == theta.params().end()) {
      throw ParseError("checkpoint has unknown record '" + name + "'");
    }
    const std::uint32_t rank = r.u32("record rank");
    diff::Shape shape(rank);
    for (auto& e : shape) e = r.u32("record extent");
    if (diff::shape_size(shape) != it->second.size() ||
        shape != it->second.shape()) {
      throw ParseError("record '" + name + "' has shape " +
                       diff::shape_string(shape) + ", expected " +
                       diff::shape_string(it->second.shape()));
    }
    for (double& v : it->second.values()) v = r.f64("record values");
  }
  if (!r.done()) throw ParseError("trailing bytes after checkpoint");
  return theta;
}

void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw ParseError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_checkpoint(const Theta& theta, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(theta));
}

Theta load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace ecbm
