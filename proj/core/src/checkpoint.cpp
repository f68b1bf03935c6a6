#include "mobe/checkpoint.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include "binary_io.hpp"
#include "mobe/errors.hpp"

namespace mobe {

namespace {

using detail::Reader;
using detail::Writer;

constexpr std::array<char, 4> kMoEMagic{'M', 'O', 'E', 'W'};
constexpr std::array<char, 4> kMoBEMagic{'M', 'O', 'B', 'E'};

struct RawHeader {
  std::array<char, 4> magic{};
  std::uint32_t version = 0;
  std::uint32_t layers = 0, experts = 0, hidden = 0, intermediate = 0, top_k = 0;
  std::uint32_t rank = 0, basis_count = 0, groups = 0, activation = 0, mu_present = 0;
  std::uint32_t method = 0;
};

[[noreturn]] void dimension_error(const std::string& what) { throw IoError(IoError::Kind::kDimension, what); }

/// Accumulates element counts with overflow detection.
class SizeCounter {
 public:
  void add(std::uint64_t count, std::uint64_t rows, std::uint64_t cols) {
    std::uint64_t v = 0;
    if (__builtin_mul_overflow(count, rows, &v) || __builtin_mul_overflow(v, cols, &v) ||
        __builtin_add_overflow(total_, v, &total_) || total_ > kLimit) {
      dimension_error("declared tensor sizes exceed the addressable range");
    }
  }
  std::uint64_t elements() const { return total_; }
  std::uint64_t bytes() const { return total_ * 4; }

 private:
  static constexpr std::uint64_t kLimit = std::numeric_limits<std::uint64_t>::max() / 8;
  std::uint64_t total_ = 0;
};

void write_header(Writer& w, const std::array<char, 4>& magic, const MoEConfig& c, const CompressionSpec* spec) {
  w.bytes(magic);
  w.u32(kFormatVersion);
  w.u32(c.layers);
  w.u32(c.experts);
  w.u32(c.hidden);
  w.u32(c.intermediate);
  w.u32(c.top_k);
  w.u32(spec ? spec->rank : 0);
  w.u32(spec ? spec->basis_count : 0);
  w.u32(spec ? spec->groups : 0);
  w.u32(spec ? static_cast<std::uint32_t>(spec->activation) : 0);
  w.u32(spec && spec->mu_present ? 1 : 0);
  if (spec) w.u32(static_cast<std::uint32_t>(spec->method));
}

RawHeader read_header(Reader& r, const std::array<char, 4>& expected_magic) {
  RawHeader h;
  r.raw(h.magic.data(), 4);
  if (h.magic != expected_magic) {
    throw IoError(IoError::Kind::kBadMagic, "bad magic '" + std::string(h.magic.data(), 4) + "', expected '" +
                                                std::string(expected_magic.data(), 4) + "'");
  }
  h.version = r.u32();
  if (h.version != kFormatVersion) {
    throw IoError(IoError::Kind::kVersion, "unsupported format version " + std::to_string(h.version));
  }
  for (auto* field : {&h.layers, &h.experts, &h.hidden, &h.intermediate, &h.top_k, &h.rank, &h.basis_count,
                      &h.groups, &h.activation, &h.mu_present}) {
    *field = r.u32();
  }
  if (expected_magic == kMoBEMagic) h.method = r.u32();
  return h;
}

MoEConfig config_from(const RawHeader& h) {
  MoEConfig c;
  c.layers = h.layers;
  c.experts = h.experts;
  c.hidden = h.hidden;
  c.intermediate = h.intermediate;
  c.top_k = h.top_k;
  try {
    c.validate();
  } catch (const ArgumentError& e) {
    dimension_error(e.what());
  }
  return c;
}

void check_payload_size(const Reader& r, std::uint64_t expected) {
  if (r.remaining() < expected) {
    throw IoError(IoError::Kind::kTruncated, "payload holds " + std::to_string(r.remaining()) + " bytes, header declares " +
                                                 std::to_string(expected));
  }
  if (r.remaining() > expected) {
    dimension_error("payload holds " + std::to_string(r.remaining() - expected) +
                    " bytes beyond what the header declares");
  }
}

std::uint64_t file_size_or_throw(const std::filesystem::path& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError(IoError::Kind::kOpen, "cannot open " + path.string() + ": " + ec.message());
  return size;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoError::Kind::kOpen, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoError::Kind::kOpen, "cannot open " + path.string() + " for writing");
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError(IoError::Kind::kWrite, "write to " + path.string() + " failed");
}

}  // namespace

ContainerKind detect_container(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in.gcount() != 4) throw IoError(IoError::Kind::kTruncated, path.string() + ": file shorter than magic");
  if (magic == kMoEMagic) return ContainerKind::kMoE;
  if (magic == kMoBEMagic) return ContainerKind::kCompressed;
  throw IoError(IoError::Kind::kBadMagic, path.string() + ": unrecognized magic '" + std::string(magic.data(), 4) + "'");
}

void write_checkpoint(std::ostream& out, const MoEModel& model) {
  model.validate();
  Writer w(out);
  write_header(w, kMoEMagic, model.config, nullptr);
  for (const auto& layer : model.layers) {
    w.tensor(layer.router);
    for (std::size_t i = 0; i < layer.gate.size(); ++i) {
      w.tensor(layer.gate[i]);
      w.tensor(layer.up[i]);
      w.tensor(layer.down[i]);
    }
  }
}

MoEModel read_checkpoint(std::istream& in, std::uint64_t available) {
  Reader r(in, available);
  const RawHeader h = read_header(r, kMoEMagic);
  MoEModel model{config_from(h), {}};
  const std::uint64_t n = h.experts, d = h.hidden, p = h.intermediate;

  SizeCounter layer_size, size;
  layer_size.add(1, n, d);
  layer_size.add(3 * n, p, d);
  size.add(h.layers, 1, layer_size.elements());
  check_payload_size(r, size.bytes());

  model.layers.reserve(h.layers);
  for (std::uint32_t l = 0; l < h.layers; ++l) {
    MoELayer layer;
    layer.router = r.tensor(n, d);
    for (std::uint64_t i = 0; i < n; ++i) {
      layer.gate.push_back(r.tensor(p, d));
      layer.up.push_back(r.tensor(p, d));
      layer.down.push_back(r.tensor(d, p));
    }
    model.layers.push_back(std::move(layer));
  }
  return model;
}

void write_compressed(std::ostream& out, const CompressedModel& model) {
  model.validate();
  Writer w(out);
  write_header(w, kMoBEMagic, model.config, &model.spec);
  for (const auto& layer : model.layers) {
    for (auto type : kFactorizedTypes) {
      const auto& proj = layer.projection(type);
      switch (model.spec.method) {
        case Method::kMobe: {
          const auto& b = std::get<BasisProjection>(proj);
          w.tensors(b.transforms);
          w.tensors(b.bases);
          w.tensor(b.logits);
          if (b.mu) w.tensor(*b.mu);
          break;
        }
        case Method::kSvd:
        case Method::kD2moe: {
          const auto& lr = std::get<LowRankProjection>(proj);
          if (lr.shared) w.tensor(*lr.shared);
          for (std::size_t i = 0; i < lr.left.size(); ++i) {
            w.tensor(lr.left[i]);
            w.tensor(lr.right[lr.right_index[i]]);
          }
          break;
        }
        case Method::kMolae: {
          const auto& lr = std::get<LowRankProjection>(proj);
          w.tensors(lr.left);
          w.tensors(lr.right);
          break;
        }
      }
    }
    w.tensor(layer.router);
    w.tensors(layer.down);
  }
}

CompressedModel read_compressed(std::istream& in, std::uint64_t available) {
  Reader r(in, available);
  const RawHeader h = read_header(r, kMoBEMagic);

  CompressedModel model;
  model.config = config_from(h);
  try {
    model.spec.method = method_from_tag(h.method);
    model.spec.activation = activation_from_tag(h.activation);
  } catch (const ArgumentError& e) {
    dimension_error(e.what());
  }
  model.spec.rank = h.rank;
  model.spec.basis_count = h.basis_count;
  model.spec.groups = h.groups;
  model.spec.mu_present = h.mu_present != 0;

  const std::uint64_t n = h.experts, d = h.hidden, p = h.intermediate, rank = h.rank, m = h.basis_count;
  if (h.mu_present > 1) dimension_error("mu_present flag must be 0 or 1");
  if (rank < 1 || rank > std::min(p, d)) dimension_error("rank " + std::to_string(rank) + " outside [1, min(p, d)]");
  const Method method = model.spec.method;
  if (method == Method::kMobe) {
    if (h.groups < 1 || m < 1 || m % h.groups != 0 || m >= n) {
      dimension_error("basis count " + std::to_string(m) + " / groups " + std::to_string(h.groups) +
                      " invalid for " + std::to_string(n) + " experts");
    }
  } else {
    if (h.groups != 1 || h.mu_present != 0) dimension_error("baseline containers carry g = 1 and no mean bias");
    if (method == Method::kMolae && (m < 1 || m > n)) dimension_error("latent count outside [1, n]");
    if (method != Method::kMolae && m != 0) dimension_error("basis count must be 0 for this method");
  }

  SizeCounter layer_size, size;
  for (int t = 0; t < 2; ++t) {
    switch (method) {
      case Method::kMobe:
        layer_size.add(n, p, rank);
        layer_size.add(m, rank, d);
        layer_size.add(1, n, m / h.groups);
        if (h.mu_present) layer_size.add(1, p, d);
        break;
      case Method::kD2moe: layer_size.add(1, p, d); [[fallthrough]];
      case Method::kSvd:
        layer_size.add(n, p, rank);
        layer_size.add(n, rank, d);
        break;
      case Method::kMolae:
        layer_size.add(n, p, rank);
        layer_size.add(m, rank, d);
        break;
    }
  }
  layer_size.add(1, n, d);
  layer_size.add(n, d, p);
  size.add(h.layers, 1, layer_size.elements());
  check_payload_size(r, size.bytes());

  for (std::uint32_t l = 0; l < h.layers; ++l) {
    CompressedLayer layer;
    for (auto type : kFactorizedTypes) {
      if (method == Method::kMobe) {
        BasisProjection b;
        b.transforms = r.tensors(n, p, rank);
        b.bases = r.tensors(m, rank, d);
        b.logits = r.tensor(n, m / h.groups);
        if (h.mu_present) b.mu = r.tensor(p, d);
        b.groups = h.groups;
        b.activation = model.spec.activation;
        layer.projection(type) = std::move(b);
      } else {
        LowRankProjection lr;
        if (method == Method::kMolae) {
          lr.left = r.tensors(n, p, rank);
          lr.right = r.tensors(m, rank, d);
          for (std::uint64_t i = 0; i < n; ++i) lr.right_index.push_back(contiguous_group(i, n, m));
        } else {
          if (method == Method::kD2moe) lr.shared = r.tensor(p, d);
          for (std::uint64_t i = 0; i < n; ++i) {
            lr.left.push_back(r.tensor(p, rank));
            lr.right.push_back(r.tensor(rank, d));
            lr.right_index.push_back(i);
          }
        }
        layer.projection(type) = std::move(lr);
      }
    }
    layer.router = r.tensor(n, d);
    layer.down = r.tensors(n, d, p);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

void write_checkpoint(const std::filesystem::path& path, const MoEModel& model) {
  auto out = open_out(path);
  write_checkpoint(out, model);
  finish(out, path);
}

MoEModel read_checkpoint(const std::filesystem::path& path) {
  const auto size = file_size_or_throw(path);
  auto in = open_in(path);
  return read_checkpoint(in, size);
}

void write_compressed(const std::filesystem::path& path, const CompressedModel& model) {
  auto out = open_out(path);
  write_compressed(out, model);
  finish(out, path);
}

CompressedModel read_compressed(const std::filesystem::path& path) {
  const auto size = file_size_or_throw(path);
  auto in = open_in(path);
  return read_compressed(in, size);
}

}  // namespace mobe
