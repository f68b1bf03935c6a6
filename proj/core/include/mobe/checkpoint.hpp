#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "mobe/model.hpp"

namespace mobe {

/// Binary containers, little-endian throughout (see docs/FORMAT.md).
///
///   magic      4 bytes   "MOEW" (standard MoE) or "MOBE" (compressed)
///   version    u32       1
///   config     10 x u32  L, n, d, p, k, r, m, g, activation tag, mu_present
///   method     u32       MOBE only: 0 mobe, 1 svd, 2 molae, 3 d2moe
///   payload    f32[]     row-major tensors, per layer, in a fixed order
///
/// MOEW layer:  router (n x d); then per expert: gate (p x d), up (p x d), down (d x p)
/// MOBE layer:  gate projection, up projection, router (n x d), down[n] (d x p)
///   mobe  projection: transforms[n] (p x r), bases[m] (r x d), logits (n x m/g), [mu (p x d)]
///   svd   projection: per expert: left (p x r), right (r x d)
///   molae projection: left[n] (p x r), latents[m] (r x d)
///   d2moe projection: shared (p x d); per expert: left (p x r), right (r x d)
inline constexpr std::uint32_t kFormatVersion = 1;

enum class ContainerKind { kMoE, kCompressed };

/// Reads only the magic. Throws IoError{kOpen | kBadMagic | kTruncated}.
ContainerKind detect_container(const std::filesystem::path& path);

void write_checkpoint(const std::filesystem::path& path, const MoEModel& model);
MoEModel read_checkpoint(const std::filesystem::path& path);

void write_compressed(const std::filesystem::path& path, const CompressedModel& model);
CompressedModel read_compressed(const std::filesystem::path& path);

// Stream forms; `available` is the number of bytes the stream holds.
void write_checkpoint(std::ostream& out, const MoEModel& model);
MoEModel read_checkpoint(std::istream& in, std::uint64_t available);
void write_compressed(std::ostream& out, const CompressedModel& model);
CompressedModel read_compressed(std::istream& in, std::uint64_t available);

}  // namespace mobe
