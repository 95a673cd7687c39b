#pragma once

// On-disk formats: tensor-cloud trajectories (.tct), parameter checkpoints
// and the training-pair index. All binary data is little-endian and ends
// in a 64-bit FNV-1a checksum of everything before it.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tensorjump/trajectory.hpp"
#include "tensorjump/worlds.hpp"

namespace tensorjump::io {

inline constexpr std::uint32_t kTctVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Bad magic, truncation, or checksum mismatch.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);
std::uint64_t fnv1a64(const std::string& text);

/// Rounds every position and feature to float, which is what the file keeps.
void quantize_f32(Trajectory& traj);

/// Layout: "TCTR", u32 version, u32 N, u8 lmax (0xFF: no features),
/// u32 multiplicity per degree 0..lmax, u64 frames, f64 frame interval,
/// N u8 labels (0xFF: none), N x channels u8 mask, then per frame and node
/// P as 3 f32 and V as f32 in spec order, then the u64 checksum.
/// An all-ones mask reads back as "no mask".
std::vector<std::uint8_t> encode_tct(const Trajectory& traj);
Trajectory decode_tct(std::span<const std::uint8_t> bytes);
void write_tct(const std::string& path, const Trajectory& traj);
Trajectory read_tct(const std::string& path);

struct ResumeState {
  std::vector<double> params;  // exact
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::uint64_t adam_step = 0;
  std::string rng_state;
  /// Opaque text kept for the caller (e.g. partial log accumulators).
  std::string caller_state;
};

struct Checkpoint {
  /// Free-form configuration text; its hash guards resumption.
  std::string header;
  std::uint64_t step = 0;
  /// Stored as f32.
  std::vector<double> params;
  std::optional<ResumeState> resume;
  std::uint64_t header_hash() const { return fnv1a64(header); }
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

/// CSV with header "trajectory,frame,lag".
void write_pairs(const std::string& path, const std::vector<worlds::PairIndex>& pairs);
std::vector<worlds::PairIndex> read_pairs(const std::string& path);

void write_bytes(const std::string& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_bytes(const std::string& path);

}  // namespace tensorjump::io
