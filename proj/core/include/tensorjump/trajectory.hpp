#pragma once

#include <string>
#include <vector>

#include "tensorjump/tensorcloud.hpp"

namespace tensorjump {

/// Ordered frames sharing one spec, node count and mask layout.
struct Trajectory {
  IrrepsSpec spec;
  std::size_t n_nodes = 0;
  /// One label per node; -1 means "none".
  std::vector<int> labels;
  /// Per (node, channel) mask shared by all frames; empty = all active.
  std::vector<std::uint8_t> mask;
  double frame_interval = 1.0;
  std::vector<TensorCloud> frames;
  /// Seconds spent producing each frame after the first (rollouts only).
  std::vector<double> step_seconds;
  /// "ok", or a short reason when the trajectory was cut short.
  std::string status = "ok";

  std::size_t size() const { return frames.size(); }
  /// Empty cloud with this trajectory's spec, size and mask.
  TensorCloud blank() const {
    TensorCloud c(spec, n_nodes);
    if (!mask.empty()) c.set_mask(mask);
    return c;
  }
};

}  // namespace tensorjump
