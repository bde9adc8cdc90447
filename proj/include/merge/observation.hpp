#pragma once

#include <array>
#include <span>

#include "merge/env.hpp"

namespace merge::obs {

inline constexpr int kNumSlots = 6;
inline constexpr int kNumFeatures = 14;
inline constexpr int kNumBins = 10;

// Fixed slot order used throughout the feature vector.
enum Slot {
  kFront = 0,
  kBack,
  kLeftFront,
  kLeftBack,
  kRightFront,
  kRightBack,
};

struct NeighborSlot {
  double v_rel = 0.0;  // v_agent - v_other
  double d_rel = 0.0;  // bumper gap, >= 0
};

struct RawObservation {
  double v_agent = 0.0;
  double x_agent = 0.0;
  std::array<NeighborSlot, kNumSlots> slots;
};

// 14 values in [0, 1], order: v_agent, x_agent, then (v_rel, d_rel) per slot.
struct NormalizedObservation {
  std::array<double, kNumFeatures> values{};
};

struct QuantizedObservation {
  std::array<int, kNumFeatures> bins{};

  // Bin-midpoint encoding consumed by every network.
  std::array<double, kNumFeatures> encoding() const;
};

struct ObservationConfig {
  double v_max = 29.16;
  double x_env = 360.0;
  double d_max = 30.0;

  void validate() const;
};

// Ego-centric neighbor extraction. Nearest vehicle per slot by longitudinal
// gap; absent slots default to (v_agent, d_max). While the ego is on the
// ramp, the ramp end acts as a stopped phantom vehicle in the front slot
// whenever it is nearer than any real front vehicle.
RawObservation extract_neighbors(const env::EnvState& state,
                                 const env::RoadGeometry& geom,
                                 const ObservationConfig& cfg);

NormalizedObservation normalize(const RawObservation& raw,
                                const ObservationConfig& cfg);

QuantizedObservation quantize(const NormalizedObservation& n);

// Full pipeline: extract -> normalize -> quantize -> midpoint encoding.
std::array<double, kNumFeatures> encode(const env::EnvState& state,
                                        const env::RoadGeometry& geom,
                                        const ObservationConfig& cfg);

inline double front_gap(const RawObservation& raw) {
  return raw.slots[kFront].d_rel;
}

}  // namespace merge::obs
