#include "merge/observation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace merge::obs {

void ObservationConfig::validate() const {
  if (v_max <= 0) throw std::invalid_argument("observation.v_max: must be > 0");
  if (x_env <= 0) throw std::invalid_argument("observation.x_env: must be > 0");
  if (d_max <= 0) throw std::invalid_argument("observation.d_max: must be > 0");
}

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Lane to the left / right of a given lane; the ramp merges into the highway
// from the right, so the highway is left of the ramp. -1 means no lane.
int left_lane_of(int lane) { return lane == env::kRampLane ? env::kHighwayLane : -1; }
int right_lane_of(int lane) { return lane == env::kHighwayLane ? env::kRampLane : -1; }

struct Candidate {
  bool present = false;
  double abs_dx = std::numeric_limits<double>::infinity();
  double v = 0.0;
};

}  // namespace

RawObservation extract_neighbors(const env::EnvState& state,
                                 const env::RoadGeometry& geom,
                                 const ObservationConfig& cfg) {
  const env::VehicleState& ego = state.ego;
  RawObservation raw;
  raw.v_agent = ego.v;
  raw.x_agent = ego.x;

  const int lanes[3] = {ego.lane, left_lane_of(ego.lane),
                        right_lane_of(ego.lane)};
  // Candidate per (lane group, front/back), front = dx >= 0.
  Candidate cand[3][2];
  for (const env::VehicleState& o : state.others) {
    for (int g = 0; g < 3; ++g) {
      if (lanes[g] < 0 || o.lane != lanes[g]) continue;
      double dx = o.x - ego.x;
      int fb = dx >= 0 ? 0 : 1;
      Candidate& c = cand[g][fb];
      if (std::fabs(dx) < c.abs_dx) {
        c.present = true;
        c.abs_dx = std::fabs(dx);
        c.v = o.v;
      }
    }
  }

  auto fill = [&](Slot slot, const Candidate& c) {
    NeighborSlot& s = raw.slots[slot];
    if (c.present) {
      s.v_rel = ego.v - c.v;
      s.d_rel = std::max(0.0, c.abs_dx - geom.vehicle_length);
    } else {
      s.v_rel = ego.v;
      s.d_rel = cfg.d_max;
    }
  };

  fill(kFront, cand[0][0]);
  fill(kBack, cand[0][1]);
  fill(kLeftFront, cand[1][0]);
  fill(kLeftBack, cand[1][1]);
  fill(kRightFront, cand[2][0]);
  fill(kRightBack, cand[2][1]);

  if (ego.lane == env::kRampLane) {
    // The ramp end is a line, not a car body: raw distance, zero velocity.
    double phantom_d = std::max(0.0, geom.ramp_end - ego.x);
    bool have_real_front = cand[0][0].present;
    if (!have_real_front || phantom_d < raw.slots[kFront].d_rel) {
      raw.slots[kFront].v_rel = ego.v;
      raw.slots[kFront].d_rel = phantom_d;
    }
  }

  return raw;
}

NormalizedObservation normalize(const RawObservation& raw,
                                const ObservationConfig& cfg) {
  NormalizedObservation n;
  n.values[0] = clamp01(raw.v_agent / cfg.v_max);
  n.values[1] = clamp01(raw.x_agent / cfg.x_env);
  for (int i = 0; i < kNumSlots; ++i) {
    n.values[2 + 2 * i] =
        clamp01((raw.slots[i].v_rel + cfg.v_max) / (2.0 * cfg.v_max));
    n.values[3 + 2 * i] = clamp01(raw.slots[i].d_rel / cfg.d_max);
  }
  return n;
}

QuantizedObservation quantize(const NormalizedObservation& n) {
  QuantizedObservation q;
  for (int i = 0; i < kNumFeatures; ++i) {
    int bin = static_cast<int>(std::floor(10.0 * n.values[i]));
    q.bins[i] = std::clamp(bin, 0, kNumBins - 1);
  }
  return q;
}

std::array<double, kNumFeatures> QuantizedObservation::encoding() const {
  std::array<double, kNumFeatures> e{};
  for (int i = 0; i < kNumFeatures; ++i) e[i] = 0.05 + 0.1 * bins[i];
  return e;
}

std::array<double, kNumFeatures> encode(const env::EnvState& state,
                                        const env::RoadGeometry& geom,
                                        const ObservationConfig& cfg) {
  return quantize(normalize(extract_neighbors(state, geom, cfg), cfg))
      .encoding();
}

}  // namespace merge::obs
