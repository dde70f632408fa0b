#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hgp/trajectory.hpp"

namespace hgp {

struct ChannelConfig {
  double per = 0.0;       // packet erasure probability in [0, 1]
  int rate_hz = 10;       // must divide the 10 Hz source grid
  double latency = 0.0;   // s
  std::uint64_t seed = 0;
};

struct BsmPacket {
  std::string vehicle_id;
  VehicleState state;
  double tx_time = 0.0;
  double rx_time = 0.0;
  bool dropped = false;
};

// splitmix64; used to derive independent per-job RNG streams from (seed, keys)
inline std::uint64_t mix_seed(std::uint64_t seed) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key) {
  return mix_seed(seed ^ mix_seed(key));
}

// Decimates the trip to rate_hz and applies i.i.d. Bernoulli erasure. Every
// packet is returned (dropped ones flagged, never delivered). The per-packet
// uniform draw is independent of PER, so delivered sets are nested across PER
// values for a fixed seed, and drop decisions never depend on packet contents.
inline std::vector<BsmPacket> emit(const Trip& trip, const ChannelConfig& cfg) {
  if (cfg.per < 0.0 || cfg.per > 1.0)
    throw std::invalid_argument("channel: PER must be in [0, 1]");
  if (cfg.rate_hz <= 0 || 10 % cfg.rate_hz != 0)
    throw std::invalid_argument("channel: rate must divide the 10 Hz grid");
  const int stride = 10 / cfg.rate_hz;

  std::mt19937_64 rng(mix_seed(cfg.seed));
  std::uniform_real_distribution<double> u(0.0, 1.0);

  std::vector<BsmPacket> out;
  for (std::size_t i = 0; i < trip.states.size(); i += stride) {
    BsmPacket p;
    p.vehicle_id = trip.vehicle_id;
    p.state = trip.states[i];
    p.tx_time = trip.states[i].t;
    p.rx_time = p.tx_time + cfg.latency;
    p.dropped = u(rng) < cfg.per;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace hgp
