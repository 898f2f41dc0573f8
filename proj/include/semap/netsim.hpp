#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "semap/consensus.hpp"
#include "semap/octree.hpp"

namespace semap {

inline constexpr std::size_t kHeaderBytes = 22;  // 4 + 1 + 1 + 3 * 4 + 4

/// Packet a robot publishes: envelope plus the serialized octree.
///
/// Payload layout (little endian):
///   "SOM1" | C:u8 | depth:u8 | origin:3 x f32 | cell_size:f32
///   then the preorder node stream, one tag byte per node
///   (0 absent, 1 inner, 2 leaf). Inner nodes are followed by their eight
///   children in Morton order; leaves by h:(C+1) x f32, count:u32 and
///   mean log q:(C+1) x f32. The root is never absent.
struct MapMessage {
  std::uint16_t robot_id = 0;
  std::uint32_t seq = 0;
  std::uint64_t config_digest = 0;
  std::vector<std::uint8_t> payload;
};

std::vector<std::uint8_t> encode_payload(const SemanticOctree& tree);
MapMessage encode(const SemanticOctree& tree, std::uint16_t robot_id = 0, std::uint32_t seq = 0);

/// Inverse of encode_payload. The prior is not transmitted; the receiver
/// supplies its own. With `receiver` set, the header must match that config
/// at wire precision and the result carries the receiver's exact config.
/// Throws InvalidInput on malformed payloads.
SemanticOctree decode_payload(std::span<const std::uint8_t> payload, const LogOddsVector& prior,
                              double prune_tolerance = 0.0, const MapConfig* receiver = nullptr);
MapConfig decode_header(std::span<const std::uint8_t> payload);

/// Payload bytes of the uniform-resolution baseline: the same header plus
/// every finest cell's h as f32.
std::uint64_t grid_baseline_bytes(const MapConfig& cfg,
                                  std::uint64_t max_entries = SemanticOctree::kDefaultDenseLimit);

struct Publication {
  MapMessage message;
  std::uint64_t grid_baseline_bytes = 0;
};

struct Delivery {
  std::uint16_t sender = 0;
  std::uint16_t receiver = 0;
  const MapMessage* message = nullptr;
};

struct PacketLogEntry {
  std::uint64_t tick = 0;
  std::uint16_t robot = 0;
  std::uint64_t octree_bytes = 0;
  std::uint64_t grid_bytes = 0;
};

struct ExchangeResult {
  std::vector<Delivery> delivered;
  std::vector<Delivery> rejected;  // config digest mismatch
  std::vector<PacketLogEntry> log;
};

/// Zero-latency lossless bus: each publication goes to every graph neighbor
/// of its sender in the same tick, in (sender, receiver) order. A message
/// whose digest differs from the receiver's is rejected.
/// `publications[i]` belongs to robot i; messages point into `publications`.
ExchangeResult exchange(std::span<const Publication> publications, std::span<const std::uint64_t> receiver_digests,
                        const RobotGraph& graph, std::uint64_t tick);

}  // namespace semap
