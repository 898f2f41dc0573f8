#include "semap/netsim.hpp"

#include <bit>
#include <cstring>

#include "semap/errors.hpp"

namespace semap {

namespace {

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw InvalidInput("map message: truncated payload");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

constexpr std::uint8_t kMagic[4] = {'S', 'O', 'M', '1'};

void write_header(Writer& w, const MapConfig& cfg) {
  for (std::uint8_t b : kMagic) w.u8(b);
  w.u8(static_cast<std::uint8_t>(cfg.num_classes));
  w.u8(static_cast<std::uint8_t>(cfg.depth));
  w.f32(cfg.origin.x);
  w.f32(cfg.origin.y);
  w.f32(cfg.origin.z);
  w.f32(cfg.cell_size);
}

MapConfig read_header(Reader& r) {
  for (std::uint8_t b : kMagic) {
    if (r.u8() != b) throw InvalidInput("map message: bad magic");
  }
  MapConfig cfg;
  cfg.num_classes = r.u8();
  cfg.depth = r.u8();
  cfg.origin.x = r.f32();
  cfg.origin.y = r.f32();
  cfg.origin.z = r.f32();
  cfg.cell_size = r.f32();
  cfg.validate();
  return cfg;
}

std::unique_ptr<OctreeNode> read_node(Reader& r, int level, int depth, std::size_t classes) {
  const std::uint8_t tag = r.u8();
  if (tag == static_cast<std::uint8_t>(NodeTag::Absent)) return nullptr;
  auto node = std::make_unique<OctreeNode>();
  if (tag == static_cast<std::uint8_t>(NodeTag::Inner)) {
    if (level >= depth) throw InvalidInput("map message: inner node below the finest level");
    OctreeNode::Children children;
    for (auto& c : children) c = read_node(r, level + 1, depth, classes);
    node->content = std::move(children);
    return node;
  }
  if (tag != static_cast<std::uint8_t>(NodeTag::Leaf)) throw InvalidInput("map message: unknown node tag");
  CellValue v;
  v.h = LogOddsVector(classes);
  for (std::size_t c = 0; c < classes; ++c) v.h[c] = r.f32();
  v.acc.count = r.u32();
  v.acc.sum_log.resize(classes);
  for (std::size_t c = 0; c < classes; ++c) v.acc.sum_log[c] = r.f32() * static_cast<double>(v.acc.count);
  if (!all_finite(v.h.span()) || !all_finite(v.acc.sum_log)) throw InvalidInput("map message: non-finite value");
  node->content = std::move(v);
  return node;
}

}  // namespace

std::vector<std::uint8_t> encode_payload(const SemanticOctree& tree) {
  std::vector<std::uint8_t> out;
  Writer w(out);
  write_header(w, tree.config());
  const std::size_t classes = tree.prior().size();
  tree.visit_preorder([&](NodeTag tag, const CellValue* v) {
    w.u8(static_cast<std::uint8_t>(tag));
    if (tag != NodeTag::Leaf) return;
    if (v->h.size() != classes || v->acc.sum_log.size() != classes) {
      throw InternalError("encode: leaf vector length differs from C+1");
    }
    for (double x : v->h) w.f32(x);
    w.u32(v->acc.count);
    const double n = static_cast<double>(v->acc.count);
    for (double s : v->acc.sum_log) w.f32(v->acc.count > 0 ? s / n : 0.0);
  });
  return out;
}

MapMessage encode(const SemanticOctree& tree, std::uint16_t robot_id, std::uint32_t seq) {
  return {robot_id, seq, tree.config().digest(), encode_payload(tree)};
}

MapConfig decode_header(std::span<const std::uint8_t> payload) {
  Reader r(payload);
  return read_header(r);
}

SemanticOctree decode_payload(std::span<const std::uint8_t> payload, const LogOddsVector& prior,
                              double prune_tolerance, const MapConfig* receiver) {
  Reader r(payload);
  MapConfig cfg = read_header(r);
  if (receiver) {
    if (receiver->digest() != cfg.digest()) throw InvalidInput("map message: config does not match the receiver");
    cfg = *receiver;
  }
  SemanticOctree tree(cfg, prior, prune_tolerance);
  const std::size_t classes = static_cast<std::size_t>(cfg.classes());
  auto root = read_node(r, 0, cfg.depth, classes);
  if (!root) throw InvalidInput("map message: absent root");
  if (!r.done()) throw InvalidInput("map message: trailing bytes");
  if (root->is_leaf() && tree.is_prior(root->value())) root.reset();
  tree.reset_root(std::move(root));
  return tree;
}

std::uint64_t grid_baseline_bytes(const MapConfig& cfg, std::uint64_t max_entries) {
  cfg.validate();
  const auto classes = static_cast<std::uint64_t>(cfg.classes());
  if (cfg.num_cells() > max_entries / classes) throw ResourceError("grid baseline: grid exceeds the size limit");
  return kHeaderBytes + cfg.num_cells() * classes * 4;
}

ExchangeResult exchange(std::span<const Publication> publications, std::span<const std::uint64_t> receiver_digests,
                        const RobotGraph& graph, std::uint64_t tick) {
  if (publications.size() != graph.size() || receiver_digests.size() != graph.size()) {
    throw InvalidInput("exchange: one publication and digest per robot required");
  }
  ExchangeResult out;
  for (std::size_t s = 0; s < graph.size(); ++s) {
    const Publication& pub = publications[s];
    out.log.push_back({tick, static_cast<std::uint16_t>(s), pub.message.payload.size(), pub.grid_baseline_bytes});
    for (const Neighbor& nb : graph.neighbors(s)) {
      const Delivery d{static_cast<std::uint16_t>(s), static_cast<std::uint16_t>(nb.index), &pub.message};
      if (pub.message.config_digest == receiver_digests[nb.index]) {
        out.delivered.push_back(d);
      } else {
        out.rejected.push_back(d);
      }
    }
  }
  return out;
}

}  // namespace semap
