// Copyright 2026 The mpx Authors
// SPDX-License-Identifier: Apache-2.0

#include "mpx/amr/plan.hpp"

#include <algorithm>
#include <unordered_map>

#include "mpx/common/error.hpp"

namespace mpx::amr {

std::uint64_t pack(const NodeKey& k) noexcept {
  return (static_cast<std::uint64_t>(k.epoch & 0x7ff) << 52) | (static_cast<std::uint64_t>(k.kind) << 49) |
         (static_cast<std::uint64_t>(k.level & 0x7) << 46) | (static_cast<std::uint64_t>(k.block & 0xfffff) << 26) |
         (static_cast<std::uint64_t>(k.step) & 0x3ffffff);
}

NodeKey unpack(std::uint64_t id) noexcept {
  NodeKey k;
  k.epoch = static_cast<int>(id >> 52);
  k.kind = static_cast<NodeKind>((id >> 49) & 0x7);
  k.level = static_cast<int>((id >> 46) & 0x7);
  k.block = static_cast<int>((id >> 26) & 0xfffff);
  k.step = static_cast<long>(id & 0x3ffffff);
  return k;
}

int epoch_of(std::uint64_t id) noexcept { return static_cast<int>(id >> 52); }

namespace {

std::uint64_t step_id(const Structure& s, int k, int b, long step) {
  return pack(NodeKey{s.epoch, NodeKind::step, k, b, step});
}
std::uint64_t transfer_id(const Structure& s, int k, int b) {
  return pack(NodeKey{s.epoch, NodeKind::transfer, k, b, s.start_step(k)});
}

}  // namespace

std::pair<long, long> Planner::output_range(const Structure& s, const NodeKey& key) {
  if (key.kind == NodeKind::regrid) return {0, 0};
  const Block& b = s.levels.at(key.level).blocks.at(key.block);
  long lo = b.lo, hi = b.hi;
  if (key.kind == NodeKind::step && key.level > 0 && (key.step & 1)) {
    if (b.left_taper) lo -= step_radius;
    if (b.right_taper) hi += step_radius;
  }
  return {lo, hi};
}

// Collects deps and the point range needed from each.
struct Planner::Builder {
  std::vector<DepSlice> deps;
  std::unordered_map<std::uint64_t, std::uint32_t> index;

  std::uint32_t use(std::uint64_t node) {
    auto [it, fresh] = index.try_emplace(node, static_cast<std::uint32_t>(deps.size()));
    if (fresh) deps.push_back(DepSlice{node, 0, 0});
    return it->second;
  }
  Term term(const Ref& r, double w) {
    std::uint32_t d = use(r.node);
    DepSlice& s = deps[d];
    if (s.lo == s.hi) {
      s.lo = r.idx;
      s.hi = r.idx + 1;
    } else {
      s.lo = std::min(s.lo, r.idx);
      s.hi = std::max(s.hi, r.idx + 1);
    }
    // absolute index for now; rebased once all slices are known
    return Term{d, static_cast<std::int32_t>(r.idx), w};
  }
  void finish(std::vector<Source>& sources) {
    for (auto& src : sources)
      for (int j = 0; j < src.n; ++j) src.t[j].off -= static_cast<std::int32_t>(deps[src.t[j].dep].lo);
  }
};

Planner::Ref Planner::direct(const Structure& s, int k, long i, long step) const {
  for (;;) {
    if (step == s.start_step(k)) {
      int b = s.block_at(k, i);
      if (b < 0) raise(ErrorCode::internal, "epoch-start read outside level " + std::to_string(k));
      return Ref{transfer_id(s, k, b), i};
    }
    if (k + 1 < s.depth() && s.covered(k, i)) {
      ++k;
      i *= 2;
      step *= 2;
      continue;
    }
    int b = s.block_at(k, i);
    if (b >= 0) return Ref{step_id(s, k, b, step), i};
    bool left = false;
    int p = s.taper_patch(k, i, left);
    if (p < 0 || !(step & 1))
      raise(ErrorCode::internal, "no producer for level " + std::to_string(k) + " point " + std::to_string(i));
    const Patch& pa = s.levels[k].patches[p];
    return Ref{step_id(s, k, left ? pa.first_block : pa.first_block + pa.nblocks - 1, step), i};
  }
}

void Planner::value(Builder& bld, const Structure& s, int k, long i, long step, Source& out) const {
  if (k > 0 && s.patch_at(k, i) < 0 && !(step & 1)) {
    bool left = false;
    if (s.taper_patch(k, i, left) < 0)
      raise(ErrorCode::internal, "level " + std::to_string(k) + " point " + std::to_string(i) + " beyond the taper");
    if (i % 2 == 0) {
      out.n = 1;
      out.t[0] = bld.term(direct(s, k - 1, i / 2, step / 2), 1.0);
      return;
    }
    const long j0 = (i - 1) / 2;
    const long base = left ? j0 : j0 - 1;
    const double* w = left ? prolong_right : prolong_left;
    out.n = 3;
    for (int q = 0; q < 3; ++q) out.t[q] = bld.term(direct(s, k - 1, base + q, step / 2), w[q]);
    return;
  }
  out.n = 1;
  out.t[0] = bld.term(direct(s, k, i, step), 1.0);
}

NodePlan Planner::step(int k, int b, long s) const {
  NodePlan p;
  p.key = NodeKey{cur_.epoch, NodeKind::step, k, b, s};
  p.id = pack(p.key);
  std::tie(p.out_lo, p.out_hi) = output_range(cur_, p.key);
  const Level& L = cur_.levels[k];
  p.win_lo = std::max<long>(0, p.out_lo - step_radius);
  p.win_hi = std::min<long>(L.npoints, p.out_hi + step_radius);
  p.end_node = s == cur_.end_step(k);

  Builder bld;
  const long prev = s - 1;
  const bool from_start = prev == cur_.start_step(k);
  auto producer = [&](int blk) { return from_start ? transfer_id(cur_, k, blk) : step_id(cur_, k, blk, prev); };
  // ordering inputs: own and same-patch neighbours' previous steps
  const Block& me = L.blocks[b];
  bld.use(producer(b));
  const Patch& pa = L.patches[me.patch];
  if (b > pa.first_block) bld.use(producer(b - 1));
  if (b + 1 < pa.first_block + pa.nblocks) bld.use(producer(b + 1));

  p.sources.resize(static_cast<std::size_t>(p.win_hi - p.win_lo));
  for (long i = p.win_lo; i < p.win_hi; ++i) value(bld, cur_, k, i, prev, p.sources[i - p.win_lo]);
  bld.finish(p.sources);
  p.deps = std::move(bld.deps);
  return p;
}

NodePlan Planner::transfer(int k, int b) const {
  NodePlan p;
  p.key = NodeKey{cur_.epoch, NodeKind::transfer, k, b, cur_.start_step(k)};
  p.id = pack(p.key);
  std::tie(p.out_lo, p.out_hi) = output_range(cur_, p.key);
  p.win_lo = p.out_lo;
  p.win_hi = p.out_hi;
  p.end_node = false;
  if (!prev_) return p;  // initial data, computed in place

  Builder bld;
  p.sources.resize(static_cast<std::size_t>(p.out_hi - p.out_lo));
  for (long i = p.out_lo; i < p.out_hi; ++i) {
    Source& src = p.sources[i - p.out_lo];
    if (k < prev_->depth() && prev_->patch_at(k, i) >= 0) {
      src.n = 1;
      src.t[0] = bld.term(direct(*prev_, k, i, prev_->end_step(k)), 1.0);
      continue;
    }
    // new fine data: interpolate the parent's epoch-start data
    auto parent = [&](long j) { return Ref{transfer_id(cur_, k - 1, cur_.block_at(k - 1, j)), j}; };
    if (i % 2 == 0) {
      src.n = 1;
      src.t[0] = bld.term(parent(i / 2), 1.0);
    } else {
      const long j0 = (i - 1) / 2;
      src.n = 3;
      for (int q = 0; q < 3; ++q) src.t[q] = bld.term(parent(j0 + q), prolong_right[q]);
    }
  }
  bld.finish(p.sources);
  p.deps = std::move(bld.deps);
  return p;
}

NodePlan Planner::regrid() const {
  NodePlan p;
  p.key = NodeKey{cur_.epoch + 1, NodeKind::regrid, 0, 0, 0};
  p.id = pack(p.key);
  for (int k = 0; k < cur_.depth(); ++k)
    for (const Block& b : cur_.levels[k].blocks) p.deps.push_back(DepSlice{transfer_id(cur_, k, b.index), b.lo, b.hi});
  return p;
}

NodePlan Planner::final_gather() const {
  NodePlan p;
  Builder bld;
  for (int k = 0; k < cur_.depth(); ++k) {
    for (const Block& b : cur_.levels[k].blocks) {
      for (long i = b.lo; i < b.hi; ++i) {
        if (k + 1 < cur_.depth() && cur_.covered(k, i)) continue;
        Source src;
        src.n = 1;
        src.t[0] = bld.term(direct(cur_, k, i, cur_.end_step(k)), 1.0);
        p.sources.push_back(src);
      }
    }
  }
  bld.finish(p.sources);
  p.deps = std::move(bld.deps);
  return p;
}

}  // namespace mpx::amr
