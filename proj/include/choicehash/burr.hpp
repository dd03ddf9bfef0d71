#pragma once

// Bumped ribbon retrieval. Each layer is a slightly overloaded ribbon whose
// starting positions are cut into groups; a 2-bit code per group says which
// starting positions are bumped to the next layer. Keys bumped past the last
// layer land in an exact fingerprint map.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "choicehash/hashcore.hpp"
#include "choicehash/io.hpp"
#include "choicehash/linsys.hpp"
#include "choicehash/ribbon.hpp"

namespace choicehash {

class BurrError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class BumpCode : std::uint8_t { None = 0, Prefix = 1, All = 2 };

inline BumpCode decode_bump(std::uint8_t bits) {
  if (bits > 2) throw FormatError("reserved bump code");
  return static_cast<BumpCode>(bits);
}

inline BumpCode escalate(BumpCode code) noexcept {
  return code == BumpCode::None ? BumpCode::Prefix : BumpCode::All;
}

struct BurrConfig {
  std::uint32_t w = 64;
  std::uint32_t r = 8;
  std::uint64_t g = 171;         // starting positions per group
  double alpha0 = 1.0325;        // load before bumping
  std::uint32_t layers_max = 3;
  std::uint32_t bump_prefix = 24;

  /// g = ceil(w^2 / (4 log2 w)), alpha0 = 1 + ln(w) / (2w), prefix = floor(3w/8).
  static BurrConfig defaults(std::uint32_t w, std::uint32_t r) {
    BurrConfig cfg;
    cfg.w = w;
    cfg.r = r;
    const double wd = w;
    cfg.g = std::max<std::uint64_t>(
        1, static_cast<std::uint64_t>(std::ceil(wd * wd / (4.0 * std::log2(std::max(wd, 2.0))))));
    cfg.alpha0 = 1.0 + 0.5 * std::log(wd) / wd;
    cfg.bump_prefix = std::max<std::uint32_t>(1, 3 * w / 8);
    return cfg;
  }

  void validate() const {
    if (w < 1 || w > 64) throw std::invalid_argument("BurrConfig: w must lie in [1, 64]");
    if (r < 1 || r > 64) throw std::invalid_argument("BurrConfig: r must lie in [1, 64]");
    if (g < 1) throw std::invalid_argument("BurrConfig: g must be >= 1");
    if (!(alpha0 > 0.0)) throw std::invalid_argument("BurrConfig: alpha0 must be positive");
    if (bump_prefix < 1 || bump_prefix > g) throw std::invalid_argument("BurrConfig: need 1 <= prefix <= g");
  }

  bool bumped(std::uint64_t start, BumpCode code) const noexcept {
    switch (code) {
      case BumpCode::None: return false;
      case BumpCode::Prefix: return start % g < bump_prefix;
      case BumpCode::All: return true;
    }
    return true;
  }
};

/// Number of starting positions for n keys at load alpha0.
inline std::uint64_t burr_positions(std::uint64_t n, double alpha0) {
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(static_cast<double>(n) / alpha0)));
}

/// Chooses a code per group by sweeping the starting positions left to right
/// and tracking the FIFO queue q_i = max(0, q_{i-1} + x_i - 1) of keys not yet
/// given a column. A group keeps the mildest code under which the queue stays
/// at most w-1 at each of its positions and at the w positions after it (those
/// taken unbumped). `starts` must be ascending and below `positions`.
inline std::vector<BumpCode> plan_bumps(std::span<const std::uint64_t> starts, std::uint64_t positions,
                                        const BurrConfig& cfg) {
  const std::uint64_t groups = (positions + cfg.g - 1) / cfg.g;
  std::vector<BumpCode> codes(groups, BumpCode::None);
  std::vector<std::uint32_t> arrivals(positions, 0);
  for (std::size_t i = 0; i < starts.size(); ++i) {
    if (starts[i] >= positions || (i > 0 && starts[i] < starts[i - 1])) {
      throw std::invalid_argument("plan_bumps: starts must be ascending and below positions");
    }
    ++arrivals[starts[i]];
  }
  const std::uint64_t limit = cfg.w - 1;
  const auto step = [](std::uint64_t q, std::uint64_t x) { return q + x > 0 ? q + x - 1 : 0; };
  std::uint64_t q = 0;
  for (std::uint64_t grp = 0; grp < groups; ++grp) {
    const std::uint64_t lo = grp * cfg.g;
    const std::uint64_t hi = std::min(positions, lo + cfg.g);
    const std::uint64_t ahead = std::min(positions, hi + cfg.w);
    for (BumpCode code : {BumpCode::None, BumpCode::Prefix, BumpCode::All}) {
      std::uint64_t qq = q;
      std::uint64_t at_end = 0;
      bool ok = true;
      for (std::uint64_t p = lo; p < ahead; ++p) {
        qq = step(qq, p < hi && cfg.bumped(p, code) ? 0 : arrivals[p]);
        if (p + 1 == hi) at_end = qq;
        if (qq > limit) {
          ok = false;
          break;
        }
      }
      if (ok || code == BumpCode::All) {
        codes[grp] = code;
        if (!ok) {
          at_end = q;
          for (std::uint64_t p = lo; p < hi; ++p) at_end = step(at_end, 0);
        }
        q = at_end;
        break;
      }
    }
  }
  return codes;
}

struct BurrLayer {
  std::uint64_t m = 0;
  Seed seed = 0;
  std::vector<BumpCode> codes;
  BitPlanes planes;
  // construction statistics (not serialized)
  std::uint64_t keys_in = 0;
  std::uint64_t stored = 0;
  std::uint64_t escalations = 0;

  std::uint64_t positions(std::uint32_t w) const noexcept { return m - w + 1; }
};

struct LayerBuild {
  BurrLayer layer;
  std::vector<std::uint32_t> bumped;  // indices into the layer's input
};

/// Layer hash of a key fingerprint.
constexpr Fingerprint layer_hash(Fingerprint fp, Seed layer_seed) noexcept { return mix64(fp ^ layer_seed); }

/// Builds one layer over the given fingerprints.
///
/// Rows are inserted group by group in order of starting position. If a row of
/// a group is inconsistent, the slots that group filled are cleared, its code
/// is escalated one step and the group is inserted again. A group under All
/// inserts nothing and therefore cannot fail.
inline LayerBuild build_layer(std::span<const Fingerprint> fps, std::span<const std::uint64_t> values,
                              const BurrConfig& cfg, Seed layer_seed) {
  cfg.validate();
  if (fps.size() != values.size()) throw std::invalid_argument("build_layer: key/value count mismatch");
  const std::uint64_t n = fps.size();
  const std::uint64_t positions = burr_positions(n, cfg.alpha0);
  LayerBuild out;
  BurrLayer& layer = out.layer;
  layer.m = positions + cfg.w - 1;
  layer.seed = layer_seed;
  layer.keys_in = n;

  std::vector<RibbonRow> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = ribbon_row(layer_hash(fps[i], layer_seed), cfg.w, layer.m);
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) {
    return std::pair(rows[a].start, a) < std::pair(rows[b].start, b);
  });
  std::vector<std::uint64_t> starts(n);
  for (std::size_t i = 0; i < n; ++i) starts[i] = rows[order[i]].start;
  layer.codes = plan_bumps(starts, positions, cfg);

  const std::uint64_t mask = low_mask(cfg.r);
  RibbonState state(layer.m, cfg.w);
  std::vector<std::uint64_t> filled;
  std::size_t begin = 0;
  for (std::uint64_t grp = 0; grp < layer.codes.size(); ++grp) {
    std::size_t end = begin;
    while (end < n && rows[order[end]].start < (grp + 1) * cfg.g) ++end;
    BumpCode code = layer.codes[grp];
    for (;;) {
      filled.clear();
      bool ok = true;
      for (std::size_t t = begin; t < end && ok; ++t) {
        const auto i = order[t];
        if (cfg.bumped(rows[i].start, code)) continue;
        switch (state.insert(rows[i].start, rows[i].coeff, values[i] & mask)) {
          case RowInsert::Placed: filled.push_back(state.last_slot()); break;
          case RowInsert::Redundant: break;
          case RowInsert::Infeasible: ok = false; break;
        }
      }
      if (ok) break;
      for (auto j : filled) state.clear_slot(j);
      code = escalate(code);
      ++layer.escalations;
    }
    layer.codes[grp] = code;
    for (std::size_t t = begin; t < end; ++t) {
      if (cfg.bumped(rows[order[t]].start, code)) out.bumped.push_back(order[t]);
    }
    begin = end;
  }
  std::sort(out.bumped.begin(), out.bumped.end());
  layer.stored = state.stored();
  layer.planes = back_substitute(state, cfg.r, FreeFill::Zero);
  return out;
}

class BumpedRibbon {
 public:
  struct FallbackEntry {
    Fingerprint fp;
    std::uint64_t value;
    friend bool operator<(const FallbackEntry& a, const FallbackEntry& b) { return a.fp < b.fp; }
  };

  /// Builds over precomputed fingerprints (taken under `master`). Fingerprints
  /// must be distinct.
  static BumpedRibbon build_fp(std::span<const Fingerprint> fps, std::span<const std::uint64_t> values,
                               const BurrConfig& cfg, Seed master) {
    cfg.validate();
    if (fps.size() != values.size()) throw std::invalid_argument("burr build: key/value count mismatch");
    {
      std::vector<Fingerprint> sorted(fps.begin(), fps.end());
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw BurrError("burr build: duplicate fingerprints");
      }
    }
    BumpedRibbon out;
    out.cfg_ = cfg;
    out.master_ = master;
    out.n_ = fps.size();
    std::vector<Fingerprint> cur_fps(fps.begin(), fps.end());
    std::vector<std::uint64_t> cur_vals(values.begin(), values.end());
    for (std::uint32_t l = 0; l < cfg.layers_max && !cur_fps.empty(); ++l) {
      LayerBuild built = build_layer(cur_fps, cur_vals, cfg, sub_seed(master, l));
      std::vector<Fingerprint> next_fps;
      std::vector<std::uint64_t> next_vals;
      for (auto i : built.bumped) {
        next_fps.push_back(cur_fps[i]);
        next_vals.push_back(cur_vals[i]);
      }
      out.layers_.push_back(std::move(built.layer));
      cur_fps = std::move(next_fps);
      cur_vals = std::move(next_vals);
    }
    const std::uint64_t mask = low_mask(cfg.r);
    for (std::size_t i = 0; i < cur_fps.size(); ++i) out.fallback_.push_back({cur_fps[i], cur_vals[i] & mask});
    std::sort(out.fallback_.begin(), out.fallback_.end());
    return out;
  }

  /// Builds over keys; duplicate keys are rejected, and a 64-bit fingerprint
  /// collision between distinct keys moves to a fresh master seed.
  template <HashableKey Key>
  static BumpedRibbon build(std::span<const Key> keys, std::span<const std::uint64_t> values,
                            const BurrConfig& cfg, Seed master) {
    {
      std::vector<Key> sorted(keys.begin(), keys.end());
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw std::invalid_argument("burr build: duplicate key");
      }
    }
    Seed seed = master;
    for (int attempt = 0; attempt < 8; ++attempt, seed = mix64(seed ^ 0xB077ULL)) {
      std::vector<Fingerprint> fps(keys.size());
      for (std::size_t i = 0; i < keys.size(); ++i) fps[i] = fingerprint(keys[i], seed);
      try {
        return build_fp(fps, values, cfg, seed);
      } catch (const BurrError&) {
        continue;
      }
    }
    throw BurrError("burr build: fingerprint collisions persisted across re-seeds");
  }

  /// Layer that answers `fp`, or layers().size() if it is bumped everywhere.
  std::size_t answering_layer(Fingerprint fp) const noexcept {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      const RibbonRow row = ribbon_row(layer_hash(fp, layer.seed), cfg_.w, layer.m);
      if (!cfg_.bumped(row.start, layer.codes[row.start / cfg_.g])) return l;
    }
    return layers_.size();
  }

  std::uint64_t query_fp(Fingerprint fp) const noexcept {
    for (const auto& layer : layers_) {
      const RibbonRow row = ribbon_row(layer_hash(fp, layer.seed), cfg_.w, layer.m);
      if (cfg_.bumped(row.start, layer.codes[row.start / cfg_.g])) continue;
      return layer.planes.dot(row.start, row.coeff);
    }
    const auto it = std::lower_bound(fallback_.begin(), fallback_.end(), FallbackEntry{fp, 0});
    return it != fallback_.end() && it->fp == fp ? it->value : 0;
  }

  template <HashableKey Key>
  std::uint64_t query(const Key& key) const noexcept {
    return query_fp(fingerprint(key, master_));
  }

  const BurrConfig& config() const noexcept { return cfg_; }
  Seed master_seed() const noexcept { return master_; }
  std::uint64_t size() const noexcept { return n_; }
  const std::vector<BurrLayer>& layers() const noexcept { return layers_; }
  const std::vector<FallbackEntry>& fallback() const noexcept { return fallback_; }

  friend std::string serialize(const BumpedRibbon& bs);
  friend BumpedRibbon deserialize_burr(std::string_view data);

 private:
  BurrConfig cfg_;
  Seed master_ = 0;
  std::uint64_t n_ = 0;
  std::vector<BurrLayer> layers_;
  std::vector<FallbackEntry> fallback_;
};

struct LayerReport {
  std::uint64_t keys_in;
  std::uint64_t stored;
  std::uint64_t m;
  std::uint64_t groups;
  std::uint64_t codes[3];  // None, Prefix, All
};

struct OverheadReport {
  std::uint64_t n = 0;
  std::uint32_t r = 0;
  std::uint64_t solution_bits = 0;
  std::uint64_t metadata_bits = 0;
  std::uint64_t fallback_bits = 0;  // 64-bit fingerprint + r-bit value per entry
  std::uint64_t fallback_keys = 0;
  double empty_fraction = 0.0;      // unused columns over all columns
  std::vector<LayerReport> layers;

  std::uint64_t total_bits() const noexcept { return solution_bits + metadata_bits + fallback_bits; }
  double bits_per_key(std::uint64_t bits) const noexcept {
    return n ? static_cast<double>(bits) / static_cast<double>(n) : 0.0;
  }
  /// total bits / (n r) - 1
  double overhead() const noexcept {
    return n ? static_cast<double>(total_bits()) / (static_cast<double>(n) * r) - 1.0 : 0.0;
  }
};

inline OverheadReport overhead_report(const BumpedRibbon& bs) {
  OverheadReport rep;
  rep.n = bs.size();
  rep.r = bs.config().r;
  std::uint64_t columns = 0, used = 0;
  for (const auto& layer : bs.layers()) {
    LayerReport lr{layer.keys_in, layer.stored, layer.m, layer.codes.size(), {0, 0, 0}};
    for (auto c : layer.codes) ++lr.codes[static_cast<int>(c)];
    rep.solution_bits += layer.m * rep.r;
    rep.metadata_bits += 2 * layer.codes.size();
    columns += layer.m;
    used += layer.stored;
    rep.layers.push_back(lr);
  }
  rep.fallback_keys = bs.fallback().size();
  rep.fallback_bits = rep.fallback_keys * (64 + rep.r);
  rep.empty_fraction = columns ? 1.0 - static_cast<double>(used) / static_cast<double>(columns) : 0.0;
  return rep;
}

/// "BRR1" v1: w u32, r u32, g u64, prefix u32, layer count u32, master seed u64;
/// per layer: seed u64, m u64, ceil(groups/4) bytes of codes (group i in bits
/// 2(i%4)..2(i%4)+1 of byte i/4), r planes of ceil(m/64) u64 words; then the
/// fallback count u64 and (fingerprint u64, value u64) pairs sorted by fingerprint.
inline std::string serialize(const BumpedRibbon& bs) {
  const BurrConfig& cfg = bs.cfg_;
  ByteWriter out;
  out.magic("BRR1");
  out.u8(1);
  out.u32(cfg.w);
  out.u32(cfg.r);
  out.u64(cfg.g);
  out.u32(cfg.bump_prefix);
  out.u32(static_cast<std::uint32_t>(bs.layers_.size()));
  out.u64(bs.master_);
  for (const auto& layer : bs.layers_) {
    out.u64(layer.seed);
    out.u64(layer.m);
    for (std::size_t i = 0; i < layer.codes.size(); i += 4) {
      std::uint8_t byte = 0;
      for (std::size_t t = 0; t < 4 && i + t < layer.codes.size(); ++t) {
        byte |= static_cast<std::uint8_t>(static_cast<std::uint8_t>(layer.codes[i + t]) << (2 * t));
      }
      out.u8(byte);
    }
    for (std::uint32_t b = 0; b < cfg.r; ++b) out.words(layer.planes.plane(b));
  }
  out.u64(bs.fallback_.size());
  for (const auto& e : bs.fallback_) {
    out.u64(e.fp);
    out.u64(e.value);
  }
  return out.str();
}

inline BumpedRibbon deserialize_burr(std::string_view data) {
  ByteReader in(data);
  in.expect_magic("BRR1");
  if (in.u8() != 1) throw FormatError("BRR1: unsupported version");
  BumpedRibbon bs;
  BurrConfig& cfg = bs.cfg_;
  cfg.w = in.u32();
  cfg.r = in.u32();
  cfg.g = in.u64();
  cfg.bump_prefix = in.u32();
  const auto layer_count = in.u32();
  cfg.layers_max = layer_count;
  if (cfg.w < 1 || cfg.w > 64 || cfg.r < 1 || cfg.r > 64 || cfg.g < 1 || cfg.bump_prefix < 1 ||
      cfg.bump_prefix > cfg.g) {
    throw FormatError("BRR1: bad header");
  }
  bs.master_ = in.u64();
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    BurrLayer layer;
    layer.seed = in.u64();
    layer.m = in.u64();
    if (layer.m < cfg.w) throw FormatError("BRR1: layer narrower than w");
    const std::uint64_t groups = (layer.positions(cfg.w) + cfg.g - 1) / cfg.g;
    layer.codes.resize(groups);
    for (std::uint64_t i = 0; i < groups; i += 4) {
      const std::uint8_t byte = in.u8();
      for (std::uint64_t t = 0; t < 4; ++t) {
        const std::uint8_t bits = (byte >> (2 * t)) & 3;
        if (i + t < groups) layer.codes[i + t] = decode_bump(bits);
      }
    }
    layer.planes = BitPlanes(layer.m, cfg.r);
    for (std::uint32_t b = 0; b < cfg.r; ++b) layer.planes.load_plane(b, in.words((layer.m + 63) / 64));
    bs.layers_.push_back(std::move(layer));
  }
  const auto count = in.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto fp = in.u64();
    const auto value = in.u64();
    bs.fallback_.push_back({fp, value});
  }
  if (!std::is_sorted(bs.fallback_.begin(), bs.fallback_.end())) throw FormatError("BRR1: fallback not sorted");
  in.expect_end();
  return bs;
}

}  // namespace choicehash
