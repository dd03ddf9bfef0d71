#pragma once

// Seeded hashing and derivation of candidate cells / row patterns.
//
// Everything downstream is a pure function of (key bytes, seed, config); the
// mixer constants, lane folding and range reduction below are normative and
// are documented in docs/FORMATS.md.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace choicehash {

using Seed = std::uint64_t;
using Fingerprint = std::uint64_t;

inline constexpr Seed kDefaultSeed = 0xC0FFEE;

/// Avalanche finalizer. A bijection on 64-bit words (every stage inverts).
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Round constant folded into lane i of a key under `seed`.
constexpr std::uint64_t lane_constant(Seed seed, std::uint64_t lane_index) noexcept {
  return mix64(seed + (lane_index + 1) * 0x9E3779B97F4A7C15ULL);
}

/// Canonical 64-bit fingerprint of a byte string.
///   h = mix64(seed ^ len);  for each 8-byte little-endian lane i (last one
///   zero padded): h = mix64(h ^ lane ^ lane_constant(seed, i)).
inline Fingerprint fingerprint(std::string_view key, Seed seed) noexcept {
  std::uint64_t h = mix64(seed ^ static_cast<std::uint64_t>(key.size()));
  const auto* bytes = reinterpret_cast<const unsigned char*>(key.data());
  const std::size_t lanes = (key.size() + 7) / 8;
  for (std::size_t i = 0; i < lanes; ++i) {
    std::uint64_t lane = 0;
    const std::size_t take = std::min<std::size_t>(8, key.size() - 8 * i);
    for (std::size_t b = 0; b < take; ++b) {
      lane |= static_cast<std::uint64_t>(bytes[8 * i + b]) << (8 * b);
    }
    h = mix64(h ^ lane ^ lane_constant(seed, i));
  }
  return h;
}

/// Integer keys hash as their 8-byte little-endian rendering.
constexpr Fingerprint fingerprint(std::uint64_t key, Seed seed) noexcept {
  const std::uint64_t h = mix64(seed ^ 8ULL);
  return mix64(h ^ key ^ lane_constant(seed, 0));
}

/// 8-byte little-endian byte string of a counter key.
inline std::string counter_key(std::uint64_t value) {
  std::string out(8, '\0');
  for (int b = 0; b < 8; ++b) out[b] = static_cast<char>((value >> (8 * b)) & 0xFF);
  return out;
}

/// i-th derived hash of a fingerprint.
constexpr std::uint64_t derived(Fingerprint fp, std::uint64_t i) noexcept {
  return mix64(fp ^ mix64(i + 1));
}

/// Multiply-high range reduction of a 64-bit hash onto [0, n).
constexpr std::uint64_t reduce(std::uint64_t h, std::uint64_t n) noexcept {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(h) * n) >> 64);
}

/// Re-keys a fingerprint for construction attempt `attempt` (attempt 0 is the identity).
constexpr Fingerprint rekey(Fingerprint fp, std::uint64_t attempt) noexcept {
  return attempt == 0 ? fp : mix64(fp ^ mix64(attempt ^ 0xA77E3D7ULL));
}

/// Seed of the i-th sub-structure (layer, shard, trial) under `master`.
constexpr Seed sub_seed(Seed master, std::uint64_t i) noexcept {
  return mix64(master ^ mix64(i + 1));
}

/// Counter-based generator. next() = mix64(seed + t*golden) for t = 1, 2, ...
class SplitMix {
 public:
  explicit constexpr SplitMix(Seed seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
  }
  constexpr std::uint64_t below(std::uint64_t n) noexcept { return reduce(next(), n); }
  /// Uniform double in [0, 1) with 53 random bits.
  constexpr double uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Candidate positions

enum class Mode { Independent, DoubleHashing, UnalignedWindow, SpatiallyCoupled };

inline const char* mode_name(Mode mode) {
  switch (mode) {
    case Mode::Independent: return "independent";
    case Mode::DoubleHashing: return "double";
    case Mode::UnalignedWindow: return "unaligned";
    case Mode::SpatiallyCoupled: return "coupled";
  }
  return "?";
}

inline Mode parse_mode(std::string_view name) {
  if (name == "independent") return Mode::Independent;
  if (name == "double") return Mode::DoubleHashing;
  if (name == "unaligned") return Mode::UnalignedWindow;
  if (name == "coupled") return Mode::SpatiallyCoupled;
  throw std::invalid_argument("unknown mode '" + std::string(name) + "'");
}

struct ChoiceConfig {
  std::uint64_t m = 1;
  std::uint32_t k = 2;
  std::uint32_t ell = 1;
  Mode mode = Mode::Independent;
  double epsilon = 0.05;  // SpatiallyCoupled only

  std::uint64_t buckets() const noexcept { return m / ell; }
  std::uint64_t interval_cells() const {
    return static_cast<std::uint64_t>(std::ceil(epsilon * static_cast<double>(m)));
  }
  std::uint32_t choices() const noexcept { return k * ell; }

  void validate() const {
    if (m == 0 || k == 0 || ell == 0) {
      throw std::invalid_argument("ChoiceConfig: m, k and ell must be positive");
    }
    switch (mode) {
      case Mode::Independent:
      case Mode::DoubleHashing:
        if (m < static_cast<std::uint64_t>(k) * ell) {
          throw std::invalid_argument("ChoiceConfig: need m >= k*ell");
        }
        break;
      case Mode::UnalignedWindow:
        if (m < ell) throw std::invalid_argument("ChoiceConfig: need m >= ell");
        break;
      case Mode::SpatiallyCoupled:
        if (!(epsilon > 0.0 && epsilon < 1.0)) {
          throw std::invalid_argument("ChoiceConfig: epsilon must lie in (0,1)");
        }
        if (interval_cells() < static_cast<std::uint64_t>(k) * ell || interval_cells() > m) {
          throw std::invalid_argument("ChoiceConfig: need ceil(eps*m) >= k*ell");
        }
        break;
    }
  }
};

/// Buckets b_i = b1 + i*d mod buckets for i in [0, k).
inline void double_hash_buckets(std::uint64_t b1, std::uint64_t d, std::uint32_t k,
                                std::uint64_t buckets, std::vector<std::uint64_t>& out) {
  out.clear();
  for (std::uint32_t i = 0; i < k; ++i) {
    out.push_back(static_cast<std::uint64_t>(
        (b1 + static_cast<unsigned __int128>(i) * d) % buckets));
  }
}

/// Appends the k*ell candidate cells of `fp` to `out` (cleared first).
/// Duplicate choices are kept. `cfg` must be valid.
inline void positions_for(Fingerprint fp, const ChoiceConfig& cfg, std::vector<std::uint32_t>& out) {
  out.clear();
  const std::uint32_t ell = cfg.ell;
  auto push_run = [&](std::uint64_t first) {
    for (std::uint32_t t = 0; t < ell; ++t) out.push_back(static_cast<std::uint32_t>(first + t));
  };
  switch (cfg.mode) {
    case Mode::Independent: {
      const std::uint64_t nb = cfg.buckets();
      for (std::uint32_t i = 0; i < cfg.k; ++i) push_run(reduce(derived(fp, i), nb) * ell);
      break;
    }
    case Mode::DoubleHashing: {
      const std::uint64_t nb = cfg.buckets();
      const std::uint64_t b1 = reduce(derived(fp, 0), nb);
      const std::uint64_t d = nb > 1 ? 1 + reduce(derived(fp, 1), nb - 1) : 0;
      for (std::uint32_t i = 0; i < cfg.k; ++i) {
        push_run(static_cast<std::uint64_t>((b1 + static_cast<unsigned __int128>(i) * d) % nb) * ell);
      }
      break;
    }
    case Mode::UnalignedWindow: {
      const std::uint64_t starts = cfg.m - ell + 1;
      for (std::uint32_t i = 0; i < cfg.k; ++i) push_run(reduce(derived(fp, i), starts));
      break;
    }
    case Mode::SpatiallyCoupled: {
      const std::uint64_t len = cfg.interval_cells();
      const std::uint64_t base = reduce(derived(fp, 0), cfg.m - len + 1);
      const std::uint64_t nb = len / ell;
      for (std::uint32_t i = 0; i < cfg.k; ++i) {
        push_run(base + reduce(derived(fp, i + 1), nb) * ell);
      }
      break;
    }
  }
}

inline std::vector<std::uint32_t> positions_for(Fingerprint fp, const ChoiceConfig& cfg) {
  std::vector<std::uint32_t> out;
  out.reserve(cfg.choices());
  positions_for(fp, cfg, out);
  return out;
}

// ---------------------------------------------------------------------------
// Row patterns for F2 retrieval

struct KSet {
  std::uint32_t k = 3;
};
struct TwoBlockSubset {
  std::uint32_t ell = 8;
};
struct RibbonBlock {
  std::uint32_t w = 64;
};
using RowVariant = std::variant<KSet, TwoBlockSubset, RibbonBlock>;

struct KSetRow {
  std::vector<std::uint32_t> columns;  // sorted, distinct
};
struct TwoBlockRow {
  std::uint64_t start[2];  // ascending, blocks disjoint
  std::uint64_t mask[2];   // nonzero, bit t = column start+t
};
struct RibbonRow {
  std::uint64_t start;
  std::uint64_t coeff;  // bit 0 set, bit t = column start+t
};

constexpr std::uint64_t low_mask(std::uint32_t bits) noexcept {
  return bits >= 64 ? ~0ULL : ((1ULL << bits) - 1);
}

/// k distinct columns; colliding draws are skipped by continuing the stream.
inline void kset_row(Fingerprint fp, std::uint32_t k, std::uint64_t m, std::vector<std::uint32_t>& out) {
  out.clear();
  for (std::uint64_t i = 0; out.size() < k; ++i) {
    const auto col = static_cast<std::uint32_t>(reduce(derived(fp, i), m));
    if (std::find(out.begin(), out.end(), col) == out.end()) out.push_back(col);
  }
  std::sort(out.begin(), out.end());
}

/// Two disjoint windows of `ell` columns, each with a uniform nonzero mask.
/// Requires m >= 2*ell.
inline TwoBlockRow two_block_row(Fingerprint fp, std::uint32_t ell, std::uint64_t m) noexcept {
  const std::uint64_t starts = m - ell + 1;
  std::uint64_t s0 = reduce(derived(fp, 0), starts);
  std::uint64_t s1 = 0;
  for (std::uint64_t i = 1;; ++i) {
    s1 = reduce(derived(fp, i + 1), starts);
    if (s1 + ell <= s0 || s0 + ell <= s1) break;
  }
  // nonzero masks: 1 + uniform over [0, 2^ell - 1)
  const std::uint64_t span = low_mask(ell);
  std::uint64_t m0 = 1 + reduce(mix64(fp ^ 0x6D61736B30ULL), span);
  std::uint64_t m1 = 1 + reduce(mix64(fp ^ 0x6D61736B31ULL), span);
  if (s1 < s0) {
    std::swap(s0, s1);
    std::swap(m0, m1);
  }
  return TwoBlockRow{{s0, s1}, {m0, m1}};
}

/// One block of w coefficient bits at a uniform start in [0, m-w].
constexpr RibbonRow ribbon_row(Fingerprint fp, std::uint32_t w, std::uint64_t m) noexcept {
  return RibbonRow{reduce(derived(fp, 0), m - w + 1), (derived(fp, 1) & low_mask(w)) | 1ULL};
}

inline void validate_variant(const RowVariant& variant, std::uint64_t m) {
  std::visit(
      [m](const auto& v) {
        using V = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<V, KSet>) {
          if (v.k == 0 || v.k > m) throw std::invalid_argument("KSet: need 1 <= k <= m");
        } else if constexpr (std::is_same_v<V, TwoBlockSubset>) {
          if (v.ell == 0 || v.ell > 64 || 2ULL * v.ell > m) {
            throw std::invalid_argument("TwoBlockSubset: need 1 <= ell <= 64 and 2*ell <= m");
          }
        } else {
          if (v.w == 0 || v.w > 64 || v.w > m) {
            throw std::invalid_argument("RibbonBlock: need 1 <= w <= min(64, m)");
          }
        }
      },
      variant);
}

/// Expands the row of `fp` into sorted column indices.
inline void row_columns(Fingerprint fp, const RowVariant& variant, std::uint64_t m,
                        std::vector<std::uint32_t>& out) {
  out.clear();
  auto push_mask = [&out](std::uint64_t start, std::uint64_t mask) {
    while (mask) {
      const int t = __builtin_ctzll(mask);
      out.push_back(static_cast<std::uint32_t>(start + t));
      mask &= mask - 1;
    }
  };
  if (const auto* ks = std::get_if<KSet>(&variant)) {
    kset_row(fp, ks->k, m, out);
  } else if (const auto* tb = std::get_if<TwoBlockSubset>(&variant)) {
    const TwoBlockRow row = two_block_row(fp, tb->ell, m);
    push_mask(row.start[0], row.mask[0]);
    push_mask(row.start[1], row.mask[1]);
  } else {
    const RibbonRow row = ribbon_row(fp, std::get<RibbonBlock>(variant).w, m);
    push_mask(row.start, row.coeff);
  }
}

}  // namespace choicehash
