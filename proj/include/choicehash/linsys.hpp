#pragma once

// Retrieval through random linear systems over F2: row construction, bit-parallel
// Gaussian elimination, sharded builds, and the trit-array warm-up scheme.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "choicehash/hashcore.hpp"
#include "choicehash/io.hpp"

namespace choicehash {

template <class K>
concept HashableKey = requires(const K& k, Seed s) {
  { fingerprint(k, s) } -> std::convertible_to<Fingerprint>;
};

/// Bits per stored value.
class ValueSpec {
 public:
  explicit ValueSpec(std::uint32_t r) : r_(r) {
    if (r < 1 || r > 64) throw std::invalid_argument("ValueSpec: r must lie in [1, 64]");
  }
  std::uint32_t r() const noexcept { return r_; }
  std::uint64_t mask() const noexcept { return low_mask(r_); }

 private:
  std::uint32_t r_;
};

enum class FreeFill { Zero, Random };

inline constexpr std::uint32_t kNoPivot = 0xFFFFFFFFu;

struct Equation {
  std::vector<std::uint32_t> columns;  // sorted, distinct
  std::uint64_t rhs = 0;
};

struct LinearSystem {
  std::uint64_t m = 0;
  std::vector<Equation> rows;

  void validate() const {
    for (const auto& row : rows) {
      if (row.columns.empty()) throw std::invalid_argument("LinearSystem: all-zero row");
      for (auto c : row.columns) {
        if (c >= m) throw std::out_of_range("LinearSystem: column index out of range");
      }
    }
  }

  /// Dense 0/1 rendering, one string per row.
  std::vector<std::string> dense() const {
    std::vector<std::string> out;
    for (const auto& row : rows) {
      std::string line(m, '0');
      for (auto c : row.columns) line[c] = '1';
      out.push_back(std::move(line));
    }
    return out;
  }
};

/// XOR of the table entries selected by `columns`.
inline std::uint64_t dot(std::span<const std::uint32_t> columns, std::span<const std::uint64_t> table) {
  std::uint64_t acc = 0;
  for (auto c : columns) acc ^= table[c];
  return acc;
}

/// True iff every equation holds under `table`.
inline bool verify(const LinearSystem& sys, std::span<const std::uint64_t> table) {
  return std::all_of(sys.rows.begin(), sys.rows.end(),
                     [&](const Equation& e) { return dot(e.columns, table) == e.rhs; });
}

inline LinearSystem build_rows(std::span<const Fingerprint> fps, std::span<const std::uint64_t> values,
                               const RowVariant& variant, std::uint64_t m) {
  if (fps.size() != values.size()) throw std::invalid_argument("build_rows: key/value count mismatch");
  if (m == 0) throw std::invalid_argument("build_rows: m must be positive");
  validate_variant(variant, m);
  LinearSystem sys{m, {}};
  sys.rows.resize(fps.size());
  for (std::size_t i = 0; i < fps.size(); ++i) {
    row_columns(fps[i], variant, m, sys.rows[i].columns);
    sys.rows[i].rhs = values[i];
  }
  return sys;
}

template <HashableKey Key>
LinearSystem build_rows(std::span<const Key> keys, std::span<const std::uint64_t> values, Seed seed,
                        const RowVariant& variant, std::uint64_t m) {
  std::vector<Fingerprint> fps(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) fps[i] = fingerprint(keys[i], seed);
  return build_rows(fps, values, variant, m);
}

/// Solves the system; nullopt when it is inconsistent.
///
/// Rows owning a column no other remaining row touches are peeled off first and
/// solved last by back-substitution. The rest is eliminated densely, 64 columns
/// per word: rows are sorted by their smallest column and each one is reduced
/// against stored pivot rows until its lowest set column is unclaimed. Columns
/// that end up without a pivot get `fill`.
inline std::optional<std::vector<std::uint64_t>> gauss_solve(const LinearSystem& sys,
                                                             FreeFill fill = FreeFill::Zero,
                                                             Seed fill_seed = 0,
                                                             std::uint64_t value_mask = ~0ULL) {
  sys.validate();
  const std::size_t n = sys.rows.size();
  const std::uint64_t m = sys.m;

  // peeling
  std::vector<std::uint32_t> degree(m, 0), row_xor(m, 0);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (auto c : sys.rows[i].columns) {
      ++degree[c];
      row_xor[c] ^= i;
    }
  }
  std::vector<std::uint32_t> stack;
  for (std::uint32_t c = 0; c < m; ++c) {
    if (degree[c] == 1) stack.push_back(c);
  }
  std::vector<char> peeled(n, 0);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> peel_order;  // (row, pivot column)
  while (!stack.empty()) {
    const std::uint32_t c = stack.back();
    stack.pop_back();
    if (degree[c] != 1) continue;
    const std::uint32_t row = row_xor[c];
    peeled[row] = 1;
    peel_order.emplace_back(row, c);
    for (auto d : sys.rows[row].columns) {
      --degree[d];
      row_xor[d] ^= row;
      if (degree[d] == 1) stack.push_back(d);
    }
  }

  // dense elimination of the core
  std::vector<std::uint32_t> core;
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!peeled[i]) core.push_back(i);
  }
  std::vector<std::uint32_t> compact_cols;
  for (auto i : core) {
    compact_cols.insert(compact_cols.end(), sys.rows[i].columns.begin(), sys.rows[i].columns.end());
  }
  std::sort(compact_cols.begin(), compact_cols.end());
  compact_cols.erase(std::unique(compact_cols.begin(), compact_cols.end()), compact_cols.end());
  const std::size_t mc = compact_cols.size();
  const std::size_t words = (mc + 63) / 64;
  auto compact_index = [&](std::uint32_t col) {
    return static_cast<std::size_t>(std::lower_bound(compact_cols.begin(), compact_cols.end(), col) -
                                    compact_cols.begin());
  };
  std::sort(core.begin(), core.end(), [&](auto a, auto b) {
    return std::pair(sys.rows[a].columns.front(), a) < std::pair(sys.rows[b].columns.front(), b);
  });

  std::vector<std::uint64_t> pivot_bits;   // stored rows, `words` each
  std::vector<std::uint64_t> pivot_rhs;
  std::vector<std::uint32_t> pivot_of(mc, kNoPivot);
  std::vector<std::uint64_t> row(words);
  for (auto i : core) {
    std::fill(row.begin(), row.end(), 0);
    for (auto c : sys.rows[i].columns) {
      const std::size_t j = compact_index(c);
      row[j / 64] |= 1ULL << (j % 64);
    }
    std::uint64_t rhs = sys.rows[i].rhs & value_mask;
    std::size_t w = 0;
    for (;;) {
      while (w < words && row[w] == 0) ++w;
      if (w == words) {
        if (rhs != 0) return std::nullopt;
        break;  // redundant
      }
      const std::size_t col = w * 64 + static_cast<std::size_t>(__builtin_ctzll(row[w]));
      if (pivot_of[col] == kNoPivot) {
        pivot_of[col] = static_cast<std::uint32_t>(pivot_rhs.size());
        pivot_bits.insert(pivot_bits.end(), row.begin(), row.end());
        pivot_rhs.push_back(rhs);
        break;
      }
      const std::uint64_t* p = pivot_bits.data() + static_cast<std::size_t>(pivot_of[col]) * words;
      for (std::size_t t = w; t < words; ++t) row[t] ^= p[t];
      rhs ^= pivot_rhs[pivot_of[col]];
    }
  }

  // free columns
  std::vector<char> is_pivot(m, 0);
  for (std::size_t j = 0; j < mc; ++j) {
    if (pivot_of[j] != kNoPivot) is_pivot[compact_cols[j]] = 1;
  }
  for (const auto& [r, c] : peel_order) is_pivot[c] = 1;
  std::vector<std::uint64_t> z(m, 0);
  if (fill == FreeFill::Random) {
    SplitMix rng(fill_seed);
    for (std::uint64_t c = 0; c < m; ++c) {
      const std::uint64_t v = rng.next() & value_mask;
      if (!is_pivot[c]) z[c] = v;
    }
  }

  // back-substitution: dense pivots from the highest column down, then peeled rows in reverse
  for (std::size_t j = mc; j-- > 0;) {
    if (pivot_of[j] == kNoPivot) continue;
    const std::uint64_t* p = pivot_bits.data() + static_cast<std::size_t>(pivot_of[j]) * words;
    std::uint64_t v = pivot_rhs[pivot_of[j]];
    for (std::size_t w = j / 64; w < words; ++w) {
      std::uint64_t bits = p[w];
      if (w == j / 64) bits &= ~(1ULL << (j % 64));
      while (bits) {
        v ^= z[compact_cols[w * 64 + static_cast<std::size_t>(__builtin_ctzll(bits))]];
        bits &= bits - 1;
      }
    }
    z[compact_cols[j]] = v;
  }
  for (auto it = peel_order.rbegin(); it != peel_order.rend(); ++it) {
    const auto& eq = sys.rows[it->first];
    std::uint64_t v = eq.rhs & value_mask;
    for (auto c : eq.columns) {
      if (c != it->second) v ^= z[c];
    }
    z[it->second] = v;
  }
  return z;
}

// ---------------------------------------------------------------------------
// Unsharded retrieval

inline constexpr int kMaxAttempts = 4;  // first try plus three fresh seeds

struct Solution {
  std::uint64_t m = 0;
  std::uint32_t r = 1;
  Seed seed = 0;
  std::uint32_t attempt = 0;
  RowVariant variant = KSet{};
  std::vector<std::uint64_t> table;  // m entries of r bits

  std::uint64_t query_fp(Fingerprint fp) const {
    std::vector<std::uint32_t> cols;
    row_columns(rekey(fp, attempt), variant, m, cols);
    return dot(cols, table);
  }
};

template <HashableKey Key>
std::uint64_t query_dot(const Solution& sol, const Key& key) {
  return sol.query_fp(fingerprint(key, sol.seed));
}

/// Builds a retrieval structure over precomputed fingerprints, re-keying up to
/// three times on an inconsistent system.
inline std::optional<Solution> build_retrieval_fp(std::span<const Fingerprint> fps,
                                                  std::span<const std::uint64_t> values, ValueSpec spec,
                                                  Seed seed, const RowVariant& variant, std::uint64_t m,
                                                  FreeFill fill = FreeFill::Zero) {
  std::vector<Fingerprint> keyed(fps.size());
  std::vector<std::uint64_t> masked(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) masked[i] = values[i] & spec.mask();
  for (std::uint32_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    for (std::size_t i = 0; i < fps.size(); ++i) keyed[i] = rekey(fps[i], attempt);
    const LinearSystem sys = build_rows(keyed, masked, variant, m);
    auto z = gauss_solve(sys, fill, sub_seed(seed, attempt), spec.mask());
    if (z) return Solution{m, spec.r(), seed, attempt, variant, std::move(*z)};
  }
  return std::nullopt;
}

template <HashableKey Key>
std::optional<Solution> build_retrieval(std::span<const Key> keys, std::span<const std::uint64_t> values,
                                        ValueSpec spec, Seed seed, const RowVariant& variant,
                                        std::uint64_t m, FreeFill fill = FreeFill::Zero) {
  std::vector<Fingerprint> fps(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) fps[i] = fingerprint(keys[i], seed);
  return build_retrieval_fp(fps, values, spec, seed, variant, m, fill);
}

/// Default geometry for two-block rows: ell = ceil(2 log2 n), m = n + ceil(10 log2 n).
struct TwoBlockGeometry {
  std::uint32_t ell;
  std::uint64_t m;
};
inline TwoBlockGeometry two_block_defaults(std::uint64_t n) {
  const double lg = n > 1 ? std::log2(static_cast<double>(n)) : 0.0;
  const auto ell = static_cast<std::uint32_t>(std::clamp(std::ceil(2.0 * lg), 1.0, 64.0));
  std::uint64_t m = n + static_cast<std::uint64_t>(std::ceil(10.0 * lg));
  m = std::max<std::uint64_t>(m, 2ULL * ell);
  return {ell, m};
}

/// Column count for a k-set system at load alpha.
inline std::uint64_t kset_columns(std::uint64_t n, double alpha, std::uint32_t k) {
  return std::max<std::uint64_t>(k, static_cast<std::uint64_t>(std::ceil(static_cast<double>(n) / alpha)));
}

inline constexpr double kDefaultKSetLoad = 0.81;

// ---------------------------------------------------------------------------
// Sharding

inline std::uint64_t shard_of(Fingerprint fp, std::uint64_t shards) noexcept {
  return reduce(mix64(fp ^ 0x5348415244ULL), shards);
}

struct ShardPlan {
  std::uint64_t target_size = 1;
  std::vector<std::vector<std::uint32_t>> members;  // key indices per shard
};

inline ShardPlan shard_split(std::span<const Fingerprint> fps, std::uint64_t target_size) {
  if (target_size == 0) throw std::invalid_argument("shard_split: C must be >= 1");
  const std::uint64_t shards = std::max<std::uint64_t>(1, (fps.size() + target_size - 1) / target_size);
  ShardPlan plan{target_size, std::vector<std::vector<std::uint32_t>>(shards)};
  for (std::uint32_t i = 0; i < fps.size(); ++i) plan.members[shard_of(fps[i], shards)].push_back(i);
  return plan;
}

enum class PatternKind : std::uint8_t { KSet = 1, TwoBlockSubset = 2 };

/// Independently solved shards sharing one concatenated table.
struct ShardedRetrieval {
  struct Shard {
    std::uint64_t offset = 0;  // first column in `table`
    std::uint64_t m = 0;
    std::uint32_t param = 0;   // k or ell
    std::uint32_t attempt = 0;
  };

  Seed seed = 0;
  std::uint32_t r = 1;
  PatternKind kind = PatternKind::KSet;
  std::vector<Shard> shards;
  std::vector<std::uint64_t> table;

  RowVariant shard_variant(const Shard& s) const {
    if (kind == PatternKind::KSet) return KSet{s.param};
    return TwoBlockSubset{s.param};
  }

  std::uint64_t query_fp(Fingerprint fp) const {
    const Shard& s = shards[shard_of(fp, shards.size())];
    if (s.m == 0) return 0;
    std::vector<std::uint32_t> cols;
    row_columns(rekey(fp, s.attempt), shard_variant(s), s.m, cols);
    return dot(cols, std::span<const std::uint64_t>(table).subspan(s.offset, s.m));
  }

  template <HashableKey Key>
  std::uint64_t query(const Key& key) const {
    return query_fp(fingerprint(key, seed));
  }

  std::uint64_t total_columns() const noexcept { return table.size(); }
};

struct ShardOptions {
  PatternKind kind = PatternKind::KSet;
  std::uint32_t k = 3;             // KSet only
  double alpha = kDefaultKSetLoad; // KSet only
  std::uint64_t target_size = 1024;
  FreeFill fill = FreeFill::Zero;
};

/// Sharded build; nullopt if some shard stays inconsistent after three re-seeds.
inline std::optional<ShardedRetrieval> build_sharded_fp(std::span<const Fingerprint> fps,
                                                        std::span<const std::uint64_t> values, ValueSpec spec,
                                                        Seed seed, const ShardOptions& opt) {
  if (fps.size() != values.size()) throw std::invalid_argument("build_sharded: key/value count mismatch");
  const ShardPlan plan = shard_split(fps, opt.target_size);
  ShardedRetrieval out{seed, spec.r(), opt.kind, {}, {}};
  std::vector<Fingerprint> sub_fps;
  std::vector<std::uint64_t> sub_vals;
  for (std::size_t s = 0; s < plan.members.size(); ++s) {
    const auto& members = plan.members[s];
    ShardedRetrieval::Shard shard;
    shard.offset = out.table.size();
    if (members.empty()) {
      out.shards.push_back(shard);
      continue;
    }
    sub_fps.clear();
    sub_vals.clear();
    for (auto i : members) {
      sub_fps.push_back(fps[i]);
      sub_vals.push_back(values[i]);
    }
    RowVariant variant;
    if (opt.kind == PatternKind::KSet) {
      shard.param = opt.k;
      shard.m = kset_columns(members.size(), opt.alpha, opt.k);
      variant = KSet{opt.k};
    } else {
      const auto geo = two_block_defaults(members.size());
      shard.param = geo.ell;
      shard.m = geo.m;
      variant = TwoBlockSubset{geo.ell};
    }
    auto sol = build_retrieval_fp(sub_fps, sub_vals, spec, sub_seed(seed, s), variant, shard.m, opt.fill);
    if (!sol) return std::nullopt;
    shard.attempt = sol->attempt;
    out.table.insert(out.table.end(), sol->table.begin(), sol->table.end());
    out.shards.push_back(shard);
  }
  return out;
}

template <HashableKey Key>
std::optional<ShardedRetrieval> build_sharded(std::span<const Key> keys, std::span<const std::uint64_t> values,
                                              ValueSpec spec, Seed seed, const ShardOptions& opt) {
  std::vector<Fingerprint> fps(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) fps[i] = fingerprint(keys[i], seed);
  return build_sharded_fp(fps, values, spec, seed, opt);
}

// ---------------------------------------------------------------------------
// Serialization

/// "F2RS" v1: m u64, r u32, seed u64, variant tag u8, variant param u32,
/// attempt u32, then m*r table bits row-major, LSB-first in u64 words.
inline std::string serialize(const Solution& sol) {
  ByteWriter out;
  out.magic("F2RS");
  out.u8(1);
  out.u64(sol.m);
  out.u32(sol.r);
  out.u64(sol.seed);
  if (const auto* ks = std::get_if<KSet>(&sol.variant)) {
    out.u8(1);
    out.u32(ks->k);
  } else if (const auto* tb = std::get_if<TwoBlockSubset>(&sol.variant)) {
    out.u8(2);
    out.u32(tb->ell);
  } else {
    out.u8(3);
    out.u32(std::get<RibbonBlock>(sol.variant).w);
  }
  out.u32(sol.attempt);
  BitPacker bits;
  for (auto v : sol.table) bits.push(v, sol.r);
  out.words(bits.words());
  return out.str();
}

inline Solution deserialize_solution(std::string_view data) {
  ByteReader in(data);
  in.expect_magic("F2RS");
  if (in.u8() != 1) throw FormatError("F2RS: unsupported version");
  Solution sol;
  sol.m = in.u64();
  sol.r = in.u32();
  if (sol.r < 1 || sol.r > 64) throw FormatError("F2RS: r out of range");
  sol.seed = in.u64();
  const auto tag = in.u8();
  const auto param = in.u32();
  switch (tag) {
    case 1: sol.variant = KSet{param}; break;
    case 2: sol.variant = TwoBlockSubset{param}; break;
    case 3: sol.variant = RibbonBlock{param}; break;
    default: throw FormatError("F2RS: unknown variant tag");
  }
  sol.attempt = in.u32();
  const auto words = in.words((sol.m * sol.r + 63) / 64);
  in.expect_end();
  sol.table.resize(sol.m);
  for (std::uint64_t c = 0; c < sol.m; ++c) sol.table[c] = read_bits(words, c * sol.r, sol.r);
  return sol;
}

/// "F2SH" v1: seed u64, r u32, kind u8, shard count u64, per shard
/// (m u64, param u32, attempt u32), then all table bits as in F2RS.
inline std::string serialize(const ShardedRetrieval& sr) {
  ByteWriter out;
  out.magic("F2SH");
  out.u8(1);
  out.u64(sr.seed);
  out.u32(sr.r);
  out.u8(static_cast<std::uint8_t>(sr.kind));
  out.u64(sr.shards.size());
  for (const auto& s : sr.shards) {
    out.u64(s.m);
    out.u32(s.param);
    out.u32(s.attempt);
  }
  BitPacker bits;
  for (auto v : sr.table) bits.push(v, sr.r);
  out.words(bits.words());
  return out.str();
}

inline ShardedRetrieval deserialize_sharded(std::string_view data) {
  ByteReader in(data);
  in.expect_magic("F2SH");
  if (in.u8() != 1) throw FormatError("F2SH: unsupported version");
  ShardedRetrieval sr;
  sr.seed = in.u64();
  sr.r = in.u32();
  if (sr.r < 1 || sr.r > 64) throw FormatError("F2SH: r out of range");
  const auto kind = in.u8();
  if (kind != 1 && kind != 2) throw FormatError("F2SH: unknown pattern kind");
  sr.kind = static_cast<PatternKind>(kind);
  const auto count = in.u64();
  if (count == 0) throw FormatError("F2SH: no shards");
  std::uint64_t offset = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    ShardedRetrieval::Shard s;
    s.offset = offset;
    s.m = in.u64();
    s.param = in.u32();
    s.attempt = in.u32();
    offset += s.m;
    sr.shards.push_back(s);
  }
  const auto words = in.words((offset * sr.r + 63) / 64);
  in.expect_end();
  sr.table.resize(offset);
  for (std::uint64_t c = 0; c < offset; ++c) sr.table[c] = read_bits(words, c * sr.r, sr.r);
  return sr;
}

// ---------------------------------------------------------------------------
// Trit-array retrieval of single bits

enum class Trit : std::uint8_t { Zero = 0b00, One = 0b11, Conflict = 0b01 };

/// Levels of {0, 1, conflict} cells; keys in conflicting cells move on to the next level.
class TritRetrieval {
 public:
  struct Level {
    std::uint64_t m = 0;
    Seed seed = 0;
    std::vector<std::uint64_t> cells;  // 2 bits per cell, 32 per word

    Trit get(std::uint64_t i) const noexcept {
      return static_cast<Trit>((cells[i / 32] >> (2 * (i % 32))) & 3ULL);
    }
    void set(std::uint64_t i, Trit t) noexcept {
      const unsigned shift = 2 * (i % 32);
      cells[i / 32] = (cells[i / 32] & ~(3ULL << shift)) | (static_cast<std::uint64_t>(t) << shift);
    }
  };

  /// `keys_per_cell` is n/m at every level (2 by default, i.e. m = n/2).
  static TritRetrieval build(std::span<const Fingerprint> fps, std::span<const std::uint8_t> bits, Seed seed,
                             double keys_per_cell = 2.0) {
    if (fps.size() != bits.size()) throw std::invalid_argument("trit_build: key/bit count mismatch");
    if (!(keys_per_cell > 0.0)) throw std::invalid_argument("trit_build: load must be positive");
    TritRetrieval out;
    out.seed_ = seed;
    out.n_ = fps.size();
    std::vector<std::uint32_t> pending(fps.size());
    for (std::uint32_t i = 0; i < pending.size(); ++i) pending[i] = i;
    std::vector<std::uint8_t> seen;  // bit 0: saw a 0, bit 1: saw a 1
    std::vector<std::uint64_t> cell_of;
    int stalled = 0;
    while (!pending.empty()) {
      Level level;
      level.seed = sub_seed(seed, out.levels_.size());
      level.m = std::max<std::uint64_t>(
          std::min<std::uint64_t>(pending.size(), 2),
          static_cast<std::uint64_t>(std::ceil(static_cast<double>(pending.size()) / keys_per_cell)));
      level.cells.assign((level.m + 31) / 32, 0);
      seen.assign(level.m, 0);
      cell_of.resize(pending.size());
      for (std::size_t j = 0; j < pending.size(); ++j) {
        const auto i = pending[j];
        cell_of[j] = reduce(mix64(fps[i] ^ level.seed), level.m);
        seen[cell_of[j]] |= bits[i] ? 2 : 1;
      }
      for (std::uint64_t c = 0; c < level.m; ++c) {
        level.set(c, seen[c] == 3 ? Trit::Conflict : seen[c] == 2 ? Trit::One : Trit::Zero);
      }
      std::vector<std::uint32_t> next;
      for (std::size_t j = 0; j < pending.size(); ++j) {
        if (seen[cell_of[j]] == 3) next.push_back(pending[j]);
      }
      out.levels_.push_back(std::move(level));
      stalled = next.size() == pending.size() ? stalled + 1 : 0;
      if (stalled > 64) throw std::invalid_argument("trit_build: equal fingerprints with different bits");
      pending = std::move(next);
    }
    return out;
  }

  template <HashableKey Key>
  static TritRetrieval build(std::span<const Key> keys, std::span<const std::uint8_t> bits, Seed seed,
                             double keys_per_cell = 2.0) {
    std::vector<Fingerprint> fps(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) fps[i] = fingerprint(keys[i], seed);
    return build(fps, bits, seed, keys_per_cell);
  }

  /// Level index that answers `fp`, or levels().size() if every level conflicts.
  std::size_t resolving_level(Fingerprint fp) const noexcept {
    for (std::size_t l = 0; l < levels_.size(); ++l) {
      const auto& level = levels_[l];
      if (level.get(reduce(mix64(fp ^ level.seed), level.m)) != Trit::Conflict) return l;
    }
    return levels_.size();
  }

  std::uint8_t query_fp(Fingerprint fp) const noexcept {
    const std::size_t l = resolving_level(fp);
    if (l == levels_.size()) return 0;
    const auto& level = levels_[l];
    return level.get(reduce(mix64(fp ^ level.seed), level.m)) == Trit::One ? 1 : 0;
  }

  template <HashableKey Key>
  std::uint8_t query(const Key& key) const noexcept {
    return query_fp(fingerprint(key, seed_));
  }

  const std::vector<Level>& levels() const noexcept { return levels_; }
  std::uint64_t total_cells() const noexcept {
    std::uint64_t total = 0;
    for (const auto& l : levels_) total += l.m;
    return total;
  }
  double cells_per_key() const noexcept {
    return n_ ? static_cast<double>(total_cells()) / static_cast<double>(n_) : 0.0;
  }
  double bits_per_key() const noexcept { return 2.0 * cells_per_key(); }
  Seed seed() const noexcept { return seed_; }

 private:
  Seed seed_ = 0;
  std::size_t n_ = 0;
  std::vector<Level> levels_;
};

}  // namespace choicehash
