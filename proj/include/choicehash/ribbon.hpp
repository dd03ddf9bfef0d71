#pragma once

// Ribbon retrieval: one block of w random coefficient bits per key, solved by
// incremental banded elimination and back-substitution.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "choicehash/hashcore.hpp"
#include "choicehash/io.hpp"
#include "choicehash/linsys.hpp"

namespace choicehash {

enum class RowInsert { Placed, Redundant, Infeasible };

/// Column count giving load alpha = n / (m - w + 1).
inline std::uint64_t ribbon_columns(std::uint64_t n, double alpha, std::uint32_t w) {
  const auto starts = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(static_cast<double>(n) / alpha)));
  return starts + w - 1;
}

/// Block width min(64, ceil(C * log2(n+1) / (1 - alpha))).
inline std::uint32_t choose_w(std::uint64_t n, double alpha, double c = 0.4) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("choose_w: alpha must lie in (0,1)");
  const double w = std::ceil(c * std::log2(static_cast<double>(n) + 1.0) / (1.0 - alpha));
  return static_cast<std::uint32_t>(std::clamp(w, 1.0, 64.0));
}

/// Pending echelon form. Slot j, when occupied, holds a row whose lowest
/// coefficient bit is column j (bit t of `coeff` is column j+t).
class RibbonState {
 public:
  RibbonState(std::uint64_t m, std::uint32_t w) : w_(w), coeff_(m, 0), rhs_(m, 0) {
    if (w == 0 || w > 64 || w > m) throw std::invalid_argument("RibbonState: need 1 <= w <= min(64, m)");
  }

  RowInsert insert(std::uint64_t start, std::uint64_t coeff, std::uint64_t rhs) {
    if (coeff == 0 || start + w_ > coeff_.size()) throw std::invalid_argument("RibbonState: bad row");
    int tz = __builtin_ctzll(coeff);
    std::uint64_t j = start + static_cast<std::uint64_t>(tz);
    coeff >>= tz;
    for (;;) {
      if (coeff_[j] == 0) {
        coeff_[j] = coeff;
        rhs_[j] = rhs;
        ++stored_;
        last_slot_ = j;
        return RowInsert::Placed;
      }
      coeff ^= coeff_[j];
      rhs ^= rhs_[j];
      ++row_xors_;
      if (coeff == 0) return rhs == 0 ? RowInsert::Redundant : RowInsert::Infeasible;
      tz = __builtin_ctzll(coeff);
      coeff >>= tz;
      j += static_cast<std::uint64_t>(tz);
    }
  }

  void clear_slot(std::uint64_t j) noexcept {
    if (coeff_[j] != 0) --stored_;
    coeff_[j] = 0;
    rhs_[j] = 0;
  }

  std::uint64_t m() const noexcept { return coeff_.size(); }
  std::uint32_t w() const noexcept { return w_; }
  bool occupied(std::uint64_t j) const noexcept { return coeff_[j] != 0; }
  std::uint64_t coeff(std::uint64_t j) const noexcept { return coeff_[j]; }
  std::uint64_t rhs(std::uint64_t j) const noexcept { return rhs_[j]; }
  std::uint64_t stored() const noexcept { return stored_; }
  std::uint64_t row_xors() const noexcept { return row_xors_; }
  /// Slot filled by the most recent Placed insert.
  std::uint64_t last_slot() const noexcept { return last_slot_; }

  /// Every occupied slot has its leading bit set and spans fewer than w columns inside the table.
  bool band_ok() const noexcept {
    for (std::uint64_t j = 0; j < coeff_.size(); ++j) {
      const std::uint64_t c = coeff_[j];
      if (c == 0) continue;
      const auto span = static_cast<std::uint64_t>(64 - __builtin_clzll(c));
      if (!(c & 1ULL) || span > w_ || j + span > coeff_.size()) return false;
    }
    return true;
  }

 private:
  std::uint32_t w_;
  std::vector<std::uint64_t> coeff_;
  std::vector<std::uint64_t> rhs_;
  std::uint64_t stored_ = 0;
  std::uint64_t row_xors_ = 0;
  std::uint64_t last_slot_ = 0;
};

/// m x r solution stored as r bit planes of m bits (plus one padding word each).
class BitPlanes {
 public:
  BitPlanes() = default;
  BitPlanes(std::uint64_t m, std::uint32_t r) : m_(m), r_(r), stride_((m + 63) / 64 + 1), words_(stride_ * r, 0) {}

  std::uint64_t m() const noexcept { return m_; }
  std::uint32_t r() const noexcept { return r_; }

  void set_value(std::uint64_t j, std::uint64_t v) noexcept {
    for (std::uint32_t b = 0; b < r_; ++b) {
      std::uint64_t& word = words_[b * stride_ + j / 64];
      const std::uint64_t bit = 1ULL << (j % 64);
      word = ((v >> b) & 1ULL) ? (word | bit) : (word & ~bit);
    }
  }
  std::uint64_t value(std::uint64_t j) const noexcept {
    std::uint64_t v = 0;
    for (std::uint32_t b = 0; b < r_; ++b) v |= ((words_[b * stride_ + j / 64] >> (j % 64)) & 1ULL) << b;
    return v;
  }

  /// 64 bits of plane b starting at column pos.
  std::uint64_t window(std::uint32_t b, std::uint64_t pos) const noexcept {
    const std::uint64_t* p = words_.data() + b * stride_ + pos / 64;
    const unsigned off = pos % 64;
    return off ? (p[0] >> off) | (p[1] << (64 - off)) : p[0];
  }

  /// r-bit value sum_t coeff_t * row(pos + t) over F2.
  std::uint64_t dot(std::uint64_t pos, std::uint64_t coeff) const noexcept {
    std::uint64_t v = 0;
    for (std::uint32_t b = 0; b < r_; ++b) {
      v |= static_cast<std::uint64_t>(__builtin_parityll(window(b, pos) & coeff)) << b;
    }
    return v;
  }

  /// Plane b without padding, ceil(m/64) words.
  std::span<const std::uint64_t> plane(std::uint32_t b) const noexcept {
    return {words_.data() + b * stride_, stride_ - 1};
  }
  void load_plane(std::uint32_t b, std::span<const std::uint64_t> ws) {
    std::copy(ws.begin(), ws.end(), words_.begin() + static_cast<std::ptrdiff_t>(b * stride_));
  }

 private:
  std::uint64_t m_ = 0;
  std::uint32_t r_ = 0;
  std::uint64_t stride_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Assigns columns from the highest down; free columns get 0 or seeded random bits.
inline BitPlanes back_substitute(const RibbonState& state, std::uint32_t r, FreeFill fill = FreeFill::Zero,
                                 Seed fill_seed = 0) {
  const std::uint64_t m = state.m();
  const std::uint64_t mask = low_mask(r);
  BitPlanes planes(m, r);
  SplitMix rng(fill_seed);
  std::vector<std::uint64_t> free_bits;
  if (fill == FreeFill::Random) {
    free_bits.resize(m);
    for (auto& v : free_bits) v = rng.next() & mask;
  }
  for (std::uint64_t j = m; j-- > 0;) {
    std::uint64_t v;
    if (state.occupied(j)) {
      // bit j of every plane is still 0, so the window dot covers only higher columns
      v = (state.rhs(j) ^ planes.dot(j, state.coeff(j))) & mask;
    } else {
      v = fill == FreeFill::Random ? free_bits[j] : 0;
    }
    if (v) planes.set_value(j, v);
  }
  return planes;
}

struct RibbonSolution {
  std::uint64_t m = 0;
  std::uint32_t w = 64;
  std::uint32_t r = 1;
  Seed seed = 0;
  FreeFill fill = FreeFill::Zero;
  std::uint32_t attempt = 0;
  BitPlanes planes;

  std::uint64_t query_fp(Fingerprint fp) const noexcept {
    const RibbonRow row = ribbon_row(rekey(fp, attempt), w, m);
    return planes.dot(row.start, row.coeff);
  }
  template <HashableKey Key>
  std::uint64_t query(const Key& key) const noexcept {
    return query_fp(fingerprint(key, seed));
  }
};

struct RibbonConfig {
  std::uint64_t m = 0;
  std::uint32_t w = 64;
  std::uint32_t r = 1;
};

struct RibbonBuild {
  RibbonSolution solution;
  std::uint64_t row_xors = 0;  // in the successful attempt
  std::uint32_t attempts = 1;
};

/// Inserts all rows (sorted by start) and back-substitutes, re-keying up to
/// `max_attempts - 1` times when a row turns out inconsistent.
inline std::optional<RibbonBuild> build_ribbon_fp(std::span<const Fingerprint> fps,
                                                  std::span<const std::uint64_t> values, const RibbonConfig& cfg,
                                                  Seed seed, FreeFill fill = FreeFill::Zero,
                                                  int max_attempts = kMaxAttempts) {
  if (fps.size() != values.size()) throw std::invalid_argument("build_ribbon: key/value count mismatch");
  const ValueSpec spec(cfg.r);
  validate_variant(RibbonBlock{cfg.w}, cfg.m);
  std::vector<RibbonRow> rows(fps.size());
  std::vector<std::uint32_t> order(fps.size());
  for (std::uint32_t attempt = 0; attempt < static_cast<std::uint32_t>(max_attempts); ++attempt) {
    for (std::size_t i = 0; i < fps.size(); ++i) rows[i] = ribbon_row(rekey(fps[i], attempt), cfg.w, cfg.m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return rows[a].start < rows[b].start; });
    RibbonState state(cfg.m, cfg.w);
    bool ok = true;
    for (auto i : order) {
      if (state.insert(rows[i].start, rows[i].coeff, values[i] & spec.mask()) == RowInsert::Infeasible) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    RibbonSolution sol{cfg.m, cfg.w, cfg.r, seed, fill, attempt, back_substitute(state, cfg.r, fill, sub_seed(seed, attempt))};
    return RibbonBuild{std::move(sol), state.row_xors(), attempt + 1};
  }
  return std::nullopt;
}

template <HashableKey Key>
std::optional<RibbonBuild> build_ribbon(std::span<const Key> keys, std::span<const std::uint64_t> values,
                                        const RibbonConfig& cfg, Seed seed, FreeFill fill = FreeFill::Zero,
                                        int max_attempts = kMaxAttempts) {
  std::vector<Fingerprint> fps(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) fps[i] = fingerprint(keys[i], seed);
  return build_ribbon_fp(fps, values, cfg, seed, fill, max_attempts);
}

/// "RIB1": m u64, w u32, r u32, seed u64, fill u8, attempt u32, then r bit
/// planes of ceil(m/64) u64 words each (bit j of plane b = bit b of column j).
inline std::string serialize(const RibbonSolution& sol) {
  ByteWriter out;
  out.magic("RIB1");
  out.u64(sol.m);
  out.u32(sol.w);
  out.u32(sol.r);
  out.u64(sol.seed);
  out.u8(sol.fill == FreeFill::Random ? 1 : 0);
  out.u32(sol.attempt);
  for (std::uint32_t b = 0; b < sol.r; ++b) out.words(sol.planes.plane(b));
  return out.str();
}

inline RibbonSolution deserialize_ribbon(std::string_view data) {
  ByteReader in(data);
  in.expect_magic("RIB1");
  RibbonSolution sol;
  sol.m = in.u64();
  sol.w = in.u32();
  sol.r = in.u32();
  if (sol.w == 0 || sol.w > 64 || sol.w > sol.m) throw FormatError("RIB1: bad block width");
  if (sol.r < 1 || sol.r > 64) throw FormatError("RIB1: r out of range");
  sol.seed = in.u64();
  sol.fill = in.u8() ? FreeFill::Random : FreeFill::Zero;
  sol.attempt = in.u32();
  sol.planes = BitPlanes(sol.m, sol.r);
  for (std::uint32_t b = 0; b < sol.r; ++b) sol.planes.load_plane(b, in.words((sol.m + 63) / 64));
  in.expect_end();
  return sol;
}

}  // namespace choicehash
