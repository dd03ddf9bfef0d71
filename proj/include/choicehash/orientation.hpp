#pragma once

// Placing keys into cells: peeling, augmenting-path matching, and a dynamic
// cuckoo table with BFS and random-walk insertion.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "choicehash/hashcore.hpp"

namespace choicehash {

inline constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

/// n keys over m cells; key x may use the cells candidates[offsets[x] .. offsets[x+1]).
/// Repeated cells within one key are allowed and count with multiplicity.
class PlacementInstance {
 public:
  PlacementInstance() = default;
  explicit PlacementInstance(std::uint64_t m) : m_(m) {}

  PlacementInstance(std::uint64_t m, const std::vector<std::vector<std::uint32_t>>& lists) : m_(m) {
    for (const auto& list : lists) add_key(list);
  }

  /// n keys with hashed candidates; key x is the counter key x under `seed`.
  static PlacementInstance hashed(std::uint64_t n, const ChoiceConfig& cfg, Seed seed) {
    cfg.validate();
    PlacementInstance inst(cfg.m);
    inst.candidates_.reserve(n * cfg.choices());
    inst.offsets_.reserve(n + 1);
    std::vector<std::uint32_t> cells;
    for (std::uint64_t x = 0; x < n; ++x) {
      positions_for(fingerprint(x, seed), cfg, cells);
      inst.candidates_.insert(inst.candidates_.end(), cells.begin(), cells.end());
      inst.offsets_.push_back(inst.candidates_.size());
    }
    return inst;
  }

  void add_key(std::span<const std::uint32_t> cells) {
    for (auto c : cells) {
      if (c >= m_) throw std::out_of_range("PlacementInstance: candidate cell out of range");
    }
    candidates_.insert(candidates_.end(), cells.begin(), cells.end());
    offsets_.push_back(candidates_.size());
  }
  void add_key(std::initializer_list<std::uint32_t> cells) {
    add_key(std::span<const std::uint32_t>(cells.begin(), cells.size()));
  }

  std::size_t n() const noexcept { return offsets_.size() - 1; }
  std::uint64_t m() const noexcept { return m_; }
  double load() const noexcept { return m_ ? static_cast<double>(n()) / static_cast<double>(m_) : 0.0; }

  std::span<const std::uint32_t> candidates(std::size_t key) const noexcept {
    return {candidates_.data() + offsets_[key], candidates_.data() + offsets_[key + 1]};
  }

  /// Instance restricted to the first `count` keys.
  PlacementInstance prefix(std::size_t count) const {
    PlacementInstance out(m_);
    out.candidates_.assign(candidates_.begin(), candidates_.begin() + static_cast<std::ptrdiff_t>(offsets_[count]));
    out.offsets_.assign(offsets_.begin(), offsets_.begin() + static_cast<std::ptrdiff_t>(count + 1));
    return out;
  }

 private:
  std::uint64_t m_ = 0;
  std::vector<std::uint32_t> candidates_;
  std::vector<std::size_t> offsets_{0};
};

/// Injective partial assignment of keys to cells.
struct Placement {
  std::vector<std::uint32_t> cell_of;  // per key, kNone if unplaced
  std::vector<std::uint32_t> key_in;   // per cell, kNone if empty

  Placement() = default;
  Placement(std::size_t n, std::uint64_t m) : cell_of(n, kNone), key_in(m, kNone) {}

  void assign(std::uint32_t key, std::uint32_t cell) {
    cell_of[key] = cell;
    key_in[cell] = key;
  }
  bool complete() const {
    return std::none_of(cell_of.begin(), cell_of.end(), [](auto c) { return c == kNone; });
  }
  std::size_t placed() const {
    return static_cast<std::size_t>(
        std::count_if(cell_of.begin(), cell_of.end(), [](auto c) { return c != kNone; }));
  }
};

/// Checks mutual consistency, injectivity and that every assigned cell is a candidate.
inline bool is_valid_placement(const PlacementInstance& inst, const Placement& p) {
  if (p.cell_of.size() != inst.n() || p.key_in.size() != inst.m()) return false;
  for (std::size_t x = 0; x < inst.n(); ++x) {
    const auto c = p.cell_of[x];
    if (c == kNone) continue;
    if (c >= inst.m() || p.key_in[c] != x) return false;
    const auto cand = inst.candidates(x);
    if (std::find(cand.begin(), cand.end(), c) == cand.end()) return false;
  }
  for (std::size_t c = 0; c < inst.m(); ++c) {
    const auto x = p.key_in[c];
    if (x != kNone && (x >= inst.n() || p.cell_of[x] != c)) return false;
  }
  return true;
}

struct PeelResult {
  Placement placed;
  std::vector<std::uint32_t> core;   // unpeeled keys, ascending
  std::vector<std::uint32_t> order;  // keys in the order they were peeled

  bool success() const noexcept { return core.empty(); }
};

/// Greedy peeling: repeatedly take the lowest cell used by exactly one remaining
/// key occurrence and give it to that key. The core is independent of the order.
inline PeelResult peel(const PlacementInstance& inst) {
  const std::size_t n = inst.n();
  const std::uint64_t m = inst.m();
  PeelResult result{Placement(n, m), {}, {}};
  std::vector<std::uint32_t> degree(m, 0);
  std::vector<std::uint32_t> key_xor(m, 0);
  for (std::size_t x = 0; x < n; ++x) {
    for (auto c : inst.candidates(x)) {
      ++degree[c];
      key_xor[c] ^= static_cast<std::uint32_t>(x);
    }
  }
  std::priority_queue<std::uint32_t, std::vector<std::uint32_t>, std::greater<>> ready;
  for (std::uint32_t c = 0; c < m; ++c) {
    if (degree[c] == 1) ready.push(c);
  }
  std::vector<char> removed(n, 0);
  result.order.reserve(n);
  while (!ready.empty()) {
    const std::uint32_t c = ready.top();
    ready.pop();
    if (degree[c] != 1) continue;
    const std::uint32_t x = key_xor[c];
    removed[x] = 1;
    result.placed.assign(x, c);
    result.order.push_back(x);
    for (auto d : inst.candidates(x)) {
      --degree[d];
      key_xor[d] ^= x;
      if (degree[d] == 1) ready.push(d);
    }
  }
  for (std::uint32_t x = 0; x < n; ++x) {
    if (!removed[x]) result.core.push_back(x);
  }
  return result;
}

namespace detail {

/// Breadth-first augmenting-path search over a key/cell bipartite graph.
class Augmenter {
 public:
  Augmenter(const PlacementInstance& inst, Placement& placement)
      : inst_(inst), p_(placement), stamp_(inst.m(), 0), from_(inst.m(), kNone) {}

  /// Tries to place the unplaced key x by shifting keys along a shortest path.
  bool augment(std::uint32_t x) {
    ++round_;
    queue_.clear();
    queue_.push_back(x);
    for (std::size_t head = 0; head < queue_.size(); ++head) {
      const std::uint32_t u = queue_[head];
      for (auto c : inst_.candidates(u)) {
        if (stamp_[c] == round_) continue;
        stamp_[c] = round_;
        from_[c] = u;
        const std::uint32_t owner = p_.key_in[c];
        if (owner == kNone) {
          flip(x, c);
          return true;
        }
        queue_.push_back(owner);
      }
    }
    return false;
  }

 private:
  void flip(std::uint32_t root, std::uint32_t cell) {
    for (;;) {
      const std::uint32_t key = from_[cell];
      const std::uint32_t prev = p_.cell_of[key];
      p_.assign(key, cell);
      if (key == root) return;
      cell = prev;
    }
  }

  const PlacementInstance& inst_;
  Placement& p_;
  std::vector<std::uint32_t> stamp_;
  std::vector<std::uint32_t> from_;
  std::vector<std::uint32_t> queue_;
  std::uint32_t round_ = 0;
};

}  // namespace detail

/// Complete placement if one exists, else nullopt.
///
/// Peeled keys are set aside first (re-inserting them in reverse peel order
/// always succeeds), then each core key is placed by a BFS augmenting path.
/// One failed search proves infeasibility.
inline std::optional<Placement> max_matching(const PlacementInstance& inst) {
  const std::size_t n = inst.n();
  if (n > inst.m()) return std::nullopt;
  PeelResult peeled = peel(inst);
  Placement p(n, inst.m());
  detail::Augmenter augmenter(inst, p);
  for (auto x : peeled.core) {
    if (!augmenter.augment(x)) return std::nullopt;
  }
  for (auto it = peeled.order.rbegin(); it != peeled.order.rend(); ++it) {
    p.assign(*it, peeled.placed.cell_of[*it]);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Dynamic cuckoo table

/// Candidate slots from the seeded hash of the key.
template <class Key>
struct HashedCandidates {
  ChoiceConfig cfg;

  void operator()(const Key& key, Seed seed, std::vector<std::uint32_t>& out) const {
    positions_for(fingerprint(key, seed), cfg, out);
  }
};

enum class InsertStatus { Inserted, AlreadyPresent, NoAugmentingPath, StepLimitExceeded };

struct InsertOutcome {
  InsertStatus status;
  std::size_t steps = 0;  // BFS: keys evicted; RW: placements made

  bool ok() const noexcept { return status == InsertStatus::Inserted; }
};

inline std::size_t default_max_steps(std::uint64_t m) {
  return 100 + 32 * static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(m) + 1.0)));
}

/// Cuckoo hash set over m slots. Single writer; readers only while no writer runs.
template <class Key, class CandidateFn = HashedCandidates<Key>>
class CuckooTable {
 public:
  CuckooTable(const ChoiceConfig& cfg, Seed seed)
    requires std::is_same_v<CandidateFn, HashedCandidates<Key>>
      : CuckooTable(cfg.m, seed, HashedCandidates<Key>{cfg}) {
    cfg.validate();
  }

  CuckooTable(std::uint64_t m, Seed seed, CandidateFn candidates)
      : seed_(seed), candidates_(std::move(candidates)), slots_(m), rng_(sub_seed(seed, 0x5257)),
        stamp_(m, 0), parent_(m, kNone) {}

  std::uint64_t capacity() const noexcept { return slots_.size(); }
  std::size_t size() const noexcept { return count_; }
  Seed seed() const noexcept { return seed_; }
  const std::vector<std::optional<Key>>& slots() const noexcept { return slots_; }

  bool contains(const Key& key) const { return find_slot(key) != kNone; }

  bool erase(const Key& key) {
    const std::uint32_t s = find_slot(key);
    if (s == kNone) return false;
    slots_[s].reset();
    --count_;
    return true;
  }

  /// Shortest eviction chain to an empty slot.
  InsertOutcome insert_bfs(const Key& key) {
    candidates_(key, seed_, scratch_);
    if (contains_in(key, scratch_)) return {InsertStatus::AlreadyPresent, 0};
    ++round_;
    bfs_.clear();
    std::vector<std::uint32_t> cells = scratch_;
    std::sort(cells.begin(), cells.end());
    for (auto c : cells) {
      if (stamp_[c] == round_) continue;
      stamp_[c] = round_;
      parent_[c] = kNone;
      bfs_.push_back(c);
    }
    for (std::size_t head = 0; head < bfs_.size(); ++head) {
      const std::uint32_t s = bfs_[head];
      if (!slots_[s]) return apply_chain(key, s);
      candidates_(*slots_[s], seed_, cells);
      std::sort(cells.begin(), cells.end());
      for (auto c : cells) {
        if (stamp_[c] == round_) continue;
        stamp_[c] = round_;
        parent_[c] = s;
        bfs_.push_back(c);
      }
    }
    return {InsertStatus::NoAugmentingPath, 0};
  }

  /// Random-walk insertion; on failure the table is restored to its prior state.
  InsertOutcome insert_rw(const Key& key, std::size_t max_steps) {
    candidates_(key, seed_, scratch_);
    if (contains_in(key, scratch_)) return {InsertStatus::AlreadyPresent, 0};
    std::vector<std::pair<std::uint32_t, Key>> undo;
    Key current = key;
    std::uint32_t came_from = kNone;
    for (std::size_t step = 1; step <= max_steps; ++step) {
      if (step > 1) candidates_(current, seed_, scratch_);
      for (auto c : scratch_) {
        if (!slots_[c]) {
          slots_[c] = std::move(current);
          ++count_;
          return {InsertStatus::Inserted, step};
        }
      }
      std::uint32_t victim = scratch_[rng_.below(scratch_.size())];
      if (victim == came_from && scratch_.size() > 1) {
        // skip the slot we were just evicted from
        const auto others = static_cast<std::uint64_t>(
            std::count_if(scratch_.begin(), scratch_.end(), [&](auto c) { return c != came_from; }));
        if (others > 0) {
          std::uint64_t pick = rng_.below(others);
          for (auto c : scratch_) {
            if (c != came_from && pick-- == 0) {
              victim = c;
              break;
            }
          }
        }
      }
      undo.emplace_back(victim, *slots_[victim]);
      std::swap(current, *slots_[victim]);
      came_from = victim;
    }
    for (auto it = undo.rbegin(); it != undo.rend(); ++it) slots_[it->first] = std::move(it->second);
    return {InsertStatus::StepLimitExceeded, max_steps};
  }

  InsertOutcome insert_rw(const Key& key) { return insert_rw(key, default_max_steps(capacity())); }

  /// Every stored key sits in one of its candidate slots and count matches occupancy.
  bool check_invariants() const {
    std::size_t occupied = 0;
    std::vector<std::uint32_t> cells;
    for (std::uint32_t s = 0; s < slots_.size(); ++s) {
      if (!slots_[s]) continue;
      ++occupied;
      candidates_(*slots_[s], seed_, cells);
      if (std::find(cells.begin(), cells.end(), s) == cells.end()) return false;
    }
    return occupied == count_;
  }

 private:
  std::uint32_t find_slot(const Key& key) const {
    std::vector<std::uint32_t> cells;
    candidates_(key, seed_, cells);
    for (auto c : cells) {
      if (slots_[c] && *slots_[c] == key) return c;
    }
    return kNone;
  }

  bool contains_in(const Key& key, const std::vector<std::uint32_t>& cells) const {
    return std::any_of(cells.begin(), cells.end(), [&](auto c) { return slots_[c] && *slots_[c] == key; });
  }

  InsertOutcome apply_chain(const Key& key, std::uint32_t empty) {
    std::size_t moved = 0;
    std::uint32_t s = empty;
    while (parent_[s] != kNone) {
      slots_[s] = std::move(slots_[parent_[s]]);
      s = parent_[s];
      ++moved;
    }
    slots_[s] = key;
    ++count_;
    return {InsertStatus::Inserted, moved};
  }

  Seed seed_;
  CandidateFn candidates_;
  std::vector<std::optional<Key>> slots_;
  std::size_t count_ = 0;
  SplitMix rng_;
  std::vector<std::uint32_t> stamp_;
  std::vector<std::uint32_t> parent_;
  std::vector<std::uint32_t> bfs_;
  std::vector<std::uint32_t> scratch_;
  std::uint32_t round_ = 0;
};

}  // namespace choicehash
