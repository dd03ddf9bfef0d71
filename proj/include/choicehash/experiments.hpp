#pragma once

// Seeded Monte Carlo harness: balanced allocation, success curves and
// threshold estimates, queue behaviour, BuRR overhead sweeps.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "choicehash/burr.hpp"
#include "choicehash/hashcore.hpp"
#include "choicehash/linsys.hpp"
#include "choicehash/orientation.hpp"

namespace choicehash {

struct TrialPlan {
  Seed master = kDefaultSeed;
  std::uint32_t trials = 200;

  Seed trial_seed(std::uint64_t i) const noexcept { return mix64(master ^ mix64(i)); }
};

namespace thresholds {

/// c_k* for k = 1..7
inline constexpr double kCuckoo[] = {0.0, 0.5, 0.91794, 0.97677, 0.99244, 0.99738, 0.99906};
/// c_{2,l}* for l = 1..6
inline constexpr double kBucket2[] = {0.5, 0.89701, 0.95915, 0.98037, 0.98955, 0.99407};
/// peeling thresholds for k = 3..7
inline constexpr double kPeel[] = {0.81847, 0.77228, 0.70178, 0.63708, 0.58178};

inline double cuckoo(std::uint32_t k) { return kCuckoo[k - 1]; }
inline double bucket2(std::uint32_t ell) { return kBucket2[ell - 1]; }
inline double peel(std::uint32_t k) { return kPeel[k - 3]; }

}  // namespace thresholds

struct Interval {
  double lo;
  double hi;
};

/// Wilson score interval, 95% by default.
inline Interval wilson(std::uint64_t successes, std::uint64_t trials, double z = 1.959963984540054) {
  if (trials == 0) return {0.0, 1.0};
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (p + z2 / (2 * n)) / denom;
  const double half = z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom;
  return {std::max(0.0, std::min(p, centre - half)), std::min(1.0, std::max(p, centre + half))};
}

// ---------------------------------------------------------------------------
// Feasibility structures

struct Structure {
  enum class Kind { Cuckoo, KSetSystem, Peel };
  Kind kind = Kind::Cuckoo;
  std::uint32_t k = 3;
  std::uint32_t ell = 1;
  Mode mode = Mode::Independent;
  double epsilon = 0.05;

  static Structure cuckoo(std::uint32_t k, std::uint32_t ell = 1, Mode mode = Mode::Independent) {
    return {Kind::Cuckoo, k, ell, mode, 0.05};
  }
  static Structure kset_system(std::uint32_t k) { return {Kind::KSetSystem, k, 1, Mode::Independent, 0.05}; }
  static Structure peeling(std::uint32_t k, Mode mode = Mode::Independent, double epsilon = 0.05) {
    return {Kind::Peel, k, 1, mode, epsilon};
  }

  const char* name() const noexcept {
    switch (kind) {
      case Kind::Cuckoo: return "cuckoo";
      case Kind::KSetSystem: return "kset-system";
      case Kind::Peel: return "peel";
    }
    return "?";
  }

  ChoiceConfig choice(std::uint64_t m) const { return {m, k, ell, mode, epsilon}; }
};

/// Whether the first n keys of the trial instance are feasible. Instances
/// for the same seed are nested in n.
inline bool feasible(const Structure& st, std::uint64_t m, std::uint64_t n, Seed seed) {
  if (n == 0) return true;
  switch (st.kind) {
    case Structure::Kind::Cuckoo:
      return max_matching(PlacementInstance::hashed(n, st.choice(m), seed)).has_value();
    case Structure::Kind::Peel:
      return peel(PlacementInstance::hashed(n, st.choice(m), seed)).success();
    case Structure::Kind::KSetSystem: {
      LinearSystem sys;
      sys.m = m;
      sys.rows.resize(n);
      SplitMix rhs(sub_seed(seed, 0x525253));
      for (std::uint64_t x = 0; x < n; ++x) {
        kset_row(fingerprint(x, seed), st.k, m, sys.rows[x].columns);
        sys.rows[x].rhs = rhs.next() & 1ULL;
      }
      return gauss_solve(sys).has_value();
    }
  }
  return false;
}

/// Per-trial feasibility with cached bounds. Since instances are nested, a
/// trial known feasible at n is feasible below n, and infeasible above a
/// known infeasible count.
class TrialOracle {
 public:
  TrialOracle(Structure st, std::uint64_t m, TrialPlan plan)
      : st_(st), m_(m), plan_(plan), ok_upto_(plan.trials, 0), fail_from_(plan.trials, UINT64_MAX) {
    if (m == 0) throw std::invalid_argument("TrialOracle: m must be positive");
    if (st.kind != Structure::Kind::KSetSystem) st.choice(m).validate();
  }

  bool success(std::uint32_t trial, std::uint64_t n) {
    if (n <= ok_upto_[trial]) return true;
    if (n >= fail_from_[trial]) return false;
    ++evaluations_;
    if (feasible(st_, m_, n, plan_.trial_seed(trial))) {
      ok_upto_[trial] = n;
      return true;
    }
    fail_from_[trial] = n;
    return false;
  }

  std::uint64_t successes(std::uint64_t n) {
    std::uint64_t s = 0;
    for (std::uint32_t t = 0; t < plan_.trials; ++t) s += success(t, n);
    return s;
  }

  const Structure& structure() const noexcept { return st_; }
  std::uint64_t m() const noexcept { return m_; }
  const TrialPlan& plan() const noexcept { return plan_; }
  std::uint64_t evaluations() const noexcept { return evaluations_; }

 private:
  Structure st_;
  std::uint64_t m_;
  TrialPlan plan_;
  std::vector<std::uint64_t> ok_upto_;
  std::vector<std::uint64_t> fail_from_;
  std::uint64_t evaluations_ = 0;
};

inline std::uint64_t keys_at(double c, std::uint64_t m) {
  return static_cast<std::uint64_t>(std::floor(c * static_cast<double>(m)));
}

struct CurvePoint {
  std::string experiment;
  std::string structure;
  std::uint32_t k = 0;
  std::uint32_t ell = 0;
  Mode mode = Mode::Independent;
  std::uint64_t m = 0;
  double c = 0.0;
  std::uint64_t trials = 0;
  std::uint64_t successes = 0;
  double fraction = 0.0;
  Interval ci{0.0, 1.0};
  Seed seed = 0;
  double runtime_s = 0.0;  // not part of the CSV
};

inline constexpr const char* kCsvHeader =
    "experiment,structure,k,ell,mode,m,c,trials,successes,fraction,wilson_lo,wilson_hi,seed";

inline std::string csv_row(const CurvePoint& p) {
  char buf[320];
  std::snprintf(buf, sizeof buf, "%s,%s,%u,%u,%s,%llu,%.6f,%llu,%llu,%.6f,%.6f,%.6f,%llu", p.experiment.c_str(),
                p.structure.c_str(), p.k, p.ell, mode_name(p.mode), static_cast<unsigned long long>(p.m), p.c,
                static_cast<unsigned long long>(p.trials), static_cast<unsigned long long>(p.successes), p.fraction,
                p.ci.lo, p.ci.hi, static_cast<unsigned long long>(p.seed));
  return buf;
}

inline void write_csv(std::ostream& os, std::span<const CurvePoint> points) {
  os << kCsvHeader << '\n';
  for (const auto& p : points) os << csv_row(p) << '\n';
}

inline CurvePoint make_point(const std::string& experiment, const TrialOracle& oracle, double c,
                             std::uint64_t successes) {
  const auto& st = oracle.structure();
  CurvePoint p;
  p.experiment = experiment;
  p.structure = st.name();
  p.k = st.k;
  p.ell = st.ell;
  p.mode = st.mode;
  p.m = oracle.m();
  p.c = c;
  p.trials = oracle.plan().trials;
  p.successes = successes;
  p.fraction = p.trials ? static_cast<double>(successes) / static_cast<double>(p.trials) : 0.0;
  p.ci = wilson(successes, p.trials);
  p.seed = oracle.plan().master;
  return p;
}

/// Success fraction at each load c, n = floor(c m).
inline std::vector<CurvePoint> success_curve(const Structure& st, std::uint64_t m, std::span<const double> cs,
                                             const TrialPlan& plan) {
  TrialOracle oracle(st, m, plan);
  std::vector<CurvePoint> out;
  for (double c : cs) {
    if (!(c >= 0.0 && c < 1.0 + 1e-12)) throw std::invalid_argument("success_curve: c must lie in [0, 1]");
    const auto t0 = std::chrono::steady_clock::now();
    CurvePoint p = make_point("curve", oracle, c, oracle.successes(keys_at(c, m)));
    p.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.push_back(p);
  }
  return out;
}

struct ThresholdEstimate {
  double estimate = 0.0;
  double lo = 0.0;  // success fraction >= target at lo
  double hi = 1.0;  // success fraction < target at hi
  double target = 0.5;
  std::uint32_t iterations = 0;
  std::vector<CurvePoint> probes;

  double half_width() const noexcept { return (hi - lo) / 2; }
};

/// Bisection on c for the load where the success fraction falls below
/// `target`, over the bracket [lo, hi]. Stops once the half-width is at most
/// `tol` or after `max_iterations` probes.
inline ThresholdEstimate estimate_crossing(TrialOracle& oracle, double tol, double target = 0.5, double lo = 0.0,
                                           double hi = 1.0, std::uint32_t max_iterations = 40) {
  if (!(tol > 0.0)) throw std::invalid_argument("estimate_threshold: tol must be positive");
  if (!(target > 0.0 && target <= 1.0)) throw std::invalid_argument("estimate_threshold: target must lie in (0, 1]");
  ThresholdEstimate est;
  est.target = target;
  const double need = target * oracle.plan().trials;
  while ((hi - lo) / 2 > tol && est.iterations < max_iterations) {
    const double mid = (lo + hi) / 2;
    const auto s = oracle.successes(keys_at(mid, oracle.m()));
    est.probes.push_back(make_point("threshold", oracle, mid, s));
    if (static_cast<double>(s) >= need) {
      lo = mid;
    } else {
      hi = mid;
    }
    ++est.iterations;
  }
  est.lo = lo;
  est.hi = hi;
  est.estimate = (lo + hi) / 2;
  return est;
}

inline ThresholdEstimate estimate_threshold(const Structure& st, std::uint64_t m, const TrialPlan& plan, double tol,
                                            double target = 0.5) {
  TrialOracle oracle(st, m, plan);
  return estimate_crossing(oracle, tol, target);
}

/// c-width between the 90% and 10% success crossings.
struct TransitionWidth {
  ThresholdEstimate at90;
  ThresholdEstimate at10;
  double width() const noexcept { return at10.estimate - at90.estimate; }
};

inline TransitionWidth transition_width(const Structure& st, std::uint64_t m, const TrialPlan& plan, double tol) {
  TrialOracle oracle(st, m, plan);
  TransitionWidth tw;
  tw.at90 = estimate_crossing(oracle, tol, 0.9);
  tw.at10 = estimate_crossing(oracle, tol, 0.1);
  return tw;
}

// ---------------------------------------------------------------------------
// Balanced allocation

struct MaxLoadStats {
  std::uint64_t n = 0, m = 0;
  std::uint32_t d = 0;
  std::vector<std::uint32_t> per_trial;
  double mean = 0.0;
  std::uint32_t max = 0;
};

/// Sequential placement of n balls into m bins, each into the least loaded of
/// d sampled bins (lowest index on ties).
inline MaxLoadStats balls_bins_maxload(std::uint64_t n, std::uint64_t m, std::uint32_t d, const TrialPlan& plan) {
  if (d < 1) throw std::invalid_argument("balls_bins_maxload: d must be >= 1");
  if (m < 1) throw std::invalid_argument("balls_bins_maxload: m must be >= 1");
  MaxLoadStats st{n, m, d, {}, 0.0, 0};
  std::vector<std::uint32_t> load(m);
  for (std::uint32_t t = 0; t < plan.trials; ++t) {
    std::fill(load.begin(), load.end(), 0);
    SplitMix rng(plan.trial_seed(t));
    std::uint32_t top = 0;
    for (std::uint64_t b = 0; b < n; ++b) {
      std::uint64_t best = rng.below(m);
      for (std::uint32_t j = 1; j < d; ++j) {
        const std::uint64_t c = rng.below(m);
        if (load[c] < load[best] || (load[c] == load[best] && c < best)) best = c;
      }
      top = std::max(top, ++load[best]);
    }
    st.per_trial.push_back(top);
    st.max = std::max(st.max, top);
  }
  double sum = 0;
  for (auto v : st.per_trial) sum += v;
  st.mean = st.per_trial.empty() ? 0.0 : sum / static_cast<double>(st.per_trial.size());
  return st;
}

// ---------------------------------------------------------------------------
// Queues and bounded linear probing

/// q_i = max(0, q_{i-1} + x_i - 1), q_{-1} = 0.
inline std::vector<std::uint64_t> queue_trace(std::span<const std::uint64_t> xs) {
  std::vector<std::uint64_t> q(xs.size());
  std::uint64_t cur = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    cur = cur + xs[i] > 0 ? cur + xs[i] - 1 : 0;
    q[i] = cur;
  }
  return q;
}

/// Arrival counts per position for sorted starts.
inline std::vector<std::uint64_t> arrivals(std::span<const std::uint64_t> starts, std::uint64_t m) {
  std::vector<std::uint64_t> xs(m, 0);
  for (auto s : starts) ++xs.at(s);
  return xs;
}

struct ProbeResult {
  bool success = false;
  std::vector<std::uint64_t> cell;  // per key, when successful
  std::uint64_t a = 0, b = 0;       // failure witness range [a, b]
  std::uint64_t witness_keys = 0;   // keys whose whole block lies in [a, b]
};

/// Places each key in the leftmost free cell of [start, start + w).
inline ProbeResult greedy_bounded_probe(std::span<const std::uint64_t> starts, std::uint32_t w, std::uint64_t m) {
  if (w < 1) throw std::invalid_argument("greedy_bounded_probe: w must be >= 1");
  for (std::size_t i = 0; i < starts.size(); ++i) {
    if (starts[i] + w > m || (i > 0 && starts[i] < starts[i - 1])) {
      throw std::invalid_argument("greedy_bounded_probe: starts must be ascending and at most m - w");
    }
  }
  ProbeResult res;
  std::uint64_t next = 0;
  std::uint64_t run_start = 0;  // first cell of the occupied run ending at next - 1
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const std::uint64_t s = starts[i];
    if (s > next || i == 0) {
      next = s;
      run_start = s;
    }
    if (next >= s + w) {
      res.a = run_start;
      res.b = s + w - 1;
      for (std::size_t j = 0; j <= i; ++j) {
        if (starts[j] >= res.a && starts[j] + w - 1 <= res.b) ++res.witness_keys;
      }
      res.cell.clear();
      return res;
    }
    res.cell.push_back(next++);
  }
  res.success = true;
  return res;
}

/// Poisson(lambda) sample by inversion.
inline std::uint64_t poisson(SplitMix& rng, double lambda) {
  const double u = rng.uniform();
  double p = std::exp(-lambda);
  double cdf = p;
  std::uint64_t k = 0;
  while (u > cdf && p > 0.0) {
    ++k;
    p *= lambda / static_cast<double>(k);
    cdf += p;
  }
  return k;
}

struct QueueStats {
  double alpha = 0.0;
  std::uint64_t steps = 0;
  double mean = 0.0;
  std::vector<std::uint64_t> at_least;  // at_least[w] = steps with q >= w
  double tail(std::uint64_t w) const noexcept {
    return w < at_least.size() && steps ? static_cast<double>(at_least[w]) / static_cast<double>(steps) : 0.0;
  }
};

/// Iterates the queue recurrence with Poisson(alpha) arrivals and reports time
/// averages over `steps` steps after `burn_in` steps.
inline QueueStats md1_simulate(double alpha, std::uint64_t steps, Seed seed, std::uint64_t burn_in = 10000,
                               std::uint32_t max_w = 64) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("md1_simulate: alpha must lie in (0, 1)");
  SplitMix rng(seed);
  QueueStats st;
  st.alpha = alpha;
  st.steps = steps;
  std::vector<std::uint64_t> hist(max_w + 1, 0);
  std::uint64_t q = 0;
  long double sum = 0;
  for (std::uint64_t i = 0; i < burn_in + steps; ++i) {
    const std::uint64_t x = poisson(rng, alpha);
    q = q + x > 0 ? q + x - 1 : 0;
    if (i < burn_in) continue;
    sum += q;
    ++hist[std::min<std::uint64_t>(q, max_w)];
  }
  st.mean = steps ? static_cast<double>(sum / steps) : 0.0;
  st.at_least.assign(max_w + 1, 0);
  std::uint64_t acc = 0;
  for (std::uint64_t w = max_w + 1; w-- > 0;) {
    acc += hist[w];
    st.at_least[w] = acc;
  }
  return st;
}

/// Pollaczek-Khinchine mean number waiting in an M/D/1 queue.
inline double md1_mean(double alpha) { return alpha * alpha / (2 * (1 - alpha)); }

struct LinearFit {
  double slope = 0.0, intercept = 0.0, r2 = 0.0;
};

inline LinearFit least_squares(std::span<const double> xs, std::span<const double> ys) {
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
    syy += ys[i] * ys[i];
  }
  LinearFit f;
  const double vx = sxx - sx * sx / n, vy = syy - sy * sy / n, cxy = sxy - sx * sy / n;
  f.slope = cxy / vx;
  f.intercept = (sy - f.slope * sx) / n;
  f.r2 = vy > 0 ? cxy * cxy / (vx * vy) : 1.0;
  return f;
}

/// Fit of log Pr[q >= w] against w over [w_lo, w_hi].
inline LinearFit tail_fit(const QueueStats& st, std::uint32_t w_lo, std::uint32_t w_hi) {
  std::vector<double> xs, ys;
  for (std::uint32_t w = w_lo; w <= w_hi; ++w) {
    const double p = st.tail(w);
    if (p <= 0) continue;
    xs.push_back(w);
    ys.push_back(std::log(p));
  }
  return least_squares(xs, ys);
}

// ---------------------------------------------------------------------------
// Variants

struct VariantReport {
  ThresholdEstimate independent3;
  ThresholdEstimate double3;
  ThresholdEstimate unaligned22;
  CurvePoint coupled_peel;

  bool double_ok() const noexcept { return std::abs(double3.estimate - independent3.estimate) <= 0.015; }
  bool unaligned_ok() const noexcept { return unaligned22.estimate > 0.91; }
  bool coupled_ok() const noexcept { return coupled_peel.fraction >= 0.9; }
};

inline VariantReport variant_comparisons(std::uint64_t m, const TrialPlan& plan, double tol) {
  VariantReport rep;
  rep.independent3 = estimate_threshold(Structure::cuckoo(3), m, plan, tol);
  rep.double3 = estimate_threshold(Structure::cuckoo(3, 1, Mode::DoubleHashing), m, plan, tol);
  rep.unaligned22 = estimate_threshold(Structure::cuckoo(2, 2, Mode::UnalignedWindow), m, plan, tol);
  const double c = 0.85;
  rep.coupled_peel =
      success_curve(Structure::peeling(3, Mode::SpatiallyCoupled, 0.05), m, std::span<const double>(&c, 1), plan)
          .front();
  rep.coupled_peel.experiment = "variants";
  return rep;
}

// ---------------------------------------------------------------------------
// BuRR overhead

/// Corpus value for counter key x: low r bits of mix64(x ^ seed).
inline std::uint64_t corpus_value(std::uint64_t x, Seed seed, std::uint32_t r) {
  return mix64(x ^ seed) & low_mask(r);
}

struct BurrSample {
  OverheadReport report;
  double layer0_fraction = 0.0;
  std::uint64_t wrong = 0;
};

/// Builds a BuRR over counter keys 0..n-1 and checks every key.
inline BurrSample burr_sample(std::uint64_t n, const BurrConfig& cfg, Seed seed) {
  std::vector<std::uint64_t> keys(n), values(n);
  for (std::uint64_t x = 0; x < n; ++x) {
    keys[x] = x;
    values[x] = corpus_value(x, seed, cfg.r);
  }
  const auto bs = BumpedRibbon::build<std::uint64_t>(keys, values, cfg, seed);
  BurrSample out;
  out.report = overhead_report(bs);
  std::uint64_t first = 0;
  for (std::uint64_t x = 0; x < n; ++x) {
    const auto fp = fingerprint(x, bs.master_seed());
    if (bs.query_fp(fp) != values[x]) ++out.wrong;
    if (bs.answering_layer(fp) == 0) ++first;
  }
  out.layer0_fraction = n ? static_cast<double>(first) / static_cast<double>(n) : 1.0;
  return out;
}

}  // namespace choicehash
