// choicehash: experiment runner and retrieval structure tool.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "choicehash/choicehash.hpp"

using namespace choicehash;

namespace {

constexpr int kOk = 0;
constexpr int kVerifyFailed = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Seed parse_seed(const std::string& text) {
  std::size_t used = 0;
  Seed s = 0;
  try {
    s = std::stoull(text, &used, 0);
  } catch (const std::exception&) {
    throw UsageError("bad --seed '" + text + "'");
  }
  if (used != text.size()) throw UsageError("bad --seed '" + text + "'");
  return s;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw UsageError("cannot open '" + path + "' for writing");
    }
  }
  std::ostream& os() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

// ---------------------------------------------------------------------------
// Corpora

struct Corpus {
  std::vector<std::string> keys;
  std::vector<std::uint64_t> values;
};

std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read '" + path + "'");
  return read_lines(in);
}

Corpus load_corpus(const std::string& keys_path, const std::string& values_path, std::uint64_t n, std::uint32_t r,
                   Seed seed) {
  Corpus c;
  if (keys_path.empty()) {
    c.keys.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      c.keys.push_back(counter_key(i));
      c.values.push_back(corpus_value(i, seed, r));
    }
    return c;
  }
  c.keys = read_lines(keys_path);
  if (values_path.empty()) {
    for (std::size_t i = 0; i < c.keys.size(); ++i) c.values.push_back(mix64(fingerprint(c.keys[i], seed)) & low_mask(r));
  } else {
    const auto lines = read_lines(values_path);
    if (lines.size() != c.keys.size()) throw UsageError("values file is not line-aligned with keys file");
    for (const auto& l : lines) {
      try {
        std::size_t used = 0;
        c.values.push_back(std::stoull(l, &used, 16) & low_mask(r));
        if (used != l.size()) throw std::invalid_argument(l);
      } catch (const std::exception&) {
        throw UsageError("bad hex value '" + l + "'");
      }
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Retrieval structures

enum class Kind { KSet, TwoBlock, Ribbon, Burr };

Kind parse_kind(const std::string& s) {
  if (s == "kset") return Kind::KSet;
  if (s == "twoblock") return Kind::TwoBlock;
  if (s == "ribbon") return Kind::Ribbon;
  if (s == "burr") return Kind::Burr;
  throw UsageError("unknown structure '" + s + "'");
}

struct BuildOptions {
  Kind kind = Kind::Burr;
  std::uint32_t r = 8;
  std::uint32_t k = 3;
  std::uint32_t w = 0;  // 0: default for the structure
  double alpha = 0.0;   // 0: default for the structure
  std::uint64_t shard = 1024;
  Seed seed = kDefaultSeed;
};

struct Built {
  std::string bytes;
  std::string description;
};

// Every structure file starts with a 4-byte magic; the query side dispatches on it.
class AnyStructure {
 public:
  explicit AnyStructure(std::string bytes) : bytes_(std::move(bytes)) {
    const std::string magic = bytes_.substr(0, 4);
    if (magic == "F2RS") {
      sol_ = deserialize_solution(bytes_);
    } else if (magic == "F2SH") {
      sharded_ = deserialize_sharded(bytes_);
    } else if (magic == "RIB1") {
      ribbon_ = deserialize_ribbon(bytes_);
    } else if (magic == "BRR1") {
      burr_ = deserialize_burr(bytes_);
    } else {
      throw FormatError("unrecognized structure file");
    }
  }

  std::uint64_t query(std::string_view key) const {
    if (sol_) return query_dot(*sol_, key);
    if (sharded_) return sharded_->query(key);
    if (ribbon_) return ribbon_->query(key);
    return burr_->query(key);
  }

  std::uint32_t r() const {
    if (sol_) return sol_->r;
    if (sharded_) return sharded_->r;
    if (ribbon_) return ribbon_->r;
    return burr_->config().r;
  }

 private:
  std::string bytes_;
  std::optional<Solution> sol_;
  std::optional<ShardedRetrieval> sharded_;
  std::optional<RibbonSolution> ribbon_;
  std::optional<BumpedRibbon> burr_;
};

std::optional<Built> build_structure(const Corpus& c, const BuildOptions& o) {
  const ValueSpec spec(o.r);
  std::vector<std::string_view> views(c.keys.begin(), c.keys.end());
  const std::uint64_t n = c.keys.size();
  switch (o.kind) {
    case Kind::KSet:
    case Kind::TwoBlock: {
      ShardOptions opt;
      opt.kind = o.kind == Kind::KSet ? PatternKind::KSet : PatternKind::TwoBlockSubset;
      opt.k = o.k;
      opt.alpha = o.alpha > 0 ? o.alpha : kDefaultKSetLoad;
      opt.target_size = o.shard;
      auto sr = build_sharded<std::string_view>(views, c.values, spec, o.seed, opt);
      if (!sr) return std::nullopt;
      return Built{serialize(*sr), std::to_string(sr->shards.size()) + " shards, " +
                                       std::to_string(sr->total_columns()) + " columns"};
    }
    case Kind::Ribbon: {
      const double alpha = o.alpha > 0 ? o.alpha : 0.9;
      if (!(alpha < 1.0)) throw UsageError("ribbon needs --alpha below 1");
      const std::uint32_t w = o.w ? o.w : choose_w(n, alpha);
      const RibbonConfig cfg{ribbon_columns(n, alpha, w), w, o.r};
      auto b = build_ribbon<std::string_view>(views, c.values, cfg, o.seed);
      if (!b) return std::nullopt;
      return Built{serialize(b->solution), "m=" + std::to_string(cfg.m) + " w=" + std::to_string(w) +
                                               " attempts=" + std::to_string(b->attempts)};
    }
    case Kind::Burr: {
      BurrConfig cfg = BurrConfig::defaults(o.w ? o.w : 64, o.r);
      if (o.alpha > 0) cfg.alpha0 = o.alpha;
      cfg.validate();
      const auto bs = BumpedRibbon::build<std::string_view>(views, c.values, cfg, o.seed);
      const auto rep = overhead_report(bs);
      return Built{serialize(bs), std::to_string(bs.layers().size()) + " layers, fallback " +
                                      std::to_string(bs.fallback().size()) + ", overhead " +
                                      fmt("%.4f", rep.overhead())};
    }
  }
  return std::nullopt;
}

std::uint64_t count_wrong(const AnyStructure& s, const Corpus& c) {
  std::uint64_t wrong = 0;
  for (std::size_t i = 0; i < c.keys.size(); ++i) wrong += s.query(c.keys[i]) != c.values[i];
  return wrong;
}

void add_build_options(CLI::App* sub, BuildOptions& o, std::string& structure, std::uint64_t& n,
                       std::string& keys, std::string& values) {
  sub->add_option("--structure", structure, "kset | twoblock | ribbon | burr")->capture_default_str();
  sub->add_option("--n", n, "generated corpus size")->capture_default_str();
  sub->add_option("--keys", keys, "key file, one key per line");
  sub->add_option("--values", values, "hex values, line-aligned with --keys");
  sub->add_option("--r", o.r, "value bits")->capture_default_str()->check(CLI::Range(1, 64));
  sub->add_option("--k", o.k, "KSet row weight")->capture_default_str();
  sub->add_option("--w", o.w, "ribbon / BuRR block width")->check(CLI::Range(1, 64));
  sub->add_option("--alpha", o.alpha, "load (KSet shards, ribbon) or initial load (BuRR)");
  sub->add_option("--shard", o.shard, "target shard size for kset / twoblock")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hash table placement and retrieval experiments"};
  app.fallthrough();
  app.require_subcommand(1);
  std::string seed_text = "0xC0FFEE";
  app.add_option("--seed", seed_text, "master seed (decimal or 0x hex)")->capture_default_str();
  std::uint32_t trials = 200;
  app.add_option("--trials", trials, "trials per point")->capture_default_str();
  std::string out_path;
  app.add_option("--out", out_path, "output file (default stdout)");
  bool csv = false;
  app.add_flag("--csv", csv, "emit CSV");

  // threshold / peel-threshold
  std::uint32_t k = 3, ell = 1;
  std::uint64_t m = 100000;
  std::string mode = "independent";
  double epsilon = 0.05, tol = 0.0025;
  auto* threshold = app.add_subcommand("threshold", "estimate the 50% success load for cuckoo placement");
  auto* peel_threshold = app.add_subcommand("peel-threshold", "estimate the 50% success load for peeling");
  for (auto* sub : {threshold, peel_threshold}) {
    sub->add_option("--k", k, "choices per key")->capture_default_str();
    sub->add_option("--m", m, "cells")->capture_default_str();
    sub->add_option("--mode", mode, "independent | double | unaligned | coupled")->capture_default_str();
    sub->add_option("--epsilon", epsilon, "coupling window fraction")->capture_default_str();
    sub->add_option("--tol", tol, "bisection half-width")->capture_default_str();
  }
  threshold->add_option("--ell", ell, "bucket size")->capture_default_str();

  // curve
  std::string structure = "cuckoo";
  double c_from = 0.80, c_to = 0.96, c_step = 0.01;
  auto* curve = app.add_subcommand("curve", "success fraction over a grid of loads (CSV)");
  curve->add_option("--structure", structure, "cuckoo | kset | peel")->capture_default_str();
  curve->add_option("--k", k, "choices per key")->capture_default_str();
  curve->add_option("--ell", ell, "bucket size")->capture_default_str();
  curve->add_option("--m", m, "cells")->capture_default_str();
  curve->add_option("--mode", mode, "independent | double | unaligned | coupled")->capture_default_str();
  curve->add_option("--epsilon", epsilon, "coupling window fraction")->capture_default_str();
  curve->add_option("--c-from", c_from, "first load")->capture_default_str();
  curve->add_option("--c-to", c_to, "last load (inclusive)")->capture_default_str();
  curve->add_option("--c-step", c_step, "grid step")->capture_default_str();

  // balance
  std::uint64_t n = 1000000;
  std::vector<std::uint32_t> ds{1, 2, 4};
  auto* balance = app.add_subcommand("balance", "max load with d choices");
  balance->add_option("--n", n, "balls")->capture_default_str();
  balance->add_option("--m", m, "bins (default n)");
  balance->add_option("--d", ds, "choices, repeatable")->capture_default_str();

  // variants
  auto* variants = app.add_subcommand("variants", "double hashing, unaligned windows, spatial coupling");
  variants->add_option("--m", m, "cells")->capture_default_str();
  variants->add_option("--tol", tol, "bisection half-width")->capture_default_str();

  // queue
  double alpha = 0.8;
  std::uint64_t steps = 10000000;
  std::uint32_t w_lo = 5, w_hi = 25;
  auto* queue = app.add_subcommand("queue", "queue with Poisson arrivals and unit service");
  queue->add_option("--alpha", alpha, "arrival rate")->capture_default_str();
  queue->add_option("--steps", steps, "simulated steps")->capture_default_str();
  queue->add_option("--w-lo", w_lo, "smallest w in the tail fit")->capture_default_str();
  queue->add_option("--w-hi", w_hi, "largest w in the tail fit")->capture_default_str();

  // retrieval structures
  BuildOptions bo;
  std::string kind_text = "burr", keys_path, values_path;
  std::uint64_t corpus_n = 100000;
  auto* check = app.add_subcommand("retrieval-check", "build a retrieval structure and verify every key");
  add_build_options(check, bo, kind_text, corpus_n, keys_path, values_path);
  auto* serialize_cmd = app.add_subcommand("serialize", "build a retrieval structure and write it to --out");
  add_build_options(serialize_cmd, bo, kind_text, corpus_n, keys_path, values_path);

  std::string in_path;
  bool counter = false;
  auto* query = app.add_subcommand("query", "answer keys from stdin with a structure file, hex per line");
  query->add_option("--in", in_path, "structure file")->required();
  query->add_flag("--counter", counter, "stdin lines are decimal counter keys");

  std::uint32_t w = 64, r = 8;
  std::uint32_t burr_trials = 1;
  auto* burr = app.add_subcommand("burr-overhead", "BuRR space breakdown");
  burr->add_option("--n", corpus_n, "keys")->capture_default_str();
  burr->add_option("--w", w, "block width")->capture_default_str()->check(CLI::Range(1, 64));
  burr->add_option("--r", r, "value bits")->capture_default_str()->check(CLI::Range(1, 64));
  burr->add_option("--alpha", alpha, "initial load (default 1 + ln(w)/(2w))");
  burr->add_option("--builds", burr_trials, "builds averaged")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    const Seed seed = parse_seed(seed_text);
    const TrialPlan plan{seed, trials};
    if (trials == 0) throw UsageError("--trials must be positive");
    Output out(query->parsed() || serialize_cmd->parsed() ? "" : out_path);
    std::ostream& os = out.os();

    if (threshold->parsed() || peel_threshold->parsed()) {
      const bool is_peel = peel_threshold->parsed();
      const Structure st = is_peel ? Structure::peeling(k, parse_mode(mode), epsilon)
                                   : Structure{Structure::Kind::Cuckoo, k, ell, parse_mode(mode), epsilon};
      const auto t0 = std::chrono::steady_clock::now();
      const auto est = estimate_threshold(st, m, plan, tol);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (csv) {
        write_csv(os, est.probes);
      } else {
        os << st.name() << " k=" << k << " ell=" << st.ell << " mode=" << mode_name(st.mode) << " m=" << m
           << " trials=" << trials << "\n";
        os << "estimate " << fmt("%.4f", est.estimate) << " +- " << fmt("%.4f", est.half_width()) << " bracket ["
           << fmt("%.4f", est.lo) << ", " << fmt("%.4f", est.hi) << "]\n";
        std::cerr << "runtime " << fmt("%.1f", secs) << " s\n";
      }
      return kOk;
    }

    if (curve->parsed()) {
      Structure st;
      if (structure == "cuckoo") {
        st = Structure{Structure::Kind::Cuckoo, k, ell, parse_mode(mode), epsilon};
      } else if (structure == "kset") {
        st = Structure::kset_system(k);
      } else if (structure == "peel") {
        st = Structure::peeling(k, parse_mode(mode), epsilon);
      } else {
        throw UsageError("unknown structure '" + structure + "'");
      }
      if (!(c_step > 0) || c_to < c_from) throw UsageError("bad c grid");
      std::vector<double> cs;
      const auto count = static_cast<std::uint64_t>(std::floor((c_to - c_from) / c_step + 1e-9)) + 1;
      for (std::uint64_t i = 0; i < count; ++i) cs.push_back(c_from + static_cast<double>(i) * c_step);
      write_csv(os, success_curve(st, m, cs, plan));
      return kOk;
    }

    if (balance->parsed()) {
      const std::uint64_t bins = balance->count("--m") ? m : n;
      if (csv) os << "experiment,n,m,d,trials,mean_max_load,max_max_load,seed\n";
      for (auto d : ds) {
        const auto st = balls_bins_maxload(n, bins, d, plan);
        if (csv) {
          os << "balance," << n << ',' << bins << ',' << d << ',' << trials << ',' << fmt("%.6f", st.mean) << ','
             << st.max << ',' << seed << '\n';
        } else {
          os << "d=" << d << " mean max load " << fmt("%.3f", st.mean) << " (max " << st.max << ")\n";
        }
      }
      return kOk;
    }

    if (variants->parsed()) {
      const auto rep = variant_comparisons(m, plan, tol);
      if (csv) {
        std::vector<CurvePoint> pts{rep.coupled_peel};
        write_csv(os, pts);
        return kOk;
      }
      os << "independent k=3       " << fmt("%.4f", rep.independent3.estimate) << "\n";
      os << "double hashing k=3    " << fmt("%.4f", rep.double3.estimate) << (rep.double_ok() ? "  ok" : "  FAIL")
         << "\n";
      os << "unaligned k=2 ell=2   " << fmt("%.4f", rep.unaligned22.estimate)
         << (rep.unaligned_ok() ? "  ok" : "  FAIL") << "\n";
      os << "coupled peel c=0.85   " << fmt("%.3f", rep.coupled_peel.fraction)
         << (rep.coupled_ok() ? "  ok" : "  FAIL") << "\n";
      return rep.double_ok() && rep.unaligned_ok() && rep.coupled_ok() ? kOk : kVerifyFailed;
    }

    if (queue->parsed()) {
      if (w_lo > w_hi || w_hi > 64) throw UsageError("need w-lo <= w-hi <= 64");
      const auto st = md1_simulate(alpha, steps, seed);
      const auto fit = tail_fit(st, w_lo, w_hi);
      if (csv) {
        os << "w,tail\n";
        for (std::uint32_t x = w_lo; x <= w_hi; ++x) os << x << ',' << fmt("%.9g", st.tail(x)) << '\n';
      } else {
        os << "alpha " << alpha << " mean queue " << fmt("%.5f", st.mean) << " (closed form "
           << fmt("%.5f", md1_mean(alpha)) << ")\n";
        os << "log tail slope " << fmt("%.4f", fit.slope) << " r2 " << fmt("%.5f", fit.r2) << "\n";
      }
      return kOk;
    }

    if (check->parsed() || serialize_cmd->parsed()) {
      bo.kind = parse_kind(kind_text);
      bo.seed = seed;
      if (serialize_cmd->parsed() && out_path.empty()) throw UsageError("serialize needs --out");
      const Corpus c = load_corpus(keys_path, values_path, corpus_n, bo.r, seed);
      const auto built = build_structure(c, bo);
      if (!built) {
        std::cerr << "construction failed (seed " << seed << ")\n";
        return kVerifyFailed;
      }
      const AnyStructure s(built->bytes);
      const auto wrong = count_wrong(s, c);
      if (serialize_cmd->parsed()) {
        std::ofstream f(out_path, std::ios::binary);
        if (!f) throw UsageError("cannot open '" + out_path + "' for writing");
        f << built->bytes;
      }
      std::cout << kind_text << ": " << c.keys.size() << " keys, " << built->description << ", "
                << built->bytes.size() << " bytes, " << wrong << " wrong\n";
      return wrong == 0 ? kOk : kVerifyFailed;
    }

    if (query->parsed()) {
      std::ifstream f(in_path, std::ios::binary);
      if (!f) throw UsageError("cannot read '" + in_path + "'");
      const AnyStructure s(std::string(std::istreambuf_iterator<char>(f), {}));
      for (const auto& line : read_lines(std::cin)) {
        std::uint64_t v;
        if (counter) {
          v = s.query(counter_key(std::stoull(line)));
        } else {
          v = s.query(line);
        }
        char buf[32];
        std::snprintf(buf, sizeof buf, "%llx", static_cast<unsigned long long>(v));
        std::cout << buf << '\n';
      }
      return kOk;
    }

    if (burr->parsed()) {
      BurrConfig cfg = BurrConfig::defaults(w, r);
      if (burr->count("--alpha")) cfg.alpha0 = alpha;
      cfg.validate();
      if (csv) os << "experiment,n,w,r,build,layers,fallback,solution_bits,metadata_bits,fallback_bits,"
                     "empty_fraction,overhead,layer0_fraction,seed\n";
      std::uint64_t wrong = 0;
      for (std::uint32_t b = 0; b < burr_trials; ++b) {
        const Seed s = sub_seed(seed, b);
        const auto sample = burr_sample(corpus_n, cfg, s);
        const auto& rep = sample.report;
        wrong += sample.wrong;
        if (csv) {
          os << "burr," << corpus_n << ',' << w << ',' << r << ',' << b << ',' << rep.layers.size() << ','
             << rep.fallback_keys << ',' << rep.solution_bits << ',' << rep.metadata_bits << ',' << rep.fallback_bits
             << ',' << fmt("%.6f", rep.empty_fraction) << ',' << fmt("%.6f", rep.overhead()) << ','
             << fmt("%.6f", sample.layer0_fraction) << ',' << s << '\n';
          continue;
        }
        os << "build " << b << ": n=" << corpus_n << " w=" << w << " r=" << r << " g=" << cfg.g
           << " alpha0=" << fmt("%.4f", cfg.alpha0) << "\n";
        for (std::size_t l = 0; l < rep.layers.size(); ++l) {
          const auto& lr = rep.layers[l];
          os << "  layer " << l << ": keys " << lr.keys_in << ", stored " << lr.stored << ", m " << lr.m
             << ", groups " << lr.groups << " (none " << lr.codes[0] << ", prefix " << lr.codes[1] << ", all "
             << lr.codes[2] << ")\n";
        }
        os << "  fallback keys " << rep.fallback_keys << "\n";
        os << "  bits/key: solution " << fmt("%.4f", rep.bits_per_key(rep.solution_bits)) << ", metadata "
           << fmt("%.5f", rep.bits_per_key(rep.metadata_bits)) << ", fallback "
           << fmt("%.4f", rep.bits_per_key(rep.fallback_bits)) << "\n";
        os << "  empty columns " << fmt("%.4f", rep.empty_fraction) << ", overhead " << fmt("%.4f", rep.overhead())
           << ", answered at layer 0 " << fmt("%.4f", sample.layer0_fraction) << "\n";
      }
      return wrong == 0 ? kOk : kVerifyFailed;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kVerifyFailed;
  }
  return kUsage;
}
