#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <vector>

#include "gapsroute/routers.hpp"
#include "gapsroute/simulator.hpp"
#include "gapsroute/topology.hpp"

namespace gapsroute {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Algorithm { kGaps, kBest, kBestload, kQRouting };
enum class InitMode { kEpsilonGreedy, kRandom };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kGaps: return "gaps";
    case Algorithm::kBest: return "best";
    case Algorithm::kBestload: return "bestload";
    case Algorithm::kQRouting: return "qrouting";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view s) {
  if (s == "gaps") return Algorithm::kGaps;
  if (s == "best") return Algorithm::kBest;
  if (s == "bestload") return Algorithm::kBestload;
  if (s == "qrouting") return Algorithm::kQRouting;
  throw ConfigError("unknown algorithm '" + std::string(s) + "'");
}

inline InitMode parse_init_mode(std::string_view s) {
  if (s == "epsilon-greedy") return InitMode::kEpsilonGreedy;
  if (s == "random") return InitMode::kRandom;
  throw ConfigError("unknown init mode '" + std::string(s) + "'");
}

inline Credit parse_credit(std::string_view s) {
  if (s == "terminal") return Credit::kTerminal;
  if (s == "reward-to-go") return Credit::kRewardToGo;
  throw ConfigError("unknown credit mode '" + std::string(s) + "'");
}

struct ExperimentConfig {
  std::string topology = "original";  // builtin name or file path
  Algorithm algorithm = Algorithm::kGaps;
  std::vector<double> loads{0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  // High-load GAPS cells need well over 100k steps to settle.
  std::size_t steps = 300'000;
  std::size_t warmup = 200'000;
  // Advantages are normalized by default, so alpha is on a unit scale.
  PolicyHyperparameters policy{.temperature = 1.0, .learning_rate = 0.1, .discount = 1.0};
  GapsOptions gaps{};
  double loop_penalty = 1.0;
  double epsilon = 0.01;
  double alpha_q = 0.5;
  std::size_t queue_capacity = 1000;
  InitMode init = InitMode::kEpsilonGreedy;
  double init_scale = 1.0;
  unsigned jobs = 1;

  void validate() const {
    if (loads.empty()) throw ConfigError("loads must be nonempty");
    for (double l : loads) {
      if (!(l > 0.0) || !std::isfinite(l)) throw ConfigError("loads must be positive");
    }
    if (seeds.empty()) throw ConfigError("seeds must be nonempty");
    if (warmup >= steps) throw ConfigError("warmup must be smaller than steps");
    if (!(policy.learning_rate > 0.0)) throw ConfigError("alpha must be positive");
    if (!(policy.temperature > 0.0)) throw ConfigError("temperature must be positive");
    if (!(policy.discount >= 0.0 && policy.discount <= 1.0)) throw ConfigError("gamma must be in [0, 1]");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must be in (0, 1)");
    if (!(alpha_q > 0.0 && alpha_q <= 1.0)) throw ConfigError("alpha-q must be in (0, 1]");
    if (queue_capacity == 0) throw ConfigError("queue-cap must be positive");
    if (!(init_scale > 0.0)) throw ConfigError("init-scale must be positive");
    if (!(gaps.baseline_rate >= 0.0 && gaps.baseline_rate <= 1.0)) {
      throw ConfigError("baseline-rate must be in [0, 1]");
    }
    if (!(loop_penalty >= 0.0) || !std::isfinite(loop_penalty)) {
      throw ConfigError("loop-penalty must be nonnegative");
    }
  }
};

struct ResultRow {
  std::string topology;
  std::string algorithm;
  double load = 0.0;
  std::uint64_t seed = 0;
  double avg_delivery_time = std::nan("");  // nan when nothing was delivered
  std::size_t delivered = 0;
  std::size_t discarded = 0;
  std::size_t dropped_at_queue = 0;

  friend bool operator==(const ResultRow& a, const ResultRow& b) {
    const bool same_avg = a.avg_delivery_time == b.avg_delivery_time ||
                          (std::isnan(a.avg_delivery_time) && std::isnan(b.avg_delivery_time));
    return same_avg && std::tie(a.topology, a.algorithm, a.load, a.seed, a.delivered,
                                a.discarded, a.dropped_at_queue) ==
                           std::tie(b.topology, b.algorithm, b.load, b.seed, b.delivered,
                                    b.discarded, b.dropped_at_queue);
  }
};

// "original" and "modified" are builtin; anything else is read as a file.
inline Topology resolve_topology(const std::string& source) {
  if (source == "original") return build_grid_original();
  if (source == "modified") return build_grid_modified();
  std::ifstream in(source);
  if (!in) throw ConfigError("cannot read topology '" + source + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return load_topology(buf.str());
}

inline std::string topology_label(const std::string& source) {
  if (source == "original" || source == "modified") return source;
  return std::filesystem::path(source).stem().string();
}

inline std::unique_ptr<RoutingAgent> make_agent(const ExperimentConfig& c, const Topology& t,
                                                std::uint64_t seed) {
  switch (c.algorithm) {
    case Algorithm::kGaps:
      if (c.init == InitMode::kRandom) {
        Rng init_rng(seed ^ 0x9e3779b97f4a7c15ULL);
        return std::make_unique<GapsAgent>(GapsAgent::random(t, init_rng, c.init_scale, c.policy, c.gaps));
      }
      return std::make_unique<GapsAgent>(GapsAgent::epsilon_greedy(t, c.epsilon, c.policy, c.gaps));
    case Algorithm::kBest:
      return std::make_unique<BestAgent>(t);
    case Algorithm::kBestload:
      return std::make_unique<BestloadAgent>(t);
    case Algorithm::kQRouting:
      return std::make_unique<QRoutingAgent>(t, c.alpha_q);
  }
  throw ConfigError("unknown algorithm");
}

inline Simulator make_simulator(const ExperimentConfig& c, const Topology& t, std::uint64_t seed) {
  return Simulator(t, make_agent(c, t, seed),
                   SimConfig{.queue_capacity = c.queue_capacity, .seed = seed, .loop_penalty = c.loop_penalty});
}

inline ResultRow make_row(const ExperimentConfig& c, double load, std::uint64_t seed,
                          const Metrics& m) {
  ResultRow row;
  row.topology = topology_label(c.topology);
  row.algorithm = std::string(to_string(c.algorithm));
  row.load = load;
  row.seed = seed;
  if (const auto avg = m.average_delivery_time()) row.avg_delivery_time = *avg;
  row.delivered = m.measured_delivered;
  row.discarded = m.measured_discarded;
  row.dropped_at_queue = m.measured_dropped;
  return row;
}

// Runs one (load, seed) cell; the finished simulator is handed to `inspect`
// when given, e.g. to read converged policies.
template <class Inspect>
ResultRow run_cell(const ExperimentConfig& c, const Topology& t, double load, std::uint64_t seed,
                   Inspect&& inspect) {
  Simulator sim = make_simulator(c, t, seed);
  const Metrics m = sim.run(load, c.steps, c.warmup);
  inspect(sim);
  return make_row(c, load, seed, m);
}

inline ResultRow run_cell(const ExperimentConfig& c, const Topology& t, double load,
                          std::uint64_t seed) {
  return run_cell(c, t, load, seed, [](const Simulator&) {});
}

// One row per (load, seed), in that order. Cells may run on `c.jobs` threads;
// each owns its simulator, so the output does not depend on scheduling.
template <class Inspect>
std::vector<ResultRow> run_experiment(const ExperimentConfig& c, Inspect&& inspect) {
  c.validate();
  const Topology t = resolve_topology(c.topology);
  std::vector<std::pair<double, std::uint64_t>> cells;
  for (double load : c.loads) {
    for (std::uint64_t seed : c.seeds) cells.emplace_back(load, seed);
  }
  std::vector<ResultRow> rows(cells.size());
  const unsigned workers = std::max(1u, std::min<unsigned>(c.jobs, static_cast<unsigned>(cells.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      rows[i] = run_cell(c, t, cells[i].first, cells[i].second,
                         [&](const Simulator& s) { inspect(cells[i].first, cells[i].second, s); });
    }
    return rows;
  }
  std::atomic<std::size_t> next{0};
  std::mutex inspect_mutex;
  std::exception_ptr failure;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < cells.size(); i = next++) {
        try {
          rows[i] = run_cell(c, t, cells[i].first, cells[i].second, [&](const Simulator& s) {
            std::lock_guard lock(inspect_mutex);
            inspect(cells[i].first, cells[i].second, s);
          });
        } catch (...) {
          std::lock_guard lock(inspect_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return rows;
}

inline std::vector<ResultRow> run_experiment(const ExperimentConfig& c) {
  return run_experiment(c, [](double, std::uint64_t, const Simulator&) {});
}

// ---- CSV -------------------------------------------------------------------

inline constexpr std::string_view kCsvHeader =
    "topology,algorithm,load,seed,avg_delivery_time,delivered,discarded,dropped_at_queue";

inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline void write_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kCsvHeader << '\n';
  for (const ResultRow& r : rows) {
    out << r.topology << ',' << r.algorithm << ',' << format_real(r.load) << ',' << r.seed << ','
        << format_real(r.avg_delivery_time) << ',' << r.delivered << ',' << r.discarded << ','
        << r.dropped_at_queue << '\n';
  }
}

inline std::vector<ResultRow> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty results file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw ConfigError("unexpected CSV header: " + line);
  std::vector<ResultRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 8) throw ConfigError("line " + std::to_string(line_no) + ": expected 8 fields");
    try {
      ResultRow r;
      r.topology = f[0];
      r.algorithm = f[1];
      r.load = std::stod(f[2]);
      r.seed = std::stoull(f[3]);
      r.avg_delivery_time = std::stod(f[4]);
      r.delivered = std::stoull(f[5]);
      r.discarded = std::stoull(f[6]);
      r.dropped_at_queue = std::stoull(f[7]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw ConfigError("line " + std::to_string(line_no) + ": malformed number");
    }
  }
  return rows;
}

// ---- Summaries and plot data -------------------------------------------------

struct SummaryKey {
  std::string topology;
  std::string algorithm;
  double load = 0.0;
  friend auto operator<=>(const SummaryKey&, const SummaryKey&) = default;
};

struct SummaryStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single run
  std::size_t runs = 0;
};

using Summary = std::map<SummaryKey, SummaryStats>;

// Rows without deliveries carry no delivery time and are skipped.
inline Summary summarize(const std::vector<ResultRow>& rows) {
  std::map<SummaryKey, std::vector<double>> groups;
  for (const ResultRow& r : rows) {
    if (std::isnan(r.avg_delivery_time)) continue;
    groups[{r.topology, r.algorithm, r.load}].push_back(r.avg_delivery_time);
  }
  Summary out;
  for (const auto& [key, values] : groups) {
    SummaryStats s;
    s.runs = values.size();
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(s.runs);
    if (s.runs > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - s.mean) * (v - s.mean);
      s.stddev = std::sqrt(ss / static_cast<double>(s.runs - 1));
    }
    out.emplace(key, s);
  }
  return out;
}

// One whitespace-separated file per (topology, algorithm):
//   # load mean_avg_delivery_time stddev runs
// Returns the paths written, in key order.
inline std::vector<std::filesystem::path> emit_plot_data(const Summary& summary,
                                                         const std::filesystem::path& dir) {
  if (summary.empty()) throw ConfigError("nothing to plot");
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  std::ofstream out;
  std::pair<std::string, std::string> current;
  for (const auto& [key, stats] : summary) {
    const std::pair<std::string, std::string> series{key.topology, key.algorithm};
    if (written.empty() || series != current) {
      if (out.is_open()) out.close();
      current = series;
      written.push_back(dir / (key.topology + "_" + key.algorithm + ".dat"));
      out.open(written.back(), std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + written.back().string());
      out << "# topology=" << key.topology << " algorithm=" << key.algorithm << '\n'
          << "# load mean_avg_delivery_time stddev runs\n";
    }
    out << format_real(key.load) << ' ' << format_real(stats.mean) << ' '
        << format_real(stats.stddev) << ' ' << stats.runs << '\n';
    if (!out) throw std::runtime_error("write failure on " + written.back().string());
  }
  return written;
}

// Parses "0.5:3.5:0.5" (inclusive range) or "0.5,1,2".
inline std::vector<double> parse_loads(const std::string& text) {
  auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw ConfigError("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + s + "' in loads '" + text + "'");
    }
  };
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string p;
    while (std::getline(ss, p, ':')) parts.push_back(p);
    if (parts.size() != 3) throw ConfigError("loads range must be start:stop:step");
    const double start = number(parts[0]);
    const double stop = number(parts[1]);
    const double step = number(parts[2]);
    if (!(step > 0.0) || stop < start) throw ConfigError("invalid loads range '" + text + "'");
    const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    for (std::size_t i = 0; i < count; ++i) {
      // Rounded so 0.1-style steps print cleanly.
      out.push_back(std::round((start + static_cast<double>(i) * step) * 1e9) / 1e9);
    }
  } else {
    std::stringstream ss(text);
    std::string p;
    while (std::getline(ss, p, ',')) out.push_back(number(p));
  }
  return out;
}

inline std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string p;
  while (std::getline(ss, p, ',')) {
    try {
      if (p.empty() || p.front() == '-') throw ConfigError("");
      std::size_t used = 0;
      out.push_back(std::stoull(p, &used));
      if (used != p.size()) throw ConfigError("");
    } catch (const std::exception&) {
      throw ConfigError("bad seed '" + p + "'");
    }
  }
  return out;
}

}  // namespace gapsroute
