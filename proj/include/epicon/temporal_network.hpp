#pragma once

#include "epicon/common.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace epicon {

/// One raw contact line: at time `t` (seconds) nodes `a` and `b` were in
/// contact during the reporting window that ends at `t`.
struct ContactRecord {
  long long t = 0;
  std::string a;
  std::string b;
  std::vector<std::string> meta;  // trailing fields, kept verbatim
};

/// Time-sorted, deduplicated contact records plus the reporting resolution
/// (the duration, in seconds, each listed contact is considered active).
struct ContactEventLog {
  std::vector<ContactRecord> records;
  double resolution = 0.0;
};

/// Parses whitespace-separated contact lines `t i j [meta...]`.
/// Lines starting with `#` and blank lines are ignored. Records are returned
/// sorted by timestamp; (t, i, j) and (t, j, i) collapse to one record.
inline ContactEventLog parse_contacts(std::istream& in, double resolution) {
  if (!(resolution > 0.0)) throw ConfigError("contact resolution must be > 0");
  ContactEventLog log;
  log.resolution = resolution;

  std::string line;
  long long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t first = line.find_first_not_of(" \t\r\n");
    if (first == std::string::npos || line[first] == '#') continue;

    std::istringstream fields(line);
    ContactRecord rec;
    std::string stamp;
    if (!(fields >> stamp >> rec.a >> rec.b)) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected `t i j [meta...]`, got: " + line);
    }
    try {
      std::size_t used = 0;
      rec.t = std::stoll(stamp, &used);
      if (used != stamp.size()) throw std::invalid_argument(stamp);
    } catch (const std::exception&) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": timestamp is not an integer: " + stamp);
    }
    if (rec.a == rec.b) {
      throw ParseError("line " + std::to_string(line_no) + ": self-contact " + rec.a);
    }
    std::string extra;
    while (fields >> extra) rec.meta.push_back(extra);
    log.records.push_back(std::move(rec));
  }
  if (log.records.empty()) throw DataError("contact log contains no records");

  std::stable_sort(log.records.begin(), log.records.end(),
                   [](const ContactRecord& x, const ContactRecord& y) { return x.t < y.t; });

  // Deduplicate on the unordered (t, {i, j}) key, keeping the first occurrence.
  std::vector<ContactRecord> unique;
  unique.reserve(log.records.size());
  std::set<std::tuple<long long, std::string, std::string>> seen;
  for (auto& rec : log.records) {
    auto key = rec.a < rec.b ? std::make_tuple(rec.t, rec.a, rec.b)
                             : std::make_tuple(rec.t, rec.b, rec.a);
    if (seen.insert(key).second) unique.push_back(std::move(rec));
  }
  log.records = std::move(unique);
  return log;
}

/// One maximal interval [t_start, t_end) of constant adjacency.
/// Edges are stored as (i, j) with i < j; absence of a pair means no edge.
struct Snapshot {
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<std::pair<int, int>> edges;

  double length() const { return t_end - t_start; }
};

/// Piecewise-constant temporal network on [0, horizon]: an ordered list of
/// snapshots that partitions the horizon exactly.
struct TemporalNetwork {
  int n = 0;
  std::vector<std::string> node_labels;
  std::vector<Snapshot> snapshots;
  double horizon = 0.0;

  Mat adjacency_dense(std::size_t snap) const {
    const Snapshot& s = snapshots.at(snap);
    Mat a = Mat::Zero(n, n);
    for (auto [i, j] : s.edges) {
      a(i, j) = 1.0;
      a(j, i) = 1.0;
    }
    return a;
  }

  /// Checks the structural invariants; throws DataError on violation.
  void validate() const {
    if (n < 1) throw DataError("temporal network has no nodes");
    if (static_cast<int>(node_labels.size()) != n)
      throw DataError("node label count does not match n");
    if (snapshots.empty()) throw DataError("temporal network has no snapshots");
    if (snapshots.front().t_start != 0.0) throw DataError("first snapshot must start at 0");
    if (snapshots.back().t_end != horizon) throw DataError("last snapshot must end at the horizon");
    for (std::size_t k = 0; k < snapshots.size(); ++k) {
      const Snapshot& s = snapshots[k];
      if (!(s.length() > 0.0)) throw DataError("snapshot with nonpositive length");
      if (k > 0 && snapshots[k - 1].t_end != s.t_start)
        throw DataError("snapshots do not abut");
      for (auto [i, j] : s.edges) {
        if (i < 0 || j < 0 || i >= n || j >= n || i >= j)
          throw DataError("snapshot edge out of range or not (i<j)-normalized");
      }
    }
  }
};

/// Symmetric nonnegative edge weights on a fixed node set; zero diagonal.
struct WeightedStaticGraph {
  int n = 0;
  Mat weights;
};

namespace detail {

// Merges consecutive snapshots with identical edge sets and validates.
inline TemporalNetwork finalize_network(TemporalNetwork net) {
  std::vector<Snapshot> merged;
  for (auto& s : net.snapshots) {
    std::sort(s.edges.begin(), s.edges.end());
    if (!merged.empty() && merged.back().edges == s.edges &&
        merged.back().t_end == s.t_start) {
      merged.back().t_end = s.t_end;
    } else {
      merged.push_back(std::move(s));
    }
  }
  net.snapshots = std::move(merged);
  net.validate();
  return net;
}

}  // namespace detail

/// Builds the piecewise-constant temporal network from a contact log.
///
/// A record stamped t is active on [t - resolution, t); time is shifted so
/// the earliest activity starts at 0 and the horizon ends with the last
/// activity window. Contact-free stretches become explicit empty snapshots.
/// `node_filter`, when given, drops records touching labels outside the set.
inline TemporalNetwork build_temporal_network(
    const ContactEventLog& log,
    const std::optional<std::set<std::string>>& node_filter = std::nullopt) {
  if (!(log.resolution > 0.0)) throw ConfigError("contact resolution must be > 0");

  std::vector<const ContactRecord*> kept;
  for (const auto& rec : log.records) {
    if (node_filter && (!node_filter->count(rec.a) || !node_filter->count(rec.b))) continue;
    kept.push_back(&rec);
  }
  if (kept.empty()) throw DataError("all contact records were filtered out");

  TemporalNetwork net;
  std::map<std::string, int> index;
  auto node_of = [&](const std::string& label) {
    auto [it, fresh] = index.emplace(label, net.n);
    if (fresh) {
      net.node_labels.push_back(label);
      ++net.n;
    }
    return it->second;
  };

  const double res = log.resolution;
  const double origin = static_cast<double>(kept.front()->t) - res;

  // Sweep events: +1 at window start, -1 at window end, per unordered pair.
  struct Event {
    double t;
    int delta;
    std::pair<int, int> pair;
  };
  std::vector<Event> events;
  events.reserve(2 * kept.size());
  double horizon = 0.0;
  for (const ContactRecord* rec : kept) {
    int i = node_of(rec->a);
    int j = node_of(rec->b);
    auto pair = std::minmax(i, j);
    double start = static_cast<double>(rec->t) - res - origin;
    double end = start + res;
    horizon = std::max(horizon, end);
    events.push_back({start, +1, pair});
    events.push_back({end, -1, pair});
  }
  net.horizon = horizon;

  std::vector<double> cuts;
  cuts.reserve(events.size() + 2);
  cuts.push_back(0.0);
  cuts.push_back(horizon);
  for (const Event& e : events) cuts.push_back(e.t);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::sort(events.begin(), events.end(), [](const Event& x, const Event& y) {
    return x.t < y.t;
  });

  std::map<std::pair<int, int>, int> active;
  std::size_t next_event = 0;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    while (next_event < events.size() && events[next_event].t <= cuts[c]) {
      const Event& e = events[next_event++];
      int& count = active[e.pair];
      count += e.delta;
      if (count == 0) active.erase(e.pair);
    }
    Snapshot snap;
    snap.t_start = cuts[c];
    snap.t_end = cuts[c + 1];
    snap.edges.reserve(active.size());
    for (const auto& [pair, count] : active) snap.edges.push_back(pair);
    net.snapshots.push_back(std::move(snap));
  }
  return detail::finalize_network(std::move(net));
}

/// Collects the node labels whose records carry one of the given metadata
/// tokens. When a record has exactly two metadata fields, the first applies
/// to node_a and the second to node_b (the SocioPatterns class convention);
/// otherwise any matching token selects both endpoints.
inline std::set<std::string> labels_with_meta(const ContactEventLog& log,
                                              const std::set<std::string>& meta_values) {
  std::set<std::string> labels;
  for (const auto& rec : log.records) {
    if (rec.meta.size() == 2) {
      if (meta_values.count(rec.meta[0])) labels.insert(rec.a);
      if (meta_values.count(rec.meta[1])) labels.insert(rec.b);
    } else {
      for (const auto& token : rec.meta) {
        if (meta_values.count(token)) {
          labels.insert(rec.a);
          labels.insert(rec.b);
          break;
        }
      }
    }
  }
  return labels;
}

/// Restricts a log to records with raw timestamp in [t_min, t_max].
inline ContactEventLog filter_time_range(const ContactEventLog& log, long long t_min,
                                         long long t_max) {
  ContactEventLog out;
  out.resolution = log.resolution;
  for (const auto& rec : log.records) {
    if (rec.t >= t_min && rec.t <= t_max) out.records.push_back(rec);
  }
  if (out.records.empty()) throw DataError("time-range filter removed every record");
  return out;
}

/// Time-aggregated static graph: weight[i][j] = fraction of the horizon the
/// edge {i, j} is present.
inline WeightedStaticGraph aggregate_static(const TemporalNetwork& net) {
  net.validate();
  WeightedStaticGraph g;
  g.n = net.n;
  g.weights = Mat::Zero(net.n, net.n);
  for (const Snapshot& s : net.snapshots) {
    for (auto [i, j] : s.edges) {
      g.weights(i, j) += s.length();
      g.weights(j, i) += s.length();
    }
  }
  g.weights /= net.horizon;
  return g;
}

/// Knobs for the school-like contact generator. Contacts are pair-level
/// on/off Markov chains over fixed frames, modulated by an activity profile
/// that alternates lesson- and break-like periods.
struct SchoolSynthConfig {
  double resolution = 60.0;     // frame length, seconds
  int classes = 2;              // contiguous node blocks
  double within_fraction = 0.015;   // stationary on-fraction, same-class pair
  double cross_fraction = 0.0015;   // stationary on-fraction, cross-class pair
  double persistence = 0.35;        // P(contact stays on next frame)
  double activity_scale = 1.0;      // global multiplier; 0 disables all contacts
  std::vector<double> period_profile = {1.5, 0.4, 1.8, 0.2, 1.1};

  void validate() const {
    if (!(resolution > 0.0)) throw ConfigError("synthesis resolution must be > 0");
    if (classes < 1) throw ConfigError("synthesis needs at least one class");
    if (within_fraction < 0.0 || within_fraction >= 1.0 || cross_fraction < 0.0 ||
        cross_fraction >= 1.0)
      throw ConfigError("contact fractions must lie in [0, 1)");
    if (persistence < 0.0 || persistence >= 1.0)
      throw ConfigError("persistence must lie in [0, 1)");
    if (activity_scale < 0.0) throw ConfigError("activity scale must be >= 0");
    if (period_profile.empty()) throw ConfigError("period profile must be nonempty");
    for (double m : period_profile)
      if (m < 0.0) throw ConfigError("period profile entries must be >= 0");
  }
};

/// Deterministic school-like temporal network: `n` nodes split into
/// contiguous classes, bursty pair contacts over [0, T]. Same (n, T, config,
/// seed) always yields the identical network.
inline TemporalNetwork synthesize_school_like(int n, double T, const SchoolSynthConfig& cfg,
                                              std::uint64_t seed) {
  if (n < 2) throw ConfigError("synthesis needs n >= 2");
  if (!(T > 0.0)) throw ConfigError("synthesis needs T > 0");
  cfg.validate();

  TemporalNetwork net;
  net.n = n;
  net.horizon = T;
  const int per_class = (n + cfg.classes - 1) / cfg.classes;
  for (int i = 0; i < n; ++i) {
    int cls = i / per_class;
    char letter = static_cast<char>('A' + cls % 26);
    std::string num = std::to_string(i % per_class + 1);
    if (num.size() < 2) num.insert(num.begin(), '0');
    net.node_labels.push_back(std::string(1, letter) + num);
  }

  const int frames = static_cast<int>(std::ceil(T / cfg.resolution));
  std::mt19937_64 rng(detail::mix_seed(seed, 0x5c4001));

  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);

  auto turn_on_prob = [&](bool within, double modifier) {
    double frac = (within ? cfg.within_fraction : cfg.cross_fraction) * cfg.activity_scale *
                  modifier;
    frac = std::min(frac, 0.999);
    if (frac <= 0.0) return 0.0;
    // stationary on-fraction w of the chain: p_on = w (1 - rho) / (1 - w)
    return std::min(1.0, frac * (1.0 - cfg.persistence) / (1.0 - frac));
  };

  std::vector<std::uint8_t> on(pairs.size(), 0);
  const int periods = static_cast<int>(cfg.period_profile.size());
  for (int f = 0; f < frames; ++f) {
    double modifier = cfg.period_profile[std::min(periods - 1, f * periods / frames)];
    Snapshot snap;
    snap.t_start = f * cfg.resolution;
    snap.t_end = std::min(T, (f + 1) * cfg.resolution);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      auto [i, j] = pairs[k];
      bool within = (i / per_class) == (j / per_class);
      double u = detail::canonical(rng);
      if (on[k]) {
        on[k] = u < cfg.persistence ? 1 : 0;
      } else {
        on[k] = u < turn_on_prob(within, modifier) ? 1 : 0;
      }
      if (on[k]) snap.edges.push_back(pairs[k]);
    }
    net.snapshots.push_back(std::move(snap));
  }
  if (net.snapshots.empty() || net.snapshots.back().t_end != T) {
    Snapshot tail;
    tail.t_start = net.snapshots.empty() ? 0.0 : net.snapshots.back().t_end;
    tail.t_end = T;
    if (tail.length() > 0.0) net.snapshots.push_back(std::move(tail));
  }
  return detail::finalize_network(std::move(net));
}

}  // namespace epicon
