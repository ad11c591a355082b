#include "epimem/consolidation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>

#include "epimem/prompts.hpp"
#include "epimem/store.hpp"

namespace epimem {

namespace {

double sq_dist(const EmbeddingVector& a, const EmbeddingVector& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// rng helpers: keep the draw sequence independent of stdlib distribution
// internals so results are reproducible for a given seed.
size_t draw_index(std::mt19937_64& rng, size_t n) { return static_cast<size_t>(rng() % n); }

double draw_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

std::vector<EmbeddingVector> kmeanspp_init(const std::vector<EmbeddingVector>& points, int k,
                                           std::mt19937_64& rng) {
  std::vector<EmbeddingVector> centroids;
  centroids.push_back(points[draw_index(rng, points.size())]);
  std::vector<double> best(points.size(), std::numeric_limits<double>::max());
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (size_t i = 0; i < points.size(); ++i) {
      best[i] = std::min(best[i], sq_dist(points[i], centroids.back()));
      total += best[i];
    }
    size_t pick = 0;
    if (total > 0.0) {
      const double r = draw_unit(rng) * total;
      double acc = 0.0;
      for (size_t i = 0; i < points.size(); ++i) {
        acc += best[i];
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    } else {
      pick = draw_index(rng, points.size());
    }
    centroids.push_back(points[pick]);
  }
  return centroids;
}

EmbeddingVector mean_of(const std::vector<EmbeddingVector>& points,
                        const std::vector<size_t>& members) {
  EmbeddingVector m(points[members.front()].size(), 0.0);
  for (size_t idx : members)
    for (size_t d = 0; d < m.size(); ++d) m[d] += points[idx][d];
  for (auto& x : m) x /= static_cast<double>(members.size());
  return m;
}

}  // namespace

std::vector<int> kmeans_assign(const std::vector<EmbeddingVector>& vectors, int k,
                               const KmeansConfig& config) {
  const size_t n = vectors.size();
  if (k <= 0 || static_cast<size_t>(k) > n)
    throw InternalError("kmeans with k=" + std::to_string(k) + " over n=" + std::to_string(n));
  for (const auto& v : vectors)
    if (v.size() != vectors.front().size()) throw DimensionMismatch("kmeans input dimensions differ");

  std::vector<int> best_assignment;
  double best_wcss = std::numeric_limits<double>::max();

  for (int restart = 0; restart < std::max(1, config.restarts); ++restart) {
    std::seed_seq seq{config.seed, static_cast<uint64_t>(k), static_cast<uint64_t>(restart)};
    std::mt19937_64 rng(seq);
    auto centroids = kmeanspp_init(vectors, k, rng);
    std::vector<int> assignment(n, -1);

    for (int iter = 0; iter < config.max_iterations; ++iter) {
      bool changed = false;
      for (size_t i = 0; i < n; ++i) {
        int nearest = 0;
        double nearest_d = sq_dist(vectors[i], centroids[0]);
        for (int c = 1; c < k; ++c) {
          const double d = sq_dist(vectors[i], centroids[c]);
          if (d < nearest_d) {  // ties keep the lowest index
            nearest_d = d;
            nearest = c;
          }
        }
        if (assignment[i] != nearest) {
          assignment[i] = nearest;
          changed = true;
        }
      }

      std::vector<std::vector<size_t>> members(k);
      for (size_t i = 0; i < n; ++i) members[assignment[i]].push_back(i);

      // Re-seat empty clusters with the point farthest from its centroid
      // (donor clusters must keep at least one member).
      for (int c = 0; c < k; ++c) {
        if (!members[c].empty()) continue;
        size_t worst_point = n;
        double worst_d = -1.0;
        for (size_t i = 0; i < n; ++i) {
          if (members[assignment[i]].size() <= 1) continue;
          const double d = sq_dist(vectors[i], centroids[assignment[i]]);
          if (d > worst_d) {
            worst_d = d;
            worst_point = i;
          }
        }
        if (worst_point == n) break;
        auto& donor = members[assignment[worst_point]];
        donor.erase(std::find(donor.begin(), donor.end(), worst_point));
        members[c].push_back(worst_point);
        assignment[worst_point] = c;
        changed = true;
      }

      for (int c = 0; c < k; ++c)
        if (!members[c].empty()) centroids[c] = mean_of(vectors, members[c]);
      if (!changed) break;
    }

    double wcss = 0.0;
    for (size_t i = 0; i < n; ++i) wcss += sq_dist(vectors[i], centroids[assignment[i]]);
    if (wcss < best_wcss) {
      best_wcss = wcss;
      best_assignment = assignment;
    }
  }
  return best_assignment;
}

double mean_silhouette(const std::vector<int>& assignment,
                       const std::vector<EmbeddingVector>& vectors) {
  const size_t n = vectors.size();
  if (assignment.size() != n) throw InternalError("silhouette: assignment/vector size mismatch");
  std::map<int, std::vector<size_t>> clusters;
  for (size_t i = 0; i < n; ++i) clusters[assignment[i]].push_back(i);
  if (clusters.size() < 2)
    throw InternalError("silhouette undefined for a single cluster");

  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) dist[i][j] = dist[j][i] = std::sqrt(sq_dist(vectors[i], vectors[j]));

  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const auto& own = clusters.at(assignment[i]);
    if (own.size() == 1) continue;  // singleton scores 0
    double a = 0.0;
    for (size_t j : own)
      if (j != i) a += dist[i][j];
    a /= static_cast<double>(own.size() - 1);

    double b = std::numeric_limits<double>::max();
    for (const auto& [label, members] : clusters) {
      if (label == assignment[i]) continue;
      double mean_d = 0.0;
      for (size_t j : members) mean_d += dist[i][j];
      mean_d /= static_cast<double>(members.size());
      b = std::min(b, mean_d);
    }
    const double denom = std::max(a, b);
    total += denom == 0.0 ? 0.0 : (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

namespace {

std::vector<Cluster> clusters_from_groups(std::vector<std::vector<size_t>> groups,
                                          const std::vector<MemoryFragment>& fragments,
                                          const std::vector<EmbeddingVector>& vectors,
                                          int session_index) {
  for (auto& g : groups)
    std::sort(g.begin(), g.end(), [&](size_t a, size_t b) {
      return fragments[a].fragment_id < fragments[b].fragment_id;
    });
  std::sort(groups.begin(), groups.end(), [&](const auto& a, const auto& b) {
    return fragments[a.front()].fragment_id < fragments[b.front()].fragment_id;
  });
  std::vector<Cluster> clusters;
  int ordinal = 1;
  for (const auto& g : groups) {
    Cluster c;
    c.cluster_id = "s" + std::to_string(session_index) + "-c" + std::to_string(ordinal++);
    c.session_index = session_index;
    for (size_t idx : g) c.member_fragment_ids.push_back(fragments[idx].fragment_id);
    c.centroid = mean_of(vectors, g);
    clusters.push_back(std::move(c));
  }
  return clusters;
}

std::vector<std::vector<size_t>> singleton_groups(size_t n) {
  std::vector<std::vector<size_t>> groups(n);
  for (size_t i = 0; i < n; ++i) groups[i] = {i};
  return groups;
}

}  // namespace

ClusteringOutcome cluster_session(const std::vector<MemoryFragment>& fragments,
                                  const std::vector<EmbeddingVector>& vectors, int session_index,
                                  const ConsolidationConfig& config) {
  const size_t n = fragments.size();
  if (n == 0) throw InternalError("cluster_session over zero fragments");
  if (vectors.size() != n) throw InternalError("cluster_session: fragment/vector count mismatch");

  ClusteringOutcome outcome;
  if (n <= 2) {
    outcome.clusters =
        clusters_from_groups(singleton_groups(n), fragments, vectors, session_index);
    outcome.chosen_k = static_cast<int>(n);
    return outcome;
  }

  const int k_max = std::min(config.k_max_cap, static_cast<int>(n) - 1);
  int best_k = -1;
  double best_sil = -std::numeric_limits<double>::max();
  std::vector<int> best_assignment;
  for (int k = config.k_min; k <= k_max; ++k) {
    auto assignment = kmeans_assign(vectors, k, config.kmeans);
    const double sil = mean_silhouette(assignment, vectors);
    if (sil > best_sil) {  // strict: ties keep the smallest k
      best_sil = sil;
      best_k = k;
      best_assignment = std::move(assignment);
    }
  }

  if (best_sil <= 0.0) {
    // Nothing groups better than noise; keep every fragment separate.
    outcome.clusters =
        clusters_from_groups(singleton_groups(n), fragments, vectors, session_index);
    outcome.chosen_k = static_cast<int>(n);
    outcome.silhouette = best_sil;
    outcome.fallback_singletons = true;
    return outcome;
  }

  std::map<int, std::vector<size_t>> by_label;
  for (size_t i = 0; i < n; ++i) by_label[best_assignment[i]].push_back(i);
  std::vector<std::vector<size_t>> groups;
  for (auto& [label, members] : by_label) groups.push_back(std::move(members));
  outcome.clusters = clusters_from_groups(std::move(groups), fragments, vectors, session_index);
  outcome.chosen_k = best_k;
  outcome.silhouette = best_sil;
  return outcome;
}

bool PersistentPool::contains(std::string_view cluster_id) const {
  return find(cluster_id) != nullptr;
}

const Cluster* PersistentPool::find(std::string_view cluster_id) const {
  for (const auto& c : clusters)
    if (c.cluster_id == cluster_id) return &c;
  return nullptr;
}

std::vector<ConnectedPair> connected_pairs(const PersistentPool& pool,
                                           const std::vector<Cluster>& new_clusters, double theta) {
  std::vector<ConnectedPair> pairs;
  for (const auto& p : pool.clusters) {
    for (const auto& c : new_clusters) {
      const double sim = cosine(p.centroid, c.centroid);
      if (sim > theta) pairs.push_back({p.cluster_id, c.cluster_id, sim});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const ConnectedPair& a, const ConnectedPair& b) {
    if (a.pool_cluster_id != b.pool_cluster_id) return a.pool_cluster_id < b.pool_cluster_id;
    return a.new_cluster_id < b.new_cluster_id;
  });
  return pairs;
}

std::vector<MemoryFragment> reason_pair(const ConnectedPair& pair,
                                        const std::vector<MemoryFragment>& pool_fragments,
                                        const std::vector<MemoryFragment>& new_fragments,
                                        LlmGateway& gateway, Date session_date, int session_index,
                                        int id_start, WarningLog* warnings) {
  if (pool_fragments.empty() || new_fragments.empty())
    throw InternalError("reason_pair with an empty fragment set");

  std::vector<MemoryFragment> ordered = pool_fragments;
  ordered.insert(ordered.end(), new_fragments.begin(), new_fragments.end());
  std::sort(ordered.begin(), ordered.end(), fragment_chrono_less);
  std::string rendered;
  for (size_t i = 0; i < ordered.size(); ++i) {
    if (i > 0) rendered += "\n\n";
    rendered += render_fragment_line(ordered[i]);
  }

  auto request = gateway.request_for_role(
      LlmRole::reason, std::nullopt,
      render_template(step2_template(), {{"memory_fragments", rendered}}));

  nlohmann::json tree;
  try {
    tree = gateway.complete_structured(request, {"extended_insight"});
  } catch (const StructuredOutputFailure& e) {
    warn(warnings, "pair (" + pair.pool_cluster_id + ", " + pair.new_cluster_id +
                       ") skipped: " + e.what());
    return {};
  }

  std::vector<MemoryFragment> fragments;
  int ordinal = id_start;
  const auto& insights = tree.at("extended_insight");
  if (!insights.is_array()) {
    warn(warnings, "extended_insight is not a list for pair (" + pair.pool_cluster_id + ", " +
                       pair.new_cluster_id + ")");
    return {};
  }
  for (const auto& entry : insights) {
    if (!entry.is_object() || !entry.contains("inference_type") || !entry.contains("key") ||
        !entry.contains("value")) {
      warn(warnings, "malformed insight dropped: " + entry.dump());
      continue;
    }
    const auto type = inference_type_from_name(entry.at("inference_type").get<std::string>());
    if (!type) {
      warn(warnings, "insight with unknown inference_type \"" +
                         entry.at("inference_type").get<std::string>() + "\" dropped");
      continue;
    }
    MemoryFragment f;
    f.key = entry.at("key").get<std::string>();
    f.content = entry.at("value").get<std::string>();
    if (f.key.empty() || f.content.empty()) {
      warn(warnings, "insight with empty key/value dropped");
      continue;
    }
    f.category = Category::reasoning;
    f.inference_type = *type;
    f.source_pair = std::make_pair(pair.pool_cluster_id, pair.new_cluster_id);
    f.session_index = session_index;
    const std::string date_text = entry.contains("date") && entry.at("date").is_string()
                                      ? entry.at("date").get<std::string>()
                                      : session_date.to_iso();
    WarningLog local;
    f.temporal = parse_temporal(date_text, session_date, &local);
    for (auto& w : local.snapshot()) {
      f.warnings.push_back(w);
      warn(warnings, w);
    }
    f.fragment_id = "s" + std::to_string(session_index) + "-r" + std::to_string(ordinal++);
    fragments.push_back(std::move(f));
  }
  return fragments;
}

PersistentPool update_pool(const PersistentPool& pool, const std::vector<Cluster>& new_clusters,
                           const std::vector<ConnectedPair>& pairs) {
  std::set<std::string> matched;
  for (const auto& pair : pairs) {
    if (!pool.contains(pair.pool_cluster_id))
      throw InternalError("pair references unknown pool cluster " + pair.pool_cluster_id);
    const bool known_new = std::any_of(
        new_clusters.begin(), new_clusters.end(),
        [&](const Cluster& c) { return c.cluster_id == pair.new_cluster_id; });
    if (!known_new)
      throw InternalError("pair references unknown new cluster " + pair.new_cluster_id);
    matched.insert(pair.pool_cluster_id);
  }

  PersistentPool updated;
  for (const auto& c : pool.clusters)
    if (!matched.count(c.cluster_id)) updated.clusters.push_back(c);
  std::vector<Cluster> incoming = new_clusters;
  std::sort(incoming.begin(), incoming.end(),
            [](const Cluster& a, const Cluster& b) { return a.cluster_id < b.cluster_id; });
  for (auto& c : incoming) updated.clusters.push_back(std::move(c));
  return updated;
}

ConsolidationResult consolidate_conversation(const std::vector<SessionMemory>& sessions,
                                             const ConsolidationConfig& config,
                                             LlmGateway* gateway, Manifest* manifest,
                                             WarningLog* warnings) {
  for (size_t i = 1; i < sessions.size(); ++i)
    if (sessions[i].session_index <= sessions[i - 1].session_index)
      throw InternalError("sessions must be strictly ordered by session_index");
  if (config.reasoning_enabled && !gateway)
    throw ConfigError("reasoning enabled but no gateway supplied");

  ConsolidationResult result;

  auto fragments_of = [&](const Cluster& cluster,
                          const std::vector<SessionMemory>& all) -> std::vector<MemoryFragment> {
    std::vector<MemoryFragment> out;
    for (const auto& id : cluster.member_fragment_ids) {
      for (const auto& s : all) {
        for (const auto& f : s.fragments) {
          if (f.fragment_id == id) out.push_back(f);
        }
      }
    }
    return out;
  };

  PersistentPool pool;  // P_0 = {}
  for (const auto& session : sessions) {
    result.extracted.insert(result.extracted.end(), session.fragments.begin(),
                            session.fragments.end());
    if (session.fragments.empty()) {
      warn(warnings, "session " + std::to_string(session.session_index) +
                         " has no fragments; pool unchanged");
      SessionTrace t;
      t.session_index = session.session_index;
      t.pool_before = t.pool_after = pool.clusters.size();
      if (manifest) {
        manifest->append({{"event", "session_consolidated"},
                          {"session", session.session_index},
                          {"fragments", 0},
                          {"k", 0},
                          {"mean_silhouette", 0.0},
                          {"fallback_singletons", false}});
        manifest->append({{"event", "connected_pairs"},
                          {"session", session.session_index},
                          {"pairs", nlohmann::json::array()}});
        manifest->append({{"event", "pool_updated"},
                          {"session", session.session_index},
                          {"before", t.pool_before},
                          {"after", t.pool_after},
                          {"removed", nlohmann::json::array()},
                          {"added", nlohmann::json::array()}});
      }
      result.trace.push_back(t);
      continue;
    }

    auto outcome =
        cluster_session(session.fragments, session.vectors, session.session_index, config);
    auto pairs = connected_pairs(pool, outcome.clusters, config.theta);

    SessionTrace t;
    t.session_index = session.session_index;
    t.fragment_count = static_cast<int>(session.fragments.size());
    t.chosen_k = outcome.chosen_k;
    t.silhouette = outcome.silhouette;
    t.fallback_singletons = outcome.fallback_singletons;
    t.pairs = pairs;
    t.pool_before = pool.clusters.size();

    if (manifest)
      manifest->append({{"event", "session_consolidated"},
                        {"session", session.session_index},
                        {"fragments", t.fragment_count},
                        {"k", t.chosen_k},
                        {"mean_silhouette", t.silhouette},
                        {"fallback_singletons", t.fallback_singletons}});
    if (manifest) {
      nlohmann::json jpairs = nlohmann::json::array();
      for (const auto& p : pairs)
        jpairs.push_back({{"pool", p.pool_cluster_id},
                          {"new", p.new_cluster_id},
                          {"similarity", p.similarity}});
      manifest->append(
          {{"event", "connected_pairs"}, {"session", session.session_index}, {"pairs", jpairs}});
    }

    // Step 2 proper: one LLM_reason call per connected pair, in sorted pair
    // order. With reasoning disabled the pairs still drive the pool update.
    int reason_ordinal = 1;
    if (config.reasoning_enabled) {
      for (const auto& pair : pairs) {
        const Cluster* pool_cluster = pool.find(pair.pool_cluster_id);
        auto pool_frags = fragments_of(*pool_cluster, sessions);
        const Cluster* new_cluster = nullptr;
        for (const auto& c : outcome.clusters)
          if (c.cluster_id == pair.new_cluster_id) new_cluster = &c;
        auto new_frags = fragments_of(*new_cluster, sessions);
        auto reasoned = reason_pair(pair, pool_frags, new_frags, *gateway,
                                    session.session_date, session.session_index,
                                    reason_ordinal, warnings);
        reason_ordinal += static_cast<int>(reasoned.size());
        t.reasoned_fragments += static_cast<int>(reasoned.size());
        if (manifest)
          manifest->append({{"event", "pair_reasoned"},
                            {"session", session.session_index},
                            {"pool", pair.pool_cluster_id},
                            {"new", pair.new_cluster_id},
                            {"fragments", reasoned.size()}});
        result.reasoned.insert(result.reasoned.end(),
                               std::make_move_iterator(reasoned.begin()),
                               std::make_move_iterator(reasoned.end()));
      }
    }

    auto updated = update_pool(pool, outcome.clusters, pairs);
    std::set<std::string> survivor_ids;
    for (const auto& c : updated.clusters) survivor_ids.insert(c.cluster_id);
    for (const auto& c : pool.clusters)
      if (!survivor_ids.count(c.cluster_id)) t.removed_cluster_ids.push_back(c.cluster_id);
    for (const auto& c : outcome.clusters) t.added_cluster_ids.push_back(c.cluster_id);
    // Same order update_pool appends in, so a manifest replay tracks the pool.
    std::sort(t.added_cluster_ids.begin(), t.added_cluster_ids.end());
    pool = std::move(updated);
    t.pool_after = pool.clusters.size();

    if (manifest)
      manifest->append({{"event", "pool_updated"},
                        {"session", session.session_index},
                        {"before", t.pool_before},
                        {"after", t.pool_after},
                        {"removed", t.removed_cluster_ids},
                        {"added", t.added_cluster_ids}});
    result.trace.push_back(std::move(t));
  }
  result.final_pool = std::move(pool);
  return result;
}

}  // namespace epimem
