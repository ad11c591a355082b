#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "epimem/core.hpp"
#include "epimem/embedding.hpp"
#include "epimem/gateway.hpp"
#include "epimem/vector_index.hpp"

namespace epimem {

class Manifest;

struct Cluster {
  std::string cluster_id;  // "s{i}-c{ordinal}"
  int session_index = 0;
  std::vector<std::string> member_fragment_ids;
  EmbeddingVector centroid;  // arithmetic mean of member vectors
};

// Clusters still awaiting a semantic match from a later session. Order is
// session order, then cluster_id.
struct PersistentPool {
  std::vector<Cluster> clusters;

  bool contains(std::string_view cluster_id) const;
  const Cluster* find(std::string_view cluster_id) const;
};

struct ConnectedPair {
  std::string pool_cluster_id;
  std::string new_cluster_id;
  double similarity = 0.0;
};

struct KmeansConfig {
  int max_iterations = 100;
  int restarts = 8;
  uint64_t seed = 42;
};

struct ConsolidationConfig {
  double theta = 0.6;
  int k_min = 2;
  int k_max_cap = 10;  // effective k_max = min(k_max_cap, n - 1)
  bool reasoning_enabled = true;  // off-switch for Step 2
  KmeansConfig kmeans;
};

// Seeded Lloyd iterations with k-means++ initialization; best
// within-cluster sum of squares across restarts wins. Deterministic for a
// given (vectors, k, config).
std::vector<int> kmeans_assign(const std::vector<EmbeddingVector>& vectors, int k,
                               const KmeansConfig& config);

// Standard silhouette with Euclidean distance; singleton-cluster points and
// a==b points score 0. Throws on fewer than two non-empty clusters.
double mean_silhouette(const std::vector<int>& assignment,
                       const std::vector<EmbeddingVector>& vectors);

struct ClusteringOutcome {
  std::vector<Cluster> clusters;
  int chosen_k = 0;
  double silhouette = 0.0;  // 0 when not computed (n <= 2)
  bool fallback_singletons = false;
};

// Per-session clustering: n <= 2 keeps each fragment its own cluster; n >= 3
// searches k in [k_min, min(k_max_cap, n-1)] by mean silhouette (smallest k
// wins ties) and falls back to singletons when the best silhouette is <= 0.
// Cluster ordinals follow the smallest member fragment_id.
ClusteringOutcome cluster_session(const std::vector<MemoryFragment>& fragments,
                                  const std::vector<EmbeddingVector>& vectors, int session_index,
                                  const ConsolidationConfig& config);

// All (p, c) with centroid cosine strictly above theta, sorted by
// (pool_cluster_id, new_cluster_id).
std::vector<ConnectedPair> connected_pairs(const PersistentPool& pool,
                                           const std::vector<Cluster>& new_clusters, double theta);

// Cross-session reasoning over one connected pair. Fragments from both
// clusters are rendered chronologically; the reply's "extended_insight"
// entries become reasoning fragments with ids starting at
// "s{session}-r{id_start}". Unknown inference types are dropped with a
// warning; a structured-output failure yields an empty list (pair skipped).
std::vector<MemoryFragment> reason_pair(const ConnectedPair& pair,
                                        const std::vector<MemoryFragment>& pool_fragments,
                                        const std::vector<MemoryFragment>& new_fragments,
                                        LlmGateway& gateway, Date session_date, int session_index,
                                        int id_start, WarningLog* warnings = nullptr);

// P_i = P_{i-1} \ {p : exists c with (p,c) connected} ∪ C_i. Survivors keep
// their order; new clusters append in cluster_id order. A pair naming an
// unknown cluster is an internal inconsistency.
PersistentPool update_pool(const PersistentPool& pool, const std::vector<Cluster>& new_clusters,
                           const std::vector<ConnectedPair>& pairs);

struct SessionMemory {
  int session_index = 0;
  Date session_date;
  std::vector<MemoryFragment> fragments;
  std::vector<EmbeddingVector> vectors;
};

struct SessionTrace {
  int session_index = 0;
  int fragment_count = 0;
  int chosen_k = 0;
  double silhouette = 0.0;
  bool fallback_singletons = false;
  std::vector<ConnectedPair> pairs;
  std::vector<std::string> removed_cluster_ids;
  std::vector<std::string> added_cluster_ids;
  size_t pool_before = 0;
  size_t pool_after = 0;
  int reasoned_fragments = 0;
};

struct ConsolidationResult {
  std::vector<MemoryFragment> extracted;  // union of session fragments
  std::vector<MemoryFragment> reasoned;   // union of reasoning fragments
  PersistentPool final_pool;
  std::vector<SessionTrace> trace;
};

// Runs Step 2 over sessions in order: cluster, connect against the pool,
// reason every connected pair (when enabled), update the pool. Sessions are
// strictly sequential; pairs within a session are processed in sorted order.
ConsolidationResult consolidate_conversation(const std::vector<SessionMemory>& sessions,
                                             const ConsolidationConfig& config,
                                             LlmGateway* gateway, Manifest* manifest = nullptr,
                                             WarningLog* warnings = nullptr);

}  // namespace epimem
