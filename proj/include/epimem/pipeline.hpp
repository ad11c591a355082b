#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "epimem/consolidation.hpp"
#include "epimem/embedding.hpp"
#include "epimem/evaluation.hpp"
#include "epimem/extraction.hpp"
#include "epimem/gateway.hpp"
#include "epimem/memory_store.hpp"
#include "epimem/retrieval.hpp"
#include "epimem/store.hpp"

namespace epimem {

// Effective run configuration: a JSON config file merged with CLI flags
// (flags win). The same structure drives the CLI, the pipeline drivers and
// the tests.
struct RunConfig {
  // gateway
  std::string gateway_backend = "mock";  // "mock" | "http"
  std::string fixture_dir;
  std::string base_url;
  std::string token_env = "EPIMEM_API_TOKEN";
  int retry_limit = 2;
  RoleModels models;
  RoleModels small_models;  // swapped in by use_small_models
  bool use_small_models = false;

  // embedding
  std::string embedding_backend = "mock";  // "mock" | "http"
  int embedding_dimension = 32;
  std::string embedding_base_url;
  std::string embedding_model;
  std::string embedding_cache_path;

  ExtractionConfig extraction;
  ConsolidationConfig consolidation;
  RetrievalConfig retrieval;

  bool judge_enabled = true;
  std::vector<std::string> abstention_patterns;
  int jobs = 0;  // 0: one worker per logical core

  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;  // effective config, echoed into manifests
  std::string config_hash() const;

  std::shared_ptr<LlmBackend> make_llm_backend() const;
  std::shared_ptr<EmbeddingBackend> make_embedding_backend() const;
  GatewayConfig gateway_config() const;  // applies use_small_models
};

RunConfig load_run_config(const std::optional<std::filesystem::path>& config_file);

// Memory construction for one conversation: per-session extraction,
// embedding, and consolidation; the sealed store is ready for retrieval.
MemoryStore build_memory(const Conversation& conversation, const RunConfig& config,
                         LlmGateway& gateway, EmbeddingClient& embeddings,
                         Manifest* manifest = nullptr, WarningLog* warnings = nullptr);

struct QueryResult {
  std::vector<ScoredId> ranked;
  AssembledContext context;
  std::optional<std::string> answer_text;  // absent on dry runs
};

QueryResult query_memory(const MemoryStore& store, const std::string& question,
                         const RunConfig& config, LlmGateway* gateway,
                         EmbeddingClient& embeddings, DatasetStyle style, bool dry_run,
                         WarningLog* warnings = nullptr);

}  // namespace epimem
