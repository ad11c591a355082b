#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "epimem/core.hpp"

namespace epimem {

class GatewayUnavailable : public GatewayError {
 public:
  using GatewayError::GatewayError;
};
class FixtureMissing : public GatewayError {
 public:
  using GatewayError::GatewayError;
};
class StructuredOutputFailure : public GatewayError {
 public:
  StructuredOutputFailure(const std::string& message, std::string raw)
      : GatewayError(message), raw_text(std::move(raw)) {}
  std::string raw_text;
};

struct CompletionRequest {
  std::string model_name;
  std::optional<std::string> system_prompt;
  std::string user_prompt;
  double temperature = 0.0;
  int max_output_tokens = 2048;
};

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  virtual std::string complete(const CompletionRequest& request) = 0;
  virtual std::string id() const = 0;
};

// Deterministic backend: replies live in a fixture directory, one file per
// request, keyed by a content hash of (model_name, prompts). index.txt maps
// keys to human-readable labels.
class MockLlmBackend : public LlmBackend {
 public:
  explicit MockLlmBackend(std::filesystem::path fixture_dir);

  static std::string fixture_key(const CompletionRequest& request);
  // Writes <key>.txt (and an index entry for new keys); used by tests and
  // fixture-generation tooling.
  static void write_fixture(const std::filesystem::path& dir, const CompletionRequest& request,
                            const std::string& reply, const std::string& label);

  std::string complete(const CompletionRequest& request) override;
  std::string id() const override { return "mock:" + dir_.string(); }

 private:
  std::filesystem::path dir_;
};

// OpenAI-style chat-completion client. One wire contract for every provider;
// differences live in configuration.
class HttpLlmBackend : public LlmBackend {
 public:
  HttpLlmBackend(std::string base_url, std::string token_env_var);

  std::string complete(const CompletionRequest& request) override;
  std::string id() const override { return "http:" + base_url_; }

 private:
  std::string base_url_;
  std::string token_env_var_;
};

enum class LlmRole { extract, reason, response, judge };

struct RoleModels {
  std::string extract = "default-extract";
  std::string reason = "default-reason";
  std::string response = "default-response";
  std::string judge = "default-judge";

  const std::string& for_role(LlmRole role) const;
};

struct GatewayConfig {
  std::shared_ptr<LlmBackend> backend;
  int retry_limit = 2;
  RoleModels models;
};

struct CallRecord {
  std::string model;
  double temperature = 0.0;
  int retries = 0;
  bool ok = false;
};

// Single boundary to all language-model calls.
class LlmGateway {
 public:
  explicit LlmGateway(GatewayConfig config);

  // Role-appropriate request: judge decodes deterministically (0.0), answer
  // generation samples at 0.7.
  CompletionRequest request_for_role(LlmRole role, std::optional<std::string> system_prompt,
                                     std::string user_prompt) const;

  std::string complete(const CompletionRequest& request);

  // Parses the reply as JSON (code fences and surrounding prose stripped) and
  // verifies the required top-level keys; re-prompts with a "valid JSON only"
  // instruction up to retry_limit before giving up.
  nlohmann::json complete_structured(const CompletionRequest& request,
                                     const std::vector<std::string>& required_top_level_keys);

  std::vector<CallRecord> call_log() const;
  const GatewayConfig& config() const { return config_; }

 private:
  GatewayConfig config_;
  mutable std::mutex log_mutex_;
  std::vector<CallRecord> log_;
};

// Best-effort JSON extraction from model text: whole string, then fenced
// block, then first balanced {...}/[...] span.
std::optional<nlohmann::json> extract_json(const std::string& text);

double temperature_for_role(LlmRole role);

}  // namespace epimem
