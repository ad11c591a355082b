#include "epimem/gateway.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>

namespace epimem {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

MockLlmBackend::MockLlmBackend(std::filesystem::path fixture_dir) : dir_(std::move(fixture_dir)) {
  if (!std::filesystem::is_directory(dir_))
    throw ConfigError("mock fixture directory does not exist: " + dir_.string());
}

std::string MockLlmBackend::fixture_key(const CompletionRequest& request) {
  std::string material = request.model_name;
  material.push_back('\x1f');
  material += request.system_prompt.value_or("");
  material.push_back('\x1f');
  material += request.user_prompt;
  return hex64(fnv1a64(material));
}

void MockLlmBackend::write_fixture(const std::filesystem::path& dir,
                                   const CompletionRequest& request, const std::string& reply,
                                   const std::string& label) {
  std::filesystem::create_directories(dir);
  const std::string key = fixture_key(request);
  const auto file = dir / (key + ".txt");
  const bool fresh = !std::filesystem::exists(file);
  {
    std::ofstream out(file, std::ios::binary);
    out << reply;
  }
  if (fresh) {
    std::ofstream index(dir / "index.txt", std::ios::app);
    index << key << "\t" << request.model_name << "\t" << label << "\n";
  }
}

std::string MockLlmBackend::complete(const CompletionRequest& request) {
  const auto file = dir_ / (fixture_key(request) + ".txt");
  if (!std::filesystem::exists(file))
    throw FixtureMissing("no fixture " + file.string() + " for model '" + request.model_name +
                         "' (prompt starts: " + request.user_prompt.substr(0, 60) + "...)");
  return read_file(file);
}

HttpLlmBackend::HttpLlmBackend(std::string base_url, std::string token_env_var)
    : base_url_(std::move(base_url)), token_env_var_(std::move(token_env_var)) {}

std::string HttpLlmBackend::complete(const CompletionRequest& request) {
  httplib::Client client(base_url_);
  client.set_read_timeout(120, 0);
  httplib::Headers headers;
  if (const char* token = std::getenv(token_env_var_.c_str()); token && *token)
    headers.emplace("Authorization", std::string("Bearer ") + token);

  nlohmann::json messages = nlohmann::json::array();
  if (request.system_prompt)
    messages.push_back({{"role", "system"}, {"content", *request.system_prompt}});
  messages.push_back({{"role", "user"}, {"content", request.user_prompt}});
  nlohmann::json body = {{"model", request.model_name},
                         {"messages", messages},
                         {"temperature", request.temperature},
                         {"max_tokens", request.max_output_tokens}};

  auto res = client.Post("/v1/chat/completions", headers, body.dump(), "application/json");
  if (!res)
    throw GatewayUnavailable("no response from " + base_url_ + ": " +
                             httplib::to_string(res.error()));
  if (res->status != 200)
    throw GatewayUnavailable("HTTP " + std::to_string(res->status) + " from " + base_url_ + ": " +
                             res->body.substr(0, 200));
  auto parsed = nlohmann::json::parse(res->body, nullptr, false);
  if (parsed.is_discarded() || !parsed.contains("choices") || parsed["choices"].empty())
    throw GatewayUnavailable("malformed chat-completion response from " + base_url_);
  return parsed["choices"][0]["message"]["content"].get<std::string>();
}

const std::string& RoleModels::for_role(LlmRole role) const {
  switch (role) {
    case LlmRole::extract: return extract;
    case LlmRole::reason: return reason;
    case LlmRole::response: return response;
    case LlmRole::judge: return judge;
  }
  return response;
}

double temperature_for_role(LlmRole role) {
  switch (role) {
    case LlmRole::response: return 0.7;
    case LlmRole::judge: return 0.0;
    case LlmRole::extract:
    case LlmRole::reason: return 0.0;
  }
  return 0.0;
}

LlmGateway::LlmGateway(GatewayConfig config) : config_(std::move(config)) {
  if (!config_.backend) throw ConfigError("gateway has no backend");
  if (config_.retry_limit < 0) throw ConfigError("retry_limit must be >= 0");
}

CompletionRequest LlmGateway::request_for_role(LlmRole role,
                                               std::optional<std::string> system_prompt,
                                               std::string user_prompt) const {
  CompletionRequest request;
  request.model_name = config_.models.for_role(role);
  request.system_prompt = std::move(system_prompt);
  request.user_prompt = std::move(user_prompt);
  request.temperature = temperature_for_role(role);
  return request;
}

std::string LlmGateway::complete(const CompletionRequest& request) {
  if (request.user_prompt.empty()) throw ConfigError("completion request with empty user prompt");
  CallRecord record{request.model_name, request.temperature, 0, false};
  for (int attempt = 0;; ++attempt) {
    try {
      std::string reply = config_.backend->complete(request);
      record.retries = attempt;
      record.ok = true;
      std::lock_guard<std::mutex> lock(log_mutex_);
      log_.push_back(record);
      return reply;
    } catch (const FixtureMissing&) {
      // Deterministic miss; retrying cannot help.
      std::lock_guard<std::mutex> lock(log_mutex_);
      record.retries = attempt;
      log_.push_back(record);
      throw;
    } catch (const GatewayError&) {
      if (attempt >= config_.retry_limit) {
        std::lock_guard<std::mutex> lock(log_mutex_);
        record.retries = attempt;
        log_.push_back(record);
        throw;
      }
    }
  }
}

std::optional<nlohmann::json> extract_json(const std::string& text) {
  auto try_parse = [](std::string_view s) -> std::optional<nlohmann::json> {
    auto parsed = nlohmann::json::parse(s, nullptr, false);
    if (parsed.is_discarded()) return std::nullopt;
    return parsed;
  };

  if (auto whole = try_parse(text)) return whole;

  // Fenced block: ```json ... ``` or plain ``` ... ```.
  if (auto fence = text.find("```"); fence != std::string::npos) {
    auto start = text.find('\n', fence);
    auto close = text.find("```", fence + 3);
    if (start != std::string::npos && close != std::string::npos && start < close) {
      if (auto fenced = try_parse(std::string_view(text).substr(start + 1, close - start - 1)))
        return fenced;
    }
  }

  // First balanced object/array, tolerating surrounding prose.
  auto open = text.find_first_of("{[");
  if (open == std::string::npos) return std::nullopt;
  const char open_ch = text[open], close_ch = open_ch == '{' ? '}' : ']';
  int depth = 0;
  bool in_string = false, escaped = false;
  for (size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped)
        escaped = false;
      else if (c == '\\')
        escaped = true;
      else if (c == '"')
        in_string = false;
      continue;
    }
    if (c == '"')
      in_string = true;
    else if (c == open_ch)
      ++depth;
    else if (c == close_ch) {
      if (--depth == 0) return try_parse(std::string_view(text).substr(open, i - open + 1));
    }
  }
  return std::nullopt;
}

nlohmann::json LlmGateway::complete_structured(
    const CompletionRequest& request, const std::vector<std::string>& required_top_level_keys) {
  CompletionRequest attempt_request = request;
  std::string last_raw;
  for (int attempt = 0; attempt <= config_.retry_limit; ++attempt) {
    if (attempt > 0)
      attempt_request.user_prompt =
          request.user_prompt +
          "\n\nYour previous reply was not valid JSON. Return valid JSON only.";
    last_raw = complete(attempt_request);
    auto parsed = extract_json(last_raw);
    if (!parsed || !parsed->is_object()) continue;
    bool complete_keys = true;
    for (const auto& key : required_top_level_keys) {
      if (!parsed->contains(key)) {
        complete_keys = false;
        break;
      }
    }
    if (complete_keys) return *parsed;
  }
  throw StructuredOutputFailure("model output unparseable after " +
                                    std::to_string(config_.retry_limit) + " retries",
                                last_raw);
}

std::vector<CallRecord> LlmGateway::call_log() const {
  std::lock_guard<std::mutex> lock(log_mutex_);
  return log_;
}

}  // namespace epimem
