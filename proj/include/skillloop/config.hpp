#pragma once

#include "skillloop/context_engine.hpp"
#include "skillloop/evolution.hpp"
#include "skillloop/live_provider.hpp"
#include "skillloop/matcher.hpp"
#include "skillloop/provider.hpp"
#include "skillloop/runtime.hpp"
#include "skillloop/tools.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace skillloop {

struct ProviderSettings {
    std::string kind = "mock";  // mock | live
    std::string base_url;
    std::string model;
    std::string api_key_env;    // name of the variable holding the credential
    std::string transcript;     // mock only: canned replies
    std::size_t dimension = 64; // mock embeddings
};

struct ExternalToolConfig {
    std::string name;
    std::string description;
    std::string url;
    std::vector<ToolParameter> parameters;
};

struct ApiConfig {
    std::string bind_address = "127.0.0.1:8080";
    std::filesystem::path data_root = "data/users";
    std::optional<std::filesystem::path> default_skills_dir;
    std::optional<std::filesystem::path> console_dir;
    ProviderSettings chat;
    ProviderSettings embedding;
    MatcherConfig matcher;
    ContextBudget budget;
    std::size_t max_steps = 8;
    EvolutionMode evolution_mode = EvolutionMode::Manual;
    RewardWeights weights;
    double gamma = 1.0;
    double dedup_threshold = 0.9;
    std::size_t suggestion_threshold = 2;
    double delta_scale_chars = 2000.0;
    std::string auth_token_env;  // empty: no authentication
    std::vector<ExternalToolConfig> external_tools;
    std::size_t evolution_workers = 1;

    std::string host() const;
    int port() const;
    RuntimeConfig runtime() const;
    EvolutionConfig evolution() const;
};

/// Throws InvalidArgument naming the offending field.
void validate_config(const ApiConfig& config);

ApiConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ApiConfig& config);

/// File values, then SKILLLOOP_* environment overrides, then validation.
/// A missing path yields defaults plus overrides.
ApiConfig load_config(const std::optional<std::filesystem::path>& path);
void apply_env_overrides(ApiConfig& config);

std::unique_ptr<ChatProvider> make_chat_provider(const ProviderSettings& settings);
std::unique_ptr<EmbeddingProvider> make_embedding_provider(const ProviderSettings& settings);
ToolRegistry make_tool_registry(const ApiConfig& config);

}  // namespace skillloop
