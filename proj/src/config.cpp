#include "skillloop/config.hpp"

#include "skillloop/error.hpp"
#include "skillloop/mock_provider.hpp"
#include "skillloop/util.hpp"

#include <cstdlib>
#include <fstream>

namespace skillloop {

namespace {

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
}

template <typename T>
T parse_number(const std::string& field, const std::string& text) {
    try {
        std::size_t pos = 0;
        T value;
        if constexpr (std::is_floating_point_v<T>) {
            value = static_cast<T>(std::stod(text, &pos));
        } else {
            value = static_cast<T>(std::stoull(text, &pos));
        }
        if (pos != text.size()) throw std::invalid_argument(text);
        return value;
    } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidArgument, field + ": not a number: '" + text + "'");
    }
}

ProviderSettings provider_from_json(const nlohmann::json& j, ProviderSettings p) {
    p.kind = j.value("kind", p.kind);
    p.base_url = j.value("base_url", p.base_url);
    p.model = j.value("model", p.model);
    p.api_key_env = j.value("api_key_env", p.api_key_env);
    p.transcript = j.value("transcript", p.transcript);
    p.dimension = j.value("dimension", p.dimension);
    return p;
}

nlohmann::json provider_to_json(const ProviderSettings& p) {
    return {{"kind", p.kind},
            {"base_url", p.base_url},
            {"model", p.model},
            {"api_key_env", p.api_key_env},
            {"transcript", p.transcript},
            {"dimension", p.dimension}};
}

EndpointSettings endpoint(const ProviderSettings& s) {
    EndpointSettings e;
    e.base_url = s.base_url;
    e.model = s.model;
    if (!s.api_key_env.empty()) e.api_key = env(s.api_key_env.c_str()).value_or("");
    return e;
}

}  // namespace

std::string ApiConfig::host() const {
    auto colon = bind_address.rfind(':');
    return colon == std::string::npos ? bind_address : bind_address.substr(0, colon);
}

int ApiConfig::port() const {
    auto colon = bind_address.rfind(':');
    if (colon == std::string::npos) return 8080;
    auto port = parse_number<unsigned>("bind_address", bind_address.substr(colon + 1));
    if (port > 65535) throw Error(ErrorCode::InvalidArgument, "bind_address port out of range");
    return static_cast<int>(port);
}

RuntimeConfig ApiConfig::runtime() const {
    RuntimeConfig rc;
    rc.matcher = matcher;
    rc.budget = budget;
    rc.max_steps = max_steps;
    rc.evolution_mode = evolution_mode;
    return rc;
}

EvolutionConfig ApiConfig::evolution() const {
    EvolutionConfig ec;
    ec.dedup_threshold = dedup_threshold;
    ec.suggestion_threshold = suggestion_threshold;
    ec.weights = weights;
    ec.delta_scale_chars = delta_scale_chars;
    ec.max_review_steps = max_steps;
    return ec;
}

void validate_config(const ApiConfig& c) {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidArgument, msg); };
    if (!(c.matcher.theta >= 0.0 && c.matcher.theta <= 1.0)) fail("matcher.theta must be in [0,1]");
    if (c.budget.max_tokens < 1024) fail("budget.max_tokens must be >= 1024");
    if (c.budget.retain_recent == 0) fail("budget.retain_recent must be >= 1");
    if (c.max_steps == 0) fail("max_steps must be >= 1");
    if (!(c.gamma >= 0.0 && c.gamma <= 1.0)) fail("gamma must be in [0,1]");
    if (!(c.dedup_threshold >= -1.0 && c.dedup_threshold <= 1.0)) fail("dedup_threshold must be in [-1,1]");
    if (c.delta_scale_chars <= 0.0) fail("delta_scale_chars must be > 0");
    for (const auto* p : {&c.chat, &c.embedding}) {
        if (p->kind != "mock" && p->kind != "live") fail("provider kind must be mock or live");
        if (p->kind == "live" && p->base_url.empty()) fail("live provider needs base_url");
    }
    if (c.embedding.dimension == 0) fail("embedding.dimension must be >= 1");
    c.port();
}

ApiConfig config_from_json(const nlohmann::json& j) {
    ApiConfig c;
    c.bind_address = j.value("bind_address", c.bind_address);
    if (j.contains("data_root")) c.data_root = j["data_root"].get<std::string>();
    if (j.contains("default_skills_dir")) c.default_skills_dir = j["default_skills_dir"].get<std::string>();
    if (j.contains("console_dir")) c.console_dir = j["console_dir"].get<std::string>();
    if (j.contains("chat")) c.chat = provider_from_json(j["chat"], c.chat);
    if (j.contains("embedding")) c.embedding = provider_from_json(j["embedding"], c.embedding);
    if (j.contains("matcher")) {
        c.matcher.theta = j["matcher"].value("theta", c.matcher.theta);
        c.matcher.word_boundary = j["matcher"].value("word_boundary", c.matcher.word_boundary);
    }
    if (j.contains("budget")) {
        c.budget.max_tokens = j["budget"].value("max_tokens", c.budget.max_tokens);
        c.budget.retain_recent = j["budget"].value("retain_recent", c.budget.retain_recent);
    }
    c.max_steps = j.value("max_steps", c.max_steps);
    if (j.contains("evolution_mode")) c.evolution_mode = parse_evolution_mode(j["evolution_mode"].get<std::string>());
    if (j.contains("weights")) {
        c.weights.maturity = j["weights"].value("maturity", c.weights.maturity);
        c.weights.profile = j["weights"].value("profile", c.weights.profile);
        c.weights.memory = j["weights"].value("memory", c.weights.memory);
    }
    c.gamma = j.value("gamma", c.gamma);
    c.dedup_threshold = j.value("dedup_threshold", c.dedup_threshold);
    c.suggestion_threshold = j.value("suggestion_threshold", c.suggestion_threshold);
    c.delta_scale_chars = j.value("delta_scale_chars", c.delta_scale_chars);
    c.auth_token_env = j.value("auth_token_env", c.auth_token_env);
    c.evolution_workers = j.value("evolution_workers", c.evolution_workers);
    for (const auto& t : j.value("external_tools", nlohmann::json::array())) {
        ExternalToolConfig tool;
        tool.name = t.at("name").get<std::string>();
        tool.description = t.value("description", "");
        tool.url = t.at("url").get<std::string>();
        for (const auto& p : t.value("parameters", nlohmann::json::array())) {
            tool.parameters.push_back({p.at("name").get<std::string>(), p.value("type", "string"),
                                       p.value("required", true), p.value("description", "")});
        }
        c.external_tools.push_back(std::move(tool));
    }
    return c;
}

nlohmann::json to_json(const ApiConfig& c) {
    nlohmann::json j{{"bind_address", c.bind_address},
                     {"data_root", c.data_root.string()},
                     {"chat", provider_to_json(c.chat)},
                     {"embedding", provider_to_json(c.embedding)},
                     {"matcher", {{"theta", c.matcher.theta}, {"word_boundary", c.matcher.word_boundary}}},
                     {"budget", {{"max_tokens", c.budget.max_tokens}, {"retain_recent", c.budget.retain_recent}}},
                     {"max_steps", c.max_steps},
                     {"evolution_mode", evolution_mode_name(c.evolution_mode)},
                     {"weights",
                      {{"maturity", c.weights.maturity}, {"profile", c.weights.profile}, {"memory", c.weights.memory}}},
                     {"gamma", c.gamma},
                     {"dedup_threshold", c.dedup_threshold},
                     {"suggestion_threshold", c.suggestion_threshold},
                     {"delta_scale_chars", c.delta_scale_chars},
                     {"auth_token_env", c.auth_token_env},
                     {"evolution_workers", c.evolution_workers}};
    if (c.default_skills_dir) j["default_skills_dir"] = c.default_skills_dir->string();
    if (c.console_dir) j["console_dir"] = c.console_dir->string();
    auto tools = nlohmann::json::array();
    for (const auto& t : c.external_tools) {
        auto params = nlohmann::json::array();
        for (const auto& p : t.parameters) {
            params.push_back({{"name", p.name}, {"type", p.type}, {"required", p.required}, {"description", p.description}});
        }
        tools.push_back({{"name", t.name}, {"description", t.description}, {"url", t.url}, {"parameters", params}});
    }
    j["external_tools"] = tools;
    return j;
}

void apply_env_overrides(ApiConfig& c) {
    if (auto v = env("SKILLLOOP_BIND")) c.bind_address = *v;
    if (auto v = env("SKILLLOOP_DATA_ROOT")) c.data_root = *v;
    if (auto v = env("SKILLLOOP_DEFAULT_SKILLS")) c.default_skills_dir = *v;
    if (auto v = env("SKILLLOOP_PROVIDER")) c.chat.kind = c.embedding.kind = *v;
    if (auto v = env("SKILLLOOP_CHAT_BASE_URL")) c.chat.base_url = *v;
    if (auto v = env("SKILLLOOP_CHAT_MODEL")) c.chat.model = *v;
    if (auto v = env("SKILLLOOP_EMBED_BASE_URL")) c.embedding.base_url = *v;
    if (auto v = env("SKILLLOOP_EMBED_MODEL")) c.embedding.model = *v;
    if (auto v = env("SKILLLOOP_THETA")) c.matcher.theta = parse_number<double>("SKILLLOOP_THETA", *v);
    if (auto v = env("SKILLLOOP_MAX_TOKENS")) c.budget.max_tokens = parse_number<std::size_t>("SKILLLOOP_MAX_TOKENS", *v);
    if (auto v = env("SKILLLOOP_RETAIN_RECENT")) {
        c.budget.retain_recent = parse_number<std::size_t>("SKILLLOOP_RETAIN_RECENT", *v);
    }
    if (auto v = env("SKILLLOOP_EVOLUTION_MODE")) c.evolution_mode = parse_evolution_mode(*v);
    if (auto v = env("SKILLLOOP_GAMMA")) c.gamma = parse_number<double>("SKILLLOOP_GAMMA", *v);
}

ApiConfig load_config(const std::optional<std::filesystem::path>& path) {
    ApiConfig c;
    if (path) {
        std::ifstream in(*path);
        if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read config " + path->string());
        auto j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw Error(ErrorCode::InvalidArgument, "config " + path->string() + " is not a JSON object");
        }
        try {
            c = config_from_json(j);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::InvalidArgument, std::string("config: ") + e.what());
        }
        // Relative paths in the file resolve against the file's directory.
        auto base = path->parent_path();
        auto anchor = [&](std::filesystem::path& p) {
            if (p.is_relative()) p = base / p;
        };
        anchor(c.data_root);
        if (c.default_skills_dir) anchor(*c.default_skills_dir);
        if (c.console_dir) anchor(*c.console_dir);
        for (auto* p : {&c.chat, &c.embedding}) {
            if (!p->transcript.empty() && std::filesystem::path(p->transcript).is_relative()) {
                p->transcript = (base / p->transcript).string();
            }
        }
    }
    apply_env_overrides(c);
    validate_config(c);
    return c;
}

std::unique_ptr<ChatProvider> make_chat_provider(const ProviderSettings& s) {
    if (s.kind == "live") return std::make_unique<OpenAiChatProvider>(endpoint(s));
    auto mock = std::make_unique<MockChatProvider>();
    if (!s.transcript.empty()) mock->load_transcript(s.transcript);
    return mock;
}

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const ProviderSettings& s) {
    if (s.kind == "live") return std::make_unique<OpenAiEmbeddingProvider>(endpoint(s));
    auto mock = std::make_unique<MockEmbeddingProvider>(s.dimension);
    if (!s.transcript.empty()) mock->load_transcript(s.transcript);
    return mock;
}

ToolRegistry make_tool_registry(const ApiConfig& config) {
    ToolRegistry registry;
    register_builtin_tools(registry);
    for (const auto& t : config.external_tools) {
        ToolDefinition def{t.name, t.description, t.parameters, ToolEffect::ExternalCall};
        registry.add(std::move(def), http_tool_handler(t.url));
    }
    return registry;
}

}  // namespace skillloop
