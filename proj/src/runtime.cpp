#include "skillloop/runtime.hpp"

#include "skillloop/error.hpp"
#include "skillloop/session_log.hpp"

namespace skillloop {

const char* phase_name(SessionPhase p) {
    switch (p) {
        case SessionPhase::Open: return "open";
        case SessionPhase::Ended: return "ended";
        case SessionPhase::Evolved: return "evolved";
    }
    return "open";
}

const char* evolution_mode_name(EvolutionMode m) { return m == EvolutionMode::Auto ? "auto" : "manual"; }

EvolutionMode parse_evolution_mode(const std::string& name) {
    if (name == "auto") return EvolutionMode::Auto;
    if (name == "manual") return EvolutionMode::Manual;
    throw Error(ErrorCode::InvalidArgument, "evolution mode must be 'auto' or 'manual', got '" + name + "'");
}

ProfileView profile_view(const Workspace& ws) { return {ws.user_profile(), ws.memory()}; }

SkillsView skills_view(const SkillStore& store) {
    SkillsView view;
    for (const auto& [name, skill] : store.skills()) view.emplace(name, skill.meta);
    return view;
}

namespace {

void emit(const EventSink& sink, std::string type, nlohmann::json data) {
    if (sink) sink(TurnEvent{std::move(type), std::move(data)});
}

std::uint64_t next_index(const History& h) { return h.empty() ? 0 : h.back().turn_index + 1; }

}  // namespace

ReactOutcome react_loop(const std::string& instructions, const History& history, const ToolRegistry& tools,
                        ChatProvider& chat, const ReactOptions& options) {
    ReactOutcome out;
    ToolContext scratch_ctx;
    ToolContext& ctx = options.context ? *options.context : scratch_ctx;
    std::uint64_t next = next_index(history);
    std::size_t max_steps = std::max<std::size_t>(1, options.max_steps);

    DeltaSink on_delta;
    if (options.events) {
        on_delta = [&](std::string_view text) { emit(options.events, "delta", {{"text", std::string(text)}}); };
    }

    for (std::size_t step = 0; step < max_steps; ++step) {
        ChatRequest req;
        req.purpose = options.purpose;
        req.tools = tools.schemas();
        req.messages.reserve(history.size() + out.messages.size() + 1);
        req.messages.push_back({Role::System, instructions, {}, std::nullopt, 0, {}});
        req.messages.insert(req.messages.end(), history.begin(), history.end());
        req.messages.insert(req.messages.end(), out.messages.begin(), out.messages.end());

        Message reply = chat.complete(req, on_delta);
        ++out.provider_calls;
        reply.role = Role::Assistant;
        reply.tool_call_id.reset();
        reply.turn_index = next++;
        for (std::size_t k = 0; k < reply.tool_calls.size(); ++k) {
            if (reply.tool_calls[k].id.empty()) {
                reply.tool_calls[k].id = "call_" + std::to_string(reply.turn_index) + "_" + std::to_string(k);
            }
        }
        auto calls = reply.tool_calls;
        out.messages.push_back(std::move(reply));
        if (calls.empty()) return out;

        for (const auto& call : calls) {
            emit(options.events, "tool_started", {{"tool", call.name}, {"call_id", call.id}});
            auto result = tools.invoke(call.name, call.arguments, ctx);
            Message tool_msg;
            tool_msg.role = Role::Tool;
            tool_msg.content = result.content;
            tool_msg.tool_call_id = call.id;
            tool_msg.turn_index = next++;
            tool_msg.key_data = result.key_data;
            out.messages.push_back(std::move(tool_msg));
            if (result.is_error) out.tool_errors.emplace_back(call.name, result.content);
            emit(options.events, "tool_finished",
                 {{"tool", call.name}, {"call_id", call.id}, {"is_error", result.is_error}});
        }
    }
    out.truncated = true;
    Message notice;
    notice.role = Role::Assistant;
    notice.turn_index = next++;
    notice.content = "[stopped after " + std::to_string(max_steps) + " reasoning steps without a final answer]";
    out.messages.push_back(std::move(notice));
    return out;
}

ReactOutcome delegate_to_sub_agent(const SessionState& state, const Skill& skill, RuntimeDeps& deps,
                                   ToolContext& ctx) {
    if (!skill.requires_sub_agent) {
        throw Error(ErrorCode::SubAgentConfigError, "skill '" + skill.name + "' does not declare a sub-agent");
    }
    auto allowed = deps.tools.subset(skill.sub_agent.tool_names);
    std::string instructions = skill.sub_agent.instructions;
    if (trim(instructions).empty()) instructions = format_skill_content(skill);

    ReactOptions opts;
    opts.max_steps = deps.config.max_steps;
    opts.purpose = ChatPurpose::SubAgent;
    opts.context = &ctx;
    opts.events = deps.events;
    auto scratch = react_loop(instructions, state.h, allowed, deps.chat, opts);

    ReactOutcome out;
    out.provider_calls = scratch.provider_calls;
    out.truncated = scratch.truncated;
    out.tool_errors = std::move(scratch.tool_errors);
    Message result = scratch.messages.back();
    result.turn_index = next_index(state.h);
    result.tool_calls.clear();
    out.messages.push_back(std::move(result));
    return out;
}

SessionState apply_transition(SessionState state, const TransitionInput& input, const ProfileView& current_profile,
                              const SkillsView& current_skills) {
    state.h.insert(state.h.end(), input.appended.begin(), input.appended.end());
    if (input.profile_tool_ran) state.u = current_profile;
    if (input.skill_mutation_ran) state.skills_view = current_skills;
    state.active_skill = input.active_skill;
    return state;
}

SessionState open_session(RuntimeDeps& deps, const std::string& session_id) {
    SessionState state;
    state.session_id = session_id;
    state.user_id = deps.workspace.user_id();
    state.u = profile_view(deps.workspace);
    state.skills_view = skills_view(deps.store);
    SessionLog(deps.workspace.session_log_path(session_id)).write_header(session_id, state.user_id);
    return state;
}

std::pair<SessionState, TurnResult> run_turn(SessionState state, const std::string& user_input, RuntimeDeps& deps) {
    if (state.phase != SessionPhase::Open) {
        throw Error(ErrorCode::IllegalPhase, "session " + state.session_id + " is " + phase_name(state.phase));
    }
    SessionLog log(deps.workspace.session_log_path(state.session_id));
    TurnResult result;
    ToolContext ctx{&deps.workspace, &deps.store};

    History working = state.h;
    auto append = [&](Message m) {
        log.write_message(m);
        result.messages_appended.push_back(m);
        working.push_back(std::move(m));
    };

    Message user;
    user.role = Role::User;
    user.content = user_input;
    user.turn_index = next_index(working);
    result.user_turn_index = user.turn_index;
    append(std::move(user));

    // (1) matching
    auto match = match_skill(user_input, deps.store, deps.config.matcher, deps.cache, deps.embed, &deps.chat);
    result.match = match.result;
    result.degraded = match.degraded;
    if (match.result) {
        emit(deps.events, "match_result",
             {{"skill", match.result->skill_name},
              {"stage", match_type_name(match.result->type)},
              {"confidence", match.result->confidence},
              {"degraded", match.degraded}});
    } else {
        emit(deps.events, "match_result",
             {{"skill", nullptr}, {"stage", nullptr}, {"confidence", nullptr}, {"degraded", match.degraded}});
    }
    const Skill* skill = match.result ? deps.store.find(match.result->skill_name) : nullptr;

    // (2) injection
    if (skill) {
        auto injected = inject_skill(working, *skill);
        for (auto it = injected.end() - 2; it != injected.end(); ++it) append(*it);
        result.skill_used = skill->name;
    }

    // (3) execution
    try {
        if (skill && skill->requires_sub_agent) {
            SessionState view = state;
            view.h = working;
            auto sub = delegate_to_sub_agent(view, *skill, deps, ctx);
            for (auto& m : sub.messages) append(std::move(m));
            result.tool_errors = std::move(sub.tool_errors);
        } else {
            auto instructions = build_instructions(deps.workspace, skill, deps.workspace.needs_initial_guidance());
            ReactOptions opts;
            opts.max_steps = deps.config.max_steps;
            opts.context = &ctx;
            opts.events = deps.events;
            auto react = react_loop(instructions, working, deps.tools, deps.chat, opts);
            for (auto& m : react.messages) append(std::move(m));
            result.tool_errors = std::move(react.tool_errors);
        }
    } catch (const Error& e) {
        result.provider_failed = true;
        Message notice;
        notice.role = Role::Assistant;
        notice.turn_index = next_index(working);
        notice.content = std::string("[error] ") + error_code_name(e.code()) + ": " + e.what();
        append(std::move(notice));
        emit(deps.events, "error", {{"code", error_code_name(e.code())}, {"message", e.what()}});
    }
    result.success = !result.provider_failed && result.tool_errors.empty();

    if (skill) {
        deps.store.record_usage(*result.skill_used, result.success);
        ctx.skills_changed = true;
    }

    TransitionInput tin;
    tin.appended.assign(working.begin() + static_cast<std::ptrdiff_t>(state.h.size()), working.end());
    tin.profile_tool_ran = ctx.profile_changed || ctx.memory_changed;
    tin.skill_mutation_ran = ctx.skills_changed;
    tin.active_skill = result.skill_used;
    state = apply_transition(std::move(state), tin, profile_view(deps.workspace), skills_view(deps.store));

    // (4) compression at the turn boundary
    if (should_compress(state.h, deps.config.budget, deps.estimator) &&
        compression_split(state.h, deps.config.budget) > 0) {
        try {
            auto compressed = compress_history(state.h, state.c, deps.config.budget, deps.chat, deps.estimator);
            log.write_compression(compressed.state, compressed.history.front());
            state.h = std::move(compressed.history);
            state.c = std::move(compressed.state);
            result.compressed = true;
            emit(deps.events, "compression",
                 {{"level", state.c.level},
                  {"assets", state.c.asset_index.size()},
                  {"retained_from", state.c.retained_from}});
        } catch (const Error& e) {
            result.compression_error = e.what();
            emit(deps.events, "error", {{"code", error_code_name(e.code())}, {"message", e.what()}});
        }
    }

    state.turns.push_back({result.user_turn_index, result.skill_used, result.success, result.success});
    log.write_turn(result.user_turn_index, result.skill_used, result.success, state.h, state.c.level);
    result.token_estimate = estimate_tokens(state.h, deps.estimator);
    emit(deps.events, "turn_summary",
         {{"turn_index", result.user_turn_index},
          {"skill_used", result.skill_used ? nlohmann::json(*result.skill_used) : nlohmann::json(nullptr)},
          {"success", result.success},
          {"token_estimate", result.token_estimate},
          {"compression_level", state.c.level}});
    return {std::move(state), std::move(result)};
}

SessionState apply_feedback(SessionState state, std::uint64_t user_turn_index, bool positive, RuntimeDeps& deps) {
    if (state.phase != SessionPhase::Open) {
        throw Error(ErrorCode::IllegalPhase, "feedback is accepted only while the session is open");
    }
    auto it = std::find_if(state.turns.begin(), state.turns.end(),
                           [&](const TurnRecord& t) { return t.user_turn_index == user_turn_index; });
    if (it == state.turns.end()) {
        throw Error(ErrorCode::TurnNotFound, "no turn " + std::to_string(user_turn_index));
    }
    if (!it->skill) throw Error(ErrorCode::TurnWithoutSkill, "turn " + std::to_string(user_turn_index) + " used no skill");
    if (it->success != positive) {
        deps.store.revise_usage(*it->skill, positive);
        it->success = positive;
        state.skills_view = skills_view(deps.store);
    }
    SessionLog(deps.workspace.session_log_path(state.session_id))
        .write_feedback(user_turn_index, *it->skill, positive, it->success);
    return state;
}

std::map<std::string, SkillTally> session_tallies(const SessionState& state) {
    std::map<std::string, SkillTally> out;
    for (const auto& t : state.turns) {
        if (!t.skill) continue;
        auto& tally = out[*t.skill];
        ++tally.uses;
        tally.successes += t.success;
    }
    return out;
}

SessionState end_session(SessionState state, RuntimeDeps& deps) {
    if (state.phase != SessionPhase::Open) {
        throw Error(ErrorCode::IllegalPhase, "session " + state.session_id + " is already " + phase_name(state.phase));
    }
    SessionLog(deps.workspace.session_log_path(state.session_id))
        .write_end(state.h, state.c.level, session_tallies(state), evolution_mode_name(deps.config.evolution_mode));
    state.phase = SessionPhase::Ended;
    if (deps.config.evolution_mode == EvolutionMode::Auto && deps.scheduler) {
        deps.scheduler->schedule(state.user_id, state.session_id);
    }
    return state;
}

}  // namespace skillloop
