#include "skillkit/harness.hpp"

#include "skillkit/compiler.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace skillkit {

void from_json(const json& j, RoundSpec& r) {
    r.phase = j.value("phase", "P1");
    r.task_id = j.at("task_id").get<std::string>();
    r.app = j.at("app").get<std::string>();
    r.instruction = j.at("instruction").get<std::string>();
    r.variation = j.value("variation", "C");
    if (r.variation != "C" && r.variation != "L" && r.variation != "M" && r.variation != "H") {
        throw Error("bad-plan", "variation must be one of C, L, M, H");
    }
    r.perturbation.reset();
    if (auto it = j.find("perturbation"); it != j.end() && !it->is_null()) {
        r.perturbation = it->get<Perturbation>();
    }
    r.setup.clear();
    if (auto it = j.find("setup"); it != j.end()) {
        for (const json& s : *it) {
            r.setup.push_back(SetupMutation{s.at("app").get<std::string>(),
                                            s.value("op", "set"), s.at("key").get<std::string>(),
                                            s.value("value", "")});
        }
    }
    r.expected.clear();
    if (auto it = j.find("expected"); it != j.end()) {
        for (const auto& [key, value] : it->items()) {
            r.expected[key] = value.get<std::string>();
        }
    }
}

std::string to_string(PathClass p) {
    switch (p) {
    case PathClass::L2Pure: return "L2_PURE";
    case PathClass::L2Semantic: return "L2_SEMANTIC";
    case PathClass::L2StepFallback: return "L2_STEP_FALLBACK";
    case PathClass::L2ToL1: return "L2_TO_L1";
    case PathClass::L1Fresh: return "L1_FRESH";
    }
    return "L1_FRESH";
}

PathClass classify_path(MatchKind match_kind, MatchStrategy strategy, bool forced_fresh,
                        const std::optional<ReplayStatus>& replay_status, int fallback_calls) {
    if (match_kind != MatchKind::Full || forced_fresh || !replay_status) {
        return PathClass::L1Fresh;
    }
    if (*replay_status != ReplayStatus::Completed) {
        return PathClass::L2ToL1;
    }
    if (fallback_calls > 0) {
        return PathClass::L2StepFallback;
    }
    if (strategy == MatchStrategy::Embedding) {
        return PathClass::L2Semantic;
    }
    return PathClass::L2Pure;
}

Plan load_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("bad-plan-file", path);
    }
    json doc = json::parse(in);
    Plan plan;
    plan.keywords = KeywordDict::from_json(doc.value("keywords", json::object()));
    for (const json& r : doc.at("rounds")) {
        plan.rounds.push_back(r.get<RoundSpec>());
    }
    return plan;
}

std::string AgentController::unique_new_skill_id(const std::string& base) const {
    if (!store_.has_skill(base)) {
        return base;
    }
    for (int i = 2;; ++i) {
        std::string candidate = base + "_r" + std::to_string(i);
        if (!store_.has_skill(candidate)) {
            return candidate;
        }
    }
}

void AgentController::store_compiled(SkillTemplate tpl) {
    store_.store_skill(tpl);
    store_.put_embedding(tpl.skill_id, provider_.id(), provider_.dimension(),
                         provider_.embed(strip_placeholders(tpl.intent_pattern)));
}

RoundResult AgentController::run_round(const RoundSpec& spec, json* round_log) {
    RoundResult result;
    result.phase = spec.phase;
    result.task_id = spec.task_id;
    result.variation = spec.variation;

    PolicyHandle handle(policy_);
    std::vector<json> episode_trace;
    std::vector<json> replay_trace;
    std::optional<ReplayStatus> replay_status;
    bool forced_fresh = false;
    std::string forced_reason;
    int replay_fallbacks = 0;
    MatchResult match;

    try {
        device_.reset();
        for (const SetupMutation& m : spec.setup) {
            device_.mutate_state(m.app, m.op, m.key, m.value);
        }
        if (spec.perturbation) {
            device_.inject(*spec.perturbation);
        }

        std::vector<SkillTemplate> skills = store_.list_skills();
        EmbeddingCache cache;
        for (const SkillTemplate& s : skills) {
            if (auto vec = store_.get_embedding(s.skill_id, provider_.id(), provider_.dimension())) {
                cache[s.skill_id] = std::move(*vec);
            }
        }
        match = match_instruction(spec.instruction, skills, provider_, handle, keywords_,
                                  store_.success_order(), &cache);
        result.match_kind = match.kind;
        result.strategy = match.strategy;

        if (match.kind == MatchKind::Full) {
            SkillTemplate skill = store_.load_skill(*match.skill_id);

            if (skill.needs_recompile &&
                store_.request_recompile(skill.skill_id) == RecompileDecision::Recompile) {
                forced_fresh = true;
                forced_reason = "recompile";
            }
            if (!forced_fresh) {
                UITree pre = device_.capture();
                for (const GuardCondition& guard : store_.guards_for(skill.skill_id)) {
                    if (!guard_holds(guard, pre, skill.target_app)) {
                        forced_fresh = true;
                        forced_reason = "guard";
                        break;
                    }
                }
            }

            if (!forced_fresh) {
                Bindings bindings(match.bindings.begin(), match.bindings.end());
                ReplayOutcome outcome =
                    replay(device_, handle, skill, bindings, spec.task_id, spec.expected,
                           replay_budget, &replay_trace);
                replay_status = outcome.status;
                replay_fallbacks = outcome.fallback_calls;
                result.skipped_steps = static_cast<int>(outcome.skipped_step_indices.size());

                if (outcome.status == ReplayStatus::Completed) {
                    result.success = outcome.verified;
                    std::optional<FailureRecord> failure;
                    if (!outcome.verified) {
                        // Post-completion checker failure counts against the
                        // skill, recorded with the end-of-skeleton marker.
                        FailureRecord f;
                        f.skill_id = skill.skill_id;
                        f.version = skill.version;
                        f.step_index = static_cast<int>(skill.steps.size());
                        f.severity = Severity::None;
                        f.descriptor_at_failure = make_descriptor(device_.capture());
                        f.recovered = false;
                        failure = f;
                    }
                    store_.record_outcome(skill.skill_id, skill.version, outcome.verified,
                                          failure);
                    if (failure) {
                        store_.synthesize_guards(skill.skill_id);
                    }
                } else {
                    // Full fallback to fresh execution, carrying what replay
                    // already completed.
                    PriorContext prior{outcome.executed_steps, skill.skill_id};
                    ExecuteResult exec =
                        execute(device_, handle, spec.instruction, spec.task_id, spec.expected,
                                spec.app, prior, loop_budget, &episode_trace);
                    bool recovered = exec.outcome == ExecOutcome::Success;
                    result.success = recovered;

                    FailureRecord f;
                    f.skill_id = skill.skill_id;
                    f.version = skill.version;
                    f.step_index = outcome.failed_step.value_or(0);
                    f.severity = outcome.failed_severity.value_or(Severity::None);
                    f.descriptor_at_failure = make_descriptor(device_.capture());
                    f.recovered = recovered;
                    store_.record_outcome(skill.skill_id, skill.version, false, f);
                    store_.synthesize_guards(skill.skill_id);

                    if (recovered) {
                        // The recovery trajectory becomes a new skill; the
                        // original stays untouched apart from its counters.
                        try {
                            SkillTemplate fresh = compile(handle, exec.trajectory);
                            fresh.skill_id = unique_new_skill_id(fresh.skill_id);
                            store_compiled(fresh);
                        } catch (const Error&) {
                            // compilation trouble never blocks the round
                        }
                    }
                }
            } else {
                ExecuteResult exec = execute(device_, handle, spec.instruction, spec.task_id,
                                             spec.expected, spec.app, std::nullopt, loop_budget,
                                             &episode_trace);
                result.success = exec.outcome == ExecOutcome::Success;
                if (result.success && forced_reason == "recompile") {
                    try {
                        SkillTemplate fresh = compile(handle, exec.trajectory);
                        store_.store_recompiled(skill.skill_id, fresh);
                    } catch (const Error&) {
                    }
                }
            }
        } else {
            ExecuteResult exec = execute(device_, handle, spec.instruction, spec.task_id,
                                         spec.expected, spec.app, std::nullopt, loop_budget,
                                         &episode_trace);
            result.success = exec.outcome == ExecOutcome::Success;
            if (result.success) {
                try {
                    SkillTemplate fresh = compile(handle, exec.trajectory);
                    if (!store_.has_skill(fresh.skill_id)) {
                        store_compiled(fresh);
                    }
                } catch (const Error&) {
                }
            }
        }
    } catch (const Error&) {
        // A failed round must not abort the plan.
        result.success = false;
    }

    result.policy_calls = handle.counter.total;
    result.path = classify_path(result.match_kind, result.strategy, forced_fresh, replay_status,
                                replay_fallbacks);

    if (round_log) {
        json rec{{"phase", spec.phase},
                 {"task_id", spec.task_id},
                 {"variation", spec.variation},
                 {"instruction", spec.instruction},
                 {"match", match},
                 {"path", to_string(result.path)},
                 {"success", result.success},
                 {"policy_calls", result.policy_calls},
                 {"skipped_steps", result.skipped_steps},
                 {"episode_trace", episode_trace},
                 {"replay_trace", replay_trace}};
        if (!forced_reason.empty()) {
            rec["forced_fresh"] = forced_reason;
        }
        *round_log = rec;
    }
    return result;
}

std::vector<RoundResult> AgentController::run_rounds(const std::vector<RoundSpec>& rounds,
                                                     std::vector<json>* round_log) {
    std::vector<RoundResult> results;
    int index = 0;
    for (const RoundSpec& spec : rounds) {
        if (index > 0 && restart_every > 0 && index % restart_every == 0 &&
            device_restart_hook) {
            device_restart_hook();
        }
        json rec;
        RoundResult r = run_round(spec, round_log ? &rec : nullptr);
        if (round_log) {
            rec["round"] = index;
            round_log->push_back(rec);
        }
        results.push_back(r);
        ++index;
    }
    return results;
}

MetricsReport compute_report(const std::vector<RoundResult>& results) {
    MetricsReport report;
    report.rounds = static_cast<int>(results.size());

    static const PathClass kAllPaths[] = {PathClass::L2Pure, PathClass::L2Semantic,
                                          PathClass::L2StepFallback, PathClass::L2ToL1,
                                          PathClass::L1Fresh};
    for (PathClass p : kAllPaths) {
        report.layer_distribution[to_string(p)] = 0;
    }

    int successes = 0;
    int total_calls = 0;
    int zero_calls = 0;
    int post_p1 = 0;
    int post_p1_full = 0;
    int l2_attempts = 0;
    int l2_to_l1 = 0;

    for (const RoundResult& r : results) {
        successes += r.success ? 1 : 0;
        total_calls += r.policy_calls;
        zero_calls += r.policy_calls == 0 ? 1 : 0;
        if (r.phase != "P1") {
            ++post_p1;
            post_p1_full += r.match_kind == MatchKind::Full ? 1 : 0;
        }
        if (r.path != PathClass::L1Fresh) {
            ++l2_attempts;
            l2_to_l1 += r.path == PathClass::L2ToL1 ? 1 : 0;
        }
        report.layer_distribution[to_string(r.path)] += 1;

        auto tally = [&](SliceMetrics& slice) {
            slice.rounds += 1;
            slice.successes += r.success ? 1 : 0;
            slice.total_policy_calls += r.policy_calls;
            slice.zero_call_rounds += r.policy_calls == 0 ? 1 : 0;
        };
        tally(report.per_phase[r.phase]);
        tally(report.per_variation[r.variation]);
        tally(report.per_path[to_string(r.path)]);
    }

    if (report.rounds > 0) {
        report.success_rate = static_cast<double>(successes) / report.rounds;
        report.mean_policy_calls = static_cast<double>(total_calls) / report.rounds;
        report.zero_llm_rate = static_cast<double>(zero_calls) / report.rounds;
    }
    int match_denominator = post_p1 > 0 ? post_p1 : report.rounds;
    int match_numerator = post_p1 > 0 ? post_p1_full : 0;
    if (post_p1 == 0) {
        for (const RoundResult& r : results) {
            match_numerator += r.match_kind == MatchKind::Full ? 1 : 0;
        }
    }
    if (match_denominator > 0) {
        report.match_rate = static_cast<double>(match_numerator) / match_denominator;
    }
    if (l2_attempts > 0) {
        report.fallback_rate = static_cast<double>(l2_to_l1) / l2_attempts;
    }
    return report;
}

namespace {

json slice_to_json(const SliceMetrics& s) {
    return json{{"rounds", s.rounds},
                {"success_rate", s.success_rate()},
                {"mean_policy_calls", s.mean_policy_calls()},
                {"zero_llm_rate", s.zero_llm_rate()}};
}

} // namespace

json report_to_json(const MetricsReport& report) {
    json j{{"rounds", report.rounds},
           {"success_rate", report.success_rate},
           {"mean_policy_calls", report.mean_policy_calls},
           {"zero_llm_rate", report.zero_llm_rate},
           {"match_rate", report.match_rate},
           {"fallback_rate", report.fallback_rate},
           {"layer_distribution", report.layer_distribution}};
    json phases = json::object();
    for (const auto& [phase, slice] : report.per_phase) {
        phases[phase] = slice_to_json(slice);
    }
    j["per_phase"] = phases;
    json variations = json::object();
    for (const auto& [variation, slice] : report.per_variation) {
        variations[variation] = slice_to_json(slice);
    }
    j["per_variation"] = variations;
    json paths = json::object();
    for (const auto& [path, slice] : report.per_path) {
        paths[path] = slice_to_json(slice);
    }
    j["per_path"] = paths;
    return j;
}

std::string report_table(const MetricsReport& report) {
    static const std::pair<const char*, const char*> kRows[] = {
        {"L2_PURE", "L2: pure replay"},
        {"L2_SEMANTIC", "L2 + semantic match"},
        {"L2_STEP_FALLBACK", "L2 + step-level fallback"},
        {"L2_TO_L1", "L2 -> L1 fallback"},
        {"L1_FRESH", "L1: fresh execution"},
    };
    char line[128];
    std::string out;
    out += "Execution path                n   success   mean calls\n";
    out += "-----------------------------------------------------\n";
    for (const auto& [key, label] : kRows) {
        SliceMetrics slice;
        if (auto it = report.per_path.find(key); it != report.per_path.end()) {
            slice = it->second;
        }
        std::snprintf(line, sizeof(line), "%-27s %4d   %6.1f%%   %8.2f\n", label, slice.rounds,
                      slice.success_rate() * 100.0, slice.mean_policy_calls());
        out += line;
    }
    out += "-----------------------------------------------------\n";
    std::snprintf(line, sizeof(line), "%-27s %4d   %6.1f%%   %8.2f\n", "All rounds", report.rounds,
                  report.success_rate * 100.0, report.mean_policy_calls);
    out += line;
    std::snprintf(line, sizeof(line),
                  "zero-LLM rate %.3f | match rate %.3f | fallback rate %.3f\n",
                  report.zero_llm_rate, report.match_rate, report.fallback_rate);
    out += line;
    return out;
}

} // namespace skillkit
