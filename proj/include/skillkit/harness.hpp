#pragma once

#include "skillkit/common.hpp"
#include "skillkit/matcher.hpp"
#include "skillkit/orchestrator.hpp"
#include "skillkit/policy.hpp"
#include "skillkit/replayer.hpp"
#include "skillkit/sim_device.hpp"
#include "skillkit/store.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace skillkit {

struct SetupMutation {
    std::string app;
    std::string op; // set | append | clear
    std::string key;
    std::string value;
};

struct RoundSpec {
    std::string phase;
    std::string task_id;
    std::string app; // the task's target application
    std::string instruction;
    std::string variation; // C | L | M | H
    std::optional<Perturbation> perturbation;
    std::vector<SetupMutation> setup;
    std::map<std::string, std::string> expected; // checker bindings
};

void from_json(const json& j, RoundSpec& r);

enum class PathClass { L2Pure, L2Semantic, L2StepFallback, L2ToL1, L1Fresh };

std::string to_string(PathClass p);

struct RoundResult {
    std::string phase;
    std::string task_id;
    std::string variation;
    bool success = false;
    PathClass path = PathClass::L1Fresh;
    int policy_calls = 0;
    MatchKind match_kind = MatchKind::NoMatch;
    MatchStrategy strategy = MatchStrategy::None;
    int skipped_steps = 0;
};

// Pure function of the logged trace; re-classifying a stored trace is
// idempotent.
PathClass classify_path(MatchKind match_kind, MatchStrategy strategy, bool forced_fresh,
                        const std::optional<ReplayStatus>& replay_status, int fallback_calls);

struct SliceMetrics {
    int rounds = 0;
    int successes = 0;
    int total_policy_calls = 0;
    int zero_call_rounds = 0;

    double success_rate() const { return rounds ? static_cast<double>(successes) / rounds : 0.0; }
    double mean_policy_calls() const {
        return rounds ? static_cast<double>(total_policy_calls) / rounds : 0.0;
    }
    double zero_llm_rate() const {
        return rounds ? static_cast<double>(zero_call_rounds) / rounds : 0.0;
    }
};

struct MetricsReport {
    int rounds = 0;
    double success_rate = 0.0;
    double mean_policy_calls = 0.0;
    double zero_llm_rate = 0.0;
    double match_rate = 0.0;    // FULL matches among post-P1 rounds
    double fallback_rate = 0.0; // L2 attempts degrading to full L1
    std::map<std::string, SliceMetrics> per_phase;
    std::map<std::string, SliceMetrics> per_variation;
    std::map<std::string, SliceMetrics> per_path;
    std::map<std::string, int> layer_distribution;
};

MetricsReport compute_report(const std::vector<RoundResult>& results);
json report_to_json(const MetricsReport& report);
std::string report_table(const MetricsReport& report);

struct Plan {
    KeywordDict keywords;
    std::vector<RoundSpec> rounds;
};

Plan load_plan(const std::string& path);

// Wires the three layers together: match -> replay (with graduated
// fallback) or fresh execution -> compile -> record.
class AgentController {
public:
    AgentController(SimDevice& device, Policy& policy, SkillStore& store,
                    EmbeddingProvider& provider, KeywordDict keywords)
        : device_(device), policy_(policy), store_(store), provider_(provider),
          keywords_(std::move(keywords)) {}

    RoundResult run_round(const RoundSpec& spec, json* round_log = nullptr);
    std::vector<RoundResult> run_rounds(const std::vector<RoundSpec>& rounds,
                                        std::vector<json>* round_log = nullptr);

    LoopBudget loop_budget;
    ReplayBudget replay_budget;

    // Periodic device re-instantiation hook. A no-op for the simulator;
    // real backends restart their emulator here.
    std::function<void()> device_restart_hook;
    int restart_every = 30;

private:
    std::string unique_new_skill_id(const std::string& base) const;
    void store_compiled(SkillTemplate tpl);

    SimDevice& device_;
    Policy& policy_;
    SkillStore& store_;
    EmbeddingProvider& provider_;
    KeywordDict keywords_;
};

} // namespace skillkit
