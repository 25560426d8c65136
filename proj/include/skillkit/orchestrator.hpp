#pragma once

#include "skillkit/common.hpp"
#include "skillkit/policy.hpp"
#include "skillkit/sim_device.hpp"
#include "skillkit/ui_model.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace skillkit {

// Feature snapshot of the node an action targeted, taken from the tree the
// policy saw (before the action was applied).
struct FeatureSnapshot {
    std::optional<std::string> resource_id;
    std::optional<std::string> text;
    std::optional<std::string> content_desc;
    std::string class_name;
    std::optional<std::string> parent_class;
    std::optional<int> sibling_index;
};

void to_json(json& j, const FeatureSnapshot& f);
void from_json(const json& j, FeatureSnapshot& f);

struct TrajectoryStep {
    Action action;
    std::optional<FeatureSnapshot> target_features; // present iff TAP/INPUT
    UITree tree_before;
    std::string reasoning;
    bool success = true;
};

void to_json(json& j, const TrajectoryStep& s);
void from_json(const json& j, TrajectoryStep& s);

struct Trajectory {
    std::string instruction;
    std::vector<TrajectoryStep> steps;
    bool verified = false;
    std::string target_app;
};

struct LoopBudget {
    int n_max = 20;
    int g_max = 3;
    int k_retry = 2;
    int checkpoint_start = 5;
    int checkpoint_every = 3;
};

struct PriorContext {
    std::vector<TrajectoryStep> completed_steps;
    std::string origin_skill;
};

enum class ExecOutcome { Success, FailStepLimit, FailPolicy, FailChecker };

std::string to_string(ExecOutcome o);

inline constexpr const char* kCheckerFeedbackPrefix = "Verification FAILED: ";
inline constexpr const char* kCheckerFeedbackSuffix =
    ". The task is NOT complete. Look at the current UI and try again.";
inline constexpr const char* kStaleScrollFeedback = "screen unchanged";

struct ExecuteResult {
    Trajectory trajectory;
    ExecOutcome outcome = ExecOutcome::FailPolicy;
};

// Layer-1 step loop: capture -> flatten -> decide -> apply -> record, with
// the app guardrail, stale-scroll feedback, periodic checker checkpoints,
// and checker-gated DONE handling. `expected` parameterizes the task's
// ground-truth checker. Optional `trace` collects one record per step.
ExecuteResult execute(SimDevice& device, PolicyHandle& policy, const std::string& instruction,
                      const std::string& task_id,
                      const std::map<std::string, std::string>& expected,
                      const std::string& target_app,
                      const std::optional<PriorContext>& prior = std::nullopt,
                      const LoopBudget& budget = LoopBudget{},
                      std::vector<json>* trace = nullptr);

FeatureSnapshot snapshot_features(const UINode& node);

} // namespace skillkit
