#pragma once

#include "skillkit/common.hpp"
#include "skillkit/compiler.hpp"
#include "skillkit/orchestrator.hpp"
#include "skillkit/policy.hpp"
#include "skillkit/sim_device.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace skillkit {

enum class Severity { None, Minor, Moderate, Major };

std::string to_string(Severity s);

struct DeviationReport {
    Severity severity = Severity::None;
    std::string detail;
};

struct ReplayBudget {
    int b_consec = 2;
    int b_total = 5;
};

enum class ReplayStatus { Completed, FellBack, Aborted };

std::string to_string(ReplayStatus s);

struct ReplayOutcome {
    ReplayStatus status = ReplayStatus::Completed;
    std::vector<TrajectoryStep> executed_steps;
    std::vector<int> skipped_step_indices;
    int fallback_calls = 0;
    int policy_calls = 0;
    bool verified = false;      // checker result after COMPLETED
    std::string checker_message;
    std::optional<int> failed_step;       // skeleton index where replay stopped
    std::optional<Severity> failed_severity;
};

inline constexpr double kTauStrict = 0.5;
inline constexpr double kTauRelaxed = 0.3;
inline constexpr int kSkipLookahead = 3;

// Feature weights (x100). Scoring sums integers and divides once, so equal
// fractions compare exactly.
inline constexpr int kWeightScale = 100;
inline constexpr std::array<int, 6> kFeatureWeights = {40, 20, 15, 10, 10, 5};
// order: resource_id, text, content_desc, class_name, parent_class, sibling_index

extern const std::vector<std::string> kDismissKeywords;

using Bindings = std::map<std::string, std::string>;

std::string substitute_bindings(const std::string& s, const Bindings& bindings);

// Weighted feature score in [0,1]: exact equality for resource_id and
// class_name, substring containment for text/content_desc, equality for
// parent class and sibling index. Placeholders in locator.text are
// substituted from `bindings` before matching.
double score_element(const UINode& element, const ElementLocator& locator,
                     const Bindings& bindings = {});

// Best-scoring flattened element at or above tau; ties to the lowest BFS
// index. Returns (element index, score).
std::optional<std::pair<int, double>> find_element(const UITree& tree,
                                                   const ElementLocator& locator, double tau,
                                                   const Bindings& bindings = {});

DeviationReport verify_state(const UITree& tree, const UIStateDescriptor& expected,
                             const std::string& target_app);

// Scans dialog nodes for dismiss-like button text (word-boundary matched)
// and taps the first hit. Zero policy calls.
bool try_dismiss(SimDevice& device, const UITree& tree,
                 const std::vector<std::string>& keywords = kDismissKeywords);

// Speculative skeleton replay with graduated deviation handling, step
// skipping, and budgeted step-level policy fallback.
ReplayOutcome replay(SimDevice& device, PolicyHandle& policy, const SkillTemplate& skill,
                     const Bindings& bindings, const std::string& task_id,
                     const std::map<std::string, std::string>& expected,
                     const ReplayBudget& budget = ReplayBudget{},
                     std::vector<json>* trace = nullptr);

} // namespace skillkit
