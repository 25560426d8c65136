#pragma once

#include "skillkit/common.hpp"
#include "skillkit/orchestrator.hpp"
#include "skillkit/policy.hpp"
#include "skillkit/ui_model.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace skillkit {

struct Slot {
    std::string name;
    std::string slot_type; // text | time | phone | url
    std::string placeholder; // "{name}"
};

void to_json(json& j, const Slot& s);
void from_json(const json& j, Slot& s);

// Weighted element locator: up to six recorded feature signals. Weights are
// module constants, not per-locator state (see replayer::kFeatureWeights).
struct ElementLocator {
    std::optional<std::string> resource_id;
    std::optional<std::string> text;
    std::optional<std::string> content_desc;
    std::optional<std::string> class_name;
    std::optional<std::string> parent_class;
    std::optional<int> sibling_index;

    bool empty() const {
        return !resource_id && !text && !content_desc && !class_name && !parent_class &&
               !sibling_index;
    }
};

void to_json(json& j, const ElementLocator& l);
void from_json(const json& j, ElementLocator& l);

struct SkillStep {
    std::optional<ElementLocator> locator; // present iff TAP/INPUT
    UIStateDescriptor descriptor;
    ActionKind action_kind = ActionKind::Tap;
    std::optional<std::string> params; // may contain slot placeholders
};

void to_json(json& j, const SkillStep& s);
void from_json(const json& j, SkillStep& s);

inline constexpr int kMaxSkillVersions = 3;

struct SkillTemplate {
    std::string skill_id;
    std::string intent_pattern;
    std::vector<Slot> slots;
    std::vector<SkillStep> steps;
    std::string target_app;
    int version = 1;
    int n_succ = 0;
    int n_fail = 0;
    bool needs_recompile = false;
};

void to_json(json& j, const SkillTemplate& t);
void from_json(const json& j, SkillTemplate& t);

struct SlotExtraction {
    std::string intent_pattern;
    std::vector<Slot> slots;
    std::map<std::string, std::string> values; // slot name -> extraction-time value
};

// One SLOT_EXTRACT policy call; generalizes the instruction into an intent
// pattern. Throws Error("slot-mismatch") when a reported value occurs
// neither in the instruction nor in any step.
SlotExtraction extract_slots(PolicyHandle& policy, const Trajectory& trajectory);

// Copies the non-null recorded features. Throws Error("unlocatable-element")
// when every feature is null.
ElementLocator build_locator(const FeatureSnapshot& features);

// Full compilation of a verified trajectory into a replayable template.
// DONE steps are dropped from the skeleton; noise steps (permission
// dismissals, retries) are kept for replay-time step skipping to absorb.
SkillTemplate compile(PolicyHandle& policy, const Trajectory& trajectory);

std::string skill_id_from_pattern(const std::string& intent_pattern);

} // namespace skillkit
