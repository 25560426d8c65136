#pragma once

#include "skillkit/common.hpp"
#include "skillkit/sim_device.hpp"
#include "skillkit/ui_model.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace skillkit {

enum class PolicyRole { StepDecide, SlotExtract, MatchConfirm, StepFallback };

std::string to_string(PolicyRole role);

struct PolicyRequest {
    PolicyRole role = PolicyRole::StepDecide;
    std::string instruction;
    UITree tree;
    std::vector<std::pair<Action, std::string>> history;
    // Checker failure message for STEP_DECIDE retries; for MATCH_CONFIRM this
    // carries the candidate skill's intent pattern.
    std::optional<std::string> feedback;
};

struct SlotBinding {
    std::string value;
    std::string type; // text | time | phone | url
};

struct PolicyResponse {
    Action action{ActionKind::Fail, std::nullopt, std::nullopt};
    std::string reasoning;
    std::optional<std::map<std::string, SlotBinding>> slot_bindings;
    std::optional<bool> confirm;
};

struct CallCounter {
    int total = 0;
    std::map<PolicyRole, int> by_role;
};

class Policy {
public:
    virtual ~Policy() = default;
    virtual PolicyResponse decide(const PolicyRequest& req) = 0;
};

// Episode-scoped pairing of a policy backend with the authoritative call
// counter. Every metric that counts policy usage goes through here.
struct PolicyHandle {
    explicit PolicyHandle(Policy& backend) : policy(&backend) {}

    PolicyResponse decide(const PolicyRequest& req);

    Policy* policy;
    CallCounter counter;
};

// Deterministic table-driven policy: first rule matching the request wins;
// no rule matching yields a FAIL action. Rules are a pure function of the
// request, so identical requests always produce identical responses.
//
// Rule fields: role, instruction_pattern (regex, captures usable as $1..$9
// in payloads / slot values / requires_node.text), screen_id,
// requires_node {resource_id|text}, history_len, feedback_pattern,
// response {action {kind, target {resource_id|text}, element_index,
// payload}, reasoning, slot_bindings, confirm}.
class ScriptedPolicy : public Policy {
public:
    static ScriptedPolicy from_file(const std::string& path);
    static ScriptedPolicy from_json(const json& rules);

    PolicyResponse decide(const PolicyRequest& req) override;

    struct SeenRequest {
        PolicyRole role;
        std::string instruction;
        std::optional<std::string> feedback;
    };
    const std::vector<SeenRequest>& seen() const { return seen_; }

private:
    struct Rule {
        PolicyRole role;
        std::string instruction_pattern;
        std::optional<std::string> screen_id;
        std::optional<int> history_len;
        std::optional<std::string> feedback_pattern;
        std::optional<std::string> requires_resource_id;
        std::optional<std::string> requires_text;
        json response;
    };

    std::vector<Rule> rules_;
    std::vector<SeenRequest> seen_;
};

} // namespace skillkit
