#pragma once

#include "skillkit/common.hpp"
#include "skillkit/ui_model.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace skillkit {

enum class ActionKind { Tap, Input, Scroll, Back, Launch, Done, Fail };

std::string to_string(ActionKind kind);
ActionKind action_kind_from_string(const std::string& s);

struct Action {
    ActionKind kind = ActionKind::Fail;
    std::optional<int> element_index;
    std::optional<std::string> payload;
};

void to_json(json& j, const Action& a);
void from_json(const json& j, Action& a);

enum class ApplyResult { Changed, Unchanged, Rejected };

enum class PerturbationKind { ChooserDialog, ClearAppData, RevokePermission };

struct Perturbation {
    PerturbationKind kind = PerturbationKind::ChooserDialog;
    std::string target_app;
};

void to_json(json& j, const Perturbation& p);
void from_json(const json& j, Perturbation& p);

enum class CheckResult { Verified, NotSatisfied, CheckError };

std::string to_string(CheckResult r);

struct CheckOutcome {
    CheckResult result = CheckResult::CheckError;
    std::string message;
};

inline constexpr const char* kHomeApp = "home";

// --- declarative scenario model -------------------------------------------

struct EffectSpec {
    std::string op;    // set | set_payload | set_from | append | append_payload | append_from | clear
    std::string key;
    std::string value; // literal (set/append)
    std::string from;  // source state key (set_from/append_from)
};

struct ActionPattern {
    ActionKind kind = ActionKind::Tap;
    std::optional<std::string> resource_id;
    std::optional<std::string> text;
};

struct TransitionSpec {
    ActionPattern on;
    std::optional<std::string> to;
    std::vector<EffectSpec> effects;
};

struct NodeTemplate {
    UINode base;
    std::optional<std::string> text_from_state;
    bool dismiss = false;               // dialog buttons: tapping clears the dialog
    std::vector<EffectSpec> effects;    // dialog buttons: applied on tap
    std::vector<NodeTemplate> children;
    bool has_bounds = false;
};

struct DialogSpec {
    std::string id;
    std::vector<NodeTemplate> nodes;
};

struct ScreenSpec {
    std::string id;
    std::vector<NodeTemplate> nodes;
    std::vector<TransitionSpec> transitions;
};

struct CheckerSpec {
    std::string task_id;
    std::string state_key;
    std::string comparator; // contains | equals | equals_literal | nonempty
    std::string expect;     // binding key (contains/equals)
    std::string value;      // literal (equals_literal)
};

struct SimApp {
    std::string app_id;
    std::string display_name;
    std::string initial_screen;
    json initial_state = json::object();
    std::map<std::string, ScreenSpec> screens;
    std::map<std::string, DialogSpec> dialogs;
    std::vector<CheckerSpec> checkers;

    // runtime
    json state = json::object();
    std::vector<std::string> screen_stack;
    bool permission_dialog_armed = false;
};

// Deterministic finite-state mobile device. Single-threaded mutable state;
// one device per episode.
class SimDevice {
public:
    SimDevice() = default;
    explicit SimDevice(unsigned seed) : rng_seed_(seed) {}

    static SimDevice from_scenario_dir(const std::string& dir, unsigned seed = 0);

    void add_app(const json& scenario);

    // Restores the pristine scenario state: home foreground, no dialogs,
    // every app back on its initial screen with initial state.
    void reset();

    UITree capture();
    ApplyResult apply(const Action& action);
    void inject(const Perturbation& p);
    CheckOutcome run_checker(const std::string& task_id,
                             const std::map<std::string, std::string>& expected) const;

    // Setup hook for round pre-state (op: set | append | clear).
    void mutate_state(const std::string& app_id, const std::string& op,
                      const std::string& key, const std::string& value);

    bool has_app(const std::string& app_id) const { return apps_.count(app_id) > 0; }
    const std::string& foreground() const { return foreground_; }
    const std::string& current_screen(const std::string& app_id) const;
    const json& app_state(const std::string& app_id) const;
    unsigned rng_seed() const { return rng_seed_; }

private:
    struct PendingDialog {
        std::string app_id; // app whose state dialog effects touch
        DialogSpec spec;
    };

    SimApp& require_app(const std::string& app_id);
    const SimApp& require_app(const std::string& app_id) const;
    UITree render() const;
    ApplyResult apply_transition_effects(SimApp& app, const std::vector<EffectSpec>& effects,
                                         const std::optional<std::string>& payload);
    const NodeTemplate* dialog_template_for(const UINode& node) const;

    std::map<std::string, SimApp> apps_;
    std::string foreground_ = kHomeApp;
    std::optional<PendingDialog> pending_dialog_;
    unsigned rng_seed_ = 0;
};

} // namespace skillkit
