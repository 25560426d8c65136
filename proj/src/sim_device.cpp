#include "skillkit/sim_device.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

namespace skillkit {

std::string to_string(ActionKind kind) {
    switch (kind) {
    case ActionKind::Tap: return "TAP";
    case ActionKind::Input: return "INPUT";
    case ActionKind::Scroll: return "SCROLL";
    case ActionKind::Back: return "BACK";
    case ActionKind::Launch: return "LAUNCH";
    case ActionKind::Done: return "DONE";
    case ActionKind::Fail: return "FAIL";
    }
    return "FAIL";
}

ActionKind action_kind_from_string(const std::string& s) {
    if (s == "TAP") return ActionKind::Tap;
    if (s == "INPUT") return ActionKind::Input;
    if (s == "SCROLL") return ActionKind::Scroll;
    if (s == "BACK") return ActionKind::Back;
    if (s == "LAUNCH") return ActionKind::Launch;
    if (s == "DONE") return ActionKind::Done;
    if (s == "FAIL") return ActionKind::Fail;
    throw Error("bad-action-kind", s);
}

void to_json(json& j, const Action& a) {
    j = json{{"kind", to_string(a.kind)}};
    if (a.element_index) {
        j["element_index"] = *a.element_index;
    }
    if (a.payload) {
        j["payload"] = *a.payload;
    }
}

void from_json(const json& j, Action& a) {
    a.kind = action_kind_from_string(j.at("kind").get<std::string>());
    a.element_index.reset();
    a.payload.reset();
    if (auto it = j.find("element_index"); it != j.end() && !it->is_null()) {
        a.element_index = it->get<int>();
    }
    if (auto it = j.find("payload"); it != j.end() && !it->is_null()) {
        a.payload = it->get<std::string>();
    }
}

namespace {

std::string to_string(PerturbationKind k) {
    switch (k) {
    case PerturbationKind::ChooserDialog: return "CHOOSER_DIALOG";
    case PerturbationKind::ClearAppData: return "CLEAR_APP_DATA";
    case PerturbationKind::RevokePermission: return "REVOKE_PERMISSION";
    }
    return "CHOOSER_DIALOG";
}

PerturbationKind perturbation_kind_from_string(const std::string& s) {
    if (s == "CHOOSER_DIALOG") return PerturbationKind::ChooserDialog;
    if (s == "CLEAR_APP_DATA") return PerturbationKind::ClearAppData;
    if (s == "REVOKE_PERMISSION") return PerturbationKind::RevokePermission;
    throw Error("bad-perturbation-kind", s);
}

} // namespace

void to_json(json& j, const Perturbation& p) {
    j = json{{"kind", to_string(p.kind)}, {"target_app", p.target_app}};
}

void from_json(const json& j, Perturbation& p) {
    p.kind = perturbation_kind_from_string(j.at("kind").get<std::string>());
    p.target_app = j.at("target_app").get<std::string>();
}

std::string to_string(CheckResult r) {
    switch (r) {
    case CheckResult::Verified: return "VERIFIED";
    case CheckResult::NotSatisfied: return "NOT_SATISFIED";
    case CheckResult::CheckError: return "CHECK_ERROR";
    }
    return "CHECK_ERROR";
}

// --- scenario parsing -------------------------------------------------------

namespace {

EffectSpec parse_effect(const json& j) {
    EffectSpec e;
    e.op = j.at("op").get<std::string>();
    e.key = j.value("key", "");
    e.value = j.value("value", "");
    e.from = j.value("from", "");
    return e;
}

NodeTemplate parse_node_template(const json& j) {
    NodeTemplate t;
    json base = j;
    base.erase("children");
    t.base = base.get<UINode>();
    t.has_bounds = j.contains("bounds");
    if (auto it = j.find("text_from_state"); it != j.end()) {
        t.text_from_state = it->get<std::string>();
    }
    t.dismiss = j.value("dismiss", false);
    if (auto it = j.find("effects"); it != j.end()) {
        for (const json& e : *it) {
            t.effects.push_back(parse_effect(e));
        }
    }
    if (auto it = j.find("children"); it != j.end()) {
        for (const json& c : *it) {
            t.children.push_back(parse_node_template(c));
        }
    }
    return t;
}

TransitionSpec parse_transition(const json& j) {
    TransitionSpec t;
    const json& on = j.at("on");
    t.on.kind = action_kind_from_string(on.at("kind").get<std::string>());
    if (auto it = on.find("resource_id"); it != on.end()) {
        t.on.resource_id = it->get<std::string>();
    }
    if (auto it = on.find("text"); it != on.end()) {
        t.on.text = it->get<std::string>();
    }
    if (auto it = j.find("to"); it != j.end() && !it->is_null()) {
        t.to = it->get<std::string>();
    }
    if (auto it = j.find("effects"); it != j.end()) {
        for (const json& e : *it) {
            t.effects.push_back(parse_effect(e));
        }
    }
    return t;
}

DialogSpec builtin_chooser() {
    DialogSpec d;
    d.id = "chooser";
    json nodes = json::array({
        json{{"resource_id", "chooser_title"}, {"text", "Open with"}, {"class_name", "TextView"}},
        json{{"resource_id", "btn_chooser_ok"}, {"text", "OK"}, {"class_name", "Button"},
             {"clickable", true}, {"dismiss", true}},
        json{{"resource_id", "btn_chooser_always"}, {"text", "Always"}, {"class_name", "Button"},
             {"clickable", true}},
    });
    for (const json& n : nodes) {
        d.nodes.push_back(parse_node_template(n));
    }
    return d;
}

DialogSpec builtin_permission() {
    DialogSpec d;
    d.id = "permission";
    json nodes = json::array({
        json{{"resource_id", "permission_title"}, {"text", "Allow access to your data?"},
             {"class_name", "TextView"}},
        json{{"resource_id", "btn_allow"}, {"text", "Allow"}, {"class_name", "Button"},
             {"clickable", true}, {"dismiss", true},
             {"effects", json::array({json{{"op", "set"}, {"key", "permission_granted"}, {"value", "on"}}})}},
        json{{"resource_id", "btn_deny"}, {"text", "Deny"}, {"class_name", "Button"},
             {"clickable", true}, {"dismiss", true}},
    });
    for (const json& n : nodes) {
        d.nodes.push_back(parse_node_template(n));
    }
    return d;
}

std::string state_to_text(const json& value) {
    if (value.is_string()) {
        return value.get<std::string>();
    }
    if (value.is_array()) {
        std::string out;
        for (const json& item : value) {
            if (!out.empty()) {
                out += ", ";
            }
            out += item.is_string() ? item.get<std::string>() : item.dump();
        }
        return out;
    }
    if (value.is_null()) {
        return "";
    }
    return value.dump();
}

void render_template(const NodeTemplate& tmpl, const json& state, UINode& parent, int& row) {
    UINode node = tmpl.base;
    node.children.clear();
    if (!tmpl.has_bounds) {
        node.bounds = Rect{8, row * 100 + 8, 712, row * 100 + 92};
    }
    ++row;
    if (tmpl.text_from_state) {
        std::string rendered = state_to_text(state.value(*tmpl.text_from_state, json()));
        std::string prefix = node.text.value_or("");
        node.text = prefix.empty() ? rendered : prefix + rendered;
    }
    for (const NodeTemplate& child : tmpl.children) {
        render_template(child, state, node, row);
    }
    parent.children.push_back(std::move(node));
}

bool node_matches_pattern(const UINode& node, const ActionPattern& pattern) {
    if (pattern.resource_id) {
        if (!node.resource_id || *node.resource_id != *pattern.resource_id) {
            return false;
        }
    }
    if (pattern.text) {
        if (!node.text || node.text->find(*pattern.text) == std::string::npos) {
            return false;
        }
    }
    return true;
}

} // namespace

void SimDevice::add_app(const json& scenario) {
    SimApp app;
    app.app_id = scenario.at("app_id").get<std::string>();
    app.display_name = scenario.value("display_name", app.app_id);
    app.initial_screen = scenario.at("initial_screen").get<std::string>();
    app.initial_state = scenario.value("initial_state", json::object());
    for (const auto& [screen_id, spec] : scenario.at("screens").items()) {
        ScreenSpec screen;
        screen.id = screen_id;
        for (const json& n : spec.value("nodes", json::array())) {
            screen.nodes.push_back(parse_node_template(n));
        }
        for (const json& t : spec.value("transitions", json::array())) {
            screen.transitions.push_back(parse_transition(t));
        }
        app.screens[screen_id] = std::move(screen);
    }
    if (auto it = scenario.find("dialogs"); it != scenario.end()) {
        for (const auto& [dialog_id, spec] : it->items()) {
            DialogSpec d;
            d.id = dialog_id;
            for (const json& n : spec.value("nodes", json::array())) {
                d.nodes.push_back(parse_node_template(n));
            }
            app.dialogs[dialog_id] = std::move(d);
        }
    }
    for (const json& c : scenario.value("checkers", json::array())) {
        CheckerSpec spec;
        spec.task_id = c.at("task_id").get<std::string>();
        spec.state_key = c.at("state_key").get<std::string>();
        spec.comparator = c.at("comparator").get<std::string>();
        spec.expect = c.value("expect", "");
        spec.value = c.value("value", "");
        app.checkers.push_back(std::move(spec));
    }
    for (const auto& [screen_id, screen] : app.screens) {
        for (const TransitionSpec& t : screen.transitions) {
            if (t.to && app.screens.find(*t.to) == app.screens.end()) {
                throw Error("bad-scenario",
                            app.app_id + ": transition from '" + screen_id +
                                "' targets unknown screen '" + *t.to + "'");
            }
        }
    }
    app.state = app.initial_state;
    app.screen_stack = {app.initial_screen};
    apps_[app.app_id] = std::move(app);
}

SimDevice SimDevice::from_scenario_dir(const std::string& dir, unsigned seed) {
    SimDevice device(seed);
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".json") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
        std::ifstream in(path);
        if (!in) {
            throw Error("bad-scenario", "cannot open " + path.string());
        }
        device.add_app(json::parse(in));
    }
    return device;
}

void SimDevice::reset() {
    foreground_ = kHomeApp;
    pending_dialog_.reset();
    for (auto& [id, app] : apps_) {
        app.state = app.initial_state;
        app.screen_stack = {app.initial_screen};
        app.permission_dialog_armed = false;
    }
}

SimApp& SimDevice::require_app(const std::string& app_id) {
    auto it = apps_.find(app_id);
    if (it == apps_.end()) {
        throw Error("no-such-app", app_id);
    }
    return it->second;
}

const SimApp& SimDevice::require_app(const std::string& app_id) const {
    auto it = apps_.find(app_id);
    if (it == apps_.end()) {
        throw Error("no-such-app", app_id);
    }
    return it->second;
}

const std::string& SimDevice::current_screen(const std::string& app_id) const {
    return require_app(app_id).screen_stack.back();
}

const json& SimDevice::app_state(const std::string& app_id) const {
    return require_app(app_id).state;
}

UITree SimDevice::render() const {
    UITree tree;
    tree.root.resource_id = "screen_root";
    tree.root.class_name = "FrameLayout";
    tree.root.bounds = Rect{0, 0, 720, 1280};
    int row = 0;

    if (foreground_ == kHomeApp) {
        tree.activity = "home";
        tree.foreground_app = kHomeApp;
        UINode header;
        header.resource_id = "home_header";
        header.text = "Apps";
        header.class_name = "TextView";
        header.bounds = Rect{8, 8, 712, 92};
        tree.root.children.push_back(header);
        ++row;
        for (const auto& [app_id, app] : apps_) {
            UINode icon;
            icon.resource_id = "launcher_" + app_id;
            icon.text = app.display_name;
            icon.class_name = "AppIcon";
            icon.clickable = true;
            icon.bounds = Rect{8, row * 100 + 8, 712, row * 100 + 92};
            tree.root.children.push_back(icon);
            ++row;
        }
    } else {
        const SimApp& app = require_app(foreground_);
        const std::string& screen_id = app.screen_stack.back();
        auto it = app.screens.find(screen_id);
        if (it == app.screens.end()) {
            throw Error("bad-scenario", foreground_ + ": unknown screen " + screen_id);
        }
        tree.activity = screen_id;
        tree.foreground_app = foreground_;
        for (const NodeTemplate& tmpl : it->second.nodes) {
            render_template(tmpl, app.state, tree.root, row);
        }
    }

    if (pending_dialog_) {
        const SimApp& owner = require_app(pending_dialog_->app_id);
        UINode container;
        container.resource_id = "dialog_" + pending_dialog_->spec.id;
        container.class_name = kDialogClassName;
        container.bounds = Rect{40, row * 100 + 8, 680, (row + 1) * 100 + 292};
        ++row;
        for (const NodeTemplate& tmpl : pending_dialog_->spec.nodes) {
            render_template(tmpl, owner.state, container, row);
        }
        tree.root.children.push_back(std::move(container));
    }

    finalize_tree(tree);
    return tree;
}

UITree SimDevice::capture() {
    if (foreground_ != kHomeApp) {
        SimApp& app = require_app(foreground_);
        if (app.permission_dialog_armed && !pending_dialog_) {
            auto it = app.dialogs.find("permission");
            pending_dialog_ = PendingDialog{app.app_id,
                                            it != app.dialogs.end() ? it->second : builtin_permission()};
            app.permission_dialog_armed = false;
        }
    }
    return render();
}

ApplyResult SimDevice::apply_transition_effects(SimApp& app, const std::vector<EffectSpec>& effects,
                                                const std::optional<std::string>& payload) {
    for (const EffectSpec& e : effects) {
        if (e.op == "set") {
            app.state[e.key] = e.value;
        } else if (e.op == "set_payload") {
            app.state[e.key] = payload.value_or("");
        } else if (e.op == "set_from") {
            app.state[e.key] = app.state.value(e.from, json());
        } else if (e.op == "append") {
            app.state[e.key].push_back(e.value);
        } else if (e.op == "append_payload") {
            app.state[e.key].push_back(payload.value_or(""));
        } else if (e.op == "append_from") {
            app.state[e.key].push_back(app.state.value(e.from, json()));
        } else if (e.op == "clear") {
            app.state.erase(e.key);
        } else {
            throw Error("bad-scenario", "unknown effect op " + e.op);
        }
    }
    return ApplyResult::Changed;
}

const NodeTemplate* SimDevice::dialog_template_for(const UINode& node) const {
    if (!pending_dialog_) {
        return nullptr;
    }
    const NodeTemplate* found = nullptr;
    auto visit = [&](auto&& self, const NodeTemplate& tmpl) -> void {
        if (found) {
            return;
        }
        bool id_match = tmpl.base.resource_id && node.resource_id &&
                        *tmpl.base.resource_id == *node.resource_id;
        bool text_match = tmpl.base.text && node.text && *tmpl.base.text == *node.text;
        if (id_match || (!tmpl.base.resource_id && text_match)) {
            found = &tmpl;
            return;
        }
        for (const NodeTemplate& child : tmpl.children) {
            self(self, child);
        }
    };
    for (const NodeTemplate& tmpl : pending_dialog_->spec.nodes) {
        visit(visit, tmpl);
        if (found) {
            break;
        }
    }
    return found;
}

ApplyResult SimDevice::apply(const Action& action) {
    switch (action.kind) {
    case ActionKind::Done:
    case ActionKind::Fail:
        return ApplyResult::Unchanged;

    case ActionKind::Launch: {
        if (!action.payload || !has_app(*action.payload)) {
            return ApplyResult::Rejected;
        }
        if (foreground_ == *action.payload) {
            return ApplyResult::Unchanged;
        }
        foreground_ = *action.payload;
        return ApplyResult::Changed;
    }

    case ActionKind::Back: {
        if (pending_dialog_) {
            pending_dialog_.reset();
            return ApplyResult::Changed;
        }
        if (foreground_ == kHomeApp) {
            return ApplyResult::Unchanged;
        }
        SimApp& app = require_app(foreground_);
        if (app.screen_stack.size() > 1) {
            app.screen_stack.pop_back();
        } else {
            foreground_ = kHomeApp;
        }
        return ApplyResult::Changed;
    }

    case ActionKind::Scroll: {
        if (pending_dialog_ || foreground_ == kHomeApp) {
            return ApplyResult::Unchanged;
        }
        SimApp& app = require_app(foreground_);
        const ScreenSpec& screen = app.screens.at(app.screen_stack.back());
        for (const TransitionSpec& t : screen.transitions) {
            if (t.on.kind != ActionKind::Scroll) {
                continue;
            }
            apply_transition_effects(app, t.effects, action.payload);
            if (t.to) {
                app.screen_stack.push_back(*t.to);
            }
            return ApplyResult::Changed;
        }
        return ApplyResult::Unchanged;
    }

    case ActionKind::Tap:
    case ActionKind::Input: {
        if (!action.element_index) {
            return ApplyResult::Rejected;
        }
        UITree tree = render();
        std::vector<UINode> flat = flatten_tree(tree);
        int index = *action.element_index;
        if (index < 0 || index >= static_cast<int>(flat.size())) {
            return ApplyResult::Rejected;
        }
        const UINode& node = flat[static_cast<std::size_t>(index)];

        if (pending_dialog_) {
            // Dialogs are modal: only dialog buttons respond.
            std::vector<int> members = dialog_member_indices(tree);
            bool in_dialog = std::find(members.begin(), members.end(), index) != members.end();
            if (!in_dialog || action.kind != ActionKind::Tap) {
                return ApplyResult::Unchanged;
            }
            const NodeTemplate* tmpl = dialog_template_for(node);
            if (!tmpl || !tmpl->dismiss) {
                return ApplyResult::Unchanged;
            }
            SimApp& owner = require_app(pending_dialog_->app_id);
            apply_transition_effects(owner, tmpl->effects, action.payload);
            pending_dialog_.reset();
            return ApplyResult::Changed;
        }

        if (foreground_ == kHomeApp) {
            if (action.kind == ActionKind::Tap && node.resource_id &&
                node.resource_id->rfind("launcher_", 0) == 0) {
                std::string app_id = node.resource_id->substr(9);
                if (has_app(app_id)) {
                    foreground_ = app_id;
                    return ApplyResult::Changed;
                }
            }
            return ApplyResult::Unchanged;
        }

        SimApp& app = require_app(foreground_);
        const ScreenSpec& screen = app.screens.at(app.screen_stack.back());
        for (const TransitionSpec& t : screen.transitions) {
            if (t.on.kind != action.kind || !node_matches_pattern(node, t.on)) {
                continue;
            }
            apply_transition_effects(app, t.effects, action.payload);
            if (t.to) {
                app.screen_stack.push_back(*t.to);
            }
            return ApplyResult::Changed;
        }
        return ApplyResult::Unchanged;
    }
    }
    return ApplyResult::Rejected;
}

void SimDevice::inject(const Perturbation& p) {
    SimApp& app = require_app(p.target_app);
    switch (p.kind) {
    case PerturbationKind::ChooserDialog: {
        auto it = app.dialogs.find("chooser");
        pending_dialog_ = PendingDialog{app.app_id,
                                        it != app.dialogs.end() ? it->second : builtin_chooser()};
        break;
    }
    case PerturbationKind::ClearAppData: {
        app.state = app.initial_state;
        app.screen_stack = {app.screens.count("welcome") ? "welcome" : app.initial_screen};
        break;
    }
    case PerturbationKind::RevokePermission:
        app.permission_dialog_armed = true;
        break;
    }
}

CheckOutcome SimDevice::run_checker(const std::string& task_id,
                                    const std::map<std::string, std::string>& expected) const {
    const CheckerSpec* checker = nullptr;
    const SimApp* owner = nullptr;
    for (const auto& [id, app] : apps_) {
        for (const CheckerSpec& c : app.checkers) {
            if (c.task_id == task_id) {
                checker = &c;
                owner = &app;
                break;
            }
        }
        if (checker) {
            break;
        }
    }
    if (!checker) {
        return {CheckResult::CheckError, "no checker registered for task '" + task_id + "'"};
    }

    auto expected_value = [&]() -> std::optional<std::string> {
        auto it = expected.find(checker->expect);
        if (it == expected.end()) {
            return std::nullopt;
        }
        return it->second;
    };

    const json& state = owner->state;
    const json value = state.value(checker->state_key, json());

    if (checker->comparator == "contains") {
        auto want = expected_value();
        if (!want) {
            return {CheckResult::CheckError, "missing expected binding '" + checker->expect + "'"};
        }
        if (value.is_array()) {
            for (const json& item : value) {
                if (item.is_string() && item.get<std::string>() == *want) {
                    return {CheckResult::Verified, ""};
                }
            }
        }
        return {CheckResult::NotSatisfied,
                "state '" + checker->state_key + "' does not contain '" + *want + "'"};
    }
    if (checker->comparator == "equals") {
        auto want = expected_value();
        if (!want) {
            return {CheckResult::CheckError, "missing expected binding '" + checker->expect + "'"};
        }
        std::string actual = value.is_string() ? value.get<std::string>() : value.dump();
        if (value.is_null()) {
            actual = "";
        }
        if (actual == *want) {
            return {CheckResult::Verified, ""};
        }
        return {CheckResult::NotSatisfied,
                "state '" + checker->state_key + "' is '" + actual + "', expected '" + *want + "'"};
    }
    if (checker->comparator == "equals_literal") {
        std::string actual = value.is_string() ? value.get<std::string>() : value.dump();
        if (value.is_null()) {
            actual = "";
        }
        if (actual == checker->value) {
            return {CheckResult::Verified, ""};
        }
        return {CheckResult::NotSatisfied, "state '" + checker->state_key + "' is '" + actual +
                                               "', expected '" + checker->value + "'"};
    }
    if (checker->comparator == "nonempty") {
        bool ok = (value.is_array() && !value.empty()) ||
                  (value.is_string() && !value.get<std::string>().empty());
        if (ok) {
            return {CheckResult::Verified, ""};
        }
        return {CheckResult::NotSatisfied, "state '" + checker->state_key + "' is empty"};
    }
    return {CheckResult::CheckError, "unknown comparator '" + checker->comparator + "'"};
}

void SimDevice::mutate_state(const std::string& app_id, const std::string& op,
                             const std::string& key, const std::string& value) {
    SimApp& app = require_app(app_id);
    if (op == "set") {
        app.state[key] = value;
    } else if (op == "append") {
        app.state[key].push_back(value);
    } else if (op == "clear") {
        app.state.erase(key);
    } else {
        throw Error("bad-setup", "unknown op " + op);
    }
}

} // namespace skillkit
