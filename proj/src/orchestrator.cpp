#include "skillkit/orchestrator.hpp"

namespace skillkit {

std::string to_string(ExecOutcome o) {
    switch (o) {
    case ExecOutcome::Success: return "SUCCESS";
    case ExecOutcome::FailStepLimit: return "FAIL_STEP_LIMIT";
    case ExecOutcome::FailPolicy: return "FAIL_POLICY";
    case ExecOutcome::FailChecker: return "FAIL_CHECKER";
    }
    return "FAIL_POLICY";
}

namespace {

void set_optional(json& j, const char* key, const std::optional<std::string>& v) {
    if (v) {
        j[key] = *v;
    }
}

std::optional<std::string> get_optional(const json& j, const char* key) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) {
        return it->get<std::string>();
    }
    return std::nullopt;
}

bool app_scoped(ActionKind kind) {
    return kind == ActionKind::Tap || kind == ActionKind::Input || kind == ActionKind::Scroll;
}

} // namespace

void to_json(json& j, const FeatureSnapshot& f) {
    j = json::object();
    set_optional(j, "resource_id", f.resource_id);
    set_optional(j, "text", f.text);
    set_optional(j, "content_desc", f.content_desc);
    j["class_name"] = f.class_name;
    set_optional(j, "parent_class", f.parent_class);
    if (f.sibling_index) {
        j["sibling_index"] = *f.sibling_index;
    }
}

void from_json(const json& j, FeatureSnapshot& f) {
    f.resource_id = get_optional(j, "resource_id");
    f.text = get_optional(j, "text");
    f.content_desc = get_optional(j, "content_desc");
    f.class_name = j.value("class_name", "View");
    f.parent_class = get_optional(j, "parent_class");
    f.sibling_index.reset();
    if (auto it = j.find("sibling_index"); it != j.end() && !it->is_null()) {
        f.sibling_index = it->get<int>();
    }
}

void to_json(json& j, const TrajectoryStep& s) {
    j = json{{"action", s.action}, {"reasoning", s.reasoning}, {"success", s.success},
             {"tree_before", s.tree_before}};
    if (s.target_features) {
        j["target_features"] = *s.target_features;
    }
}

void from_json(const json& j, TrajectoryStep& s) {
    s.action = j.at("action").get<Action>();
    s.reasoning = j.value("reasoning", "");
    s.success = j.value("success", true);
    s.tree_before = j.at("tree_before").get<UITree>();
    s.target_features.reset();
    if (auto it = j.find("target_features"); it != j.end()) {
        s.target_features = it->get<FeatureSnapshot>();
    }
}

FeatureSnapshot snapshot_features(const UINode& node) {
    FeatureSnapshot f;
    f.resource_id = node.resource_id;
    f.text = node.text;
    f.content_desc = node.content_desc;
    f.class_name = node.class_name;
    f.parent_class = node.parent_class;
    f.sibling_index = node.sibling_index;
    return f;
}

ExecuteResult execute(SimDevice& device, PolicyHandle& policy, const std::string& instruction,
                      const std::string& task_id,
                      const std::map<std::string, std::string>& expected,
                      const std::string& target_app, const std::optional<PriorContext>& prior,
                      const LoopBudget& budget, std::vector<json>* trace) {
    ExecuteResult result;
    result.trajectory.instruction = instruction;
    result.trajectory.target_app = target_app;

    std::vector<std::pair<Action, std::string>> history;
    if (prior) {
        // Replay already drove the device through these steps; surface them
        // in the history so the policy does not repeat them.
        for (const TrajectoryStep& step : prior->completed_steps) {
            result.trajectory.steps.push_back(step);
            history.emplace_back(step.action, "already completed by skill replay");
        }
    }

    std::optional<std::string> pending_feedback;
    int consecutive_overrides = 0;
    int unchanged_scrolls = 0;
    int done_rejections = 0;

    for (int step = 1; step <= budget.n_max; ++step) {
        UITree tree = device.capture();
        std::vector<UINode> flat = flatten_tree(tree);

        // The history cap keeps requests bounded; drop the oldest entries.
        while (static_cast<int>(history.size()) >= budget.n_max) {
            history.erase(history.begin());
        }

        PolicyRequest req;
        req.role = PolicyRole::StepDecide;
        req.instruction = instruction;
        req.tree = tree;
        req.history = history;
        req.feedback = pending_feedback;
        pending_feedback.reset();

        PolicyResponse resp = policy.decide(req);
        Action action = resp.action;

        if (action.kind == ActionKind::Fail) {
            result.outcome = ExecOutcome::FailPolicy;
            return result;
        }

        // App guardrail: actions aimed at the wrong foreground app are
        // overridden with a launch of the target app.
        bool overridden = false;
        if (app_scoped(action.kind) && tree.foreground_app != target_app) {
            action = Action{ActionKind::Launch, std::nullopt, target_app};
            overridden = true;
            ++consecutive_overrides;
        } else {
            consecutive_overrides = 0;
        }

        ApplyResult applied = device.apply(action);

        TrajectoryStep record;
        record.action = action;
        record.reasoning = overridden ? "guardrail override: wrong foreground app" : resp.reasoning;
        record.success = applied != ApplyResult::Rejected;
        record.tree_before = tree;
        if ((action.kind == ActionKind::Tap || action.kind == ActionKind::Input) &&
            action.element_index && *action.element_index >= 0 &&
            *action.element_index < static_cast<int>(flat.size())) {
            record.target_features =
                snapshot_features(flat[static_cast<std::size_t>(*action.element_index)]);
        }
        result.trajectory.steps.push_back(record);
        history.emplace_back(action, record.reasoning);

        std::optional<std::string> checker_note;

        if (overridden && consecutive_overrides >= budget.g_max) {
            result.outcome = ExecOutcome::FailPolicy;
            if (trace) {
                trace->push_back(json{{"step", step}, {"action", record.action},
                                      {"overridden", overridden},
                                      {"counter_snapshot", policy.counter.total}});
            }
            return result;
        }

        // Stale-scroll detection: two consecutive no-op scrolls feed back.
        if (action.kind == ActionKind::Scroll && applied == ApplyResult::Unchanged) {
            ++unchanged_scrolls;
            if (unchanged_scrolls >= 2) {
                pending_feedback = kStaleScrollFeedback;
                unchanged_scrolls = 0;
            }
        } else {
            unchanged_scrolls = 0;
        }

        if (action.kind == ActionKind::Done) {
            CheckOutcome check = device.run_checker(task_id, expected);
            checker_note = to_string(check.result);
            if (check.result == CheckResult::Verified) {
                result.trajectory.verified = true;
                result.outcome = ExecOutcome::Success;
                if (trace) {
                    trace->push_back(json{{"step", step}, {"action", record.action},
                                          {"overridden", overridden}, {"checker", *checker_note},
                                          {"counter_snapshot", policy.counter.total}});
                }
                return result;
            }
            if (check.result == CheckResult::CheckError) {
                result.outcome = ExecOutcome::FailChecker;
                return result;
            }
            ++done_rejections;
            if (done_rejections > budget.k_retry) {
                result.outcome = ExecOutcome::FailChecker;
                if (trace) {
                    trace->push_back(json{{"step", step}, {"action", record.action},
                                          {"overridden", overridden}, {"checker", *checker_note},
                                          {"counter_snapshot", policy.counter.total}});
                }
                return result;
            }
            pending_feedback = kCheckerFeedbackPrefix + check.message + kCheckerFeedbackSuffix;
        } else if (step >= budget.checkpoint_start &&
                   (step - budget.checkpoint_start) % budget.checkpoint_every == 0) {
            // Checkpoint: silent early-exit probe.
            CheckOutcome check = device.run_checker(task_id, expected);
            checker_note = to_string(check.result);
            if (check.result == CheckResult::Verified) {
                result.trajectory.verified = true;
                result.outcome = ExecOutcome::Success;
                if (trace) {
                    trace->push_back(json{{"step", step}, {"action", record.action},
                                          {"overridden", overridden}, {"checker", *checker_note},
                                          {"counter_snapshot", policy.counter.total}});
                }
                return result;
            }
        }

        if (trace) {
            json rec{{"step", step}, {"action", record.action}, {"overridden", overridden},
                     {"counter_snapshot", policy.counter.total}};
            if (checker_note) {
                rec["checker"] = *checker_note;
            }
            trace->push_back(rec);
        }
    }

    result.outcome = ExecOutcome::FailStepLimit;
    return result;
}

} // namespace skillkit
