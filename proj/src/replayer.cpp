#include "skillkit/replayer.hpp"

#include <algorithm>
#include <regex>

namespace skillkit {

std::string to_string(Severity s) {
    switch (s) {
    case Severity::None: return "NONE";
    case Severity::Minor: return "MINOR";
    case Severity::Moderate: return "MODERATE";
    case Severity::Major: return "MAJOR";
    }
    return "NONE";
}

std::string to_string(ReplayStatus s) {
    switch (s) {
    case ReplayStatus::Completed: return "COMPLETED";
    case ReplayStatus::FellBack: return "FELL_BACK";
    case ReplayStatus::Aborted: return "ABORTED";
    }
    return "ABORTED";
}

const std::vector<std::string> kDismissKeywords = {"allow", "ok",      "skip",   "got it",
                                                   "accept", "dismiss", "not now"};

std::string substitute_bindings(const std::string& s, const Bindings& bindings) {
    std::string out = s;
    for (const auto& [name, value] : bindings) {
        std::string placeholder = "{" + name + "}";
        std::size_t pos = 0;
        while ((pos = out.find(placeholder, pos)) != std::string::npos) {
            out.replace(pos, placeholder.size(), value);
            pos += value.size();
        }
    }
    return out;
}

double score_element(const UINode& element, const ElementLocator& locator,
                     const Bindings& bindings) {
    int matched = 0;
    int active = 0;

    auto tally = [&](int weight, bool is_active, bool is_match) {
        if (is_active) {
            active += weight;
            if (is_match) {
                matched += weight;
            }
        }
    };

    tally(kFeatureWeights[0], locator.resource_id.has_value(),
          element.resource_id && locator.resource_id &&
              *element.resource_id == *locator.resource_id);

    std::optional<std::string> want_text;
    if (locator.text) {
        want_text = substitute_bindings(*locator.text, bindings);
    }
    tally(kFeatureWeights[1], want_text.has_value(),
          element.text && want_text && element.text->find(*want_text) != std::string::npos);

    tally(kFeatureWeights[2], locator.content_desc.has_value(),
          element.content_desc && locator.content_desc &&
              element.content_desc->find(*locator.content_desc) != std::string::npos);

    tally(kFeatureWeights[3], locator.class_name.has_value(),
          locator.class_name && element.class_name == *locator.class_name);

    tally(kFeatureWeights[4], locator.parent_class.has_value(),
          element.parent_class && locator.parent_class &&
              *element.parent_class == *locator.parent_class);

    tally(kFeatureWeights[5], locator.sibling_index.has_value(),
          locator.sibling_index && element.sibling_index == *locator.sibling_index);

    if (active == 0) {
        return 0.0;
    }
    return static_cast<double>(matched) / static_cast<double>(active);
}

std::optional<std::pair<int, double>> find_element(const UITree& tree,
                                                   const ElementLocator& locator, double tau,
                                                   const Bindings& bindings) {
    std::vector<UINode> flat = flatten_tree(tree);
    int best_index = -1;
    double best_score = -1.0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        double score = score_element(flat[i], locator, bindings);
        if (score > best_score) {
            best_score = score;
            best_index = static_cast<int>(i);
        }
    }
    if (best_index < 0 || best_score < tau) {
        return std::nullopt;
    }
    return std::make_pair(best_index, best_score);
}

DeviationReport verify_state(const UITree& tree, const UIStateDescriptor& expected,
                             const std::string& target_app) {
    if (tree.foreground_app != target_app) {
        return {Severity::Major,
                "foreground app '" + tree.foreground_app + "' differs from target '" +
                    target_app + "'"};
    }

    // Unexpected dialog overlay: a dialog container whose id the descriptor
    // does not already account for.
    std::vector<UINode> flat = flatten_tree(tree);
    for (const UINode& node : flat) {
        if (node.class_name != kDialogClassName) {
            continue;
        }
        std::string id = node.resource_id.value_or("");
        bool known = !id.empty() &&
                     std::find(expected.key_element_ids.begin(), expected.key_element_ids.end(),
                               id) != expected.key_element_ids.end();
        if (!known) {
            return {Severity::Moderate, "unexpected dialog overlay '" + id + "'"};
        }
    }

    if (tree.activity == expected.activity && !expected.key_element_ids.empty()) {
        std::size_t present = 0;
        for (const std::string& id : expected.key_element_ids) {
            for (const UINode& node : flat) {
                if (node.resource_id && *node.resource_id == id) {
                    ++present;
                    break;
                }
            }
        }
        if (present * 2 < expected.key_element_ids.size()) {
            return {Severity::Minor, "only " + std::to_string(present) + " of " +
                                         std::to_string(expected.key_element_ids.size()) +
                                         " key elements present"};
        }
    }
    return {Severity::None, ""};
}

bool try_dismiss(SimDevice& device, const UITree& tree,
                 const std::vector<std::string>& keywords) {
    std::string alternation;
    for (const std::string& kw : keywords) {
        if (!alternation.empty()) {
            alternation += "|";
        }
        alternation += kw;
    }
    std::regex dismiss_re("\\b(" + alternation + ")\\b", std::regex::icase);

    std::vector<UINode> flat = flatten_tree(tree);
    for (int index : dialog_member_indices(tree)) {
        const UINode& node = flat[static_cast<std::size_t>(index)];
        if (!node.text) {
            continue;
        }
        if (std::regex_search(*node.text, dismiss_re)) {
            device.apply(Action{ActionKind::Tap, index, std::nullopt});
            return true;
        }
    }
    return false;
}

ReplayOutcome replay(SimDevice& device, PolicyHandle& policy, const SkillTemplate& skill,
                     const Bindings& bindings, const std::string& task_id,
                     const std::map<std::string, std::string>& expected,
                     const ReplayBudget& budget, std::vector<json>* trace) {
    ReplayOutcome out;
    const int calls_before = policy.counter.total;
    int fallback_consec = 0;

    auto trace_step = [&](int step, Severity severity, std::optional<double> found_score,
                          bool skipped, bool fallback) {
        if (!trace) {
            return;
        }
        json rec{{"step", step}, {"severity", to_string(severity)}, {"skipped", skipped},
                 {"fallback", fallback}};
        if (found_score) {
            rec["found_score"] = *found_score;
        }
        trace->push_back(rec);
    };

    auto record_executed = [&](const Action& action, const UITree& tree_before,
                               const std::string& reasoning, bool success) {
        TrajectoryStep step;
        step.action = action;
        step.tree_before = tree_before;
        step.reasoning = reasoning;
        step.success = success;
        if ((action.kind == ActionKind::Tap || action.kind == ActionKind::Input) &&
            action.element_index) {
            std::vector<UINode> flat = flatten_tree(tree_before);
            if (*action.element_index >= 0 &&
                *action.element_index < static_cast<int>(flat.size())) {
                step.target_features =
                    snapshot_features(flat[static_cast<std::size_t>(*action.element_index)]);
            }
        }
        out.executed_steps.push_back(std::move(step));
    };

    const std::string concrete_instruction = substitute_bindings(skill.intent_pattern, bindings);

    int t = 0;
    while (t < static_cast<int>(skill.steps.size())) {
        const SkillStep& step = skill.steps[static_cast<std::size_t>(t)];
        UITree tree = device.capture();

        Severity severity = Severity::None;
        bool forced_miss = false;

        // A launch step establishes the app context; verifying it against
        // the pre-launch descriptor would always flag a major deviation.
        if (step.action_kind != ActionKind::Launch) {
            DeviationReport report = verify_state(tree, step.descriptor, skill.target_app);
            severity = report.severity;
            if (severity == Severity::Major) {
                out.status = ReplayStatus::Aborted;
                out.failed_step = t;
                out.failed_severity = severity;
                trace_step(t, severity, std::nullopt, false, false);
                out.policy_calls = policy.counter.total - calls_before;
                return out;
            }
            if (severity == Severity::Moderate) {
                bool dismissed = try_dismiss(device, tree);
                if (dismissed) {
                    tree = device.capture();
                    DeviationReport again = verify_state(tree, step.descriptor, skill.target_app);
                    severity = again.severity;
                    if (severity == Severity::Major) {
                        out.status = ReplayStatus::Aborted;
                        out.failed_step = t;
                        out.failed_severity = severity;
                        trace_step(t, severity, std::nullopt, false, false);
                        out.policy_calls = policy.counter.total - calls_before;
                        return out;
                    }
                    forced_miss = severity == Severity::Moderate;
                } else {
                    // Could not clear the dialog: degrade to the miss path.
                    forced_miss = true;
                }
            }
        }

        const double tau = severity == Severity::Minor ? kTauRelaxed : kTauStrict;

        if (step.action_kind == ActionKind::Tap || step.action_kind == ActionKind::Input) {
            std::optional<std::pair<int, double>> found;
            if (!forced_miss && step.locator) {
                found = find_element(tree, *step.locator, tau, bindings);
            }
            if (found) {
                Action action;
                action.kind = step.action_kind;
                action.element_index = found->first;
                if (step.params) {
                    action.payload = substitute_bindings(*step.params, bindings);
                }
                ApplyResult applied = device.apply(action);
                record_executed(action, tree, "skill replay", applied != ApplyResult::Rejected);
                fallback_consec = 0;
                trace_step(t, severity, found->second, false, false);
                ++t;
                continue;
            }

            // Step skipping: the successor's post-condition already holds and
            // one of the next few steps is locatable right now.
            bool skip = false;
            if (t + 1 < static_cast<int>(skill.steps.size()) &&
                verify_state(tree, skill.steps[static_cast<std::size_t>(t + 1)].descriptor,
                             skill.target_app)
                        .severity == Severity::None) {
                int last = std::min(t + kSkipLookahead, static_cast<int>(skill.steps.size()) - 1);
                for (int j = t + 1; j <= last; ++j) {
                    const SkillStep& ahead = skill.steps[static_cast<std::size_t>(j)];
                    if (ahead.locator &&
                        find_element(tree, *ahead.locator, kTauStrict, bindings)) {
                        skip = true;
                        break;
                    }
                }
            }
            if (skip) {
                out.skipped_step_indices.push_back(t);
                trace_step(t, severity, std::nullopt, true, false);
                ++t;
                continue;
            }

            // Step-level policy fallback, budgeted.
            if (fallback_consec >= budget.b_consec || out.fallback_calls >= budget.b_total) {
                out.status = ReplayStatus::FellBack;
                out.failed_step = t;
                out.failed_severity = severity;
                trace_step(t, severity, std::nullopt, false, false);
                out.policy_calls = policy.counter.total - calls_before;
                return out;
            }
            ++out.fallback_calls;
            ++fallback_consec;

            PolicyRequest req;
            req.role = PolicyRole::StepFallback;
            req.instruction = concrete_instruction;
            req.tree = tree;
            req.feedback = "replay step " + std::to_string(t) + " unresolved; expected " +
                           to_string(step.action_kind);
            PolicyResponse resp = policy.decide(req);
            if (resp.action.kind == ActionKind::Fail) {
                out.status = ReplayStatus::FellBack;
                out.failed_step = t;
                out.failed_severity = severity;
                trace_step(t, severity, std::nullopt, false, true);
                out.policy_calls = policy.counter.total - calls_before;
                return out;
            }
            ApplyResult applied = device.apply(resp.action);
            record_executed(resp.action, tree, "step-level fallback",
                            applied != ApplyResult::Rejected);
            trace_step(t, severity, std::nullopt, false, true);
            ++t;
            continue;
        }

        // Locator-less skeleton step (LAUNCH / SCROLL / BACK): mechanical.
        Action action;
        action.kind = step.action_kind;
        if (step.params) {
            action.payload = substitute_bindings(*step.params, bindings);
        }
        ApplyResult applied = device.apply(action);
        record_executed(action, tree, "skill replay", applied != ApplyResult::Rejected);
        fallback_consec = 0;
        trace_step(t, severity, std::nullopt, false, false);
        ++t;
    }

    out.status = ReplayStatus::Completed;
    CheckOutcome check = device.run_checker(task_id, expected);
    out.verified = check.result == CheckResult::Verified;
    out.checker_message = check.message;
    out.policy_calls = policy.counter.total - calls_before;
    return out;
}

} // namespace skillkit
