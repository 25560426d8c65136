#include "skillkit/policy.hpp"

#include <fstream>
#include <regex>

namespace skillkit {

std::string to_string(PolicyRole role) {
    switch (role) {
    case PolicyRole::StepDecide: return "STEP_DECIDE";
    case PolicyRole::SlotExtract: return "SLOT_EXTRACT";
    case PolicyRole::MatchConfirm: return "MATCH_CONFIRM";
    case PolicyRole::StepFallback: return "STEP_FALLBACK";
    }
    return "STEP_DECIDE";
}

namespace {

PolicyRole role_from_string(const std::string& s) {
    if (s == "STEP_DECIDE") return PolicyRole::StepDecide;
    if (s == "SLOT_EXTRACT") return PolicyRole::SlotExtract;
    if (s == "MATCH_CONFIRM") return PolicyRole::MatchConfirm;
    if (s == "STEP_FALLBACK") return PolicyRole::StepFallback;
    throw Error("bad-policy-role", s);
}

// Expands $1..$9 with regex captures.
std::string expand_captures(const std::string& pattern, const std::smatch& m) {
    std::string out;
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        if (pattern[i] == '$' && i + 1 < pattern.size() && pattern[i + 1] >= '1' &&
            pattern[i + 1] <= '9') {
            std::size_t group = static_cast<std::size_t>(pattern[i + 1] - '0');
            if (group < m.size()) {
                out += m[group].str();
            }
            ++i;
        } else {
            out += pattern[i];
        }
    }
    return out;
}

} // namespace

PolicyResponse PolicyHandle::decide(const PolicyRequest& req) {
    counter.total += 1;
    counter.by_role[req.role] += 1;
    try {
        return policy->decide(req);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        // A malformed backend response still cost an invocation.
        throw Error("parse-failure", e.what());
    }
}

ScriptedPolicy ScriptedPolicy::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("bad-policy-file", path);
    }
    return from_json(json::parse(in));
}

ScriptedPolicy ScriptedPolicy::from_json(const json& rules) {
    ScriptedPolicy p;
    for (const json& r : rules) {
        Rule rule;
        rule.role = role_from_string(r.at("role").get<std::string>());
        rule.instruction_pattern = r.value("instruction_pattern", ".*");
        if (auto it = r.find("screen_id"); it != r.end()) {
            rule.screen_id = it->get<std::string>();
        }
        if (auto it = r.find("history_len"); it != r.end()) {
            rule.history_len = it->get<int>();
        }
        if (auto it = r.find("feedback_pattern"); it != r.end()) {
            rule.feedback_pattern = it->get<std::string>();
        }
        if (auto it = r.find("requires_node"); it != r.end()) {
            if (auto rid = it->find("resource_id"); rid != it->end()) {
                rule.requires_resource_id = rid->get<std::string>();
            }
            if (auto txt = it->find("text"); txt != it->end()) {
                rule.requires_text = txt->get<std::string>();
            }
        }
        rule.response = r.at("response");
        p.rules_.push_back(std::move(rule));
    }
    return p;
}

PolicyResponse ScriptedPolicy::decide(const PolicyRequest& req) {
    seen_.push_back({req.role, req.instruction, req.feedback});

    std::vector<UINode> flat = flatten_tree(req.tree);

    // Returns the flattened element index of the first matching node.
    auto find_node = [&](const std::optional<std::string>& resource_id,
                         const std::optional<std::string>& text) -> std::optional<int> {
        for (std::size_t i = 0; i < flat.size(); ++i) {
            const UINode& node = flat[i];
            if (resource_id) {
                if (!node.resource_id || *node.resource_id != *resource_id) {
                    continue;
                }
            }
            if (text) {
                if (!node.text || node.text->find(*text) == std::string::npos) {
                    continue;
                }
            }
            return static_cast<int>(i);
        }
        return std::nullopt;
    };

    for (const Rule& rule : rules_) {
        if (rule.role != req.role) {
            continue;
        }
        std::regex instr_re(rule.instruction_pattern, std::regex::icase);
        std::smatch m;
        if (!std::regex_search(req.instruction, m, instr_re)) {
            continue;
        }
        if (rule.screen_id && req.tree.activity != *rule.screen_id) {
            continue;
        }
        if (rule.history_len && static_cast<int>(req.history.size()) != *rule.history_len) {
            continue;
        }
        if (rule.feedback_pattern) {
            std::string feedback = req.feedback.value_or("");
            if (!std::regex_search(feedback, std::regex(*rule.feedback_pattern))) {
                continue;
            }
        }
        if (rule.requires_resource_id || rule.requires_text) {
            std::optional<std::string> want_text;
            if (rule.requires_text) {
                want_text = expand_captures(*rule.requires_text, m);
            }
            if (!find_node(rule.requires_resource_id, want_text)) {
                continue;
            }
        }

        PolicyResponse resp;
        resp.reasoning = rule.response.value("reasoning", "scripted");
        if (auto it = rule.response.find("action"); it != rule.response.end()) {
            const json& a = *it;
            resp.action.kind = action_kind_from_string(a.at("kind").get<std::string>());
            if (auto idx = a.find("element_index"); idx != a.end()) {
                resp.action.element_index = idx->get<int>();
            }
            if (auto pl = a.find("payload"); pl != a.end()) {
                resp.action.payload = expand_captures(pl->get<std::string>(), m);
            }
            if (auto tgt = a.find("target"); tgt != a.end()) {
                std::optional<std::string> want_id;
                std::optional<std::string> want_text;
                if (auto rid = tgt->find("resource_id"); rid != tgt->end()) {
                    want_id = rid->get<std::string>();
                }
                if (auto txt = tgt->find("text"); txt != tgt->end()) {
                    want_text = expand_captures(txt->get<std::string>(), m);
                }
                std::optional<int> index = find_node(want_id, want_text);
                if (!index) {
                    continue; // target not on screen; try the next rule
                }
                resp.action.element_index = *index;
            }
        } else {
            resp.action = Action{ActionKind::Fail, std::nullopt, std::nullopt};
        }
        if (auto it = rule.response.find("slot_bindings"); it != rule.response.end()) {
            std::map<std::string, SlotBinding> bindings;
            for (const auto& [name, b] : it->items()) {
                SlotBinding binding;
                binding.value = expand_captures(b.at("value").get<std::string>(), m);
                binding.type = b.value("type", "text");
                bindings[name] = std::move(binding);
            }
            resp.slot_bindings = std::move(bindings);
        }
        if (auto it = rule.response.find("confirm"); it != rule.response.end()) {
            resp.confirm = it->get<bool>();
        }
        return resp;
    }

    PolicyResponse miss;
    miss.action = Action{ActionKind::Fail, std::nullopt, std::nullopt};
    miss.reasoning = "no scripted rule matched";
    return miss;
}

} // namespace skillkit
