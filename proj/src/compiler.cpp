#include "skillkit/compiler.hpp"

#include <algorithm>
#include <cctype>

namespace skillkit {

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

std::string replace_all(std::string haystack, const std::string& needle,
                        const std::string& replacement) {
    if (needle.empty()) {
        return haystack;
    }
    std::size_t pos = 0;
    while ((pos = haystack.find(needle, pos)) != std::string::npos) {
        haystack.replace(pos, needle.size(), replacement);
        pos += replacement.size();
    }
    return haystack;
}

bool contains(const std::optional<std::string>& s, const std::string& needle) {
    return s && s->find(needle) != std::string::npos;
}

} // namespace

void to_json(json& j, const Slot& s) {
    j = json{{"name", s.name}, {"slot_type", s.slot_type}, {"placeholder", s.placeholder}};
}

void from_json(const json& j, Slot& s) {
    s.name = j.at("name").get<std::string>();
    s.slot_type = j.value("slot_type", "text");
    s.placeholder = j.value("placeholder", "{" + s.name + "}");
}

void to_json(json& j, const ElementLocator& l) {
    j = json::object();
    set_optional(j, "resource_id", l.resource_id);
    set_optional(j, "text", l.text);
    set_optional(j, "content_desc", l.content_desc);
    set_optional(j, "class_name", l.class_name);
    set_optional(j, "parent_class", l.parent_class);
    if (l.sibling_index) {
        j["sibling_index"] = *l.sibling_index;
    }
}

void from_json(const json& j, ElementLocator& l) {
    l.resource_id = get_optional(j, "resource_id");
    l.text = get_optional(j, "text");
    l.content_desc = get_optional(j, "content_desc");
    l.class_name = get_optional(j, "class_name");
    l.parent_class = get_optional(j, "parent_class");
    l.sibling_index.reset();
    if (auto it = j.find("sibling_index"); it != j.end() && !it->is_null()) {
        l.sibling_index = it->get<int>();
    }
}

void to_json(json& j, const SkillStep& s) {
    j = json{{"descriptor", s.descriptor}, {"action_kind", to_string(s.action_kind)}};
    if (s.locator) {
        j["locator"] = *s.locator;
    }
    if (s.params) {
        j["params"] = *s.params;
    }
}

void from_json(const json& j, SkillStep& s) {
    s.descriptor = j.at("descriptor").get<UIStateDescriptor>();
    s.action_kind = action_kind_from_string(j.at("action_kind").get<std::string>());
    s.locator.reset();
    if (auto it = j.find("locator"); it != j.end()) {
        s.locator = it->get<ElementLocator>();
    }
    s.params = get_optional(j, "params");
}

void to_json(json& j, const SkillTemplate& t) {
    j = json{{"skill_id", t.skill_id},
             {"intent_pattern", t.intent_pattern},
             {"slots", t.slots},
             {"steps", t.steps},
             {"target_app", t.target_app},
             {"version", t.version},
             {"n_succ", t.n_succ},
             {"n_fail", t.n_fail},
             {"needs_recompile", t.needs_recompile}};
}

void from_json(const json& j, SkillTemplate& t) {
    t.skill_id = j.at("skill_id").get<std::string>();
    t.intent_pattern = j.at("intent_pattern").get<std::string>();
    t.slots = j.value("slots", std::vector<Slot>{});
    t.steps = j.value("steps", std::vector<SkillStep>{});
    t.target_app = j.value("target_app", "");
    t.version = j.value("version", 1);
    t.n_succ = j.value("n_succ", 0);
    t.n_fail = j.value("n_fail", 0);
    t.needs_recompile = j.value("needs_recompile", false);
}

SlotExtraction extract_slots(PolicyHandle& policy, const Trajectory& trajectory) {
    if (!trajectory.verified) {
        throw Error("unverified-trajectory", "compile requires a verified trajectory");
    }

    PolicyRequest req;
    req.role = PolicyRole::SlotExtract;
    req.instruction = trajectory.instruction;
    PolicyResponse resp = policy.decide(req);

    SlotExtraction out;
    out.intent_pattern = trajectory.instruction;
    if (!resp.slot_bindings) {
        return out;
    }

    // Longest values substitute first so one slot value nested in another
    // cannot corrupt the pattern.
    std::vector<std::pair<std::string, SlotBinding>> bindings(resp.slot_bindings->begin(),
                                                              resp.slot_bindings->end());
    std::stable_sort(bindings.begin(), bindings.end(), [](const auto& a, const auto& b) {
        return a.second.value.size() > b.second.value.size();
    });

    for (const auto& [name, binding] : bindings) {
        if (binding.type != "text" && binding.type != "time" && binding.type != "phone" &&
            binding.type != "url") {
            throw Error("bad-slot-type", "slot '" + name + "' has type '" + binding.type + "'");
        }
        bool in_instruction =
            trajectory.instruction.find(binding.value) != std::string::npos && !binding.value.empty();
        bool in_steps = false;
        for (const TrajectoryStep& step : trajectory.steps) {
            if (contains(step.action.payload, binding.value) ||
                (step.target_features && contains(step.target_features->text, binding.value))) {
                in_steps = true;
                break;
            }
        }
        if (!in_instruction && !in_steps) {
            throw Error("slot-mismatch",
                        "slot '" + name + "' value '" + binding.value +
                            "' occurs in neither the instruction nor any step");
        }
        if (!in_instruction) {
            // Without an occurrence in the instruction there is no way to
            // parameterize the intent pattern.
            throw Error("slot-mismatch",
                        "slot '" + name + "' value '" + binding.value +
                            "' does not occur in the instruction");
        }
        std::string placeholder = "{" + name + "}";
        out.intent_pattern = replace_all(out.intent_pattern, binding.value, placeholder);
        out.slots.push_back(Slot{name, binding.type, placeholder});
        out.values[name] = binding.value;
    }

    // Stable order for serialization: by first occurrence in the pattern.
    std::stable_sort(out.slots.begin(), out.slots.end(), [&](const Slot& a, const Slot& b) {
        return out.intent_pattern.find(a.placeholder) < out.intent_pattern.find(b.placeholder);
    });
    return out;
}

ElementLocator build_locator(const FeatureSnapshot& features) {
    ElementLocator loc;
    if (features.resource_id && !features.resource_id->empty()) {
        loc.resource_id = features.resource_id;
    }
    if (features.text && !features.text->empty()) {
        loc.text = features.text;
    }
    if (features.content_desc && !features.content_desc->empty()) {
        loc.content_desc = features.content_desc;
    }
    if (!features.class_name.empty()) {
        loc.class_name = features.class_name;
    }
    if (features.parent_class && !features.parent_class->empty()) {
        loc.parent_class = features.parent_class;
    }
    if (features.sibling_index) {
        loc.sibling_index = features.sibling_index;
    }
    if (loc.empty()) {
        throw Error("unlocatable-element", "all locator features are null");
    }
    return loc;
}

SkillTemplate compile(PolicyHandle& policy, const Trajectory& trajectory) {
    if (!trajectory.verified) {
        throw Error("unverified-trajectory", "compile requires a verified trajectory");
    }

    SlotExtraction extraction = extract_slots(policy, trajectory);

    // Longest-first, as in extract_slots.
    std::vector<std::pair<std::string, std::string>> by_length(extraction.values.begin(),
                                                               extraction.values.end());
    std::stable_sort(by_length.begin(), by_length.end(), [](const auto& a, const auto& b) {
        return a.second.size() > b.second.size();
    });
    auto substitute = [&](const std::string& s) {
        std::string out = s;
        for (const auto& [name, value] : by_length) {
            out = replace_all(out, value, "{" + name + "}");
        }
        return out;
    };

    SkillTemplate tpl;
    tpl.intent_pattern = extraction.intent_pattern;
    tpl.slots = extraction.slots;
    tpl.target_app = trajectory.target_app;
    tpl.skill_id = skill_id_from_pattern(extraction.intent_pattern);
    tpl.version = 1;

    for (const TrajectoryStep& step : trajectory.steps) {
        if (step.action.kind == ActionKind::Done) {
            continue;
        }
        SkillStep skeleton;
        skeleton.action_kind = step.action.kind;
        skeleton.descriptor = make_descriptor(step.tree_before);
        if (step.action.payload) {
            skeleton.params = substitute(*step.action.payload);
        }
        if (step.action.kind == ActionKind::Tap || step.action.kind == ActionKind::Input) {
            if (!step.target_features) {
                throw Error("unlocatable-element",
                            "trajectory step lacks target features for " +
                                to_string(step.action.kind));
            }
            ElementLocator loc = build_locator(*step.target_features);
            if (loc.text) {
                loc.text = substitute(*loc.text);
            }
            if (step.action.kind == ActionKind::Input && step.action.payload) {
                // An input whose payload is a slot value locates (and types)
                // the placeholder so replay can substitute fresh bindings.
                std::string substituted = substitute(*step.action.payload);
                if (substituted != *step.action.payload) {
                    loc.text = substituted;
                }
            }
            skeleton.locator = loc;
        }
        tpl.steps.push_back(std::move(skeleton));
    }

    return tpl;
}

std::string skill_id_from_pattern(const std::string& intent_pattern) {
    std::string id;
    bool last_underscore = false;
    for (char c : intent_pattern) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            id += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            last_underscore = false;
        } else if (!last_underscore && !id.empty()) {
            id += '_';
            last_underscore = true;
        }
    }
    while (!id.empty() && id.back() == '_') {
        id.pop_back();
    }
    return id.empty() ? "skill" : id;
}

} // namespace skillkit
