#include "skillkit/matcher.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <regex>

namespace skillkit {

std::string to_string(IntentMethod m) {
    switch (m) {
    case IntentMethod::ExplicitContext: return "EXPLICIT_CONTEXT";
    case IntentMethod::DomainSuffix: return "DOMAIN_SUFFIX";
    case IntentMethod::Keyword: return "KEYWORD";
    case IntentMethod::None: return "NONE";
    }
    return "NONE";
}

std::string to_string(MatchKind k) {
    switch (k) {
    case MatchKind::Full: return "FULL";
    case MatchKind::Partial: return "PARTIAL";
    case MatchKind::NoMatch: return "NO_MATCH";
    }
    return "NO_MATCH";
}

std::string to_string(MatchStrategy s) {
    switch (s) {
    case MatchStrategy::Regex: return "REGEX";
    case MatchStrategy::Embedding: return "EMBEDDING";
    case MatchStrategy::None: return "NONE";
    }
    return "NONE";
}

void to_json(json& j, const MatchResult& m) {
    j = json{{"kind", to_string(m.kind)},
             {"strategy", to_string(m.strategy)},
             {"bindings", m.bindings}};
    if (m.skill_id) {
        j["skill_id"] = *m.skill_id;
    }
    if (m.similarity) {
        j["similarity"] = *m.similarity;
    }
}

KeywordDict KeywordDict::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("bad-keyword-file", path);
    }
    return from_json(json::parse(in));
}

KeywordDict KeywordDict::from_json(const json& j) {
    KeywordDict d;
    if (auto it = j.find("keywords"); it != j.end()) {
        for (const auto& [keyword, app] : it->items()) {
            d.keywords[keyword] = app.get<std::string>();
        }
    }
    d.browser_app = j.value("browser_app", "");
    return d;
}

namespace {

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string escape_regex(const std::string& s) {
    static const std::string specials = R"(\.^$|()[]{}*+?)";
    std::string out;
    for (char c : s) {
        if (specials.find(c) != std::string::npos) {
            out += '\\';
        }
        out += c;
    }
    return out;
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t hash = 1469598103934665603ULL;
    for (unsigned char c : s) {
        hash ^= c;
        hash *= 1099511628211ULL;
    }
    return hash;
}

std::vector<std::string> unique_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&]() {
        if (!current.empty()) {
            if (std::find(tokens.begin(), tokens.end(), current) == tokens.end()) {
                tokens.push_back(current);
            }
            current.clear();
        }
    };
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            current += static_cast<char>(std::tolower(c));
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

bool word_boundary_contains(const std::string& haystack_lower, const std::string& needle_lower) {
    std::size_t pos = 0;
    auto is_word = [](unsigned char c) { return std::isalnum(c) != 0; };
    while ((pos = haystack_lower.find(needle_lower, pos)) != std::string::npos) {
        bool left_ok = pos == 0 || !is_word(haystack_lower[pos - 1]);
        std::size_t end = pos + needle_lower.size();
        bool right_ok = end >= haystack_lower.size() || !is_word(haystack_lower[end]);
        if (left_ok && right_ok) {
            return true;
        }
        ++pos;
    }
    return false;
}

} // namespace

std::vector<double> TokenHashEmbedding::embed(const std::string& text) {
    std::vector<double> v(static_cast<std::size_t>(dimension()), 0.0);
    for (const std::string& token : unique_tokens(text)) {
        v[fnv1a64(token) % static_cast<std::uint64_t>(dimension())] += 1.0;
    }
    double norm = 0.0;
    for (double x : v) {
        norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) {
        // tokenless input still gets a deterministic unit vector
        v[0] = 1.0;
        return v;
    }
    for (double& x : v) {
        x /= norm;
    }
    return v;
}

IntentResolution resolve_intent(const std::string& instruction, const KeywordDict& dict) {
    std::string lower = lowercase(instruction);

    // Pass 1: explicit app references ("in X", "using X").
    static const std::vector<std::string> prepositions = {"in", "using", "on", "via"};
    for (const std::string& prep : prepositions) {
        for (const auto& [keyword, app] : dict.keywords) {
            std::string phrase = prep + " " + lowercase(keyword);
            if (word_boundary_contains(lower, phrase)) {
                return {app, IntentMethod::ExplicitContext};
            }
        }
    }

    // Pass 2: domain suffixes route to the browser.
    if (!dict.browser_app.empty()) {
        static const std::regex domain_re(R"(\.(com|org|net|io|edu|gov)\b)",
                                          std::regex::icase);
        if (std::regex_search(instruction, domain_re)) {
            return {dict.browser_app, IntentMethod::DomainSuffix};
        }
    }

    // Pass 3: keyword lookup, longest keyword wins.
    const std::string* best_app = nullptr;
    std::size_t best_len = 0;
    for (const auto& [keyword, app] : dict.keywords) {
        std::string kw = lowercase(keyword);
        if (word_boundary_contains(lower, kw) && kw.size() > best_len) {
            best_len = kw.size();
            best_app = &app;
        }
    }
    if (best_app) {
        return {*best_app, IntentMethod::Keyword};
    }
    return {std::nullopt, IntentMethod::None};
}

CompiledPattern pattern_to_regex(const std::string& intent_pattern) {
    static const std::regex placeholder_re(R"(\{([a-z_]+)\})");
    CompiledPattern out;
    out.regex_text = "^";
    std::string rest = intent_pattern;
    std::smatch m;
    while (std::regex_search(rest, m, placeholder_re)) {
        out.regex_text += escape_regex(m.prefix().str());
        out.regex_text += "(.+)";
        out.slot_order.push_back(m[1].str());
        rest = m.suffix().str();
    }
    out.regex_text += escape_regex(rest);
    out.regex_text += "$";
    return out;
}

std::string strip_placeholders(const std::string& intent_pattern) {
    static const std::regex placeholder_re(R"(\{[a-z_]+\})");
    std::string stripped = std::regex_replace(intent_pattern, placeholder_re, "");
    // collapse runs of whitespace introduced by removed placeholders
    std::string out;
    bool last_space = false;
    for (char c : stripped) {
        bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (space && last_space) {
            continue;
        }
        out += space ? ' ' : c;
        last_space = space;
    }
    while (!out.empty() && out.back() == ' ') {
        out.pop_back();
    }
    while (!out.empty() && out.front() == ' ') {
        out.erase(out.begin());
    }
    return out;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw Error("dimension-mismatch");
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<std::pair<std::string, double>> semantic_candidates(
    const std::string& instruction, const std::vector<SkillTemplate>& skills,
    EmbeddingProvider& provider, double tau, const EmbeddingCache* cache) {
    std::vector<double> query = provider.embed(instruction);
    std::vector<std::pair<std::string, double>> out;
    for (const SkillTemplate& skill : skills) {
        std::vector<double> pattern;
        if (cache) {
            if (auto it = cache->find(skill.skill_id); it != cache->end()) {
                pattern = it->second;
            }
        }
        if (pattern.empty()) {
            pattern = provider.embed(strip_placeholders(skill.intent_pattern));
        }
        double sim = cosine(query, pattern);
        if (sim >= tau) {
            out.emplace_back(skill.skill_id, sim);
        }
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });
    return out;
}

MatchResult match_instruction(const std::string& instruction,
                              const std::vector<SkillTemplate>& skills,
                              EmbeddingProvider& provider, PolicyHandle& policy,
                              const KeywordDict& dict,
                              const std::map<std::string, long>& success_order,
                              const EmbeddingCache* cache) {
    IntentResolution intent = resolve_intent(instruction, dict);

    auto app_ok = [&](const SkillTemplate& skill) {
        return !intent.target_app || skill.target_app == *intent.target_app;
    };

    // Regex pass: most-recently-successful first, lexicographic tiebreak.
    std::vector<const SkillTemplate*> ordered;
    for (const SkillTemplate& skill : skills) {
        ordered.push_back(&skill);
    }
    std::sort(ordered.begin(), ordered.end(), [&](const SkillTemplate* a, const SkillTemplate* b) {
        long sa = 0;
        long sb = 0;
        if (auto it = success_order.find(a->skill_id); it != success_order.end()) {
            sa = it->second;
        }
        if (auto it = success_order.find(b->skill_id); it != success_order.end()) {
            sb = it->second;
        }
        if (sa != sb) {
            return sa > sb;
        }
        return a->skill_id < b->skill_id;
    });

    for (const SkillTemplate* skill : ordered) {
        if (!app_ok(*skill)) {
            continue;
        }
        CompiledPattern cp = pattern_to_regex(skill->intent_pattern);
        std::smatch m;
        if (!std::regex_match(instruction, m, std::regex(cp.regex_text, std::regex::icase))) {
            continue;
        }
        MatchResult result;
        result.kind = MatchKind::Full;
        result.skill_id = skill->skill_id;
        result.strategy = MatchStrategy::Regex;
        for (std::size_t i = 0; i < cp.slot_order.size(); ++i) {
            result.bindings[cp.slot_order[i]] = m[i + 1].str();
        }
        return result;
    }

    // Embedding pass over app-filtered skills, confirmed one at a time.
    std::vector<SkillTemplate> filtered;
    for (const SkillTemplate& skill : skills) {
        if (app_ok(skill)) {
            filtered.push_back(skill);
        }
    }
    std::vector<std::pair<std::string, double>> candidates =
        semantic_candidates(instruction, filtered, provider, kTauSem, cache);
    int confirmed = 0;
    for (const auto& [skill_id, similarity] : candidates) {
        if (confirmed >= kMaxConfirmCandidates) {
            break;
        }
        ++confirmed;
        const SkillTemplate* skill = nullptr;
        for (const SkillTemplate& s : filtered) {
            if (s.skill_id == skill_id) {
                skill = &s;
                break;
            }
        }
        PolicyRequest req;
        req.role = PolicyRole::MatchConfirm;
        req.instruction = instruction;
        req.feedback = skill->intent_pattern; // candidate under confirmation
        PolicyResponse resp = policy.decide(req);
        if (!resp.confirm.value_or(false)) {
            continue;
        }
        MatchResult result;
        result.kind = MatchKind::Full;
        result.skill_id = skill_id;
        result.strategy = MatchStrategy::Embedding;
        result.similarity = similarity;
        if (resp.slot_bindings) {
            for (const auto& [name, binding] : *resp.slot_bindings) {
                result.bindings[name] = binding.value;
            }
        }
        bool covered = true;
        for (const Slot& slot : skill->slots) {
            if (result.bindings.find(slot.name) == result.bindings.end()) {
                covered = false;
                break;
            }
        }
        if (!covered) {
            continue; // confirmation without full bindings is no confirmation
        }
        return result;
    }

    if (intent.target_app) {
        for (const SkillTemplate& skill : skills) {
            if (skill.target_app == *intent.target_app) {
                MatchResult partial;
                partial.kind = MatchKind::Partial;
                return partial;
            }
        }
    }
    return MatchResult{};
}

} // namespace skillkit
