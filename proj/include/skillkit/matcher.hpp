#pragma once

#include "skillkit/common.hpp"
#include "skillkit/compiler.hpp"
#include "skillkit/policy.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace skillkit {

enum class IntentMethod { ExplicitContext, DomainSuffix, Keyword, None };

std::string to_string(IntentMethod m);

struct IntentResolution {
    std::optional<std::string> target_app;
    IntentMethod method = IntentMethod::None;
};

enum class MatchKind { Full, Partial, NoMatch };
enum class MatchStrategy { Regex, Embedding, None };

std::string to_string(MatchKind k);
std::string to_string(MatchStrategy s);

struct MatchResult {
    MatchKind kind = MatchKind::NoMatch;
    std::optional<std::string> skill_id;
    std::map<std::string, std::string> bindings;
    MatchStrategy strategy = MatchStrategy::None;
    std::optional<double> similarity;
};

void to_json(json& j, const MatchResult& m);

struct KeywordDict {
    std::map<std::string, std::string> keywords; // keyword -> app_id
    std::string browser_app;

    static KeywordDict from_file(const std::string& path);
    static KeywordDict from_json(const json& j);
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string id() const = 0;
    virtual int dimension() const = 0;
    virtual std::vector<double> embed(const std::string& text) = 0;
};

// Deterministic baseline: unique lowercase alphanumeric tokens hashed
// (FNV-1a 64) into 64 buckets, L2-normalized. Stands in for a sentence
// encoder so the cascade is testable without model weights.
class TokenHashEmbedding : public EmbeddingProvider {
public:
    std::string id() const override { return "token-hash-64"; }
    int dimension() const override { return 64; }
    std::vector<double> embed(const std::string& text) override;
};

inline constexpr double kTauSem = 0.40;
inline constexpr int kMaxConfirmCandidates = 3;

IntentResolution resolve_intent(const std::string& instruction, const KeywordDict& dict);

struct CompiledPattern {
    std::string regex_text;           // anchored, case-insensitive
    std::vector<std::string> slot_order; // capture group order
};

CompiledPattern pattern_to_regex(const std::string& intent_pattern);

// Intent pattern with "{name}" placeholders removed and whitespace collapsed.
std::string strip_placeholders(const std::string& intent_pattern);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

// Precomputed pattern embeddings keyed by skill_id; missing entries are
// embedded on the fly.
using EmbeddingCache = std::map<std::string, std::vector<double>>;

std::vector<std::pair<std::string, double>> semantic_candidates(
    const std::string& instruction, const std::vector<SkillTemplate>& skills,
    EmbeddingProvider& provider, double tau = kTauSem, const EmbeddingCache* cache = nullptr);

// Three-strategy cascade: regex (0 policy calls) -> embedding + one
// MATCH_CONFIRM per candidate (at most kMaxConfirmCandidates) -> app filter.
// `success_order` biases regex ties toward most-recently-successful skills.
MatchResult match_instruction(const std::string& instruction,
                              const std::vector<SkillTemplate>& skills,
                              EmbeddingProvider& provider, PolicyHandle& policy,
                              const KeywordDict& dict,
                              const std::map<std::string, long>& success_order = {},
                              const EmbeddingCache* cache = nullptr);

} // namespace skillkit
