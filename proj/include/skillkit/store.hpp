#pragma once

#include "skillkit/common.hpp"
#include "skillkit/compiler.hpp"
#include "skillkit/replayer.hpp"
#include "skillkit/ui_model.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace skillkit {

Severity severity_from_string(const std::string& s);

struct FailureRecord {
    std::string skill_id;
    int version = 1;
    int step_index = 0; // == skeleton length marks a post-completion failure
    Severity severity = Severity::None;
    UIStateDescriptor descriptor_at_failure;
    bool recovered = false;
};

void to_json(json& j, const FailureRecord& f);

struct GuardCondition {
    std::string skill_id;
    json predicate; // {"type": "no_dialog_overlay"|"foreground_is_target", ...}
    int source_failure_count = 0;
};

void to_json(json& j, const GuardCondition& g);

struct SkillStats {
    int n_succ = 0;
    int n_fail = 0;
    bool needs_recompile = false;
    long last_success_seq = 0;

    double r_fail() const {
        int total = n_succ + n_fail;
        return total == 0 ? 0.0 : static_cast<double>(n_fail) / total;
    }
};

enum class RecompileDecision { Recompile, VersionCapReached };

inline constexpr double kRecompileThreshold = 0.5;
inline constexpr int kGuardRecurrenceThreshold = 2;

// Policy-free pre-replay predicate check.
bool guard_holds(const GuardCondition& guard, const UITree& tree, const std::string& target_app);

// Durable skill database: single transactional SQLite file with the
// skills / stats / failures / guards / embeddings collections. One writer,
// many readers.
class SkillStore {
public:
    explicit SkillStore(const std::string& path);
    ~SkillStore();
    SkillStore(const SkillStore&) = delete;
    SkillStore& operator=(const SkillStore&) = delete;

    // Fresh skills enter at version 1; versions are gapless and capped.
    void store_skill(const SkillTemplate& tpl);
    SkillTemplate load_skill(const std::string& skill_id,
                             std::optional<int> version = std::nullopt) const;
    bool has_skill(const std::string& skill_id) const;
    int latest_version(const std::string& skill_id) const;

    // Latest version of every skill (flagged ones included), counters and
    // flag hydrated from stats.
    std::vector<SkillTemplate> list_skills(
        const std::optional<std::string>& target_app = std::nullopt) const;

    SkillStats record_outcome(const std::string& skill_id, int version, bool success,
                              const std::optional<FailureRecord>& failure = std::nullopt);

    RecompileDecision request_recompile(const std::string& skill_id);

    // Persists the freshly compiled replacement as version+1 with zeroed
    // counters and a cleared flag.
    void store_recompiled(const std::string& skill_id, SkillTemplate fresh);

    std::vector<FailureRecord> failures_for(const std::string& skill_id) const;
    std::vector<GuardCondition> synthesize_guards(const std::string& skill_id);
    std::vector<GuardCondition> guards_for(const std::string& skill_id) const;

    void put_embedding(const std::string& skill_id, const std::string& provider_id, int dimension,
                       const std::vector<double>& vec);
    std::optional<std::vector<double>> get_embedding(const std::string& skill_id,
                                                     const std::string& provider_id,
                                                     int dimension) const;

    SkillStats stats(const std::string& skill_id, int version) const;
    std::map<std::string, long> success_order() const;

    json export_all() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace skillkit
