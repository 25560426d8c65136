#include "skillkit/store.hpp"

#include <sqlite3.h>

namespace skillkit {

Severity severity_from_string(const std::string& s) {
    if (s == "NONE") return Severity::None;
    if (s == "MINOR") return Severity::Minor;
    if (s == "MODERATE") return Severity::Moderate;
    if (s == "MAJOR") return Severity::Major;
    throw Error("bad-severity", s);
}

void to_json(json& j, const FailureRecord& f) {
    j = json{{"skill_id", f.skill_id},
             {"version", f.version},
             {"step_index", f.step_index},
             {"severity", to_string(f.severity)},
             {"descriptor_at_failure", f.descriptor_at_failure},
             {"recovered", f.recovered}};
}

void to_json(json& j, const GuardCondition& g) {
    j = json{{"skill_id", g.skill_id},
             {"predicate", g.predicate},
             {"source_failure_count", g.source_failure_count}};
}

bool guard_holds(const GuardCondition& guard, const UITree& tree, const std::string& target_app) {
    std::string type = guard.predicate.value("type", "");
    if (type == "no_dialog_overlay") {
        return !has_dialog_overlay(tree);
    }
    if (type == "foreground_is_target") {
        return tree.foreground_app == target_app;
    }
    return true;
}

// --- sqlite plumbing ---------------------------------------------------------

namespace {

class Statement {
public:
    Statement(sqlite3* db, const char* sql) : db_(db) {
        if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
            throw Error("store-error", sqlite3_errmsg(db));
        }
    }
    ~Statement() { sqlite3_finalize(stmt_); }
    Statement(const Statement&) = delete;
    Statement& operator=(const Statement&) = delete;

    Statement& bind(int index, const std::string& value) {
        sqlite3_bind_text(stmt_, index, value.c_str(), -1, SQLITE_TRANSIENT);
        return *this;
    }
    Statement& bind(int index, int value) {
        sqlite3_bind_int(stmt_, index, value);
        return *this;
    }
    Statement& bind(int index, long value) {
        sqlite3_bind_int64(stmt_, index, value);
        return *this;
    }

    bool step() {
        int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) {
            return true;
        }
        if (rc == SQLITE_DONE) {
            return false;
        }
        throw Error("store-error", sqlite3_errmsg(db_));
    }

    std::string column_text(int i) const {
        const unsigned char* text = sqlite3_column_text(stmt_, i);
        return text ? reinterpret_cast<const char*>(text) : "";
    }
    int column_int(int i) const { return sqlite3_column_int(stmt_, i); }
    long column_long(int i) const { return static_cast<long>(sqlite3_column_int64(stmt_, i)); }

private:
    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

} // namespace

struct SkillStore::Impl {
    sqlite3* db = nullptr;

    void exec(const char* sql) {
        char* err = nullptr;
        if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
            std::string message = err ? err : "unknown sqlite error";
            sqlite3_free(err);
            throw Error("store-error", message);
        }
    }

    long next_success_seq() {
        exec("UPDATE meta SET value = value + 1 WHERE key = 'success_seq'");
        Statement q(db, "SELECT value FROM meta WHERE key = 'success_seq'");
        q.step();
        return q.column_long(0);
    }
};

SkillStore::SkillStore(const std::string& path) : impl_(std::make_unique<Impl>()) {
    if (sqlite3_open(path.c_str(), &impl_->db) != SQLITE_OK) {
        throw Error("store-error", "cannot open " + path);
    }
    impl_->exec("PRAGMA journal_mode = WAL");
    impl_->exec(R"sql(
        CREATE TABLE IF NOT EXISTS skills (
            skill_id TEXT NOT NULL,
            version INTEGER NOT NULL,
            json TEXT NOT NULL,
            PRIMARY KEY (skill_id, version));
        CREATE TABLE IF NOT EXISTS stats (
            skill_id TEXT NOT NULL,
            version INTEGER NOT NULL,
            n_succ INTEGER NOT NULL DEFAULT 0,
            n_fail INTEGER NOT NULL DEFAULT 0,
            needs_recompile INTEGER NOT NULL DEFAULT 0,
            last_success_seq INTEGER NOT NULL DEFAULT 0,
            PRIMARY KEY (skill_id, version));
        CREATE TABLE IF NOT EXISTS failures (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            skill_id TEXT NOT NULL,
            version INTEGER NOT NULL,
            step_index INTEGER NOT NULL,
            severity TEXT NOT NULL,
            descriptor TEXT NOT NULL,
            recovered INTEGER NOT NULL);
        CREATE TABLE IF NOT EXISTS guards (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            skill_id TEXT NOT NULL,
            predicate TEXT NOT NULL,
            source_failure_count INTEGER NOT NULL);
        CREATE TABLE IF NOT EXISTS embeddings (
            skill_id TEXT NOT NULL,
            provider_id TEXT NOT NULL,
            dimension INTEGER NOT NULL,
            vector TEXT NOT NULL,
            PRIMARY KEY (skill_id, provider_id, dimension));
        CREATE TABLE IF NOT EXISTS meta (
            key TEXT PRIMARY KEY,
            value INTEGER NOT NULL);
        INSERT OR IGNORE INTO meta (key, value) VALUES ('success_seq', 0);
    )sql");
}

SkillStore::~SkillStore() {
    if (impl_ && impl_->db) {
        sqlite3_close(impl_->db);
    }
}

bool SkillStore::has_skill(const std::string& skill_id) const {
    Statement q(impl_->db, "SELECT 1 FROM skills WHERE skill_id = ?1 LIMIT 1");
    q.bind(1, skill_id);
    return q.step();
}

int SkillStore::latest_version(const std::string& skill_id) const {
    Statement q(impl_->db, "SELECT MAX(version) FROM skills WHERE skill_id = ?1");
    q.bind(1, skill_id);
    if (!q.step()) {
        return 0;
    }
    return q.column_int(0);
}

void SkillStore::store_skill(const SkillTemplate& tpl) {
    if (tpl.skill_id.empty()) {
        throw Error("store-error", "skill_id must not be empty");
    }
    int latest = latest_version(tpl.skill_id);
    if (tpl.version != latest + 1) {
        throw Error("store-error", "version " + std::to_string(tpl.version) +
                                       " would leave a gap (latest is " + std::to_string(latest) +
                                       ")");
    }
    if (tpl.version > kMaxSkillVersions) {
        throw Error("store-error", "version cap exceeded for " + tpl.skill_id);
    }
    impl_->exec("BEGIN IMMEDIATE");
    try {
        Statement ins(impl_->db,
                      "INSERT INTO skills (skill_id, version, json) VALUES (?1, ?2, ?3)");
        ins.bind(1, tpl.skill_id).bind(2, tpl.version).bind(3, json(tpl).dump());
        ins.step();
        Statement st(impl_->db, "INSERT INTO stats (skill_id, version) VALUES (?1, ?2)");
        st.bind(1, tpl.skill_id).bind(2, tpl.version);
        st.step();
        impl_->exec("COMMIT");
    } catch (...) {
        impl_->exec("ROLLBACK");
        throw;
    }
}

SkillTemplate SkillStore::load_skill(const std::string& skill_id,
                                     std::optional<int> version) const {
    int v = version.value_or(latest_version(skill_id));
    Statement q(impl_->db, "SELECT json FROM skills WHERE skill_id = ?1 AND version = ?2");
    q.bind(1, skill_id).bind(2, v);
    if (!q.step()) {
        throw Error("no-such-skill", skill_id + " v" + std::to_string(v));
    }
    std::string raw = q.column_text(0);
    SkillTemplate tpl;
    try {
        tpl = json::parse(raw).get<SkillTemplate>();
    } catch (const std::exception&) {
        throw Error("store-corrupt", skill_id + " v" + std::to_string(v));
    }
    SkillStats s = stats(skill_id, v);
    tpl.n_succ = s.n_succ;
    tpl.n_fail = s.n_fail;
    tpl.needs_recompile = s.needs_recompile;
    return tpl;
}

std::vector<SkillTemplate> SkillStore::list_skills(
    const std::optional<std::string>& target_app) const {
    std::vector<SkillTemplate> out;
    Statement q(impl_->db, "SELECT skill_id, MAX(version) FROM skills GROUP BY skill_id "
                           "ORDER BY skill_id");
    while (q.step()) {
        SkillTemplate tpl = load_skill(q.column_text(0), q.column_int(1));
        if (target_app && tpl.target_app != *target_app) {
            continue;
        }
        out.push_back(std::move(tpl));
    }
    return out;
}

SkillStats SkillStore::stats(const std::string& skill_id, int version) const {
    Statement q(impl_->db, "SELECT n_succ, n_fail, needs_recompile, last_success_seq FROM stats "
                           "WHERE skill_id = ?1 AND version = ?2");
    q.bind(1, skill_id).bind(2, version);
    SkillStats s;
    if (q.step()) {
        s.n_succ = q.column_int(0);
        s.n_fail = q.column_int(1);
        s.needs_recompile = q.column_int(2) != 0;
        s.last_success_seq = q.column_long(3);
    }
    return s;
}

SkillStats SkillStore::record_outcome(const std::string& skill_id, int version, bool success,
                                      const std::optional<FailureRecord>& failure) {
    Statement exists(impl_->db, "SELECT 1 FROM skills WHERE skill_id = ?1 AND version = ?2");
    exists.bind(1, skill_id).bind(2, version);
    if (!exists.step()) {
        throw Error("no-such-skill", skill_id + " v" + std::to_string(version));
    }

    impl_->exec("BEGIN IMMEDIATE");
    try {
        if (success) {
            long seq = impl_->next_success_seq();
            Statement up(impl_->db, "UPDATE stats SET n_succ = n_succ + 1, last_success_seq = ?3 "
                                    "WHERE skill_id = ?1 AND version = ?2");
            up.bind(1, skill_id).bind(2, version).bind(3, seq);
            up.step();
        } else {
            Statement up(impl_->db, "UPDATE stats SET n_fail = n_fail + 1 "
                                    "WHERE skill_id = ?1 AND version = ?2");
            up.bind(1, skill_id).bind(2, version);
            up.step();
        }
        if (failure) {
            Statement ins(impl_->db,
                          "INSERT INTO failures (skill_id, version, step_index, severity, "
                          "descriptor, recovered) VALUES (?1, ?2, ?3, ?4, ?5, ?6)");
            ins.bind(1, skill_id)
                .bind(2, version)
                .bind(3, failure->step_index)
                .bind(4, to_string(failure->severity))
                .bind(5, json(failure->descriptor_at_failure).dump())
                .bind(6, failure->recovered ? 1 : 0);
            ins.step();
        }

        SkillStats s = stats(skill_id, version);
        if (s.r_fail() > kRecompileThreshold && !s.needs_recompile) {
            Statement flag(impl_->db, "UPDATE stats SET needs_recompile = 1 "
                                      "WHERE skill_id = ?1 AND version = ?2");
            flag.bind(1, skill_id).bind(2, version);
            flag.step();
            s.needs_recompile = true;
        }
        impl_->exec("COMMIT");
        return s;
    } catch (...) {
        impl_->exec("ROLLBACK");
        throw;
    }
}

RecompileDecision SkillStore::request_recompile(const std::string& skill_id) {
    int latest = latest_version(skill_id);
    if (latest == 0) {
        throw Error("no-such-skill", skill_id);
    }
    SkillStats s = stats(skill_id, latest);
    if (!s.needs_recompile) {
        throw Error("not-flagged", skill_id);
    }
    return latest < kMaxSkillVersions ? RecompileDecision::Recompile
                                      : RecompileDecision::VersionCapReached;
}

void SkillStore::store_recompiled(const std::string& skill_id, SkillTemplate fresh) {
    int latest = latest_version(skill_id);
    if (latest == 0) {
        throw Error("no-such-skill", skill_id);
    }
    if (latest >= kMaxSkillVersions) {
        throw Error("store-error", "version cap reached for " + skill_id);
    }
    fresh.skill_id = skill_id;
    fresh.version = latest + 1;
    fresh.n_succ = 0;
    fresh.n_fail = 0;
    fresh.needs_recompile = false;
    store_skill(fresh);
}

std::vector<FailureRecord> SkillStore::failures_for(const std::string& skill_id) const {
    std::vector<FailureRecord> out;
    Statement q(impl_->db, "SELECT version, step_index, severity, descriptor, recovered "
                           "FROM failures WHERE skill_id = ?1 ORDER BY id");
    q.bind(1, skill_id);
    while (q.step()) {
        FailureRecord f;
        f.skill_id = skill_id;
        f.version = q.column_int(0);
        f.step_index = q.column_int(1);
        f.severity = severity_from_string(q.column_text(2));
        f.descriptor_at_failure = json::parse(q.column_text(3)).get<UIStateDescriptor>();
        f.recovered = q.column_int(4) != 0;
        out.push_back(std::move(f));
    }
    return out;
}

std::vector<GuardCondition> SkillStore::synthesize_guards(const std::string& skill_id) {
    std::vector<FailureRecord> failures = failures_for(skill_id);

    // Group recurrences by (step_index, severity).
    std::map<std::pair<int, std::string>, int> groups;
    for (const FailureRecord& f : failures) {
        ++groups[{f.step_index, to_string(f.severity)}];
    }

    std::vector<GuardCondition> out;
    for (const auto& [key, count] : groups) {
        if (count < kGuardRecurrenceThreshold) {
            continue;
        }
        const auto& [step_index, severity] = key;
        GuardCondition guard;
        guard.skill_id = skill_id;
        guard.source_failure_count = count;
        if (severity == "MODERATE") {
            guard.predicate = json{{"type", "no_dialog_overlay"}, {"step_index", step_index}};
        } else if (severity == "MAJOR") {
            guard.predicate = json{{"type", "foreground_is_target"}};
        } else {
            continue;
        }
        out.push_back(std::move(guard));
    }

    impl_->exec("BEGIN IMMEDIATE");
    try {
        Statement del(impl_->db, "DELETE FROM guards WHERE skill_id = ?1");
        del.bind(1, skill_id);
        del.step();
        for (const GuardCondition& guard : out) {
            Statement ins(impl_->db, "INSERT INTO guards (skill_id, predicate, "
                                     "source_failure_count) VALUES (?1, ?2, ?3)");
            ins.bind(1, skill_id).bind(2, guard.predicate.dump()).bind(3, guard.source_failure_count);
            ins.step();
        }
        impl_->exec("COMMIT");
    } catch (...) {
        impl_->exec("ROLLBACK");
        throw;
    }
    return out;
}

std::vector<GuardCondition> SkillStore::guards_for(const std::string& skill_id) const {
    std::vector<GuardCondition> out;
    Statement q(impl_->db, "SELECT predicate, source_failure_count FROM guards "
                           "WHERE skill_id = ?1 ORDER BY id");
    q.bind(1, skill_id);
    while (q.step()) {
        GuardCondition g;
        g.skill_id = skill_id;
        g.predicate = json::parse(q.column_text(0));
        g.source_failure_count = q.column_int(1);
        out.push_back(std::move(g));
    }
    return out;
}

void SkillStore::put_embedding(const std::string& skill_id, const std::string& provider_id,
                               int dimension, const std::vector<double>& vec) {
    Statement ins(impl_->db, "INSERT OR REPLACE INTO embeddings (skill_id, provider_id, "
                             "dimension, vector) VALUES (?1, ?2, ?3, ?4)");
    ins.bind(1, skill_id).bind(2, provider_id).bind(3, dimension).bind(4, json(vec).dump());
    ins.step();
}

std::optional<std::vector<double>> SkillStore::get_embedding(const std::string& skill_id,
                                                             const std::string& provider_id,
                                                             int dimension) const {
    Statement q(impl_->db, "SELECT vector FROM embeddings WHERE skill_id = ?1 AND "
                           "provider_id = ?2 AND dimension = ?3");
    q.bind(1, skill_id).bind(2, provider_id).bind(3, dimension);
    if (!q.step()) {
        return std::nullopt;
    }
    return json::parse(q.column_text(0)).get<std::vector<double>>();
}

std::map<std::string, long> SkillStore::success_order() const {
    std::map<std::string, long> out;
    Statement q(impl_->db,
                "SELECT skill_id, MAX(last_success_seq) FROM stats GROUP BY skill_id");
    while (q.step()) {
        out[q.column_text(0)] = q.column_long(1);
    }
    return out;
}

json SkillStore::export_all() const {
    json out;
    out["skills"] = json::array();
    {
        Statement q(impl_->db,
                    "SELECT skill_id, version, json FROM skills ORDER BY skill_id, version");
        while (q.step()) {
            json entry{{"skill_id", q.column_text(0)}, {"version", q.column_int(1)}};
            try {
                entry["template"] = json::parse(q.column_text(2));
            } catch (const std::exception&) {
                throw Error("store-corrupt",
                            std::string(q.column_text(0)) + " v" + std::to_string(q.column_int(1)));
            }
            out["skills"].push_back(entry);
        }
    }
    out["stats"] = json::array();
    {
        Statement q(impl_->db, "SELECT skill_id, version, n_succ, n_fail, needs_recompile, "
                               "last_success_seq FROM stats ORDER BY skill_id, version");
        while (q.step()) {
            out["stats"].push_back(json{{"skill_id", q.column_text(0)},
                                        {"version", q.column_int(1)},
                                        {"n_succ", q.column_int(2)},
                                        {"n_fail", q.column_int(3)},
                                        {"needs_recompile", q.column_int(4) != 0},
                                        {"last_success_seq", q.column_long(5)}});
        }
    }
    out["failures"] = json::array();
    {
        Statement q(impl_->db, "SELECT skill_id, version, step_index, severity, descriptor, "
                               "recovered FROM failures ORDER BY id");
        while (q.step()) {
            out["failures"].push_back(json{{"skill_id", q.column_text(0)},
                                           {"version", q.column_int(1)},
                                           {"step_index", q.column_int(2)},
                                           {"severity", q.column_text(3)},
                                           {"descriptor", json::parse(q.column_text(4))},
                                           {"recovered", q.column_int(5) != 0}});
        }
    }
    out["guards"] = json::array();
    {
        Statement q(impl_->db, "SELECT skill_id, predicate, source_failure_count FROM guards "
                               "ORDER BY id");
        while (q.step()) {
            out["guards"].push_back(json{{"skill_id", q.column_text(0)},
                                         {"predicate", json::parse(q.column_text(1))},
                                         {"source_failure_count", q.column_int(2)}});
        }
    }
    out["embeddings"] = json::array();
    {
        Statement q(impl_->db, "SELECT skill_id, provider_id, dimension, vector FROM embeddings "
                               "ORDER BY skill_id, provider_id, dimension");
        while (q.step()) {
            out["embeddings"].push_back(json{{"skill_id", q.column_text(0)},
                                             {"provider_id", q.column_text(1)},
                                             {"dimension", q.column_int(2)},
                                             {"vector", json::parse(q.column_text(3))}});
        }
    }
    return out;
}

} // namespace skillkit
