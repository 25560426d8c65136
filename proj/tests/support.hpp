#pragma once

#include "skillkit/harness.hpp"
#include "skillkit/policy.hpp"
#include "skillkit/sim_device.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

namespace testsupport {

inline std::string fixture_dir() { return SKILLKIT_FIXTURE_DIR; }

inline std::string scenario_dir() { return fixture_dir() + "/scenarios"; }

inline skillkit::SimDevice make_device(unsigned seed = 0) {
    return skillkit::SimDevice::from_scenario_dir(scenario_dir(), seed);
}

inline skillkit::ScriptedPolicy default_policy() {
    return skillkit::ScriptedPolicy::from_file(fixture_dir() + "/policies/scripted_default.json");
}

inline skillkit::json default_policy_rules() {
    std::ifstream in(fixture_dir() + "/policies/scripted_default.json");
    return skillkit::json::parse(in);
}

inline skillkit::Plan mini_plan() {
    return skillkit::load_plan(fixture_dir() + "/plans/mini25.json");
}

inline skillkit::KeywordDict default_keywords() {
    return skillkit::KeywordDict::from_file(fixture_dir() + "/keywords.json");
}

// Unique temp file path for a throwaway store; removed on destruction.
class TempFile {
public:
    explicit TempFile(const std::string& stem) {
        static int counter = 0;
        path_ = (std::filesystem::temp_directory_path() /
                 (stem + "_" + std::to_string(++counter) + "_" + std::to_string(::getpid()) +
                  ".db"))
                    .string();
        std::filesystem::remove(path_);
    }
    ~TempFile() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
        std::filesystem::remove(path_ + "-wal", ec);
        std::filesystem::remove(path_ + "-shm", ec);
    }
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

// Finds the flattened index of the first node with the given resource id.
inline int index_of(const skillkit::UITree& tree, const std::string& resource_id) {
    auto flat = skillkit::flatten_tree(tree);
    for (std::size_t i = 0; i < flat.size(); ++i) {
        if (flat[i].resource_id && *flat[i].resource_id == resource_id) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

} // namespace testsupport
