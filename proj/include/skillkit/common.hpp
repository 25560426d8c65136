#pragma once

#include <json.hpp>

#include <stdexcept>
#include <string>

namespace skillkit {

using json = nlohmann::json;

// Domain error carrying a stable machine-readable code ("no-such-app",
// "degenerate-bounds", ...) plus an optional human detail.
class Error : public std::runtime_error {
public:
    explicit Error(std::string code, const std::string& detail = "")
        : std::runtime_error(detail.empty() ? code : code + ": " + detail),
          code_(std::move(code)) {}

    const std::string& code() const { return code_; }

private:
    std::string code_;
};

} // namespace skillkit
