#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace tcedit {

// Invalid settings; carries every problem found, not just the first.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(std::vector<std::string> problems)
        : std::invalid_argument(join(problems)), problems_(std::move(problems)) {}

    const std::vector<std::string>& problems() const { return problems_; }

private:
    static std::string join(const std::vector<std::string>& problems) {
        std::string out;
        for (const auto& p : problems) {
            if (!out.empty()) {
                out += "; ";
            }
            out += p;
        }
        return out;
    }

    std::vector<std::string> problems_;
};

// Malformed or inconsistent file contents.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace tcedit
