#pragma once

// Command-line front end: run, report, grade, inspect, verify-data.
//
// Exit codes: 0 success / complete run, 2 partial run, 1 any error.

#include "debate/backends.hpp"
#include "debate/harness.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace debate::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitPartial = 2;

/// Raised with the dotted key path of the offending entry, e.g.
/// "debaters[1].temprature: unknown key".
class ConfigKeyError : public ConfigError {
public:
    ConfigKeyError(std::string key_path, const std::string& what)
        : ConfigError(key_path + ": " + what), key_path_(std::move(key_path)) {}
    const std::string& key_path() const noexcept { return key_path_; }

private:
    std::string key_path_;
};

class UnknownQuestion : public Error {
public:
    explicit UnknownQuestion(const std::string& id) : Error("unknown question '" + id + "'") {}
};

/// Parses a run configuration file. Relative paths inside it resolve against
/// the file's directory. Unknown keys and wrong types throw ConfigKeyError.
harness::ExperimentConfig load_config(const std::filesystem::path& file);
harness::ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);

/// Remote backends whose credential variable is unset or empty.
std::vector<std::string> missing_credentials(const protocol::PanelConfig& panel,
                                             const std::function<std::optional<std::string>(const std::string&)>& getenv);

struct Environment {
    /// Builds the runtime used by `run`; defaults to system clock + HTTP.
    std::function<std::shared_ptr<backends::Runtime>()> make_runtime;
    /// Set asynchronously (SIGINT) to stop scheduling new questions.
    std::atomic<bool>* interrupted = nullptr;
};

/// Entry point; argv[0] is the program name.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err, const Environment& env = {});

/// Per-round textual rendering of one debate.
std::string render_inspect(const protocol::DebateTranscript& t, std::optional<int> round, bool full);

} // namespace debate::cli
