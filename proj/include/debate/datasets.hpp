#pragma once

// Loaders for the three benchmarks in their published layouts:
//   GSM-8K  line-delimited JSON {question, answer}, answer ending "#### <final>"
//   ASDiv   a single XML corpus of <Problem> elements
//   MATH    {split}/{subject}/{n}.json with problem, level, type, solution

#include "debate/problem.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace debate::datasets {

enum class Split { train, test };
std::string_view to_string(Split s);
std::optional<Split> split_from_string(std::string_view s);

/// `path` is either a .jsonl file or a directory holding {split}.jsonl.
/// Throws MalformedRecord, MissingAnswerMarker, IoError.
std::vector<Problem> load_gsm8k(const std::filesystem::path& path, Split split = Split::test);

/// Throws XmlParseError, MissingField, IoError.
std::vector<Problem> load_asdiv(const std::filesystem::path& xml_file);

struct MathFilter {
    std::set<std::string> subjects; ///< directory names, e.g. "algebra"; empty = all
    std::set<int> levels;           ///< 1..5; empty = all
    std::optional<Split> split;     ///< unset = every split found under the root
};

/// `root` may be the corpus root (holding train/ and test/), one split
/// directory, or one subject directory. Files are visited in sorted order.
/// Throws NoBoxedAnswer, ParseError, IoError.
std::vector<Problem> load_math(const std::filesystem::path& root, const MathFilter& filter = {});

/// Deterministic subset of size n: a partial Fisher-Yates shuffle driven by
/// mt19937_64(seed). Throws SampleTooLarge.
std::vector<Problem> sample(const std::vector<Problem>& problems, std::size_t n, std::uint64_t seed);

/// Throws InvalidArgument when two problems share a question_id.
void check_unique_ids(const std::vector<Problem>& problems);

// --- dataset selection ---------------------------------------------------

struct DatasetSpec {
    DatasetName name = DatasetName::gsm8k;
    std::filesystem::path path;
    Split split = Split::test; // gsm8k, math
    std::set<std::string> subjects; // math
    std::set<int> levels;           // math

    friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

std::vector<Problem> load(const DatasetSpec& spec);

// --- checksum manifest ---------------------------------------------------

/// One pinned input. `sha256` is optional: an entry without a digest checks
/// presence and record count only, and reports the digest it observed.
struct ManifestEntry {
    DatasetName dataset;
    std::string relative_path;
    std::optional<std::string> sha256;
    std::optional<std::size_t> expected_count;
    std::string source_url;
};

/// Throws IoError, ConfigError.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& file);

struct ManifestCheck {
    ManifestEntry entry;
    bool present = false;
    std::optional<std::string> observed_sha256;
    std::optional<std::size_t> observed_count;
    bool ok = false;
    std::string message;
};

/// Paths are resolved against the per-dataset root (gsm8k directory, ASDiv
/// file's directory, MATH root). Datasets without a root are reported missing.
std::vector<ManifestCheck> verify_manifest(const std::vector<ManifestEntry>& entries,
                                           const std::optional<std::filesystem::path>& gsm8k_dir,
                                           const std::optional<std::filesystem::path>& asdiv_dir,
                                           const std::optional<std::filesystem::path>& math_dir);

} // namespace debate::datasets
