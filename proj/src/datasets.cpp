#include "debate/datasets.hpp"

#include "debate/errors.hpp"
#include "debate/grading.hpp"
#include "debate/util.hpp"

#include "json.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <algorithm>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>
#include <unordered_set>

namespace debate::datasets {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }

std::optional<Split> split_from_string(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    return std::nullopt;
}

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string collapse_ws(std::string_view s) {
    std::string out;
    bool space = false;
    for (char c : s) {
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            space = true;
            continue;
        }
        if (space && !out.empty()) out += ' ';
        space = false;
        out += c;
    }
    return out;
}

} // namespace

// --- GSM-8K --------------------------------------------------------------

std::vector<Problem> load_gsm8k(const fs::path& path, Split split) {
    fs::path file = fs::is_directory(path) ? path / (std::string(to_string(split)) + ".jsonl") : path;
    std::ifstream in(file);
    if (!in) throw IoError("cannot open " + file.string());

    std::vector<Problem> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error&) {
            throw MalformedRecord(line_no, "invalid JSON");
        }
        if (!rec.is_object() || !rec.contains("question") || !rec["question"].is_string() ||
            !rec.contains("answer") || !rec["answer"].is_string())
            throw MalformedRecord(line_no, "record lacks string fields 'question' and 'answer'");
        std::string question = trim(rec["question"].get<std::string>());
        std::string answer = rec["answer"].get<std::string>();
        if (question.empty()) throw MalformedRecord(line_no, "empty question");
        auto marker = answer.rfind("#### ");
        if (marker == std::string::npos) throw MissingAnswerMarker(line_no);
        std::string final_text = trim(std::string_view(answer).substr(marker + 5));
        if (final_text.empty()) throw MissingAnswerMarker(line_no);

        Problem p;
        p.question_id = "gsm8k-" + std::string(to_string(split)) + "-" + std::to_string(out.size());
        p.question_text = std::move(question);
        p.gold_answer = grading::normalize(final_text);
        p.dataset = DatasetName::gsm8k;
        p.metadata["reasoning"] = trim(std::string_view(answer).substr(0, marker));
        p.metadata["split"] = std::string(to_string(split));
        out.push_back(std::move(p));
    }
    return out;
}

// --- ASDiv ---------------------------------------------------------------

std::vector<Problem> load_asdiv(const fs::path& xml_file) {
    namespace pt = boost::property_tree;
    std::ifstream in(xml_file);
    if (!in) throw IoError("cannot open " + xml_file.string());
    pt::ptree tree;
    try {
        pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
    } catch (const pt::xml_parser_error& e) {
        throw XmlParseError(std::string("ASDiv XML: ") + e.what());
    }

    std::vector<const pt::ptree*> problems;
    auto collect = [&](auto&& self, const pt::ptree& node) -> void {
        for (const auto& [name, child] : node) {
            if (name == "Problem")
                problems.push_back(&child);
            else if (name != "<xmlattr>")
                self(self, child);
        }
    };
    collect(collect, tree);

    static const std::regex paren_group(R"(\(([^()]*)\))");
    std::vector<Problem> out;
    for (const pt::ptree* node : problems) {
        std::string id = node->get<std::string>("<xmlattr>.ID", "");
        if (id.empty()) id = "#" + std::to_string(out.size());
        auto field = [&](const char* name, bool required) -> std::string {
            auto v = node->get_optional<std::string>(name);
            if (!v || trim(*v).empty()) {
                if (required) throw MissingField(id, name);
                return {};
            }
            return collapse_ws(*v);
        };
        std::string body = field("Body", false);
        std::string question = field("Question", true);
        std::string answer = field("Answer", true);

        std::string units;
        for (std::sregex_iterator it(answer.begin(), answer.end(), paren_group), end; it != end; ++it) {
            if (!units.empty()) units += "; ";
            units += trim((*it)[1].str());
        }
        std::string value = trim(std::regex_replace(answer, paren_group, ""));
        if (value.empty()) throw MissingField(id, "Answer");

        Problem p;
        p.question_id = "asdiv-" + id;
        p.question_text = body.empty() ? question : body + " " + question;
        p.gold_answer = grading::normalize(value);
        p.gold_answer.raw = answer;
        p.dataset = DatasetName::asdiv;
        p.metadata["answer"] = answer;
        if (!units.empty()) p.metadata["unit"] = units;
        if (auto g = node->get_optional<std::string>("<xmlattr>.Grade")) p.metadata["grade"] = trim(*g);
        if (auto s = field("Solution-Type", false); !s.empty()) p.metadata["solution_type"] = s;
        if (auto f = field("Formula", false); !f.empty()) p.metadata["formula"] = f;
        out.push_back(std::move(p));
    }
    check_unique_ids(out);
    return out;
}

// --- MATH ----------------------------------------------------------------

namespace {

std::optional<int> parse_level(std::string_view level) {
    static const std::regex re(R"(^\s*Level\s+([0-9]+)\s*$)");
    std::cmatch m;
    std::string s(level);
    if (!std::regex_match(s.c_str(), m, re)) return std::nullopt;
    return std::stoi(m[1].str());
}

bool is_split_name(const std::string& s) { return split_from_string(s).has_value(); }

} // namespace

std::vector<Problem> load_math(const fs::path& root, const MathFilter& filter) {
    if (!fs::is_directory(root)) throw IoError("MATH root is not a directory: " + root.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::vector<Problem> out;
    for (const auto& file : files) {
        std::string subject = file.parent_path().filename().string();
        std::string split = file.parent_path().parent_path().filename().string();
        if (!is_split_name(split)) {
            split = is_split_name(fs::absolute(root).filename().string()) ? fs::absolute(root).filename().string()
                                                                          : std::string();
        }
        if (filter.split && split != to_string(*filter.split)) continue;
        if (!filter.subjects.empty() && !filter.subjects.count(subject)) continue;

        std::string id = "math-" + (split.empty() ? std::string() : split + "-") + subject + "-" +
                         file.stem().string();
        json rec;
        try {
            rec = json::parse(util::read_file(file));
        } catch (const json::parse_error& e) {
            throw ParseError(file.string() + ": " + e.what());
        }
        for (const char* key : {"problem", "solution"})
            if (!rec.contains(key) || !rec[key].is_string())
                throw ParseError(file.string() + ": missing string field '" + key + "'");
        std::string level_text = rec.value("level", std::string());
        auto level = parse_level(level_text);
        if (!filter.levels.empty() && (!level || !filter.levels.count(*level))) continue;

        std::string solution = rec["solution"].get<std::string>();
        auto boxed = grading::extract(solution);
        if (!boxed || trim(*boxed).empty()) throw NoBoxedAnswer(id);

        Problem p;
        p.question_id = id;
        p.question_text = rec["problem"].get<std::string>();
        if (trim(p.question_text).empty()) throw ParseError(file.string() + ": empty problem");
        p.gold_answer = grading::normalize(*boxed);
        p.dataset = DatasetName::math;
        p.metadata["subject"] = subject;
        p.metadata["level"] = level ? std::to_string(*level) : level_text;
        if (rec.contains("type") && rec["type"].is_string()) p.metadata["type"] = rec["type"].get<std::string>();
        if (!split.empty()) p.metadata["split"] = split;
        p.metadata["solution"] = solution;
        out.push_back(std::move(p));
    }
    check_unique_ids(out);
    return out;
}

// --- sampling ------------------------------------------------------------

namespace {

/// Uniform integer in [0, bound) by rejection; independent of the standard
/// library's distribution implementation.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % bound;
}

} // namespace

std::vector<Problem> sample(const std::vector<Problem>& problems, std::size_t n, std::uint64_t seed) {
    if (n > problems.size()) throw SampleTooLarge(n, problems.size());
    std::vector<std::size_t> order(problems.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t j = i + bounded(rng, order.size() - i);
        std::swap(order[i], order[j]);
    }
    std::vector<Problem> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(problems[order[i]]);
    return out;
}

void check_unique_ids(const std::vector<Problem>& problems) {
    std::unordered_set<std::string> seen;
    for (const auto& p : problems)
        if (!seen.insert(p.question_id).second) throw InvalidArgument("duplicate question_id '" + p.question_id + "'");
}

std::vector<Problem> load(const DatasetSpec& spec) {
    switch (spec.name) {
    case DatasetName::gsm8k: return load_gsm8k(spec.path, spec.split);
    case DatasetName::asdiv: return load_asdiv(spec.path);
    case DatasetName::math: {
        MathFilter filter{spec.subjects, spec.levels, spec.split};
        return load_math(spec.path, filter);
    }
    }
    throw InvalidArgument("unknown dataset");
}

// --- manifest ------------------------------------------------------------

std::vector<ManifestEntry> load_manifest(const fs::path& file) {
    json j;
    try {
        j = json::parse(util::read_file(file));
    } catch (const json::parse_error& e) {
        throw ConfigError("manifest " + file.string() + ": " + e.what());
    }
    if (!j.contains("entries") || !j["entries"].is_array()) throw ConfigError("manifest lacks an 'entries' array");
    std::vector<ManifestEntry> out;
    for (const auto& e : j["entries"]) {
        ManifestEntry m;
        auto name = dataset_name_from_string(e.value("dataset", std::string()));
        if (!name) throw ConfigError("manifest entry has unknown dataset");
        m.dataset = *name;
        m.relative_path = e.value("path", std::string());
        if (m.relative_path.empty()) throw ConfigError("manifest entry lacks 'path'");
        if (e.contains("sha256") && e["sha256"].is_string()) m.sha256 = e["sha256"].get<std::string>();
        if (e.contains("count") && e["count"].is_number_unsigned()) m.expected_count = e["count"].get<std::size_t>();
        m.source_url = e.value("source_url", std::string());
        out.push_back(std::move(m));
    }
    return out;
}

namespace {

/// Files hash directly. Directories hash the sorted "relative-path digest"
/// listing of the .json files beneath them.
std::string digest_of(const fs::path& p) {
    if (fs::is_regular_file(p)) return util::sha256_hex(util::read_file(p));
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(p))
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::string listing;
    for (const auto& f : files)
        listing += fs::relative(f, p).generic_string() + " " + util::sha256_hex(util::read_file(f)) + "\n";
    return util::sha256_hex(listing);
}

std::size_t count_of(DatasetName d, const fs::path& p) {
    switch (d) {
    case DatasetName::gsm8k: {
        std::ifstream in(p);
        std::size_t n = 0;
        std::string line;
        while (std::getline(in, line))
            if (!trim(line).empty()) ++n;
        return n;
    }
    case DatasetName::asdiv: return load_asdiv(p).size();
    case DatasetName::math: {
        std::size_t n = 0;
        for (const auto& entry : fs::recursive_directory_iterator(p))
            if (entry.is_regular_file() && entry.path().extension() == ".json") ++n;
        return n;
    }
    }
    return 0;
}

} // namespace

std::vector<ManifestCheck> verify_manifest(const std::vector<ManifestEntry>& entries,
                                           const std::optional<fs::path>& gsm8k_dir,
                                           const std::optional<fs::path>& asdiv_dir,
                                           const std::optional<fs::path>& math_dir) {
    std::vector<ManifestCheck> out;
    for (const auto& e : entries) {
        ManifestCheck c;
        c.entry = e;
        const auto& root = e.dataset == DatasetName::gsm8k ? gsm8k_dir
                           : e.dataset == DatasetName::asdiv ? asdiv_dir
                                                             : math_dir;
        if (!root) {
            c.message = "no path configured for " + std::string(to_string(e.dataset));
            out.push_back(std::move(c));
            continue;
        }
        fs::path p = *root / e.relative_path;
        c.present = fs::exists(p);
        if (!c.present) {
            c.message = "missing " + p.string();
            out.push_back(std::move(c));
            continue;
        }
        try {
            c.observed_sha256 = digest_of(p);
            c.observed_count = count_of(e.dataset, p);
            std::vector<std::string> problems;
            if (e.sha256 && *e.sha256 != *c.observed_sha256) problems.push_back("sha256 mismatch");
            if (e.expected_count && *e.expected_count != *c.observed_count)
                problems.push_back("count " + std::to_string(*c.observed_count) + " != expected " +
                                   std::to_string(*e.expected_count));
            c.ok = problems.empty();
            if (c.ok) {
                c.message = e.sha256 ? "ok" : "ok (digest not pinned; observed " + *c.observed_sha256 + ")";
            } else {
                for (const auto& s : problems) c.message += (c.message.empty() ? "" : "; ") + s;
            }
        } catch (const Error& err) {
            c.message = err.what();
        }
        out.push_back(std::move(c));
    }
    return out;
}

} // namespace debate::datasets
