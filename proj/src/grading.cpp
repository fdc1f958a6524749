#include "debate/grading.hpp"

#include "debate/errors.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <vector>

namespace debate::grading {

namespace {

using i128 = __int128;

constexpr std::int64_t kMax = std::numeric_limits<std::int64_t>::max();

bool fits(i128 v) { return v <= kMax && v >= -kMax; }

std::int64_t pow10(int k) {
    std::int64_t p = 1;
    for (int i = 0; i < k; ++i) p *= 10;
    return p;
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string remove_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s)
        if (!is_space(c)) out.push_back(c);
    return out;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(s[i])) != std::tolower(static_cast<unsigned char>(prefix[i])))
            return false;
    return true;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
    if (from.empty()) return;
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

/// Index one past the '}' matching the '{' at `open`, or npos. Backslash-escaped
/// braces do not count.
std::size_t match_brace(std::string_view s, std::size_t open) {
    int depth = 0;
    for (std::size_t i = open; i < s.size(); ++i) {
        char c = s[i];
        if (c == '\\') {
            ++i;
            continue;
        }
        if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i + 1;
        }
    }
    return std::string_view::npos;
}

// --- numbers -------------------------------------------------------------

std::optional<Rational> checked_div(const Rational& a, const Rational& b) {
    if (b.num() == 0) return std::nullopt;
    i128 num = static_cast<i128>(a.num()) * b.den();
    i128 den = static_cast<i128>(a.den()) * b.num();
    if (den < 0) {
        num = -num;
        den = -den;
    }
    i128 g = num < 0 ? -num : num;
    i128 h = den;
    while (h != 0) {
        i128 t = g % h;
        g = h;
        h = t;
    }
    if (g > 1) {
        num /= g;
        den /= g;
    }
    if (!fits(num) || !fits(den)) return std::nullopt;
    return Rational(static_cast<std::int64_t>(num), static_cast<std::int64_t>(den));
}

/// [+-]digits[.digits] or [+-].digits
std::optional<Rational> parse_decimal(std::string_view s) {
    bool negative = false;
    if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
        negative = s.front() == '-';
        s.remove_prefix(1);
    }
    if (s.empty()) return std::nullopt;
    i128 value = 0;
    int frac_digits = 0;
    int digits = 0;
    bool seen_point = false;
    for (char c : s) {
        if (c == '.') {
            if (seen_point) return std::nullopt;
            seen_point = true;
            continue;
        }
        if (!is_digit(c)) return std::nullopt;
        value = value * 10 + (c - '0');
        ++digits;
        if (seen_point) ++frac_digits;
        if (!fits(value) || frac_digits > 18) return std::nullopt;
    }
    if (digits == 0) return std::nullopt;
    if (negative) value = -value;
    return Rational::checked(static_cast<std::int64_t>(value), pow10(frac_digits));
}

std::optional<Rational> parse_number(std::string_view s);

/// \frac{a}{b} and the \frac12 shorthand, optionally negated.
std::optional<Rational> parse_frac_command(std::string_view s) {
    bool negative = false;
    if (!s.empty() && s.front() == '-') {
        negative = true;
        s.remove_prefix(1);
    }
    constexpr std::string_view cmd = "\\frac";
    if (s.substr(0, cmd.size()) != cmd) return std::nullopt;
    s.remove_prefix(cmd.size());

    std::array<std::string_view, 2> parts;
    for (auto& part : parts) {
        while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
        if (s.empty()) return std::nullopt;
        if (s.front() == '{') {
            std::size_t end = match_brace(s, 0);
            if (end == std::string_view::npos) return std::nullopt;
            part = s.substr(1, end - 2);
            s.remove_prefix(end);
        } else {
            if (!is_digit(s.front())) return std::nullopt;
            part = s.substr(0, 1);
            s.remove_prefix(1);
        }
    }
    if (!trim(s).empty()) return std::nullopt;
    auto num = parse_number(trim(parts[0]));
    auto den = parse_number(trim(parts[1]));
    if (!num || !den) return std::nullopt;
    auto value = checked_div(*num, *den);
    if (value && negative) value = Rational::checked(-value->num(), value->den());
    return value;
}

std::optional<Rational> parse_number(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (auto v = parse_decimal(s)) return v;
    if (s.find("\\frac") != std::string_view::npos) return parse_frac_command(s);
    if (auto slash = s.find('/'); slash != std::string_view::npos && s.find('/', slash + 1) == std::string_view::npos) {
        auto num = parse_decimal(trim(s.substr(0, slash)));
        auto den = parse_decimal(trim(s.substr(slash + 1)));
        if (num && den) return checked_div(*num, *den);
    }
    return std::nullopt;
}

// --- normalization pipeline ----------------------------------------------

constexpr std::array kUnitWords = {
    "dollars", "dollar", "usd", "cents", "cent", "euros", "euro", "pounds", "pound", "lbs", "lb",
    "ounces", "ounce", "oz", "kg", "kilograms", "kilogram", "g", "grams", "gram", "mg",
    "km", "kilometers", "kilometres", "kilometer", "m", "meters", "metres", "meter", "cm", "centimeters",
    "centimeter", "mm", "millimeters", "inches", "inch", "ft", "feet", "foot", "yards", "yard", "miles",
    "mile", "mph", "l", "liters", "litres", "liter", "ml", "milliliters", "gallons", "gallon", "cups", "cup",
    "seconds", "second", "sec", "secs", "minutes", "minute", "min", "mins", "hours", "hour", "hr", "hrs",
    "days", "day", "weeks", "week", "months", "month", "years", "year", "degrees", "degree",
    "units", "unit", "sq", "square", "cubic", "people", "persons", "items", "pieces", "times", "points",
};

bool is_unit_word(std::string_view token) {
    std::string t = lower(token);
    while (!t.empty() && t.back() == '.') t.pop_back();
    for (std::string_view suffix : {"^2", "^3", "^{2}", "^{3}", "²", "³"}) {
        if (t.size() > suffix.size() && t.ends_with(suffix)) {
            t.resize(t.size() - suffix.size());
            break;
        }
    }
    return std::find(kUnitWords.begin(), kUnitWords.end(), t) != kUnitWords.end();
}

/// Removes \cmd{X} wrappers, keeping X.
void unwrap_command(std::string& s, std::string_view cmd) {
    std::size_t pos = 0;
    while ((pos = s.find(cmd, pos)) != std::string::npos) {
        std::size_t open = pos + cmd.size();
        while (open < s.size() && s[open] == ' ') ++open;
        // \textbf must not be mistaken for \text followed by "bf".
        if (open >= s.size() || s[open] != '{') {
            pos += cmd.size();
            continue;
        }
        std::size_t end = match_brace(s, open);
        if (end == std::string::npos) {
            pos += cmd.size();
            continue;
        }
        std::string inner = s.substr(open + 1, end - open - 2);
        s.replace(pos, end - pos, inner);
    }
}

/// Strips a trailing "(...)" group, unit words and attached unit suffixes,
/// then tries to read what is left as a number. Returns nullopt unless the
/// stripped remainder parses.
std::optional<Rational> parse_with_units(std::string_view text) {
    std::string s(trim(text));
    if (s.empty()) return std::nullopt;

    bool percent = false;
    auto strip_percent = [&] {
        std::string_view t = trim(s);
        if (t.ends_with("\\%")) {
            s = std::string(trim(t.substr(0, t.size() - 2)));
            percent = true;
        } else if (t.ends_with("%")) {
            s = std::string(trim(t.substr(0, t.size() - 1)));
            percent = true;
        }
    };
    strip_percent();

    std::vector<std::string> tokens;
    {
        std::size_t i = 0;
        while (i < s.size()) {
            while (i < s.size() && is_space(s[i])) ++i;
            std::size_t j = i;
            while (j < s.size() && !is_space(s[j])) ++j;
            if (j > i) tokens.emplace_back(s.substr(i, j - i));
            i = j;
        }
    }
    if (tokens.size() > 1 && tokens.back().front() == '(' && tokens.back().back() == ')') tokens.pop_back();
    while (tokens.size() > 1) {
        std::string last = lower(tokens.back());
        if (last == "percent" || last == "%") {
            percent = true;
            tokens.pop_back();
        } else if (is_unit_word(last)) {
            tokens.pop_back();
        } else {
            break;
        }
    }
    if (tokens.size() == 1) {
        // Attached unit, e.g. "5cm" or "12kg".
        const std::string& t = tokens.front();
        std::size_t cut = t.size();
        for (std::string_view power : {"^2", "^3"})
            if (cut > power.size() && std::string_view(t).substr(0, cut).ends_with(power)) cut -= power.size();
        while (cut > 0 && is_alpha(t[cut - 1])) --cut;
        if (cut > 0 && cut < t.size() && is_unit_word(t.substr(cut))) tokens.front() = t.substr(0, cut);
    }
    s.clear();
    for (const auto& t : tokens) {
        if (!s.empty()) s.push_back(' ');
        s += t;
    }
    if (!percent) strip_percent();

    // Thousands separators: only when the whole token is a grouped number.
    std::string_view v = trim(s);
    std::string grouped;
    {
        std::string_view body = v;
        std::string sign;
        if (!body.empty() && (body.front() == '-' || body.front() == '+')) {
            sign = body.front() == '-' ? "-" : "";
            body.remove_prefix(1);
        }
        std::size_t point = body.find('.');
        std::string_view int_part = body.substr(0, point);
        if (int_part.find(',') != std::string_view::npos) {
            bool ok = true;
            std::size_t first = int_part.find(',');
            if (first == 0 || first > 3) ok = false;
            for (std::size_t i = 0; ok && i < first; ++i) ok = is_digit(int_part[i]);
            std::size_t i = first;
            while (ok && i < int_part.size()) {
                if (int_part[i] != ',' || i + 4 > int_part.size()) {
                    ok = false;
                    break;
                }
                for (std::size_t k = 1; k <= 3; ++k) ok = ok && is_digit(int_part[i + k]);
                i += 4;
            }
            if (ok) {
                grouped = sign;
                for (char c : body)
                    if (c != ',') grouped.push_back(c);
                v = grouped;
            }
        }
    }

    auto value = parse_number(v);
    if (!value) return std::nullopt;
    if (percent) return value->divided_by(100);
    return value;
}

/// One pass of the string rewrite rules that precede numeric parsing.
std::string simplify(std::string_view input) {
    std::string s(trim(input));

    for (auto [open, close] : {std::pair{"\\(", "\\)"}, std::pair{"\\[", "\\]"}}) {
        std::string_view o = open, c = close;
        if (s.size() >= o.size() + c.size() && s.starts_with(o) && s.ends_with(c))
            s = std::string(trim(std::string_view(s).substr(o.size(), s.size() - o.size() - c.size())));
    }

    for (std::string_view noise : {"\\left", "\\right", "\\!", "\\,", "\\;", "\\:", "\\ ", "~"}) replace_all(s, noise, "");
    replace_all(s, "\\dfrac", "\\frac");
    replace_all(s, "\\tfrac", "\\frac");
    for (std::string_view cmd : {"\\textbf", "\\textit", "\\textnormal", "\\text", "\\mathrm", "\\mathbf", "\\mbox", "\\boxed"})
        unwrap_command(s, cmd);

    for (std::string_view currency : {"\\$", "$", "€", "£", "¥"}) replace_all(s, currency, "");
    for (std::string_view degree : {"^{\\circ}", "^\\circ", "°"}) replace_all(s, degree, "");

    std::string_view t = trim(s);
    while (!t.empty() && t.back() == '.') t = trim(t.substr(0, t.size() - 1));

    // "x = 5" -> "5"
    if (t.size() > 2 && is_alpha(t[0])) {
        std::size_t i = 1;
        while (i < t.size() && is_space(t[i])) ++i;
        if (i < t.size() && t[i] == '=') {
            std::string_view rest = trim(t.substr(i + 1));
            if (!rest.empty()) t = rest;
        }
    }
    if (t.size() > 1 && t.front() == '+' && (is_digit(t[1]) || t[1] == '.')) t.remove_prefix(1);
    return std::string(t);
}

/// One full normalization step; `numeric_out` is set when the result is a
/// rendered number.
std::string normalize_step(std::string_view s, std::optional<Rational>& numeric_out) {
    std::string simplified = simplify(s);
    if (auto value = parse_with_units(simplified)) {
        numeric_out = value;
        return value->to_string();
    }
    numeric_out.reset();
    return remove_whitespace(lower(simplified));
}

bool long_decimal(const Rational& r) { return r.terminates() && r.den() >= 1'000'000; }

} // namespace

// --- Rational ------------------------------------------------------------

Rational::Rational(std::int64_t num, std::int64_t den) {
    if (den == 0) throw InvalidArgument("rational with zero denominator");
    if (num == std::numeric_limits<std::int64_t>::min() || den == std::numeric_limits<std::int64_t>::min())
        throw InvalidArgument("rational component out of range");
    if (den < 0) {
        num = -num;
        den = -den;
    }
    std::int64_t g = std::gcd(num, den);
    if (g > 1) {
        num /= g;
        den /= g;
    }
    num_ = num;
    den_ = den;
}

std::optional<Rational> Rational::checked(std::int64_t num, std::int64_t den) {
    if (den == 0 || num == std::numeric_limits<std::int64_t>::min() ||
        den == std::numeric_limits<std::int64_t>::min())
        return std::nullopt;
    return Rational(num, den);
}

std::optional<Rational> Rational::divided_by(std::int64_t divisor) const {
    return checked_div(*this, Rational(divisor));
}

bool Rational::terminates() const noexcept {
    std::int64_t d = den_;
    while (d % 2 == 0) d /= 2;
    while (d % 5 == 0) d /= 5;
    return d == 1;
}

std::string Rational::to_string() const {
    if (den_ == 1) return std::to_string(num_);
    if (terminates()) {
        for (int k = 1; k <= 18; ++k) {
            std::int64_t scale = pow10(k);
            if (scale % den_ != 0) continue;
            i128 scaled = static_cast<i128>(num_) * (scale / den_);
            bool negative = scaled < 0;
            if (negative) scaled = -scaled;
            auto int_part = static_cast<std::int64_t>(scaled / scale);
            auto frac_part = static_cast<std::int64_t>(scaled % scale);
            std::string frac = std::to_string(frac_part);
            frac.insert(0, static_cast<std::size_t>(k) - frac.size(), '0');
            return (negative ? "-" : "") + std::to_string(int_part) + "." + frac;
        }
    }
    return std::to_string(num_) + "/" + std::to_string(den_);
}

// --- verdicts ------------------------------------------------------------

std::string_view to_string(VerdictReason reason) {
    switch (reason) {
    case VerdictReason::numeric_equal: return "numeric_equal";
    case VerdictReason::string_equal: return "string_equal";
    case VerdictReason::mismatch: return "mismatch";
    case VerdictReason::no_prediction: return "no_prediction";
    }
    return "unknown";
}

std::optional<VerdictReason> verdict_reason_from_string(std::string_view name) {
    for (auto r : {VerdictReason::numeric_equal, VerdictReason::string_equal, VerdictReason::mismatch,
                   VerdictReason::no_prediction})
        if (to_string(r) == name) return r;
    return std::nullopt;
}

// --- extraction ----------------------------------------------------------

std::optional<std::string> extract(std::string_view text) {
    for (std::string_view cmd : {"\\boxed", "\\fbox"}) {
        std::size_t pos = 0;
        std::optional<std::string> best;
        while ((pos = text.find(cmd, pos)) != std::string_view::npos) {
            std::size_t i = pos + cmd.size();
            pos = i;
            if (i < text.size() && is_alpha(text[i])) continue; // e.g. \boxedx is another command
            while (i < text.size() && text[i] == ' ') ++i;
            if (i >= text.size()) continue;
            std::string candidate;
            if (text[i] == '{') {
                std::size_t end = match_brace(text, i);
                if (end == std::string_view::npos) continue;
                candidate = std::string(trim(text.substr(i + 1, end - i - 2)));
            } else if (i > pos && cmd == "\\boxed") {
                // "\boxed 5": one whitespace-delimited token.
                std::size_t j = i;
                while (j < text.size() && !is_space(text[j]) && text[j] != '$') ++j;
                candidate = std::string(text.substr(i, j - i));
            } else {
                continue;
            }
            if (candidate.empty()) continue;
            best = std::move(candidate);
        }
        // \fbox is only consulted when the text has no valid \boxed.
        if (best) return best;
    }

    // Fallback: the last "answer is X".
    constexpr std::string_view marker = "answer is";
    std::size_t last = std::string_view::npos;
    for (std::size_t i = 0; i + marker.size() <= text.size(); ++i)
        if (starts_with_ci(text.substr(i), marker)) last = i;
    if (last == std::string_view::npos) return std::nullopt;
    std::string_view rest = text.substr(last + marker.size());
    if (auto nl = rest.find('\n'); nl != std::string_view::npos) rest = rest.substr(0, nl);
    rest = trim(rest);
    while (!rest.empty() && (rest.front() == ':' || rest.front() == '*' || is_space(rest.front())))
        rest.remove_prefix(1);
    // Stop at a sentence end: a period followed by whitespace.
    for (std::size_t i = 0; i + 1 < rest.size(); ++i) {
        if (rest[i] == '.' && is_space(rest[i + 1])) {
            rest = rest.substr(0, i);
            break;
        }
    }
    rest = trim(rest);
    while (!rest.empty() && (rest.back() == '.' || rest.back() == '*' || rest.back() == '!')) rest = trim(rest.substr(0, rest.size() - 1));
    if (rest.empty()) return std::nullopt;
    return std::string(rest);
}

// --- normalization -------------------------------------------------------

CanonicalAnswer normalize(std::string_view raw) {
    std::string_view trimmed = trim(raw);
    if (trimmed.empty()) throw EmptyAnswer();

    CanonicalAnswer out;
    out.raw = std::string(raw);

    std::string current(trimmed);
    std::optional<Rational> numeric;
    for (int iteration = 0; iteration < 64; ++iteration) {
        std::string next = normalize_step(current, numeric);
        if (next.empty()) {
            // Nothing survives the rewrite rules (e.g. a lone "$"): keep the
            // literal text so the result is still a fixed point.
            numeric.reset();
            current = remove_whitespace(lower(trimmed));
            break;
        }
        if (next == current) break;
        current = std::move(next);
    }
    out.canonical = std::move(current);
    out.numeric = numeric;
    return out;
}

std::optional<CanonicalAnswer> extract_answer(std::string_view text) {
    auto raw = extract(text);
    if (!raw) return std::nullopt;
    try {
        return normalize(*raw);
    } catch (const EmptyAnswer&) {
        return std::nullopt;
    }
}

// --- comparison ----------------------------------------------------------

bool equivalent(const CanonicalAnswer& a, const CanonicalAnswer& b) {
    if (a.numeric && b.numeric) {
        if (*a.numeric == *b.numeric) return true;
        if (!long_decimal(*a.numeric) && !long_decimal(*b.numeric)) return false;
        double x = a.numeric->to_double();
        double y = b.numeric->to_double();
        double scale = std::max(std::abs(x), std::abs(y));
        return std::abs(x - y) <= kDecimalRelativeTolerance * scale;
    }
    if (a.numeric || b.numeric) return false;
    return a.canonical == b.canonical;
}

std::optional<CanonicalAnswer> mode(std::span<const std::optional<CanonicalAnswer>> answers) {
    struct Group {
        const CanonicalAnswer* representative;
        std::size_t count;
    };
    std::vector<Group> groups;
    for (const auto& answer : answers) {
        if (!answer) continue;
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&](const Group& g) { return equivalent(*g.representative, *answer); });
        if (it != groups.end()) {
            ++it->count;
        } else {
            groups.push_back({&*answer, 1});
        }
    }
    if (groups.empty()) return std::nullopt;
    // Groups are created in agent order, so the first maximum holds the lowest index.
    auto best = std::max_element(groups.begin(), groups.end(),
                                 [](const Group& a, const Group& b) { return a.count < b.count; });
    return *best->representative;
}

Verdict grade(const std::optional<CanonicalAnswer>& predicted, const CanonicalAnswer& gold) {
    if (!predicted) return {false, VerdictReason::no_prediction};
    if (!equivalent(*predicted, gold)) return {false, VerdictReason::mismatch};
    return {true, predicted->numeric ? VerdictReason::numeric_equal : VerdictReason::string_equal};
}

} // namespace debate::grading
