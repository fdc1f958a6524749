#pragma once

// Answer extraction, normalization and comparison.
//
// Answers are reduced to a CanonicalAnswer: a normalized string plus, when the
// answer is a number, fraction, decimal or percentage, an exact rational value.
// Expression answers (radicals, intervals, tuples) are compared by canonical
// string only; there is no symbolic equivalence.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace debate::grading {

/// Exact rational with a positive denominator, always in lowest terms.
class Rational {
public:
    constexpr Rational() = default;
    /// Throws InvalidArgument on a zero denominator.
    Rational(std::int64_t num, std::int64_t den = 1);

    std::int64_t num() const noexcept { return num_; }
    std::int64_t den() const noexcept { return den_; }
    double to_double() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }

    /// True when the denominator has no prime factors other than 2 and 5.
    bool terminates() const noexcept;

    /// Integer, terminating decimal, or "a/b".
    std::string to_string() const;

    /// nullopt on int64 overflow.
    static std::optional<Rational> checked(std::int64_t num, std::int64_t den);
    std::optional<Rational> divided_by(std::int64_t divisor) const;

    friend bool operator==(const Rational&, const Rational&) = default;

private:
    std::int64_t num_ = 0;
    std::int64_t den_ = 1;
};

struct CanonicalAnswer {
    std::string raw;
    std::string canonical;
    std::optional<Rational> numeric;

    bool is_numeric() const noexcept { return numeric.has_value(); }
    friend bool operator==(const CanonicalAnswer&, const CanonicalAnswer&) = default;
};

enum class VerdictReason { numeric_equal, string_equal, mismatch, no_prediction };

std::string_view to_string(VerdictReason reason);
std::optional<VerdictReason> verdict_reason_from_string(std::string_view name);

struct Verdict {
    bool correct = false;
    VerdictReason reason = VerdictReason::no_prediction;
    friend bool operator==(const Verdict&, const Verdict&) = default;
};

/// Content of the last balanced \boxed{...} (or \fbox{...}, or "\boxed x")
/// in the text; otherwise the last "answer is X"; otherwise nullopt.
std::optional<std::string> extract(std::string_view text);

/// Throws EmptyAnswer when raw is blank.
CanonicalAnswer normalize(std::string_view raw);

/// extract followed by normalize; nullopt if either step yields nothing.
std::optional<CanonicalAnswer> extract_answer(std::string_view text);

/// Relative tolerance used when either side is a long decimal expansion.
inline constexpr double kDecimalRelativeTolerance = 1e-9;

bool equivalent(const CanonicalAnswer& a, const CanonicalAnswer& b);

/// Most frequent answer under `equivalent`. The span is indexed by agent;
/// absent entries are skipped. Ties go to the group containing the lowest
/// agent index, and the returned representative is that group's first member.
std::optional<CanonicalAnswer> mode(std::span<const std::optional<CanonicalAnswer>> answers);

Verdict grade(const std::optional<CanonicalAnswer>& predicted, const CanonicalAnswer& gold);

} // namespace debate::grading
