#pragma once

#include <stdexcept>
#include <string>

namespace debate {

/// Base class for every error this library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// backends

class MissingCredential : public Error {
public:
    explicit MissingCredential(const std::string& env_var)
        : Error("credential environment variable '" + env_var + "' is unset or empty"), env_var_(env_var) {}
    const std::string& env_var() const noexcept { return env_var_; }

private:
    std::string env_var_;
};

class ProviderError : public Error {
public:
    ProviderError(int status, std::string body_excerpt)
        : Error("provider error (status " + std::to_string(status) + "): " + body_excerpt),
          status_(status), body_excerpt_(std::move(body_excerpt)) {}
    int status() const noexcept { return status_; }
    const std::string& body_excerpt() const noexcept { return body_excerpt_; }

private:
    int status_;
    std::string body_excerpt_;
};

class MalformedProviderResponse : public Error {
public:
    using Error::Error;
};

class CacheCorrupt : public Error {
public:
    using Error::Error;
};

class EmptyScript : public Error {
public:
    EmptyScript() : Error("mock_scripted requires a non-empty script") {}
};

// protocol

class TemplateError : public Error {
public:
    using Error::Error;
};

class EmptySummary : public Error {
public:
    EmptySummary() : Error("debate prompt requires a non-empty summary") {}
};

// grading

class EmptyAnswer : public Error {
public:
    EmptyAnswer() : Error("answer is empty after whitespace strip") {}
};

// datasets

class DatasetError : public Error {
public:
    using Error::Error;
};

class MalformedRecord : public DatasetError {
public:
    explicit MalformedRecord(std::size_t line_no, const std::string& what = "malformed record")
        : DatasetError(what + " at line " + std::to_string(line_no)), line_no_(line_no) {}
    std::size_t line_no() const noexcept { return line_no_; }

private:
    std::size_t line_no_;
};

class MissingAnswerMarker : public DatasetError {
public:
    explicit MissingAnswerMarker(std::size_t line_no)
        : DatasetError("answer lacks '#### ' marker at line " + std::to_string(line_no)), line_no_(line_no) {}
    std::size_t line_no() const noexcept { return line_no_; }

private:
    std::size_t line_no_;
};

class XmlParseError : public DatasetError {
public:
    using DatasetError::DatasetError;
};

class MissingField : public DatasetError {
public:
    MissingField(std::string problem_id, std::string field)
        : DatasetError("problem '" + problem_id + "' is missing field '" + field + "'"),
          problem_id_(std::move(problem_id)), field_(std::move(field)) {}
    const std::string& problem_id() const noexcept { return problem_id_; }
    const std::string& field() const noexcept { return field_; }

private:
    std::string problem_id_;
    std::string field_;
};

class NoBoxedAnswer : public DatasetError {
public:
    explicit NoBoxedAnswer(const std::string& problem_id)
        : DatasetError("solution of '" + problem_id + "' has no boxed answer"), problem_id_(problem_id) {}
    const std::string& problem_id() const noexcept { return problem_id_; }

private:
    std::string problem_id_;
};

class ParseError : public DatasetError {
public:
    using DatasetError::DatasetError;
};

class SampleTooLarge : public DatasetError {
public:
    SampleTooLarge(std::size_t n, std::size_t available)
        : DatasetError("sample of " + std::to_string(n) + " requested from " + std::to_string(available) +
                       " problems") {}
};

// harness

class InconsistentRounds : public Error {
public:
    using Error::Error;
};

class ConfigMismatch : public Error {
public:
    using Error::Error;
};

class GoldLookupFailure : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace debate
