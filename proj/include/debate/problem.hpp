#pragma once

#include "debate/grading.hpp"

#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace debate {

enum class DatasetName { gsm8k, asdiv, math };

std::string_view to_string(DatasetName name);
std::optional<DatasetName> dataset_name_from_string(std::string_view name);

/// One benchmark question with its gold answer.
struct Problem {
    std::string question_id;
    std::string question_text;
    grading::CanonicalAnswer gold_answer;
    DatasetName dataset = DatasetName::gsm8k;
    /// grade / solution_type / unit for ASDiv, subject / level for MATH,
    /// reasoning for GSM-8K.
    std::map<std::string, std::string> metadata;

    friend bool operator==(const Problem&, const Problem&) = default;
};

} // namespace debate
