#include "debate/problem.hpp"

namespace debate {

std::string_view to_string(DatasetName name) {
    switch (name) {
    case DatasetName::gsm8k: return "gsm8k";
    case DatasetName::asdiv: return "asdiv";
    case DatasetName::math: return "math";
    }
    return "unknown";
}

std::optional<DatasetName> dataset_name_from_string(std::string_view name) {
    if (name == "gsm8k") return DatasetName::gsm8k;
    if (name == "asdiv") return DatasetName::asdiv;
    if (name == "math") return DatasetName::math;
    return std::nullopt;
}

} // namespace debate
