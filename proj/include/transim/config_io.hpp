#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "transim/merror.hpp"
#include "transim/trial_model.hpp"

namespace transim {

using Json = nlohmann::json;

/// Unreadable or unwritable files.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Parses a config document: JSON that may carry // and /* */ comments.
/// Syntax errors become a ValidationError at path "(document)".
Json parse_config_text(std::string_view text);

// Config documents <-> structs. The *_from_json functions check shape and
// types only and report every problem with its field path; semantic checks
// live in validate_config / validate_merror_config / validate_synthetic.

PowerStudyConfig power_config_from_json(const Json& doc);
Json to_json(const PowerStudyConfig& config);

MErrorConfig merror_config_from_json(const Json& doc);
Json to_json(const MErrorConfig& config);

SyntheticSpec synthetic_spec_from_json(const Json& doc);
Json to_json(const SyntheticSpec& spec);

}  // namespace transim
