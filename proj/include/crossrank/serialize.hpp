#pragma once

// Shared helpers for the project's JSON and file outputs.

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

namespace crossrank {

using ordered_json = nlohmann::ordered_json;

bool is_valid_utf8(std::string_view s);

std::string to_hex(std::string_view bytes);
// Throws FormatError on odd length or non-hex digits.
std::string from_hex(std::string_view hex);

// Byte strings are stored as `key` when they are valid UTF-8 and as
// `key_hex` otherwise, so arbitrary bytes survive a JSON round trip.
void put_bytes(ordered_json& obj, const std::string& key, std::string_view bytes);
// Reads `key` or `key_hex`. Throws FormatError when neither is a string.
std::string get_bytes(const nlohmann::json& obj, const std::string& key);
bool has_bytes(const nlohmann::json& obj, const std::string& key);

// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents);

std::string read_file(const std::filesystem::path& path);

}  // namespace crossrank
