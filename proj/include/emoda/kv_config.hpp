// SPDX-License-Identifier: Apache-2.0
#pragma once

// UTF-8 "key=value" files: one key per line, '#' starts a comment,
// surrounding whitespace ignored.

#include <filesystem>
#include <map>
#include <string>

namespace emoda {

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_kv(const std::string& text);
KeyValues read_kv_file(const std::filesystem::path& path);
void write_kv_file(const std::filesystem::path& path, const KeyValues& kv);

double kv_double(const std::string& key, const std::string& value);
long long kv_int(const std::string& key, const std::string& value);
bool kv_bool(const std::string& key, const std::string& value);
/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

}  // namespace emoda
