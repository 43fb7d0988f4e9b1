#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace twinforge::text {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

/// Lowercased tokens split on whitespace; each punctuation character becomes
/// its own token. Used by the natural-language metrics.
std::vector<std::string> tokenize(std::string_view s);

/// Lowercased runs of [a-z0-9_]; everything else separates words.
std::vector<std::string> words(std::string_view s);

/// Whitespace-separated fields, case preserved.
std::vector<std::string> split_whitespace(std::string_view s);

std::vector<std::string> split_lines(std::string_view s);

/// Collapses whitespace runs to one space and trims the ends.
std::string normalize_whitespace(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace twinforge::text
