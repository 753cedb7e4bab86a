#pragma once

// Small string helpers shared by the parsers and prompt plumbing.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace deepreport::text {

std::string_view trim(std::string_view s) noexcept;
std::string to_lower(std::string_view s);
bool contains_ci(std::string_view haystack, std::string_view needle);
bool starts_with(std::string_view s, std::string_view prefix) noexcept;
std::vector<std::string> split_lines(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string replace_all(std::string s, std::string_view from, std::string_view to);

/// Lowercase alphanumeric word tokens, used for keyword overlap checks.
std::vector<std::string> words(std::string_view s);

/// Content words: lowercase, length >= min_len, not a stopword, not numeric.
std::set<std::string> content_words(std::string_view s, std::size_t min_len = 3);

/// Proxy tokenizer used for token accounting and AVR economy figures.
/// Punctuation characters are one token each; alphanumeric runs cost
/// ceil(len / 6) tokens to approximate subword splitting.
std::size_t proxy_token_count(std::string_view s);

/// Number of UTF-8 code points.
std::size_t utf8_length(std::string_view s) noexcept;

/// Removes a surrounding ``` fence (with optional language tag) if present.
std::string strip_code_fences(std::string_view s);

/// Returns the first balanced {...} object in s, honouring JSON strings.
std::optional<std::string> extract_json_object(std::string_view s);

/// Lowercase slug from free text: "Lifecycle GHG Emissions" -> "lifecycle-ghg-emissions".
std::string slugify(std::string_view s);

std::uint64_t fnv1a(std::string_view s) noexcept;

}  // namespace deepreport::text
