#pragma once

#include <string>
#include <string_view>

namespace coach::utf8 {

/// Decodes UTF-8 into Unicode scalar values. Ill-formed sequences decode to
/// U+FFFD, one per offending byte.
std::u32string decode(std::string_view text);

std::string encode(std::u32string_view scalars);

/// Number of Unicode scalar values in `text`.
std::size_t length(std::string_view text);

}  // namespace coach::utf8
