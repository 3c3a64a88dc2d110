#pragma once

#include <string>
#include <string_view>

namespace segsum {

/// Porter (1980) suffix-stripping stemmer for lowercase ASCII words. Words
/// containing anything other than a-z are returned unchanged.
std::string porter_stem(std::string_view word);

} // namespace segsum
