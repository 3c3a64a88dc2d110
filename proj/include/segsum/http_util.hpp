#pragma once

#include <string>
#include <string_view>

namespace segsum {

/// "https://host:8080/v1/x?q" -> origin "https://host:8080", path "/v1/x?q".
struct SplitUrl {
    std::string origin;
    std::string path;
};

SplitUrl split_url(std::string_view url);

} // namespace segsum
