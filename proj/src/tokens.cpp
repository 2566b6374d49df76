// SPDX-License-Identifier: Apache-2.0
#include "dfr/tokens.hpp"

#include <cctype>

namespace dfr {

int estimate_tokens(std::string_view text) {
    int total = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (std::isspace(c)) {
            ++i;
            continue;
        }
        if (std::isalnum(c)) {
            std::size_t start = i;
            while (i < text.size() && std::isalnum(static_cast<unsigned char>(text[i]))) ++i;
            std::size_t len = i - start;
            total += static_cast<int>((len + 3) / 4);
        } else {
            ++total;
            ++i;
        }
    }
    return total;
}

std::vector<std::string> retrieval_tokens(std::string_view text) {
    auto is_core = [](unsigned char c) { return std::isalnum(c) != 0; };
    auto is_joiner = [](unsigned char c) {
        return c == '.' || c == ':' || c == '/' || c == '_' || c == '=' || c == '-';
    };
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (!is_core(c) && !is_joiner(c)) {
            ++i;
            continue;
        }
        std::size_t start = i;
        while (i < text.size()) {
            unsigned char d = static_cast<unsigned char>(text[i]);
            if (!is_core(d) && !is_joiner(d)) break;
            ++i;
        }
        std::size_t end = i;
        while (start < end && is_joiner(static_cast<unsigned char>(text[start]))) ++start;
        while (end > start && is_joiner(static_cast<unsigned char>(text[end - 1]))) --end;
        if (start == end) continue;
        std::string term;
        term.reserve(end - start);
        for (std::size_t k = start; k < end; ++k) {
            term.push_back(
                static_cast<char>(std::tolower(static_cast<unsigned char>(text[k]))));
        }
        out.push_back(std::move(term));
    }
    return out;
}

}  // namespace dfr
