// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dfr {

/// Deterministic token-count estimate used for prompt budgeting.
///
/// Counts ceil(len/4) per maximal alphanumeric run and 1 per other
/// non-whitespace character; whitespace is free. The estimate is additive
/// over whitespace-delimited concatenation and never undercounts a text
/// below a quarter of its word count.
int estimate_tokens(std::string_view text);

/// Lowercased terms for lexical retrieval. Keeps image references and
/// flag-style tokens intact: letters, digits, and the joiners . : / _ = -
/// form one term; every other character separates. Leading and trailing
/// joiners are stripped from each term.
std::vector<std::string> retrieval_tokens(std::string_view text);

}  // namespace dfr
