// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dfr/ast.hpp"
#include "dfr/errors.hpp"
#include "dfr/refactoring.hpp"
#include "dfr/retrieval.hpp"

namespace dfr {

/// The prompt skeleton: a task preamble, the action catalog, and per-demo
/// and query formats with `{{...}}` slots. Loaded from a sectioned text file
/// ([task] / [demo] / [query] headers); the catalog is rendered from the
/// taxonomy at load time.
struct PromptTemplate {
    std::string task_description;
    std::string action_catalog;
    std::string demo_format;   // slots: {{v_before}}, {{v_after}}, {{actions}}
    std::string query_format;  // slot: {{query}}

    static PromptTemplate load(const std::filesystem::path& path, const Taxonomy& taxonomy);
    static PromptTemplate from_text(const std::string& text, const Taxonomy& taxonomy);
};

struct AssembledPrompt {
    std::string text;
    int shots = 0;
    int token_estimate = 0;
    std::vector<std::string> demo_ids;  // ascending score, matching the text order
};

/// floor((context_window - template_tokens - query_tokens) / per_demo_tokens),
/// clamped to `cap` when cap >= 0. Raises BudgetError when the template and
/// query alone fill the window.
int max_shots(int context_window, int template_tokens, int per_demo_tokens, int query_tokens,
              int cap = -1);

/// Renders task + catalog + demonstrations (ascending score, strongest last)
/// + query. Demonstrations are dropped from the front until the token
/// estimate fits the window; an overflowing zero-shot prompt is a BudgetError.
AssembledPrompt assemble(const PromptTemplate& prompt_template,
                         const std::vector<ScoredDemonstration>& selected,
                         const DockerfileAst& query, int context_window);

/// Plain-text rendering of an action list for the {{actions}} slot.
std::string render_actions(const std::vector<RefactoringAction>& actions);

}  // namespace dfr
