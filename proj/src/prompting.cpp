// SPDX-License-Identifier: Apache-2.0
#include "dfr/prompting.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "dfr/tokens.hpp"

namespace dfr {

namespace {

std::size_t count_occurrences(const std::string& text, const std::string& needle) {
    std::size_t count = 0;
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        ++count;
        pos += needle.size();
    }
    return count;
}

void require_exactly_once(const std::string& section, const std::string& body,
                          const std::string& slot) {
    std::size_t count = count_occurrences(body, slot);
    if (count != 1) {
        throw TemplateError("[" + section + "] must contain " + slot + " exactly once, found " +
                            std::to_string(count));
    }
}

std::string substitute(std::string text, const std::string& slot, const std::string& value) {
    std::size_t pos = text.find(slot);
    if (pos != std::string::npos) text.replace(pos, slot.size(), value);
    return text;
}

std::string trim_newlines(std::string text) {
    while (!text.empty() && text.front() == '\n') text.erase(text.begin());
    while (!text.empty() && text.back() == '\n') text.pop_back();
    return text;
}

}  // namespace

PromptTemplate PromptTemplate::load(const std::filesystem::path& path, const Taxonomy& taxonomy) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TemplateError("cannot open template file: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return from_text(buffer.str(), taxonomy);
}

PromptTemplate PromptTemplate::from_text(const std::string& text, const Taxonomy& taxonomy) {
    PromptTemplate result;
    result.action_catalog = ::dfr::action_catalog(taxonomy);

    std::string current;
    std::map<std::string, std::string> sections;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line == "[task]" || line == "[demo]" || line == "[query]") {
            current = line.substr(1, line.size() - 2);
            continue;
        }
        if (current.empty()) {
            if (line.empty()) continue;
            throw TemplateError("template text precedes the first section header");
        }
        sections[current] += line;
        sections[current] += '\n';
    }
    for (const char* name : {"task", "demo", "query"}) {
        if (!sections.contains(name)) {
            throw TemplateError(std::string("template is missing the [") + name + "] section");
        }
    }
    result.task_description = trim_newlines(sections["task"]);
    result.demo_format = trim_newlines(sections["demo"]);
    result.query_format = trim_newlines(sections["query"]);

    require_exactly_once("demo", result.demo_format, "{{v_before}}");
    require_exactly_once("demo", result.demo_format, "{{v_after}}");
    require_exactly_once("demo", result.demo_format, "{{actions}}");
    require_exactly_once("query", result.query_format, "{{query}}");
    for (const char* slot : {"{{v_before}}", "{{v_after}}", "{{actions}}", "{{query}}"}) {
        if (result.task_description.find(slot) != std::string::npos) {
            throw TemplateError(std::string("[task] may not contain the ") + slot + " slot");
        }
    }
    return result;
}

std::string render_actions(const std::vector<RefactoringAction>& actions) {
    if (actions.empty()) return "- none";
    std::string out;
    for (const auto& action : actions) {
        out += "- ";
        out += action.type;
        if (!action.params.empty()) {
            out += " (";
            bool first = true;
            for (const auto& [key, value] : action.params) {
                if (!first) out += ", ";
                first = false;
                out += key;
                out += '=';
                out += value;
            }
            out += ')';
        }
        out += '\n';
    }
    out.pop_back();
    return out;
}

int max_shots(int context_window, int template_tokens, int per_demo_tokens, int query_tokens,
              int cap) {
    if (context_window < 0 || template_tokens < 0 || per_demo_tokens < 0 || query_tokens < 0) {
        throw BudgetError("token counts must be non-negative");
    }
    int fixed = template_tokens + query_tokens;
    if (context_window <= fixed) {
        throw BudgetError("query and template occupy " + std::to_string(fixed) +
                          " tokens, exceeding the " + std::to_string(context_window) +
                          "-token window");
    }
    if (per_demo_tokens == 0) return cap >= 0 ? cap : context_window;
    int shots = (context_window - fixed) / per_demo_tokens;
    if (cap >= 0 && shots > cap) shots = cap;
    return shots;
}

AssembledPrompt assemble(const PromptTemplate& prompt_template,
                         const std::vector<ScoredDemonstration>& selected,
                         const DockerfileAst& query, int context_window) {
    std::string query_text = query.raw_text.empty() ? serialize(query) : query.raw_text;
    std::string preamble = prompt_template.task_description + "\n\n" +
                           prompt_template.action_catalog + "\n";
    std::string query_block = substitute(prompt_template.query_format, "{{query}}", query_text);

    std::vector<std::string> demo_blocks;
    demo_blocks.reserve(selected.size());
    for (const auto& entry : selected) {
        std::string block = prompt_template.demo_format;
        block = substitute(block, "{{v_before}}", entry.demo.v_before);
        block = substitute(block, "{{v_after}}", entry.demo.v_after);
        block = substitute(block, "{{actions}}", render_actions(entry.demo.actions));
        demo_blocks.push_back(std::move(block));
    }

    // Drop from the front: the list arrives ascending, so the weakest
    // demonstrations go first when the window is tight.
    for (std::size_t skip = 0; skip <= demo_blocks.size(); ++skip) {
        std::string text = preamble;
        for (std::size_t i = skip; i < demo_blocks.size(); ++i) {
            text += '\n';
            text += demo_blocks[i];
            text += '\n';
        }
        text += '\n';
        text += query_block;
        text += '\n';
        int estimate = estimate_tokens(text);
        if (estimate <= context_window) {
            AssembledPrompt prompt;
            prompt.text = std::move(text);
            prompt.shots = static_cast<int>(demo_blocks.size() - skip);
            prompt.token_estimate = estimate;
            for (std::size_t i = skip; i < selected.size(); ++i) {
                prompt.demo_ids.push_back(selected[i].demo.id);
            }
            return prompt;
        }
    }
    throw BudgetError("zero-shot prompt exceeds the " + std::to_string(context_window) +
                      "-token window");
}

}  // namespace dfr
