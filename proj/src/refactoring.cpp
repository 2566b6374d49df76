// SPDX-License-Identifier: Apache-2.0
#include "dfr/refactoring.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace dfr {

namespace {

using nlohmann::json;

constexpr const char* kCoreTypes[] = {
    kExtractStage,   kInlineStage,    kInlineRunInstruction, kSortInstructions,
    kUpdateImageTag, kUpdateBaseImage, kRenameImage,
};

constexpr const char* kOmittedTypes[] = {"MoveStage", "ExtractRunInstruction"};

std::string collapse_ws(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out.push_back(' ');
        in_space = false;
        out.push_back(c);
    }
    return out;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

/// Canonical text for multiset/sequence comparison of instructions.
std::string instruction_key(const Instruction& instr) {
    std::string key = instruction_keyword(instr.kind);
    for (const auto& [name, value] : instr.flags) {
        key += " --";
        key += name;
        key += '=';
        key += value;
    }
    for (const auto& arg : instr.args) {
        key += ' ';
        key += collapse_ws(arg);
    }
    return key;
}

json span_to_json(const SourceSpan& span) {
    return json{{"start_line", span.start_line}, {"end_line", span.end_line}};
}

SourceSpan span_from_json(const json& value) {
    SourceSpan span;
    span.start_line = value.at("start_line").get<int>();
    span.end_line = value.at("end_line").get<int>();
    return span;
}

SourceSpan stage_span(const Stage& stage) {
    SourceSpan span;
    if (stage.instructions.empty()) return span;
    span.start_line = stage.instructions.front().span.start_line;
    span.end_line = stage.instructions.back().span.end_line;
    return span;
}

int copy_from_count(const DockerfileAst& ast) {
    int count = 0;
    for (const auto& stage : ast.stages) {
        for (const auto& instr : stage.instructions) {
            if ((instr.kind == InstructionKind::Copy || instr.kind == InstructionKind::Add) &&
                instr.flags.contains("from")) {
                ++count;
            }
        }
    }
    return count;
}

struct Detector {
    const DockerfileAst& before;
    const DockerfileAst& after;
    std::vector<RefactoringAction> actions;
    bool residual = false;

    void unclassified_whole_file() {
        residual = true;
    }

    /// Renames detected positionally: both stages aliased, names differ.
    /// Returns a before-copy with the renames applied so later passes see
    /// matching reference structure.
    DockerfileAst apply_renames() {
        DockerfileAst renamed = before;
        if (before.stages.size() != after.stages.size()) return renamed;
        for (std::size_t i = 0; i < before.stages.size(); ++i) {
            const std::string& old_alias = before.stages[i].alias;
            const std::string& new_alias = after.stages[i].alias;
            if (old_alias.empty() || new_alias.empty() || old_alias == new_alias) continue;
            rename_stage(renamed, i, new_alias);
            RefactoringAction action;
            action.type = kRenameImage;
            action.before_spans = {before.stages[i].instructions.front().span};
            action.after_spans = {after.stages[i].instructions.front().span};
            action.params = {{"old_name", old_alias}, {"new_name", new_alias}};
            actions.push_back(std::move(action));
        }
        return renamed;
    }

    void compare_from(const Stage& b, const Stage& a) {
        if (b.base.is_stage_ref() || a.base.is_stage_ref()) {
            if (!(b.base == a.base)) residual = true;
            return;
        }
        std::string b_name = b.base.registry.empty() ? b.base.name
                                                     : b.base.registry + "/" + b.base.name;
        std::string a_name = a.base.registry.empty() ? a.base.name
                                                     : a.base.registry + "/" + a.base.name;
        if (b_name == a_name && b.base.tag == a.base.tag && b.base.digest == a.base.digest) return;
        RefactoringAction action;
        action.before_spans = {b.instructions.front().span};
        action.after_spans = {a.instructions.front().span};
        if (b_name == a_name) {
            action.type = kUpdateImageTag;
            action.params = {{"image", b_name},
                             {"old_tag", b.base.tag.empty() ? b.base.digest : b.base.tag},
                             {"new_tag", a.base.tag.empty() ? a.base.digest : a.base.tag}};
        } else {
            action.type = kUpdateBaseImage;
            action.params = {{"old_image", image_ref_string(b.base)},
                             {"new_image", image_ref_string(a.base)}};
        }
        actions.push_back(std::move(action));
    }

    /// Body instructions of a stage, excluding the leading FROM.
    static std::vector<const Instruction*> body(const Stage& stage) {
        std::vector<const Instruction*> out;
        for (std::size_t i = 1; i < stage.instructions.size(); ++i) {
            out.push_back(&stage.instructions[i]);
        }
        return out;
    }

    /// Finds groups of k>=2 contiguous before-RUNs whose concatenated command
    /// lists equal one after-RUN's command list; claims both sides.
    void match_inline_runs(std::vector<const Instruction*>& b_body,
                           std::vector<const Instruction*>& a_body) {
        for (std::size_t ai = 0; ai < a_body.size(); ++ai) {
            const Instruction* merged = a_body[ai];
            if (merged->kind != InstructionKind::Run || merged->args.empty()) continue;
            std::vector<std::string> target = split_commands(merged->args[0]);
            if (target.size() < 2) continue;
            for (std::size_t bi = 0; bi + 1 < b_body.size(); ++bi) {
                if (b_body[bi]->kind != InstructionKind::Run) continue;
                std::vector<std::string> acc;
                std::size_t end = bi;
                while (end < b_body.size() && b_body[end]->kind == InstructionKind::Run &&
                       acc.size() < target.size()) {
                    if (b_body[end]->args.empty()) break;
                    auto cmds = split_commands(b_body[end]->args[0]);
                    acc.insert(acc.end(), cmds.begin(), cmds.end());
                    ++end;
                    if (acc == target && end - bi >= 2) {
                        RefactoringAction action;
                        action.type = kInlineRunInstruction;
                        for (std::size_t k = bi; k < end; ++k) {
                            action.before_spans.push_back(b_body[k]->span);
                        }
                        action.after_spans = {merged->span};
                        action.params = {{"merged_count", std::to_string(end - bi)}};
                        actions.push_back(std::move(action));
                        b_body.erase(b_body.begin() + static_cast<std::ptrdiff_t>(bi),
                                     b_body.begin() + static_cast<std::ptrdiff_t>(end));
                        a_body.erase(a_body.begin() + static_cast<std::ptrdiff_t>(ai));
                        --ai;
                        bi = b_body.size();  // restart outer loop on next after-RUN
                        break;
                    }
                }
                if (bi == b_body.size()) break;
            }
        }
    }

    /// Same-shape comparison of one aligned stage pair.
    void compare_stage_bodies(const Stage& b_stage, const Stage& a_stage) {
        auto b_body = body(b_stage);
        auto a_body = body(a_stage);
        auto equal_seq = [&]() {
            if (b_body.size() != a_body.size()) return false;
            for (std::size_t i = 0; i < b_body.size(); ++i) {
                if (!instruction_equal(*b_body[i], *a_body[i])) return false;
            }
            return true;
        };
        if (equal_seq()) return;
        match_inline_runs(b_body, a_body);
        if (equal_seq()) return;

        std::vector<std::string> b_keys, a_keys;
        for (const auto* instr : b_body) b_keys.push_back(instruction_key(*instr));
        for (const auto* instr : a_body) a_keys.push_back(instruction_key(*instr));
        auto b_sorted = b_keys;
        auto a_sorted = a_keys;
        std::sort(b_sorted.begin(), b_sorted.end());
        std::sort(a_sorted.begin(), a_sorted.end());
        if (b_sorted == a_sorted && b_keys != a_keys &&
            functional_fingerprint(before) == functional_fingerprint(after)) {
            RefactoringAction action;
            action.type = kSortInstructions;
            action.before_spans = {stage_span(b_stage)};
            action.after_spans = {stage_span(a_stage)};
            actions.push_back(std::move(action));
            return;
        }
        residual = true;
    }

    void run() {
        if (ast_equal(before, after)) return;
        if (before.stages.size() == after.stages.size()) {
            DockerfileAst renamed = apply_renames();
            for (std::size_t i = 0; i < renamed.stages.size(); ++i) {
                compare_from(renamed.stages[i], after.stages[i]);
                compare_stage_bodies(renamed.stages[i], after.stages[i]);
            }
            if (renamed.global_args.size() != after.global_args.size()) {
                residual = true;
            } else {
                for (std::size_t i = 0; i < renamed.global_args.size(); ++i) {
                    if (!instruction_equal(renamed.global_args[i], after.global_args[i])) {
                        residual = true;
                    }
                }
            }
        } else {
            int b_sourced = copy_from_count(before);
            int a_sourced = copy_from_count(after);
            bool more_stages = after.stages.size() > before.stages.size();
            if (more_stages && a_sourced > b_sourced) {
                RefactoringAction action;
                action.type = kExtractStage;
                action.before_spans = {stage_span(before.stages.back())};
                for (const auto& stage : after.stages) {
                    action.after_spans.push_back(stage_span(stage));
                }
                action.params = {{"stages_before", std::to_string(before.stages.size())},
                                 {"stages_after", std::to_string(after.stages.size())}};
                actions.push_back(std::move(action));
            } else if (!more_stages && a_sourced < b_sourced) {
                RefactoringAction action;
                action.type = kInlineStage;
                for (const auto& stage : before.stages) {
                    action.before_spans.push_back(stage_span(stage));
                }
                action.after_spans = {stage_span(after.stages.back())};
                action.params = {{"stages_before", std::to_string(before.stages.size())},
                                 {"stages_after", std::to_string(after.stages.size())}};
                actions.push_back(std::move(action));
            } else {
                residual = true;
            }
            // The final stages still align; base-image changes there are
            // reported alongside the structural action.
            compare_from(before.stages.back(), after.stages.back());
        }
        if (residual) {
            RefactoringAction action;
            action.type = kUnclassified;
            action.before_spans = {{1, std::max(1, before.stages.empty()
                                                        ? 1
                                                        : stage_span(before.stages.back())
                                                              .end_line)}};
            action.after_spans = {{1, std::max(1, after.stages.empty()
                                                       ? 1
                                                       : stage_span(after.stages.back())
                                                             .end_line)}};
            actions.push_back(std::move(action));
        }
    }
};

}  // namespace

Taxonomy Taxonomy::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TaxonomyError("cannot open taxonomy file: " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return from_json_text(buffer.str());
}

Taxonomy Taxonomy::from_json_text(const std::string& text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("types") ||
        !doc["types"].is_array()) {
        throw TaxonomyError("taxonomy must be a JSON object with a \"types\" array");
    }
    Taxonomy taxonomy;
    for (const auto& entry : doc["types"]) {
        TaxonomyEntry parsed;
        parsed.name = entry.at("name").get<std::string>();
        parsed.definition = entry.value("definition", std::string{});
        parsed.active = entry.value("active", true);
        taxonomy.types_.push_back(std::move(parsed));
    }
    taxonomy.validate();
    return taxonomy;
}

void Taxonomy::validate() const {
    std::size_t active_count = 0;
    std::set<std::string> names;
    for (const auto& entry : types_) {
        if (!names.insert(entry.name).second) {
            throw TaxonomyError("duplicate taxonomy type: " + entry.name);
        }
        if (!entry.active) continue;
        ++active_count;
        for (const char* omitted : kOmittedTypes) {
            if (entry.name == omitted) {
                throw TaxonomyError(std::string(omitted) + " may not be an active type");
            }
        }
    }
    if (active_count != 10) {
        throw TaxonomyError("taxonomy must define exactly 10 active types, found " +
                            std::to_string(active_count));
    }
    for (const char* core : kCoreTypes) {
        if (!is_active(core)) {
            throw TaxonomyError(std::string("core type missing or inactive: ") + core);
        }
    }
}

std::vector<TaxonomyEntry> Taxonomy::active() const {
    std::vector<TaxonomyEntry> out;
    for (const auto& entry : types_) {
        if (entry.active) out.push_back(entry);
    }
    return out;
}

bool Taxonomy::is_active(std::string_view name) const {
    for (const auto& entry : types_) {
        if (entry.active && entry.name == name) return true;
    }
    return false;
}

std::string action_catalog(const Taxonomy& taxonomy) {
    std::string out = "Refactoring actions:\n";
    for (const auto& entry : taxonomy.active()) {
        out += "- ";
        out += entry.name;
        out += ": ";
        out += entry.definition;
        out += '\n';
    }
    return out;
}

std::vector<std::string> split_commands(std::string_view shell_text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= shell_text.size()) {
        std::size_t pos = shell_text.find("&&", start);
        std::string_view piece = pos == std::string_view::npos
                                     ? shell_text.substr(start)
                                     : shell_text.substr(start, pos - start);
        std::string cmd = collapse_ws(piece);
        if (!cmd.empty()) out.push_back(std::move(cmd));
        if (pos == std::string_view::npos) break;
        start = pos + 2;
    }
    return out;
}

std::vector<RefactoringAction> detect_refactorings(const DockerfileAst& before,
                                                   const DockerfileAst& after) {
    Detector detector{before, after};
    detector.run();
    return detector.actions;
}

std::string actions_to_json(const std::vector<RefactoringAction>& actions) {
    json out = json::array();
    for (const auto& action : actions) {
        json spans_before = json::array();
        for (const auto& span : action.before_spans) spans_before.push_back(span_to_json(span));
        json spans_after = json::array();
        for (const auto& span : action.after_spans) spans_after.push_back(span_to_json(span));
        out.push_back(json{{"type", action.type},
                           {"before_spans", spans_before},
                           {"after_spans", spans_after},
                           {"params", action.params}});
    }
    return out.dump(2);
}

std::vector<RefactoringAction> actions_from_json(const std::string& text) {
    json doc = json::parse(text);
    if (!doc.is_array()) throw std::invalid_argument("actions document must be a JSON array");
    std::vector<RefactoringAction> out;
    for (const auto& entry : doc) {
        RefactoringAction action;
        action.type = entry.at("type").get<std::string>();
        for (const auto& span : entry.value("before_spans", json::array())) {
            action.before_spans.push_back(span_from_json(span));
        }
        for (const auto& span : entry.value("after_spans", json::array())) {
            action.after_spans.push_back(span_from_json(span));
        }
        if (entry.contains("params")) {
            for (const auto& [key, value] : entry["params"].items()) {
                action.params[key] = value.get<std::string>();
            }
        }
        out.push_back(std::move(action));
    }
    return out;
}

}  // namespace dfr
