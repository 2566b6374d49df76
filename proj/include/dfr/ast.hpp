// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dfr/errors.hpp"

namespace dfr {

/// 1-based, inclusive line range in the source text.
struct SourceSpan {
    int start_line = 0;
    int end_line = 0;

    bool operator==(const SourceSpan&) const = default;
};

/// A FROM target or a COPY --from source. Exactly one of {name, stage_alias}
/// identifies the source; empty string means absent.
struct ImageRef {
    std::string registry;
    std::string name;
    std::string tag;
    std::string digest;
    std::string stage_alias;

    bool is_stage_ref() const { return !stage_alias.empty(); }

    bool operator==(const ImageRef&) const = default;
};

enum class InstructionKind {
    From,
    Run,
    Copy,
    Add,
    Env,
    Arg,
    Workdir,
    Cmd,
    Entrypoint,
    Expose,
    Label,
    User,
    Volume,
    Healthcheck,
    Shell,
    Onbuild,
    Stopsignal,
    Maintainer,
};

const char* instruction_keyword(InstructionKind kind);
std::optional<InstructionKind> instruction_from_keyword(std::string_view keyword);

/// One logical instruction (continuations already folded).
///
/// RUN/CMD/ENTRYPOINT and ONBUILD keep their payload verbatim as a single
/// args entry; other instructions carry whitespace-split argument tokens.
/// `raw` holds the exact source text of the logical line when the node came
/// from parse(); constructed or edited nodes leave it empty and serialize()
/// renders them from the structured fields.
struct Instruction {
    InstructionKind kind = InstructionKind::Run;
    std::vector<std::string> args;
    std::map<std::string, std::string> flags;
    SourceSpan span;
    std::string raw;
};

/// FROM-delimited section. instructions[0] is the FROM itself.
struct Stage {
    ImageRef base;
    std::string alias;
    std::vector<Instruction> instructions;
};

struct Comment {
    SourceSpan span;
    std::string text;  // verbatim line, including the leading '#'
};

struct DockerfileAst {
    std::vector<Stage> stages;
    std::vector<Instruction> global_args;  // ARGs preceding the first FROM
    std::string raw_text;
    std::vector<Comment> comments;
};

/// Behavior-relevant extract: context-sourced COPY/ADD pairs of the final
/// stage plus the last CMD/ENTRYPOINT normalized to exec-form token lists.
struct FunctionalFingerprint {
    std::set<std::pair<std::string, std::string>> copy_add_entries;
    std::vector<std::string> cmd;
    std::vector<std::string> entrypoint;

    bool operator==(const FunctionalFingerprint&) const = default;
};

/// Parse UTF-8 Dockerfile text. Throws SyntaxError on unknown instruction
/// keywords, FROM-less files, and malformed flags.
DockerfileAst parse(std::string_view text);

/// Emit text that reparses to an AST structurally equal to the input.
/// Byte-identical to raw_text while the AST is unmodified since parse().
std::string serialize(const DockerfileAst& ast);

/// Structural equality: kinds, flags, args and stage shape. Ignores spans,
/// raw text and comments, so it is stable across reformatting.
bool ast_equal(const DockerfileAst& a, const DockerfileAst& b);
bool instruction_equal(const Instruction& a, const Instruction& b);
bool stage_equal(const Stage& a, const Stage& b);

FunctionalFingerprint functional_fingerprint(const DockerfileAst& ast);

/// Render an ImageRef back to its reference string (registry/name:tag@digest
/// or the bare stage alias).
std::string image_ref_string(const ImageRef& ref);

/// Parse an image reference token. `line` is used for error reporting only.
ImageRef parse_image_ref(std::string_view token, int line = 0);

/// Normalize a RUN/CMD/ENTRYPOINT payload to an exec-form token list:
/// JSON arrays are decoded, shell text becomes ["/bin/sh", "-c", text] with
/// whitespace collapsed.
std::vector<std::string> exec_form_tokens(const std::string& payload);

/// Replace a stage's base image, keeping alias and body. Clears the FROM
/// node's verbatim text so serialize() re-renders that line.
void set_stage_base(Stage& stage, const ImageRef& base);

/// Rename a stage and rewrite COPY --from references to it.
void rename_stage(DockerfileAst& ast, std::size_t stage_index, const std::string& new_alias);

}  // namespace dfr
