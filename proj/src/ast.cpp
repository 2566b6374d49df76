// SPDX-License-Identifier: Apache-2.0
#include "dfr/ast.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <sstream>

#include <json.hpp>

namespace dfr {

namespace {

constexpr std::array<std::pair<std::string_view, InstructionKind>, 18> kKeywords{{
    {"FROM", InstructionKind::From},
    {"RUN", InstructionKind::Run},
    {"COPY", InstructionKind::Copy},
    {"ADD", InstructionKind::Add},
    {"ENV", InstructionKind::Env},
    {"ARG", InstructionKind::Arg},
    {"WORKDIR", InstructionKind::Workdir},
    {"CMD", InstructionKind::Cmd},
    {"ENTRYPOINT", InstructionKind::Entrypoint},
    {"EXPOSE", InstructionKind::Expose},
    {"LABEL", InstructionKind::Label},
    {"USER", InstructionKind::User},
    {"VOLUME", InstructionKind::Volume},
    {"HEALTHCHECK", InstructionKind::Healthcheck},
    {"SHELL", InstructionKind::Shell},
    {"ONBUILD", InstructionKind::Onbuild},
    {"STOPSIGNAL", InstructionKind::Stopsignal},
    {"MAINTAINER", InstructionKind::Maintainer},
}};

std::string upper(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return out;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string collapse_ws(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_space = false;
    for (char c : trim(s)) {
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

std::vector<std::string> split_ws(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        std::size_t start = i;
        while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        if (i > start) out.emplace_back(s.substr(start, i - start));
    }
    return out;
}

bool keeps_raw_payload(InstructionKind kind) {
    return kind == InstructionKind::Run || kind == InstructionKind::Cmd ||
           kind == InstructionKind::Entrypoint || kind == InstructionKind::Onbuild ||
           kind == InstructionKind::Healthcheck || kind == InstructionKind::Shell;
}

/// A physical-line cursor over the source text.
struct LineReader {
    std::vector<std::string> lines;

    explicit LineReader(std::string_view text) {
        std::size_t start = 0;
        while (start <= text.size()) {
            std::size_t nl = text.find('\n', start);
            if (nl == std::string_view::npos) {
                if (start < text.size()) lines.emplace_back(text.substr(start));
                break;
            }
            std::string line(text.substr(start, nl - start));
            if (!line.empty() && line.back() == '\r') line.pop_back();
            lines.push_back(std::move(line));
            start = nl + 1;
        }
    }
};

bool is_comment_line(std::string_view line) {
    auto t = trim(line);
    return !t.empty() && t.front() == '#';
}

bool is_blank_line(std::string_view line) { return trim(line).empty(); }

/// Matches the opening of a heredoc (<<EOF, <<-EOF, <<"EOF", <<'EOF').
/// Returns the terminator word, or nullopt.
std::optional<std::string> heredoc_terminator(std::string_view logical) {
    std::size_t pos = 0;
    while ((pos = logical.find("<<", pos)) != std::string_view::npos) {
        std::size_t p = pos + 2;
        if (p < logical.size() && logical[p] == '<') {  // "<<<" is not a heredoc
            pos = p + 1;
            continue;
        }
        if (p < logical.size() && logical[p] == '-') ++p;
        char quote = 0;
        if (p < logical.size() && (logical[p] == '"' || logical[p] == '\'')) quote = logical[p++];
        std::size_t start = p;
        while (p < logical.size() &&
               (std::isalnum(static_cast<unsigned char>(logical[p])) || logical[p] == '_'))
            ++p;
        if (p > start) {
            if (quote && (p >= logical.size() || logical[p] != quote)) {
                pos = p;
                continue;
            }
            return std::string(logical.substr(start, p - start));
        }
        pos = p + 1;
    }
    return std::nullopt;
}

struct LogicalLine {
    std::string text;      // folded text, continuations replaced by a space
    std::string raw;       // verbatim physical lines joined with '\n'
    SourceSpan span;
};

class Parser {
  public:
    explicit Parser(std::string_view text) : reader_(text), raw_(text) {}

    DockerfileAst run() {
        DockerfileAst ast;
        ast.raw_text = raw_;

        std::size_t i = 0;
        const auto& lines = reader_.lines;
        while (i < lines.size()) {
            const std::string& line = lines[i];
            int lineno = static_cast<int>(i) + 1;
            if (is_blank_line(line)) {
                ++i;
                continue;
            }
            if (is_comment_line(line)) {
                ast.comments.push_back({{lineno, lineno}, line});
                ++i;
                continue;
            }
            LogicalLine logical = read_logical(i, ast);
            Instruction instr = to_instruction(logical);
            if (instr.kind == InstructionKind::From) {
                begin_stage(ast, instr, logical);
            } else if (ast.stages.empty()) {
                if (instr.kind == InstructionKind::Arg) {
                    ast.global_args.push_back(std::move(instr));
                } else {
                    throw SyntaxError(logical.span.start_line,
                                      "no build stage: " +
                                          std::string(instruction_keyword(instr.kind)) +
                                          " before the first FROM");
                }
            } else {
                ast.stages.back().instructions.push_back(std::move(instr));
            }
        }
        if (ast.stages.empty()) {
            throw SyntaxError(1, "no FROM instruction found");
        }
        validate_stage_sources(ast);
        return ast;
    }

  private:
    LineReader reader_;
    std::string raw_;

    /// Reads one logical instruction starting at physical line index i,
    /// folding continuations and swallowing heredoc bodies verbatim.
    /// Comment lines inside a continuation are captured, not folded in.
    LogicalLine read_logical(std::size_t& i, DockerfileAst& ast) {
        const auto& lines = reader_.lines;
        LogicalLine out;
        out.span.start_line = static_cast<int>(i) + 1;
        bool more = true;
        std::string folded;
        std::vector<std::string> raw_lines;
        while (more && i < lines.size()) {
            const std::string& line = lines[i];
            int lineno = static_cast<int>(i) + 1;
            if (!folded.empty() && is_comment_line(line)) {
                ast.comments.push_back({{lineno, lineno}, line});
                ++i;
                continue;
            }
            if (!folded.empty() && is_blank_line(line)) {  // deprecated empty continuation
                raw_lines.push_back(line);
                ++i;
                continue;
            }
            raw_lines.push_back(line);
            std::string_view body = line;
            more = false;
            if (!body.empty() && body.back() == '\\') {
                body.remove_suffix(1);
                more = true;
            }
            folded.append(trim(body));
            if (more) folded.push_back(' ');
            ++i;
        }
        // Heredoc payloads are kept opaque: consume verbatim until the terminator.
        if (auto term = heredoc_terminator(folded)) {
            while (i < lines.size()) {
                const std::string& line = lines[i];
                raw_lines.push_back(line);
                folded.push_back('\n');
                folded.append(line);
                ++i;
                if (trim(line) == *term) break;
            }
        }
        out.span.end_line = static_cast<int>(i);
        std::string raw;
        for (std::size_t k = 0; k < raw_lines.size(); ++k) {
            if (k) raw.push_back('\n');
            raw.append(raw_lines[k]);
        }
        out.raw = std::move(raw);
        out.text = std::move(folded);
        return out;
    }

    Instruction to_instruction(const LogicalLine& logical) {
        std::string_view text = logical.text;
        text = trim(text);
        std::size_t kw_end = 0;
        while (kw_end < text.size() && !std::isspace(static_cast<unsigned char>(text[kw_end])))
            ++kw_end;
        std::string keyword = upper(text.substr(0, kw_end));
        auto kind = instruction_from_keyword(keyword);
        if (!kind) {
            throw SyntaxError(logical.span.start_line, "unknown instruction: " + keyword);
        }
        Instruction instr;
        instr.kind = *kind;
        instr.span = logical.span;
        instr.raw = logical.raw;

        std::string_view rest = trim(text.substr(kw_end));
        // Flags precede arguments: --name=value or bare --name.
        while (rest.substr(0, 2) == "--") {
            std::size_t end = 0;
            while (end < rest.size() && !std::isspace(static_cast<unsigned char>(rest[end])))
                ++end;
            std::string_view flag = rest.substr(2, end - 2);
            if (flag.empty() || flag.front() == '=') {
                throw SyntaxError(logical.span.start_line, "malformed flag in " + keyword);
            }
            auto eq = flag.find('=');
            if (eq == std::string_view::npos) {
                instr.flags[std::string(flag)] = "";
            } else {
                instr.flags[std::string(flag.substr(0, eq))] = std::string(flag.substr(eq + 1));
            }
            rest = trim(rest.substr(end));
        }

        if (keeps_raw_payload(instr.kind)) {
            if (!rest.empty()) instr.args.push_back(std::string(rest));
        } else if ((instr.kind == InstructionKind::Copy || instr.kind == InstructionKind::Add ||
                    instr.kind == InstructionKind::Volume) &&
                   !rest.empty() && rest.front() == '[') {
            // JSON argument form.
            auto parsed = nlohmann::json::parse(rest, nullptr, false);
            if (parsed.is_array()) {
                for (const auto& el : parsed) {
                    if (el.is_string()) instr.args.push_back(el.get<std::string>());
                }
            } else {
                instr.args = split_ws(rest);
            }
        } else {
            instr.args = split_ws(rest);
        }
        return instr;
    }

    void begin_stage(DockerfileAst& ast, Instruction& instr, const LogicalLine& logical) {
        if (instr.args.empty()) {
            throw SyntaxError(logical.span.start_line, "FROM requires an image reference");
        }
        Stage stage;
        std::string ref_token = instr.args[0];
        if (instr.args.size() >= 3 && upper(instr.args[1]) == "AS") {
            stage.alias = instr.args[2];
        } else if (instr.args.size() > 1 && upper(instr.args[1]) != "AS") {
            throw SyntaxError(logical.span.start_line, "malformed FROM: expected AS <name>");
        } else if (instr.args.size() == 2) {
            throw SyntaxError(logical.span.start_line, "malformed FROM: AS without a stage name");
        }
        // A FROM naming an earlier stage is a stage reference, not an image pull.
        ImageRef base;
        std::string token_lower = lower(ref_token);
        bool stage_ref = false;
        for (const auto& prior : ast.stages) {
            if (!prior.alias.empty() && lower(prior.alias) == token_lower) {
                stage_ref = true;
                break;
            }
        }
        if (stage_ref) {
            base.stage_alias = ref_token;
        } else {
            base = parse_image_ref(ref_token, logical.span.start_line);
        }
        if (!stage.alias.empty()) {
            for (const auto& prior : ast.stages) {
                if (lower(prior.alias) == lower(stage.alias)) {
                    throw SyntaxError(logical.span.start_line,
                                      "duplicate stage name: " + stage.alias);
                }
            }
        }
        stage.base = base;
        stage.instructions.push_back(instr);
        ast.stages.push_back(std::move(stage));
    }

    /// COPY --from must name an earlier stage, an earlier index, or an
    /// external image. Forward and self references are rejected. Runs after
    /// the whole file is parsed so later-defined aliases are visible.
    void validate_stage_sources(const DockerfileAst& ast) {
        for (std::size_t current = 0; current < ast.stages.size(); ++current) {
            for (const Instruction& instr : ast.stages[current].instructions) {
                if (instr.kind != InstructionKind::Copy) continue;
                auto it = instr.flags.find("from");
                if (it == instr.flags.end()) continue;
                const std::string& value = it->second;
                if (value.empty()) {
                    throw SyntaxError(instr.span.start_line, "COPY --from requires a value");
                }
                bool numeric = std::all_of(value.begin(), value.end(),
                                           [](unsigned char c) { return std::isdigit(c); });
                if (numeric) {
                    if (std::stoul(value) >= current) {
                        throw SyntaxError(instr.span.start_line,
                                          "COPY --from=" + value +
                                              " does not name an earlier stage");
                    }
                    continue;
                }
                std::string value_lower = lower(value);
                for (std::size_t s = 0; s < ast.stages.size(); ++s) {
                    if (!ast.stages[s].alias.empty() &&
                        lower(ast.stages[s].alias) == value_lower) {
                        if (s >= current) {
                            throw SyntaxError(instr.span.start_line,
                                              "COPY --from=" + value +
                                                  " references a later stage");
                        }
                        break;
                    }
                }
                // Unmatched names are external image references.
            }
        }
    }
};

std::string render_instruction(const Instruction& instr);
std::string render_from(const Stage& stage);

}  // namespace

const char* instruction_keyword(InstructionKind kind) {
    for (const auto& [kw, k] : kKeywords) {
        if (k == kind) return kw.data();
    }
    return "?";
}

std::optional<InstructionKind> instruction_from_keyword(std::string_view keyword) {
    std::string up = upper(keyword);
    for (const auto& [kw, k] : kKeywords) {
        if (kw == up) return k;
    }
    return std::nullopt;
}

DockerfileAst parse(std::string_view text) { return Parser(text).run(); }

ImageRef parse_image_ref(std::string_view token, int line) {
    ImageRef ref;
    std::string_view rest = token;
    auto at = rest.find('@');
    if (at != std::string_view::npos) {
        ref.digest = std::string(rest.substr(at + 1));
        rest = rest.substr(0, at);
    }
    // The registry component is the first path element containing '.' or ':'
    // (or the literal "localhost").
    auto slash = rest.find('/');
    if (slash != std::string_view::npos) {
        std::string_view head = rest.substr(0, slash);
        if (head == "localhost" || head.find('.') != std::string_view::npos ||
            head.find(':') != std::string_view::npos) {
            ref.registry = std::string(head);
            rest = rest.substr(slash + 1);
        }
    }
    auto colon = rest.rfind(':');
    if (colon != std::string_view::npos && rest.find('/', colon) == std::string_view::npos) {
        ref.tag = std::string(rest.substr(colon + 1));
        rest = rest.substr(0, colon);
    }
    ref.name = std::string(rest);
    if (ref.name.empty()) {
        throw SyntaxError(line, "image reference has no name: " + std::string(token));
    }
    if (!ref.tag.empty() && !ref.digest.empty()) {
        throw SyntaxError(line, "image reference carries both a tag and a digest: " +
                                    std::string(token));
    }
    return ref;
}

std::string image_ref_string(const ImageRef& ref) {
    if (ref.is_stage_ref()) return ref.stage_alias;
    std::string out;
    if (!ref.registry.empty()) {
        out += ref.registry;
        out += '/';
    }
    out += ref.name;
    if (!ref.tag.empty()) {
        out += ':';
        out += ref.tag;
    }
    if (!ref.digest.empty()) {
        out += '@';
        out += ref.digest;
    }
    return out;
}

namespace {

std::string render_flags(const Instruction& instr) {
    std::string out;
    for (const auto& [name, value] : instr.flags) {
        out += " --";
        out += name;
        if (!value.empty()) {
            out += '=';
            out += value;
        }
    }
    return out;
}

std::string render_instruction(const Instruction& instr) {
    std::string out = instruction_keyword(instr.kind);
    out += render_flags(instr);
    for (const auto& arg : instr.args) {
        out += ' ';
        out += arg;
    }
    return out;
}

std::string render_from(const Stage& stage) {
    std::string out = "FROM";
    if (!stage.instructions.empty()) out += render_flags(stage.instructions.front());
    out += ' ';
    out += image_ref_string(stage.base);
    if (!stage.alias.empty()) {
        out += " AS ";
        out += stage.alias;
    }
    return out;
}

/// Render path used once the AST diverges from its source text. Instructions
/// keep their verbatim lines where still available; FROM lines always render
/// from the stage so base edits show up. Comments are interleaved by their
/// original line order.
std::string render_ast(const DockerfileAst& ast) {
    std::string out;
    std::size_t next_comment = 0;
    auto emit_comments_before = [&](const SourceSpan& span) {
        while (next_comment < ast.comments.size() &&
               (span.start_line == 0 ||
                ast.comments[next_comment].span.start_line < span.start_line)) {
            if (span.start_line == 0) break;
            out += ast.comments[next_comment].text;
            out += '\n';
            ++next_comment;
        }
    };

    for (const auto& arg : ast.global_args) {
        emit_comments_before(arg.span);
        out += arg.raw.empty() ? render_instruction(arg) : arg.raw;
        out += '\n';
    }
    for (const auto& stage : ast.stages) {
        bool first = true;
        for (const auto& instr : stage.instructions) {
            emit_comments_before(instr.span);
            if (first) {
                out += render_from(stage);
                first = false;
            } else {
                out += instr.raw.empty() ? render_instruction(instr) : instr.raw;
            }
            out += '\n';
        }
        if (stage.instructions.empty()) {
            out += render_from(stage);
            out += '\n';
        }
    }
    while (next_comment < ast.comments.size()) {
        out += ast.comments[next_comment].text;
        out += '\n';
        ++next_comment;
    }
    return out;
}

/// Minimal-diff render for an AST whose shape still matches its source:
/// only the spans of modified instructions are replaced, so untouched
/// formatting (blank lines, comments, continuations) survives verbatim.
/// Returns nullopt when stages or instruction counts changed.
std::optional<std::string> patch_render(const DockerfileAst& base, const DockerfileAst& ast) {
    if (base.global_args.size() != ast.global_args.size()) return std::nullopt;
    if (base.stages.size() != ast.stages.size()) return std::nullopt;
    struct Patch {
        SourceSpan span;
        std::string text;
    };
    std::vector<Patch> patches;
    for (std::size_t i = 0; i < base.global_args.size(); ++i) {
        if (!instruction_equal(base.global_args[i], ast.global_args[i])) {
            patches.push_back({base.global_args[i].span, render_instruction(ast.global_args[i])});
        }
    }
    for (std::size_t s = 0; s < base.stages.size(); ++s) {
        const Stage& b = base.stages[s];
        const Stage& c = ast.stages[s];
        if (b.instructions.size() != c.instructions.size()) return std::nullopt;
        if (b.instructions.empty()) continue;
        if (!(b.base == c.base) || b.alias != c.alias ||
            b.instructions.front().flags != c.instructions.front().flags) {
            patches.push_back({b.instructions.front().span, render_from(c)});
        }
        for (std::size_t k = 1; k < b.instructions.size(); ++k) {
            if (!instruction_equal(b.instructions[k], c.instructions[k])) {
                patches.push_back({b.instructions[k].span, render_instruction(c.instructions[k])});
            }
        }
    }
    std::sort(patches.begin(), patches.end(),
              [](const Patch& a, const Patch& b) { return a.span.start_line < b.span.start_line; });
    LineReader reader(base.raw_text);
    std::string out;
    std::size_t pi = 0;
    for (std::size_t ln = 1; ln <= reader.lines.size(); ++ln) {
        if (pi < patches.size() && static_cast<int>(ln) == patches[pi].span.start_line) {
            out += patches[pi].text;
            out += '\n';
            ln = static_cast<std::size_t>(patches[pi].span.end_line);
            ++pi;
            continue;
        }
        out += reader.lines[ln - 1];
        out += '\n';
    }
    if (!base.raw_text.empty() && base.raw_text.back() != '\n' && !out.empty() &&
        out.back() == '\n') {
        out.pop_back();
    }
    return out;
}

}  // namespace

std::string serialize(const DockerfileAst& ast) {
    if (!ast.raw_text.empty()) {
        try {
            DockerfileAst base = parse(ast.raw_text);
            if (ast_equal(base, ast)) return ast.raw_text;
            if (auto patched = patch_render(base, ast)) return *patched;
        } catch (const SyntaxError&) {
            // raw_text no longer parseable; fall through to the render path
        }
    }
    return render_ast(ast);
}

bool instruction_equal(const Instruction& a, const Instruction& b) {
    return a.kind == b.kind && a.args == b.args && a.flags == b.flags;
}

bool stage_equal(const Stage& a, const Stage& b) {
    if (!(a.base == b.base) || a.alias != b.alias) return false;
    if (a.instructions.size() != b.instructions.size()) return false;
    for (std::size_t i = 1; i < a.instructions.size(); ++i) {  // [0] is FROM, covered by base/alias
        if (!instruction_equal(a.instructions[i], b.instructions[i])) return false;
    }
    return true;
}

bool ast_equal(const DockerfileAst& a, const DockerfileAst& b) {
    if (a.global_args.size() != b.global_args.size()) return false;
    for (std::size_t i = 0; i < a.global_args.size(); ++i) {
        if (!instruction_equal(a.global_args[i], b.global_args[i])) return false;
    }
    if (a.stages.size() != b.stages.size()) return false;
    for (std::size_t i = 0; i < a.stages.size(); ++i) {
        if (!stage_equal(a.stages[i], b.stages[i])) return false;
    }
    return true;
}

std::vector<std::string> exec_form_tokens(const std::string& payload) {
    std::string_view body = trim(payload);
    if (!body.empty() && body.front() == '[') {
        auto parsed = nlohmann::json::parse(body, nullptr, false);
        if (parsed.is_array()) {
            std::vector<std::string> tokens;
            bool all_strings = true;
            for (const auto& el : parsed) {
                if (!el.is_string()) {
                    all_strings = false;
                    break;
                }
                tokens.push_back(el.get<std::string>());
            }
            if (all_strings) return tokens;
        }
        // Malformed JSON falls back to shell form, matching engine behavior.
    }
    if (body.empty()) return {};
    return {"/bin/sh", "-c", collapse_ws(body)};
}

FunctionalFingerprint functional_fingerprint(const DockerfileAst& ast) {
    FunctionalFingerprint fp;
    if (ast.stages.empty()) return fp;
    const Stage& final_stage = ast.stages.back();
    for (const auto& instr : final_stage.instructions) {
        if (instr.kind == InstructionKind::Copy || instr.kind == InstructionKind::Add) {
            if (instr.flags.contains("from")) continue;  // stage- or image-sourced
            if (instr.args.size() < 2) continue;
            const std::string& dest = instr.args.back();
            for (std::size_t i = 0; i + 1 < instr.args.size(); ++i) {
                fp.copy_add_entries.emplace(instr.args[i], dest);
            }
        } else if (instr.kind == InstructionKind::Cmd) {
            fp.cmd = exec_form_tokens(instr.args.empty() ? std::string() : instr.args[0]);
        } else if (instr.kind == InstructionKind::Entrypoint) {
            fp.entrypoint = exec_form_tokens(instr.args.empty() ? std::string() : instr.args[0]);
        }
    }
    return fp;
}

void set_stage_base(Stage& stage, const ImageRef& base) {
    stage.base = base;
    if (!stage.instructions.empty()) stage.instructions.front().raw.clear();
}

void rename_stage(DockerfileAst& ast, std::size_t stage_index, const std::string& new_alias) {
    if (stage_index >= ast.stages.size()) return;
    std::string old_alias = ast.stages[stage_index].alias;
    ast.stages[stage_index].alias = new_alias;
    if (!ast.stages[stage_index].instructions.empty()) {
        ast.stages[stage_index].instructions.front().raw.clear();
    }
    if (old_alias.empty()) return;
    std::string old_lower = lower(old_alias);
    for (auto& stage : ast.stages) {
        for (auto& instr : stage.instructions) {
            if (instr.kind != InstructionKind::Copy) continue;
            auto it = instr.flags.find("from");
            if (it != instr.flags.end() && lower(it->second) == old_lower) {
                it->second = new_alias;
                instr.raw.clear();
            }
        }
        if (stage.base.is_stage_ref() && lower(stage.base.stage_alias) == old_lower) {
            stage.base.stage_alias = new_alias;
            if (!stage.instructions.empty()) stage.instructions.front().raw.clear();
        }
    }
}

}  // namespace dfr
