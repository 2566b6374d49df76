// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dfr/ast.hpp"
#include "dfr/errors.hpp"

namespace dfr {

/// The seven rule-backed refactoring type names. The remaining three active
/// types come from the taxonomy file and have no detection rules.
inline constexpr const char* kExtractStage = "ExtractStage";
inline constexpr const char* kInlineStage = "InlineStage";
inline constexpr const char* kInlineRunInstruction = "InlineRunInstruction";
inline constexpr const char* kSortInstructions = "SortInstructions";
inline constexpr const char* kUpdateImageTag = "UpdateImageTag";
inline constexpr const char* kUpdateBaseImage = "UpdateBaseImage";
inline constexpr const char* kRenameImage = "RenameImage";

/// Residual-edit marker emitted by the detector; never an active taxonomy type.
inline constexpr const char* kUnclassified = "Unclassified";

struct TaxonomyEntry {
    std::string name;
    std::string definition;
    bool active = true;
};

/// The 10-type refactoring taxonomy. Exactly 10 entries must be active;
/// MoveStage and ExtractRunInstruction are recognized but may not be active.
class Taxonomy {
  public:
    static Taxonomy load(const std::filesystem::path& path);
    static Taxonomy from_json_text(const std::string& text);

    const std::vector<TaxonomyEntry>& types() const { return types_; }
    std::vector<TaxonomyEntry> active() const;
    bool is_active(std::string_view name) const;

  private:
    std::vector<TaxonomyEntry> types_;
    void validate() const;
};

struct RefactoringAction {
    std::string type;
    std::vector<SourceSpan> before_spans;
    std::vector<SourceSpan> after_spans;
    std::map<std::string, std::string> params;

    bool operator==(const RefactoringAction&) const = default;
};

/// Deterministic prompt text listing every active type with its definition.
std::string action_catalog(const Taxonomy& taxonomy);

/// Classifies the edits between two Dockerfile versions into refactoring
/// actions. Residual edits no rule explains surface as one Unclassified
/// action; identical inputs yield an empty list.
std::vector<RefactoringAction> detect_refactorings(const DockerfileAst& before,
                                                   const DockerfileAst& after);

/// Splits shell text on `&&` and collapses whitespace inside each command.
std::vector<std::string> split_commands(std::string_view shell_text);

std::string actions_to_json(const std::vector<RefactoringAction>& actions);
std::vector<RefactoringAction> actions_from_json(const std::string& text);

}  // namespace dfr
