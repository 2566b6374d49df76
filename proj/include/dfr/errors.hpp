// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace dfr {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Dockerfile text that does not conform to the instruction grammar.
class SyntaxError : public Error {
  public:
    SyntaxError(int line, const std::string& msg)
        : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}

    int line() const { return line_; }

  private:
    int line_;
};

/// Taxonomy file missing, malformed, or not defining exactly the active set.
class TaxonomyError : public Error {
  public:
    using Error::Error;
};

/// Corpus file unusable (unreadable, or zero valid records).
class CorpusError : public Error {
  public:
    using Error::Error;
};

/// A before/after pair failed one of the ingestion filters.
class IngestRejection : public Error {
  public:
    enum class Reason { BuildBefore, BuildAfter, BehaviorChange };

    IngestRejection(Reason reason, const std::string& msg) : Error(msg), reason_(reason) {}

    Reason reason() const { return reason_; }

    static const char* reason_name(Reason r) {
        switch (r) {
        case Reason::BuildBefore: return "build-before";
        case Reason::BuildAfter: return "build-after";
        case Reason::BehaviorChange: return "behavior-change";
        }
        return "unknown";
    }

  private:
    Reason reason_;
};

/// Numeric input outside a score function's domain (non-positive size or duration).
class DomainError : public Error {
  public:
    using Error::Error;
};

/// Requested more demonstrations than the corpus holds.
class SelectionError : public Error {
  public:
    using Error::Error;
};

/// Prompt cannot fit the context window.
class BudgetError : public Error {
  public:
    using Error::Error;
};

/// Prompt template file missing a section or placeholder.
class TemplateError : public Error {
  public:
    using Error::Error;
};

/// Network or timeout failure after retries were exhausted.
class TransportError : public Error {
  public:
    using Error::Error;
};

/// Backend answered with a non-success status; body carried in the message.
class BackendError : public Error {
  public:
    using Error::Error;
};

/// Replay mode saw a prompt that was never recorded.
class ReplayMiss : public Error {
  public:
    using Error::Error;
};

/// No parseable Dockerfile could be pulled out of a completion.
class ExtractionError : public Error {
  public:
    using Error::Error;
};

/// Engine endpoint unreachable. Distinct from a failed build.
class EngineUnavailable : public Error {
  public:
    using Error::Error;
};

/// Build context directory missing or unreadable.
class ContextError : public Error {
  public:
    using Error::Error;
};

/// Aggregation over an empty record set.
class EmptyInput : public Error {
  public:
    using Error::Error;
};

/// Paired series of different lengths.
class LengthMismatch : public Error {
  public:
    using Error::Error;
};

/// Fewer than two observations.
class InsufficientData : public Error {
  public:
    using Error::Error;
};

/// Commit history shorter than the ten-decile minimum.
class TooFewCommits : public Error {
  public:
    using Error::Error;
};

/// Carry-forward over a series with no present value.
class AllMissing : public Error {
  public:
    using Error::Error;
};

}  // namespace dfr
