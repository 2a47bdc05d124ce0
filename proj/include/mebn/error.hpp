#pragma once

// Error model shared by every layer. Each failure carries a stable
// machine-parseable code (used verbatim by the CLI as the first token of its
// single-line error output) plus a human-readable detail string.

#include <stdexcept>
#include <string>

namespace mebn {

enum class Errc {
    // relational layer
    MissingValue,            // E_ASSUMPTION1: every cell must be populated
    DanglingForeignKey,      // E_DANGLING_FK
    DuplicatePrimaryKey,     // E_DUP_PK
    UnknownState,            // E_UNKNOWN_STATE
    BadNumber,               // E_BAD_NUMBER
    BadManifest,             // E_BAD_MANIFEST
    BadCsv,                  // E_BAD_CSV
    NotNormalized,           // E_NOT_NORMALIZED
    MergeCardinality,        // E_MERGE_CARDINALITY
    MergeNameClash,          // E_MERGE_NAME_CLASH
    NotRelationship,         // E_NOT_RELATIONSHIP
    NonKeyAttributesPresent, // E_NONKEY_ATTRS
    BadPair,                 // E_BAD_PAIR
    UnsupportedArity,        // E_UNSUPPORTED_ARITY
    // model layer
    UnknownParentRef,        // E_UNKNOWN_PARENT_REF
    WrongVariant,            // E_WRONG_VARIANT
    NegativeProbability,     // E_NEGATIVE_PROBABILITY
    Unnormalizable,          // E_UNNORMALIZABLE
    UnknownFunction,         // E_UNKNOWN_FUNCTION
    BadDistributionForm,     // E_BAD_DISTRIBUTION
    StatesNotCovered,        // E_STATES_NOT_COVERED
    CyclicModel,             // E_CYCLIC_MODEL
    DuplicateHome,           // E_DUPLICATE_HOME
    // script layer
    Syntax,                  // E_SYNTAX (carries line/column)
    UnknownBlockLetter,      // E_UNKNOWN_BLOCK
    UndeclaredOrdinaryVariable, // E_UNDECLARED_OV
    DuplicateMFragName,      // E_DUPLICATE_MFRAG
    // mapper / rules
    BadRule,                 // E_BAD_RULE
    NoPath,                  // E_NO_PATH
    AmbiguousHint,           // E_AMBIGUOUS_HINT
    CycleIntroduced,         // E_CYCLE_INTRODUCED
    TypeMismatch,            // E_TYPE_MISMATCH
    UnknownParent,           // E_UNKNOWN_PARENT
    // dataset / learner
    UnmatchedCase,           // E_UNMATCHED_CASE
    EmptyData,               // E_EMPTY_DATA
    SingularDesign,          // E_SINGULAR_DESIGN
    InsufficientRows,        // E_INSUFFICIENT_ROWS
    LengthMismatch,          // E_LENGTH_MISMATCH
    BadPrior,                // E_BAD_PRIOR
    // inference
    UnknownNode,             // E_UNKNOWN_NODE
    ContinuousInDiscreteQuery, // E_CONTINUOUS_IN_DISCRETE
    NotCLG,                  // E_NOT_CLG
    BadEvidence,             // E_BAD_EVIDENCE
    // tooling
    BadConfig,               // E_BAD_CONFIG
    Io,                      // E_IO
};

inline const char* errc_code(Errc c) {
    switch (c) {
    case Errc::MissingValue: return "E_ASSUMPTION1";
    case Errc::DanglingForeignKey: return "E_DANGLING_FK";
    case Errc::DuplicatePrimaryKey: return "E_DUP_PK";
    case Errc::UnknownState: return "E_UNKNOWN_STATE";
    case Errc::BadNumber: return "E_BAD_NUMBER";
    case Errc::BadManifest: return "E_BAD_MANIFEST";
    case Errc::BadCsv: return "E_BAD_CSV";
    case Errc::NotNormalized: return "E_NOT_NORMALIZED";
    case Errc::MergeCardinality: return "E_MERGE_CARDINALITY";
    case Errc::MergeNameClash: return "E_MERGE_NAME_CLASH";
    case Errc::NotRelationship: return "E_NOT_RELATIONSHIP";
    case Errc::NonKeyAttributesPresent: return "E_NONKEY_ATTRS";
    case Errc::BadPair: return "E_BAD_PAIR";
    case Errc::UnsupportedArity: return "E_UNSUPPORTED_ARITY";
    case Errc::UnknownParentRef: return "E_UNKNOWN_PARENT_REF";
    case Errc::WrongVariant: return "E_WRONG_VARIANT";
    case Errc::NegativeProbability: return "E_NEGATIVE_PROBABILITY";
    case Errc::Unnormalizable: return "E_UNNORMALIZABLE";
    case Errc::UnknownFunction: return "E_UNKNOWN_FUNCTION";
    case Errc::BadDistributionForm: return "E_BAD_DISTRIBUTION";
    case Errc::StatesNotCovered: return "E_STATES_NOT_COVERED";
    case Errc::CyclicModel: return "E_CYCLIC_MODEL";
    case Errc::DuplicateHome: return "E_DUPLICATE_HOME";
    case Errc::Syntax: return "E_SYNTAX";
    case Errc::UnknownBlockLetter: return "E_UNKNOWN_BLOCK";
    case Errc::UndeclaredOrdinaryVariable: return "E_UNDECLARED_OV";
    case Errc::DuplicateMFragName: return "E_DUPLICATE_MFRAG";
    case Errc::BadRule: return "E_BAD_RULE";
    case Errc::NoPath: return "E_NO_PATH";
    case Errc::AmbiguousHint: return "E_AMBIGUOUS_HINT";
    case Errc::CycleIntroduced: return "E_CYCLE_INTRODUCED";
    case Errc::TypeMismatch: return "E_TYPE_MISMATCH";
    case Errc::UnknownParent: return "E_UNKNOWN_PARENT";
    case Errc::UnmatchedCase: return "E_UNMATCHED_CASE";
    case Errc::EmptyData: return "E_EMPTY_DATA";
    case Errc::SingularDesign: return "E_SINGULAR_DESIGN";
    case Errc::InsufficientRows: return "E_INSUFFICIENT_ROWS";
    case Errc::LengthMismatch: return "E_LENGTH_MISMATCH";
    case Errc::BadPrior: return "E_BAD_PRIOR";
    case Errc::UnknownNode: return "E_UNKNOWN_NODE";
    case Errc::ContinuousInDiscreteQuery: return "E_CONTINUOUS_IN_DISCRETE";
    case Errc::NotCLG: return "E_NOT_CLG";
    case Errc::BadEvidence: return "E_BAD_EVIDENCE";
    case Errc::BadConfig: return "E_BAD_CONFIG";
    case Errc::Io: return "E_IO";
    }
    return "E_UNKNOWN";
}

class Error : public std::runtime_error {
public:
    Error(Errc c, std::string detail)
        : std::runtime_error(std::string(errc_code(c)) + ": " + detail), code_(c) {}

    // Parse errors carry a 1-based source position.
    Error(Errc c, std::string detail, int line, int column)
        : std::runtime_error(std::string(errc_code(c)) + ": " + detail + " (line " +
                             std::to_string(line) + ", column " + std::to_string(column) + ")"),
          code_(c), line_(line), column_(column) {}

    Errc code() const { return code_; }
    const char* code_str() const { return errc_code(code_); }
    int line() const { return line_; }
    int column() const { return column_; }

private:
    Errc code_;
    int line_ = 0;
    int column_ = 0;
};

[[noreturn]] inline void fail(Errc c, const std::string& detail) { throw Error(c, detail); }

[[noreturn]] inline void fail_at(Errc c, const std::string& detail, int line, int column) {
    throw Error(c, detail, line, column);
}

} // namespace mebn
