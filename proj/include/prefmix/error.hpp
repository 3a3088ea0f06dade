#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prefmix {

/// Machine-readable failure categories shared by every module.
enum class ErrorCode {
    InvalidArgument,
    Io,
    ParseError,
    DuplicateId,
    DuplicatePair,
    InvalidPair,
    DuplicateLabel,
    DanglingReference,
    LabelOutOfDomain,
    ValueOutOfDomain,
    IncompleteLabelTable,
    UnknownCategory,
    DimensionMismatch,
    MissingScreen,
    ZeroVector,
    NonFiniteLoss,
    EmptyBank,
    PoolTooSmall,
    UnknownPair,
    CandidatesExhausted,
    NoSharedItems,
    DegenerateMarginals,
    InsufficientData,
    ZeroVariance,
    DuplicateBattle,
    SelfBattle,
    NoBattles,
    InsufficientDesigners,
    BankUnavailable,
    UnknownSession,
    UnknownScreen,
    WrongPendingPair,
    SessionComplete,
    Unauthorized,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::Io: return "io_error";
    case ErrorCode::ParseError: return "parse_error";
    case ErrorCode::DuplicateId: return "duplicate_id";
    case ErrorCode::DuplicatePair: return "duplicate_pair";
    case ErrorCode::InvalidPair: return "invalid_pair";
    case ErrorCode::DuplicateLabel: return "duplicate_label";
    case ErrorCode::DanglingReference: return "dangling_reference";
    case ErrorCode::LabelOutOfDomain: return "label_out_of_domain";
    case ErrorCode::ValueOutOfDomain: return "value_out_of_domain";
    case ErrorCode::IncompleteLabelTable: return "incomplete_label_table";
    case ErrorCode::UnknownCategory: return "unknown_category";
    case ErrorCode::DimensionMismatch: return "dimension_mismatch";
    case ErrorCode::MissingScreen: return "missing_screen";
    case ErrorCode::ZeroVector: return "zero_vector";
    case ErrorCode::NonFiniteLoss: return "non_finite_loss";
    case ErrorCode::EmptyBank: return "empty_bank";
    case ErrorCode::PoolTooSmall: return "pool_too_small";
    case ErrorCode::UnknownPair: return "unknown_pair";
    case ErrorCode::CandidatesExhausted: return "candidates_exhausted";
    case ErrorCode::NoSharedItems: return "no_shared_items";
    case ErrorCode::DegenerateMarginals: return "degenerate_marginals";
    case ErrorCode::InsufficientData: return "insufficient_data";
    case ErrorCode::ZeroVariance: return "zero_variance";
    case ErrorCode::DuplicateBattle: return "duplicate_battle";
    case ErrorCode::SelfBattle: return "self_battle";
    case ErrorCode::NoBattles: return "no_battles";
    case ErrorCode::InsufficientDesigners: return "insufficient_designers";
    case ErrorCode::BankUnavailable: return "bank_unavailable";
    case ErrorCode::UnknownSession: return "unknown_session";
    case ErrorCode::UnknownScreen: return "unknown_screen";
    case ErrorCode::WrongPendingPair: return "wrong_pending_pair";
    case ErrorCode::SessionComplete: return "session_complete";
    case ErrorCode::Unauthorized: return "unauthorized";
    }
    return "unknown";
}

/// The single exception type thrown by the library. `field` optionally names
/// the offending input (record field, request member, file path).
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::string field = {})
        : std::runtime_error(message), code_(code), field_(std::move(field)) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& field() const noexcept { return field_; }

private:
    ErrorCode code_;
    std::string field_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message,
                              std::string field = {}) {
    throw Error(code, message, std::move(field));
}

} // namespace prefmix
