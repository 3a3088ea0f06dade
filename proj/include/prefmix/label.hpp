#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

#include "prefmix/error.hpp"

namespace prefmix {

/// Four-point preference judgment over an ordered (left, right) pair.
/// Positive values favor the left screen; there is no neutral value.
enum class Label : std::int8_t {
    RightMuchBetter = -2,
    RightBetter = -1,
    LeftBetter = 1,
    LeftMuchBetter = 2,
};

inline constexpr std::size_t kNumLabels = 4;

/// All labels in index order {-2, -1, +1, +2}.
inline constexpr std::array<Label, kNumLabels> kAllLabels = {
    Label::RightMuchBetter, Label::RightBetter, Label::LeftBetter, Label::LeftMuchBetter};

constexpr int to_int(Label label) noexcept { return static_cast<int>(label); }

constexpr bool is_label_value(int value) noexcept {
    return value == -2 || value == -1 || value == 1 || value == 2;
}

inline Label label_from_int(int value) {
    if (!is_label_value(value)) {
        fail(ErrorCode::LabelOutOfDomain,
             "label value " + std::to_string(value) + " is outside {-2,-1,+1,+2}", "value");
    }
    return static_cast<Label>(value);
}

/// Same as label_from_int for a user's response rather than a stored label.
inline Label response_from_int(int value) {
    if (!is_label_value(value)) {
        fail(ErrorCode::ValueOutOfDomain,
             "response " + std::to_string(value) + " is outside {-2,-1,+1,+2}", "value");
    }
    return static_cast<Label>(value);
}

/// Position of `label` in kAllLabels.
constexpr std::size_t label_index(Label label) noexcept {
    switch (label) {
    case Label::RightMuchBetter: return 0;
    case Label::RightBetter: return 1;
    case Label::LeftBetter: return 2;
    case Label::LeftMuchBetter: return 3;
    }
    return 0;
}

constexpr Label negate(Label label) noexcept { return static_cast<Label>(-to_int(label)); }

/// +1 when the left screen wins, -1 otherwise.
constexpr int direction(Label label) noexcept { return to_int(label) > 0 ? 1 : -1; }

/// 1 for the middle categories, 2 for the extreme ones.
constexpr int strength(Label label) noexcept { return to_int(label) > 0 ? to_int(label) : -to_int(label); }

} // namespace prefmix
