// Copyright (c) 2026 the mbkt authors. All rights reserved.
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0).

#pragma once

#include <array>
#include <string>

#include "mbkt/errors.hpp"

namespace mbkt {

/// One input channel of a sample.
enum class Modality { Vision = 0, Language = 1, Audio = 2 };

inline constexpr std::array<Modality, 3> kModalityOrder = {Modality::Vision, Modality::Language,
                                                           Modality::Audio};

inline const char* modality_key(Modality m) {
    switch (m) {
        case Modality::Vision: return "vision";
        case Modality::Language: return "language";
        case Modality::Audio: return "audio";
    }
    return "?";
}

inline char modality_letter(Modality m) {
    switch (m) {
        case Modality::Vision: return 'v';
        case Modality::Language: return 'l';
        case Modality::Audio: return 'a';
    }
    return '?';
}

/// Labeling scheme: a single 7-way sentiment class (scores −3..3), or four
/// independent binary emotion flags.
enum class LabelMode { SevenClass, MultiLabel4 };

inline const char* label_mode_name(LabelMode m) {
    return m == LabelMode::SevenClass ? "sevenclass" : "multilabel4";
}

inline LabelMode parse_label_mode(const std::string& s) {
    if (s == "sevenclass") return LabelMode::SevenClass;
    if (s == "multilabel4") return LabelMode::MultiLabel4;
    throw DataError("unknown label mode '" + s + "'");
}

inline constexpr std::array<const char*, 4> kEmotionNames = {"happy", "sad", "angry", "neutral"};

/// Integer sentiment score for a 7-way class index (0..6 → −3..3).
inline int class_to_score(int cls) { return cls - 3; }
inline int score_to_class(int score) { return score + 3; }

}  // namespace mbkt
