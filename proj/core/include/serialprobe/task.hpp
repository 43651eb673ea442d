#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace serialprobe {

enum class Task { Oddball, Numerosity, Rotation };

inline constexpr std::array<Task, 3> kAllTasks{Task::Oddball, Task::Numerosity, Task::Rotation};

constexpr std::string_view to_string(Task task) noexcept {
    switch (task) {
        case Task::Oddball: return "oddball";
        case Task::Numerosity: return "numerosity";
        case Task::Rotation: return "rotation";
    }
    return "?";
}

inline std::optional<Task> parse_task(std::string_view name) noexcept {
    for (Task t : kAllTasks) {
        if (to_string(t) == name) return t;
    }
    return std::nullopt;
}

/// Inclusive answer range accepted from a responder.
struct AnswerRange {
    int lo;
    int hi;
    constexpr bool contains(long long v) const noexcept { return v >= lo && v <= hi; }
};

/// Oddball positions 1-6; rotation 1 (same) / 0 (mirror); numerosity 1-99.
constexpr AnswerRange answer_range(Task task) noexcept {
    switch (task) {
        case Task::Oddball: return {1, 6};
        case Task::Rotation: return {0, 1};
        case Task::Numerosity: return {1, 99};
    }
    return {0, 0};
}

/// Range a uniform-random guesser draws from (numerosity guesses 1-8).
constexpr AnswerRange guess_range(Task task) noexcept {
    return task == Task::Numerosity ? AnswerRange{1, 8} : answer_range(task);
}

}  // namespace serialprobe
