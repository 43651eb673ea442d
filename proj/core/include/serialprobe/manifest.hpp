#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "serialprobe/task.hpp"

namespace serialprobe {

using Json = nlohmann::ordered_json;

/// Task-independent view of one manifest trial. Every task manifest writes
/// these keys for each trial; task-specific fields stay in `attributes`.
struct TrialInfo {
    std::string trial_id;
    Task task = Task::Oddball;
    int answer = 0;                   ///< ground truth in the prompt's answer convention
    std::string cell;                 ///< condition cell label used for stratification
    std::string image;                ///< composite stimulus, relative to the dataset root
    std::vector<std::string> panels;  ///< images shown to humans, relative to the dataset root
    Json attributes;                  ///< the full trial object
};

struct Manifest {
    Task task = Task::Oddball;
    std::filesystem::path root;  ///< directory holding the manifest file
    Json header;                 ///< everything except "trials"
    std::vector<TrialInfo> trials;

    const TrialInfo* find(const std::string& trial_id) const;
};

std::string manifest_filename(Task task);

Manifest load_manifest(const std::filesystem::path& path);

/// Serializes with two-space indent and a trailing newline; byte-stable.
void write_json(const std::filesystem::path& path, const Json& value);
Json read_json(const std::filesystem::path& path);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(std::string_view bytes);

}  // namespace serialprobe
