#include "serialprobe/manifest.hpp"

#include <array>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <openssl/evp.h>

namespace serialprobe {

const TrialInfo* Manifest::find(const std::string& trial_id) const {
    for (const auto& t : trials) {
        if (t.trial_id == trial_id) return &t;
    }
    return nullptr;
}

std::string manifest_filename(Task task) { return fmt::format("{}_manifest.json", to_string(task)); }

void write_json(const std::filesystem::path& path, const Json& value) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
    f << value.dump(2) << '\n';
}

Json read_json(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
    return Json::parse(f);
}

Manifest load_manifest(const std::filesystem::path& path) {
    Json doc = read_json(path);
    Manifest m;
    const auto task = parse_task(doc.at("task").get<std::string>());
    if (!task) throw std::runtime_error(fmt::format("'{}': unknown task", path.string()));
    m.task = *task;
    m.root = path.parent_path();
    for (auto& [key, value] : doc.items()) {
        if (key != "trials") m.header[key] = value;
    }
    m.trials.reserve(doc.at("trials").size());
    for (auto& t : doc.at("trials")) {
        TrialInfo info;
        info.trial_id = t.at("trial_id").get<std::string>();
        info.task = m.task;
        info.answer = t.at("answer").get<int>();
        info.cell = t.at("cell").get<std::string>();
        info.image = t.at("image").get<std::string>();
        info.panels = t.at("panels").get<std::vector<std::string>>();
        info.attributes = std::move(t);
        m.trials.push_back(std::move(info));
    }
    return m;
}

std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("EVP_Digest failed");
    }
    std::string hex;
    hex.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(fmt::format("cannot open '{}'", path.string()));
    std::ostringstream ss;
    ss << f.rdbuf();
    return sha256_hex(ss.str());
}

}  // namespace serialprobe
