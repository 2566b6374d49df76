// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace testing {

inline std::filesystem::path fixture_dir() { return std::filesystem::path(DFR_FIXTURE_DIR); }

inline std::filesystem::path asset_dir() { return std::filesystem::path(DFR_ASSET_DIR); }

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("fixture missing: " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

inline std::vector<std::filesystem::path> corpus_files() {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(fixture_dir() / "corpus")) {
        if (entry.path().extension() == ".Dockerfile") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

/// Seeded mt19937 so property tests are reproducible run to run.
inline std::mt19937& rng() {
    static std::mt19937 engine(20260817u);
    return engine;
}

inline int pick(int lo, int hi) {
    std::uniform_int_distribution<int> dist(lo, hi);
    return dist(rng());
}

}  // namespace testing
