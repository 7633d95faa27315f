#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "teamfuse/core.hpp"

namespace teamfuse::testing {

inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(TEAMFUSE_FIXTURES) / name;
}

inline Dataset tiny_dataset() {
    LoadOptions options;
    options.truth = fixture("tiny_truth.csv");
    return load_dataset(fixture("tiny_judgments.csv"), options);
}

inline std::vector<std::size_t> all_instances(const Dataset& dataset) {
    std::vector<std::size_t> out(dataset.instances().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
    return out;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("teamfuse_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace teamfuse::testing
