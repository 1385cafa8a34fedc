#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "biascope/error.hpp"

inline std::filesystem::path test_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "biascope_tests" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string path_str(const std::filesystem::path& p) { return p.string(); }

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename Fn>
bool throws_code(biascope::errc expected, Fn&& fn) {
    try {
        fn();
    } catch (const biascope::Error& e) {
        return e.code() == expected;
    }
    return false;
}
