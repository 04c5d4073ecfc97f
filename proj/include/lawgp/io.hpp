#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace lawgp::io {

/// Plain comma-separated table: one header row, then string cells.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(std::string_view name) const; // -1 when absent
    double number(std::size_t row, std::size_t col) const;
};

/// Shortest round-trip decimal representation.
std::string format_double(double v);

CsvTable read_csv(const std::filesystem::path& path);

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

std::vector<std::string> split(std::string_view line, char sep = ',');

/// 64-bit FNV-1a, used for artifact fingerprints.
std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t hash_file(const std::filesystem::path& path);
std::string hex(std::uint64_t v);

} // namespace lawgp::io
