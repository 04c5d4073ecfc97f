#include "lawgp/io.hpp"

#include "lawgp/common.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace lawgp::io {

int CsvTable::column(std::string_view name) const
{
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name)
            return static_cast<int>(i);
    return -1;
}

double CsvTable::number(std::size_t row, std::size_t col) const
{
    const std::string& s = rows.at(row).at(col);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        // from_chars rejects "inf"/"nan" spellings produced by some writers
        try {
            return std::stod(s);
        } catch (const std::exception&) {
            throw RuntimeError("csv: cannot parse number '" + s + "'");
        }
    }
    return v;
}

std::string format_double(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc())
        throw RuntimeError("format_double failed");
    return std::string(buf, ptr);
}

std::vector<std::string> split(std::string_view line, char sep)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            break;
        }
        out.emplace_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

CsvTable read_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw RuntimeError("cannot open " + path.string());
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        if (first) {
            t.header = split(line);
            first = false;
        } else {
            t.rows.push_back(split(line));
        }
    }
    if (first)
        throw RuntimeError("empty csv " + path.string());
    return t;
}

namespace {

void write_row(std::ostream& out, const std::vector<std::string>& cells)
{
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i)
            out << ',';
        out << cells[i];
    }
    out << '\n';
}

std::ofstream open_out(const std::filesystem::path& path)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw RuntimeError("cannot write " + path.string());
    return out;
}

} // namespace

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows)
{
    auto out = open_out(path);
    write_row(out, header);
    for (const auto& r : rows)
        write_row(out, r);
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows)
{
    auto out = open_out(path);
    write_row(out, header);
    std::vector<std::string> cells;
    for (const auto& r : rows) {
        cells.clear();
        for (double v : r)
            cells.push_back(format_double(v));
        write_row(out, cells);
    }
}

std::uint64_t fnv1a(std::string_view data, std::uint64_t seed)
{
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t hash_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw RuntimeError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a(ss.str());
}

std::string hex(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace lawgp::io
