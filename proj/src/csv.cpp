#include "actirisk/csv.hpp"

#include <cstdio>

namespace actirisk {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

void split_fields(std::string_view line, std::vector<std::string_view>& out) {
    out.clear();
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            return;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

double parse_double(std::string_view s, const char* context) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ValidationError(std::string(context) + ": bad number '" + std::string(s) + "'");
    }
    return v;
}

long long parse_int(std::string_view s, const char* context) {
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ValidationError(std::string(context) + ": bad integer '" + std::string(s) + "'");
    }
    return v;
}

CsvWriter::CsvWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw ValidationError("cannot open for writing: " + path.string());
}

void CsvWriter::row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out_ << ',';
        out_ << fields[i];
    }
    out_ << '\n';
    ++rows_;
}

void CsvWriter::raw_line(const std::string& line) {
    out_ << line << '\n';
    ++rows_;
}

CsvReader::CsvReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw ValidationError("cannot open for reading: " + path.string());
    if (!std::getline(in_, header_)) throw ValidationError("empty file: " + path.string());
    if (!header_.empty() && header_.back() == '\r') header_.pop_back();
}

bool CsvReader::next(std::vector<std::string_view>& fields) {
    while (std::getline(in_, line_)) {
        if (!line_.empty() && line_.back() == '\r') line_.pop_back();
        if (line_.empty()) continue;
        split_fields(line_, fields);
        return true;
    }
    return false;
}

} // namespace actirisk
