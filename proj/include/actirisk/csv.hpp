#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "actirisk/common.hpp"

namespace actirisk {

// Minimal CSV helpers for the pipeline's plain (unquoted) files.
// Doubles are written with %.17g so files round-trip bit-exactly.

std::string format_double(double v);

void split_fields(std::string_view line, std::vector<std::string_view>& out);

double parse_double(std::string_view s, const char* context);
long long parse_int(std::string_view s, const char* context);

class CsvWriter {
  public:
    explicit CsvWriter(const std::filesystem::path& path);
    void row(const std::vector<std::string>& fields);
    void raw_line(const std::string& line);
    std::uint64_t rows_written() const { return rows_; }

  private:
    std::ofstream out_;
    std::uint64_t rows_ = 0;
};

class CsvReader {
  public:
    explicit CsvReader(const std::filesystem::path& path);
    // Returns false at EOF. Field views are valid until the next call.
    bool next(std::vector<std::string_view>& fields);
    const std::string& header() const { return header_; }

  private:
    std::ifstream in_;
    std::string line_;
    std::string header_;
};

} // namespace actirisk
