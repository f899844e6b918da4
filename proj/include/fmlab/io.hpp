#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmlab/errors.hpp"

namespace fmlab::io {

// Shortest round-trippable decimal rendering (17 significant digits) so CSV
// output is byte-identical across runs and platforms.
std::string format_double(double v);

// RFC 4180: LF row terminators, cells quoted only when they contain a comma,
// quote, or newline; embedded quotes doubled.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void add_row(const std::vector<std::string>& cells);
  const std::string& str() const { return buf_; }
  long rows() const { return rows_; }

 private:
  void append_line(const std::vector<std::string>& cells);
  std::string buf_;
  std::size_t width_;
  long rows_ = 0;
};

// RFC 4180 parser matching CsvWriter's output; returns rows of cells
// (header row included).
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

void write_text_file(const std::filesystem::path& path,
                     const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

void write_json_file(const std::filesystem::path& path,
                     const nlohmann::json& doc);
nlohmann::json read_json_file(const std::filesystem::path& path);

// FNV-1a over the canonical (sorted-key, no-whitespace) serialization,
// rendered as 16 lowercase hex digits.
std::string config_hash_hex(const nlohmann::json& doc);

std::string utc_timestamp();

}  // namespace fmlab::io
