#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace meissner::io {

// Numbers in every artifact are printed as %.9e.
std::string fmt(double v);

// Writes to a sibling temporary file and renames it into place, so readers
// never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

struct CsvTable {
  std::string schema;                 // from a leading "# schema=..." line, if any
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;  // throws if absent
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);

// "# schema=<schema>" line, header line, then rows in %.9e.
std::string format_csv(const std::string& schema, const std::vector<std::string>& header,
                       const std::vector<std::vector<double>>& rows);

// key=value lines; blank lines and '#' comments ignored.
std::map<std::string, std::string> parse_key_values(const std::string& text);

std::string trim(const std::string& s);

}  // namespace meissner::io
