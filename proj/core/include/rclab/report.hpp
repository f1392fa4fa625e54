#pragma once

// Artifact helpers: deterministic number formatting, CSV tables, file IO.
//
// Artifacts must be byte-stable across runs and worker counts, so every
// double is printed with its shortest round-trip representation and CSV
// layout is fixed by the caller. (JSON reports are built by the
// experiment layer; object keys serialize in sorted order there.)

#include <string>
#include <vector>

namespace rclab {

// Shortest round-trip decimal form ("0.1", not "0.10000000000000001").
// Non-finite values spell as "inf", "-inf", "nan".
std::string format_double(double v);

// One flat CSV table; all columns must share the row count.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;  // column-major

  std::string to_string() const;
};

// Truncating write; throws std::runtime_error on IO failure.
void write_text_file(const std::string& path, const std::string& content);

// Reads a whole file; throws std::runtime_error if unreadable.
std::string read_text_file(const std::string& path);

}  // namespace rclab
