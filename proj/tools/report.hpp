#ifndef MORSECON_TOOLS_REPORT_HPP
#define MORSECON_TOOLS_REPORT_HPP

#include <string>
#include <vector>

#include "json.hpp"

namespace morsecon::cli {

using Json = nlohmann::json;

constexpr int kSchema = 1;

// Two-space indented dump with sorted keys and a trailing newline.
std::string render(const Json& doc);
// SHA-256 (hex) of render(doc) with any "hash" member removed.
std::string content_hash(Json doc);
// Adds the "hash" member.
Json seal(Json doc);
// True iff the stored hash matches the recomputed one. Throws Error(ConfigError) on unparsable text.
bool verify_report(const std::string& text);

// RFC 4180 quoting, LF line endings.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header);
    void add(std::vector<std::string> row);
    std::string str() const;
    std::size_t rows() const { return rows_.size(); }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

std::string csv_field(const std::string& s);
// Shortest round-trip decimal form.
std::string number(double x);

}  // namespace morsecon::cli

#endif
