#include "report.hpp"

#include <charconv>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "morsecon/errors.hpp"

namespace morsecon::cli {

std::string render(const Json& doc) { return doc.dump(2) + "\n"; }

std::string content_hash(Json doc) {
    if (doc.is_object()) doc.erase("hash");
    const std::string text = render(doc);
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

Json seal(Json doc) {
    doc["hash"] = content_hash(doc);
    return doc;
}

bool verify_report(const std::string& text) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::exception& e) {
        throw Error(ErrorKind::ConfigError, std::string("report is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("hash") || !doc["hash"].is_string())
        throw Error(ErrorKind::ConfigError, "report has no hash");
    return doc["hash"].get<std::string>() == content_hash(doc);
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvTable::add(std::vector<std::string> row) {
    row.resize(header_.size());
    rows_.push_back(std::move(row));
}

std::string CsvTable::str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + csv_field(r[i]);
        out += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
}

std::string number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

}  // namespace morsecon::cli
