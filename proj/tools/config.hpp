#ifndef MORSECON_TOOLS_CONFIG_HPP
#define MORSECON_TOOLS_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace morsecon::cli {

// Grammar (one construct per line, '#' starts a comment outside strings):
//   section = "[" name "]"
//   pair    = name "=" value
//   value   = string | list | scalar
//   string  = '"' { char | '\"' | '\\' | '\n' | '\t' } '"'
//   list    = "[" [ item { "," item } ] "]"      item = string | scalar
//   scalar  = run of characters other than whitespace, '#', ',', '[', ']', '"'
//   name    = [A-Za-z_][A-Za-z0-9_]*
struct Value {
    enum class Kind { Scalar, String, List };
    Kind kind = Kind::Scalar;
    // Scalar token as written, or the unescaped string.
    std::string text;
    std::vector<Value> items;
    int line = 0;

    std::string render() const;
    friend bool operator==(const Value& a, const Value& b) { return a.kind == b.kind && a.text == b.text && a.items == b.items; }
};

struct Section {
    std::string name;
    int line = 0;
    // Keys in file order.
    std::vector<std::pair<std::string, Value>> entries;

    const Value* find(const std::string& key) const;
};

class Config {
public:
    // Throws Error(ConfigError) with "source:line: message".
    static Config parse(const std::string& text, const std::string& source = "<config>");
    static Config load(const std::string& path);

    // Checks sections and keys against the schema of the selected pipeline and fills in
    // defaults. Section and key order follows the schema.
    Config resolve() const;
    // Canonical text; parse(echo()).echo() == echo().
    std::string echo() const;

    const std::vector<Section>& sections() const { return sections_; }
    const Section* section(const std::string& name) const;
    bool has(const std::string& section, const std::string& key) const;
    // Replaces or adds one value from its textual form.
    void set(const std::string& section, const std::string& key, const std::string& value_text);

    std::string pipeline() const;
    std::string str(const std::string& section, const std::string& key) const;
    double real(const std::string& section, const std::string& key) const;
    long long integer(const std::string& section, const std::string& key) const;
    std::uint64_t uinteger(const std::string& section, const std::string& key) const;
    bool boolean(const std::string& section, const std::string& key) const;
    std::vector<double> reals(const std::string& section, const std::string& key) const;
    std::vector<long long> integers(const std::string& section, const std::string& key) const;

    const std::string& source() const { return source_; }
    // Throws Error(ConfigError) at the line of the given key.
    [[noreturn]] void reject(const std::string& section, const std::string& key, const std::string& message) const;

private:
    const Value& get(const std::string& section, const std::string& key) const;
    [[noreturn]] void fail(int line, const std::string& message) const;

    std::string source_;
    std::vector<Section> sections_;
};

const std::vector<std::string>& pipelines();

}  // namespace morsecon::cli

#endif
