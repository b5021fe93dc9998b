#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "morsecon/errors.hpp"

namespace morsecon::cli {

namespace {

enum class Type { Str, Real, Int, UInt, Bool, Reals, Ints };

struct KeySpec {
    const char* key;
    Type type;
    // nullptr: no default, the key is echoed only when given.
    const char* fallback;
};

struct SectionSpec {
    const char* name;
    std::vector<KeySpec> keys;
};

const std::vector<SectionSpec>& schema() {
    static const std::vector<SectionSpec> s{
        {"run", {{"pipeline", Type::Str, nullptr}, {"name", Type::Str, "\"run\""}}},
        {"manifold",
         {{"kind", Type::Str, nullptr},
          {"dim", Type::Int, nullptr},
          {"lower", Type::Reals, nullptr},
          {"upper", Type::Reals, nullptr},
          {"window", Type::Real, "2.0"},
          {"complex_dims", Type::Int, "0"},
          {"quotient", Type::Bool, "false"}}},
        {"field", {{"vector", Type::Str, nullptr}, {"witness", Type::Str, nullptr}}},
        {"equivariant",
         {{"model", Type::Str, "\"free\""},
          {"real_eigenvalues", Type::Reals, "[]"},
          {"complex_eigenvalues", Type::Reals, "[]"}}},
        {"cut", {{"enabled", Type::Bool, "true"}, {"phase", Type::Real, "0.0"}}},
        {"conley",
         {{"lower", Type::Reals, nullptr},
          {"upper", Type::Reals, nullptr},
          {"resolution", Type::Ints, nullptr},
          {"time_scale", Type::Real, "0.5"},
          {"padding_factor", Type::Real, "1.5"}}},
        {"truncation",
         {{"modes", Type::Int, "60"},
          {"first", Type::Int, "5"},
          {"last", Type::Int, "15"},
          {"cutoffs", Type::Reals, "[13.5, 14.5, 15.5]"},
          {"bump", Type::Str, "\"exponential\""},
          {"model", Type::Str, "\"standard\""},
          {"radius", Type::Real, "2.5"},
          {"window", Type::Int, "4"},
          {"n_shift", Type::Int, "0"},
          {"random_seeds", Type::UInt, "64"},
          {"certificate_samples", Type::UInt, "1000"},
          {"neighborhood_samples", Type::UInt, "100"},
          {"energy_trajectories", Type::UInt, "20"},
          {"confinement_samples", Type::UInt, "64"}}},
        {"stationary",
         {{"seeds", Type::UInt, "10000"},
          {"residual_tol", Type::Real, "1e-10"},
          {"dedupe_tol", Type::Real, "1e-6"},
          {"tol_hyp", Type::Real, "1e-8"},
          {"max_iter", Type::Int, "60"}}},
        {"shooting",
         {{"r_shoot", Type::Real, "1e-3"},
          {"capture_radius", Type::Real, "1e-4"},
          {"end_radius", Type::Real, "0.05"},
          {"density", Type::Int, "64"},
          {"max_scan_dim", Type::Int, "4"},
          {"t_max", Type::Real, "60.0"},
          {"tolerance", Type::Real, "1e-10"},
          {"max_step", Type::Real, "0.25"}}},
        {"certificate",
         {{"samples", Type::UInt, "2000"}, {"ball_radius", Type::Real, "0.05"}, {"floor", Type::Real, "1e-6"}}},
        {"expect", {{"betti", Type::Ints, nullptr}, {"min_degree", Type::Int, "0"}, {"tower_order", Type::Int, nullptr}}},
        {"output", {{"csv", Type::Bool, "true"}}},
    };
    return s;
}

const std::map<std::string, std::vector<std::string>>& pipeline_sections() {
    static const std::map<std::string, std::vector<std::string>> m{
        {"morse", {"run", "manifold", "field", "stationary", "shooting", "certificate", "expect", "output"}},
        {"boundary", {"run", "manifold", "field", "stationary", "shooting", "certificate", "expect", "output"}},
        {"equivariant",
         {"run", "manifold", "field", "equivariant", "cut", "stationary", "shooting", "certificate", "expect",
          "output"}},
        {"conley", {"run", "manifold", "field", "conley", "stationary", "shooting", "expect", "output"}},
        {"truncation", {"run", "truncation", "shooting", "expect", "output"}},
    };
    return m;
}

const SectionSpec* find_section(const std::string& name) {
    for (const auto& s : schema())
        if (name == s.name) return &s;
    return nullptr;
}

const KeySpec* find_key(const SectionSpec& s, const std::string& key) {
    for (const auto& k : s.keys)
        if (key == k.key) return &k;
    return nullptr;
}

bool name_char(char c, bool first) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_' || (!first && c >= '0' && c <= '9');
}

bool space(char c) { return c == ' ' || c == '\t' || c == '\r'; }

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') {
            out += '\\';
            out += c;
        } else if (c == '\n') {
            out += "\\n";
        } else if (c == '\t') {
            out += "\\t";
        } else {
            out += c;
        }
    }
    return out + "\"";
}

class LineParser {
public:
    LineParser(const std::string& text, int line, const std::string& source)
        : s_(text), line_(line), source_(source) {}

    [[noreturn]] void fail(const std::string& message) const {
        throw Error(ErrorKind::ConfigError, source_ + ":" + std::to_string(line_) + ": " + message);
    }
    void skip() {
        while (i_ < s_.size() && space(s_[i_])) ++i_;
    }
    bool done() {
        skip();
        return i_ >= s_.size() || s_[i_] == '#';
    }
    bool peek(char c) {
        skip();
        return i_ < s_.size() && s_[i_] == c;
    }
    void expect(char c) {
        if (!peek(c)) fail(std::string("expected '") + c + "'");
        ++i_;
    }
    std::string name() {
        skip();
        std::size_t b = i_;
        if (i_ >= s_.size() || !name_char(s_[i_], true)) fail("expected a name");
        while (i_ < s_.size() && name_char(s_[i_], false)) ++i_;
        return s_.substr(b, i_ - b);
    }
    Value value(bool in_list) {
        skip();
        Value v;
        v.line = line_;
        if (i_ >= s_.size()) fail("missing value");
        if (s_[i_] == '"') {
            v.kind = Value::Kind::String;
            ++i_;
            for (;;) {
                if (i_ >= s_.size()) fail("unterminated string");
                char c = s_[i_++];
                if (c == '"') break;
                if (c == '\\') {
                    if (i_ >= s_.size()) fail("unterminated string");
                    char e = s_[i_++];
                    if (e == 'n') v.text += '\n';
                    else if (e == 't') v.text += '\t';
                    else if (e == '"' || e == '\\') v.text += e;
                    else fail(std::string("unknown escape '\\") + e + "'");
                } else {
                    v.text += c;
                }
            }
        } else if (s_[i_] == '[') {
            if (in_list) fail("nested lists are not supported");
            v.kind = Value::Kind::List;
            ++i_;
            if (peek(']')) {
                ++i_;
                return v;
            }
            for (;;) {
                v.items.push_back(value(true));
                if (peek(']')) {
                    ++i_;
                    break;
                }
                expect(',');
            }
        } else {
            std::size_t b = i_;
            while (i_ < s_.size() && !space(s_[i_]) && s_[i_] != '#' && s_[i_] != ',' && s_[i_] != '[' &&
                   s_[i_] != ']' && s_[i_] != '"')
                ++i_;
            if (i_ == b) fail("missing value");
            v.text = s_.substr(b, i_ - b);
        }
        return v;
    }

private:
    const std::string& s_;
    std::size_t i_ = 0;
    int line_;
    const std::string& source_;
};

const char* type_name(Type t) {
    switch (t) {
        case Type::Str: return "a quoted string";
        case Type::Real: return "a number";
        case Type::Int: return "an integer";
        case Type::UInt: return "a non-negative integer";
        case Type::Bool: return "true or false";
        case Type::Reals: return "a list of numbers";
        case Type::Ints: return "a list of integers";
    }
    return "";
}

bool parse_real(const std::string& s, double& out) {
    auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

template <class T>
bool parse_int(const std::string& s, T& out) {
    auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

bool scalar_ok(const Value& v, Type t) {
    if (v.kind != Value::Kind::Scalar) return false;
    double d;
    long long i;
    unsigned long long u;
    switch (t) {
        case Type::Real: return parse_real(v.text, d);
        case Type::Int: return parse_int(v.text, i);
        case Type::UInt: return parse_int(v.text, u);
        case Type::Bool: return v.text == "true" || v.text == "false";
        default: return false;
    }
}

bool type_ok(const Value& v, Type t) {
    switch (t) {
        case Type::Str: return v.kind == Value::Kind::String;
        case Type::Reals:
        case Type::Ints:
            return v.kind == Value::Kind::List &&
                   std::all_of(v.items.begin(), v.items.end(),
                               [t](const Value& x) { return scalar_ok(x, t == Type::Reals ? Type::Real : Type::Int); });
        default: return scalar_ok(v, t);
    }
}

}  // namespace

std::string Value::render() const {
    switch (kind) {
        case Kind::Scalar: return text;
        case Kind::String: return quote(text);
        case Kind::List: {
            std::string out = "[";
            for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i].render();
            return out + "]";
        }
    }
    return text;
}

const Value* Section::find(const std::string& key) const {
    for (const auto& [k, v] : entries)
        if (k == key) return &v;
    return nullptr;
}

const std::vector<std::string>& pipelines() {
    static const std::vector<std::string> p{"morse", "boundary", "equivariant", "conley", "truncation"};
    return p;
}

Config Config::parse(const std::string& text, const std::string& source) {
    Config c;
    c.source_ = source;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    Section* current = nullptr;
    while (std::getline(in, raw)) {
        ++line;
        LineParser p(raw, line, source);
        if (p.done()) continue;
        if (p.peek('[')) {
            p.expect('[');
            std::string name = p.name();
            p.expect(']');
            if (!p.done()) p.fail("unexpected text after section header");
            if (c.section(name)) p.fail("duplicate section [" + name + "]");
            c.sections_.push_back({name, line, {}});
            current = &c.sections_.back();
            continue;
        }
        std::string key = p.name();
        p.expect('=');
        Value v = p.value(false);
        if (!p.done()) p.fail("unexpected text after value of '" + key + "'");
        if (!current) p.fail("key '" + key + "' outside of a section");
        if (current->find(key)) p.fail("duplicate key '" + key + "' in [" + current->name + "]");
        current->entries.emplace_back(key, std::move(v));
    }
    return c;
}

Config Config::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::ConfigError, path + ": cannot read file");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
}

void Config::fail(int line, const std::string& message) const {
    throw Error(ErrorKind::ConfigError, source_ + ":" + std::to_string(line) + ": " + message);
}

const Section* Config::section(const std::string& name) const {
    for (const auto& s : sections_)
        if (s.name == name) return &s;
    return nullptr;
}

bool Config::has(const std::string& section, const std::string& key) const {
    const Section* s = this->section(section);
    return s && s->find(key);
}

void Config::set(const std::string& section, const std::string& key, const std::string& value_text) {
    LineParser p(value_text, 0, source_);
    Value v = p.value(false);
    if (!p.done()) p.fail("unexpected text after value of '" + key + "'");
    for (auto& s : sections_) {
        if (s.name != section) continue;
        for (auto& [k, old] : s.entries)
            if (k == key) {
                v.line = old.line;
                old = v;
                return;
            }
        s.entries.emplace_back(key, v);
        return;
    }
    sections_.push_back({section, 0, {{key, v}}});
}

Config Config::resolve() const {
    for (const auto& s : sections_) {
        const SectionSpec* spec = find_section(s.name);
        if (!spec) fail(s.line, "unknown section [" + s.name + "]");
        for (const auto& [k, v] : s.entries) {
            const KeySpec* ks = find_key(*spec, k);
            if (!ks) fail(v.line, "unknown key '" + k + "' in [" + s.name + "]");
            if (!type_ok(v, ks->type)) fail(v.line, "key '" + k + "' must be " + type_name(ks->type));
        }
    }
    const std::string p = pipeline();
    const auto& allowed = pipeline_sections().at(p);
    for (const auto& s : sections_)
        if (std::find(allowed.begin(), allowed.end(), s.name) == allowed.end())
            fail(s.line, "section [" + s.name + "] is not used by pipeline " + p);

    Config out;
    out.source_ = source_;
    for (const auto& spec : schema()) {
        if (std::find(allowed.begin(), allowed.end(), spec.name) == allowed.end()) continue;
        const Section* given = section(spec.name);
        Section s{spec.name, given ? given->line : 0, {}};
        for (const auto& k : spec.keys) {
            if (const Value* v = given ? given->find(k.key) : nullptr) {
                s.entries.emplace_back(k.key, *v);
                continue;
            }
            std::string fallback = k.fallback ? k.fallback : "";
            if (p == "truncation" && spec.name == std::string("shooting") && k.key == std::string("max_scan_dim"))
                fallback = "2";
            if (fallback.empty()) continue;
            LineParser lp(fallback, 0, source_);
            s.entries.emplace_back(k.key, lp.value(false));
        }
        out.sections_.push_back(std::move(s));
    }
    return out;
}

std::string Config::echo() const {
    std::string out;
    for (const auto& s : sections_) {
        if (!out.empty()) out += '\n';
        out += "[" + s.name + "]\n";
        for (const auto& [k, v] : s.entries) out += k + " = " + v.render() + "\n";
    }
    return out;
}

std::string Config::pipeline() const {
    const Section* run = section("run");
    const Value* v = run ? run->find("pipeline") : nullptr;
    if (!v) fail(run ? run->line : 1, "missing key 'pipeline' in [run]");
    if (v->kind != Value::Kind::String) fail(v->line, "key 'pipeline' must be a quoted string");
    const auto& all = pipelines();
    if (std::find(all.begin(), all.end(), v->text) == all.end())
        fail(v->line, "unknown pipeline '" + v->text + "' (morse, boundary, equivariant, conley, truncation)");
    return v->text;
}

const Value& Config::get(const std::string& section, const std::string& key) const {
    const Section* s = this->section(section);
    const Value* v = s ? s->find(key) : nullptr;
    if (!v) fail(s ? s->line : 0, "missing key '" + key + "' in [" + section + "]");
    return *v;
}

void Config::reject(const std::string& section, const std::string& key, const std::string& message) const {
    const Section* s = this->section(section);
    const Value* v = s ? s->find(key) : nullptr;
    fail(v ? v->line : (s ? s->line : 0), "[" + section + "] " + key + ": " + message);
}

std::string Config::str(const std::string& section, const std::string& key) const {
    const Value& v = get(section, key);
    if (v.kind != Value::Kind::String) fail(v.line, "key '" + key + "' must be a quoted string");
    return v.text;
}

double Config::real(const std::string& section, const std::string& key) const {
    const Value& v = get(section, key);
    double d = 0;
    if (v.kind != Value::Kind::Scalar || !parse_real(v.text, d)) fail(v.line, "key '" + key + "' must be a number");
    return d;
}

long long Config::integer(const std::string& section, const std::string& key) const {
    const Value& v = get(section, key);
    long long i = 0;
    if (v.kind != Value::Kind::Scalar || !parse_int(v.text, i)) fail(v.line, "key '" + key + "' must be an integer");
    return i;
}

std::uint64_t Config::uinteger(const std::string& section, const std::string& key) const {
    const Value& v = get(section, key);
    std::uint64_t u = 0;
    if (v.kind != Value::Kind::Scalar || !parse_int(v.text, u))
        fail(v.line, "key '" + key + "' must be a non-negative integer");
    return u;
}

bool Config::boolean(const std::string& section, const std::string& key) const {
    const Value& v = get(section, key);
    if (v.kind != Value::Kind::Scalar || (v.text != "true" && v.text != "false"))
        fail(v.line, "key '" + key + "' must be true or false");
    return v.text == "true";
}

std::vector<double> Config::reals(const std::string& section, const std::string& key) const {
    const Value& v = get(section, key);
    if (!type_ok(v, Type::Reals)) fail(v.line, "key '" + key + "' must be a list of numbers");
    std::vector<double> out;
    for (const auto& x : v.items) {
        double d = 0;
        parse_real(x.text, d);
        out.push_back(d);
    }
    return out;
}

std::vector<long long> Config::integers(const std::string& section, const std::string& key) const {
    const Value& v = get(section, key);
    if (!type_ok(v, Type::Ints)) fail(v.line, "key '" + key + "' must be a list of integers");
    std::vector<long long> out;
    for (const auto& x : v.items) {
        long long i = 0;
        parse_int(x.text, i);
        out.push_back(i);
    }
    return out;
}

}  // namespace morsecon::cli
