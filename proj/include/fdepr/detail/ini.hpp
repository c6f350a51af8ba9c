#pragma once

// Minimal INI reader shared by the species database and the run-config
// loaders, plus unit-suffixed quantity parsing.
//
// Grammar: '#' or ';' start a full-line comment; sections are "[kind]" or
// "[kind name]"; entries are "key = value". Keys are case-sensitive and must
// be unique within a section. Dimensioned values carry a mandatory unit
// suffix ("6.999 GHz", "0.05 mT"); bare numbers are only accepted where the
// quantity is dimensionless.

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "../errors.hpp"
#include "../units.hpp"

namespace fdepr::detail {

struct IniEntry {
    std::string key;
    std::string value;
    int line = 0;
    mutable bool used = false;
};

struct IniSection {
    std::string kind;
    std::string name;
    int line = 0;
    std::vector<IniEntry> entries;

    const IniEntry* find(std::string_view key) const {
        for (const auto& e : entries)
            if (e.key == key) {
                e.used = true;
                return &e;
            }
        return nullptr;
    }
};

struct IniDocument {
    std::string origin;
    std::vector<IniSection> sections;
};

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

[[noreturn]] inline void fail_at(const std::string& origin, int line, const std::string& what) {
    std::ostringstream os;
    os << origin << ":" << line << ": " << what;
    throw ConfigError(os.str());
}

inline IniDocument parse_ini_text(std::string_view text, std::string origin) {
    IniDocument doc;
    doc.origin = std::move(origin);
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view raw = (eol == std::string_view::npos) ? text.substr(pos)
                                                               : text.substr(pos, eol - pos);
        pos = (eol == std::string_view::npos) ? text.size() + 1 : eol + 1;
        ++line_no;

        std::string_view line = trim(raw);
        if (line.empty() || line.front() == '#' || line.front() == ';') continue;

        if (line.front() == '[') {
            if (line.back() != ']')
                fail_at(doc.origin, line_no, "unterminated section header");
            std::string_view inner = trim(line.substr(1, line.size() - 2));
            if (inner.empty())
                fail_at(doc.origin, line_no, "empty section header");
            IniSection sec;
            sec.line = line_no;
            std::size_t sp = inner.find_first_of(" \t");
            if (sp == std::string_view::npos) {
                sec.kind = std::string(inner);
            } else {
                sec.kind = std::string(trim(inner.substr(0, sp)));
                sec.name = std::string(trim(inner.substr(sp)));
            }
            doc.sections.push_back(std::move(sec));
            continue;
        }

        std::size_t eq = line.find('=');
        if (eq == std::string_view::npos)
            fail_at(doc.origin, line_no, "expected 'key = value'");
        if (doc.sections.empty())
            fail_at(doc.origin, line_no, "entry before any [section]");

        IniEntry entry;
        entry.key = std::string(trim(line.substr(0, eq)));
        entry.value = std::string(trim(line.substr(eq + 1)));
        entry.line = line_no;
        if (entry.key.empty())
            fail_at(doc.origin, line_no, "empty key");
        for (const auto& prev : doc.sections.back().entries)
            if (prev.key == entry.key)
                fail_at(doc.origin, line_no, "duplicate key '" + entry.key + "'");
        doc.sections.back().entries.push_back(std::move(entry));
    }
    return doc;
}

inline IniDocument parse_ini_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_ini_text(buf.str(), path);
}

/// Every key of the section must have been consumed via find(); anything
/// left over is a typo in the input file.
inline void require_all_used(const IniDocument& doc, const IniSection& sec) {
    for (const auto& e : sec.entries)
        if (!e.used)
            fail_at(doc.origin, e.line,
                    "unknown key '" + e.key + "' in section [" + sec.kind +
                        (sec.name.empty() ? "" : " " + sec.name) + "]");
}

// ---------------------------------------------------------------------------
// Quantity parsing

enum class Unit {
    none,        // dimensionless; no suffix allowed
    frequency,   // -> Hz
    field,       // -> tesla
    time,        // -> seconds
    rate,        // -> 1/s
    angle,       // -> degrees
    gyro,        // -> Hz/T
    amplitude,   // -> s^(-1/2)
    strength,    // -> s^(1/2)
};

struct UnitSuffix {
    const char* token;
    double factor;
};

inline const std::vector<UnitSuffix>& unit_table(Unit unit) {
    static const std::vector<UnitSuffix> frequency = {
        {"Hz", 1.0}, {"kHz", 1.0e3}, {"MHz", 1.0e6}, {"GHz", 1.0e9}};
    static const std::vector<UnitSuffix> field = {
        {"T", 1.0}, {"mT", 1.0e-3}, {"uT", 1.0e-6}, {"nT", 1.0e-9}};
    static const std::vector<UnitSuffix> time = {
        {"s", 1.0}, {"ms", 1.0e-3}, {"us", 1.0e-6}, {"ns", 1.0e-9}};
    static const std::vector<UnitSuffix> rate = {{"1/s", 1.0}, {"s^-1", 1.0}};
    static const std::vector<UnitSuffix> angle = {
        {"deg", 1.0}, {"rad", 180.0 / constants::pi}};
    static const std::vector<UnitSuffix> gyro = {{"Hz/T", 1.0},
                                                 {"kHz/T", 1.0e3},
                                                 {"MHz/T", 1.0e6},
                                                 {"GHz/T", 1.0e9}};
    static const std::vector<UnitSuffix> amplitude = {
        {"s^-1/2", 1.0}, {"ns^-1/2", 31622.776601683792}};
    static const std::vector<UnitSuffix> strength = {
        {"s^1/2", 1.0}, {"ns^1/2", 3.1622776601683795e-5}};
    static const std::vector<UnitSuffix> none = {};
    switch (unit) {
        case Unit::frequency: return frequency;
        case Unit::field: return field;
        case Unit::time: return time;
        case Unit::rate: return rate;
        case Unit::angle: return angle;
        case Unit::gyro: return gyro;
        case Unit::amplitude: return amplitude;
        case Unit::strength: return strength;
        case Unit::none: return none;
    }
    return none;
}

inline const char* unit_name(Unit unit) {
    switch (unit) {
        case Unit::none: return "dimensionless";
        case Unit::frequency: return "frequency";
        case Unit::field: return "magnetic field";
        case Unit::time: return "time";
        case Unit::rate: return "rate";
        case Unit::angle: return "angle";
        case Unit::gyro: return "gyromagnetic ratio";
        case Unit::amplitude: return "pulse amplitude";
        case Unit::strength: return "pulse strength";
    }
    return "?";
}

inline double parse_quantity(const IniDocument& doc, const IniEntry& entry, Unit unit) {
    const std::string& text = entry.value;
    const char* begin = text.c_str();
    char* end = nullptr;
    double value = std::strtod(begin, &end);
    if (end == begin)
        fail_at(doc.origin, entry.line, "'" + entry.key + "': expected a number, got '" + text + "'");
    std::string_view suffix = trim(std::string_view(end));

    if (unit == Unit::none) {
        if (!suffix.empty())
            fail_at(doc.origin, entry.line,
                    "'" + entry.key + "' is dimensionless but has suffix '" + std::string(suffix) + "'");
        return value;
    }
    if (suffix.empty())
        fail_at(doc.origin, entry.line,
                "'" + entry.key + "': missing unit suffix (" + unit_name(unit) + ")");
    for (const auto& s : unit_table(unit))
        if (suffix == s.token) return value * s.factor;
    fail_at(doc.origin, entry.line,
            "'" + entry.key + "': unknown " + std::string(unit_name(unit)) + " unit '" +
                std::string(suffix) + "'");
}

/// Half-integer spin written as "0", "1/2", "7/2", ... ; returns 2I.
inline int parse_two_i(const IniDocument& doc, const IniEntry& entry) {
    std::string_view v = trim(entry.value);
    std::size_t slash = v.find('/');
    auto to_int = [&](std::string_view s) -> int {
        s = trim(s);
        if (s.empty()) fail_at(doc.origin, entry.line, "'" + entry.key + "': bad spin '" + entry.value + "'");
        int out = 0;
        for (char c : s) {
            if (!std::isdigit(static_cast<unsigned char>(c)))
                fail_at(doc.origin, entry.line, "'" + entry.key + "': bad spin '" + entry.value + "'");
            out = out * 10 + (c - '0');
        }
        return out;
    };
    if (slash == std::string_view::npos) return 2 * to_int(v);
    if (to_int(v.substr(slash + 1)) != 2)
        fail_at(doc.origin, entry.line, "'" + entry.key + "': spin denominator must be 2");
    return to_int(v.substr(0, slash));
}

inline bool parse_bool(const IniDocument& doc, const IniEntry& entry) {
    if (entry.value == "true") return true;
    if (entry.value == "false") return false;
    fail_at(doc.origin, entry.line, "'" + entry.key + "': expected true/false");
}

}  // namespace fdepr::detail
