#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gibbsflow {

// Text-artifact helpers. All floats are written as hexadecimal literals so
// artifacts round-trip bit-exactly and identical inputs give identical bytes.

inline std::string format_hex(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return std::string(buf);
}

inline std::string format_g17(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

inline std::string format_fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return std::string(buf);
}

inline double parse_double(const std::string& tok) {
    size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos == 0) throw std::runtime_error("parse_double: bad token '" + tok + "'");
    return v;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << content;
    if (!out.good()) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Line-oriented reader for versioned "key value..." artifacts.
class LineReader {
  public:
    explicit LineReader(const std::string& content) : stream_(content) {}

    bool next(std::vector<std::string>& tokens) {
        std::string line;
        while (std::getline(stream_, line)) {
            ++line_no_;
            if (line.empty() || line[0] == '#') continue;
            tokens.clear();
            std::istringstream ls(line);
            std::string tok;
            while (ls >> tok) tokens.push_back(tok);
            if (!tokens.empty()) return true;
        }
        return false;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw std::runtime_error("artifact parse error at line " + std::to_string(line_no_) + ": " + msg);
    }

  private:
    std::istringstream stream_;
    int line_no_ = 0;
};

}  // namespace gibbsflow
