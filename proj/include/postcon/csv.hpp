#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace postcon {

/// Shortest round-trippable decimal form, with inf/nan spelled out.
inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        double back = 0.0;
        std::sscanf(buf, "%lf", &back);
        if (back == v) break;
    }
    return buf;
}

/// Minimal CSV writer. Fields are numbers or identifiers, so no quoting.
class CsvWriter {
public:
    CsvWriter(std::ostream& out, const std::vector<std::string>& header) : out_(out), columns_(header.size()) {
        row_begin();
        for (const auto& h : header) field(h);
        row_end();
    }

    CsvWriter& field(std::string_view s) {
        if (count_++ > 0) out_ << ',';
        out_ << s;
        return *this;
    }
    CsvWriter& field(double v) { return field(std::string_view(format_number(v))); }
    CsvWriter& field(long long v) { return field(std::string_view(std::to_string(v))); }
    CsvWriter& field(std::size_t v) { return field(std::string_view(std::to_string(v))); }
    CsvWriter& field(int v) { return field(std::string_view(std::to_string(v))); }

    void row_begin() { count_ = 0; }
    void row_end() { out_ << '\n'; }
    std::size_t columns() const { return columns_; }

private:
    std::ostream& out_;
    std::size_t columns_;
    std::size_t count_ = 0;
};

}  // namespace postcon
