#pragma once

#include <charconv>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>

namespace hybridcast::csv {

/// Shortest decimal form that parses back to the same double.
inline std::string number(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

/// Empty cell for undefined values.
inline std::string number(const std::optional<double>& v) { return v ? number(*v) : std::string(); }

/// RFC-4180 quoting, applied only when the field needs it.
inline std::string field(std::string_view s) {
    if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

/// Writes comma-separated cells terminated by a bare LF.
class RowWriter {
public:
    explicit RowWriter(std::ostream& os) : os_(os) {}

    RowWriter& cell(std::string_view s) {
        sep();
        os_ << field(s);
        return *this;
    }
    RowWriter& cell(const char* s) { return cell(std::string_view(s)); }
    RowWriter& cell(const std::string& s) { return cell(std::string_view(s)); }
    RowWriter& cell(double v) {
        sep();
        os_ << number(v);
        return *this;
    }
    RowWriter& cell(const std::optional<double>& v) {
        sep();
        os_ << number(v);
        return *this;
    }
    template <typename Int>
        requires std::is_integral_v<Int>
    RowWriter& cell(Int v) {
        sep();
        os_ << v;
        return *this;
    }

    void end() {
        os_ << '\n';
        first_ = true;
    }

private:
    void sep() {
        if (!first_) os_ << ',';
        first_ = false;
    }

    std::ostream& os_;
    bool first_ = true;
};

}  // namespace hybridcast::csv
