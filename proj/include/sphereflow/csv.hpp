#pragma once

// CSV emission. Every float is printed at 17 significant digits so files
// round-trip doubles exactly and identical runs produce identical bytes.

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "sphereflow/errors.hpp"

namespace sphereflow {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string format_int(long long v) { return std::to_string(v); }

class CsvFile {
public:
    CsvFile(const std::string& path, const std::vector<std::string>& header)
        : out_(path, std::ios::trunc) {
        if (!out_) throw InvalidArgument("cannot open " + path + " for writing");
        write_fields(header);
    }

    void row(const std::vector<std::string>& fields) { write_fields(fields); }

    void comment(const std::string& text) { out_ << "# " << text << "\n"; }

private:
    void write_fields(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << fields[i];
        }
        out_ << "\n";
    }

    std::ofstream out_;
};

} // namespace sphereflow
