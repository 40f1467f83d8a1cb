#pragma once

// Comma-separated reports: header row, '.' decimal separator, LF line endings.

#include "rotostep/analysis.hpp"
#include "rotostep/errors.hpp"
#include "rotostep/io/format.hpp"
#include "rotostep/solver.hpp"

#include <ostream>
#include <string>
#include <variant>
#include <vector>

namespace rotostep::io {

using CsvCell = std::variant<double, long long, std::string>;

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<CsvCell>> rows;

    void add(std::vector<CsvCell> row)
    {
        if (row.size() != header.size()) throw Error("csv: row has " + std::to_string(row.size()) + " cells, header has " + std::to_string(header.size()));
        rows.push_back(std::move(row));
    }
};

inline std::string csv_cell(const CsvCell& c)
{
    if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
    if (const auto* i = std::get_if<long long>(&c)) return std::to_string(*i);
    const auto& s = std::get<std::string>(c);
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
}

inline void write_csv(std::ostream& out, const CsvTable& t)
{
    for (std::size_t i = 0; i < t.header.size(); ++i) out << (i ? "," : "") << t.header[i];
    out << "\n";
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_cell(row[i]);
        out << "\n";
    }
}

/// iteration,residual,time. Without timings the time column is 0 so that reruns compare equal.
inline CsvTable report_table(const SolveReport& r, bool timings = true)
{
    CsvTable t{{"iteration", "residual", "time"}, {}};
    for (std::size_t i = 0; i < r.history.size(); ++i) {
        t.add({static_cast<long long>(i), r.history[i], timings && i < r.times.size() ? r.times[i] : 0.0});
    }
    return t;
}

/// h,n_slices,dofs,error_y,eoc
inline CsvTable convergence_table(const std::vector<ConvergenceRow>& rows)
{
    CsvTable t{{"h", "n_slices", "dofs", "error_y", "eoc"}, {}};
    for (const auto& r : rows) {
        t.add({r.h, static_cast<long long>(r.n_slices), static_cast<long long>(r.n_dofs), r.error, r.eoc});
    }
    return t;
}

/// label,h,dofs,c_h,boundedness,method
inline CsvTable infsup_table(const std::vector<std::pair<std::string, InfSupReport>>& reports)
{
    CsvTable t{{"label", "h", "dofs", "c_h", "boundedness", "method"}, {}};
    for (const auto& [label, r] : reports) {
        t.add({label, r.h, static_cast<long long>(r.n_dofs), r.c_h, r.boundedness, r.method});
    }
    return t;
}

}  // namespace rotostep::io
