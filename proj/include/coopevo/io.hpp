#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "coopevo/coefficients.hpp"
#include "coopevo/error.hpp"
#include "coopevo/solver.hpp"
#include "coopevo/spectral.hpp"

namespace coopevo {

/// 17 significant digits, enough to round-trip a double.
inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Short form used in file names: 0.699 -> "0.699", 50 -> "50".
inline std::string format_time_tag(double t) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", t);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : path_(path) {
        if (path.has_parent_path()) {
            std::error_code ec;
            std::filesystem::create_directories(path.parent_path(), ec);
            if (ec) fail(ErrorKind::Io, "cannot create " + path.parent_path().string() + ": " + ec.message());
        }
        out_.open(path, std::ios::out | std::ios::trunc);
        if (!out_) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
        for (std::size_t k = 0; k < header.size(); ++k) out_ << (k ? "," : "") << header[k];
        out_ << '\n';
        width_ = header.size();
    }

    void row(std::initializer_list<double> values) {
        if (values.size() != width_) fail(ErrorKind::InvalidArgument, "row width does not match header");
        bool first = true;
        for (double v : values) {
            out_ << (first ? "" : ",") << format_number(v);
            first = false;
        }
        out_ << '\n';
    }

    void close() {
        out_.close();
        if (!out_) fail(ErrorKind::Io, "write to " + path_.string() + " failed");
    }

    ~CsvWriter() {
        if (out_.is_open()) out_.close();
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::size_t width_ = 0;
};

inline void write_coefficients_csv(const std::filesystem::path& path, const CoefficientField& f) {
    CsvWriter w(path, {"x", "r1", "r2", "delta1", "delta2"});
    for (std::size_t k = 0; k < f.grid.nx; ++k) w.row({f.grid[k], f.r1[k], f.r2[k], f.delta1[k], f.delta2[k]});
    w.close();
}

inline void write_landscape_csv(const std::filesystem::path& path, const Grid& grid, const Landscape& l) {
    CsvWriter w(path, {"trait", "r_H"});
    for (std::size_t k = 0; k < grid.nx; ++k) w.row({grid[k], l.r_h[k]});
    w.close();
}

inline const std::vector<std::string>& series_header() {
    static const std::vector<std::string> h{"t", "N", "argmax_x", "max_n1", "ratio_dev", "conc_x", "conc_fraction"};
    return h;
}

/// Writes every `stride`-th row, always including the last.
inline void write_series_csv(const std::filesystem::path& path, std::span<const SeriesRow> series,
                             std::size_t stride = 1) {
    if (stride == 0) stride = 1;
    CsvWriter w(path, series_header());
    for (std::size_t k = 0; k < series.size(); ++k) {
        if (k % stride != 0 && k + 1 != series.size()) continue;
        const auto& r = series[k];
        w.row({r.t, r.N, r.argmax_x, r.max_n1, r.ratio_dev, r.conc_x, r.conc_fraction});
    }
    w.close();
}

inline void write_snapshot_csv(const std::filesystem::path& path, const Grid& grid, const PopulationState& s) {
    CsvWriter w(path, {"x", "n1", "n2"});
    for (std::size_t k = 0; k < grid.nx; ++k) w.row({grid[k], s.n1[k], s.n2[k]});
    w.close();
}

/// Column-oriented CSV read of numeric tables written by this module.
inline std::map<std::string, std::vector<double>> read_csv_columns(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::Io, path.string() + " is empty");
    std::vector<std::string> names;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) names.push_back(cell);
    }
    std::map<std::string, std::vector<double>> cols;
    for (const auto& n : names) cols[n];
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t k = 0;
        while (std::getline(ss, cell, ',')) {
            if (k >= names.size()) fail(ErrorKind::Io, path.string() + ":" + std::to_string(lineno) + ": too many cells");
            cols[names[k++]].push_back(std::strtod(cell.c_str(), nullptr));
        }
        if (k != names.size()) fail(ErrorKind::Io, path.string() + ":" + std::to_string(lineno) + ": too few cells");
    }
    return cols;
}

}  // namespace coopevo
