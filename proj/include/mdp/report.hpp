#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mdp/error.hpp"

namespace mdp {

/// One solve of a sweep. Timing columns are volatile.
struct RunRow {
    std::string graph_id;
    int n = 0;
    int n_h = 0;
    std::string precond;
    int iterations = 0;
    bool converged = false;
    double rel_residual = 0.0;
    double time_ms = 0.0;
    double time_per_iter_ms = 0.0;
    std::string error; ///< non-empty when the run threw; not part of the CSV
};

struct Aggregate {
    int runs = 0;
    int converged = 0;
    double mean = 0.0;        ///< mean iterations
    double delta_plus = 0.0;  ///< max - mean
    double delta_minus = 0.0; ///< mean - min
    double mean_time_ms = 0.0;
    double mean_time_per_iter_ms = 0.0;
};

inline const char* report_csv_header = "graph_id,n,N_h,precond,iterations,converged,rel_residual,time_ms,time_per_iter_ms";

struct ReportTable {
    std::vector<RunRow> rows;

    Aggregate aggregate() const
    {
        Aggregate a;
        a.runs = static_cast<int>(rows.size());
        if (rows.empty()) {
            return a;
        }
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const RunRow& r : rows) {
            a.converged += r.converged ? 1 : 0;
            a.mean += r.iterations;
            a.mean_time_ms += r.time_ms;
            a.mean_time_per_iter_ms += r.time_per_iter_ms;
            lo = std::min(lo, static_cast<double>(r.iterations));
            hi = std::max(hi, static_cast<double>(r.iterations));
        }
        const double m = static_cast<double>(rows.size());
        a.mean /= m;
        a.mean_time_ms /= m;
        a.mean_time_per_iter_ms /= m;
        a.delta_plus = hi - a.mean;
        a.delta_minus = a.mean - lo;
        return a;
    }

    bool all_converged() const
    {
        return std::all_of(rows.begin(), rows.end(), [](const RunRow& r) { return r.converged; });
    }

    /// with_timing = false leaves the volatile columns empty.
    void write_csv(std::ostream& os, bool with_timing = true) const
    {
        os << report_csv_header << '\n';
        char buf[96];
        for (const RunRow& r : rows) {
            os << r.graph_id << ',' << r.n << ',' << r.n_h << ',' << r.precond << ',' << r.iterations << ','
               << (r.converged ? 1 : 0) << ',';
            std::snprintf(buf, sizeof buf, "%.6e", r.rel_residual);
            os << buf << ',';
            if (with_timing) {
                std::snprintf(buf, sizeof buf, "%.3f,%.4f", r.time_ms, r.time_per_iter_ms);
                os << buf;
            }
            else {
                os << ',';
            }
            os << '\n';
        }
    }

    /// precond,runs,converged,mean_iterations,delta_plus,delta_minus,mean_time_ms,mean_time_per_iter_ms
    void write_summary(std::ostream& os) const
    {
        const Aggregate a = aggregate();
        os << "precond,runs,converged,mean_iterations,delta_plus,delta_minus,mean_time_ms,mean_time_per_iter_ms\n";
        char buf[160];
        std::snprintf(buf, sizeof buf, "%d,%d,%.2f,%.2f,%.2f,%.3f,%.4f", a.runs, a.converged, a.mean, a.delta_plus,
                      a.delta_minus, a.mean_time_ms, a.mean_time_per_iter_ms);
        os << (rows.empty() ? std::string("-") : rows.front().precond) << ',' << buf << '\n';
    }
};

/// log(m2 / m1) / log(N2 / N1).
inline double iteration_rate(double m1, double n_h1, double m2, double n_h2)
{
    if (!(m1 > 0.0 && m2 > 0.0 && n_h1 > 0.0 && n_h2 > 0.0) || n_h1 == n_h2) {
        throw std::invalid_argument("iteration_rate: need positive iterations and distinct sizes");
    }
    return std::log(m2 / m1) / std::log(n_h2 / n_h1);
}

inline double median(std::vector<double> v)
{
    if (v.empty()) {
        throw std::invalid_argument("median: empty sample");
    }
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream os(path);
    if (!os) {
        throw Error("cannot write '" + path.string() + "'");
    }
    os << text;
}

inline void save_report(const ReportTable& t, const std::filesystem::path& csv)
{
    std::ostringstream a, b;
    t.write_csv(a);
    t.write_summary(b);
    write_text_file(csv, a.str());
    std::filesystem::path summary = csv;
    summary.replace_extension(".summary.csv");
    write_text_file(summary, b.str());
}

} // namespace mdp
