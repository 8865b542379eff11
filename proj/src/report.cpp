#include "report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "errors.hpp"

namespace msplit {

namespace {

std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
        cells.emplace_back();
    }
    return cells;
}

double ratio(double value, double reference)
{
    if (reference == 0.0) {
        return value == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    }
    return value / reference;
}

}  // namespace

void write_trace_csv(std::ostream& out, const ResidualTrace& trace)
{
    out << kTraceHeader << '\n';
    for (const auto& r : trace.rows) {
        out << r.outer_iteration << ',' << num(r.time) << ',' << num(r.estimated_residual)
            << ',' << (r.true_residual ? num(*r.true_residual) : std::string()) << ','
            << r.inner_iterations << ',' << r.max_halo_staleness << '\n';
    }
}

void write_trace_csv(const std::string& path, const ResidualTrace& trace)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw UsageError("cannot open trace file for writing: " + path);
    }
    write_trace_csv(out, trace);
    if (!out) {
        throw UsageError("failed writing trace file: " + path);
    }
}

ResidualTrace read_trace_csv(std::istream& in, const std::string& source)
{
    std::string line;
    if (!std::getline(in, line)) {
        throw UsageError(source + ": empty trace file");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    if (line != kTraceHeader) {
        throw UsageError(source + ": trace header mismatch (expected '" +
                         std::string(kTraceHeader) + "')");
    }
    ResidualTrace trace;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto cells = split_csv(line);
        if (cells.size() != 6) {
            throw UsageError(source + ":" + std::to_string(lineno) +
                             ": expected 6 columns, got " + std::to_string(cells.size()));
        }
        try {
            TraceRow r;
            r.outer_iteration = std::stoull(cells[0]);
            r.time = std::stod(cells[1]);
            r.estimated_residual = std::stod(cells[2]);
            if (!cells[3].empty()) {
                r.true_residual = std::stod(cells[3]);
            }
            r.inner_iterations = std::stoull(cells[4]);
            r.max_halo_staleness = std::stoull(cells[5]);
            trace.rows.push_back(r);
        } catch (const std::exception&) {
            throw UsageError(source + ":" + std::to_string(lineno) + ": malformed value");
        }
    }
    return trace;
}

ResidualTrace read_trace_csv(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw UsageError(path + ": cannot open trace file");
    }
    return read_trace_csv(in, path);
}

Comparison compare_traces(const std::vector<std::pair<std::string, ResidualTrace>>& traces,
                          std::size_t reference)
{
    if (traces.empty()) {
        throw UsageError("compare: no traces given");
    }
    if (reference >= traces.size()) {
        throw UsageError("compare: reference index out of range");
    }
    Comparison cmp;
    cmp.reference = reference;
    for (const auto& [name, trace] : traces) {
        ComparisonRow row;
        row.name = name;
        if (!trace.rows.empty()) {
            const auto& last = trace.rows.back();
            row.iterations = last.outer_iteration;
            row.elapsed = last.time;
            row.final_estimated_residual = last.estimated_residual;
            for (auto it = trace.rows.rbegin(); it != trace.rows.rend(); ++it) {
                if (it->true_residual) {
                    row.final_true_residual = it->true_residual;
                    break;
                }
            }
        }
        row.iteration_rate =
            row.elapsed > 0.0 ? static_cast<double>(row.iterations) / row.elapsed : 0.0;
        cmp.rows.push_back(row);
    }
    const auto& ref = cmp.rows[reference];
    for (auto& row : cmp.rows) {
        row.iteration_ratio =
            ratio(static_cast<double>(row.iterations), static_cast<double>(ref.iterations));
        row.time_ratio = ratio(row.elapsed, ref.elapsed);
    }
    return cmp;
}

Comparison compare_trace_files(const std::vector<std::string>& paths, std::size_t reference)
{
    std::vector<std::pair<std::string, ResidualTrace>> traces;
    for (const auto& p : paths) {
        traces.emplace_back(p, read_trace_csv(p));
    }
    return compare_traces(traces, reference);
}

std::string Comparison::to_text() const
{
    std::size_t width = 4;
    for (const auto& r : rows) {
        width = std::max(width, r.name.size());
    }
    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(width) + 2) << "run" << std::right
        << std::setw(12) << "iterations" << std::setw(14) << "time" << std::setw(14)
        << "iter/time" << std::setw(14) << "est_resid" << std::setw(14) << "true_resid"
        << std::setw(12) << "iter_ratio" << std::setw(12) << "time_ratio" << '\n';
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        out << std::left << std::setw(static_cast<int>(width) + 2)
            << (r.name + (i == reference ? "*" : "")) << std::right << std::setw(12)
            << r.iterations << std::setw(14) << std::setprecision(6) << r.elapsed
            << std::setw(14) << r.iteration_rate << std::setw(14) << std::scientific
            << std::setprecision(3) << r.final_estimated_residual << std::setw(14);
        if (r.final_true_residual) {
            out << *r.final_true_residual;
        } else {
            out << "-";
        }
        out << std::defaultfloat << std::setprecision(4) << std::setw(12) << r.iteration_ratio
            << std::setw(12) << r.time_ratio << '\n';
    }
    return out.str();
}

std::string Comparison::to_csv() const
{
    std::ostringstream out;
    out << "run,reference,iterations,time,iteration_rate,final_estimated_residual,"
           "final_true_residual,iteration_ratio,time_ratio\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        out << r.name << ',' << (i == reference ? 1 : 0) << ',' << r.iterations << ','
            << num(r.elapsed) << ',' << num(r.iteration_rate) << ','
            << num(r.final_estimated_residual) << ','
            << (r.final_true_residual ? num(*r.final_true_residual) : std::string()) << ','
            << num(r.iteration_ratio) << ',' << num(r.time_ratio) << '\n';
    }
    return out.str();
}

}  // namespace msplit
