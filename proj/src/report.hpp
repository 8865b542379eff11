#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "multisplit.hpp"

namespace msplit {

inline constexpr const char* kTraceHeader =
    "outer_iteration,time,estimated_residual,true_residual,inner_iterations,max_halo_staleness";

void write_trace_csv(std::ostream& out, const ResidualTrace& trace);
void write_trace_csv(const std::string& path, const ResidualTrace& trace);

/// Throws UsageError naming `source` when the header or a row is malformed.
ResidualTrace read_trace_csv(std::istream& in, const std::string& source);
ResidualTrace read_trace_csv(const std::string& path);

struct ComparisonRow {
    std::string name;
    std::size_t iterations = 0;
    double elapsed = 0.0;
    double iteration_rate = 0.0;
    double final_estimated_residual = 0.0;
    std::optional<double> final_true_residual;
    double iteration_ratio = 1.0;
    double time_ratio = 1.0;
};

struct Comparison {
    std::size_t reference = 0;
    std::vector<ComparisonRow> rows;

    std::string to_text() const;
    std::string to_csv() const;
};

/// Ratios are taken against `traces[reference]`.
Comparison compare_traces(const std::vector<std::pair<std::string, ResidualTrace>>& traces,
                          std::size_t reference);
Comparison compare_trace_files(const std::vector<std::string>& paths, std::size_t reference);

}  // namespace msplit
