#include "msplit/msplit.h"

#include <algorithm>
#include <exception>
#include <new>
#include <string>

#include "errors.hpp"
#include "experiment.hpp"
#include "report.hpp"

struct msplit_config {
    msplit::ExperimentConfig config;
    mutable std::string echo;
};

struct msplit_result {
    msplit::RunResult run;
};

struct msplit_comparison {
    std::string text;
    std::string csv;
};

namespace {

thread_local std::string last_error;
thread_local std::string last_field;
thread_local long last_block = -1;

void clear_error()
{
    last_error.clear();
    last_field.clear();
    last_block = -1;
}

template <typename F>
msplit_status guarded(F&& body)
{
    clear_error();
    try {
        body();
        return MSPLIT_OK;
    } catch (const msplit::ConfigError& e) {
        last_error = e.what();
        last_field = e.field();
        return MSPLIT_ERR_CONFIG;
    } catch (const msplit::BreakdownError& e) {
        last_error = e.what();
        last_block = static_cast<long>(e.block());
        return MSPLIT_ERR_BREAKDOWN;
    } catch (const msplit::SingularMatrixError& e) {
        last_error = e.what();
        return MSPLIT_ERR_SINGULAR;
    } catch (const msplit::ProtocolError& e) {
        last_error = e.what();
        return MSPLIT_ERR_PROTOCOL;
    } catch (const msplit::Error& e) {
        last_error = e.what();
        return MSPLIT_ERR_USAGE;
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
        return MSPLIT_ERR_INTERNAL;
    } catch (const std::exception& e) {
        last_error = e.what();
        return MSPLIT_ERR_INTERNAL;
    }
}

msplit_status null_argument(const char* what)
{
    clear_error();
    last_error = std::string("null argument: ") + what;
    return MSPLIT_ERR_USAGE;
}

}  // namespace

extern "C" {

const char* msplit_last_error(void) { return last_error.c_str(); }
const char* msplit_last_error_field(void) { return last_field.c_str(); }
long msplit_last_error_block(void) { return last_block; }

msplit_status msplit_config_create(msplit_config** out)
{
    if (!out) {
        return null_argument("out");
    }
    return guarded([&] { *out = new msplit_config{}; });
}

void msplit_config_destroy(msplit_config* config) { delete config; }

msplit_status msplit_config_set(msplit_config* config, const char* key, const char* value)
{
    if (!config || !key || !value) {
        return null_argument("config/key/value");
    }
    return guarded([&] { config->config.set(key, value); });
}

msplit_status msplit_config_load_text(msplit_config* config, const char* text)
{
    if (!config || !text) {
        return null_argument("config/text");
    }
    return guarded([&] { config->config.apply_file_text(text); });
}

msplit_status msplit_config_validate(const msplit_config* config)
{
    if (!config) {
        return null_argument("config");
    }
    return guarded([&] { config->config.validate(); });
}

const char* msplit_config_echo(const msplit_config* config)
{
    if (!config) {
        return "";
    }
    config->echo = config->config.echo();
    return config->echo.c_str();
}

msplit_status msplit_run(const msplit_config* config, msplit_result** out)
{
    if (!config || !out) {
        return null_argument("config/out");
    }
    *out = nullptr;
    return guarded([&] {
        auto result = new msplit_result{msplit::run_experiment(config->config)};
        *out = result;
    });
}

void msplit_result_destroy(msplit_result* result) { delete result; }

msplit_status msplit_result_summary(const msplit_result* result, msplit_summary* out)
{
    if (!result || !out) {
        return null_argument("result/out");
    }
    const auto& s = result->run.summary;
    out->status = s.status == msplit::RunStatus::converged ? MSPLIT_RUN_CONVERGED
                                                           : MSPLIT_RUN_MAX_OUTER;
    out->outer_iterations = s.outer_iterations;
    out->total_inner_iterations = s.total_inner_iterations;
    out->iterations_per_second = s.iterations_per_second;
    out->final_true_residual = s.final_true_residual;
    out->wall_seconds = s.wall_seconds;
    return MSPLIT_OK;
}

const char* msplit_result_config_echo(const msplit_result* result)
{
    return result ? result->run.summary.config_echo.c_str() : "";
}

size_t msplit_result_solution_size(const msplit_result* result)
{
    return result ? result->run.solution.size() : 0;
}

size_t msplit_result_solution(const msplit_result* result, double* out, size_t capacity)
{
    if (!result || !out) {
        return 0;
    }
    const size_t n = std::min(capacity, result->run.solution.size());
    std::copy_n(result->run.solution.begin(), n, out);
    return n;
}

size_t msplit_result_trace_rows(const msplit_result* result)
{
    return result ? result->run.trace.rows.size() : 0;
}

msplit_status msplit_result_write_trace(const msplit_result* result, const char* path)
{
    if (!result || !path) {
        return null_argument("result/path");
    }
    const msplit_status st =
        guarded([&] { msplit::write_trace_csv(std::string(path), result->run.trace); });
    return st == MSPLIT_ERR_USAGE ? MSPLIT_ERR_IO : st;
}

msplit_status msplit_compare(const char* const* paths, size_t count, size_t reference,
                             msplit_comparison** out)
{
    if (!paths || !out) {
        return null_argument("paths/out");
    }
    *out = nullptr;
    return guarded([&] {
        std::vector<std::string> files;
        for (size_t i = 0; i < count; ++i) {
            if (!paths[i]) {
                throw msplit::UsageError("null trace path at index " + std::to_string(i));
            }
            files.emplace_back(paths[i]);
        }
        const auto cmp = msplit::compare_trace_files(files, reference);
        *out = new msplit_comparison{cmp.to_text(), cmp.to_csv()};
    });
}

void msplit_comparison_destroy(msplit_comparison* comparison) { delete comparison; }

const char* msplit_comparison_text(const msplit_comparison* comparison)
{
    return comparison ? comparison->text.c_str() : "";
}

const char* msplit_comparison_csv(const msplit_comparison* comparison)
{
    return comparison ? comparison->csv.c_str() : "";
}

}  // extern "C"
