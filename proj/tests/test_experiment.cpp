#include "doctest.h"
#include "oracles.hpp"

#include <sstream>

#include "errors.hpp"
#include "experiment.hpp"
#include "report.hpp"

using namespace msplit;

namespace {

std::string failing_field(const std::function<void()>& fn)
{
    try {
        fn();
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "";
}

std::string csv(const ResidualTrace& t)
{
    std::ostringstream out;
    write_trace_csv(out, t);
    return out.str();
}

ResidualTrace synthetic(std::size_t n, double dt)
{
    ResidualTrace t;
    for (std::size_t k = 1; k <= n; ++k) {
        TraceRow r;
        r.outer_iteration = k;
        r.time = dt * double(k);
        r.estimated_residual = 1.0 / double(k);
        if (k == n) {
            r.true_residual = 0.5 / double(k);
        }
        r.inner_iterations = 10 * k;
        t.rows.push_back(r);
    }
    return t;
}

}  // namespace

TEST_CASE("config keys and validation")
{
    ExperimentConfig c;
    c.set("nx", "12");
    c.set("boundary", "1,2,3,4,5,6");
    c.set("inner", "cg");
    c.set("delay", "uniform:0:3");
    c.set("residual-mode", "true");
    c.set("R", "4");
    CHECK(c.nx == 12);
    CHECK(c.boundary[5] == 6.0);
    CHECK(c.inner == InnerKind::cg);
    CHECK(c.delay.hi == 3);
    CHECK(c.buffers == 4);
    CHECK(c.residual_mode == ResidualCheck::true_global);
    c.set("residual-mode", "paper");
    CHECK(c.residual_mode == ResidualCheck::block_combiner);
    c.set("residual-mode", "true");

    CHECK(failing_field([&] { c.set("nx", "-3"); }) == "nx");
    CHECK(failing_field([&] { c.set("tol", "abc"); }) == "tol");
    CHECK(failing_field([&] { c.set("inner", "sor"); }) == "inner");
    CHECK(failing_field([&] { c.set("color", "red"); }) == "color");
    CHECK(failing_field([&] { c.set("boundary", "1,2"); }) == "boundary");

    ExperimentConfig bad;
    bad.nx = 4;
    bad.gx = 5;
    CHECK(failing_field([&] { bad.validate(); }) == "gx");
    bad.gx = 2;
    bad.overlap = 2;
    CHECK(failing_field([&] { bad.validate(); }) == "overlap");
    bad.overlap = 1;
    bad.validate();
    bad.inner_its = 0;
    CHECK(failing_field([&] { bad.validate(); }) == "inner-its");
    bad.inner_its = 3;
    bad.buffers = 0;
    CHECK(failing_field([&] { bad.validate(); }) == "R");
    bad.buffers = 1;
    bad.tol = 0;
    CHECK(failing_field([&] { bad.validate(); }) == "tol");
}

TEST_CASE("config echo round trip")
{
    ExperimentConfig c;
    c.apply_file_text("# a comment\nnx = 10\nny=6 # trailing\n\nmode=async\ntol=3.3e-7\n");
    c.set("delay", "fixed:2");
    c.set("boundary", "0.1,0,0,0.3333333333333333,0,1e-9");
    c.set("inner-tol", "1e-3");
    c.set("execution", "threads");
    CHECK(c.nx == 10);
    CHECK(c.ny == 6);
    CHECK(c.mode == RunMode::async);
    CHECK(ExperimentConfig::parse_echo(c.echo()) == c);
    CHECK(ExperimentConfig::parse_echo(ExperimentConfig{}.echo()) == ExperimentConfig{});
    CHECK(failing_field([] { ExperimentConfig::parse_echo("nx=4 junk"); }) == "junk");
}

TEST_CASE("baseline runs")
{
    ExperimentConfig c;
    c.nx = c.ny = c.nz = 4;
    c.mode = RunMode::baseline;
    for (auto kind : {InnerKind::jacobi, InnerKind::cg, InnerKind::gmres}) {
        c.inner = kind;
        auto r = run_experiment(c);
        CHECK(r.summary.status == RunStatus::converged);
        CHECK(r.summary.final_true_residual <= 1e-6);
        CHECK(r.trace.rows.size() == r.summary.outer_iterations);
        CHECK(ExperimentConfig::parse_echo(r.summary.config_echo) == c);
    }
    c.inner = InnerKind::jacobi;
    c.max_outer = 2;
    CHECK(run_experiment(c).summary.status == RunStatus::max_outer);
}

TEST_CASE("trace csv schema")
{
    ExperimentConfig c;
    c.true_every = 4;
    auto r = run_experiment(c);
    auto text = csv(r.trace);
    std::istringstream in(text);
    std::string header;
    std::getline(in, header);
    CHECK(header == kTraceHeader);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 5);
        const bool sampled = rows % 4 == 0 || rows == r.trace.rows.size();
        const auto third = line.find(',', line.find(',', line.find(',') + 1) + 1);
        CHECK((line[third + 1] == ',') == !sampled);
    }
    CHECK(rows == r.trace.rows.size());

    std::istringstream back(text);
    auto parsed = read_trace_csv(back, "mem");
    REQUIRE(parsed.rows.size() == r.trace.rows.size());
    for (std::size_t i = 0; i < rows; ++i) {
        CHECK(parsed.rows[i].estimated_residual == r.trace.rows[i].estimated_residual);
        CHECK(parsed.rows[i].true_residual == r.trace.rows[i].true_residual);
        CHECK(parsed.rows[i].time == r.trace.rows[i].time);
    }
}

TEST_CASE("bad traces are rejected by name")
{
    std::istringstream wrong("k,time\n1,2\n");
    try {
        read_trace_csv(wrong, "wrong.csv");
        FAIL("expected an error");
    } catch (const UsageError& e) {
        CHECK(std::string(e.what()).find("wrong.csv") != std::string::npos);
    }
    std::istringstream short_row(std::string(kTraceHeader) + "\n1,2,3\n");
    CHECK_THROWS_AS(read_trace_csv(short_row, "short.csv"), UsageError);
    CHECK_THROWS_AS(read_trace_csv("/nonexistent/trace.csv"), Error);
}

TEST_CASE("comparison ratios")
{
    auto a = synthetic(100, 0.01);
    auto same = compare_traces({{"a", a}, {"b", a}}, 0);
    for (const auto& row : same.rows) {
        CHECK(row.iteration_ratio == 1.0);
        CHECK(row.time_ratio == 1.0);
    }
    auto cmp = compare_traces({{"ref", a}, {"slow", synthetic(150, 0.02)}}, 0);
    CHECK(cmp.rows[1].iteration_ratio == doctest::Approx(1.5));
    CHECK(cmp.rows[1].time_ratio == doctest::Approx(3.0));
    CHECK(cmp.rows[0].iterations == 100);
    CHECK(cmp.rows[1].iterations == 150);
    CHECK(cmp.rows[1].iteration_rate == doctest::Approx(50.0));
    CHECK(cmp.to_text().find("slow") != std::string::npos);
    auto lines = cmp.to_csv();
    CHECK(std::count(lines.begin(), lines.end(), '\n') == 3);
    CHECK_THROWS_AS(compare_traces({{"a", a}}, 1), UsageError);
}

TEST_CASE("sync and async pair side by side")
{
    ExperimentConfig c;
    c.delay = DelayModel::uniform(0, 3);
    c.seed = 4;
    auto sync = run_experiment(c);
    c.mode = RunMode::async;
    auto async = run_experiment(c);
    auto cmp = compare_traces({{"sync", sync.trace}, {"async", async.trace}}, 0);
    CHECK(cmp.rows[0].iterations == sync.summary.outer_iterations);
    CHECK(cmp.rows[1].iterations == async.summary.outer_iterations);
    CHECK(cmp.rows[1].iteration_ratio ==
          doctest::Approx(double(async.summary.outer_iterations) / sync.summary.outer_iterations));
}

TEST_CASE("replay traces are byte-identical")
{
    ExperimentConfig c;
    c.nx = 8;
    c.gx = 2;
    c.gy = 2;
    c.overlap = 1;
    for (auto mode : {RunMode::sync, RunMode::async, RunMode::baseline}) {
        c.mode = mode;
        c.delay = DelayModel::uniform(0, 4);
        c.seed = 123;
        CHECK(csv(run_experiment(c).trace) == csv(run_experiment(c).trace));
    }
}
