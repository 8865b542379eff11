// Exercises the shared library through its C interface only.
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "msplit/msplit.h"

namespace {

std::filesystem::path scratch(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / "msplit_capi_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("config errors name the field")
{
    msplit_config* c = nullptr;
    REQUIRE(msplit_config_create(&c) == MSPLIT_OK);
    CHECK(msplit_config_set(c, "gx", "many") == MSPLIT_ERR_CONFIG);
    CHECK(std::string(msplit_last_error_field()) == "gx");
    CHECK(msplit_config_set(c, "nx", "4") == MSPLIT_OK);
    CHECK(msplit_config_set(c, "gx", "5") == MSPLIT_OK);
    CHECK(msplit_config_validate(c) == MSPLIT_ERR_CONFIG);
    CHECK(std::string(msplit_last_error_field()) == "gx");
    CHECK(std::string(msplit_last_error()).find("gx") != std::string::npos);

    msplit_result* r = nullptr;
    CHECK(msplit_run(c, &r) == MSPLIT_ERR_CONFIG);
    CHECK(r == nullptr);
    CHECK(msplit_config_set(nullptr, "nx", "4") == MSPLIT_ERR_USAGE);
    CHECK(msplit_config_load_text(c, "nx=8\ngx=2\n") == MSPLIT_OK);
    CHECK(msplit_config_validate(c) == MSPLIT_OK);
    msplit_config_destroy(c);
    msplit_config_destroy(nullptr);
}

TEST_CASE("run, summary, solution and trace")
{
    msplit_config* c = nullptr;
    REQUIRE(msplit_config_create(&c) == MSPLIT_OK);
    REQUIRE(msplit_config_load_text(c, "nx=6\nny=6\nnz=6\ngx=2\nmode=async\ndelay=uniform:0:2\n"
                                       "seed=5\n") == MSPLIT_OK);
    msplit_result* r = nullptr;
    REQUIRE(msplit_run(c, &r) == MSPLIT_OK);
    msplit_summary s{};
    REQUIRE(msplit_result_summary(r, &s) == MSPLIT_OK);
    CHECK(s.status == MSPLIT_RUN_CONVERGED);
    CHECK(s.final_true_residual <= 1e-6);
    CHECK(s.outer_iterations > 0);
    CHECK(msplit_result_trace_rows(r) == s.outer_iterations);
    CHECK(std::string(msplit_result_config_echo(r)) == msplit_config_echo(c));

    REQUIRE(msplit_result_solution_size(r) == 216);
    std::vector<double> x(216);
    CHECK(msplit_result_solution(r, x.data(), x.size()) == 216);
    for (double v : x) {
        CHECK(std::isfinite(v));
    }

    const auto a = scratch("a.csv");
    const auto b = scratch("b.csv");
    REQUIRE(msplit_result_write_trace(r, a.string().c_str()) == MSPLIT_OK);
    msplit_result* again = nullptr;
    REQUIRE(msplit_run(c, &again) == MSPLIT_OK);
    REQUIRE(msplit_result_write_trace(again, b.string().c_str()) == MSPLIT_OK);
    std::ifstream fa(a), fb(b);
    std::string ta((std::istreambuf_iterator<char>(fa)), {});
    std::string tb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(ta == tb);
    CHECK(msplit_result_write_trace(r, "/nonexistent/dir/x.csv") == MSPLIT_ERR_IO);

    const std::string pa = a.string(), pb = b.string();
    const char* paths[] = {pa.c_str(), pb.c_str()};
    msplit_comparison* cmp = nullptr;
    REQUIRE(msplit_compare(paths, 2, 0, &cmp) == MSPLIT_OK);
    CHECK(std::string(msplit_comparison_csv(cmp)).find(",1,1\n") != std::string::npos);
    CHECK(std::string(msplit_comparison_text(cmp)).size() > 0);
    msplit_comparison_destroy(cmp);

    const char* missing[] = {"/nonexistent/t.csv"};
    CHECK(msplit_compare(missing, 1, 0, &cmp) != MSPLIT_OK);

    msplit_result_destroy(again);
    msplit_result_destroy(r);
    msplit_config_destroy(c);
}

TEST_CASE("max_outer exhaustion is a result, not an error")
{
    msplit_config* c = nullptr;
    REQUIRE(msplit_config_create(&c) == MSPLIT_OK);
    REQUIRE(msplit_config_set(c, "max-outer", "1") == MSPLIT_OK);
    msplit_result* r = nullptr;
    REQUIRE(msplit_run(c, &r) == MSPLIT_OK);
    msplit_summary s{};
    REQUIRE(msplit_result_summary(r, &s) == MSPLIT_OK);
    CHECK(s.status == MSPLIT_RUN_MAX_OUTER);
    CHECK(s.outer_iterations == 1);
    msplit_result_destroy(r);
    msplit_config_destroy(c);
}
