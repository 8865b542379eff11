#include "doctest.h"

#include <algorithm>
#include <numeric>
#include <random>
#include <thread>

#include "comm.hpp"
#include "errors.hpp"

using namespace msplit;

namespace {

using Topology = std::vector<std::vector<std::size_t>>;

Topology pair_topology() { return {{1}, {0}}; }

// 2x2 block grid, face neighbors only.
Topology grid2x2() { return {{1, 2}, {0, 3}, {0, 3}, {1, 2}}; }

Topology ring(std::size_t n)
{
    Topology t(n);
    if (n == 1) {
        return t;
    }
    for (std::size_t i = 0; i < n; ++i) {
        t[i] = {(i + n - 1) % n, (i + 1) % n};
        std::sort(t[i].begin(), t[i].end());
        t[i].erase(std::unique(t[i].begin(), t[i].end()), t[i].end());
    }
    return t;
}

std::vector<HaloMessage> messages(const Topology& t, std::size_t block, std::size_t k,
                                  double value)
{
    std::vector<HaloMessage> out;
    for (auto n : t[block]) {
        out.push_back(HaloMessage{block, n, k, {value, double(k)}, 0});
    }
    return out;
}

}  // namespace

TEST_CASE("delay model parsing and draws")
{
    CHECK(DelayModel::parse("none")->kind == DelayModel::Kind::none);
    auto f = DelayModel::parse("fixed:3");
    REQUIRE(f);
    CHECK(f->draw(0, 0, 1, 5) == 3);
    auto u = DelayModel::parse("uniform:1:4");
    REQUIRE(u);
    CHECK(u->lo == 1);
    CHECK(u->hi == 4);
    CHECK(DelayModel::parse("jitter")->max_delay() == 1);
    CHECK_FALSE(DelayModel::parse("uniform:4:1"));
    CHECK_FALSE(DelayModel::parse("fixed:-1"));
    CHECK_FALSE(DelayModel::parse("sometimes"));
    CHECK(DelayModel::parse(u->to_string())->hi == 4);

    auto m = DelayModel::uniform(0, 3).with_seed(99);
    std::vector<std::size_t> seen(4, 0);
    for (std::size_t s = 0; s < 2000; ++s) {
        const auto d = m.draw(0, 1, 2, s);
        REQUIRE(d <= 3);
        ++seen[d];
        CHECK(d == m.draw(0, 1, 2, s));
    }
    for (auto c : seen) {
        CHECK(c > 300);
    }
}

TEST_CASE("fabric construction")
{
    Fabric one(1, CommMode::sync, 1, {}, {{}});
    CHECK(one.halo_exchange_sync(0, {}).empty());
    Fabric one_async(1, CommMode::async, 1, {}, {{}});
    CHECK(one_async.halo_exchange_async(0, 0, {}).empty());
    CHECK(one_async.reduce_async(0, 0, 2.5).estimate == 2.5);

    CHECK_THROWS_AS(Fabric(2, CommMode::sync, 1, {}, {{1}, {}}), ConfigError);
    CHECK_THROWS_AS(Fabric(2, CommMode::async, 0, {}, pair_topology()), ConfigError);
    CHECK_THROWS_AS(Fabric(0, CommMode::sync, 1, {}, {}), ConfigError);
    CHECK_THROWS_AS(Fabric(2, CommMode::sync, 1, {}, {{0}, {}}), ConfigError);
}

TEST_CASE("sync exchange in replay returns same-iteration payloads")
{
    Fabric f(2, CommMode::sync, 1, {}, pair_topology());
    f.post_sync(0, Fabric::Tag::halo, messages(pair_topology(), 0, 4, 1.0));
    CHECK_THROWS_AS(f.collect_sync(0, Fabric::Tag::halo, 4), ProtocolError);
    f.post_sync(1, Fabric::Tag::halo, messages(pair_topology(), 1, 4, 2.0));
    auto in0 = f.collect_sync(0, Fabric::Tag::halo, 4);
    auto in1 = f.collect_sync(1, Fabric::Tag::halo, 4);
    REQUIRE(in0.size() == 1);
    REQUIRE(in1.size() == 1);
    CHECK(in0[0].payload[0] == 2.0);
    CHECK(in1[0].payload[0] == 1.0);
    CHECK(in0[0].outer_iteration == 4);
    CHECK(in1[0].outer_iteration == 4);
}

TEST_CASE("outgoing messages are validated")
{
    Fabric f(2, CommMode::sync, 1, {}, pair_topology());
    CHECK_THROWS_AS(f.post_sync(0, Fabric::Tag::halo, {HaloMessage{0, 0, 0, {}, 0}}),
                    UsageError);
    CHECK_THROWS_AS(f.halo_exchange_async(0, 0, {}), UsageError);
}

TEST_CASE("threaded sync exchange on a 2x2 grid ignores delays for correctness")
{
    const auto topo = grid2x2();
    Fabric f(4, CommMode::sync, 1, DelayModel::uniform(0, 3).with_seed(5), topo, true);
    std::vector<int> failures(4, 0);
    {
        std::vector<std::jthread> workers;
        for (std::size_t w = 0; w < 4; ++w) {
            workers.emplace_back([&, w] {
                for (std::size_t k = 0; k < 50; ++k) {
                    auto in = f.halo_exchange_sync(w, messages(topo, w, k, double(w)));
                    if (in.size() != topo[w].size()) {
                        ++failures[w];
                    }
                    for (const auto& m : in) {
                        if (m.outer_iteration != k || m.payload[0] != double(m.source_block) ||
                            m.payload[1] != double(k)) {
                            ++failures[w];
                        }
                    }
                }
            });
        }
    }
    CHECK(std::accumulate(failures.begin(), failures.end(), 0) == 0);
}

TEST_CASE("sync exchange detects a terminated peer")
{
    Fabric f(2, CommMode::sync, 1, {}, pair_topology(), true);
    f.mark_finished(1);
    try {
        f.halo_exchange_sync(0, messages(pair_topology(), 0, 0, 1.0));
        FAIL("expected a protocol error");
    } catch (const ProtocolError& e) {
        const std::string what = e.what();
        CHECK(what.find('0') != std::string::npos);
        CHECK(what.find('1') != std::string::npos);
    }
}

TEST_CASE("reduce_sync")
{
    Fabric f(2, CommMode::sync, 1, {}, pair_topology());
    f.contribute(0, 0, 9.0);
    f.contribute(1, 0, 16.0);
    CHECK(f.collect_reduction(0, 0) == 25.0);
    CHECK(std::sqrt(f.collect_reduction(1, 0)) == 5.0);

    f.contribute(0, 1, 0.0);
    f.contribute(1, 1, 0.0);
    CHECK(f.collect_reduction(0, 1) == 0.0);
    CHECK(f.collect_reduction(1, 1) == 0.0);

    f.contribute(0, 2, 1.0);
    CHECK_THROWS_AS(f.contribute(1, 3, 1.0), ProtocolError);

    Fabric solo(1, CommMode::sync, 1, {}, {{}});
    CHECK(solo.reduce_sync(0, 0, 3.5) == 3.5);
}

TEST_CASE("threaded reduce_sync sums every contribution")
{
    const std::size_t p = 5;
    Fabric f(p, CommMode::sync, 1, {}, ring(p), true);
    std::vector<double> results(p * 20);
    {
        std::vector<std::jthread> workers;
        for (std::size_t w = 0; w < p; ++w) {
            workers.emplace_back([&, w] {
                for (std::size_t k = 0; k < 20; ++k) {
                    results[k * p + w] = f.reduce_sync(w, k, double(w + k));
                }
            });
        }
    }
    for (std::size_t k = 0; k < 20; ++k) {
        for (std::size_t w = 0; w < p; ++w) {
            CHECK(results[k * p + w] == double(10 + 5 * k));
        }
    }
}

TEST_CASE("async fixed delay 2 delivers iteration k-2")
{
    const auto topo = pair_topology();
    Fabric f(2, CommMode::async, 100, DelayModel::fixed(2), topo);
    for (std::size_t k = 0; k < 30; ++k) {
        for (std::size_t w = 0; w < 2; ++w) {
            auto in = f.halo_exchange_async(w, k, messages(topo, w, k, double(w)));
            REQUIRE(in.size() == 1);
            if (k >= 2) {
                REQUIRE(in[0].message.has_value());
                CHECK(in[0].message->outer_iteration == k - 2);
                CHECK(in[0].discarded == 0);
            } else {
                CHECK_FALSE(in[0].message.has_value());
            }
        }
    }
}

TEST_CASE("async with no delay is never older than k-1")
{
    const auto topo = ring(4);
    Fabric f(4, CommMode::async, 100, {}, topo);
    for (std::size_t k = 0; k < 50; ++k) {
        for (std::size_t w = 0; w < 4; ++w) {
            auto in = f.halo_exchange_async(w, k, messages(topo, w, k, double(w)));
            for (const auto& i : in) {
                if (k == 0 && i.source_block > w) {
                    CHECK_FALSE(i.message.has_value());
                    continue;
                }
                REQUIRE(i.message.has_value());
                CHECK(i.message->outer_iteration + 1 >= k);
                CHECK(i.message->outer_iteration <= k);
            }
        }
    }
}

TEST_CASE("async with one buffer and delay 3 skips sends")
{
    const auto topo = pair_topology();
    Fabric f(2, CommMode::async, 1, DelayModel::fixed(3), topo);
    std::vector<std::vector<std::size_t>> applied(2);
    std::size_t skipped = 0;
    for (std::size_t k = 0; k < 60; ++k) {
        for (std::size_t w = 0; w < 2; ++w) {
            AsyncSendReport sends;
            auto in = f.halo_exchange_async(w, k, messages(topo, w, k, 0.0), &sends);
            skipped += sends.skipped;
            CHECK(f.send_pool(w, 1 - w).in_flight() + f.send_pool(w, 1 - w).free_slots() == 1);
            if (in[0].message) {
                CHECK(k - in[0].message->outer_iteration >= 3);
                applied[w].push_back(in[0].message->outer_iteration);
            }
        }
    }
    CHECK(skipped > 0);
    for (const auto& seqs : applied) {
        REQUIRE(seqs.size() >= 10);
        for (std::size_t i = 1; i < seqs.size(); ++i) {
            CHECK(seqs[i] - seqs[i - 1] >= 3);
        }
    }
}

TEST_CASE("suspended peer: async calls never block and report nothing new")
{
    const auto topo = grid2x2();
    Fabric f(4, CommMode::async, 3, {}, topo);
    f.suspend(3);
    for (std::size_t k = 0; k < 200; ++k) {
        for (std::size_t w = 0; w < 3; ++w) {
            AsyncSendReport sends;
            auto in = f.halo_exchange_async(w, k, messages(topo, w, k, 1.0), &sends);
            for (const auto& i : in) {
                if (i.source_block == 3) {
                    CHECK_FALSE(i.message.has_value());
                }
            }
            auto est = f.reduce_async(w, k, 1.0);
            CHECK_FALSE(est.complete);
            CHECK(std::isinf(est.estimate));
        }
    }
    // Sends toward the suspended worker are never collected: the pool stays full.
    CHECK(f.send_pool(1, 3).in_flight() == 3);
    CHECK(f.send_pool(1, 3).free_slots() == 0);
}

TEST_CASE("async reduction flushes within two tree depths")
{
    for (std::size_t p : {1u, 2u, 3u, 5u, 8u}) {
        Fabric f(p, CommMode::async, 100, {}, ring(p));
        const double c = 0.25;
        const std::size_t flush = 2 * f.tree_depth();
        for (std::size_t k = 0; k < 40; ++k) {
            for (std::size_t w = 0; w < p; ++w) {
                auto est = f.reduce_async(w, k, c);
                if (k >= flush) {
                    REQUIRE(est.complete);
                    CHECK(est.estimate == doctest::Approx(p * c));
                    for (auto s : est.staleness) {
                        CHECK(s >= 0);
                        CHECK(std::size_t(s) <= flush);
                    }
                }
            }
        }
    }
}

TEST_CASE("async reduction estimate is a sum of actual contributions")
{
    const std::size_t p = 6;
    Fabric f(p, CommMode::async, 100, DelayModel::uniform(0, 2).with_seed(3), ring(p));
    // Worker w contributes 2^w * (k + 1) at iteration k, so the estimate
    // decodes uniquely into per-contributor iterations.
    for (std::size_t k = 0; k < 100; ++k) {
        for (std::size_t w = 0; w < p; ++w) {
            auto est = f.reduce_async(w, k, std::ldexp(1.0, int(w)) * double(k + 1));
            if (!est.complete) {
                continue;
            }
            double expect = 0.0;
            for (std::size_t c = 0; c < p; ++c) {
                CHECK(est.contributor_iterations[c] <= long(k));
                expect += std::ldexp(1.0, int(c)) * double(est.contributor_iterations[c] + 1);
            }
            CHECK(est.estimate == expect);
        }
    }
}

TEST_CASE("protocol properties over many scheduled steps")
{
    const auto topo = grid2x2();
    for (std::size_t d : {1u, 3u, 5u}) {
        for (std::size_t r : {1u, 2u, 8u}) {
            Fabric f(4, CommMode::async, r, DelayModel::uniform(0, d).with_seed(d * 31 + r), topo);
            std::vector<std::vector<long>> last(4, std::vector<long>(4, -1));
            std::size_t violations = 0;
            std::size_t steps = 0;
            std::size_t max_lag = 0;
            for (std::size_t k = 0; k < 300; ++k) {
                for (std::size_t w = 0; w < 4; ++w, ++steps) {
                    auto in = f.halo_exchange_async(w, k, messages(topo, w, k, 0.0));
                    for (auto n : topo[w]) {
                        const auto& pool = f.send_pool(w, n);
                        if (pool.in_flight() + pool.free_slots() != r || pool.in_flight() > r) {
                            ++violations;
                        }
                    }
                    for (const auto& i : in) {
                        if (!i.message) {
                            continue;
                        }
                        const long seq = long(i.message->outer_iteration);
                        if (seq <= last[w][i.source_block]) {
                            ++violations;
                        }
                        last[w][i.source_block] = seq;
                        const std::size_t lag = k - i.message->outer_iteration;
                        max_lag = std::max(max_lag, lag);
                        if (r > d && lag > d + 1) {
                            ++violations;
                        }
                    }
                }
            }
            CHECK(steps >= 1000);
            CHECK(violations == 0);
            if (r > d) {
                CHECK(max_lag <= d + 1);
            }
        }
    }
}
