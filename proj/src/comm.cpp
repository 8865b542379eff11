#include "comm.hpp"

#include <algorithm>
#include <charconv>
#include <random>
#include <string>

namespace msplit {

namespace {

std::optional<std::size_t> parse_count(std::string_view text)
{
    std::size_t value = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end || text.empty()) {
        return std::nullopt;
    }
    return value;
}

std::vector<std::string_view> split(std::string_view text, char sep)
{
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(sep, start);
        parts.push_back(text.substr(start, pos - start));
        if (pos == std::string_view::npos) {
            return parts;
        }
        start = pos + 1;
    }
}

std::string describe(std::size_t block, std::size_t peer)
{
    return "blocks " + std::to_string(block) + " <- " + std::to_string(peer);
}

}  // namespace

const char* to_string(CommMode mode) noexcept
{
    return mode == CommMode::sync ? "sync" : "async";
}

std::size_t DelayModel::draw(std::size_t channel, std::size_t source, std::size_t target,
                             std::size_t sequence) const
{
    if (kind == Kind::none) {
        return 0;
    }
    if (kind == Kind::fixed) {
        return lo;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(channel), static_cast<std::uint32_t>(source),
                      static_cast<std::uint32_t>(target),
                      static_cast<std::uint32_t>(sequence)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> dist(lo, hi);
    return dist(rng);
}

std::optional<DelayModel> DelayModel::parse(std::string_view text)
{
    const auto parts = split(text, ':');
    if (parts[0] == "none" && parts.size() == 1) {
        return none();
    }
    if (parts[0] == "jitter" && parts.size() == 1) {
        return jitter();
    }
    if (parts[0] == "fixed" && parts.size() == 2) {
        if (auto d = parse_count(parts[1])) {
            return fixed(*d);
        }
    }
    if (parts[0] == "uniform" && parts.size() == 3) {
        auto a = parse_count(parts[1]);
        auto b = parse_count(parts[2]);
        if (a && b && *a <= *b) {
            return uniform(*a, *b);
        }
    }
    return std::nullopt;
}

std::string DelayModel::to_string() const
{
    switch (kind) {
    case Kind::none: return "none";
    case Kind::fixed: return "fixed:" + std::to_string(lo);
    case Kind::uniform: return "uniform:" + std::to_string(lo) + ":" + std::to_string(hi);
    case Kind::jitter: return "jitter";
    }
    return "none";
}

void HaloBufferPool::release(std::size_t count)
{
    if (count > in_flight_) {
        throw ProtocolError("buffer pool released more slots than were in flight");
    }
    in_flight_ -= count;
}

Fabric::Fabric(std::size_t num_workers, CommMode mode, std::size_t buffers,
               DelayModel delay, std::vector<std::vector<std::size_t>> topology,
               bool blocking)
    : num_workers_(num_workers),
      mode_(mode),
      buffers_(buffers),
      delay_(delay),
      topology_(std::move(topology)),
      blocking_(blocking)
{
    if (num_workers_ < 1) {
        throw ConfigError("workers", "at least one worker is required");
    }
    if (buffers_ < 1) {
        throw ConfigError("R", "buffer count must be >= 1");
    }
    if (topology_.size() != num_workers_) {
        throw ConfigError("topology", "expected one neighbor list per worker");
    }
    neighbor_slot_.resize(num_workers_);
    channel_offset_.assign(num_workers_ + 1, 0);
    for (std::size_t b = 0; b < num_workers_; ++b) {
        auto& nb = topology_[b];
        std::sort(nb.begin(), nb.end());
        if (std::adjacent_find(nb.begin(), nb.end()) != nb.end()) {
            throw ConfigError("topology", "duplicate neighbor of worker " + std::to_string(b));
        }
        for (std::size_t s = 0; s < nb.size(); ++s) {
            const std::size_t j = nb[s];
            if (j >= num_workers_ || j == b) {
                throw ConfigError("topology", "invalid neighbor " + std::to_string(j) +
                                                  " of worker " + std::to_string(b));
            }
            neighbor_slot_[b][j] = s;
        }
        channel_offset_[b + 1] = channel_offset_[b] + nb.size();
    }
    for (std::size_t b = 0; b < num_workers_; ++b) {
        for (std::size_t j : topology_[b]) {
            if (!neighbor_slot_[j].contains(b)) {
                throw ConfigError("topology", "asymmetric neighbor lists: " +
                                                  std::to_string(b) + " lists " +
                                                  std::to_string(j) + " but not vice versa");
            }
        }
    }
    async_.reserve(channel_offset_.back());
    for (std::size_t c = 0; c < channel_offset_.back(); ++c) {
        async_.push_back(AsyncChannel{HaloBufferPool(buffers_), {}, 0, 0});
    }
    tree_.resize(num_workers_);
    for (std::size_t b = 0; b < num_workers_; ++b) {
        std::size_t children = 0;
        for (std::size_t c = 2 * b + 1; c <= 2 * b + 2 && c < num_workers_; ++c) {
            ++children;
        }
        tree_[b].child_cache.resize(children);
    }
    contribute_calls_.assign(num_workers_, 0);
    collect_calls_.assign(num_workers_, 0);
    finished_.assign(num_workers_, false);
    suspended_.assign(num_workers_, false);
}

std::size_t Fabric::channel_index(std::size_t source, std::size_t target) const
{
    const auto it = neighbor_slot_[source].find(target);
    if (it == neighbor_slot_[source].end()) {
        throw UsageError("no channel " + std::to_string(source) + " -> " +
                         std::to_string(target));
    }
    return channel_offset_[source] + it->second;
}

void Fabric::check_block(std::size_t block) const
{
    if (block >= num_workers_) {
        throw UsageError("worker id " + std::to_string(block) + " out of range");
    }
}

void Fabric::validate_outgoing(std::size_t block,
                               const std::vector<HaloMessage>& outgoing) const
{
    for (const auto& m : outgoing) {
        if (m.source_block != block || !neighbor_slot_[block].contains(m.target_block)) {
            throw UsageError("halo message " + std::to_string(m.source_block) + " -> " +
                             std::to_string(m.target_block) +
                             " does not match the topology of worker " +
                             std::to_string(block));
        }
    }
}

template <typename Pred, typename Peers>
void Fabric::wait_until(std::unique_lock<std::mutex>& lock, Pred ready,
                        const std::string& what, Peers pending_peers)
{
    while (!ready()) {
        if (stop_) {
            throw Interrupted();
        }
        for (std::size_t p : pending_peers()) {
            if (finished_[p]) {
                throw ProtocolError(what + ": worker " + std::to_string(p) +
                                    " terminated without sending");
            }
        }
        if (!blocking_) {
            throw ProtocolError(what + ": not yet available (would block in replay mode)");
        }
        cv_.wait(lock);
    }
}

void Fabric::post_sync(std::size_t block, Tag tag, std::vector<HaloMessage> outgoing)
{
    check_block(block);
    validate_outgoing(block, outgoing);
    {
        std::lock_guard lock(mutex_);
        for (auto& m : outgoing) {
            m.delay = delay_.draw(static_cast<std::size_t>(tag), m.source_block,
                                  m.target_block, m.outer_iteration);
            const auto key = std::make_tuple(static_cast<std::size_t>(tag), m.source_block,
                                             m.target_block, m.outer_iteration);
            if (sync_box_.contains(key)) {
                throw ProtocolError("duplicate synchronous message " +
                                    describe(m.target_block, m.source_block) +
                                    " at sequence " + std::to_string(m.outer_iteration));
            }
            sync_box_.emplace(key, std::move(m));
        }
    }
    cv_.notify_all();
}

std::vector<HaloMessage> Fabric::collect_sync(std::size_t block, Tag tag,
                                              std::size_t sequence)
{
    check_block(block);
    std::vector<HaloMessage> incoming;
    std::unique_lock lock(mutex_);
    for (std::size_t peer : topology_[block]) {
        const auto key =
            std::make_tuple(static_cast<std::size_t>(tag), peer, block, sequence);
        wait_until(
            lock, [&] { return sync_box_.contains(key); },
            "synchronous exchange " + describe(block, peer) + " at sequence " +
                std::to_string(sequence),
            [peer] { return std::vector<std::size_t>{peer}; });
        auto node = sync_box_.extract(key);
        incoming.push_back(std::move(node.mapped()));
    }
    return incoming;
}

std::vector<HaloMessage> Fabric::halo_exchange_sync(std::size_t block,
                                                    std::vector<HaloMessage> outgoing)
{
    if (mode_ != CommMode::sync) {
        throw UsageError("halo_exchange_sync called on an asynchronous fabric");
    }
    if (outgoing.size() != topology_.at(block).size()) {
        throw UsageError("halo_exchange_sync: expected one message per neighbor");
    }
    std::size_t sequence = 0;
    if (!outgoing.empty()) {
        sequence = outgoing.front().outer_iteration;
    }
    post_sync(block, Tag::halo, std::move(outgoing));
    return collect_sync(block, Tag::halo, sequence);
}

std::vector<AsyncIncoming> Fabric::halo_exchange_async(std::size_t block,
                                                       std::size_t outer_iteration,
                                                       std::vector<HaloMessage> outgoing,
                                                       AsyncSendReport* sends)
{
    if (mode_ != CommMode::async) {
        throw UsageError("halo_exchange_async called on a synchronous fabric");
    }
    check_block(block);
    validate_outgoing(block, outgoing);
    AsyncSendReport report;
    std::vector<AsyncIncoming> incoming;
    {
        std::lock_guard lock(mutex_);
        // Old sends are cleaned up and their slots returned to the pool.
        for (std::size_t peer : topology_[block]) {
            auto& ch = async_[channel_index(block, peer)];
            ch.pool.release(ch.completed);
            ch.completed = 0;
        }
        for (auto& m : outgoing) {
            auto& ch = async_[channel_index(block, m.target_block)];
            if (!ch.pool.try_acquire()) {
                ++report.skipped;
                continue;
            }
            m.outer_iteration = outer_iteration;
            m.delay = delay_.draw(static_cast<std::size_t>(Tag::halo), m.source_block,
                                  m.target_block, outer_iteration);
            const std::size_t ready = std::max(outer_iteration + m.delay, ch.last_ready);
            ch.last_ready = ready;
            ch.queue.push_back(Pending{std::move(m), ready});
            ++report.posted;
        }
        for (std::size_t peer : topology_[block]) {
            AsyncIncoming in;
            in.source_block = peer;
            if (!suspended_[peer]) {
                auto& ch = async_[channel_index(peer, block)];
                // FIFO delivery: ready times are non-decreasing along the queue.
                while (!ch.queue.empty() && ch.queue.front().ready_at <= outer_iteration) {
                    if (in.message) {
                        ++in.discarded;
                    }
                    in.message = std::move(ch.queue.front().message);
                    ch.queue.pop_front();
                    ++ch.completed;
                }
            }
            incoming.push_back(std::move(in));
        }
    }
    if (sends) {
        *sends = report;
    }
    return incoming;
}

void Fabric::contribute(std::size_t block, std::size_t sequence, double value)
{
    check_block(block);
    {
        std::lock_guard lock(mutex_);
        const std::size_t call = contribute_calls_[block]++;
        auto& c = collectives_[call];
        if (c.values.empty()) {
            c.values.resize(num_workers_);
            c.sequence = sequence;
        }
        if (c.sequence != sequence) {
            throw ProtocolError("mismatched collective: worker " + std::to_string(block) +
                                " contributed sequence " + std::to_string(sequence) +
                                " to a reduction at sequence " +
                                std::to_string(c.sequence));
        }
        c.values[block] = value;
        ++c.count;
    }
    cv_.notify_all();
}

double Fabric::collect_reduction(std::size_t block, std::size_t sequence)
{
    check_block(block);
    std::unique_lock lock(mutex_);
    const std::size_t call = collect_calls_[block]++;
    auto& c = collectives_[call];
    if (c.values.empty()) {
        c.values.resize(num_workers_);
        c.sequence = sequence;
    }
    if (c.sequence != sequence) {
        throw ProtocolError("mismatched collective: worker " + std::to_string(block) +
                            " awaits sequence " + std::to_string(sequence) +
                            " but the reduction is at sequence " +
                            std::to_string(c.sequence));
    }
    wait_until(
        lock, [&] { return c.count == num_workers_; },
        "reduction at sequence " + std::to_string(sequence),
        [&] {
            std::vector<std::size_t> missing;
            for (std::size_t w = 0; w < num_workers_; ++w) {
                if (!c.values[w]) {
                    missing.push_back(w);
                }
            }
            return missing;
        });
    double sum = 0.0;
    for (const auto& v : c.values) {
        sum += *v;
    }
    if (++c.readers == num_workers_) {
        collectives_.erase(call);
    }
    return sum;
}

double Fabric::reduce_sync(std::size_t block, std::size_t sequence, double value)
{
    contribute(block, sequence, value);
    return collect_reduction(block, sequence);
}

ReduceEstimate Fabric::reduce_async(std::size_t block, std::size_t outer_iteration,
                                    double local_value)
{
    check_block(block);
    std::lock_guard lock(mutex_);
    TreeNode& node = tree_[block];

    auto drain = [&](std::size_t source) -> std::optional<Contribution> {
        std::optional<Contribution> latest;
        if (suspended_[source]) {
            return latest;
        }
        auto& ch = tree_channels_[{source, block}];
        while (!ch.queue.empty() && ch.queue.front().ready_at <= outer_iteration) {
            latest = std::move(ch.queue.front().contribution);
            ch.queue.pop_front();
        }
        return latest;
    };
    auto send = [&](std::size_t target, const Contribution& c) {
        auto& ch = tree_channels_[{block, target}];
        if (ch.queue.size() >= buffers_) {
            return;
        }
        const std::size_t d = delay_.draw(static_cast<std::size_t>(Tag::reduce), block,
                                          target, outer_iteration);
        const std::size_t ready = std::max(outer_iteration + d, ch.last_ready);
        ch.last_ready = ready;
        ch.queue.push_back(TreeMessage{c, ready});
    };

    for (std::size_t c = 0; c < node.child_cache.size(); ++c) {
        if (auto latest = drain(2 * block + 1 + c)) {
            node.child_cache[c] = std::move(latest);
        }
    }
    if (block != 0) {
        if (auto latest = drain((block - 1) / 2)) {
            node.total = std::move(latest);
        }
    }

    Contribution subtotal;
    subtotal.iterations.assign(num_workers_, -1);
    subtotal.value = local_value;
    subtotal.iterations[block] = static_cast<long>(outer_iteration);
    for (const auto& child : node.child_cache) {
        if (!child) {
            continue;
        }
        subtotal.value += child->value;
        for (std::size_t w = 0; w < num_workers_; ++w) {
            if (child->iterations[w] >= 0) {
                subtotal.iterations[w] = child->iterations[w];
            }
        }
    }
    if (block == 0) {
        node.total = subtotal;
    } else {
        send((block - 1) / 2, subtotal);
    }
    if (node.total) {
        for (std::size_t c = 0; c < node.child_cache.size(); ++c) {
            send(2 * block + 1 + c, *node.total);
        }
    }

    ReduceEstimate out;
    out.contributor_iterations.assign(num_workers_, -1);
    out.staleness.assign(num_workers_, -1);
    if (node.total) {
        out.contributor_iterations = node.total->iterations;
        out.complete = std::all_of(out.contributor_iterations.begin(),
                                   out.contributor_iterations.end(),
                                   [](long it) { return it >= 0; });
        for (std::size_t w = 0; w < num_workers_; ++w) {
            if (out.contributor_iterations[w] >= 0) {
                out.staleness[w] =
                    static_cast<long>(outer_iteration) - out.contributor_iterations[w];
            }
        }
        if (out.complete) {
            out.estimate = node.total->value;
        }
    }
    return out;
}

void Fabric::mark_finished(std::size_t block)
{
    check_block(block);
    {
        std::lock_guard lock(mutex_);
        finished_[block] = true;
    }
    cv_.notify_all();
}

void Fabric::suspend(std::size_t block)
{
    check_block(block);
    std::lock_guard lock(mutex_);
    suspended_[block] = true;
}

void Fabric::request_stop()
{
    {
        std::lock_guard lock(mutex_);
        stop_ = true;
    }
    cv_.notify_all();
}

bool Fabric::stop_requested() const
{
    std::lock_guard lock(mutex_);
    return stop_;
}

std::size_t Fabric::request_confirm(std::size_t after_epoch)
{
    std::lock_guard lock(mutex_);
    confirm_requested_ = std::max(confirm_requested_, after_epoch + 1);
    return confirm_requested_;
}

std::size_t Fabric::confirm_epoch() const
{
    std::lock_guard lock(mutex_);
    return confirm_requested_;
}

const HaloBufferPool& Fabric::send_pool(std::size_t source, std::size_t target) const
{
    return async_.at(channel_index(source, target)).pool;
}

std::size_t Fabric::queued(std::size_t source, std::size_t target) const
{
    std::lock_guard lock(mutex_);
    return async_.at(channel_index(source, target)).queue.size();
}

std::size_t Fabric::tree_depth() const noexcept
{
    std::size_t depth = 0;
    for (std::size_t i = num_workers_ - 1; i > 0; i = (i - 1) / 2) {
        ++depth;
    }
    return depth;
}

}  // namespace msplit
