#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"

namespace msplit {

enum class CommMode { sync, async };

const char* to_string(CommMode mode) noexcept;

/// Simulated network latency, in outer iterations. Draws depend only on
/// (seed, channel, source, target, sequence number) so they do not change
/// with scheduling order.
struct DelayModel {
    enum class Kind { none, fixed, uniform, jitter };

    Kind kind = Kind::none;
    std::size_t lo = 0;
    std::size_t hi = 0;
    std::uint64_t seed = 0;

    static DelayModel none() { return {}; }
    static DelayModel fixed(std::size_t d) { return {Kind::fixed, d, d, 0}; }
    static DelayModel uniform(std::size_t lo, std::size_t hi) { return {Kind::uniform, lo, hi, 0}; }
    /// 0 or 1 iterations with equal probability; never drops a message.
    static DelayModel jitter() { return {Kind::jitter, 0, 1, 0}; }

    DelayModel with_seed(std::uint64_t s) const
    {
        DelayModel m = *this;
        m.seed = s;
        return m;
    }

    std::size_t max_delay() const noexcept { return kind == Kind::none ? 0 : hi; }
    std::size_t draw(std::size_t channel, std::size_t source, std::size_t target,
                     std::size_t sequence) const;

    /// "none", "fixed:d", "uniform:lo:hi", "jitter".
    static std::optional<DelayModel> parse(std::string_view text);
    std::string to_string() const;
    bool operator==(const DelayModel&) const = default;
};

struct HaloMessage {
    std::size_t source_block = 0;
    std::size_t target_block = 0;
    std::size_t outer_iteration = 0;
    Vector payload;
    /// Simulated latency drawn for this message.
    std::size_t delay = 0;
};

/// Send-side slot accounting for one (source, target) pair.
class HaloBufferPool {
public:
    explicit HaloBufferPool(std::size_t capacity) : capacity_(capacity) {}

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t in_flight() const noexcept { return in_flight_; }
    std::size_t free_slots() const noexcept { return capacity_ - in_flight_; }

    bool try_acquire() noexcept
    {
        if (in_flight_ == capacity_) {
            return false;
        }
        ++in_flight_;
        return true;
    }
    void release(std::size_t count);

private:
    std::size_t capacity_;
    std::size_t in_flight_ = 0;
};

/// Result of an asynchronous exchange for one neighbor.
struct AsyncIncoming {
    std::size_t source_block = 0;
    /// Latest newly delivered payload, or empty ("none new").
    std::optional<HaloMessage> message;
    /// Older completions discarded in favor of `message`.
    std::size_t discarded = 0;
};

struct AsyncSendReport {
    std::size_t posted = 0;
    std::size_t skipped = 0;
};

struct ReduceEstimate {
    /// +infinity until a total covering every worker has arrived.
    double estimate = std::numeric_limits<double>::infinity();
    bool complete = false;
    /// Per contributor: outer iteration its value came from (-1 if absent).
    std::vector<long> contributor_iterations;
    /// Per contributor: caller iteration minus contributor iteration (-1 if absent).
    std::vector<long> staleness;
};

/// Raised inside blocking waits once a stop was requested.
class Interrupted : public Error {
public:
    Interrupted() : Error("fabric stop requested") {}
};

/// Message-passing fabric between block workers. All member functions are
/// safe to call concurrently from distinct workers. In replay mode
/// (`blocking == false`) a synchronous receive whose message has not been
/// posted yet is a protocol error instead of a wait.
class Fabric {
public:
    enum class Tag : std::size_t { halo = 0, confirm = 1, reduce = 2 };

    Fabric(std::size_t num_workers, CommMode mode, std::size_t buffers, DelayModel delay,
           std::vector<std::vector<std::size_t>> topology, bool blocking = false);

    std::size_t num_workers() const noexcept { return num_workers_; }
    CommMode mode() const noexcept { return mode_; }
    std::size_t buffers() const noexcept { return buffers_; }
    bool blocking() const noexcept { return blocking_; }
    const DelayModel& delay() const noexcept { return delay_; }
    const std::vector<std::size_t>& neighbors(std::size_t block) const
    {
        return topology_.at(block);
    }

    // Synchronous halo exchange, split into its two halves for replay
    // scheduling. Messages are matched by (tag, sequence number).
    void post_sync(std::size_t block, Tag tag, std::vector<HaloMessage> outgoing);
    std::vector<HaloMessage> collect_sync(std::size_t block, Tag tag, std::size_t sequence);
    /// Posts and waits for every neighbor's same-iteration message.
    std::vector<HaloMessage> halo_exchange_sync(std::size_t block,
                                                std::vector<HaloMessage> outgoing);

    /// Never blocks: reclaims completed sends, posts `outgoing` where a slot
    /// is free, and returns the freshest newly delivered payload per neighbor.
    std::vector<AsyncIncoming> halo_exchange_async(std::size_t block,
                                                   std::size_t outer_iteration,
                                                   std::vector<HaloMessage> outgoing,
                                                   AsyncSendReport* sends = nullptr);

    // Synchronous all-reduce (sum), also split for replay scheduling.
    void contribute(std::size_t block, std::size_t sequence, double value);
    double collect_reduction(std::size_t block, std::size_t sequence);
    double reduce_sync(std::size_t block, std::size_t sequence, double value);

    /// Tree-based non-blocking reduction (binary heap tree over workers).
    ReduceEstimate reduce_async(std::size_t block, std::size_t outer_iteration,
                                double local_value);

    /// The worker will send nothing more; peers waiting on it get a ProtocolError.
    void mark_finished(std::size_t block);
    /// Test hook: messages from this worker are never delivered.
    void suspend(std::size_t block);
    void request_stop();
    bool stop_requested() const;

    /// Confirmation epochs for asynchronous termination (free-running mode).
    std::size_t request_confirm(std::size_t after_epoch);
    std::size_t confirm_epoch() const;

    // Introspection for protocol property tests.
    const HaloBufferPool& send_pool(std::size_t source, std::size_t target) const;
    std::size_t queued(std::size_t source, std::size_t target) const;
    std::size_t tree_depth() const noexcept;

private:
    struct Pending {
        HaloMessage message;
        std::size_t ready_at = 0;
    };
    struct AsyncChannel {
        HaloBufferPool pool;
        std::deque<Pending> queue;
        std::size_t completed = 0;
        std::size_t last_ready = 0;
    };
    struct Contribution {
        double value = 0.0;
        std::vector<long> iterations;
    };
    struct TreeMessage {
        Contribution contribution;
        std::size_t ready_at = 0;
    };
    struct TreeChannel {
        std::deque<TreeMessage> queue;
        std::size_t last_ready = 0;
    };
    struct TreeNode {
        std::vector<std::optional<Contribution>> child_cache;
        std::optional<Contribution> total;
    };
    struct Collective {
        std::size_t sequence = 0;
        std::vector<std::optional<double>> values;
        std::size_t count = 0;
        std::size_t readers = 0;
    };

    std::size_t channel_index(std::size_t source, std::size_t target) const;
    void check_block(std::size_t block) const;
    void validate_outgoing(std::size_t block, const std::vector<HaloMessage>& outgoing) const;
    template <typename Pred, typename Peers>
    void wait_until(std::unique_lock<std::mutex>& lock, Pred ready,
                    const std::string& what, Peers pending_peers);

    std::size_t num_workers_;
    CommMode mode_;
    std::size_t buffers_;
    DelayModel delay_;
    std::vector<std::vector<std::size_t>> topology_;
    bool blocking_;

    mutable std::mutex mutex_;
    std::condition_variable cv_;

    std::vector<std::map<std::size_t, std::size_t>> neighbor_slot_;  // per block: neighbor -> slot
    std::vector<std::size_t> channel_offset_;
    std::map<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>, HaloMessage>
        sync_box_;  // (tag, source, target, sequence)
    std::vector<AsyncChannel> async_;  // indexed by channel_index
    std::map<std::pair<std::size_t, std::size_t>, TreeChannel> tree_channels_;
    std::vector<TreeNode> tree_;
    std::map<std::size_t, Collective> collectives_;
    std::vector<std::size_t> contribute_calls_;
    std::vector<std::size_t> collect_calls_;
    std::vector<bool> finished_;
    std::vector<bool> suspended_;
    bool stop_ = false;
    std::size_t confirm_requested_ = 0;
};

}  // namespace msplit
