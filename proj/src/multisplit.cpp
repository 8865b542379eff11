#include "multisplit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>
#include <unordered_map>

#include "errors.hpp"

namespace msplit {

namespace {

constexpr std::size_t kLuBlockCap = 512;

std::vector<std::size_t> sorted_union(std::vector<std::size_t> a,
                                      const std::vector<std::size_t>& b)
{
    a.insert(a.end(), b.begin(), b.end());
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    return a;
}

// Points block `id` reads: its extended region plus halo columns.
std::vector<std::size_t> read_set(const LinearProblem& problem, const Block& block)
{
    std::vector<std::size_t> halo;
    const auto& ext = block.extended;
    for (std::size_t g : ext) {
        for (std::size_t c : problem.matrix.row_cols(g)) {
            if (!std::binary_search(ext.begin(), ext.end(), c)) {
                halo.push_back(c);
            }
        }
    }
    std::sort(halo.begin(), halo.end());
    halo.erase(std::unique(halo.begin(), halo.end()), halo.end());
    return halo;
}

std::vector<std::size_t> intersect(const std::vector<std::size_t>& a,
                                   const std::vector<std::size_t>& b)
{
    std::vector<std::size_t> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

}  // namespace

void OuterConfig::validate() const
{
    inner.validate();
    if (!(tol > 0.0) || !std::isfinite(tol)) {
        throw ConfigError("tol", "must be a finite value > 0");
    }
    if (max_outer < 1) {
        throw ConfigError("max-outer", "must be >= 1");
    }
    if (buffers < 1) {
        throw ConfigError("R", "must be >= 1");
    }
    if (delay.kind == DelayModel::Kind::uniform && delay.lo > delay.hi) {
        throw ConfigError("delay", "uniform delay needs lo <= hi");
    }
    if (execution == Execution::threads && residual_check == ResidualCheck::true_global) {
        throw ConfigError("residual-mode",
                          "true residual checking is only available in replay execution");
    }
}

Vector merge_overlap(const MergePlan& plan, std::span<const double> own,
                     const std::vector<Vector>& contributions)
{
    if (own.size() != plan.own_size ||
        contributions.size() != plan.receive_positions.size()) {
        throw UsageError("merge_overlap: contribution layout mismatch");
    }
    Vector sum(plan.inverse_cover.size(), 0.0);
    std::copy(own.begin(), own.end(), sum.begin());
    for (std::size_t s = 0; s < contributions.size(); ++s) {
        const auto& pos = plan.receive_positions[s];
        if (contributions[s].size() != pos.size()) {
            throw UsageError("merge_overlap: payload length mismatch");
        }
        for (std::size_t q = 0; q < pos.size(); ++q) {
            sum[pos[q]] += contributions[s][q];
        }
    }
    for (std::size_t p = 0; p < sum.size(); ++p) {
        sum[p] *= plan.inverse_cover[p];
    }
    return sum;
}

double estimate_global_residual(std::span<const double> local_relative_residues)
{
    double sum = 0.0;
    for (double r : local_relative_residues) {
        sum += r * r;
    }
    return std::sqrt(sum);
}

double true_relative_residual(const LinearProblem& problem, std::span<const double> x)
{
    return residual_norms(problem.matrix, x, problem.rhs).relative_or_throw();
}

TerminationAction check_termination(double estimate, double tol, std::size_t completed,
                                    std::size_t max_outer, CommMode mode)
{
    if (completed >= max_outer) {
        return TerminationAction::stop;
    }
    if (estimate < tol) {
        return mode == CommMode::sync ? TerminationAction::stop : TerminationAction::confirm;
    }
    return TerminationAction::continue_iterating;
}

BlockWorker::BlockWorker(const LinearProblem& problem, const BlockDecomposition& decomp,
                         std::size_t block_id, const OuterConfig& config)
    : id_(block_id),
      problem_(&problem),
      neighbors_(decomp.block(block_id).neighbors),
      extended_(decomp.block(block_id).extended),
      system_(block_system(problem, decomp, block_id)),
      solver_(system_.a_ii, config.inner)
{
    const Block& me = decomp.block(block_id);
    const std::size_t n_ext = extended_.size();

    const auto halo = read_set(problem, me);
    view_globals_ = extended_;
    view_globals_.insert(view_globals_.end(), halo.begin(), halo.end());
    std::unordered_map<std::size_t, std::size_t> position;
    position.reserve(view_globals_.size());
    for (std::size_t p = 0; p < view_globals_.size(); ++p) {
        position.emplace(view_globals_[p], p);
    }
    const auto reads = sorted_union(extended_, halo);

    for (const auto& c : system_.coupling) {
        coupling_positions_.emplace_back(c.local_row, position.at(c.global_col));
        coupling_values_.push_back(c.coefficient);
    }
    b_ext_.reserve(n_ext);
    for (std::size_t g : extended_) {
        b_ext_.push_back(problem.rhs[g]);
    }

    // Owned rows over view positions, for the local residual.
    std::vector<Triplet> owned_entries;
    for (std::size_t p = 0; p < n_ext; ++p) {
        const std::size_t g = extended_[p];
        const auto c = decomp.grid().coords(g);
        if (!me.owned.contains(c[0], c[1], c[2])) {
            continue;
        }
        const std::size_t row = owned_local_.size();
        owned_local_.push_back(p);
        b_owned_.push_back(problem.rhs[g]);
        auto cols = problem.matrix.row_cols(g);
        auto vals = problem.matrix.row_values(g);
        for (std::size_t k = 0; k < cols.size(); ++k) {
            owned_entries.push_back({row, position.at(cols[k]), vals[k]});
        }
    }
    owned_rows_ = CsrMatrix::from_triplets(owned_local_.size(), view_globals_.size(),
                                           std::move(owned_entries));
    const double b_owned_norm = norm2(b_owned_);
    residual_scale_ = b_owned_norm > 0.0 ? b_owned_norm : norm2(problem.rhs);
    if (residual_scale_ == 0.0) {
        residual_scale_ = 1.0;
    }

    // Exchange layout: each neighbor sends its raw block solution on the
    // part of its extended region that this block reads.
    merge_.own_size = n_ext;
    merge_.inverse_cover.resize(view_globals_.size());
    std::vector<unsigned> received(view_globals_.size(), 0);
    for (std::size_t p = 0; p < n_ext; ++p) {
        received[p] = 1;
    }
    const auto owned_mine = [&] {
        std::vector<std::size_t> out;
        for (std::size_t p : owned_local_) {
            out.push_back(extended_[p]);
        }
        return out;
    }();
    for (std::size_t j : neighbors_) {
        const Block& other = decomp.block(j);
        const auto other_reads = sorted_union(other.extended, read_set(problem, other));

        std::vector<std::size_t> send;
        for (std::size_t g : intersect(extended_, other_reads)) {
            send.push_back(static_cast<std::size_t>(
                std::lower_bound(extended_.begin(), extended_.end(), g) - extended_.begin()));
        }
        send_positions_.push_back(std::move(send));

        std::vector<std::size_t> recv;
        for (std::size_t g : intersect(other.extended, reads)) {
            const std::size_t p = position.at(g);
            recv.push_back(p);
            ++received[p];
        }
        merge_.receive_positions.push_back(std::move(recv));

        // Confirmation round: owned values only.
        std::vector<std::size_t> other_owned;
        for (std::size_t g : other.extended) {
            const auto c = decomp.grid().coords(g);
            if (other.owned.contains(c[0], c[1], c[2])) {
                other_owned.push_back(g);
            }
        }
        std::vector<std::size_t> csend;
        for (std::size_t g : intersect(owned_mine, other_reads)) {
            csend.push_back(position.at(g));
        }
        confirm_send_.push_back(std::move(csend));
        std::vector<std::size_t> crecv;
        for (std::size_t g : intersect(other_owned, reads)) {
            crecv.push_back(position.at(g));
        }
        confirm_receive_.push_back(std::move(crecv));
    }
    for (std::size_t p = 0; p < view_globals_.size(); ++p) {
        const unsigned m = decomp.cover_count(view_globals_[p]);
        if (received[p] != m) {
            throw ProtocolError("block " + std::to_string(id_) + ": point " +
                                std::to_string(view_globals_[p]) + " covered by " +
                                std::to_string(m) + " blocks but " +
                                std::to_string(received[p]) +
                                " contributions are routed here (missing halo coverage)");
        }
        merge_.inverse_cover[p] = 1.0 / m;
    }

    view_.assign(view_globals_.size(), 0.0);
    contribution_.assign(n_ext, 0.0);
    for (const auto& pos : merge_.receive_positions) {
        cache_.emplace_back(pos.size(), 0.0);
    }
    cache_seq_.assign(neighbors_.size(), -1);
}

void BlockWorker::load_global(std::span<const double> x)
{
    if (x.size() != problem_->rhs.size()) {
        throw UsageError("load_global: length mismatch");
    }
    for (std::size_t p = 0; p < view_globals_.size(); ++p) {
        view_[p] = x[view_globals_[p]];
    }
    for (std::size_t p = 0; p < contribution_.size(); ++p) {
        contribution_[p] = view_[p];
    }
    for (std::size_t s = 0; s < cache_.size(); ++s) {
        const auto& pos = merge_.receive_positions[s];
        for (std::size_t q = 0; q < pos.size(); ++q) {
            cache_[s][q] = view_[pos[q]];
        }
    }
}

Vector BlockWorker::assemble_rhs() const
{
    Vector rhs = b_ext_;
    for (std::size_t e = 0; e < coupling_positions_.size(); ++e) {
        const auto [row, pos] = coupling_positions_[e];
        rhs[row] -= coupling_values_[e] * view_[pos];
    }
    return rhs;
}

std::size_t BlockWorker::solve_block()
{
    const Vector rhs = assemble_rhs();
    auto result = solver_.solve(rhs, std::span<const double>(view_).first(extended_.size()));
    if (result.report.stop_reason == StopReason::breakdown) {
        throw BreakdownError(id_, k_, result.report.detail);
    }
    contribution_ = std::move(result.x);
    return result.report.iterations_used;
}

std::vector<HaloMessage> BlockWorker::outgoing() const
{
    std::vector<HaloMessage> out;
    out.reserve(neighbors_.size());
    for (std::size_t s = 0; s < neighbors_.size(); ++s) {
        HaloMessage m;
        m.source_block = id_;
        m.target_block = neighbors_[s];
        m.outer_iteration = k_;
        m.payload.reserve(send_positions_[s].size());
        for (std::size_t p : send_positions_[s]) {
            m.payload.push_back(contribution_[p]);
        }
        out.push_back(std::move(m));
    }
    return out;
}

void BlockWorker::absorb(const std::vector<HaloMessage>& incoming)
{
    if (incoming.size() != neighbors_.size()) {
        throw ProtocolError("block " + std::to_string(id_) + ": expected " +
                            std::to_string(neighbors_.size()) + " halo messages, got " +
                            std::to_string(incoming.size()));
    }
    for (std::size_t s = 0; s < incoming.size(); ++s) {
        const auto& m = incoming[s];
        if (m.source_block != neighbors_[s] || m.payload.size() != cache_[s].size()) {
            throw ProtocolError("block " + std::to_string(id_) +
                                ": malformed halo message from " +
                                std::to_string(m.source_block));
        }
        cache_[s] = m.payload;
        cache_seq_[s] = static_cast<long>(m.outer_iteration);
    }
}

void BlockWorker::absorb(const std::vector<AsyncIncoming>& incoming)
{
    applied_lags_.clear();
    for (std::size_t s = 0; s < incoming.size(); ++s) {
        const auto& in = incoming[s];
        if (!in.message) {
            continue;
        }
        const auto& m = *in.message;
        if (m.source_block != neighbors_[s] || m.payload.size() != cache_[s].size()) {
            throw ProtocolError("block " + std::to_string(id_) +
                                ": malformed halo message from " +
                                std::to_string(m.source_block));
        }
        const long seq = static_cast<long>(m.outer_iteration);
        if (seq <= cache_seq_[s]) {
            continue;  // stale
        }
        cache_[s] = m.payload;
        cache_seq_[s] = seq;
        applied_lags_.push_back(k_ - m.outer_iteration);
    }
}

void BlockWorker::merge() { view_ = merge_overlap(merge_, contribution_, cache_); }

double BlockWorker::owned_residual(std::span<const double> values) const
{
    Vector ax = spmv(owned_rows_, values);
    double rr = 0.0;
    for (std::size_t r = 0; r < ax.size(); ++r) {
        const double d = b_owned_[r] - ax[r];
        rr += d * d;
    }
    return std::sqrt(rr) / residual_scale_;
}

double BlockWorker::local_relative_residual() const { return owned_residual(view_); }

std::size_t BlockWorker::halo_staleness() const noexcept
{
    std::size_t worst = 0;
    for (long seq : cache_seq_) {
        const long lag = static_cast<long>(k_) - seq;
        worst = std::max(worst, static_cast<std::size_t>(std::max(lag, 0L)));
    }
    return worst;
}

std::vector<HaloMessage> BlockWorker::confirm_outgoing(std::size_t epoch) const
{
    std::vector<HaloMessage> out;
    for (std::size_t s = 0; s < neighbors_.size(); ++s) {
        HaloMessage m;
        m.source_block = id_;
        m.target_block = neighbors_[s];
        m.outer_iteration = epoch;
        for (std::size_t p : confirm_send_[s]) {
            m.payload.push_back(view_[p]);
        }
        out.push_back(std::move(m));
    }
    return out;
}

double BlockWorker::confirm_residual(const std::vector<HaloMessage>& incoming) const
{
    Vector values = view_;
    for (std::size_t s = 0; s < incoming.size(); ++s) {
        const auto& pos = confirm_receive_[s];
        if (incoming[s].payload.size() != pos.size()) {
            throw ProtocolError("block " + std::to_string(id_) +
                                ": malformed confirmation payload");
        }
        for (std::size_t q = 0; q < pos.size(); ++q) {
            values[pos[q]] = incoming[s].payload[q];
        }
    }
    return owned_residual(values);
}

void BlockWorker::scatter_owned(std::span<double> global) const
{
    for (std::size_t p : owned_local_) {
        global[view_globals_[p]] = view_[p];
    }
}

namespace {

class Driver {
public:
    Driver(const LinearProblem& problem, const OuterConfig& config, const LagObserver& observer)
        : problem_(problem),
          config_(config),
          observer_(observer),
          decomp_(decompose(problem.grid, config.block_grid, config.overlap))
    {
        workers_.reserve(decomp_.num_blocks());
        std::vector<std::vector<std::size_t>> topology;
        for (std::size_t b = 0; b < decomp_.num_blocks(); ++b) {
            workers_.emplace_back(problem, decomp_, b, config);
            topology.push_back(decomp_.block(b).neighbors);
        }
        fabric_ = std::make_unique<Fabric>(workers_.size(), config.mode, config.buffers,
                                           config.delay, std::move(topology),
                                           config.execution == Execution::threads);
    }

    OuterResult run()
    {
        const auto start = std::chrono::steady_clock::now();
        OuterResult result = config_.execution == Execution::replay ? run_replay()
                                                                     : run_threads();
        result.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.solution = gather();
        result.final_true_residual = true_relative_residual(problem_, result.solution);
        if (!result.trace.rows.empty()) {
            result.trace.rows.back().true_residual = result.final_true_residual;
        }
        for (const auto& row : result.trace.rows) {
            result.total_inner_iterations += row.inner_iterations;
        }
        return result;
    }

private:
    Vector gather() const
    {
        Vector x(problem_.rhs.size(), 0.0);
        for (const auto& w : workers_) {
            w.scatter_owned(x);
        }
        return x;
    }

    void note_lags(BlockWorker& w, const std::vector<AsyncIncoming>& incoming,
                   std::size_t& max_lag)
    {
        std::size_t i = 0;
        for (std::size_t s = 0; s < incoming.size(); ++s) {
            if (!incoming[s].message) {
                continue;
            }
            if (w.cache_sequences()[s] != static_cast<long>(incoming[s].message->outer_iteration)) {
                continue;
            }
            const std::size_t lag = w.applied_lags()[i++];
            max_lag = std::max(max_lag, lag);
            if (observer_) {
                observer_(w.id(), w.neighbors()[s], w.cache_sequences()[s], lag);
            }
        }
    }

    double confirm_replay(std::size_t epoch)
    {
        for (auto& w : workers_) {
            fabric_->post_sync(w.id(), Fabric::Tag::confirm, w.confirm_outgoing(epoch));
        }
        for (auto& w : workers_) {
            const auto in = fabric_->collect_sync(w.id(), Fabric::Tag::confirm, epoch);
            const double r = w.confirm_residual(in);
            fabric_->contribute(w.id(), epoch, r * r);
        }
        double value = 0.0;
        for (auto& w : workers_) {
            value = std::sqrt(fabric_->collect_reduction(w.id(), epoch));
        }
        if (config_.residual_check == ResidualCheck::true_global) {
            value = true_relative_residual(problem_, gather());
        }
        return value;
    }

    OuterResult run_replay()
    {
        OuterResult result;
        const bool sync = config_.mode == CommMode::sync;
        double time = 0.0;
        std::size_t epoch = 0;
        for (std::size_t k = 0;; ++k) {
            TraceRow row;
            row.outer_iteration = k + 1;
            std::vector<double> estimates(workers_.size(), 0.0);
            if (sync) {
                for (auto& w : workers_) {
                    row.inner_iterations += w.solve_block();
                    fabric_->post_sync(w.id(), Fabric::Tag::halo, w.outgoing());
                }
                std::size_t round_delay = 0;
                for (auto& w : workers_) {
                    const auto in = fabric_->collect_sync(w.id(), Fabric::Tag::halo, k);
                    for (const auto& m : in) {
                        round_delay = std::max(round_delay, m.delay);
                    }
                    w.absorb(in);
                    w.merge();
                    const double r = w.local_relative_residual();
                    fabric_->contribute(w.id(), k, r * r);
                }
                for (auto& w : workers_) {
                    estimates[w.id()] = std::sqrt(fabric_->collect_reduction(w.id(), k));
                }
                time += 1.0 + static_cast<double>(round_delay);
            } else {
                for (auto& w : workers_) {
                    row.inner_iterations += w.solve_block();
                    const auto in = fabric_->halo_exchange_async(w.id(), k, w.outgoing());
                    w.absorb(in);
                    note_lags(w, in, result.max_applied_staleness);
                    w.merge();
                    const double r = w.local_relative_residual();
                    row.max_halo_staleness = std::max(row.max_halo_staleness, w.halo_staleness());
                    const auto est = fabric_->reduce_async(w.id(), k, r * r);
                    estimates[w.id()] = std::sqrt(est.estimate);
                }
                time += 1.0;
            }
            for (auto& w : workers_) {
                w.advance();
            }
            row.time = time;
            row.estimated_residual = *std::max_element(estimates.begin(), estimates.end());

            const std::size_t completed = k + 1;
            const bool sample = config_.true_residual_interval > 0 &&
                                completed % config_.true_residual_interval == 0;
            const bool check_true = config_.residual_check == ResidualCheck::true_global;
            std::optional<double> true_res;
            if (sample || check_true) {
                true_res = true_relative_residual(problem_, gather());
                if (sample) {
                    row.true_residual = true_res;
                }
            }
            result.trace.rows.push_back(row);

            TerminationAction action = TerminationAction::continue_iterating;
            if (check_true) {
                action = check_termination(*true_res, config_.tol, completed, config_.max_outer,
                                           CommMode::sync);
                if (action == TerminationAction::stop && *true_res < config_.tol) {
                    result.status = OuterStatus::converged;
                }
            } else {
                for (double e : estimates) {
                    const auto a = check_termination(e, config_.tol, completed,
                                                     config_.max_outer, config_.mode);
                    if (a == TerminationAction::confirm) {
                        action = a;
                    } else if (a == TerminationAction::stop) {
                        action = a;
                        break;
                    }
                }
                if (action == TerminationAction::confirm) {
                    ++result.confirm_rounds;
                    const double confirmed = confirm_replay(epoch++);
                    action = confirmed < config_.tol ? TerminationAction::stop
                                                     : TerminationAction::continue_iterating;
                    if (action == TerminationAction::stop) {
                        result.status = OuterStatus::converged;
                    }
                } else if (action == TerminationAction::stop && sync &&
                           row.estimated_residual < config_.tol) {
                    result.status = OuterStatus::converged;
                }
            }
            if (action == TerminationAction::stop) {
                result.outer_iterations = completed;
                return result;
            }
        }
    }

    struct WorkerLog {
        std::vector<TraceRow> rows;
        bool converged = false;
        std::size_t confirm_rounds = 0;
        std::size_t max_lag = 0;
        std::exception_ptr error;
    };

    void worker_loop(BlockWorker& w, WorkerLog& log,
                     std::chrono::steady_clock::time_point start)
    {
        const bool sync = config_.mode == CommMode::sync;
        std::size_t handled_epoch = 0;
        try {
            for (std::size_t k = 0;; ++k) {
                TraceRow row;
                row.outer_iteration = k + 1;
                row.inner_iterations = w.solve_block();
                double estimate = std::numeric_limits<double>::infinity();
                if (sync) {
                    w.absorb(fabric_->halo_exchange_sync(w.id(), w.outgoing()));
                    w.merge();
                    const double r = w.local_relative_residual();
                    estimate = std::sqrt(fabric_->reduce_sync(w.id(), k, r * r));
                } else {
                    if (fabric_->stop_requested()) {
                        break;
                    }
                    const auto in = fabric_->halo_exchange_async(w.id(), k, w.outgoing());
                    w.absorb(in);
                    for (std::size_t lag : w.applied_lags()) {
                        log.max_lag = std::max(log.max_lag, lag);
                    }
                    w.merge();
                    const double r = w.local_relative_residual();
                    row.max_halo_staleness = w.halo_staleness();
                    estimate = std::sqrt(fabric_->reduce_async(w.id(), k, r * r).estimate);
                }
                w.advance();
                row.time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                               .count();
                row.estimated_residual = estimate;
                log.rows.push_back(row);

                const auto action = check_termination(estimate, config_.tol, k + 1,
                                                      config_.max_outer, config_.mode);
                if (sync) {
                    if (action == TerminationAction::stop) {
                        log.converged = estimate < config_.tol;
                        break;
                    }
                    continue;
                }
                if (action == TerminationAction::stop) {
                    fabric_->request_stop();
                    break;
                }
                if (action == TerminationAction::confirm) {
                    fabric_->request_confirm(handled_epoch);
                }
                bool done = false;
                while (!done && handled_epoch < fabric_->confirm_epoch()) {
                    const std::size_t epoch = handled_epoch++;
                    ++log.confirm_rounds;
                    fabric_->post_sync(w.id(), Fabric::Tag::confirm, w.confirm_outgoing(epoch));
                    const auto in = fabric_->collect_sync(w.id(), Fabric::Tag::confirm, epoch);
                    const double r = w.confirm_residual(in);
                    const double confirmed = std::sqrt(fabric_->reduce_sync(w.id(), epoch, r * r));
                    if (confirmed < config_.tol) {
                        log.converged = true;
                        done = true;
                    }
                }
                if (done) {
                    break;
                }
            }
        } catch (const Interrupted&) {
            // another worker stopped the run
        } catch (...) {
            log.error = std::current_exception();
            fabric_->request_stop();
        }
        fabric_->mark_finished(w.id());
    }

    OuterResult run_threads()
    {
        std::vector<WorkerLog> logs(workers_.size());
        const auto start = std::chrono::steady_clock::now();
        {
            std::vector<std::jthread> threads;
            threads.reserve(workers_.size());
            for (std::size_t b = 0; b < workers_.size(); ++b) {
                threads.emplace_back([this, b, &logs, start] {
                    worker_loop(workers_[b], logs[b], start);
                });
            }
        }
        for (const auto& log : logs) {
            if (log.error) {
                std::rethrow_exception(log.error);
            }
        }
        OuterResult result;
        std::size_t longest = 0;
        bool converged = true;
        for (const auto& log : logs) {
            longest = std::max(longest, log.rows.size());
            converged = converged && log.converged;
            result.confirm_rounds = std::max(result.confirm_rounds, log.confirm_rounds);
            result.max_applied_staleness = std::max(result.max_applied_staleness, log.max_lag);
        }
        for (std::size_t k = 0; k < longest; ++k) {
            TraceRow row;
            row.outer_iteration = k + 1;
            row.estimated_residual = 0.0;
            for (const auto& log : logs) {
                if (k >= log.rows.size()) {
                    continue;
                }
                const auto& r = log.rows[k];
                row.time = std::max(row.time, r.time);
                row.estimated_residual = std::max(row.estimated_residual, r.estimated_residual);
                row.inner_iterations += r.inner_iterations;
                row.max_halo_staleness = std::max(row.max_halo_staleness, r.max_halo_staleness);
            }
            result.trace.rows.push_back(row);
        }
        result.outer_iterations = longest;
        result.status = converged ? OuterStatus::converged : OuterStatus::max_outer;
        return result;
    }

    const LinearProblem& problem_;
    const OuterConfig& config_;
    const LagObserver& observer_;
    BlockDecomposition decomp_;
    std::vector<BlockWorker> workers_;
    std::unique_ptr<Fabric> fabric_;
};

}  // namespace

OuterResult outer_solve(const LinearProblem& problem, const OuterConfig& config,
                        const LagObserver& observer)
{
    config.validate();
    Driver driver(problem, config, observer);
    return driver.run();
}

OuterResult outer_solve(const LinearProblem& problem, const OuterConfig& config)
{
    return outer_solve(problem, config, LagObserver{});
}

IterationOperator::IterationOperator(const LinearProblem& problem,
                                     const BlockDecomposition& decomp)
    : problem_(&problem), size_(problem.rhs.size())
{
    for (std::size_t b = 0; b < decomp.num_blocks(); ++b) {
        Part part;
        part.extended = decomp.block(b).extended;
        part.system = block_system(problem, decomp, b);
        if (part.extended.size() <= kLuBlockCap) {
            part.lu = std::make_shared<LuFactorization>(DenseMatrix::from_csr(part.system.a_ii));
        }
        parts_.push_back(std::move(part));
    }
    inverse_cover_.resize(size_);
    for (std::size_t p = 0; p < size_; ++p) {
        inverse_cover_[p] = decomp.weight(p);
    }
}

void IterationOperator::apply(std::span<const double> x, std::span<double> out,
                              bool with_rhs) const
{
    std::fill(out.begin(), out.end(), 0.0);
    for (const auto& part : parts_) {
        Vector rhs(part.extended.size(), 0.0);
        if (with_rhs) {
            for (std::size_t r = 0; r < rhs.size(); ++r) {
                rhs[r] = problem_->rhs[part.extended[r]];
            }
        }
        for (const auto& c : part.system.coupling) {
            rhs[c.local_row] -= c.coefficient * x[c.global_col];
        }
        Vector solved;
        if (part.lu) {
            solved = part.lu->solve(rhs);
        } else {
            // Large SPD blocks: tightly converged CG stands in for A_ii^{-1}.
            InnerSolverSpec spec{InnerKind::cg, 20 * rhs.size(), 1e-13, 1};
            Vector x0(rhs.size(), 0.0);
            solved = cg_solve(part.system.a_ii, rhs, x0, spec).x;
        }
        for (std::size_t r = 0; r < solved.size(); ++r) {
            const std::size_t g = part.extended[r];
            out[g] += inverse_cover_[g] * solved[r];
        }
    }
}

LinearMap IterationOperator::as_map() const
{
    return [this](std::span<const double> in, std::span<double> out) { apply(in, out); };
}

}  // namespace msplit
