#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace spiral::seccalc {

// Probability kept in natural-log domain; the sampling tails here underflow
// doubles long before they reach the 2^-17 budget.
struct LogProb {
    double lg; // log(p); -inf encodes exactly zero

    static LogProb zero();
    static LogProb one();
    static LogProb from_linear(double p);
    static LogProb from_log(double lg_) { return LogProb{lg_}; }

    double linear() const;
    bool is_zero() const;

    LogProb operator+(LogProb o) const; // probability addition (log-sum-exp)
    LogProb operator*(LogProb o) const;
    LogProb& operator+=(LogProb o) { return *this = *this + o; }

    LogProb capped() const; // min(p, 1)
    bool operator<=(LogProb o) const { return lg <= o.lg; }
    bool operator<(LogProb o) const { return lg < o.lg; }
};

// The (N, S, G, F, F_B, eps) tuple the epoch-failure bounds are evaluated at.
// F_A is implied by F - F_B. Malicious head-counts are the fractions rounded
// to the nearest integer.
struct SecurityParams {
    uint64_t network_size = 0; // N
    uint32_t shard_size = 0;   // S
    uint32_t group_size = 0;   // G
    double f_total = 0.0;      // F = F_A + F_B
    double f_byzantine = 0.0;  // F_B
    double eps = default_eps();

    static double default_eps(); // 2^-17

    uint64_t group_nodes() const { return uint64_t(shard_size) * group_size; } // M
    uint64_t malicious_count() const;                                          // round(F * N)
    uint64_t byzantine_count() const;                                          // round(F_B * N)

    // Throws std::invalid_argument on out-of-range fractions or S*G > N.
    void validate() const;
};

struct FailureBreakdown {
    LogProb case1;     // no honest shard in the group
    LogProb case2;     // some shard at >= 2/3 malicious
    LogProb case3;     // some shard at >= 1/3 Byzantine
    LogProb per_group; // union bound over the three cases, capped at 1
    LogProb system;    // union bound over N/M groups, capped at 1
};

// C(succ,k) * C(pop-succ,draws-k) / C(pop,draws); 0 outside the feasible
// range. Negative arguments are an error.
double hypergeom_pmf(int64_t pop, int64_t succ, int64_t draws, int64_t k);
double log_hypergeom_pmf(int64_t pop, int64_t succ, int64_t draws, int64_t k);

// log of C(n, k); -inf when k is out of range.
double log_choose(int64_t n, int64_t k);

LogProb group_failure_case1(const SecurityParams& p);
LogProb group_failure_case2(const SecurityParams& p);
LogProb group_failure_case3(const SecurityParams& p);
FailureBreakdown system_failure_bound(const SecurityParams& p);

namespace detail {
// Same bound with the summation limits shifted, used to probe how sensitive a
// table cell is to the +-1 ambiguity in the published limits. case1_lo_shift
// moves the case-1 lower limit; cond_hi_shift moves the conditional sums'
// upper limit.
FailureBreakdown system_failure_bound_shifted(const SecurityParams& p, int case1_lo_shift,
                                              int cond_hi_shift);
} // namespace detail

struct TuneResult {
    bool feasible = false;
    uint32_t value = 0; // the G (or S) found
    FailureBreakdown breakdown{};
};

// Smallest G >= 1 with S*G <= N whose system bound is within eps.
// Requires S | N; min_group_size_at drops that requirement (table emission
// evaluates at network sizes that are not multiples of the shard size).
TuneResult min_group_size(uint64_t network, uint32_t shard_size, double f, double fb, double eps);
TuneResult min_group_size_at(uint64_t network, uint32_t shard_size, double f, double fb,
                             double eps);

// Smallest divisor S of N (ascending, with S*G <= N) within eps.
TuneResult min_shard_size_given_group(uint64_t network, uint32_t group_size, double f, double fb,
                                      double eps);

struct BaselineResult {
    uint32_t shard_size = 0;
    LogProb system{};
    bool single_shard_fallback = false; // no divisor below N met eps
};

// Classical committee-sampling rule with no cross-shard endorsement: smallest
// divisor S of N with (N/S) * Pr[Hyp(N, F*N, S) >= ceil(S/3)] <= eps. Falls
// back to one shard of size N when nothing smaller qualifies.
BaselineResult baseline_shard_size(uint64_t network, double f, double eps);

struct TableCell {
    uint64_t network_size = 0; // evaluation point (range lower edge)
    uint32_t shard_size = 0;
    std::optional<uint32_t> group_size; // nullopt: infeasible
    double failure_prob = 0.0;
    std::string sensitivity; // nonempty when a +-1 limit shift changes the cell
};

struct NetworkRange {
    uint64_t lo = 0;
    uint64_t hi = 0;
};

// One cell per (range, shard size), evaluated at the range's lower edge.
std::vector<TableCell> emit_reference_table(const std::vector<NetworkRange>& ranges,
                                            const std::vector<uint32_t>& shard_sizes, double f,
                                            double fb, double eps);

// The published grid: nine network ranges by five shard sizes at F=1/4,
// F_B=1/8.
const std::vector<NetworkRange>& reference_ranges();
const std::vector<uint32_t>& reference_shard_sizes();

} // namespace spiral::seccalc
