#include "spiral/seccalc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <stdexcept>

namespace spiral::seccalc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Cumulative log-factorial table. Built by summation in index order so the
// values are reproducible for a given libm, which keeps table goldens stable.
std::vector<double>& lfact_table(size_t need) {
    static std::vector<double> table{0.0, 0.0}; // 0!, 1!
    static std::mutex mu;
    if (table.size() <= need) {
        std::lock_guard<std::mutex> lock(mu);
        if (table.size() <= need) {
            std::vector<double> grown(table);
            grown.reserve(need + 1);
            double carry = 0.0; // Kahan compensation
            for (size_t n = grown.size(); n <= need; ++n) {
                double term = std::log(double(n)) - carry;
                double sum = grown.back() + term;
                carry = (sum - grown.back()) - term;
                grown.push_back(sum);
            }
            table.swap(grown);
        }
    }
    return table;
}

double lfact(int64_t n) {
    return lfact_table(size_t(n))[size_t(n)];
}

double logsumexp(const std::vector<double>& terms) {
    double m = kNegInf;
    for (double t : terms) m = std::max(m, t);
    if (m == kNegInf) return kNegInf;
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - m);
    return m + std::log(acc);
}

// Inner conditional tail: sum_{y=lo}^{S} Pr[Hyp(M, x, S) = y] in log space.
double log_conditional_tail(int64_t m, int64_t x, int64_t s, int64_t lo) {
    std::vector<double> terms;
    int64_t hi = std::min(x, s);
    for (int64_t y = std::max<int64_t>(lo, 0); y <= hi; ++y) {
        double t = log_hypergeom_pmf(m, x, s, y);
        if (t != kNegInf) terms.push_back(t);
    }
    return logsumexp(terms);
}

LogProb case1_with_shift(const SecurityParams& p, int lo_shift) {
    int64_t m = int64_t(p.group_nodes());
    int64_t malicious = int64_t(p.malicious_count());
    int64_t lo = m / 3 + lo_shift;
    std::vector<double> terms;
    for (int64_t x = std::max<int64_t>(lo, 0); x <= m; ++x) {
        double t = log_hypergeom_pmf(int64_t(p.network_size), malicious, m, x);
        if (t != kNegInf) terms.push_back(t);
    }
    return LogProb::from_log(logsumexp(terms));
}

// Shared shape of cases 2 and 3: the outer variable is the group-level count
// of the relevant node class, the inner one its per-shard count.
LogProb conditional_case_with_shift(const SecurityParams& p, int64_t class_count,
                                    int64_t inner_lo, int cond_hi_shift) {
    int64_t m = int64_t(p.group_nodes());
    int64_t s = int64_t(p.shard_size);
    int64_t x_hi = m / 3 - 1 + cond_hi_shift;
    std::vector<double> terms;
    for (int64_t x = 1; x <= x_hi; ++x) {
        double outer = log_hypergeom_pmf(int64_t(p.network_size), class_count, m, x);
        if (outer == kNegInf) continue;
        if (x < inner_lo) continue; // inner tail empty: y <= x < lo
        double inner = log_conditional_tail(m, x, s, inner_lo);
        if (inner == kNegInf) continue;
        terms.push_back(outer + inner);
    }
    double joint = logsumexp(terms);
    if (joint == kNegInf) return LogProb::zero();
    return LogProb::from_log(joint + std::log(double(p.group_size)));
}

FailureBreakdown combine(const SecurityParams& p, LogProb c1, LogProb c2, LogProb c3) {
    FailureBreakdown b;
    b.case1 = c1;
    b.case2 = c2;
    b.case3 = c3;
    b.per_group = (c1 + c2 + c3).capped();
    double group_count = double(p.network_size) / double(p.group_nodes());
    b.system = (LogProb::from_log(std::log(group_count)) * b.per_group).capped();
    return b;
}

std::vector<uint32_t> divisors_ascending(uint64_t n) {
    std::vector<uint32_t> out;
    for (uint64_t d = 1; d * d <= n; ++d) {
        if (n % d == 0) {
            out.push_back(uint32_t(d));
            if (d != n / d) out.push_back(uint32_t(n / d));
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

LogProb LogProb::zero() { return LogProb{kNegInf}; }
LogProb LogProb::one() { return LogProb{0.0}; }

LogProb LogProb::from_linear(double p) {
    if (p < 0.0) throw std::invalid_argument("probability < 0");
    return LogProb{p == 0.0 ? kNegInf : std::log(p)};
}

double LogProb::linear() const { return lg == kNegInf ? 0.0 : std::exp(lg); }
bool LogProb::is_zero() const { return lg == kNegInf; }

LogProb LogProb::operator+(LogProb o) const {
    if (lg == kNegInf) return o;
    if (o.lg == kNegInf) return *this;
    double m = std::max(lg, o.lg);
    return LogProb{m + std::log(std::exp(lg - m) + std::exp(o.lg - m))};
}

LogProb LogProb::operator*(LogProb o) const {
    if (lg == kNegInf || o.lg == kNegInf) return zero();
    return LogProb{lg + o.lg};
}

LogProb LogProb::capped() const { return LogProb{std::min(lg, 0.0)}; }

double SecurityParams::default_eps() { return std::ldexp(1.0, -17); }

uint64_t SecurityParams::malicious_count() const {
    return uint64_t(std::llround(f_total * double(network_size)));
}

uint64_t SecurityParams::byzantine_count() const {
    return uint64_t(std::llround(f_byzantine * double(network_size)));
}

void SecurityParams::validate() const {
    if (network_size == 0 || shard_size == 0 || group_size == 0)
        throw std::invalid_argument("N, S, G must be positive");
    if (group_nodes() > network_size)
        throw std::invalid_argument("S*G exceeds the network size");
    if (f_total < 0.0 || f_byzantine < 0.0 || f_byzantine > f_total || f_total >= 1.0)
        throw std::invalid_argument("need 0 <= F_B <= F < 1");
    if (eps <= 0.0 || eps > 1.0) throw std::invalid_argument("eps must be in (0, 1]");
}

double log_choose(int64_t n, int64_t k) {
    if (k < 0 || n < 0 || k > n) return kNegInf;
    return lfact(n) - lfact(k) - lfact(n - k);
}

double log_hypergeom_pmf(int64_t pop, int64_t succ, int64_t draws, int64_t k) {
    if (pop < 0 || succ < 0 || draws < 0)
        throw std::invalid_argument("hypergeometric arguments must be non-negative");
    if (succ > pop || draws > pop)
        throw std::invalid_argument("hypergeometric needs succ <= pop and draws <= pop");
    if (k < 0 || k > draws || k > succ || draws - k > pop - succ) return kNegInf;
    return log_choose(succ, k) + log_choose(pop - succ, draws - k) - log_choose(pop, draws);
}

double hypergeom_pmf(int64_t pop, int64_t succ, int64_t draws, int64_t k) {
    double lg = log_hypergeom_pmf(pop, succ, draws, k);
    return lg == kNegInf ? 0.0 : std::exp(lg);
}

LogProb group_failure_case1(const SecurityParams& p) {
    p.validate();
    return case1_with_shift(p, 0);
}

LogProb group_failure_case2(const SecurityParams& p) {
    p.validate();
    return conditional_case_with_shift(p, int64_t(p.malicious_count()),
                                       (2 * int64_t(p.shard_size)) / 3, 0);
}

LogProb group_failure_case3(const SecurityParams& p) {
    p.validate();
    return conditional_case_with_shift(p, int64_t(p.byzantine_count()),
                                       int64_t(p.shard_size) / 3, 0);
}

FailureBreakdown system_failure_bound(const SecurityParams& p) {
    p.validate();
    return combine(p, group_failure_case1(p), group_failure_case2(p), group_failure_case3(p));
}

namespace detail {

FailureBreakdown system_failure_bound_shifted(const SecurityParams& p, int case1_lo_shift,
                                              int cond_hi_shift) {
    p.validate();
    LogProb c1 = case1_with_shift(p, case1_lo_shift);
    LogProb c2 = conditional_case_with_shift(p, int64_t(p.malicious_count()),
                                             (2 * int64_t(p.shard_size)) / 3, cond_hi_shift);
    LogProb c3 = conditional_case_with_shift(p, int64_t(p.byzantine_count()),
                                             int64_t(p.shard_size) / 3, cond_hi_shift);
    return combine(p, c1, c2, c3);
}

} // namespace detail

TuneResult min_group_size_at(uint64_t network, uint32_t shard_size, double f, double fb,
                             double eps) {
    TuneResult r;
    for (uint32_t g = 1; uint64_t(shard_size) * g <= network; ++g) {
        SecurityParams p{network, shard_size, g, f, fb, eps};
        FailureBreakdown b = system_failure_bound(p);
        if (b.system.linear() <= eps) {
            r.feasible = true;
            r.value = g;
            r.breakdown = b;
            return r;
        }
    }
    return r;
}

TuneResult min_group_size(uint64_t network, uint32_t shard_size, double f, double fb, double eps) {
    if (shard_size == 0 || network % shard_size != 0)
        throw std::invalid_argument("shard size must divide the network size");
    return min_group_size_at(network, shard_size, f, fb, eps);
}

TuneResult min_shard_size_given_group(uint64_t network, uint32_t group_size, double f, double fb,
                                      double eps) {
    TuneResult r;
    if (group_size == 0) throw std::invalid_argument("group size must be >= 1");
    for (uint32_t s : divisors_ascending(network)) {
        if (uint64_t(s) * group_size > network) break;
        SecurityParams p{network, s, group_size, f, fb, eps};
        FailureBreakdown b = system_failure_bound(p);
        if (b.system.linear() <= eps) {
            r.feasible = true;
            r.value = s;
            r.breakdown = b;
            return r;
        }
    }
    return r;
}

BaselineResult baseline_shard_size(uint64_t network, double f, double eps) {
    int64_t malicious = int64_t(std::llround(f * double(network)));
    auto shard_tail = [&](uint32_t s) {
        int64_t threshold = (int64_t(s) + 2) / 3; // ceil(S/3)
        std::vector<double> terms;
        for (int64_t k = threshold; k <= int64_t(s); ++k) {
            double t = log_hypergeom_pmf(int64_t(network), malicious, int64_t(s), k);
            if (t != kNegInf) terms.push_back(t);
        }
        double tail = logsumexp(terms);
        if (tail == kNegInf) return LogProb::zero();
        return LogProb::from_log(tail + std::log(double(network) / double(s))).capped();
    };
    for (uint32_t s : divisors_ascending(network)) {
        if (s == network) break;
        LogProb sys = shard_tail(s);
        if (sys.linear() <= eps) return BaselineResult{s, sys, false};
    }
    return BaselineResult{uint32_t(network), shard_tail(uint32_t(network)), true};
}

std::vector<TableCell> emit_reference_table(const std::vector<NetworkRange>& ranges,
                                            const std::vector<uint32_t>& shard_sizes, double f,
                                            double fb, double eps) {
    std::vector<TableCell> cells;
    cells.reserve(ranges.size() * shard_sizes.size());
    for (const auto& range : ranges) {
        for (uint32_t s : shard_sizes) {
            TableCell cell;
            cell.network_size = range.lo;
            cell.shard_size = s;
            TuneResult r = min_group_size_at(range.lo, s, f, fb, eps);
            if (r.feasible) {
                cell.group_size = r.value;
                cell.failure_prob = r.breakdown.system.linear();
                // Probe the +-1 readings of the published summation limits.
                for (auto [c1, ch, what] :
                     {std::tuple{-1, 0, "case1-lower-1"}, std::tuple{0, 1, "cond-upper+1"}}) {
                    uint32_t g = 1;
                    for (; uint64_t(s) * g <= range.lo; ++g) {
                        SecurityParams p{range.lo, s, g, f, fb, eps};
                        if (detail::system_failure_bound_shifted(p, c1, ch).system.linear() <= eps)
                            break;
                    }
                    if (uint64_t(s) * g <= range.lo && g != r.value) {
                        if (!cell.sensitivity.empty()) cell.sensitivity += ";";
                        cell.sensitivity += std::string(what) + "->G=" + std::to_string(g);
                    }
                }
            }
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

const std::vector<NetworkRange>& reference_ranges() {
    static const std::vector<NetworkRange> ranges = {
        {500, 699},   {700, 899},   {900, 1499},  {1500, 2099}, {2100, 2299},
        {2300, 5299}, {5300, 5899}, {5900, 8299}, {8300, 10000}};
    return ranges;
}

const std::vector<uint32_t>& reference_shard_sizes() {
    static const std::vector<uint32_t> sizes = {100, 120, 150, 200, 300};
    return sizes;
}

} // namespace spiral::seccalc
