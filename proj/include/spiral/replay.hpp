#pragma once

#include <string>
#include <vector>

namespace spiral::sim {

// Re-audit of a recorded trace without re-simulating. Works from the trace
// alone, so it checks the invariants expressible over status transitions:
// every block prepares exactly once before any terminal status, terminal
// states are final (a finalization of a discarded block is a conflicting
// finalization), finalization and discard rows carry a witness, ticks never
// go backwards, and a block belongs to one shard.
struct ReplayResult {
    bool well_formed = true; // parse-level health; false => exit 4
    bool ok = true;          // audit verdict;       false => exit 3
    std::vector<std::string> failures;
};

ReplayResult replay_trace(const std::string& csv_text);
ReplayResult replay_trace_file(const std::string& path);

} // namespace spiral::sim
