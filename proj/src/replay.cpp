#include "spiral/replay.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace spiral::sim {

namespace {

bool is_hex64(const std::string& s) {
    if (s.size() != 64) return false;
    for (char c : s)
        if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
    return true;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace

ReplayResult replay_trace(const std::string& csv_text) {
    ReplayResult res;
    auto malformed = [&](size_t line_no, const std::string& why) {
        res.well_formed = false;
        res.ok = false;
        res.failures.push_back("line " + std::to_string(line_no) + ": " + why);
    };
    auto violation = [&](size_t line_no, const std::string& why) {
        res.ok = false;
        res.failures.push_back("line " + std::to_string(line_no) + ": " + why);
    };

    if (csv_text.empty() || csv_text.back() != '\n') {
        malformed(0, "truncated trace (missing trailing newline)");
        return res;
    }

    std::istringstream in(csv_text);
    std::string line;
    size_t line_no = 0;

    if (!std::getline(in, line) || line != "tick,shard,block_hash,old_status,new_status,witness_hash") {
        malformed(1, "bad or missing header row");
        return res;
    }
    line_no = 1;

    struct BlockState {
        uint64_t shard = 0;
        std::string status; // prepared | finalized | discarded
    };
    std::map<std::string, BlockState> blocks;
    uint64_t last_tick = 0;

    while (std::getline(in, line)) {
        ++line_no;
        auto fields = split_csv(line);
        if (fields.size() != 6) {
            malformed(line_no, "expected 6 fields, got " + std::to_string(fields.size()));
            return res;
        }
        uint64_t tick = 0, shard = 0;
        auto [p1, e1] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), tick);
        auto [p2, e2] = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), shard);
        if (e1 != std::errc{} || p1 != fields[0].data() + fields[0].size() ||
            e2 != std::errc{} || p2 != fields[1].data() + fields[1].size()) {
            malformed(line_no, "non-numeric tick or shard");
            return res;
        }
        const std::string& hash = fields[2];
        const std::string& old_status = fields[3];
        const std::string& new_status = fields[4];
        const std::string& witness = fields[5];
        if (!is_hex64(hash)) {
            malformed(line_no, "bad block hash");
            return res;
        }
        if (!witness.empty() && !is_hex64(witness)) {
            malformed(line_no, "bad witness hash");
            return res;
        }
        bool legal_status = (old_status == "none" || old_status == "prepared" ||
                             old_status == "finalized" || old_status == "discarded") &&
                            (new_status == "prepared" || new_status == "finalized" ||
                             new_status == "discarded");
        if (!legal_status) {
            malformed(line_no, "unknown status");
            return res;
        }

        if (tick < last_tick) violation(line_no, "tick went backwards");
        last_tick = std::max(last_tick, tick);

        auto it = blocks.find(hash);
        if (old_status == "none") {
            if (new_status != "prepared") {
                violation(line_no, "block must enter via preparation");
            } else if (it != blocks.end()) {
                violation(line_no, "block prepared twice");
            } else {
                blocks[hash] = BlockState{shard, "prepared"};
            }
            continue;
        }

        if (it == blocks.end()) {
            violation(line_no, "transition for a block never prepared");
            continue;
        }
        if (it->second.shard != shard) violation(line_no, "block changed shard");
        if (it->second.status != old_status) {
            if (it->second.status == "discarded" && new_status == "finalized")
                violation(line_no, "conflicting finalization: block was discarded");
            else if (it->second.status == "finalized" && new_status == "discarded")
                violation(line_no, "discard of a finalized block");
            else
                violation(line_no, "old status does not match recorded state");
            continue;
        }
        if (old_status != "prepared") {
            violation(line_no, "transition out of a terminal status");
            continue;
        }
        if (witness.empty()) violation(line_no, "terminal transition without witness");
        it->second.status = new_status;
    }
    return res;
}

ReplayResult replay_trace_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        ReplayResult res;
        res.well_formed = false;
        res.ok = false;
        res.failures.push_back("cannot open trace: " + path);
        return res;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return replay_trace(ss.str());
}

} // namespace spiral::sim
