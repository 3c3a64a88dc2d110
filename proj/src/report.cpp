#include "segsum/metrics.hpp"

#include <fmt/format.h>

namespace segsum {

std::string csv_header() { return "method,R1,R2,RL,RLSum,SBLEU,MET"; }

std::string csv_row(std::string_view method, const EvalScores& s) {
    return fmt::format("{},{:.2f},{:.2f},{:.2f},{:.2f},{:.2f},{:.2f}", method, 100.0 * s.r1.f1, 100.0 * s.r2.f1,
                       100.0 * s.rl.f1, 100.0 * s.rlsum.f1, s.sbleu, 100.0 * s.meteor);
}

std::string markdown_table(std::span<const std::pair<std::string, EvalScores>> rows) {
    std::string out = "| method | R1 | R2 | RL | RLSum | SBLEU | MET |\n";
    out += "|---|---:|---:|---:|---:|---:|---:|\n";
    for (const auto& [method, s] : rows) {
        out += fmt::format("| {} | {:.2f} | {:.2f} | {:.2f} | {:.2f} | {:.2f} | {:.2f} |\n", method, 100.0 * s.r1.f1,
                           100.0 * s.r2.f1, 100.0 * s.rl.f1, 100.0 * s.rlsum.f1, s.sbleu, 100.0 * s.meteor);
    }
    return out;
}

} // namespace segsum
