#pragma once

#include <optional>
#include <string>
#include <vector>

namespace psmt::cli {

// Entry point of the `psmt` tool. Returns the process exit code; failures
// print one machine-parsable line "psmt: error: <kind>: <message>".
int run(const std::vector<std::string>& args);

// --seed beats PSMT_SEED beats the config file.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::uint64_t config_seed);

}  // namespace psmt::cli
