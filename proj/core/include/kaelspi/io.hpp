#pragma once

// CSV and JSON file formats: datasets, policy-iteration traces, results.

#include "kaelspi/envs.hpp"
#include "kaelspi/lstdq.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace kaelspi {

/// Shortest round-trip decimal form ("%.17g"-equivalent, locale independent).
std::string format_double(double v);

/// RFC-4180 writer: fields containing ',', '"' or newlines are quoted.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

    void row(const std::vector<std::string>& fields);
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::size_t width_;
};

/// Reads a CSV with a header row (no embedded newlines inside fields).
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, std::vector<std::string>* header);

/// Columns s0..s{d-1}, a, r, s0_next..., a_next, terminal; metadata goes to
/// `<path>.json` (env, seed, policy, episodes, max_steps, state_dim, rows).
void write_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

/// One row per iteration: iteration, weight_norm, weight_change,
/// action_change_rate, rank, degenerate, dictionary_size.
void write_trace(const PolicyIterTrace& trace, const std::filesystem::path& path);

/// One row per (iteration, state): iteration, state, action[, optimal].
void write_policy_trace(const PolicyIterTrace& trace, const std::vector<State>& states,
                        const TablePolicy* optimal, const std::filesystem::path& path);

}  // namespace kaelspi
