#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "mf/classifiers.hpp"
#include "mf/dataset.hpp"

#include "json.hpp"

namespace mf {

struct BenchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BenchConfig {
    std::string images_path, labels_path, split_path;
    std::vector<ModelSpec> models;
    int repeats = 5;
    uint64_t master_seed = 1;
    uint32_t cap_train = 0, cap_test = 0;  // 0 = use the full split
    std::map<std::string, double> check_thresholds;  // keyed by model name
};

BenchConfig bench_config_from_json(const nlohmann::json& j);

struct BenchRow {
    ModelSpec spec;
    std::vector<double> accuracies;  // one per repeat
    double mean = 0.0;
    double stddev = 0.0;  // population std across repeats
};

struct BenchResult {
    std::vector<BenchRow> rows;
    size_t n_train = 0, n_test = 0;
};

// mean and population standard deviation
std::pair<double, double> mean_std(std::span<const double> xs);

// Stratified, seed-deterministic subset of `indices` with at most `cap`
// entries (per-class proportions preserved by largest remainder).
std::vector<uint32_t> cap_subset(std::span<const uint32_t> indices,
                                 std::span<const uint8_t> labels, uint32_t cap, uint64_t seed);

// For each repeat r: reshuffle the training order with mix_seed(master, r),
// fit, evaluate on the fixed test subset. Deterministic per master seed.
BenchResult run_benchmark(const BenchConfig& cfg, const LabeledDataset& data,
                          const SplitIndices& split, int jobs = 1);

nlohmann::ordered_json bench_result_to_json(const BenchResult& r, const BenchConfig& cfg);

// plain-text table mirroring the benchmark rows
std::string bench_result_table(const BenchResult& r);

// true when every thresholded row's mean accuracy reaches its threshold
bool bench_check(const BenchResult& r, const std::map<std::string, double>& thresholds,
                 std::string& report);

}  // namespace mf
