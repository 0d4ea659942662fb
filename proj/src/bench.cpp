#include "mf/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "mf/rng.hpp"

namespace mf {

BenchConfig bench_config_from_json(const nlohmann::json& j) {
    BenchConfig cfg;
    if (j.contains("data")) {
        const auto& d = j.at("data");
        cfg.images_path = d.value("images", std::string{});
        cfg.labels_path = d.value("labels", std::string{});
        cfg.split_path = d.value("split", std::string{});
    }
    cfg.repeats = j.value("repeats", 5);
    cfg.master_seed = j.value("master_seed", uint64_t{1});
    cfg.cap_train = j.value("cap_train", uint32_t{0});
    cfg.cap_test = j.value("cap_test", uint32_t{0});
    if (cfg.repeats < 1) throw BenchError("bench config: repeats must be >= 1");
    if (!j.contains("models") || j.at("models").empty())
        throw BenchError("bench config: no models listed");
    for (const auto& m : j.at("models")) cfg.models.push_back(model_spec_from_json(m));
    if (j.contains("check"))
        for (const auto& [name, thr] : j.at("check").items())
            cfg.check_thresholds[name] = thr.get<double>();
    return cfg;
}

std::pair<double, double> mean_std(std::span<const double> xs) {
    if (xs.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (const double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (const double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    return {mean, std::sqrt(var)};
}

std::vector<uint32_t> cap_subset(std::span<const uint32_t> indices,
                                 std::span<const uint8_t> labels, uint32_t cap, uint64_t seed) {
    if (cap == 0 || cap >= indices.size()) return {indices.begin(), indices.end()};

    std::map<int, std::vector<uint32_t>> by_class;
    for (const uint32_t i : indices) by_class[labels[i]].push_back(i);

    // per-class allotment by largest remainder on cap * class_share
    struct Share {
        int cls;
        uint64_t target_scaled;
    };
    std::vector<Share> shares;
    uint32_t assigned = 0;
    std::vector<std::pair<int, uint32_t>> counts;
    for (auto& [cls, members] : by_class) {
        const uint64_t target = static_cast<uint64_t>(cap) * members.size();
        counts.push_back({cls, static_cast<uint32_t>(target / indices.size())});
        shares.push_back({cls, target % indices.size()});
        assigned += counts.back().second;
    }
    std::sort(shares.begin(), shares.end(), [](const Share& a, const Share& b) {
        return a.target_scaled != b.target_scaled ? a.target_scaled > b.target_scaled
                                                  : a.cls < b.cls;
    });
    for (uint32_t left = cap - assigned, i = 0; i < left; ++i)
        for (auto& [cls, n] : counts)
            if (cls == shares[i].cls) ++n;

    std::vector<uint32_t> out;
    for (auto& [cls, n] : counts) {
        auto& members = by_class[cls];
        Rng rng(mix_seed(seed, static_cast<uint64_t>(cls)));
        rng.shuffle(members);
        for (uint32_t i = 0; i < n && i < members.size(); ++i) out.push_back(members[i]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

BenchResult run_benchmark(const BenchConfig& cfg, const LabeledDataset& data,
                          const SplitIndices& split, int jobs) {
    const auto train_idx = cap_subset(split.train, data.labels, cfg.cap_train,
                                      mix_seed(cfg.master_seed, 0xCA9));
    const auto test_idx = cap_subset(split.test, data.labels, cfg.cap_test,
                                     mix_seed(cfg.master_seed, 0xCA8));
    if (train_idx.empty() || test_idx.empty())
        throw BenchError("run_benchmark: empty train or test subset");

    const FeatureMatrix X_test = features_from_images(data.images, test_idx);
    const auto y_test = labels_subset(data.labels, test_idx);

    BenchResult result;
    result.n_train = train_idx.size();
    result.n_test = test_idx.size();

    for (const auto& spec : cfg.models) {
        BenchRow row;
        row.spec = spec;
        for (int r = 0; r < cfg.repeats; ++r) {
            std::vector<uint32_t> order = train_idx;
            Rng rng(mix_seed(cfg.master_seed, static_cast<uint64_t>(r)));
            rng.shuffle(order);
            const FeatureMatrix X_train = features_from_images(data.images, order);
            const auto y_train = labels_subset(data.labels, order);
            const TrainedModel model = TrainedModel::fit(spec, X_train, y_train);
            const auto pred = model.predict(X_test, jobs);
            size_t hits = 0;
            for (size_t i = 0; i < pred.size(); ++i) hits += pred[i] == y_test[i];
            row.accuracies.push_back(static_cast<double>(hits) /
                                     static_cast<double>(pred.size()));
        }
        std::tie(row.mean, row.stddev) = mean_std(row.accuracies);
        result.rows.push_back(std::move(row));
    }
    return result;
}

nlohmann::ordered_json bench_result_to_json(const BenchResult& r, const BenchConfig& cfg) {
    nlohmann::ordered_json j;
    auto rows = nlohmann::ordered_json::array();
    for (const auto& row : r.rows) {
        nlohmann::ordered_json rj;
        rj["name"] = row.spec.name;
        rj["spec"] = model_spec_to_json(row.spec);
        rj["accuracies"] = row.accuracies;
        rj["mean"] = row.mean;
        rj["std"] = row.stddev;
        rows.push_back(rj);
    }
    j["rows"] = rows;
    nlohmann::ordered_json fp;
    fp["master_seed"] = cfg.master_seed;
    fp["repeats"] = cfg.repeats;
    fp["cap_train"] = cfg.cap_train;
    fp["cap_test"] = cfg.cap_test;
    fp["n_train"] = r.n_train;
    fp["n_test"] = r.n_test;
    fp["images"] = cfg.images_path;
    fp["labels"] = cfg.labels_path;
    fp["split"] = cfg.split_path;
    fp["version"] = "mnist-fraction-1.0.0";
    j["fingerprint"] = fp;
    return j;
}

std::string bench_result_table(const BenchResult& r) {
    std::string out;
    char line[256];
    std::snprintf(line, sizeof(line), "%-52s %-14s %s\n", "Classifier / parameters",
                  "accuracy", "repeats");
    out += line;
    out += std::string(78, '-') + "\n";
    for (const auto& row : r.rows) {
        std::string reps;
        for (const double a : row.accuracies) {
            std::snprintf(line, sizeof(line), "%.3f ", a);
            reps += line;
        }
        std::snprintf(line, sizeof(line), "%-52s %.3f +-%.3f  %s\n", row.spec.name.c_str(),
                      row.mean, row.stddev, reps.c_str());
        out += line;
    }
    return out;
}

bool bench_check(const BenchResult& r, const std::map<std::string, double>& thresholds,
                 std::string& report) {
    bool ok = true;
    char line[256];
    for (const auto& [name, thr] : thresholds) {
        const BenchRow* row = nullptr;
        for (const auto& candidate : r.rows)
            if (candidate.spec.name == name) row = &candidate;
        if (!row) {
            ok = false;
            report += "MISSING  " + name + "\n";
            continue;
        }
        const bool pass = row->mean >= thr;
        ok = ok && pass;
        std::snprintf(line, sizeof(line), "%s  %-52s mean %.4f  threshold %.4f\n",
                      pass ? "PASS" : "FAIL", name.c_str(), row->mean, thr);
        report += line;
    }
    return ok;
}

}  // namespace mf
