// mnistfrac — synthesize the MNIST-Fraction dataset, benchmark classifiers,
// train the CNN, and decode fraction images back into exact values.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "mf/bench.hpp"
#include "mf/classifiers.hpp"
#include "mf/cnn.hpp"
#include "mf/dataset.hpp"
#include "mf/fraction_gen.hpp"
#include "mf/idx.hpp"
#include "mf/metrics.hpp"
#include "mf/parser.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitCheckFailed = 4;

struct ConfigFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

nlohmann::json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw mf::IdxError("cannot open " + path);
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigFailure(path + ": " + e.what());
    }
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw mf::IdxError("cannot open " + path + " for writing");
    f << text;
}

std::string mnist_dir_or_env(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("MNIST_FRACTION_DATA")) return env;
    throw ConfigFailure("no MNIST source: pass --mnist-dir or set MNIST_FRACTION_DATA");
}

struct MnistSource {
    mf::IdxTensor images;
    std::vector<uint8_t> labels;
};

MnistSource load_mnist_train(const std::string& dir) {
    MnistSource src;
    src.images = mf::read_idx_file((fs::path(dir) / "train-images-idx3-ubyte").string());
    mf::IdxTensor labels =
        mf::read_idx_file((fs::path(dir) / "train-labels-idx1-ubyte").string());
    if (labels.dims.size() != 1 || src.images.dims.size() != 3 ||
        labels.dims[0] != src.images.dims[0])
        throw mf::IdxError("MNIST source: image/label tensors do not line up");
    src.labels = std::move(labels.data);
    return src;
}

mf::LabeledDataset load_data_dir(const std::string& dir) {
    return mf::load_dataset((fs::path(dir) / "images.idx").string(),
                            (fs::path(dir) / "labels.idx").string());
}

// ----------------------------------------------------------------- generate

int cmd_generate(const std::string& mnist_dir, const std::string& config_path,
                 const std::string& preset, std::optional<uint64_t> seed,
                 const std::string& out_dir, int jobs) {
    mf::GenerationConfig cfg;
    if (!config_path.empty())
        cfg = mf::generation_config_from_json(load_json_file(config_path));
    else if (preset == "desk")
        cfg = mf::GenerationConfig::desk_preset();
    else if (preset == "paper")
        cfg = mf::GenerationConfig::paper_preset();
    else if (!preset.empty())
        throw ConfigFailure("unknown preset: " + preset);
    if (seed) cfg.master_seed = *seed;

    const MnistSource src = load_mnist_train(mnist_dir_or_env(mnist_dir));
    const auto ds = mf::generate_dataset(cfg, src.images, src.labels, cfg.master_seed, jobs);

    fs::create_directories(out_dir);
    mf::write_idx_file((fs::path(out_dir) / "images.idx").string(), ds.images);
    mf::write_idx_file((fs::path(out_dir) / "labels.idx").string(), ds.labels);
    mf::write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), ds.manifest);
    write_text_file((fs::path(out_dir) / "gen_config.json").string(),
                    mf::generation_config_to_json(cfg).dump(2) + "\n");
    std::printf("generated %zu samples into %s\n", ds.manifest.size(), out_dir.c_str());
    return kExitOk;
}

// -------------------------------------------------------------------- split

int cmd_split(const std::string& data_dir, uint64_t seed, const std::string& out_path) {
    const auto labels = mf::read_idx_file((fs::path(data_dir) / "labels.idx").string());
    const auto split = mf::stratified_split(labels.data, mf::SplitRatios{}, seed);
    write_text_file(out_path, mf::split_to_json(split).dump() + "\n");
    std::printf("split %zu/%zu/%zu written to %s\n", split.train.size(), split.val.size(),
                split.test.size(), out_path.c_str());
    return kExitOk;
}

// ---------------------------------------------------------------- train-cnn

int cmd_train_cnn(const std::string& data_dir, const std::string& split_path,
                  const std::string& config_path, std::optional<uint64_t> seed,
                  const std::string& out_path, const std::string& history_path, int jobs) {
    mf::CnnArch arch;
    mf::TrainHyper hyper;
    mf::AugmentParams aug;
    if (!config_path.empty()) {
        const auto j = load_json_file(config_path);
        if (j.contains("arch")) arch = mf::cnn_arch_from_json(j["arch"]);
        if (j.contains("hyper")) hyper = mf::train_hyper_from_json(j["hyper"]);
        if (j.contains("augment")) {
            const auto& a = j["augment"];
            aug.zoom_range = a.value("zoom", aug.zoom_range);
            aug.h_shift_max = a.value("h_shift", aug.h_shift_max);
            aug.v_shift_max = a.value("v_shift", aug.v_shift_max);
        }
    }
    if (seed) hyper.seed = *seed;

    const auto data = load_data_dir(data_dir);
    const auto split = mf::split_from_json(load_json_file(split_path));

    mf::CnnModel model = mf::cnn_create(arch, hyper.seed);
    const auto history = mf::cnn_train(model, data, split, hyper, aug, jobs);

    mf::save_cnn(out_path, model);
    if (!history_path.empty()) {
        std::string lines;
        for (const auto& h : history) {
            nlohmann::ordered_json j;
            j["epoch"] = h.epoch;
            j["loss"] = h.train_loss;
            j["val_accuracy"] = h.val_accuracy;
            lines += j.dump() + "\n";
        }
        write_text_file(history_path, lines);
    }
    for (const auto& h : history)
        std::printf("epoch %2d  loss %.4f  val_acc %.4f\n", h.epoch, h.train_loss,
                    h.val_accuracy);
    std::printf("checkpoint written to %s\n", out_path.c_str());
    return kExitOk;
}

// --------------------------------------------------------------------- eval

bool is_cnn_checkpoint(const std::string& path) {
    const auto bytes = mf::read_file_bytes(path);
    try {
        const auto j = nlohmann::json::from_cbor(bytes);
        return j.value("format", std::string{}) == "mf-cnn-v1";
    } catch (...) {
        return false;
    }
}

int cmd_eval(const std::string& model_path, const std::string& data_dir,
             const std::string& split_path, const std::string& subset,
             const std::string& report_path, const std::string& heatmap_path, int jobs) {
    const auto data = load_data_dir(data_dir);
    const auto split = mf::split_from_json(load_json_file(split_path));
    const auto& indices = subset == "train" ? split.train : (subset == "val" ? split.val
                                                                             : split.test);

    std::vector<int> pred;
    if (is_cnn_checkpoint(model_path)) {
        const auto model = mf::load_cnn(model_path);
        pred = mf::cnn_predict(model, data, indices, jobs);
    } else {
        const auto model = mf::load_model(model_path);
        const auto X = mf::features_from_images(data.images, indices);
        pred = model.predict(X, jobs);
    }

    std::vector<int> truth;
    truth.reserve(indices.size());
    for (const auto i : indices) truth.push_back(data.labels[i]);

    const auto cm = mf::confusion(truth, pred, 11);
    const auto report = mf::summarize(cm);
    const auto j = mf::report_to_json(report, cm);
    if (!report_path.empty()) write_text_file(report_path, j.dump(2) + "\n");
    if (!heatmap_path.empty()) mf::write_pgm_file(heatmap_path, mf::confusion_heatmap(cm));
    std::printf("%s accuracy %.4f  macroF1 %.4f  weightedF1 %.4f  (n=%zu)\n", subset.c_str(),
                report.accuracy, report.macro_f1, report.weighted_f1, indices.size());
    return kExitOk;
}

// -------------------------------------------------------------------- bench

int cmd_bench(const std::string& config_path, const std::string& out_path, bool check,
              int jobs) {
    auto jcfg = load_json_file(config_path);
    mf::BenchConfig cfg;
    try {
        cfg = mf::bench_config_from_json(jcfg);
    } catch (const mf::BenchError& e) {
        throw ConfigFailure(e.what());
    } catch (const mf::ModelError& e) {
        throw ConfigFailure(e.what());
    }
    const auto data = mf::load_dataset(cfg.images_path, cfg.labels_path);
    const auto split = mf::split_from_json(load_json_file(cfg.split_path));

    const auto result = mf::run_benchmark(cfg, data, split, jobs);
    std::fputs(mf::bench_result_table(result).c_str(), stdout);
    if (!out_path.empty())
        write_text_file(out_path, mf::bench_result_to_json(result, cfg).dump(2) + "\n");

    if (check) {
        std::string report;
        const bool ok = mf::bench_check(result, cfg.check_thresholds, report);
        std::fputs(report.c_str(), stdout);
        if (!ok) return kExitCheckFailed;
    }
    return kExitOk;
}

// -------------------------------------------------------------------- parse

int cmd_parse(const std::string& model_path, const std::string& images_path,
              const std::string& out_path, int limit) {
    const auto model = mf::load_cnn(model_path);
    const mf::CnnDigitClassifier classifier(model);
    const auto images = mf::read_idx_file(images_path);
    if (images.dims.size() != 3) throw mf::IdxError("parse: images must be [N,H,W]");

    const size_t n = limit > 0 ? std::min<size_t>(limit, images.dims[0]) : images.dims[0];
    std::string lines;
    for (size_t i = 0; i < n; ++i) {
        const auto img = mf::idx_slice_image(images, i);
        nlohmann::ordered_json j;
        try {
            const auto res = mf::decode_fraction(img, classifier);
            j = mf::parse_result_to_json(res);
        } catch (const mf::ParserError& e) {
            j["kind"] = "error";
            j["error"] = e.what();
        }
        j["index"] = i;
        lines += j.dump() + "\n";
    }
    if (out_path.empty())
        std::fputs(lines.c_str(), stdout);
    else
        write_text_file(out_path, lines);
    return kExitOk;
}

// --------------------------------------------------------------- export-pgm

int cmd_export_pgm(const std::string& images_path, int index, const std::string& out_path) {
    const auto images = mf::read_idx_file(images_path);
    if (images.dims.size() != 3) throw mf::IdxError("export-pgm: images must be [N,H,W]");
    mf::write_pgm_file(out_path, mf::idx_slice_image(images, static_cast<size_t>(index)));
    std::printf("wrote %s\n", out_path.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MNIST-Fraction dataset toolkit"};
    app.require_subcommand(1);
    int jobs = 2;
    app.add_option("--jobs", jobs, "worker threads")->capture_default_str();

    // generate
    auto* gen = app.add_subcommand("generate", "synthesize a fraction dataset from MNIST digits");
    std::string gen_mnist, gen_config, gen_preset = "desk", gen_out;
    std::optional<uint64_t> gen_seed;
    gen->add_option("--mnist-dir", gen_mnist, "directory with the four MNIST IDX files");
    gen->add_option("--config", gen_config, "generation config JSON");
    gen->add_option("--preset", gen_preset, "desk | paper")->capture_default_str();
    gen->add_option("--seed", gen_seed, "master seed override");
    gen->add_option("--out", gen_out, "output directory")->required();

    // split
    auto* spl = app.add_subcommand("split", "stratified 70/15/15 split of a dataset");
    std::string spl_data, spl_out;
    uint64_t spl_seed = 1;
    spl->add_option("--data", spl_data, "dataset directory (labels.idx)")->required();
    spl->add_option("--seed", spl_seed, "split seed")->capture_default_str();
    spl->add_option("--out", spl_out, "split JSON path")->required();

    // train-cnn
    auto* tr = app.add_subcommand("train-cnn", "train the 56x56 CNN");
    std::string tr_data, tr_split, tr_config, tr_out, tr_history;
    std::optional<uint64_t> tr_seed;
    tr->add_option("--data", tr_data, "dataset directory")->required();
    tr->add_option("--split", tr_split, "split JSON")->required();
    tr->add_option("--config", tr_config, "arch/hyper/augment config JSON");
    tr->add_option("--seed", tr_seed, "training seed override");
    tr->add_option("--out", tr_out, "checkpoint path")->required();
    tr->add_option("--history", tr_history, "training history JSONL path");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a model; metrics report + confusion matrix");
    std::string ev_model, ev_data, ev_split, ev_subset = "test", ev_report, ev_heatmap;
    ev->add_option("--model", ev_model, "model file (CNN checkpoint or classical container)")
        ->required();
    ev->add_option("--data", ev_data, "dataset directory")->required();
    ev->add_option("--split", ev_split, "split JSON")->required();
    ev->add_option("--subset", ev_subset, "train | val | test")->capture_default_str();
    ev->add_option("--report", ev_report, "metrics report JSON path");
    ev->add_option("--heatmap", ev_heatmap, "confusion heatmap PGM path");

    // bench
    auto* be = app.add_subcommand("bench", "classifier benchmark (5-repeat protocol)");
    std::string be_config, be_out;
    bool be_check = false;
    be->add_option("--config", be_config, "bench config JSON")->required();
    be->add_option("--out", be_out, "result JSON path");
    be->add_flag("--check", be_check, "verify thresholds; exit 4 on failure");

    // parse
    auto* pa = app.add_subcommand("parse", "decode fraction images to exact rational values");
    std::string pa_model, pa_images, pa_out;
    int pa_limit = 0;
    pa->add_option("--model", pa_model, "CNN checkpoint")->required();
    pa->add_option("--images", pa_images, "IDX image file")->required();
    pa->add_option("--out", pa_out, "output JSONL (default stdout)");
    pa->add_option("--limit", pa_limit, "parse only the first N images");

    // export-pgm
    auto* ex = app.add_subcommand("export-pgm", "export one image as binary PGM");
    std::string ex_images, ex_out;
    int ex_index = 0;
    ex->add_option("--images", ex_images, "IDX image file")->required();
    ex->add_option("--index", ex_index, "image index")->capture_default_str();
    ex->add_option("--out", ex_out, "PGM path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (gen->parsed())
            return cmd_generate(gen_mnist, gen_config, gen_preset, gen_seed, gen_out, jobs);
        if (spl->parsed()) return cmd_split(spl_data, spl_seed, spl_out);
        if (tr->parsed())
            return cmd_train_cnn(tr_data, tr_split, tr_config, tr_seed, tr_out, tr_history, jobs);
        if (ev->parsed())
            return cmd_eval(ev_model, ev_data, ev_split, ev_subset, ev_report, ev_heatmap, jobs);
        if (be->parsed()) return cmd_bench(be_config, be_out, be_check, jobs);
        if (pa->parsed()) return cmd_parse(pa_model, pa_images, pa_out, pa_limit);
        if (ex->parsed()) return cmd_export_pgm(ex_images, ex_index, ex_out);
    } catch (const ConfigFailure& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const mf::GenError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    }
    return kExitOk;
}
