// Development utility: writes a procedurally drawn digit corpus in the MNIST
// IDX layout, for running the pipeline when the real MNIST files are absent.

#include <cstdio>
#include <filesystem>

#include "CLI11.hpp"

#include "mf/idx.hpp"
#include "mf/stub_digits.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
    CLI::App app{"synthetic digit corpus in MNIST IDX layout"};
    std::string out;
    int per_class = 800;
    uint64_t seed = 7;
    app.add_option("--out", out, "output directory")->required();
    app.add_option("--per-class", per_class, "exemplars per digit class")->capture_default_str();
    app.add_option("--seed", seed, "corpus seed")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    const auto corpus = mf::make_stub_corpus(per_class, seed);
    fs::create_directories(out);
    mf::write_idx_file((fs::path(out) / "train-images-idx3-ubyte").string(), corpus.images);
    mf::write_idx_file((fs::path(out) / "train-labels-idx1-ubyte").string(), corpus.labels);
    // small held-out files so the directory mirrors a full MNIST layout
    const auto held = mf::make_stub_corpus(std::max(1, per_class / 6), seed ^ 0x9e3779b9ULL);
    mf::write_idx_file((fs::path(out) / "t10k-images-idx3-ubyte").string(), held.images);
    mf::write_idx_file((fs::path(out) / "t10k-labels-idx1-ubyte").string(), held.labels);
    std::printf("wrote %u train / %u held-out digits to %s\n", corpus.labels.dims[0],
                held.labels.dims[0], out.c_str());
    return 0;
}
