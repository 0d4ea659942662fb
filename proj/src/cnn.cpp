#include "mf/cnn.hpp"

#include <algorithm>
#include <cstring>
#include <thread>

#include "mf/parallel.hpp"

namespace mf {

nlohmann::ordered_json cnn_arch_to_json(const CnnArch& a) {
    nlohmann::ordered_json j;
    j["input"] = a.input;
    j["filters"] = a.filters;
    j["dense"] = a.dense;
    j["classes"] = a.classes;
    j["dropout"] = a.dropout;
    j["l2"] = a.l2;
    return j;
}

CnnArch cnn_arch_from_json(const nlohmann::json& j) {
    CnnArch a;
    if (j.contains("input")) a.input = j["input"].get<int>();
    if (j.contains("filters"))
        for (int s = 0; s < 3; ++s) a.filters[s] = j["filters"][s].get<int>();
    if (j.contains("dense"))
        for (int s = 0; s < 2; ++s) a.dense[s] = j["dense"][s].get<int>();
    if (j.contains("classes")) a.classes = j["classes"].get<int>();
    if (j.contains("dropout")) a.dropout = j["dropout"].get<double>();
    if (j.contains("l2")) a.l2 = j["l2"].get<double>();
    a.validate();
    return a;
}

nlohmann::ordered_json train_hyper_to_json(const TrainHyper& h) {
    nlohmann::ordered_json j;
    j["learning_rate"] = h.learning_rate;
    j["momentum"] = h.momentum;
    j["batch_size"] = h.batch_size;
    j["epochs"] = h.epochs;
    j["seed"] = h.seed;
    return j;
}

TrainHyper train_hyper_from_json(const nlohmann::json& j) {
    TrainHyper h;
    if (j.contains("learning_rate")) h.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("momentum")) h.momentum = j["momentum"].get<double>();
    if (j.contains("batch_size")) h.batch_size = j["batch_size"].get<int>();
    if (j.contains("epochs")) h.epochs = j["epochs"].get<int>();
    if (j.contains("seed")) h.seed = j["seed"].get<uint64_t>();
    if (h.learning_rate <= 0) throw CnnError("TrainHyper: learning_rate must be > 0");
    if (h.batch_size < 1) throw CnnError("TrainHyper: batch_size must be >= 1");
    return h;
}

namespace {

constexpr int kGradSlots = 8;  // fixed accumulation layout; independent of job count

}  // namespace

template <typename T>
T cnn_loss_and_grads(const CnnArch& arch, const CnnParams<T>& params, const CnnBatch<T>& batch,
                     CnnParams<T>& grads, int jobs, const uint64_t* dropout_base) {
    arch.validate();
    const size_t plane = static_cast<size_t>(arch.input) * arch.input;
    if (batch.x.size() != plane * batch.B || batch.labels.size() != static_cast<size_t>(batch.B))
        throw ShapeMismatch("cnn_loss_and_grads: bad batch shape");
    for (const int label : batch.labels)
        if (label < 0 || label >= arch.classes)
            throw ShapeMismatch("cnn_loss_and_grads: label outside 0..classes-1");

    const int slots = std::min(kGradSlots, batch.B);
    std::vector<CnnParams<T>> slot_grads(slots);
    std::vector<T> slot_loss(slots, T(0));
    for (auto& g : slot_grads) g = cnn_alloc<T>(arch);

    auto run_slot = [&](size_t s) {
        cnn_detail::Workspace<T> ws;
        ws.init(arch);
        std::vector<T> dlogits(arch.classes);
        const int begin = static_cast<int>(s) * batch.B / slots;
        const int end = static_cast<int>(s + 1) * batch.B / slots;
        for (int i = begin; i < end; ++i) {
            Rng drop(dropout_base ? mix_seed(*dropout_base, static_cast<uint64_t>(i)) : 0);
            cnn_detail::forward_sample(arch, params, batch.x.data() + plane * i,
                                       dropout_base ? &drop : nullptr, ws);
            const int label = batch.labels[i];
            slot_loss[s] -= std::log(std::max(ws.probs[label], static_cast<T>(1e-300)));
            for (int c = 0; c < arch.classes; ++c)
                dlogits[c] = (ws.probs[c] - (c == label ? T(1) : T(0))) / static_cast<T>(batch.B);
            cnn_detail::backward_sample(arch, params, ws, dlogits.data(), slot_grads[s], ws);
        }
    };
    parallel_for(static_cast<size_t>(slots), jobs, run_slot);

    // reduce in fixed slot order
    grads = cnn_alloc<T>(arch);
    T loss = T(0);
    for (int s = 0; s < slots; ++s) {
        loss += slot_loss[s];
        size_t ti = 0;
        std::vector<std::vector<T>*> dst, src;
        grads.for_each_tensor([&](std::vector<T>& t, bool) { dst.push_back(&t); });
        slot_grads[s].for_each_tensor([&](std::vector<T>& t, bool) { src.push_back(&t); });
        for (ti = 0; ti < dst.size(); ++ti)
            for (size_t i = 0; i < dst[ti]->size(); ++i) (*dst[ti])[i] += (*src[ti])[i];
    }
    loss /= static_cast<T>(batch.B);

    // L2 on weights only
    T l2_term = T(0);
    {
        std::vector<std::vector<T>*> gts;
        grads.for_each_tensor([&](std::vector<T>& t, bool) { gts.push_back(&t); });
        std::vector<const std::vector<T>*> pts;
        params.for_each_tensor([&](const std::vector<T>& t, bool) { pts.push_back(&t); });
        std::vector<bool> is_w;
        params.for_each_tensor([&](const std::vector<T>&, bool w) { is_w.push_back(w); });
        const T lam = static_cast<T>(arch.l2);
        for (size_t ti = 0; ti < gts.size(); ++ti) {
            if (!is_w[ti]) continue;
            const auto& w = *pts[ti];
            auto& g = *gts[ti];
            for (size_t i = 0; i < w.size(); ++i) {
                l2_term += w[i] * w[i];
                g[i] += 2 * lam * w[i];
            }
        }
        loss += lam * l2_term;
    }
    return loss;
}

template float cnn_loss_and_grads<float>(const CnnArch&, const CnnParams<float>&,
                                         const CnnBatch<float>&, CnnParams<float>&, int,
                                         const uint64_t*);
template double cnn_loss_and_grads<double>(const CnnArch&, const CnnParams<double>&,
                                           const CnnBatch<double>&, CnnParams<double>&, int,
                                           const uint64_t*);

CnnModel cnn_create(const CnnArch& arch, uint64_t seed) {
    return CnnModel{arch, cnn_init<float>(arch, seed)};
}

namespace {

// eval-mode labels for a set of dataset rows; one workspace per worker chunk
std::vector<int> predict_rows(const CnnArch& arch, const CnnParams<float>& params,
                              const LabeledDataset& data, std::span<const uint32_t> indices,
                              int jobs) {
    const size_t n = indices.size();
    std::vector<int> out(n, 0);
    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
    std::vector<std::thread> threads;
    auto run = [&](size_t begin, size_t end) {
        cnn_detail::Workspace<float> ws;
        ws.init(arch);
        const size_t plane = static_cast<size_t>(arch.input) * arch.input;
        std::vector<float> x(plane);
        for (size_t i = begin; i < end; ++i) {
            const GrayImage img = data.image(indices[i]);
            if (img.width != arch.input || img.height != arch.input)
                throw ShapeMismatch("cnn predict: image is not 56x56");
            for (size_t j = 0; j < plane; ++j) x[j] = img.pixels[j] * (1.0f / 255.0f);
            cnn_detail::forward_sample<float>(arch, params, x.data(), nullptr, ws);
            out[i] = static_cast<int>(std::max_element(ws.probs.begin(), ws.probs.end()) -
                                      ws.probs.begin());
        }
    };
    for (int t = 0; t < workers; ++t)
        threads.emplace_back(run, n * t / workers, n * (t + 1) / workers);
    for (auto& t : threads) t.join();
    return out;
}

}  // namespace

std::vector<int> cnn_predict(const CnnModel& model, const LabeledDataset& data,
                             std::span<const uint32_t> indices, int jobs) {
    return predict_rows(model.arch, model.params, data, indices, jobs);
}

double cnn_accuracy(const CnnModel& model, const LabeledDataset& data,
                    std::span<const uint32_t> indices, int jobs) {
    if (indices.empty()) return 0.0;
    const auto pred = predict_rows(model.arch, model.params, data, indices, jobs);
    size_t hits = 0;
    for (size_t i = 0; i < indices.size(); ++i)
        hits += pred[i] == static_cast<int>(data.labels[indices[i]]);
    return static_cast<double>(hits) / static_cast<double>(indices.size());
}

std::vector<double> cnn_probs_one(const CnnModel& model, const GrayImage& img) {
    const auto& arch = model.arch;
    if (img.width != arch.input || img.height != arch.input)
        throw ShapeMismatch("cnn_probs_one: image is not 56x56");
    cnn_detail::Workspace<float> ws;
    ws.init(arch);
    const size_t plane = static_cast<size_t>(arch.input) * arch.input;
    std::vector<float> x(plane);
    for (size_t j = 0; j < plane; ++j) x[j] = img.pixels[j] * (1.0f / 255.0f);
    cnn_detail::forward_sample<float>(arch, model.params, x.data(), nullptr, ws);
    return std::vector<double>(ws.probs.begin(), ws.probs.end());
}

std::vector<EpochStats> cnn_train(CnnModel& model, const LabeledDataset& data,
                                  const SplitIndices& split, const TrainHyper& hyper,
                                  const AugmentParams& aug, int jobs) {
    const auto& arch = model.arch;
    arch.validate();
    if (split.train.empty()) throw CnnError("cnn_train: empty training split");
    const size_t plane = static_cast<size_t>(arch.input) * arch.input;

    CnnParams<float> velocity = cnn_alloc<float>(arch);
    CnnParams<float> grads;
    std::vector<EpochStats> history;

    std::vector<uint32_t> order(split.train.begin(), split.train.end());
    CnnBatch<float> batch;

    for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
        const uint64_t epoch_seed = mix_seed(hyper.seed, static_cast<uint64_t>(epoch));
        Rng shuffle_rng(mix_seed(epoch_seed, 0));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        const size_t n_batches = (order.size() + hyper.batch_size - 1) / hyper.batch_size;
        for (size_t b = 0; b < n_batches; ++b) {
            const size_t begin = b * hyper.batch_size;
            const size_t end = std::min(order.size(), begin + hyper.batch_size);
            const uint64_t batch_seed = mix_seed(epoch_seed, 1 + b);

            batch.B = static_cast<int>(end - begin);
            batch.x.resize(plane * batch.B);
            batch.labels.resize(batch.B);
            for (size_t j = 0; j < end - begin; ++j) {
                const uint32_t gi = order[begin + j];
                Rng aug_rng(mix_seed(batch_seed, 2 * j + 2));
                const GrayImage img = augment(data.image(gi), aug, aug_rng);
                float* dst = batch.x.data() + plane * j;
                for (size_t px = 0; px < plane; ++px) dst[px] = img.pixels[px] * (1.0f / 255.0f);
                batch.labels[j] = data.labels[gi];
            }

            const uint64_t drop_base = mix_seed(batch_seed, 1);
            const float loss = cnn_loss_and_grads(arch, model.params, batch, grads, jobs,
                                                  arch.dropout > 0 ? &drop_base : nullptr);
            loss_sum += static_cast<double>(loss) * batch.B;

            // momentum update
            std::vector<std::vector<float>*> ws_, gs_, vs_;
            model.params.for_each_tensor([&](std::vector<float>& t, bool) { ws_.push_back(&t); });
            grads.for_each_tensor([&](std::vector<float>& t, bool) { gs_.push_back(&t); });
            velocity.for_each_tensor([&](std::vector<float>& t, bool) { vs_.push_back(&t); });
            const auto lr = static_cast<float>(hyper.learning_rate);
            const auto mu = static_cast<float>(hyper.momentum);
            for (size_t ti = 0; ti < ws_.size(); ++ti) {
                auto& w = *ws_[ti];
                auto& g = *gs_[ti];
                auto& v = *vs_[ti];
                for (size_t i = 0; i < w.size(); ++i) {
                    v[i] = mu * v[i] - lr * g[i];
                    w[i] += v[i];
                }
            }
        }

        EpochStats st;
        st.epoch = epoch;
        st.train_loss = loss_sum / static_cast<double>(order.size());
        st.val_accuracy = split.val.empty() ? 0.0 : cnn_accuracy(model, data, split.val, jobs);
        history.push_back(st);
    }
    return history;
}

double cnn_grad_check(const CnnArch& arch, double eps, uint64_t seed, int jobs,
                      size_t sample_params) {
    arch.validate();
    CnnParams<double> params = cnn_init<double>(arch, seed);

    CnnBatch<double> batch;
    batch.B = 2;
    const size_t plane = static_cast<size_t>(arch.input) * arch.input;
    batch.x.resize(plane * batch.B);
    Rng rng(mix_seed(seed, 101));
    for (auto& v : batch.x) v = rng.uniform_real();
    batch.labels.resize(batch.B);
    for (auto& l : batch.labels) l = static_cast<int>(rng.bounded(arch.classes));

    CnnParams<double> grads;
    cnn_loss_and_grads(arch, params, batch, grads, jobs, nullptr);

    // flatten parameter/gradient addresses in the canonical tensor order
    std::vector<std::pair<size_t, size_t>> slots;  // (tensor id, offset)
    std::vector<double> analytic;
    {
        std::vector<const std::vector<double>*> gts;
        grads.for_each_tensor([&](const std::vector<double>& t, bool) { gts.push_back(&t); });
        for (size_t ti = 0; ti < gts.size(); ++ti)
            for (size_t i = 0; i < gts[ti]->size(); ++i) {
                slots.emplace_back(ti, i);
                analytic.push_back((*gts[ti])[i]);
            }
    }

    std::vector<size_t> chosen(slots.size());
    for (size_t i = 0; i < chosen.size(); ++i) chosen[i] = i;
    if (sample_params > 0 && sample_params < chosen.size()) {
        Rng pick(mix_seed(seed, 202));
        for (size_t i = 0; i < sample_params; ++i) {
            const size_t j = i + pick.bounded(chosen.size() - i);
            std::swap(chosen[i], chosen[j]);
        }
        chosen.resize(sample_params);
    }

    std::vector<double> rel(chosen.size(), 0.0);
    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(chosen.size())));
    std::vector<std::thread> threads;
    auto run = [&](size_t begin, size_t end) {
        CnnParams<double> local = params;
        std::vector<std::vector<double>*> tensors;
        local.for_each_tensor([&](std::vector<double>& t, bool) { tensors.push_back(&t); });
        for (size_t ci = begin; ci < end; ++ci) {
            const auto [ti, off] = slots[chosen[ci]];
            double& theta = (*tensors[ti])[off];
            const double orig = theta;
            theta = orig + eps;
            const double lp = cnn_loss(arch, local, batch);
            theta = orig - eps;
            const double lm = cnn_loss(arch, local, batch);
            theta = orig;
            const double numeric = (lp - lm) / (2 * eps);
            const double a = analytic[chosen[ci]];
            rel[ci] = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-12});
        }
    };
    for (int t = 0; t < workers; ++t)
        threads.emplace_back(run, chosen.size() * t / workers, chosen.size() * (t + 1) / workers);
    for (auto& t : threads) t.join();

    double max_rel = 0.0;
    for (const double r : rel) max_rel = std::max(max_rel, r);
    return max_rel;
}

namespace {

nlohmann::json::binary_t float_bin(const std::vector<float>& v) {
    nlohmann::json::binary_t b(v.size() * sizeof(float));
    std::memcpy(b.data(), v.data(), b.size());
    return b;
}

std::vector<float> float_unbin(const nlohmann::json& j, size_t expect) {
    const auto& b = j.get_binary();
    if (b.size() != expect * sizeof(float)) throw CnnError("checkpoint: tensor size mismatch");
    std::vector<float> v(expect);
    std::memcpy(v.data(), b.data(), b.size());
    return v;
}

}  // namespace

void save_cnn(const std::string& path, const CnnModel& model) {
    nlohmann::json j;
    j["format"] = "mf-cnn-v1";
    j["arch"] = cnn_arch_to_json(model.arch);
    nlohmann::json tensors;
    for (int s = 0; s < 3; ++s) {
        tensors["conv" + std::to_string(s) + ".w"] = float_bin(model.params.conv[s].w);
        tensors["conv" + std::to_string(s) + ".b"] = float_bin(model.params.conv[s].b);
        tensors["fc" + std::to_string(s) + ".w"] = float_bin(model.params.fc[s].w);
        tensors["fc" + std::to_string(s) + ".b"] = float_bin(model.params.fc[s].b);
    }
    j["tensors"] = tensors;
    const auto cbor = nlohmann::json::to_cbor(j);
    write_file_bytes(path, cbor);
}

CnnModel load_cnn(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    const auto j = nlohmann::json::from_cbor(bytes);
    if (j.value("format", std::string{}) != "mf-cnn-v1")
        throw CnnError("checkpoint: unknown format");
    CnnModel model;
    model.arch = cnn_arch_from_json(j.at("arch"));
    model.params = cnn_alloc<float>(model.arch);
    const auto& tensors = j.at("tensors");
    for (int s = 0; s < 3; ++s) {
        auto& c = model.params.conv[s];
        c.w = float_unbin(tensors.at("conv" + std::to_string(s) + ".w"), c.w.size());
        c.b = float_unbin(tensors.at("conv" + std::to_string(s) + ".b"), c.b.size());
        auto& f = model.params.fc[s];
        f.w = float_unbin(tensors.at("fc" + std::to_string(s) + ".w"), f.w.size());
        f.b = float_unbin(tensors.at("fc" + std::to_string(s) + ".b"), f.b.size());
    }
    return model;
}

}  // namespace mf
