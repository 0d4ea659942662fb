#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mf/dataset.hpp"
#include "mf/image.hpp"
#include "mf/rng.hpp"

#include "json.hpp"

namespace mf {

struct CnnError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeMismatch : CnnError {
    using CnnError::CnnError;
};

// 56x56x1 input, three (3x3 same conv + ReLU + 2x2 maxpool) stages, flatten,
// dropout, three dense layers, softmax over 11 classes.
struct CnnArch {
    int input = 56;  // spatial flow is fixed: 56 -> 28 -> 14 -> 7
    std::array<int, 3> filters{16, 32, 64};
    std::array<int, 2> dense{128, 64};
    int classes = 11;
    double dropout = 0.5;
    double l2 = 1e-4;

    int flatten_size() const { return 7 * 7 * filters[2]; }
    void validate() const {
        if (input != 56) throw CnnError("CnnArch: input must be 56");
        for (int f : filters)
            if (f < 1) throw CnnError("CnnArch: filters must be >= 1");
        for (int d : dense)
            if (d < 1) throw CnnError("CnnArch: dense widths must be >= 1");
        if (classes < 2) throw CnnError("CnnArch: classes must be >= 2");
        if (dropout < 0 || dropout >= 1) throw CnnError("CnnArch: dropout must be in [0,1)");
        if (l2 < 0) throw CnnError("CnnArch: l2 must be >= 0");
    }

    // gradient-check configuration: small filter/dense widths, no dropout
    static CnnArch reduced() {
        CnnArch a;
        a.filters = {8, 8, 8};
        a.dense = {16, 16};
        a.dropout = 0.0;
        a.l2 = 1e-4;
        return a;
    }
};

nlohmann::ordered_json cnn_arch_to_json(const CnnArch& a);
CnnArch cnn_arch_from_json(const nlohmann::json& j);

template <typename T>
struct ConvLayer {
    int in_c = 0, out_c = 0;
    std::vector<T> w;  // [out_c][in_c][3][3]
    std::vector<T> b;  // [out_c]
};

template <typename T>
struct FcLayer {
    int in = 0, out = 0;
    std::vector<T> w;  // [out][in]
    std::vector<T> b;  // [out]
};

template <typename T>
struct CnnParams {
    std::array<ConvLayer<T>, 3> conv;
    std::array<FcLayer<T>, 3> fc;

    size_t count() const {
        size_t n = 0;
        for (const auto& c : conv) n += c.w.size() + c.b.size();
        for (const auto& f : fc) n += f.w.size() + f.b.size();
        return n;
    }

    // weights first (conv then fc), then biases; order is part of the
    // checkpoint and finite-difference contracts
    template <typename Fn>
    void for_each_tensor(Fn&& fn) {
        for (auto& c : conv) fn(c.w, true);
        for (auto& f : fc) fn(f.w, true);
        for (auto& c : conv) fn(c.b, false);
        for (auto& f : fc) fn(f.b, false);
    }
    template <typename Fn>
    void for_each_tensor(Fn&& fn) const {
        for (const auto& c : conv) fn(c.w, true);
        for (const auto& f : fc) fn(f.w, true);
        for (const auto& c : conv) fn(c.b, false);
        for (const auto& f : fc) fn(f.b, false);
    }

    void fill_zero() {
        for_each_tensor([](auto& t, bool) { std::fill(t.begin(), t.end(), T(0)); });
    }
};

template <typename T>
CnnParams<T> cnn_alloc(const CnnArch& arch) {
    arch.validate();
    CnnParams<T> p;
    const std::array<int, 4> chans{1, arch.filters[0], arch.filters[1], arch.filters[2]};
    for (int s = 0; s < 3; ++s) {
        p.conv[s].in_c = chans[s];
        p.conv[s].out_c = chans[s + 1];
        p.conv[s].w.assign(static_cast<size_t>(chans[s + 1]) * chans[s] * 9, T(0));
        p.conv[s].b.assign(chans[s + 1], T(0));
    }
    const std::array<int, 4> widths{arch.flatten_size(), arch.dense[0], arch.dense[1],
                                    arch.classes};
    for (int s = 0; s < 3; ++s) {
        p.fc[s].in = widths[s];
        p.fc[s].out = widths[s + 1];
        p.fc[s].w.assign(static_cast<size_t>(widths[s + 1]) * widths[s], T(0));
        p.fc[s].b.assign(widths[s + 1], T(0));
    }
    return p;
}

// Glorot uniform: weights in +-sqrt(6/(fan_in+fan_out)); conv fans include the
// 3x3 receptive field. Biases start at zero.
template <typename T>
CnnParams<T> cnn_init(const CnnArch& arch, uint64_t seed) {
    CnnParams<T> p = cnn_alloc<T>(arch);
    Rng rng(seed);
    auto glorot = [&](std::vector<T>& w, double fan_in, double fan_out) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (auto& v : w) v = static_cast<T>(rng.uniform_real(-limit, limit));
    };
    for (auto& c : p.conv) glorot(c.w, 9.0 * c.in_c, 9.0 * c.out_c);
    for (auto& f : p.fc) glorot(f.w, f.in, f.out);
    return p;
}

// Mini-batch of inputs in [0,1], row-major [B][56][56].
template <typename T>
struct CnnBatch {
    int B = 0;
    std::vector<T> x;
    std::vector<int> labels;  // empty when only a forward pass is needed
};

namespace cnn_detail {

struct StageDims {
    int c_in, c_out, hw;  // hw = input side (output side before pooling)
};

inline std::array<StageDims, 3> stage_dims(const CnnArch& a) {
    return {StageDims{1, a.filters[0], 56}, StageDims{a.filters[0], a.filters[1], 28},
            StageDims{a.filters[1], a.filters[2], 14}};
}

// 3x3, pad 1, stride 1: col[(c*9 + k)][y*w + x] = in[c][y + ky - 1][x + kx - 1]
template <typename T>
void im2col(const T* in, int c_in, int side, T* col) {
    const int hw = side * side;
    for (int c = 0; c < c_in; ++c) {
        const T* chan = in + static_cast<size_t>(c) * hw;
        for (int k = 0; k < 9; ++k) {
            const int ky = k / 3 - 1, kx = k % 3 - 1;
            T* dst = col + (static_cast<size_t>(c) * 9 + k) * hw;
            for (int y = 0; y < side; ++y) {
                const int sy = y + ky;
                if (sy < 0 || sy >= side) {
                    std::fill_n(dst + static_cast<size_t>(y) * side, side, T(0));
                    continue;
                }
                for (int x = 0; x < side; ++x) {
                    const int sx = x + kx;
                    dst[y * side + x] = (sx < 0 || sx >= side) ? T(0) : chan[sy * side + sx];
                }
            }
        }
    }
}

// C[m][n] = sum_k A[m][k] * B[k][n]  (+ bias[m] when given)
template <typename T>
void gemm(const T* A, const T* B, T* C, int M, int K, int N, const T* bias) {
    for (int m = 0; m < M; ++m) {
        T* c_row = C + static_cast<size_t>(m) * N;
        std::fill_n(c_row, N, bias ? bias[m] : T(0));
        const T* a_row = A + static_cast<size_t>(m) * K;
        for (int k = 0; k < K; ++k) {
            const T a = a_row[k];
            if (a == T(0)) continue;
            const T* b_row = B + static_cast<size_t>(k) * N;
            for (int n = 0; n < N; ++n) c_row[n] += a * b_row[n];
        }
    }
}

// per-sample activations + backward scratch, reused across samples
template <typename T>
struct Workspace {
    std::array<std::vector<T>, 3> in;    // stage input [c_in][side][side]
    std::array<std::vector<T>, 3> col;   // im2col of stage input
    std::array<std::vector<T>, 3> z;     // pre-ReLU conv output
    std::array<std::vector<T>, 3> pooled;
    std::array<std::vector<int>, 3> arg;  // argmax source index per pooled cell
    std::vector<T> flat;                  // post-dropout (fc input)
    std::vector<uint8_t> mask;            // dropout keep flags
    std::array<std::vector<T>, 3> fc_z;
    std::array<std::vector<T>, 3> fc_a;
    std::vector<T> probs;
    // backward
    std::vector<T> dz, dcol, dprev, dfc;

    void init(const CnnArch& arch) {
        const auto dims = stage_dims(arch);
        size_t max_col = 0, max_zn = 0;
        for (int s = 0; s < 3; ++s) {
            const int hw = dims[s].hw * dims[s].hw;
            in[s].resize(static_cast<size_t>(dims[s].c_in) * hw);
            col[s].resize(static_cast<size_t>(dims[s].c_in) * 9 * hw);
            z[s].resize(static_cast<size_t>(dims[s].c_out) * hw);
            pooled[s].resize(static_cast<size_t>(dims[s].c_out) * hw / 4);
            arg[s].resize(pooled[s].size());
            max_col = std::max(max_col, col[s].size());
            max_zn = std::max(max_zn, z[s].size());
        }
        flat.resize(arch.flatten_size());
        mask.resize(flat.size());
        const std::array<int, 3> outs{arch.dense[0], arch.dense[1], arch.classes};
        for (int s = 0; s < 3; ++s) {
            fc_z[s].resize(outs[s]);
            fc_a[s].resize(outs[s]);
        }
        probs.resize(arch.classes);
        dz.resize(max_zn);
        dcol.resize(max_col);
        dprev.resize(std::max(in[0].size(), std::max(in[1].size(), in[2].size())));
        dfc.resize(std::max<size_t>(arch.flatten_size(),
                                    std::max(arch.dense[0], std::max(arch.dense[1], arch.classes))));
    }
};

// forward one sample; dropout active only when drop_rng != nullptr
template <typename T>
void forward_sample(const CnnArch& arch, const CnnParams<T>& p, const T* input, Rng* drop_rng,
                    Workspace<T>& ws) {
    const auto dims = stage_dims(arch);
    std::copy_n(input, ws.in[0].size(), ws.in[0].data());

    for (int s = 0; s < 3; ++s) {
        const int side = dims[s].hw;
        const int hw = side * side;
        im2col(ws.in[s].data(), dims[s].c_in, side, ws.col[s].data());
        gemm(p.conv[s].w.data(), ws.col[s].data(), ws.z[s].data(), dims[s].c_out,
             dims[s].c_in * 9, hw, p.conv[s].b.data());
        // ReLU fused into pooling input reads below (z kept pre-activation)
        const int oside = side / 2;
        for (int c = 0; c < dims[s].c_out; ++c) {
            const T* zc = ws.z[s].data() + static_cast<size_t>(c) * hw;
            T* out = ws.pooled[s].data() + static_cast<size_t>(c) * oside * oside;
            int* arg = ws.arg[s].data() + static_cast<size_t>(c) * oside * oside;
            for (int y = 0; y < oside; ++y)
                for (int x = 0; x < oside; ++x) {
                    int best_idx = (2 * y) * side + 2 * x;
                    T best = zc[best_idx];
                    const int cand[3] = {(2 * y) * side + 2 * x + 1, (2 * y + 1) * side + 2 * x,
                                         (2 * y + 1) * side + 2 * x + 1};
                    for (int idx : cand)
                        if (zc[idx] > best) {
                            best = zc[idx];
                            best_idx = idx;
                        }
                    out[y * oside + x] = best > T(0) ? best : T(0);
                    arg[y * oside + x] = best_idx;
                }
        }
        if (s < 2) ws.in[s + 1] = ws.pooled[s];
    }

    // flatten + dropout
    const auto& last = ws.pooled[2];
    if (drop_rng && arch.dropout > 0) {
        const T scale = static_cast<T>(1.0 / (1.0 - arch.dropout));
        for (size_t i = 0; i < last.size(); ++i) {
            const bool keep = drop_rng->uniform_real() >= arch.dropout;
            ws.mask[i] = keep;
            ws.flat[i] = keep ? last[i] * scale : T(0);
        }
    } else {
        std::fill(ws.mask.begin(), ws.mask.end(), uint8_t(1));
        std::copy(last.begin(), last.end(), ws.flat.begin());
    }

    const T* act = ws.flat.data();
    for (int s = 0; s < 3; ++s) {
        const auto& fc = p.fc[s];
        for (int o = 0; o < fc.out; ++o) {
            const T* w = fc.w.data() + static_cast<size_t>(o) * fc.in;
            T acc = fc.b[o];
            for (int i = 0; i < fc.in; ++i) acc += w[i] * act[i];
            ws.fc_z[s][o] = acc;
            ws.fc_a[s][o] = s < 2 ? (acc > T(0) ? acc : T(0)) : acc;
        }
        act = ws.fc_a[s].data();
    }

    // softmax (stable)
    T mx = ws.fc_a[2][0];
    for (int c = 1; c < arch.classes; ++c) mx = std::max(mx, ws.fc_a[2][c]);
    T sum = T(0);
    for (int c = 0; c < arch.classes; ++c) {
        ws.probs[c] = std::exp(ws.fc_a[2][c] - mx);
        sum += ws.probs[c];
    }
    for (int c = 0; c < arch.classes; ++c) ws.probs[c] /= sum;
}

// backward one sample from dlogits; accumulates into g
template <typename T>
void backward_sample(const CnnArch& arch, const CnnParams<T>& p, const Workspace<T>& ws_in,
                     const T* dlogits, CnnParams<T>& g, Workspace<T>& ws) {
    const auto dims = stage_dims(arch);
    std::copy_n(dlogits, arch.classes, ws.dfc.data());

    // dense stack
    for (int s = 2; s >= 0; --s) {
        const auto& fc = p.fc[s];
        const T* a_in = s == 0 ? ws_in.flat.data() : ws_in.fc_a[s - 1].data();
        std::vector<T>& gw = g.fc[s].w;
        std::vector<T>& gb = g.fc[s].b;
        // ws.dfc holds dz for this layer (post-ReLU grad already applied)
        for (int o = 0; o < fc.out; ++o) {
            const T d = ws.dfc[o];
            gb[o] += d;
            if (d == T(0)) continue;
            T* gw_row = gw.data() + static_cast<size_t>(o) * fc.in;
            for (int i = 0; i < fc.in; ++i) gw_row[i] += d * a_in[i];
        }
        // propagate to previous activation
        std::vector<T> da(fc.in, T(0));
        for (int o = 0; o < fc.out; ++o) {
            const T d = ws.dfc[o];
            if (d == T(0)) continue;
            const T* w_row = fc.w.data() + static_cast<size_t>(o) * fc.in;
            for (int i = 0; i < fc.in; ++i) da[i] += d * w_row[i];
        }
        if (s > 0) {
            for (int i = 0; i < fc.in; ++i)
                ws.dfc[i] = ws_in.fc_z[s - 1][i] > T(0) ? da[i] : T(0);
        } else {
            std::copy(da.begin(), da.end(), ws.dfc.begin());
        }
    }

    // dropout backward into the last pooled stage
    const int flat_n = arch.flatten_size();
    std::vector<T> dpool(flat_n);
    const T scale = arch.dropout > 0 ? static_cast<T>(1.0 / (1.0 - arch.dropout)) : T(1);
    for (int i = 0; i < flat_n; ++i)
        dpool[i] = ws_in.mask[i] ? ws.dfc[i] * scale : T(0);

    // conv stages in reverse
    for (int s = 2; s >= 0; --s) {
        const int side = dims[s].hw;
        const int hw = side * side;
        const int oside = side / 2;
        const int ohw = oside * oside;

        // unpool + ReLU grad -> dz
        std::fill_n(ws.dz.data(), static_cast<size_t>(dims[s].c_out) * hw, T(0));
        for (int c = 0; c < dims[s].c_out; ++c) {
            const int* arg = ws_in.arg[s].data() + static_cast<size_t>(c) * ohw;
            const T* zc = ws_in.z[s].data() + static_cast<size_t>(c) * hw;
            T* dzc = ws.dz.data() + static_cast<size_t>(c) * hw;
            const T* dp = dpool.data() + static_cast<size_t>(c) * ohw;
            for (int i = 0; i < ohw; ++i)
                if (zc[arg[i]] > T(0)) dzc[arg[i]] += dp[i];
        }

        // weight/bias grads: dW = dz x col^T
        auto& gc = g.conv[s];
        const int kdim = dims[s].c_in * 9;
        for (int oc = 0; oc < dims[s].c_out; ++oc) {
            const T* dz_row = ws.dz.data() + static_cast<size_t>(oc) * hw;
            T acc_b = T(0);
            for (int i = 0; i < hw; ++i) acc_b += dz_row[i];
            gc.b[oc] += acc_b;
            T* gw_row = gc.w.data() + static_cast<size_t>(oc) * kdim;
            const T* col = ws_in.col[s].data();
            for (int k = 0; k < kdim; ++k) {
                const T* col_row = col + static_cast<size_t>(k) * hw;
                T acc = T(0);
                for (int i = 0; i < hw; ++i) acc += dz_row[i] * col_row[i];
                gw_row[k] += acc;
            }
        }

        if (s == 0) break;

        // dcol = W^T x dz, then col2im into the previous pooled grad
        std::fill_n(ws.dcol.data(), static_cast<size_t>(kdim) * hw, T(0));
        for (int oc = 0; oc < dims[s].c_out; ++oc) {
            const T* w_row = p.conv[s].w.data() + static_cast<size_t>(oc) * kdim;
            const T* dz_row = ws.dz.data() + static_cast<size_t>(oc) * hw;
            for (int k = 0; k < kdim; ++k) {
                const T w = w_row[k];
                if (w == T(0)) continue;
                T* dcol_row = ws.dcol.data() + static_cast<size_t>(k) * hw;
                for (int i = 0; i < hw; ++i) dcol_row[i] += w * dz_row[i];
            }
        }
        dpool.assign(static_cast<size_t>(dims[s].c_in) * hw, T(0));
        for (int c = 0; c < dims[s].c_in; ++c) {
            T* dst = dpool.data() + static_cast<size_t>(c) * hw;
            for (int k = 0; k < 9; ++k) {
                const int ky = k / 3 - 1, kx = k % 3 - 1;
                const T* src = ws.dcol.data() + (static_cast<size_t>(c) * 9 + k) * hw;
                for (int y = 0; y < side; ++y) {
                    const int sy = y + ky;
                    if (sy < 0 || sy >= side) continue;
                    for (int x = 0; x < side; ++x) {
                        const int sx = x + kx;
                        if (sx >= 0 && sx < side) dst[sy * side + sx] += src[y * side + x];
                    }
                }
            }
        }
    }
}

}  // namespace cnn_detail

// Batch forward. Dropout is active only in train mode; per-sample dropout
// streams derive from one rng draw, so results are thread-count independent.
// Returns row-major [B][classes] probabilities.
template <typename T>
std::vector<T> cnn_forward(const CnnArch& arch, const CnnParams<T>& params,
                           const CnnBatch<T>& batch, bool train_mode, Rng& rng) {
    arch.validate();
    const size_t plane = static_cast<size_t>(arch.input) * arch.input;
    if (batch.x.size() != plane * batch.B)
        throw ShapeMismatch("cnn_forward: batch buffer does not match [B,56,56]");
    const uint64_t base = train_mode ? rng.next() : 0;

    std::vector<T> probs(static_cast<size_t>(batch.B) * arch.classes);
    cnn_detail::Workspace<T> ws;
    ws.init(arch);
    for (int i = 0; i < batch.B; ++i) {
        Rng drop(mix_seed(base, static_cast<uint64_t>(i)));
        cnn_detail::forward_sample(arch, params, batch.x.data() + plane * i,
                                   train_mode ? &drop : nullptr, ws);
        std::copy(ws.probs.begin(), ws.probs.end(), probs.begin() + static_cast<size_t>(i) * arch.classes);
    }
    return probs;
}

// loss = mean cross-entropy + l2 * sum ||W||^2 (biases excluded).
template <typename T>
T cnn_loss(const CnnArch& arch, const CnnParams<T>& params, const CnnBatch<T>& batch) {
    const size_t plane = static_cast<size_t>(arch.input) * arch.input;
    if (batch.x.size() != plane * batch.B || batch.labels.size() != static_cast<size_t>(batch.B))
        throw ShapeMismatch("cnn_loss: bad batch shape");
    cnn_detail::Workspace<T> ws;
    ws.init(arch);
    T loss = T(0);
    for (int i = 0; i < batch.B; ++i) {
        if (batch.labels[i] < 0 || batch.labels[i] >= arch.classes)
            throw ShapeMismatch("cnn_loss: label outside 0..classes-1");
        cnn_detail::forward_sample(arch, params, batch.x.data() + plane * i, nullptr, ws);
        loss -= std::log(std::max(ws.probs[batch.labels[i]], static_cast<T>(1e-300)));
    }
    loss /= static_cast<T>(batch.B);
    T l2_term = T(0);
    params.for_each_tensor([&](const std::vector<T>& t, bool is_weight) {
        if (!is_weight) return;
        for (const T v : t) l2_term += v * v;
    });
    return loss + static_cast<T>(arch.l2) * l2_term;
}

// Exact gradients of cnn_loss (dropout off). Deterministic for any job count:
// the batch is cut into fixed slots accumulated in slot order.
template <typename T>
T cnn_loss_and_grads(const CnnArch& arch, const CnnParams<T>& params, const CnnBatch<T>& batch,
                     CnnParams<T>& grads, int jobs = 1, const uint64_t* dropout_base = nullptr);

// SGD with momentum over shuffled mini-batches; augmentation applied online
// to training samples only.
struct TrainHyper {
    double learning_rate = 0.01;
    double momentum = 0.9;
    int batch_size = 64;
    int epochs = 10;
    uint64_t seed = 7;
};

nlohmann::ordered_json train_hyper_to_json(const TrainHyper& h);
TrainHyper train_hyper_from_json(const nlohmann::json& j);

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct CnnModel {
    CnnArch arch;
    CnnParams<float> params;
};

CnnModel cnn_create(const CnnArch& arch, uint64_t seed);

std::vector<EpochStats> cnn_train(CnnModel& model, const LabeledDataset& data,
                                  const SplitIndices& split, const TrainHyper& hyper,
                                  const AugmentParams& aug, int jobs = 2);

// eval-mode predictions for dataset rows
std::vector<int> cnn_predict(const CnnModel& model, const LabeledDataset& data,
                             std::span<const uint32_t> indices, int jobs = 2);
double cnn_accuracy(const CnnModel& model, const LabeledDataset& data,
                    std::span<const uint32_t> indices, int jobs = 2);

// single-image probabilities (the parser's entry point); img is a final
// (inverted) 56x56 sample
std::vector<double> cnn_probs_one(const CnnModel& model, const GrayImage& img);

// Max over parameters of |analytic - numeric| / max(|analytic|, |numeric|,
// 1e-12), central differences, double precision. sample_params = 0 checks
// every parameter.
double cnn_grad_check(const CnnArch& arch, double eps, uint64_t seed = 42, int jobs = 2,
                      size_t sample_params = 0);

void save_cnn(const std::string& path, const CnnModel& model);
CnnModel load_cnn(const std::string& path);

}  // namespace mf
