#include "mf/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mf/parallel.hpp"
#include "mf/rng.hpp"

namespace mf {

FeatureMatrix features_from_images(const IdxTensor& images, std::span<const uint32_t> subset) {
    if (images.dims.size() != 3) throw ModelError("features_from_images: images must be [N,H,W]");
    const size_t d = static_cast<size_t>(images.dims[1]) * images.dims[2];
    const size_t n = subset.empty() ? images.dims[0] : subset.size();
    FeatureMatrix X(n, d);
    for (size_t i = 0; i < n; ++i) {
        const size_t src = subset.empty() ? i : subset[i];
        const uint8_t* p = images.data.data() + src * d;
        float* out = X.row(i);
        for (size_t j = 0; j < d; ++j) out[j] = p[j] * (1.0f / 255.0f);
    }
    return X;
}

std::vector<int> labels_subset(std::span<const uint8_t> labels, std::span<const uint32_t> subset) {
    std::vector<int> y;
    if (subset.empty()) {
        y.assign(labels.begin(), labels.end());
    } else {
        y.reserve(subset.size());
        for (auto i : subset) y.push_back(labels[i]);
    }
    return y;
}

void ModelSpec::validate() const {
    if (max_depth < 1) throw ModelError("ModelSpec: max_depth must be >= 1");
    if (n_trees < 1) throw ModelError("ModelSpec: n_trees must be >= 1");
    if (k < 1) throw ModelError("ModelSpec: k must be >= 1");
    if (minkowski_p != 1 && minkowski_p != 2) throw ModelError("ModelSpec: p must be 1 or 2");
    if (epochs < 0) throw ModelError("ModelSpec: epochs must be >= 0");
    if (learning_rate <= 0) throw ModelError("ModelSpec: learning_rate must be > 0");
    if (alpha < 0 || C <= 0) throw ModelError("ModelSpec: bad regularization settings");
    if (l1_ratio < 0 || l1_ratio > 1) throw ModelError("ModelSpec: l1_ratio must be in [0,1]");
}

namespace {

const char* kind_names[] = {"decision_tree", "random_forest", "kneighbors", "gaussian_nb",
                            "linear_sgd"};
const char* criterion_names[] = {"gini", "entropy"};
const char* splitter_names[] = {"best", "random"};
const char* weights_names[] = {"uniform", "distance"};
const char* loss_names[] = {"hinge", "log", "perceptron", "modified_huber", "passive_aggressive"};
const char* penalty_names[] = {"none", "l1", "l2", "elasticnet"};

template <typename E, size_t N>
E enum_from_name(const char* (&names)[N], const std::string& s, const char* what) {
    for (size_t i = 0; i < N; ++i)
        if (s == names[i]) return static_cast<E>(i);
    throw ModelError(std::string("unknown ") + what + ": " + s);
}

}  // namespace

nlohmann::ordered_json model_spec_to_json(const ModelSpec& s) {
    nlohmann::ordered_json j;
    j["kind"] = kind_names[static_cast<int>(s.kind)];
    j["name"] = s.name;
    j["criterion"] = criterion_names[static_cast<int>(s.criterion)];
    j["max_depth"] = s.max_depth;
    j["splitter"] = splitter_names[static_cast<int>(s.splitter)];
    j["n_trees"] = s.n_trees;
    j["k"] = s.k;
    j["weights"] = weights_names[static_cast<int>(s.weights)];
    j["p"] = s.minkowski_p;
    j["loss"] = loss_names[static_cast<int>(s.loss)];
    j["penalty"] = penalty_names[static_cast<int>(s.penalty)];
    j["alpha"] = s.alpha;
    j["C"] = s.C;
    j["alpha_from_C"] = s.alpha_from_C;
    j["epochs"] = s.epochs;
    j["learning_rate"] = s.learning_rate;
    j["l1_ratio"] = s.l1_ratio;
    j["seed"] = s.seed;
    return j;
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
    ModelSpec s;
    s.kind = enum_from_name<ModelKind>(kind_names, j.at("kind").get<std::string>(), "model kind");
    s.name = j.value("name", std::string{});
    if (j.contains("criterion"))
        s.criterion = enum_from_name<Criterion>(criterion_names, j["criterion"], "criterion");
    if (j.contains("max_depth")) s.max_depth = j["max_depth"].get<int>();
    if (j.contains("splitter"))
        s.splitter = enum_from_name<Splitter>(splitter_names, j["splitter"], "splitter");
    if (j.contains("n_trees")) s.n_trees = j["n_trees"].get<int>();
    if (j.contains("k")) s.k = j["k"].get<int>();
    if (j.contains("weights"))
        s.weights = enum_from_name<KnnWeights>(weights_names, j["weights"], "weights");
    if (j.contains("p")) s.minkowski_p = j["p"].get<int>();
    if (j.contains("loss")) s.loss = enum_from_name<LinearLoss>(loss_names, j["loss"], "loss");
    if (j.contains("penalty"))
        s.penalty = enum_from_name<Penalty>(penalty_names, j["penalty"], "penalty");
    if (j.contains("alpha")) s.alpha = j["alpha"].get<double>();
    if (j.contains("C")) s.C = j["C"].get<double>();
    if (j.contains("alpha_from_C")) s.alpha_from_C = j["alpha_from_C"].get<bool>();
    if (j.contains("epochs")) s.epochs = j["epochs"].get<int>();
    if (j.contains("learning_rate")) s.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("l1_ratio")) s.l1_ratio = j["l1_ratio"].get<double>();
    if (j.contains("seed")) s.seed = j["seed"].get<uint64_t>();
    s.validate();
    return s;
}

// ---------------------------------------------------------------- trees ----

int DecisionTreeModel::predict_one(const float* x) const {
    int i = 0;
    while (nodes[i].feature >= 0)
        i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
    return nodes[i].label;
}

int DecisionTreeModel::depth() const {
    // nodes are stored preorder; walk with explicit depths
    std::vector<std::pair<int, int>> stack{{0, 0}};
    int max_d = 0;
    while (!stack.empty()) {
        auto [i, d] = stack.back();
        stack.pop_back();
        max_d = std::max(max_d, d);
        if (nodes[i].feature >= 0) {
            stack.push_back({nodes[i].left, d + 1});
            stack.push_back({nodes[i].right, d + 1});
        }
    }
    return max_d;
}

namespace {

inline uint8_t bin_of(float x) {
    const int b = static_cast<int>(std::lround(x * 255.0f));
    return static_cast<uint8_t>(std::clamp(b, 0, 255));
}

double impurity(const uint32_t* counts, uint32_t n, int K, Criterion crit) {
    if (n == 0) return 0.0;
    double acc = 0.0;
    if (crit == Criterion::Gini) {
        for (int c = 0; c < K; ++c) {
            const double p = static_cast<double>(counts[c]) / n;
            acc += p * p;
        }
        return 1.0 - acc;
    }
    for (int c = 0; c < K; ++c)
        if (counts[c]) {
            const double p = static_cast<double>(counts[c]) / n;
            acc -= p * std::log(p);
        }
    return acc;
}

int majority_label(const uint32_t* counts, int K) {
    int best = 0;
    for (int c = 1; c < K; ++c)
        if (counts[c] > counts[best]) best = c;
    return best;
}

struct TreeBuilder {
    const FeatureMatrix& X;
    std::span<const int> y;
    int K;
    Criterion criterion;
    Splitter splitter;
    int max_depth;
    const std::vector<uint8_t>& bins;  // [N*D] cached bin indices
    Rng& rng;                          // random-splitter thresholds + forest feature draws
    int max_features;                  // 0 = all features

    std::vector<uint32_t> idx;  // sample indices, partitioned in place
    std::vector<int> feature_buf;
    std::vector<uint32_t> hist;  // [256*K]

    DecisionTreeModel build(std::vector<uint32_t> samples) {
        idx = std::move(samples);
        feature_buf.resize(X.cols);
        for (size_t f = 0; f < X.cols; ++f) feature_buf[f] = static_cast<int>(f);
        hist.assign(256 * static_cast<size_t>(K), 0);

        DecisionTreeModel tree;
        struct Todo {
            size_t begin, end;
            int depth;
            int parent;  // -1 for root
            bool is_left;
        };
        std::vector<Todo> todo{{0, idx.size(), 0, -1, false}};
        while (!todo.empty()) {
            const Todo t = todo.back();
            todo.pop_back();
            const int node_id = static_cast<int>(tree.nodes.size());
            tree.nodes.emplace_back();
            if (t.parent >= 0)
                (t.is_left ? tree.nodes[t.parent].left : tree.nodes[t.parent].right) = node_id;

            std::vector<uint32_t> counts(K, 0);
            for (size_t i = t.begin; i < t.end; ++i) ++counts[y[idx[i]]];
            const auto n = static_cast<uint32_t>(t.end - t.begin);
            tree.nodes[node_id].count = static_cast<int>(n);

            const double node_imp = impurity(counts.data(), n, K, criterion);
            bool make_leaf = t.depth >= max_depth || n < 2 || node_imp <= 1e-12;

            int best_f = -1;
            float best_thr = 0.0f;
            if (!make_leaf) {
                double best_score = node_imp - 1e-12;
                const int n_feats = pick_features();
                for (int fi = 0; fi < n_feats; ++fi) {
                    const int f = feature_buf[fi];
                    if (splitter == Splitter::Best)
                        best_split_binned(t.begin, t.end, n, counts.data(), f, best_score, best_f,
                                          best_thr);
                    else
                        random_split(t.begin, t.end, n, f, best_score, best_f, best_thr);
                }
                if (best_f < 0) make_leaf = true;
            }

            if (make_leaf) {
                tree.nodes[node_id].label = majority_label(counts.data(), K);
                continue;
            }

            tree.nodes[node_id].feature = best_f;
            tree.nodes[node_id].threshold = best_thr;
            const auto mid = std::partition(idx.begin() + t.begin, idx.begin() + t.end,
                                            [&](uint32_t i) { return X.row(i)[best_f] <= best_thr; }) -
                             idx.begin();
            // push right first so the left child is built (and numbered) first
            todo.push_back({static_cast<size_t>(mid), t.end, t.depth + 1, node_id, false});
            todo.push_back({t.begin, static_cast<size_t>(mid), t.depth + 1, node_id, true});
        }
        return tree;
    }

    // fills feature_buf front with the candidate features, returns how many
    int pick_features() {
        const int D = static_cast<int>(X.cols);
        if (max_features <= 0 || max_features >= D) return D;
        // partial Fisher-Yates over the identity buffer
        for (int i = 0; i < max_features; ++i) {
            const int j = i + static_cast<int>(rng.bounded(static_cast<uint64_t>(D - i)));
            std::swap(feature_buf[i], feature_buf[j]);
        }
        std::sort(feature_buf.begin(), feature_buf.begin() + max_features);
        return max_features;
    }

    void best_split_binned(size_t begin, size_t end, uint32_t n, const uint32_t* total,
                           int f, double& best_score, int& best_f, float& best_thr) {
        int min_b = 256, max_b = -1;
        for (size_t i = begin; i < end; ++i) {
            const uint8_t b = bins[idx[i] * X.cols + f];
            ++hist[b * static_cast<size_t>(K) + y[idx[i]]];
            min_b = std::min(min_b, static_cast<int>(b));
            max_b = std::max(max_b, static_cast<int>(b));
        }
        if (min_b != max_b) {
            std::vector<uint32_t> left(K, 0);
            uint32_t nl = 0;
            for (int b = min_b; b < max_b; ++b) {
                const uint32_t* row = &hist[b * static_cast<size_t>(K)];
                uint32_t row_n = 0;
                for (int c = 0; c < K; ++c) {
                    left[c] += row[c];
                    row_n += row[c];
                }
                nl += row_n;
                if (row_n == 0 || nl == n) continue;
                std::vector<uint32_t> right(K);
                for (int c = 0; c < K; ++c) right[c] = total[c] - left[c];
                const uint32_t nr = n - nl;
                const double score = (nl * impurity(left.data(), nl, K, criterion) +
                                      nr * impurity(right.data(), nr, K, criterion)) /
                                     n;
                if (score < best_score) {
                    int nb = b + 1;
                    while (nb < max_b && !occupied(nb)) ++nb;
                    best_score = score;
                    best_f = f;
                    best_thr = static_cast<float>((b / 255.0 + nb / 255.0) / 2.0);
                }
            }
        }
        // clear only the touched rows
        for (int b = std::max(0, min_b); b <= max_b; ++b)
            std::fill_n(&hist[b * static_cast<size_t>(K)], K, 0u);
    }

    bool occupied(int b) const {
        const uint32_t* row = &hist[b * static_cast<size_t>(K)];
        for (int c = 0; c < K; ++c)
            if (row[c]) return true;
        return false;
    }

    void random_split(size_t begin, size_t end, uint32_t n, int f, double& best_score,
                      int& best_f, float& best_thr) {
        float lo = X.row(idx[begin])[f], hi = lo;
        for (size_t i = begin + 1; i < end; ++i) {
            const float v = X.row(idx[i])[f];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (lo == hi) return;
        const auto thr = static_cast<float>(rng.uniform_real(lo, hi));
        std::vector<uint32_t> left(K, 0), right(K, 0);
        for (size_t i = begin; i < end; ++i) {
            const uint32_t s = idx[i];
            (X.row(s)[f] <= thr ? left : right)[y[s]] += 1;
        }
        uint32_t nl = 0, nr = 0;
        for (int c = 0; c < K; ++c) {
            nl += left[c];
            nr += right[c];
        }
        if (nl == 0 || nr == 0) return;
        const double score = (nl * impurity(left.data(), nl, K, criterion) +
                              nr * impurity(right.data(), nr, K, criterion)) /
                             n;
        if (score < best_score) {
            best_score = score;
            best_f = f;
            best_thr = thr;
        }
    }
};

std::vector<uint8_t> bin_features(const FeatureMatrix& X) {
    std::vector<uint8_t> bins(X.rows * X.cols);
    for (size_t i = 0; i < X.data.size(); ++i) bins[i] = bin_of(X.data[i]);
    return bins;
}

// ------------------------------------------------------------------ kNN ----

double knn_metric(const float* a, const float* b, size_t d, int p) {
    double acc = 0.0;
    if (p == 1) {
        for (size_t j = 0; j < d; ++j) acc += std::abs(static_cast<double>(a[j]) - b[j]);
    } else {
        for (size_t j = 0; j < d; ++j) {
            const double t = static_cast<double>(a[j]) - b[j];
            acc += t * t;
        }
    }
    return acc;
}

int knn_predict_one(const KnnModel& m, const ModelSpec& spec, int K, const float* x) {
    using Cand = std::tuple<double, int, uint32_t>;  // (metric, label, index)
    const size_t n = m.X.rows;
    const size_t k = std::min<size_t>(spec.k, n);
    std::vector<Cand> heap;  // max-heap: top = worst of the kept k
    heap.reserve(k + 1);
    for (uint32_t j = 0; j < n; ++j) {
        const double d = knn_metric(x, m.X.row(j), m.X.cols, spec.minkowski_p);
        Cand c{d, m.y[j], j};
        if (heap.size() < k) {
            heap.push_back(c);
            std::push_heap(heap.begin(), heap.end());
        } else if (c < heap.front()) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = c;
            std::push_heap(heap.begin(), heap.end());
        }
    }
    std::vector<double> votes(K, 0.0);
    for (const auto& [metric, label, index] : heap) {
        double w = 1.0;
        if (spec.weights == KnnWeights::Distance) {
            const double dist = spec.minkowski_p == 2 ? std::sqrt(metric) : metric;
            w = 1.0 / std::max(dist, 1e-12);
        }
        votes[label] += w;
        (void)index;
    }
    int best = 0;
    for (int c = 1; c < K; ++c)
        if (votes[c] > votes[best]) best = c;
    return best;
}

// ------------------------------------------------------------- GaussianNB --

GaussianNbModel gnb_fit(const FeatureMatrix& X, std::span<const int> y, int K) {
    GaussianNbModel m;
    m.D = static_cast<int>(X.cols);
    const size_t D = X.cols;
    m.means.assign(static_cast<size_t>(K) * D, 0.0);
    m.vars.assign(static_cast<size_t>(K) * D, 0.0);
    m.log_prior = -std::log(static_cast<double>(K));
    std::vector<uint32_t> counts(K, 0);
    for (size_t i = 0; i < X.rows; ++i) {
        ++counts[y[i]];
        const float* row = X.row(i);
        double* mu = &m.means[static_cast<size_t>(y[i]) * D];
        for (size_t j = 0; j < D; ++j) mu[j] += row[j];
    }
    for (int c = 0; c < K; ++c) {
        double* mu = &m.means[static_cast<size_t>(c) * D];
        for (size_t j = 0; j < D; ++j) mu[j] /= counts[c];
    }
    for (size_t i = 0; i < X.rows; ++i) {
        const float* row = X.row(i);
        const double* mu = &m.means[static_cast<size_t>(y[i]) * D];
        double* var = &m.vars[static_cast<size_t>(y[i]) * D];
        for (size_t j = 0; j < D; ++j) {
            const double t = row[j] - mu[j];
            var[j] += t * t;
        }
    }
    double max_var = 0.0;
    for (int c = 0; c < K; ++c) {
        double* var = &m.vars[static_cast<size_t>(c) * D];
        for (size_t j = 0; j < D; ++j) {
            var[j] /= counts[c];
            max_var = std::max(max_var, var[j]);
        }
    }
    const double floor = 1e-9 * (max_var > 0 ? max_var : 1.0);
    for (auto& v : m.vars) v = std::max(v, floor);
    return m;
}

void gnb_log_posterior(const GaussianNbModel& m, int K, const float* x, double* out) {
    const size_t D = m.D;
    for (int c = 0; c < K; ++c) {
        const double* mu = &m.means[static_cast<size_t>(c) * D];
        const double* var = &m.vars[static_cast<size_t>(c) * D];
        double ll = m.log_prior;
        for (size_t j = 0; j < D; ++j) {
            const double t = x[j] - mu[j];
            ll -= 0.5 * (std::log(2.0 * M_PI * var[j]) + t * t / var[j]);
        }
        out[c] = ll;
    }
}

// ----------------------------------------------------------------- linear --

double stable_sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

LinearModel linear_fit(const ModelSpec& spec, const FeatureMatrix& X, std::span<const int> y,
                       int K) {
    const size_t D = X.cols;
    const size_t N = X.rows;
    LinearModel m;
    m.D = static_cast<int>(D);
    m.W.assign(static_cast<size_t>(K) * D, 0.0f);
    m.b.assign(K, 0.0f);

    const double alpha = spec.alpha_from_C ? 1.0 / (spec.C * static_cast<double>(N)) : spec.alpha;
    const bool is_pa = spec.loss == LinearLoss::PassiveAggressive;

    std::vector<double> sq_norm(N, 0.0);
    if (is_pa)
        for (size_t i = 0; i < N; ++i) {
            const float* x = X.row(i);
            double acc = 1.0;  // bias folded into ||x||^2
            for (size_t j = 0; j < D; ++j) acc += static_cast<double>(x[j]) * x[j];
            sq_norm[i] = acc;
        }

    std::vector<uint32_t> order(N);
    for (uint32_t i = 0; i < N; ++i) order[i] = i;

    for (int epoch = 1; epoch <= spec.epochs; ++epoch) {
        Rng rng(mix_seed(spec.seed, static_cast<uint64_t>(epoch)));
        rng.shuffle(order);
        const double lr = spec.learning_rate / std::sqrt(static_cast<double>(epoch));
        for (const uint32_t i : order) {
            const float* x = X.row(i);
            for (int c = 0; c < K; ++c) {
                float* w = &m.W[static_cast<size_t>(c) * D];
                const double yc = y[i] == c ? 1.0 : -1.0;
                double s = m.b[c];
                for (size_t j = 0; j < D; ++j) s += static_cast<double>(w[j]) * x[j];
                const double margin = yc * s;

                double g = 0.0;  // update coefficient: w += g*x, b += g
                switch (spec.loss) {
                    case LinearLoss::Hinge:
                        if (margin < 1) g = lr * yc;
                        break;
                    case LinearLoss::Log:
                        g = lr * yc * stable_sigmoid(-margin);
                        break;
                    case LinearLoss::Perceptron:
                        if (margin <= 0) g = lr * yc;
                        break;
                    case LinearLoss::ModifiedHuber:
                        if (margin < -1)
                            g = 4 * lr * yc;
                        else if (margin < 1)
                            g = 2 * lr * (1 - margin) * yc;
                        break;
                    case LinearLoss::PassiveAggressive: {
                        const double loss = std::max(0.0, 1.0 - margin);
                        if (loss > 0) g = std::min(spec.C, loss / sq_norm[i]) * yc;
                        break;
                    }
                }
                if (g != 0.0) {
                    const auto gf = static_cast<float>(g);
                    for (size_t j = 0; j < D; ++j) w[j] += gf * x[j];
                    m.b[c] += gf;
                }

                if (alpha > 0.0) switch (spec.penalty) {
                    case Penalty::None:
                        break;
                    case Penalty::L2: {
                        const auto shrink = static_cast<float>(std::max(0.0, 1.0 - 2.0 * lr * alpha));
                        for (size_t j = 0; j < D; ++j) w[j] *= shrink;
                        break;
                    }
                    case Penalty::L1: {
                        const auto t = static_cast<float>(lr * alpha);
                        for (size_t j = 0; j < D; ++j)
                            w[j] = w[j] > t ? w[j] - t : (w[j] < -t ? w[j] + t : 0.0f);
                        break;
                    }
                    case Penalty::ElasticNet: {
                        const auto t = static_cast<float>(lr * alpha * spec.l1_ratio);
                        const auto shrink = static_cast<float>(
                            std::max(0.0, 1.0 - 2.0 * lr * alpha * (1.0 - spec.l1_ratio)));
                        for (size_t j = 0; j < D; ++j) {
                            float v = w[j] > t ? w[j] - t : (w[j] < -t ? w[j] + t : 0.0f);
                            w[j] = v * shrink;
                        }
                        break;
                    }
                }
            }
        }
    }
    return m;
}

void linear_scores(const LinearModel& m, int K, const float* x, double* out) {
    for (int c = 0; c < K; ++c) {
        const float* w = &m.W[static_cast<size_t>(c) * m.D];
        double s = m.b[c];
        for (int j = 0; j < m.D; ++j) s += static_cast<double>(w[j]) * x[j];
        out[c] = s;
    }
}

double linear_point_loss(LinearLoss loss, double margin) {
    switch (loss) {
        case LinearLoss::Hinge:
        case LinearLoss::PassiveAggressive:
            return std::max(0.0, 1.0 - margin);
        case LinearLoss::Log:
            return margin < -35 ? -margin : std::log1p(std::exp(-margin));
        case LinearLoss::Perceptron:
            return std::max(0.0, -margin);
        case LinearLoss::ModifiedHuber:
            if (margin >= 1) return 0.0;
            if (margin >= -1) return (1 - margin) * (1 - margin);
            return -4.0 * margin;
    }
    return 0.0;
}

void softmax_inplace(double* v, int K) {
    double mx = v[0];
    for (int c = 1; c < K; ++c) mx = std::max(mx, v[c]);
    double sum = 0.0;
    for (int c = 0; c < K; ++c) {
        v[c] = std::exp(v[c] - mx);
        sum += v[c];
    }
    for (int c = 0; c < K; ++c) v[c] /= sum;
}

}  // namespace

// ------------------------------------------------------------ TrainedModel -

TrainedModel TrainedModel::fit(const ModelSpec& spec, const FeatureMatrix& X,
                               std::span<const int> y) {
    spec.validate();
    if (X.rows == 0 || X.rows != y.size()) throw ModelError("fit: bad training set shape");
    for (const float v : X.data)
        if (!std::isfinite(v)) throw NonFiniteFeature("fit: non-finite feature value");

    int K = 0;
    for (const int label : y) {
        if (label < 0) throw ModelError("fit: negative label");
        K = std::max(K, label + 1);
    }
    std::vector<uint32_t> class_counts(K, 0);
    for (const int label : y) ++class_counts[label];
    for (int c = 0; c < K; ++c)
        if (class_counts[c] == 0)
            throw EmptyClass("fit: class " + std::to_string(c) + " has no training samples");

    TrainedModel model;
    model.spec_ = spec;
    model.K_ = K;
    model.D_ = X.cols;

    switch (spec.kind) {
        case ModelKind::DecisionTree: {
            const auto bins = bin_features(X);
            Rng rng(spec.seed);
            TreeBuilder builder{X, y, K, spec.criterion, spec.splitter, spec.max_depth,
                                bins, rng, 0, {}, {}, {}};
            std::vector<uint32_t> all(X.rows);
            for (uint32_t i = 0; i < X.rows; ++i) all[i] = i;
            model.model_ = builder.build(std::move(all));
            break;
        }
        case ModelKind::RandomForest: {
            const auto bins = bin_features(X);
            const int max_features =
                std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(X.cols)))));
            RandomForestModel forest;
            forest.trees.resize(spec.n_trees);
            for (int t = 0; t < spec.n_trees; ++t) {
                Rng rng(mix_seed(spec.seed, static_cast<uint64_t>(t)));
                std::vector<uint32_t> boot(X.rows);
                for (auto& b : boot) b = static_cast<uint32_t>(rng.bounded(X.rows));
                TreeBuilder builder{X, y, K, spec.criterion, spec.splitter, spec.max_depth,
                                    bins, rng, max_features, {}, {}, {}};
                forest.trees[t] = builder.build(std::move(boot));
            }
            model.model_ = std::move(forest);
            break;
        }
        case ModelKind::KNeighbors: {
            KnnModel m;
            m.X = X;
            m.y.assign(y.begin(), y.end());
            model.model_ = std::move(m);
            break;
        }
        case ModelKind::GaussianNB:
            model.model_ = gnb_fit(X, y, K);
            break;
        case ModelKind::LinearSGD:
            model.model_ = linear_fit(spec, X, y, K);
            break;
    }
    return model;
}

std::vector<int> TrainedModel::predict(const FeatureMatrix& X, int jobs) const {
    if (X.cols != D_) throw DimensionMismatch("predict: feature dimension mismatch");
    std::vector<int> out(X.rows, 0);

    if (const auto* tree = std::get_if<DecisionTreeModel>(&model_)) {
        for (size_t i = 0; i < X.rows; ++i) out[i] = tree->predict_one(X.row(i));
    } else if (const auto* forest = std::get_if<RandomForestModel>(&model_)) {
        parallel_for(X.rows, jobs, [&](size_t i) {
            std::vector<uint32_t> votes(K_, 0);
            for (const auto& t : forest->trees) ++votes[t.predict_one(X.row(i))];
            out[i] = majority_label(votes.data(), K_);
        });
    } else if (const auto* knn = std::get_if<KnnModel>(&model_)) {
        parallel_for(X.rows, jobs,
                     [&](size_t i) { out[i] = knn_predict_one(*knn, spec_, K_, X.row(i)); });
    } else if (const auto* gnb = std::get_if<GaussianNbModel>(&model_)) {
        parallel_for(X.rows, jobs, [&](size_t i) {
            std::vector<double> ll(K_);
            gnb_log_posterior(*gnb, K_, X.row(i), ll.data());
            int best = 0;
            for (int c = 1; c < K_; ++c)
                if (ll[c] > ll[best]) best = c;
            out[i] = best;
        });
    } else if (const auto* lin = std::get_if<LinearModel>(&model_)) {
        parallel_for(X.rows, jobs, [&](size_t i) {
            std::vector<double> s(K_);
            linear_scores(*lin, K_, X.row(i), s.data());
            int best = 0;
            for (int c = 1; c < K_; ++c)
                if (s[c] > s[best]) best = c;
            out[i] = best;
        });
    }
    return out;
}

std::vector<double> TrainedModel::predict_proba(const FeatureMatrix& X, int jobs) const {
    if (X.cols != D_) throw DimensionMismatch("predict_proba: feature dimension mismatch");
    std::vector<double> out(X.rows * static_cast<size_t>(K_), 0.0);

    if (const auto* forest = std::get_if<RandomForestModel>(&model_)) {
        parallel_for(X.rows, jobs, [&](size_t i) {
            double* row = &out[i * K_];
            for (const auto& t : forest->trees) row[t.predict_one(X.row(i))] += 1.0;
            for (int c = 0; c < K_; ++c) row[c] /= forest->trees.size();
        });
    } else if (const auto* gnb = std::get_if<GaussianNbModel>(&model_)) {
        parallel_for(X.rows, jobs, [&](size_t i) {
            gnb_log_posterior(*gnb, K_, X.row(i), &out[i * K_]);
            softmax_inplace(&out[i * K_], K_);
        });
    } else if (const auto* lin = std::get_if<LinearModel>(&model_)) {
        if (spec_.loss != LinearLoss::Log)
            throw UnsupportedProba("predict_proba: only log-loss linear models expose probabilities");
        parallel_for(X.rows, jobs, [&](size_t i) {
            linear_scores(*lin, K_, X.row(i), &out[i * K_]);
            softmax_inplace(&out[i * K_], K_);
        });
    } else {
        throw UnsupportedProba("predict_proba: unsupported for this model kind");
    }
    return out;
}

double TrainedModel::linear_objective(const FeatureMatrix& X, std::span<const int> y) const {
    const auto* lin = std::get_if<LinearModel>(&model_);
    if (!lin) throw ModelError("linear_objective: not a linear model");
    const double alpha = spec_.alpha_from_C ? 1.0 / (spec_.C * static_cast<double>(X.rows))
                                            : spec_.alpha;
    double loss_sum = 0.0;
    std::vector<double> s(K_);
    for (size_t i = 0; i < X.rows; ++i) {
        linear_scores(*lin, K_, X.row(i), s.data());
        for (int c = 0; c < K_; ++c) {
            const double yc = y[i] == c ? 1.0 : -1.0;
            loss_sum += linear_point_loss(spec_.loss, yc * s[c]);
        }
    }
    double l1 = 0.0, l2 = 0.0;
    for (const float w : lin->W) {
        l1 += std::abs(static_cast<double>(w));
        l2 += static_cast<double>(w) * w;
    }
    double penalty = 0.0;
    switch (spec_.penalty) {
        case Penalty::None: break;
        case Penalty::L1: penalty = alpha * l1; break;
        case Penalty::L2: penalty = alpha * l2; break;
        case Penalty::ElasticNet:
            penalty = alpha * (spec_.l1_ratio * l1 + (1.0 - spec_.l1_ratio) * l2);
            break;
    }
    return loss_sum / static_cast<double>(X.rows) + penalty;
}

// ------------------------------------------------------------ serialization -

namespace {

template <typename T>
nlohmann::json::binary_t to_bin(const std::vector<T>& v) {
    nlohmann::json::binary_t b;
    b.resize(v.size() * sizeof(T));
    std::memcpy(b.data(), v.data(), b.size());
    return b;
}

template <typename T>
std::vector<T> from_bin(const nlohmann::json& j) {
    const auto& b = j.get_binary();
    if (b.size() % sizeof(T) != 0) throw ModelError("model file: bad tensor byte length");
    std::vector<T> v(b.size() / sizeof(T));
    std::memcpy(v.data(), b.data(), b.size());
    return v;
}

nlohmann::json tree_to_json(const DecisionTreeModel& t) {
    std::vector<int32_t> features, left, right, labels, counts;
    std::vector<float> thresholds;
    for (const auto& n : t.nodes) {
        features.push_back(n.feature);
        thresholds.push_back(n.threshold);
        left.push_back(n.left);
        right.push_back(n.right);
        labels.push_back(n.label);
        counts.push_back(n.count);
    }
    nlohmann::json j;
    j["features"] = to_bin(features);
    j["thresholds"] = to_bin(thresholds);
    j["left"] = to_bin(left);
    j["right"] = to_bin(right);
    j["labels"] = to_bin(labels);
    j["counts"] = to_bin(counts);
    return j;
}

DecisionTreeModel tree_from_json(const nlohmann::json& j) {
    const auto features = from_bin<int32_t>(j.at("features"));
    const auto thresholds = from_bin<float>(j.at("thresholds"));
    const auto left = from_bin<int32_t>(j.at("left"));
    const auto right = from_bin<int32_t>(j.at("right"));
    const auto labels = from_bin<int32_t>(j.at("labels"));
    const auto counts = from_bin<int32_t>(j.at("counts"));
    DecisionTreeModel t;
    t.nodes.resize(features.size());
    for (size_t i = 0; i < features.size(); ++i)
        t.nodes[i] = {features[i], thresholds[i], left[i], right[i], labels[i], counts[i]};
    return t;
}

}  // namespace

nlohmann::json TrainedModel::to_json() const {
    nlohmann::json j;
    j["format"] = "mf-model-v1";
    j["spec"] = model_spec_to_json(spec_);
    j["K"] = K_;
    j["D"] = D_;
    nlohmann::json p;
    if (const auto* tree = std::get_if<DecisionTreeModel>(&model_)) {
        p = tree_to_json(*tree);
    } else if (const auto* forest = std::get_if<RandomForestModel>(&model_)) {
        auto arr = nlohmann::json::array();
        for (const auto& t : forest->trees) arr.push_back(tree_to_json(t));
        p["trees"] = arr;
    } else if (const auto* knn = std::get_if<KnnModel>(&model_)) {
        p["rows"] = knn->X.rows;
        p["X"] = to_bin(knn->X.data);
        p["y"] = to_bin(knn->y);
    } else if (const auto* gnb = std::get_if<GaussianNbModel>(&model_)) {
        p["means"] = to_bin(gnb->means);
        p["vars"] = to_bin(gnb->vars);
        p["log_prior"] = gnb->log_prior;
    } else if (const auto* lin = std::get_if<LinearModel>(&model_)) {
        p["W"] = to_bin(lin->W);
        p["b"] = to_bin(lin->b);
    }
    j["params"] = p;
    return j;
}

TrainedModel TrainedModel::from_json(const nlohmann::json& j) {
    if (j.value("format", std::string{}) != "mf-model-v1")
        throw ModelError("model file: unknown format");
    TrainedModel m;
    m.spec_ = model_spec_from_json(j.at("spec"));
    m.K_ = j.at("K").get<int>();
    m.D_ = j.at("D").get<size_t>();
    const auto& p = j.at("params");
    switch (m.spec_.kind) {
        case ModelKind::DecisionTree:
            m.model_ = tree_from_json(p);
            break;
        case ModelKind::RandomForest: {
            RandomForestModel forest;
            for (const auto& t : p.at("trees")) forest.trees.push_back(tree_from_json(t));
            m.model_ = std::move(forest);
            break;
        }
        case ModelKind::KNeighbors: {
            KnnModel knn;
            knn.X.rows = p.at("rows").get<size_t>();
            knn.X.cols = m.D_;
            knn.X.data = from_bin<float>(p.at("X"));
            knn.y = from_bin<int>(p.at("y"));
            if (knn.X.data.size() != knn.X.rows * knn.X.cols || knn.y.size() != knn.X.rows)
                throw ModelError("model file: kNN shape mismatch");
            m.model_ = std::move(knn);
            break;
        }
        case ModelKind::GaussianNB: {
            GaussianNbModel gnb;
            gnb.D = static_cast<int>(m.D_);
            gnb.means = from_bin<double>(p.at("means"));
            gnb.vars = from_bin<double>(p.at("vars"));
            gnb.log_prior = p.at("log_prior").get<double>();
            m.model_ = std::move(gnb);
            break;
        }
        case ModelKind::LinearSGD: {
            LinearModel lin;
            lin.D = static_cast<int>(m.D_);
            lin.W = from_bin<float>(p.at("W"));
            lin.b = from_bin<float>(p.at("b"));
            m.model_ = std::move(lin);
            break;
        }
    }
    return m;
}

void save_model(const std::string& path, const TrainedModel& model) {
    const auto cbor = nlohmann::json::to_cbor(model.to_json());
    write_file_bytes(path, cbor);
}

TrainedModel load_model(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return TrainedModel::from_json(nlohmann::json::from_cbor(bytes));
}

}  // namespace mf
