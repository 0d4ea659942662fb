#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "mf/idx.hpp"

#include "json.hpp"

namespace mf {

struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EmptyClass : ModelError {
    using ModelError::ModelError;
};
struct NonFiniteFeature : ModelError {
    using ModelError::ModelError;
};
struct DimensionMismatch : ModelError {
    using ModelError::ModelError;
};
struct UnsupportedProba : ModelError {
    using ModelError::ModelError;
};

// Row-major [N, D] features scaled to [0, 1].
struct FeatureMatrix {
    size_t rows = 0, cols = 0;
    std::vector<float> data;

    FeatureMatrix() = default;
    FeatureMatrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}
    const float* row(size_t i) const { return data.data() + i * cols; }
    float* row(size_t i) { return data.data() + i * cols; }
};

// Flattens [N,H,W] u8 images (optionally a subset) into features / 255.
FeatureMatrix features_from_images(const IdxTensor& images,
                                   std::span<const uint32_t> subset = {});
std::vector<int> labels_subset(std::span<const uint8_t> labels,
                               std::span<const uint32_t> subset = {});

enum class ModelKind { DecisionTree, RandomForest, KNeighbors, GaussianNB, LinearSGD };
enum class Criterion { Gini, Entropy };
enum class Splitter { Best, Random };
enum class KnnWeights { Uniform, Distance };
enum class LinearLoss { Hinge, Log, Perceptron, ModifiedHuber, PassiveAggressive };
enum class Penalty { None, L1, L2, ElasticNet };

struct ModelSpec {
    ModelKind kind = ModelKind::KNeighbors;
    std::string name;  // display name for benchmark rows

    // trees / forests
    Criterion criterion = Criterion::Entropy;
    int max_depth = 10;
    Splitter splitter = Splitter::Best;
    int n_trees = 25;

    // k-nearest neighbors
    int k = 5;
    KnnWeights weights = KnnWeights::Uniform;
    int minkowski_p = 2;

    // linear SGD family; lr_e = learning_rate / sqrt(epoch)
    LinearLoss loss = LinearLoss::Hinge;
    Penalty penalty = Penalty::L2;
    double alpha = 1e-4;
    double C = 1.0;
    bool alpha_from_C = false;  // logistic-regression convention: alpha = 1/(C*N)
    int epochs = 30;
    double learning_rate = 0.01;
    double l1_ratio = 0.15;

    uint64_t seed = 0;

    void validate() const;
};

nlohmann::ordered_json model_spec_to_json(const ModelSpec& s);
ModelSpec model_spec_from_json(const nlohmann::json& j);

// --- trained parameter blocks ---

struct TreeNode {
    int feature = -1;  // -1: leaf
    float threshold = 0.0f;
    int left = -1, right = -1;
    int label = -1;
    int count = 0;  // training samples at this node
};

struct DecisionTreeModel {
    std::vector<TreeNode> nodes;
    int predict_one(const float* x) const;
    int depth() const;
};

struct RandomForestModel {
    std::vector<DecisionTreeModel> trees;
};

struct KnnModel {
    FeatureMatrix X;
    std::vector<int> y;
};

struct GaussianNbModel {
    int D = 0;
    std::vector<double> means;  // [K*D]
    std::vector<double> vars;   // [K*D], floored
    double log_prior = 0.0;     // uniform priors: -ln K
};

struct LinearModel {
    int D = 0;
    std::vector<float> W;  // [K*D]
    std::vector<float> b;  // [K]
};

class TrainedModel {
public:
    // Deterministic given spec.seed. Throws EmptyClass when a class in
    // 0..max(y) has no members, NonFiniteFeature on NaN/inf features.
    static TrainedModel fit(const ModelSpec& spec, const FeatureMatrix& X,
                            std::span<const int> y);

    // Pure. kNN neighbor candidates are ordered by (distance, label, index),
    // so predictions do not depend on training-set order; vote ties break
    // toward the smaller class id.
    std::vector<int> predict(const FeatureMatrix& X, int jobs = 1) const;

    // Row-major [N, K]; rows sum to 1. Supported for GaussianNB,
    // LinearSGD(log) and RandomForest (vote fractions); otherwise throws
    // UnsupportedProba.
    std::vector<double> predict_proba(const FeatureMatrix& X, int jobs = 1) const;

    int num_classes() const { return K_; }
    const ModelSpec& spec() const { return spec_; }

    const DecisionTreeModel* as_tree() const { return std::get_if<DecisionTreeModel>(&model_); }
    const RandomForestModel* as_forest() const { return std::get_if<RandomForestModel>(&model_); }
    const LinearModel* as_linear() const { return std::get_if<LinearModel>(&model_); }

    // Penalized training objective for the linear family:
    // mean loss + alpha*||W||^2 (L2) / alpha*||W||_1 (L1) / elastic-net mix.
    double linear_objective(const FeatureMatrix& X, std::span<const int> y) const;

    nlohmann::json to_json() const;
    static TrainedModel from_json(const nlohmann::json& j);

private:
    using Variant = std::variant<DecisionTreeModel, RandomForestModel, KnnModel, GaussianNbModel,
                                 LinearModel>;
    ModelSpec spec_;
    int K_ = 0;
    size_t D_ = 0;
    Variant model_;
};

void save_model(const std::string& path, const TrainedModel& model);
TrainedModel load_model(const std::string& path);

}  // namespace mf
