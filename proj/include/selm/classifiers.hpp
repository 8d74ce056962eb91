#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace selm {

// Dense labeled samples, binary labels in {0, 1}.
struct Samples {
    std::vector<std::vector<double>> x;
    std::vector<int> y;

    std::size_t size() const { return x.size(); }
    std::size_t dim() const { return x.empty() ? 0 : x.front().size(); }
    void push(std::vector<double> row, int label) {
        x.push_back(std::move(row));
        y.push_back(label);
    }
};

struct ClassifierResult {
    double accuracy = 0.0;
    std::size_t correct = 0;
    std::size_t n = 0;
    std::vector<int> predictions;
};

ClassifierResult score(const std::vector<int>& predictions, const std::vector<int>& truth);

// Zero-mean / unit-variance scaling fitted on training data only. Constant
// columns keep scale 1.
struct Standardizer {
    std::vector<double> mean, scale;
    static Standardizer fit(const Samples& train);
    std::vector<double> apply(std::span<const double> x) const;
    Samples apply(const Samples& s) const;
};

// --- k nearest neighbours (raw inputs, Euclidean distance) ---

// Distance ties: lower training index first. Vote ties: label 0.
int knn_predict_one(const Samples& train, std::span<const double> query, std::size_t k);
std::vector<int> knn_predict(const Samples& train, const Samples& test, std::size_t k);
// k with the best mean accuracy over `folds` interleaved folds (fold = index mod folds);
// ties go to the smaller k. Candidates larger than a fold's training part are skipped.
std::size_t knn_select_k(const Samples& train, std::span<const std::size_t> ks, std::size_t folds = 5);

struct KnnResult {
    std::size_t k = 0;
    ClassifierResult test;
};
KnnResult knn_classify(const Samples& train, const Samples& test,
                       std::span<const std::size_t> ks = std::initializer_list<std::size_t>{5, 25, 100});

// --- linear discriminant analysis with ridge-shrunk pooled covariance ---

struct LdaModel {
    Standardizer scaler;
    std::vector<double> w;  // in standardized coordinates
    double bias = 0.0;
    double score(std::span<const double> x) const;  // > 0 predicts label 1
    int predict(std::span<const double> x) const { return score(x) > 0.0 ? 1 : 0; }
};

// Sigma_shrunk = Sigma + shrinkage * trace(Sigma) / p * I.
LdaModel lda_fit(const Samples& train, double shrinkage = 0.1);
ClassifierResult lda_classify(const Samples& train, const Samples& test, double shrinkage = 0.1);

// --- two-layer feed-forward network ---

struct FfnnOptions {
    std::size_t hidden = 256;
    double lr = 3e-4;
    double weight_decay = 0.1;
    std::size_t batch_size = 32;
    double dropout = 0.1;
    std::size_t patience = 5;  // stop after this many epochs without a new best training loss
    std::size_t max_epochs = 500;
    bool standardize = true;
    std::uint64_t seed = 0;
};

struct FfnnResult {
    ClassifierResult test;
    double train_accuracy = 0.0;
    std::size_t epochs = 0;
};

FfnnResult ffnn_classify(const Samples& train, const Samples& test, const FfnnOptions& opts);

} // namespace selm
