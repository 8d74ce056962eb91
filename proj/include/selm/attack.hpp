#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "selm/bytes.hpp"
#include "selm/cipher.hpp"
#include "selm/classifiers.hpp"
#include "selm/training.hpp"

namespace selm {

struct DatasetMeta {
    std::string m0_id, m1_id;
    std::uint8_t regularizer = 0;
};

// Labeled ciphertext vectors. Records are stored class 0 first, then class 1;
// within each class the first round(train_frac * n_class) records are training.
struct CiphertextDataset {
    std::size_t d = 0;
    std::vector<std::vector<float>> thetas;
    std::vector<int> labels;
    std::vector<std::size_t> train, test;
    DatasetMeta meta;

    std::size_t size() const { return thetas.size(); }
};

// Recomputes train/test from labels and train_frac (see CiphertextDataset).
void assign_split(CiphertextDataset& ds, double train_frac);

// "SLDS" | version u8 = 1 | d u32 | n u32 | n x (label u8, d x binary32)
Bytes serialize(const CiphertextDataset& ds);
CiphertextDataset deserialize_dataset(std::span<const std::uint8_t> data, double train_frac = 0.8);

struct CorpusConfig {
    TrainConfig train;
    std::size_t n_per_class = 10;
    double train_frac = 0.8;
    std::uint64_t master_seed = 0;
    std::size_t max_attempts = 3;  // per ciphertext
    std::function<void(int label, std::size_t index, std::size_t epochs)> on_encrypted;

    void validate() const;
};

// Nonce of encryption (label, index, attempt); a pure function of the master seed.
std::uint64_t corpus_nonce(std::uint64_t master_seed, int label, std::size_t index, std::size_t attempt);

// Encryptions run in parallel across examples (OpenMP), each single-threaded.
CiphertextDataset generate_corpus(const SecretKey& k, std::span<const std::uint8_t> m0,
                                  std::span<const std::uint8_t> m1, const Checkpoint& model,
                                  const CorpusConfig& config);

inline constexpr std::size_t kFeatureCount = 6;
inline constexpr std::array<const char*, kFeatureCount> kFeatureNames{"mean", "std", "max", "min", "l1", "l2"};
using Features = std::array<double, kFeatureCount>;

// (mean, population std, max, min, L1 norm, L2 norm)
Features extract_features(std::span<const float> theta);

// One-sided exact test: P[X >= successes], X ~ Binomial(n, p0).
double binomial_test(std::size_t successes, std::size_t n, double p0 = 0.5);

// Plug-in MI (nats) between each feature and the label over the given rows,
// after equal-frequency binning; tied values share a bin.
std::vector<double> mutual_information(const Samples& s, std::size_t bins = 16);
Features feature_mutual_information(const CiphertextDataset& ds, std::size_t bins = 16);

enum class Classifier { knn, lda, ffnn, svm, gradboost };
enum class InputMode { full, features };

const char* classifier_name(Classifier c);
const char* input_mode_name(InputMode m);
Classifier parse_classifier(const std::string& name);
bool classifier_available(Classifier c);

Samples to_samples(const CiphertextDataset& ds, std::span<const std::size_t> rows, InputMode mode);

struct GamePair {
    std::string name;
    CiphertextDataset data;
};

struct GameOptions {
    std::vector<Classifier> classifiers{Classifier::knn, Classifier::lda, Classifier::ffnn, Classifier::svm,
                                        Classifier::gradboost};
    std::vector<InputMode> modes{InputMode::full, InputMode::features};
    std::vector<std::size_t> knn_ks{5, 25, 100};
    double lda_shrinkage = 0.1;
    FfnnOptions ffnn;  // hidden is overridden per mode
    std::size_t ffnn_hidden_full = 1000;
    std::size_t ffnn_hidden_features = 256;
    std::size_t mi_bins = 16;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    bool shuffle_labels = false;  // permutation sanity run
};

struct AttackCell {
    Classifier classifier = Classifier::knn;
    InputMode mode = InputMode::full;
    bool available = false;
    double accuracy = 0.0;
    std::size_t correct = 0, n = 0;
    double p_value = 1.0;
    bool reject_null = false;
};

struct AttackRow {
    std::string pair;
    std::uint8_t regularizer = 0;
    std::vector<AttackCell> cells;
    Features mutual_information{};

    const AttackCell* find(Classifier c, InputMode m) const;
};

struct AttackReport {
    std::vector<AttackRow> rows;
    double alpha = 0.05;

    std::string table() const;
    // Lines "row.<pair>.<classifier>.<mode>.<field>=<value>" plus "row.<pair>.mi.<feature>=".
    std::string grid() const;
};

AttackReport run_game(std::span<const GamePair> pairs, const GameOptions& opts);

} // namespace selm
