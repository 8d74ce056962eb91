#include "selm/attack.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>

#include "selm/crypto.hpp"
#include "selm/error.hpp"
#include "selm/random.hpp"

namespace selm {

namespace {

constexpr std::uint8_t kDatasetVersion = 1;

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

} // namespace

void assign_split(CiphertextDataset& ds, double train_frac) {
    require(train_frac > 0.0 && train_frac < 1.0, "train_frac must be in (0, 1)");
    ds.train.clear();
    ds.test.clear();
    for (int label : {0, 1}) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < ds.labels.size(); ++i)
            if (ds.labels[i] == label) rows.push_back(i);
        const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(rows.size())));
        for (std::size_t j = 0; j < rows.size(); ++j) (j < n_train ? ds.train : ds.test).push_back(rows[j]);
    }
}

Bytes serialize(const CiphertextDataset& ds) {
    ByteWriter w;
    w.raw(std::string_view("SLDS"));
    w.u8(kDatasetVersion);
    w.u32(static_cast<std::uint32_t>(ds.d));
    w.u32(static_cast<std::uint32_t>(ds.size()));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.thetas[i].size() != ds.d) throw DimensionError("dataset record has wrong length");
        w.u8(static_cast<std::uint8_t>(ds.labels[i]));
        for (float v : ds.thetas[i]) w.f32(v);
    }
    return std::move(w).bytes();
}

CiphertextDataset deserialize_dataset(std::span<const std::uint8_t> data, double train_frac) {
    ByteReader r(data);
    const auto magic = r.raw(4);
    if (!std::equal(magic.begin(), magic.end(), "SLDS")) throw FormatError("not a dataset file (bad magic)");
    if (r.u8() != kDatasetVersion) throw FormatError("unsupported dataset version");
    CiphertextDataset ds;
    ds.d = r.u32();
    const std::uint32_t n = r.u32();
    if (ds.d == 0) throw FormatError("dataset dimension is zero");
    if (r.remaining() != static_cast<std::size_t>(n) * (1 + 4 * ds.d)) throw FormatError("dataset size mismatch");
    ds.thetas.reserve(n);
    int prev = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        const int label = r.u8();
        if (label > 1) throw FormatError("dataset label out of range");
        if (label < prev) throw FormatError("dataset records are not ordered by label");
        prev = label;
        std::vector<float> t(ds.d);
        for (auto& v : t) v = r.f32();
        ds.labels.push_back(label);
        ds.thetas.push_back(std::move(t));
    }
    r.expect_end();
    assign_split(ds, train_frac);
    return ds;
}

void CorpusConfig::validate() const {
    train.validate();
    if (n_per_class < 1) throw ConfigError("n_per_class must be at least 1");
    if (!(train_frac > 0.0 && train_frac < 1.0)) throw ConfigError("train_frac must be in (0, 1)");
    if (max_attempts < 1) throw ConfigError("max_attempts must be at least 1");
}

std::uint64_t corpus_nonce(std::uint64_t master_seed, int label, std::size_t index, std::size_t attempt) {
    ByteWriter w;
    w.raw(std::string_view("selm-corpus"));
    w.u64(master_seed);
    w.u8(static_cast<std::uint8_t>(label));
    w.u64(index);
    w.u64(attempt);
    const Digest h = sha256(w.bytes());
    ByteReader r(h);
    return r.u64();
}

CiphertextDataset generate_corpus(const SecretKey& k, std::span<const std::uint8_t> m0,
                                  std::span<const std::uint8_t> m1, const Checkpoint& model,
                                  const CorpusConfig& config) {
    config.validate();
    require(m0.size() == m1.size(), "challenge messages must have the same token length");
    require(!std::equal(m0.begin(), m0.end(), m1.begin(), m1.end()), "challenge messages must differ");

    const std::size_t n = config.n_per_class;
    const auto total = static_cast<std::int64_t>(2 * n);
    CiphertextDataset ds;
    ds.d = config.train.d;
    ds.thetas.resize(2 * n);
    ds.labels.resize(2 * n);
    ds.meta.m0_id = to_hex(sha256(m0));
    ds.meta.m1_id = to_hex(sha256(m1));
    ds.meta.regularizer = regularizer_tag(config.train.regularizer);

    std::exception_ptr failure;
    std::mutex mu;
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t t = 0; t < total; ++t) {
        const int label = t < static_cast<std::int64_t>(n) ? 0 : 1;
        const std::size_t index = static_cast<std::size_t>(t) % n;
        try {
            for (std::size_t attempt = 0;; ++attempt) {
                NonceSource nonce{corpus_nonce(config.master_seed, label, index, attempt), nullptr};
                try {
                    auto res = encrypt_detailed(k, label == 0 ? m0 : m1, model, config.train, nonce);
                    ds.thetas[static_cast<std::size_t>(t)] = std::move(res.ciphertext.theta_d_star);
                    ds.labels[static_cast<std::size_t>(t)] = label;
                    if (config.on_encrypted) {
                        std::lock_guard<std::mutex> lock(mu);
                        config.on_encrypted(label, index, res.stats.epochs_used);
                    }
                    break;
                } catch (const EncryptionBudgetExceeded&) {
                    if (attempt + 1 >= config.max_attempts) throw;
                }
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(mu);
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    assign_split(ds, config.train_frac);
    return ds;
}

Features extract_features(std::span<const float> theta) {
    require(!theta.empty(), "cannot extract features of an empty vector");
    const auto d = static_cast<double>(theta.size());
    double sum = 0.0, l1 = 0.0, sq = 0.0;
    double mx = theta[0], mn = theta[0];
    for (float f : theta) {
        const double v = f;
        sum += v;
        l1 += std::abs(v);
        sq += v * v;
        mx = std::max(mx, v);
        mn = std::min(mn, v);
    }
    const double mean = sum / d;
    double var = 0.0;
    for (float f : theta) var += (f - mean) * (f - mean);
    return {mean, std::sqrt(var / d), mx, mn, l1, std::sqrt(sq)};
}

double binomial_test(std::size_t successes, std::size_t n, double p0) {
    require(n >= 1 && successes <= n, "binomial test needs 0 <= successes <= n and n >= 1");
    require(p0 > 0.0 && p0 < 1.0, "p0 must be in (0, 1)");
    if (successes == 0) return 1.0;
    const double lp = std::log(p0), lq = std::log1p(-p0);
    const double lgn = std::lgamma(static_cast<double>(n) + 1.0);
    std::vector<double> terms;
    terms.reserve(n - successes + 1);
    for (std::size_t i = successes; i <= n; ++i) {
        const auto di = static_cast<double>(i), dn = static_cast<double>(n);
        terms.push_back(lgn - std::lgamma(di + 1.0) - std::lgamma(dn - di + 1.0) + di * lp + (dn - di) * lq);
    }
    const double m = *std::max_element(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += std::exp(t - m);
    return std::min(1.0, std::exp(m + std::log(s)));
}

std::vector<double> mutual_information(const Samples& s, std::size_t bins) {
    require(bins >= 2, "need at least two bins");
    const std::size_t n = s.size();
    require(n > 0, "mutual information needs samples");
    const bool has0 = std::count(s.y.begin(), s.y.end(), 0) > 0;
    const bool has1 = std::count(s.y.begin(), s.y.end(), 1) > 0;
    require(has0 && has1, "mutual information needs both labels");

    std::vector<double> out(s.dim(), 0.0);
    std::vector<std::size_t> order(n), bin(n);
    for (std::size_t f = 0; f < s.dim(); ++f) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.x[a][f] < s.x[b][f]; });
        std::size_t r = 0;
        while (r < n) {
            std::size_t e = r;
            while (e < n && s.x[order[e]][f] == s.x[order[r]][f]) ++e;
            const std::size_t b = r * bins / n;
            for (std::size_t j = r; j < e; ++j) bin[order[j]] = b;
            r = e;
        }
        std::vector<double> joint(bins * 2, 0.0), pb(bins, 0.0), py(2, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            joint[bin[i] * 2 + static_cast<std::size_t>(s.y[i])] += 1.0;
            pb[bin[i]] += 1.0;
            py[static_cast<std::size_t>(s.y[i])] += 1.0;
        }
        const auto dn = static_cast<double>(n);
        double mi = 0.0;
        for (std::size_t b = 0; b < bins; ++b)
            for (std::size_t y = 0; y < 2; ++y) {
                const double c = joint[b * 2 + y];
                if (c > 0.0) mi += c / dn * std::log(c * dn / (pb[b] * py[y]));
            }
        out[f] = std::max(0.0, mi);
    }
    return out;
}

Features feature_mutual_information(const CiphertextDataset& ds, std::size_t bins) {
    const auto mi = mutual_information(to_samples(ds, ds.train, InputMode::features), bins);
    Features out{};
    std::copy(mi.begin(), mi.end(), out.begin());
    return out;
}

const char* classifier_name(Classifier c) {
    switch (c) {
    case Classifier::knn: return "knn";
    case Classifier::lda: return "lda";
    case Classifier::ffnn: return "ffnn";
    case Classifier::svm: return "svm";
    case Classifier::gradboost: return "gradboost";
    }
    return "?";
}

const char* input_mode_name(InputMode m) { return m == InputMode::full ? "full" : "features"; }

Classifier parse_classifier(const std::string& name) {
    for (auto c : {Classifier::knn, Classifier::lda, Classifier::ffnn, Classifier::svm, Classifier::gradboost})
        if (name == classifier_name(c)) return c;
    throw ConfigError("unknown classifier '" + name + "'");
}

bool classifier_available(Classifier c) { return c == Classifier::knn || c == Classifier::lda || c == Classifier::ffnn; }

Samples to_samples(const CiphertextDataset& ds, std::span<const std::size_t> rows, InputMode mode) {
    Samples s;
    for (std::size_t i : rows) {
        const auto& t = ds.thetas.at(i);
        if (mode == InputMode::full) {
            s.push(std::vector<double>(t.begin(), t.end()), ds.labels[i]);
        } else {
            const Features f = extract_features(t);
            s.push(std::vector<double>(f.begin(), f.end()), ds.labels[i]);
        }
    }
    return s;
}

const AttackCell* AttackRow::find(Classifier c, InputMode m) const {
    for (const auto& cell : cells)
        if (cell.classifier == c && cell.mode == m) return &cell;
    return nullptr;
}

AttackReport run_game(std::span<const GamePair> pairs, const GameOptions& opts) {
    require(!opts.classifiers.empty() && !opts.modes.empty(), "attack needs classifiers and input modes");
    AttackReport report;
    report.alpha = opts.alpha;
    Rng rng(opts.seed);
    for (const auto& pair : pairs) {
        CiphertextDataset ds = pair.data;
        require(!ds.train.empty() && !ds.test.empty(), "dataset '" + pair.name + "' has an empty split");
        if (opts.shuffle_labels) {
            // Permute labels within each split so train/test stay disjoint and balanced.
            for (auto* rows : {&ds.train, &ds.test}) {
                std::vector<int> l;
                for (std::size_t i : *rows) l.push_back(ds.labels[i]);
                rng.shuffle(l.begin(), l.end());
                for (std::size_t j = 0; j < rows->size(); ++j) ds.labels[(*rows)[j]] = l[j];
            }
        }
        AttackRow row;
        row.pair = pair.name;
        row.regularizer = ds.meta.regularizer;
        row.mutual_information = feature_mutual_information(ds, opts.mi_bins);
        for (InputMode mode : opts.modes) {
            const Samples train = to_samples(ds, ds.train, mode);
            const Samples test = to_samples(ds, ds.test, mode);
            for (Classifier c : opts.classifiers) {
                AttackCell cell;
                cell.classifier = c;
                cell.mode = mode;
                cell.available = classifier_available(c);
                const std::uint64_t cell_seed = rng.fork();
                if (cell.available) {
                    ClassifierResult res;
                    if (c == Classifier::knn) {
                        res = knn_classify(train, test, opts.knn_ks).test;
                    } else if (c == Classifier::lda) {
                        res = lda_classify(train, test, opts.lda_shrinkage);
                    } else {
                        FfnnOptions fo = opts.ffnn;
                        fo.hidden = mode == InputMode::full ? opts.ffnn_hidden_full : opts.ffnn_hidden_features;
                        fo.seed = cell_seed;
                        res = ffnn_classify(train, test, fo).test;
                    }
                    cell.accuracy = res.accuracy;
                    cell.correct = res.correct;
                    cell.n = res.n;
                    cell.p_value = binomial_test(res.correct, res.n);
                    cell.reject_null = cell.p_value < opts.alpha;
                }
                row.cells.push_back(cell);
            }
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::string AttackReport::table() const {
    std::ostringstream os;
    for (const auto& row : rows) {
        os << "pair " << row.pair << " (regularizer " << static_cast<int>(row.regularizer) << ")\n";
        os << "  classifier  mode       accuracy  p_value     reject\n";
        for (const auto& c : row.cells) {
            char line[128];
            if (c.available)
                std::snprintf(line, sizeof line, "  %-10s  %-9s  %8.3f  %-10.3g  %s\n", classifier_name(c.classifier),
                              input_mode_name(c.mode), c.accuracy, c.p_value, c.reject_null ? "yes" : "no");
            else
                std::snprintf(line, sizeof line, "  %-10s  %-9s  %8s  %-10s  %s\n", classifier_name(c.classifier),
                              input_mode_name(c.mode), "-", "-", "-");
            os << line;
        }
        os << "  mutual information (nats):";
        for (std::size_t f = 0; f < kFeatureCount; ++f)
            os << ' ' << kFeatureNames[f] << '=' << fmt("%.4f", row.mutual_information[f]);
        os << "\n";
    }
    return os.str();
}

std::string AttackReport::grid() const {
    std::ostringstream os;
    os << "alpha=" << fmt("%.17g", alpha) << "\n";
    os << "rows=" << rows.size() << "\n";
    for (const auto& row : rows) {
        const std::string base = "row." + row.pair + ".";
        os << base << "regularizer=" << static_cast<int>(row.regularizer) << "\n";
        for (const auto& c : row.cells) {
            const std::string k = base + classifier_name(c.classifier) + "." + input_mode_name(c.mode) + ".";
            if (!c.available) {
                os << k << "status=absent\n";
                continue;
            }
            os << k << "accuracy=" << fmt("%.17g", c.accuracy) << "\n";
            os << k << "correct=" << c.correct << "\n";
            os << k << "n=" << c.n << "\n";
            os << k << "p_value=" << fmt("%.17g", c.p_value) << "\n";
            os << k << "reject_null=" << (c.reject_null ? 1 : 0) << "\n";
        }
        for (std::size_t f = 0; f < kFeatureCount; ++f)
            os << base << "mi." << kFeatureNames[f] << "=" << fmt("%.17g", row.mutual_information[f]) << "\n";
    }
    return os.str();
}

} // namespace selm
