#include "selm/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "selm/error.hpp"
#include "selm/kernels.hpp"
#include "selm/optim.hpp"
#include "selm/random.hpp"

namespace selm {

ClassifierResult score(const std::vector<int>& predictions, const std::vector<int>& truth) {
    require(predictions.size() == truth.size(), "prediction and label counts differ");
    ClassifierResult r;
    r.n = truth.size();
    for (std::size_t i = 0; i < r.n; ++i) r.correct += predictions[i] == truth[i] ? 1 : 0;
    r.accuracy = r.n == 0 ? 0.0 : static_cast<double>(r.correct) / static_cast<double>(r.n);
    r.predictions = predictions;
    return r;
}

Standardizer Standardizer::fit(const Samples& train) {
    require(train.size() > 0, "cannot standardize an empty sample");
    const std::size_t p = train.dim();
    const auto n = static_cast<double>(train.size());
    Standardizer s;
    s.mean.assign(p, 0.0);
    s.scale.assign(p, 0.0);
    for (const auto& row : train.x)
        for (std::size_t j = 0; j < p; ++j) s.mean[j] += row[j];
    for (auto& m : s.mean) m /= n;
    for (const auto& row : train.x)
        for (std::size_t j = 0; j < p; ++j) s.scale[j] += (row[j] - s.mean[j]) * (row[j] - s.mean[j]);
    for (auto& v : s.scale) {
        v = std::sqrt(v / n);
        if (!(v > 0.0)) v = 1.0;
    }
    return s;
}

std::vector<double> Standardizer::apply(std::span<const double> x) const {
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) / scale[j];
    return out;
}

Samples Standardizer::apply(const Samples& s) const {
    Samples out;
    out.y = s.y;
    out.x.reserve(s.size());
    for (const auto& row : s.x) out.x.push_back(apply(row));
    return out;
}

// --- KNN ---

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        s += d * d;
    }
    return s;
}

// Majority vote over the k nearest (dist, index) pairs.
int vote(std::vector<std::pair<double, std::size_t>>& cand, const std::vector<int>& labels, std::size_t k) {
    k = std::min(k, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    std::size_t ones = 0;
    for (std::size_t i = 0; i < k; ++i) ones += labels[cand[i].second] == 1 ? 1 : 0;
    return 2 * ones > k ? 1 : 0;
}

} // namespace

int knn_predict_one(const Samples& train, std::span<const double> query, std::size_t k) {
    require(k >= 1 && train.size() >= 1, "knn needs k >= 1 and a nonempty training set");
    std::vector<std::pair<double, std::size_t>> cand(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) cand[i] = {sq_dist(train.x[i], query), i};
    return vote(cand, train.y, k);
}

std::vector<int> knn_predict(const Samples& train, const Samples& test, std::size_t k) {
    std::vector<int> out(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) out[i] = knn_predict_one(train, test.x[i], k);
    return out;
}

std::size_t knn_select_k(const Samples& train, std::span<const std::size_t> ks, std::size_t folds) {
    require(!ks.empty() && folds >= 2, "knn model selection needs candidates and >= 2 folds");
    const std::size_t n = train.size();
    std::vector<double> dist(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) dist[i * n + j] = dist[j * n + i] = sq_dist(train.x[i], train.x[j]);

    std::size_t smallest_fold_train = n;
    for (std::size_t f = 0; f < folds; ++f) {
        std::size_t held = 0;
        for (std::size_t i = f; i < n; i += folds) ++held;
        smallest_fold_train = std::min(smallest_fold_train, n - held);
    }

    std::size_t best_k = 0;
    double best_acc = -1.0;
    std::vector<std::size_t> sorted(ks.begin(), ks.end());
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k : sorted) {
        if (k < 1 || k > smallest_fold_train) continue;
        double acc_sum = 0.0;
        for (std::size_t f = 0; f < folds; ++f) {
            std::size_t correct = 0, total = 0;
            for (std::size_t q = f; q < n; q += folds) {
                std::vector<std::pair<double, std::size_t>> cand;
                cand.reserve(n);
                for (std::size_t i = 0; i < n; ++i)
                    if (i % folds != f) cand.emplace_back(dist[q * n + i], i);
                correct += vote(cand, train.y, k) == train.y[q] ? 1 : 0;
                ++total;
            }
            acc_sum += total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
        }
        const double acc = acc_sum / static_cast<double>(folds);
        if (acc > best_acc) {
            best_acc = acc;
            best_k = k;
        }
    }
    if (best_k == 0) throw PreconditionError("no candidate k fits the cross-validation folds");
    return best_k;
}

KnnResult knn_classify(const Samples& train, const Samples& test, std::span<const std::size_t> ks) {
    KnnResult r;
    r.k = knn_select_k(train, ks);
    r.test = score(knn_predict(train, test, r.k), test.y);
    return r;
}

// --- LDA ---

double LdaModel::score(std::span<const double> x) const {
    const auto z = scaler.apply(x);
    double s = bias;
    for (std::size_t j = 0; j < z.size(); ++j) s += w[j] * z[j];
    return s;
}

LdaModel lda_fit(const Samples& raw, double shrinkage) {
    std::size_t n1 = static_cast<std::size_t>(std::count(raw.y.begin(), raw.y.end(), 1));
    const std::size_t n0 = raw.size() - n1;
    require(n0 >= 2 && n1 >= 2, "lda needs at least two examples per class");
    require(shrinkage >= 0.0, "shrinkage must be >= 0");

    LdaModel m;
    m.scaler = Standardizer::fit(raw);
    const Samples s = m.scaler.apply(raw);
    const std::size_t p = s.dim();

    Eigen::VectorXd mu0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
    Eigen::VectorXd mu1 = mu0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const Eigen::Map<const Eigen::VectorXd> xi(s.x[i].data(), static_cast<Eigen::Index>(p));
        (s.y[i] == 1 ? mu1 : mu0) += xi;
    }
    mu0 /= static_cast<double>(n0);
    mu1 /= static_cast<double>(n1);

    Eigen::MatrixXd centered(static_cast<Eigen::Index>(s.size()), static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < s.size(); ++i) {
        const Eigen::Map<const Eigen::VectorXd> xi(s.x[i].data(), static_cast<Eigen::Index>(p));
        centered.row(static_cast<Eigen::Index>(i)) = (xi - (s.y[i] == 1 ? mu1 : mu0)).transpose();
    }
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(s.size() - 2);
    const double ridge = shrinkage * cov.trace() / static_cast<double>(p);
    cov.diagonal().array() += ridge > 0.0 ? ridge : 1e-12;

    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw Error("NumericError", "pooled covariance is not positive definite");
    const Eigen::VectorXd w = llt.solve(mu1 - mu0);
    m.w.assign(w.data(), w.data() + w.size());
    m.bias = -0.5 * (mu0 + mu1).dot(w) + std::log(static_cast<double>(n1) / static_cast<double>(n0));
    return m;
}

ClassifierResult lda_classify(const Samples& train, const Samples& test, double shrinkage) {
    const LdaModel m = lda_fit(train, shrinkage);
    std::vector<int> pred(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) pred[i] = m.predict(test.x[i]);
    return score(pred, test.y);
}

// --- FFNN ---

namespace {

struct Net {
    std::size_t in, hidden;
    std::vector<double> params;  // W1[in][hidden] b1[hidden] W2[hidden][2] b2[2]
    std::size_t w1() const { return 0; }
    std::size_t b1() const { return in * hidden; }
    std::size_t w2() const { return b1() + hidden; }
    std::size_t b2() const { return w2() + hidden * 2; }
    std::size_t total() const { return b2() + 2; }

    Net(std::size_t in_, std::size_t hidden_, Rng& rng) : in(in_), hidden(hidden_), params(total()) {
        auto fill = [&](std::size_t off, std::size_t n, double bound) {
            for (std::size_t i = 0; i < n; ++i) params[off + i] = bound * (2.0 * rng.uniform01() - 1.0);
        };
        const double b_in = 1.0 / std::sqrt(static_cast<double>(in));
        const double b_h = 1.0 / std::sqrt(static_cast<double>(hidden));
        fill(w1(), in * hidden, b_in);
        fill(b1(), hidden, b_in);
        fill(w2(), hidden * 2, b_h);
        fill(b2(), 2, b_h);
    }

    // Row-major batch X[m][in] -> logits[m][2]; keeps activations when training.
    void forward(const std::vector<double>& X, std::size_t m, std::vector<double>& H, std::vector<double>& logits,
                 const std::vector<double>* keep_mask) const {
        H.resize(m * hidden);
        logits.resize(m * 2);
        kernels::matmul(kernels::Exec::parallel, X.data(), params.data() + w1(), params.data() + b1(), H.data(), m,
                        in, hidden);
        for (std::size_t i = 0; i < m * hidden; ++i) {
            H[i] = std::max(0.0, H[i]);
            if (keep_mask != nullptr) H[i] *= (*keep_mask)[i];
        }
        kernels::matmul(kernels::Exec::serial, H.data(), params.data() + w2(), params.data() + b2(), logits.data(),
                        m, hidden, 2);
    }
};

std::vector<int> predict(const Net& net, const Samples& s) {
    std::vector<double> X(s.size() * net.in), H, logits;
    for (std::size_t i = 0; i < s.size(); ++i) std::copy(s.x[i].begin(), s.x[i].end(), X.begin() + static_cast<std::ptrdiff_t>(i * net.in));
    net.forward(X, s.size(), H, logits, nullptr);
    std::vector<int> out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) out[i] = logits[2 * i + 1] > logits[2 * i] ? 1 : 0;
    return out;
}

} // namespace

FfnnResult ffnn_classify(const Samples& raw_train, const Samples& raw_test, const FfnnOptions& opts) {
    require(raw_train.size() > 0, "ffnn needs training data");
    require(opts.batch_size >= 1 && opts.hidden >= 1, "ffnn needs positive batch size and width");
    require(opts.dropout >= 0.0 && opts.dropout < 1.0, "dropout must be in [0, 1)");

    Samples train = raw_train, test = raw_test;
    if (opts.standardize) {
        const auto scaler = Standardizer::fit(raw_train);
        train = scaler.apply(raw_train);
        test = scaler.apply(raw_test);
    }

    Rng rng(opts.seed);
    Net net(train.dim(), opts.hidden, rng);
    AdamW opt(net.total(), AdamWConfig{0.9, 0.999, 1e-8, opts.weight_decay});
    std::vector<double> grad(net.total());
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    const std::size_t in = net.in, hid = net.hidden;
    std::vector<double> X, H, logits, keep, dlogits, dH;
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t stale = 0, epoch = 0;
    const double keep_scale = 1.0 / (1.0 - opts.dropout);

    while (epoch < opts.max_epochs && stale < opts.patience) {
        ++epoch;
        rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
            const std::size_t m = std::min(opts.batch_size, order.size() - start);
            X.assign(m * in, 0.0);
            for (std::size_t r = 0; r < m; ++r) {
                const auto& row = train.x[order[start + r]];
                std::copy(row.begin(), row.end(), X.begin() + static_cast<std::ptrdiff_t>(r * in));
            }
            keep.resize(m * hid);
            for (auto& k : keep) k = rng.uniform01() < opts.dropout ? 0.0 : keep_scale;
            net.forward(X, m, H, logits, &keep);

            dlogits.assign(m * 2, 0.0);
            double batch_loss = 0.0;
            for (std::size_t r = 0; r < m; ++r) {
                const int y = train.y[order[start + r]];
                const double a = logits[2 * r], b = logits[2 * r + 1];
                const double mx = std::max(a, b);
                const double ea = std::exp(a - mx), eb = std::exp(b - mx);
                const double lse = mx + std::log(ea + eb);
                batch_loss += lse - (y == 1 ? b : a);
                dlogits[2 * r] = (ea / (ea + eb) - (y == 0 ? 1.0 : 0.0)) / static_cast<double>(m);
                dlogits[2 * r + 1] = (eb / (ea + eb) - (y == 1 ? 1.0 : 0.0)) / static_cast<double>(m);
            }
            loss_sum += batch_loss / static_cast<double>(m);
            ++batches;

            std::fill(grad.begin(), grad.end(), 0.0);
            kernels::matmul_acc_at(kernels::Exec::serial, H.data(), dlogits.data(), grad.data() + net.w2(), m, hid, 2);
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t c = 0; c < 2; ++c) grad[net.b2() + c] += dlogits[2 * r + c];
            dH.assign(m * hid, 0.0);
            const double* W2 = net.params.data() + net.w2();
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t h = 0; h < hid; ++h) {
                    // H already holds relu(pre) * keep, so H > 0 marks active, kept units.
                    if (H[r * hid + h] > 0.0)
                        dH[r * hid + h] = (dlogits[2 * r] * W2[h * 2] + dlogits[2 * r + 1] * W2[h * 2 + 1]) * keep[r * hid + h];
                }
            kernels::matmul_acc_at(kernels::Exec::parallel, X.data(), dH.data(), grad.data() + net.w1(), m, in, hid);
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t h = 0; h < hid; ++h) grad[net.b1() + h] += dH[r * hid + h];

            opt.step(std::span<double>(net.params), std::span<const double>(grad), opts.lr);
        }
        const double epoch_loss = loss_sum / static_cast<double>(batches);
        if (epoch_loss < best_loss) {
            best_loss = epoch_loss;
            stale = 0;
        } else {
            ++stale;
        }
    }

    FfnnResult r;
    r.epochs = epoch;
    r.train_accuracy = score(predict(net, train), train.y).accuracy;
    r.test = score(predict(net, test), test.y);
    return r;
}

} // namespace selm
