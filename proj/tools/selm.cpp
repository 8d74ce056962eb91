#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "selm/attack.hpp"
#include "selm/cipher.hpp"
#include "selm/corpus.hpp"
#include "selm/error.hpp"

using namespace selm;

namespace {

enum Exit : int {
    kOk = 0,
    kUnknown = 1,
    kUsage = 2,
    kIo = 3,
    kFormat = 4,
    kInput = 5,
    kBudget = 6,
    kMismatch = 7,
    kEntropy = 8,
};

int exit_code_for(const std::string& cls) {
    static const std::map<std::string, int> codes{
        {"ConfigError", kUsage},       {"IoError", kIo},
        {"FormatError", kFormat},      {"InputError", kInput},
        {"PreconditionError", kInput}, {"DimensionError", kInput},
        {"EncryptionBudgetExceeded", kBudget}, {"ModelMismatch", kMismatch},
        {"EntropyError", kEntropy},
    };
    const auto it = codes.find(cls);
    return it == codes.end() ? kUnknown : it->second;
}

int verbosity = 0;

void log(int level, const std::string& msg) {
    if (verbosity >= level) std::cerr << msg << "\n";
}

struct Globals {
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> insecure_seed;
    int jobs = 0;

    // --seed, then SELM_SEED, then OS entropy.
    std::uint64_t resolve_seed() const {
        if (seed) return *seed;
        if (const char* env = std::getenv("SELM_SEED")) {
            try {
                std::size_t used = 0;
                const auto v = std::stoull(env, &used);
                if (used == std::string(env).size()) return v;
            } catch (const std::exception&) {
            }
            throw ConfigError("SELM_SEED is not an unsigned integer");
        }
        return os_random_u64();
    }
};

struct TrainFlags {
    std::size_t d = 1024;
    double lr0 = TrainConfig{}.lr0;
    std::size_t lr_decay_epochs = TrainConfig{}.lr_decay_epochs;
    double grad_clip = TrainConfig{}.grad_clip_l2;
    std::size_t max_epochs = TrainConfig{}.max_epochs;
    std::size_t verify_every = 1;
    std::string reg = "none";
    double alpha = 0.0;
    double sigma = 0.0;
    double lambda = 0.0;
    std::size_t warmup = 1;

    void add(CLI::App* app) {
        app->add_option("--d", d, "subspace dimension")->capture_default_str();
        app->add_option("--lr0", lr0, "initial learning rate")->capture_default_str();
        app->add_option("--lr-decay-epochs", lr_decay_epochs, "epochs until the learning rate reaches 0")
            ->capture_default_str();
        app->add_option("--grad-clip", grad_clip, "L2 gradient clip")->capture_default_str();
        app->add_option("--max-epochs", max_epochs, "training budget")->capture_default_str();
        app->add_option("--verify-every", verify_every, "epochs between decode checks")->capture_default_str();
        app->add_option("--reg", reg, "regularizer: none, l2, wasserstein")->capture_default_str();
        app->add_option("--alpha", alpha, "L2 target norm");
        app->add_option("--sigma", sigma, "Wasserstein target std");
        app->add_option("--lambda", lambda, "regularizer weight");
        app->add_option("--warmup", warmup, "regularizer warmup epochs")->capture_default_str();
    }

    TrainConfig config(std::uint64_t seed) const {
        TrainConfig c;
        c.d = d;
        c.lr0 = lr0;
        c.lr_decay_epochs = lr_decay_epochs;
        c.grad_clip_l2 = grad_clip;
        c.max_epochs = max_epochs;
        c.verify_every = verify_every;
        c.seed = seed;
        if (reg == "none")
            c.regularizer = NoRegularizer{};
        else if (reg == "l2")
            c.regularizer = L2TargetRegularizer{alpha, lambda, warmup};
        else if (reg == "wasserstein")
            c.regularizer = WassersteinRegularizer{sigma, lambda, warmup};
        else
            throw ConfigError("unknown regularizer '" + reg + "'");
        c.validate();
        return c;
    }
};

MemorizeHooks epoch_logger() {
    MemorizeHooks h;
    if (verbosity >= 2)
        h.on_epoch = [](const EpochLog& e) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "epoch %zu loss %.6f lr %.3g lambda %.3g penalty %.3g grad %.3g%s", e.epoch,
                          e.loss, e.lr, e.lambda, e.penalty, e.grad_norm, e.verified ? " verified" : "");
            log(2, buf);
        };
    return h;
}

// "bytes", "text:PATH", "words:PATH" (wordlist derived from a text), "wordlist:PATH", "file:PATH".
Bytes message_from_spec(const std::string& spec, std::size_t length, std::uint64_t seed) {
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    const std::string path = colon == std::string::npos ? "" : spec.substr(colon + 1);
    if (kind == "file") {
        if (path.empty()) throw ConfigError("file: needs a path");
        Bytes m = read_file(path);
        if (length > 0 && m.size() > length) m.resize(length);
        return m;
    }
    MessageSpec ms;
    ms.token_limit = length;
    ms.seed = seed;
    if (kind == "wordlist") {
        ms.domain = MessageDomain::random_words;
    } else {
        ms.domain = parse_domain(kind);
        ms.derive_wordlist = ms.domain == MessageDomain::random_words;
    }
    if (!path.empty()) ms.source_path = path;
    return sample_message(ms);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

void set_jobs(int jobs) {
#ifdef _OPENMP
    if (jobs > 0) omp_set_num_threads(jobs);
#else
    (void)jobs;
#endif
}

SecretKey key_for_run(const Globals& g, const std::string& key_path) {
    if (!key_path.empty()) return load_key(key_path);
    if (g.insecure_seed) {
        Rng rng(*g.insecure_seed);
        return keygen_insecure(rng);
    }
    return keygen();
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Flat "key = value" lines; '#' starts a comment line, values may be double-quoted.
std::vector<std::string> config_arguments(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file " + path);
    std::vector<std::string> out;
    std::string line;
    for (std::size_t no = 1; std::getline(in, line); ++no) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        out.push_back("--" + key + "=" + value);
    }
    return out;
}

// Moves "--config FILE" out of argv and splices the file's settings in right
// after the subcommand name; flags given on the command line come later and win.
std::vector<std::string> expand_config(int argc, char** argv, const std::vector<std::string>& subcommands) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::vector<std::string> files;
    for (std::size_t i = 0; i < args.size();) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            files.push_back(args[i + 1]);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i + 2));
        } else if (args[i].rfind("--config=", 0) == 0) {
            files.push_back(args[i].substr(9));
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
        } else {
            ++i;
        }
    }
    if (files.empty()) return args;
    const auto sub = std::find_first_of(args.begin(), args.end(), subcommands.begin(), subcommands.end());
    if (sub == args.end()) throw ConfigError("--config needs a subcommand");
    std::vector<std::string> extra;
    for (const auto& f : files) {
        const auto a = config_arguments(f);
        extra.insert(extra.end(), a.begin(), a.end());
    }
    args.insert(sub + 1, extra.begin(), extra.end());
    return args;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"selm: encrypt messages as language-model subspace vectors", "selm"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--seed", g.seed, "master seed (fallback: SELM_SEED)");
    app.add_option("--insecure-seed", g.insecure_seed, "derive keys and nonces from this seed (tests only)");
    app.add_option("--jobs", g.jobs, "worker threads for parallel steps");
    app.add_flag("-v,--verbose", verbosity, "more logging (repeatable)");

    // Later occurrences win, so command-line flags override config settings.
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    std::string config_path;  // consumed by expand_config; listed for --help
    auto with_config = [&config_path](CLI::App* sub) {
        sub->add_option("--config", config_path, "key=value configuration file; flags override it");
        return sub;
    };

    // keygen
    std::string keygen_out;
    auto* keygen_cmd = with_config(app.add_subcommand("keygen", "write a fresh 32-byte key"));
    keygen_cmd->add_option("--out,-o", keygen_out, "key file")->required();

    // pretrain
    std::string pre_corpus, pre_out;
    std::size_t pre_steps = 2000;
    PretrainOptions pre_opts;
    pre_opts.lr = 2e-3;
    pre_opts.window = 64;
    auto* pre_cmd = with_config(app.add_subcommand("pretrain", "train the public base model on a text corpus"));
    pre_cmd->add_option("--corpus", pre_corpus, "text corpus")->required();
    pre_cmd->add_option("--steps", pre_steps, "optimizer steps")->capture_default_str();
    pre_cmd->add_option("--lr", pre_opts.lr, "peak learning rate")->capture_default_str();
    pre_cmd->add_option("--window", pre_opts.window, "training window length")->capture_default_str();
    pre_cmd->add_option("--batch", pre_opts.batch_size, "windows per step")->capture_default_str();
    pre_cmd->add_option("--out,-o", pre_out, "checkpoint file")->required();

    // encrypt
    std::string enc_key, enc_model, enc_in, enc_out;
    TrainFlags enc_train;
    auto* enc_cmd = with_config(app.add_subcommand("encrypt", "encrypt a file"));
    enc_cmd->add_option("--key,-k", enc_key, "key file")->required();
    enc_cmd->add_option("--model,-m", enc_model, "base model checkpoint")->required();
    enc_cmd->add_option("--in,-i", enc_in, "plaintext file")->required();
    enc_cmd->add_option("--out,-o", enc_out, "ciphertext file")->required();
    enc_train.add(enc_cmd);

    // decrypt
    std::string dec_key, dec_model, dec_in, dec_out;
    auto* dec_cmd = with_config(app.add_subcommand("decrypt", "decrypt a file"));
    dec_cmd->add_option("--key,-k", dec_key, "key file")->required();
    dec_cmd->add_option("--model,-m", dec_model, "base model checkpoint")->required();
    dec_cmd->add_option("--in,-i", dec_in, "ciphertext file")->required();
    dec_cmd->add_option("--out,-o", dec_out, "plaintext file")->required();

    // gen-corpus
    std::string gc_key, gc_model, gc_m0, gc_m1, gc_out;
    std::size_t gc_n = 10, gc_length = 32;
    double gc_train_frac = 0.8;
    TrainFlags gc_train;
    auto* gc_cmd = with_config(app.add_subcommand("gen-corpus", "encrypt two messages many times into a dataset"));
    gc_cmd->add_option("--key,-k", gc_key, "key file (default: fresh key)");
    gc_cmd->add_option("--model,-m", gc_model, "base model checkpoint")->required();
    gc_cmd->add_option("--m0", gc_m0, "message 0: bytes | text:PATH | words:PATH | wordlist:PATH | file:PATH")
        ->required();
    gc_cmd->add_option("--m1", gc_m1, "message 1, same syntax")->required();
    gc_cmd->add_option("--length", gc_length, "message length in tokens")->capture_default_str();
    gc_cmd->add_option("--n-per-class", gc_n, "encryptions per message")->capture_default_str();
    gc_cmd->add_option("--train-frac", gc_train_frac, "training share per class")->capture_default_str();
    gc_cmd->add_option("--out,-o", gc_out, "dataset file")->required();
    gc_train.add(gc_cmd);

    // attack
    std::string at_key, at_model, at_m0 = "bytes", at_out, at_table;
    std::vector<std::string> at_pairs, at_datasets;
    std::string at_classifiers = "knn,lda,ffnn,svm,gradboost", at_modes = "full,features", at_knn_ks = "5,25,100";
    std::size_t at_n = 10, at_length = 32, at_ffnn_max_epochs = FfnnOptions{}.max_epochs;
    double at_train_frac = 0.8;
    bool at_shuffle = false;
    TrainFlags at_train;
    auto* at_cmd = with_config(app.add_subcommand("attack", "run the IND-CPA distinguishing game"));
    at_cmd->add_option("--key,-k", at_key, "key file (default: fresh key)");
    at_cmd->add_option("--model,-m", at_model, "base model checkpoint (needed to generate corpora)");
    at_cmd->add_option("--m0", at_m0, "challenge message 0 spec (see gen-corpus)")->capture_default_str();
    at_cmd->add_option("--pair", at_pairs, "NAME=M1SPEC, encrypted against --m0 (repeatable)")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    at_cmd->add_option("--dataset", at_datasets, "NAME=PATH of a dataset from gen-corpus (repeatable)")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    at_cmd->add_option("--length", at_length, "message length in tokens")->capture_default_str();
    at_cmd->add_option("--n-per-class", at_n, "encryptions per message")->capture_default_str();
    at_cmd->add_option("--train-frac", at_train_frac, "training share per class")->capture_default_str();
    at_cmd->add_option("--classifiers", at_classifiers, "comma list")->capture_default_str();
    at_cmd->add_option("--modes", at_modes, "comma list of full, features")->capture_default_str();
    at_cmd->add_option("--knn-ks", at_knn_ks, "KNN candidate k values")->capture_default_str();
    at_cmd->add_option("--ffnn-max-epochs", at_ffnn_max_epochs, "FFNN epoch cap")->capture_default_str();
    at_cmd->add_flag("--shuffle-labels", at_shuffle, "permutation sanity run");
    at_cmd->add_option("--out,-o", at_out, "key=value report")->required();
    at_cmd->add_option("--table", at_table, "human-readable report (default: stdout)");
    at_train.add(at_cmd);

    // calibrate
    std::string cal_model, cal_key;
    std::vector<std::string> cal_messages;
    std::size_t cal_n = 10, cal_length = 32;
    TrainFlags cal_train;
    auto* cal_cmd = with_config(app.add_subcommand("calibrate", "regularizer targets from unregularized ciphertext norms"));
    cal_cmd->add_option("--model,-m", cal_model, "base model checkpoint")->required();
    cal_cmd->add_option("--key,-k", cal_key, "key file (default: fresh key)");
    cal_cmd->add_option("--message", cal_messages, "message spec (repeatable; see gen-corpus)")
        ->required()
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    cal_cmd->add_option("--n", cal_n, "encryptions per message spec")->capture_default_str();
    cal_cmd->add_option("--length", cal_length, "message length in tokens")->capture_default_str();
    cal_train.add(cal_cmd);

    try {
        std::vector<std::string> subs;
        for (const auto* sub : app.get_subcommands({})) subs.push_back(sub->get_name());
        auto args = expand_config(argc, argv, subs);
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const Error& e) {
        std::cerr << "error: " << e.error_class() << ": " << e.what() << "\n";
        return exit_code_for(e.error_class());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "error: UsageError: " << e.what() << "\n";
        return kUsage;
    }

    try {
        set_jobs(g.jobs);
        if (keygen_cmd->parsed()) {
            SecretKey k;
            if (g.insecure_seed) {
                Rng rng(*g.insecure_seed);
                k = keygen_insecure(rng);
            } else {
                k = keygen();
            }
            save_key(keygen_out, k);
            log(1, "wrote key " + keygen_out);
        } else if (pre_cmd->parsed()) {
            const std::uint64_t seed = g.resolve_seed();
            pre_opts.log_every = verbosity >= 1 ? 100 : 0;
            const Bytes corpus = read_file(pre_corpus);
            const ModelParams p = pretrain(ModelConfig{}, corpus, pre_steps, seed, pre_opts);
            write_file_atomic(pre_out, serialize_checkpoint(p), false);
            log(1, "wrote checkpoint " + pre_out + " (seed " + std::to_string(seed) + ")");
        } else if (enc_cmd->parsed()) {
            const SecretKey k = load_key(enc_key);
            const Checkpoint model = Checkpoint::load(enc_model);
            const Bytes msg = read_file(enc_in);
            std::optional<Rng> nonce_rng;
            NonceSource nonce;
            if (g.insecure_seed) {
                nonce_rng.emplace(*g.insecure_seed);
                nonce.rng = &*nonce_rng;
            }
            const auto res = encrypt_detailed(k, msg, model, enc_train.config(g.seed.value_or(0)), nonce, epoch_logger());
            write_file_atomic(enc_out, serialize(res.ciphertext), false);
            log(1, "converged in " + std::to_string(res.stats.epochs_used) + " epochs");
        } else if (dec_cmd->parsed()) {
            const SecretKey k = load_key(dec_key);
            const Checkpoint model = Checkpoint::load(dec_model);
            const Ciphertext c = deserialize_ciphertext(read_file(dec_in));
            const Bytes plain = decrypt(k, c, model);
            write_file_atomic(dec_out, plain, true);
            std::cerr << "warning: ciphertexts carry no integrity check; a wrong key decrypts to unrelated bytes "
                         "without an error\n";
        } else if (gc_cmd->parsed()) {
            const std::uint64_t seed = g.resolve_seed();
            const SecretKey k = key_for_run(g, gc_key);
            const Checkpoint model = Checkpoint::load(gc_model);
            Rng rng(seed);
            const Bytes m0 = message_from_spec(gc_m0, gc_length, rng.fork());
            const Bytes m1 = message_from_spec(gc_m1, gc_length, rng.fork());
            CorpusConfig cc;
            cc.train = gc_train.config(seed);
            cc.n_per_class = gc_n;
            cc.train_frac = gc_train_frac;
            cc.master_seed = rng.fork();
            cc.on_encrypted = [](int label, std::size_t i, std::size_t epochs) {
                log(1, "class " + std::to_string(label) + " #" + std::to_string(i) + ": " + std::to_string(epochs) +
                           " epochs");
            };
            const CiphertextDataset ds = generate_corpus(k, m0, m1, model, cc);
            write_file_atomic(gc_out, serialize(ds), false);
            log(1, "wrote dataset " + gc_out);
        } else if (at_cmd->parsed()) {
            const std::uint64_t seed = g.resolve_seed();
            Rng rng(seed);
            std::vector<GamePair> pairs;
            for (const auto& spec : at_datasets) {
                const auto eq = spec.find('=');
                if (eq == std::string::npos) throw ConfigError("--dataset expects NAME=PATH");
                pairs.push_back({spec.substr(0, eq), deserialize_dataset(read_file(spec.substr(eq + 1)), at_train_frac)});
            }
            if (!at_pairs.empty()) {
                if (at_model.empty()) throw ConfigError("generating corpora needs --model");
                const SecretKey k = key_for_run(g, at_key);
                const Checkpoint model = Checkpoint::load(at_model);
                const Bytes m0 = message_from_spec(at_m0, at_length, rng.fork());
                for (const auto& spec : at_pairs) {
                    const auto eq = spec.find('=');
                    if (eq == std::string::npos) throw ConfigError("--pair expects NAME=M1SPEC");
                    const Bytes m1 = message_from_spec(spec.substr(eq + 1), at_length, rng.fork());
                    CorpusConfig cc;
                    cc.train = at_train.config(seed);
                    cc.n_per_class = at_n;
                    cc.train_frac = at_train_frac;
                    cc.master_seed = rng.fork();
                    const std::string name = spec.substr(0, eq);
                    cc.on_encrypted = [&name](int label, std::size_t i, std::size_t epochs) {
                        log(1, name + " class " + std::to_string(label) + " #" + std::to_string(i) + ": " +
                                   std::to_string(epochs) + " epochs");
                    };
                    pairs.push_back({name, generate_corpus(k, m0, m1, model, cc)});
                }
            }
            if (pairs.empty()) throw ConfigError("attack needs at least one --pair or --dataset");
            GameOptions go;
            go.classifiers.clear();
            for (const auto& c : split_list(at_classifiers)) go.classifiers.push_back(parse_classifier(c));
            go.modes.clear();
            for (const auto& m : split_list(at_modes)) {
                if (m == "full")
                    go.modes.push_back(InputMode::full);
                else if (m == "features")
                    go.modes.push_back(InputMode::features);
                else
                    throw ConfigError("unknown input mode '" + m + "'");
            }
            go.knn_ks.clear();
            for (const auto& kk : split_list(at_knn_ks)) go.knn_ks.push_back(std::stoul(kk));
            go.ffnn.max_epochs = at_ffnn_max_epochs;
            go.shuffle_labels = at_shuffle;
            go.seed = rng.fork();
            const AttackReport report = run_game(pairs, go);
            write_file_atomic(at_out, to_bytes(report.grid()), false);
            if (at_table.empty())
                std::cout << report.table();
            else
                write_file_atomic(at_table, to_bytes(report.table()), false);
        } else if (cal_cmd->parsed()) {
            const std::uint64_t seed = g.resolve_seed();
            Rng rng(seed);
            const SecretKey k = key_for_run(g, cal_key);
            const Checkpoint model = Checkpoint::load(cal_model);
            TrainConfig tc = cal_train.config(seed);
            tc.regularizer = NoRegularizer{};
            std::vector<double> norms;
            for (const auto& spec : cal_messages)
                for (std::size_t i = 0; i < cal_n; ++i) {
                    const Bytes m = message_from_spec(spec, cal_length, rng.fork());
                    const auto res = encrypt_detailed(k, m, model, tc, NonceSource{rng.next_u64(), nullptr});
                    norms.push_back(extract_features(res.ciphertext.theta_d_star)[5]);
                    log(1, spec + " #" + std::to_string(i) + ": norm " + std::to_string(norms.back()));
                }
            std::sort(norms.begin(), norms.end());
            const std::size_t n = norms.size();
            const double alpha = n % 2 == 1 ? norms[n / 2] : 0.5 * (norms[n / 2 - 1] + norms[n / 2]);
            char buf[128];
            std::snprintf(buf, sizeof buf, "alpha = %.9g\nsigma = %.9g\n", alpha,
                          alpha / std::sqrt(static_cast<double>(tc.d)));
            std::cout << buf;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.error_class() << ": " << e.what() << "\n";
        return exit_code_for(e.error_class());
    } catch (const std::exception& e) {
        std::cerr << "error: InternalError: " << e.what() << "\n";
        return kUnknown;
    }
    return kOk;
}
