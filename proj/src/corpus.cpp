#include "selm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "selm/error.hpp"

namespace selm {

MessageDomain parse_domain(const std::string& name) {
    if (name == "text" || name == "text_file") return MessageDomain::text_file;
    if (name == "words" || name == "random_words") return MessageDomain::random_words;
    if (name == "bytes" || name == "random_bytes") return MessageDomain::random_bytes;
    throw ConfigError("unknown message domain '" + name + "'");
}

std::string domain_name(MessageDomain d) {
    switch (d) {
    case MessageDomain::text_file: return "text_file";
    case MessageDomain::random_words: return "random_words";
    case MessageDomain::random_bytes: return "random_bytes";
    }
    return "?";
}

void MessageSpec::validate() const {
    if (token_limit < 1) throw ConfigError("token_limit must be at least 1");
    const bool needs_source = domain != MessageDomain::random_bytes;
    if (needs_source && !source_path) throw ConfigError(domain_name(domain) + " needs a source path");
    if (!needs_source && source_path) throw ConfigError("random_bytes takes no source path");
}

std::vector<std::string> build_wordlist(std::span<const std::uint8_t> text) {
    std::set<std::string> words;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) words.insert(cur);
        cur.clear();
    };
    for (std::uint8_t c : text) {
        if (std::isspace(c) || (std::ispunct(c) && c != '\'' && c != '-'))
            flush();
        else
            cur.push_back(static_cast<char>(c));
    }
    flush();
    return {words.begin(), words.end()};
}

std::vector<std::string> parse_wordlist(std::span<const std::uint8_t> file) {
    std::vector<std::string> out;
    std::string cur;
    for (std::uint8_t c : file) {
        if (c == '\n' || c == '\r') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (c != ' ' && c != '\t') {
            cur.push_back(static_cast<char>(c));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

Bytes sample_text(std::span<const std::uint8_t> corpus, std::size_t token_limit, Rng& rng) {
    if (corpus.empty()) throw InputError("text corpus is empty");
    if (corpus.size() <= token_limit) return Bytes(corpus.begin(), corpus.end());
    // Word-boundary starts (after whitespace) that leave room for a full passage.
    std::vector<std::size_t> starts;
    const std::size_t last = corpus.size() - token_limit;
    for (std::size_t i = 0; i <= last; ++i)
        if ((i == 0 || std::isspace(corpus[i - 1])) && !std::isspace(corpus[i])) starts.push_back(i);
    const std::size_t at = starts.empty() ? rng.below(last + 1) : starts[rng.below(starts.size())];
    return Bytes(corpus.begin() + static_cast<std::ptrdiff_t>(at),
                 corpus.begin() + static_cast<std::ptrdiff_t>(at + token_limit));
}

Bytes sample_random_words(std::span<const std::string> wordlist, std::size_t token_limit, Rng& rng) {
    if (wordlist.empty()) throw InputError("wordlist is empty");
    const auto shortest = std::min_element(wordlist.begin(), wordlist.end(),
                                           [](const auto& a, const auto& b) { return a.size() < b.size(); });
    if (shortest->size() > token_limit) throw InputError("no word fits within the token limit");
    Bytes out;
    for (;;) {
        const std::string& w = wordlist[rng.below(wordlist.size())];
        const std::size_t need = w.size() + (out.empty() ? 0 : 1);
        if (out.size() + need > token_limit) {
            if (out.empty()) continue;  // the first word must fit
            break;
        }
        if (!out.empty()) out.push_back(' ');
        out.insert(out.end(), w.begin(), w.end());
    }
    return out;
}

Bytes sample_random_bytes(std::size_t token_limit, Rng& rng) {
    Bytes out(token_limit);
    for (auto& b : out) b = static_cast<std::uint8_t>(rng.below(256));
    return out;
}

Bytes sample_message(const MessageSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    switch (spec.domain) {
    case MessageDomain::random_bytes: return sample_random_bytes(spec.token_limit, rng);
    case MessageDomain::text_file: return sample_text(read_file(*spec.source_path), spec.token_limit, rng);
    case MessageDomain::random_words: {
        const Bytes src = read_file(*spec.source_path);
        const auto words = spec.derive_wordlist ? build_wordlist(src) : parse_wordlist(src);
        return sample_random_words(words, spec.token_limit, rng);
    }
    }
    throw ConfigError("unknown message domain");
}

} // namespace selm
