#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "selm/bytes.hpp"
#include "selm/random.hpp"

namespace selm {

enum class MessageDomain { text_file, random_words, random_bytes };

MessageDomain parse_domain(const std::string& name);
std::string domain_name(MessageDomain d);

struct MessageSpec {
    MessageDomain domain = MessageDomain::random_bytes;
    std::size_t token_limit = 100;
    std::uint64_t seed = 0;
    // text_file: the text corpus. random_words: a newline-separated wordlist,
    // or a text corpus when `derive_wordlist` is set.
    std::optional<std::filesystem::path> source_path;
    bool derive_wordlist = false;

    void validate() const;
};

// Unique words of a text, split on whitespace and punctuation, sorted.
std::vector<std::string> build_wordlist(std::span<const std::uint8_t> text);
std::vector<std::string> parse_wordlist(std::span<const std::uint8_t> file);

// A contiguous passage starting at a word boundary, exactly token_limit bytes
// long when the corpus allows it.
Bytes sample_text(std::span<const std::uint8_t> corpus, std::size_t token_limit, Rng& rng);
// Uniform draws from the wordlist joined by single spaces, stopping before
// the next word would exceed token_limit.
Bytes sample_random_words(std::span<const std::string> wordlist, std::size_t token_limit, Rng& rng);
// Exactly token_limit uniform bytes.
Bytes sample_random_bytes(std::size_t token_limit, Rng& rng);

Bytes sample_message(const MessageSpec& spec);

} // namespace selm
