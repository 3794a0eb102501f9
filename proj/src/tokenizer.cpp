#include "recoseg/tokenizer.hpp"

#include "recoseg/tensor.hpp"

#include <zlib.h>

#include <array>
#include <limits>
#include <set>
#include <sstream>

namespace recoseg {

namespace {

constexpr int kMergeCount = 49152 - 256 - 2;

std::string utf8_encode(uint32_t cp) {
    std::string out;
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xc0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3f));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xe0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
        out += static_cast<char>(0x80 | (cp & 0x3f));
    } else {
        out += static_cast<char>(0xf0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3f));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
        out += static_cast<char>(0x80 | (cp & 0x3f));
    }
    return out;
}

// Decodes one code point starting at text[i]; advances i. Invalid bytes decode
// as themselves.
uint32_t utf8_next(std::string_view text, size_t& i) {
    const auto c0 = static_cast<unsigned char>(text[i]);
    int len = 1;
    uint32_t cp = c0;
    if (c0 >= 0xf0) {
        len = 4;
        cp = c0 & 0x07;
    } else if (c0 >= 0xe0) {
        len = 3;
        cp = c0 & 0x0f;
    } else if (c0 >= 0xc0) {
        len = 2;
        cp = c0 & 0x1f;
    }
    if (len > 1 && i + len <= text.size()) {
        for (int k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(text[i + k]) & 0x3f);
        i += len;
        return cp;
    }
    ++i;
    return c0;
}

bool is_space(uint32_t cp) {
    return cp == ' ' || (cp >= 0x09 && cp <= 0x0d) || cp == 0x1c || cp == 0x1d || cp == 0x1e || cp == 0x1f ||
           cp == 0x85 || cp == 0xa0 || cp == 0x1680 || (cp >= 0x2000 && cp <= 0x200a) || cp == 0x2028 ||
           cp == 0x2029 || cp == 0x202f || cp == 0x205f || cp == 0x3000;
}

bool is_digit(uint32_t cp) { return cp >= '0' && cp <= '9'; }

// ASCII letters plus everything non-ASCII outside the Latin-1 symbol block.
bool is_letter(uint32_t cp) {
    if (cp < 0x80) return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
    if (cp < 0xc0) return cp == 0xaa || cp == 0xb5 || cp == 0xba;
    if (cp == 0xd7 || cp == 0xf7) return false;
    return !is_space(cp);
}

uint32_t to_lower(uint32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 32;
    if (cp >= 0xc0 && cp <= 0xde && cp != 0xd7) return cp + 32;
    return cp;
}

std::string read_maybe_gzip(const std::filesystem::path& path) {
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (!f) throw DataError("cannot open tokenizer vocabulary: " + path.string());
    std::string out;
    std::array<char, 1 << 16> buf{};
    int n;
    while ((n = gzread(f, buf.data(), static_cast<unsigned>(buf.size()))) > 0) out.append(buf.data(), n);
    const bool failed = n < 0;
    gzclose(f);
    if (failed) throw DataError("corrupt tokenizer vocabulary: " + path.string());
    return out;
}

std::string html_unescape(std::string_view s) {
    static const std::pair<std::string_view, std::string_view> entities[] = {
        {"&amp;", "&"}, {"&lt;", "<"}, {"&gt;", ">"}, {"&quot;", "\""}, {"&#39;", "'"}, {"&#x27;", "'"}, {"&apos;", "'"}};
    std::string out;
    for (size_t i = 0; i < s.size();) {
        bool matched = false;
        if (s[i] == '&') {
            for (const auto& [from, to] : entities) {
                if (s.substr(i, from.size()) == from) {
                    out += to;
                    i += from.size();
                    matched = true;
                    break;
                }
            }
        }
        if (!matched) out += s[i++];
    }
    return out;
}

}  // namespace

std::string clean_text(std::string_view text) {
    const auto unescaped = html_unescape(html_unescape(text));
    std::string out;
    bool pending_space = false;
    for (size_t i = 0; i < unescaped.size();) {
        const auto cp = utf8_next(unescaped, i);
        if (is_space(cp)) {
            pending_space = true;
            continue;
        }
        if (pending_space && !out.empty()) out += ' ';
        pending_space = false;
        out += utf8_encode(to_lower(cp));
    }
    return out;
}

std::vector<std::string> split_words(std::string_view text) {
    static const std::array<std::string_view, 7> contractions = {"'s", "'t", "'re", "'ve", "'m", "'ll", "'d"};
    std::vector<std::string> words;
    size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '\'') {
            bool hit = false;
            for (auto c : contractions) {
                if (text.substr(i, c.size()) == c) {
                    words.emplace_back(c);
                    i += c.size();
                    hit = true;
                    break;
                }
            }
            if (hit) continue;
        }
        size_t j = i;
        const auto cp = utf8_next(text, j);
        if (is_space(cp)) {
            i = j;
        } else if (is_letter(cp)) {
            size_t end = j;
            for (size_t k = j; k < text.size();) {
                size_t next = k;
                if (!is_letter(utf8_next(text, next))) break;
                end = k = next;
            }
            words.emplace_back(text.substr(i, end - i));
            i = end;
        } else if (is_digit(cp)) {
            words.emplace_back(text.substr(i, j - i));
            i = j;
        } else {
            size_t end = j;
            for (size_t k = j; k < text.size();) {
                size_t next = k;
                const auto c = utf8_next(text, next);
                if (is_space(c) || is_letter(c) || is_digit(c)) break;
                end = k = next;
            }
            words.emplace_back(text.substr(i, end - i));
            i = end;
        }
    }
    return words;
}

BpeTokenizer::BpeTokenizer(const std::filesystem::path& merges_file) {
    // Printable bytes map to themselves; the rest shift to code points >= 256.
    std::vector<int> bs;
    for (int b = '!'; b <= '~'; ++b) bs.push_back(b);
    for (int b = 0xa1; b <= 0xac; ++b) bs.push_back(b);
    for (int b = 0xae; b <= 0xff; ++b) bs.push_back(b);
    std::set<int> printable(bs.begin(), bs.end());
    std::vector<int> cs = bs;
    int n = 0;
    for (int b = 0; b < 256; ++b) {
        if (!printable.count(b)) {
            bs.push_back(b);
            cs.push_back(256 + n++);
        }
    }
    byte_encoder_.assign(256, {});
    std::vector<std::string> vocab;
    for (size_t i = 0; i < bs.size(); ++i) {
        byte_encoder_[bs[i]] = utf8_encode(static_cast<uint32_t>(cs[i]));
        vocab.push_back(byte_encoder_[bs[i]]);
    }
    const size_t base = vocab.size();
    for (size_t i = 0; i < base; ++i) vocab.push_back(vocab[i] + "</w>");

    const auto content = read_maybe_gzip(merges_file);
    std::istringstream lines(content);
    std::string line;
    std::getline(lines, line);  // version header
    int rank = 0;
    while (rank < kMergeCount && std::getline(lines, line)) {
        const auto space = line.find(' ');
        if (space == std::string::npos) throw DataError("malformed merge line in " + merges_file.string());
        auto first = line.substr(0, space);
        auto second = line.substr(space + 1);
        vocab.push_back(first + second);
        ranks_.emplace(std::make_pair(std::move(first), std::move(second)), rank++);
    }
    if (rank != kMergeCount) throw DataError("tokenizer vocabulary is truncated: " + merges_file.string());
    vocab.emplace_back("<start_of_text>");
    vocab.emplace_back("<end_of_text>");
    for (size_t i = 0; i < vocab.size(); ++i) encoder_.emplace(vocab[i], static_cast<int>(i));
    start_token_ = static_cast<int>(vocab.size()) - 2;
    end_token_ = static_cast<int>(vocab.size()) - 1;
}

std::vector<std::string> BpeTokenizer::bpe(const std::string& token) const {
    std::vector<std::string> word;
    for (size_t i = 0; i < token.size();) {
        size_t j = i;
        utf8_next(token, j);
        word.push_back(token.substr(i, j - i));
        i = j;
    }
    if (word.empty()) return word;
    word.back() += "</w>";
    while (word.size() > 1) {
        int best = std::numeric_limits<int>::max();
        size_t best_at = 0;
        for (size_t i = 0; i + 1 < word.size(); ++i) {
            auto it = ranks_.find({word[i], word[i + 1]});
            if (it != ranks_.end() && it->second < best) {
                best = it->second;
                best_at = i;
            }
        }
        if (best == std::numeric_limits<int>::max()) break;
        const auto first = word[best_at];
        const auto second = word[best_at + 1];
        std::vector<std::string> merged;
        for (size_t i = 0; i < word.size();) {
            if (i + 1 < word.size() && word[i] == first && word[i + 1] == second) {
                merged.push_back(first + second);
                i += 2;
            } else {
                merged.push_back(word[i++]);
            }
        }
        word = std::move(merged);
    }
    return word;
}

std::vector<int> BpeTokenizer::encode(std::string_view text) const {
    std::vector<int> ids;
    for (const auto& w : split_words(clean_text(text))) {
        std::string mapped;
        for (unsigned char b : w) mapped += byte_encoder_[b];
        for (const auto& piece : bpe(mapped)) {
            auto it = encoder_.find(piece);
            if (it == encoder_.end()) throw DataError("tokenizer produced unknown piece");
            ids.push_back(it->second);
        }
    }
    return ids;
}

std::vector<int> BpeTokenizer::tokenize(std::string_view text, int context_length) const {
    std::vector<int> ids{start_token_};
    auto body = encode(text);
    ids.insert(ids.end(), body.begin(), body.end());
    ids.push_back(end_token_);
    if (static_cast<int>(ids.size()) > context_length)
        throw DataError("text needs " + std::to_string(ids.size()) + " tokens, context holds " +
                        std::to_string(context_length) + ": \"" + std::string(text) + "\"");
    return ids;
}

}  // namespace recoseg
