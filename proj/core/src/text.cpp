#include "evsynth/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <unordered_set>

namespace evsynth::text {

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }

bool is_token_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

const std::unordered_set<std::string_view>& stopwords() {
    // Compact English list; enough to keep function words out of lexical
    // scores and topic representations.
    static const std::unordered_set<std::string_view> kWords{
        "a",       "about",   "above",  "after",   "again",  "against", "all",     "am",
        "an",      "and",     "any",    "are",     "as",     "at",      "be",      "because",
        "been",    "before",  "being",  "below",   "between", "both",   "but",     "by",
        "can",     "could",   "did",    "do",      "does",   "doing",   "down",    "during",
        "each",    "few",     "for",    "from",    "further", "had",    "has",     "have",
        "having",  "he",      "her",    "here",    "hers",   "herself", "him",     "himself",
        "his",     "how",     "i",      "if",      "in",     "into",    "is",      "it",
        "its",     "itself",  "just",   "me",      "more",   "most",    "my",      "myself",
        "of",      "off",     "on",     "once",    "only",   "or",      "other",   "our",
        "ours",    "out",     "over",   "own",     "same",   "she",     "should",  "so",
        "some",    "such",    "than",   "that",    "the",    "their",   "theirs",  "them",
        "then",    "there",   "these",  "they",    "this",   "those",   "through", "to",
        "too",     "under",   "until",  "up",      "very",   "was",     "we",      "were",
        "what",    "when",    "where",  "which",   "while",  "who",     "whom",    "why",
        "will",    "with",    "would",  "you",     "your",   "yours",   "also",    "may",
        "might",   "must",    "shall",  "us",      "via",    "per",     "within",  "among",
        "across",  "tell",    "whether", "however", "thus",  "therefore", "hence", "etc",
    };
    return kWords;
}

// ---------------------------------------------------------------------------
// Porter stemmer
// ---------------------------------------------------------------------------

class PorterStemmer {
public:
    explicit PorterStemmer(std::string word) : b_(std::move(word)) {}

    std::string run() {
        if (b_.size() <= 2) return b_;
        k_ = static_cast<int>(b_.size()) - 1;
        step1ab();
        if (k_ > 0) {
            step1c();
            step2();
            step3();
            step4();
            step5();
        }
        return b_.substr(0, static_cast<std::size_t>(k_) + 1);
    }

private:
    bool cons(int i) const {
        switch (b_[static_cast<std::size_t>(i)]) {
            case 'a': case 'e': case 'i': case 'o': case 'u': return false;
            case 'y': return i == 0 ? true : !cons(i - 1);
            default: return true;
        }
    }

    // Number of VC sequences in b[0..j].
    int m() const {
        int n = 0;
        int i = 0;
        while (true) {
            if (i > j_) return n;
            if (!cons(i)) break;
            ++i;
        }
        ++i;
        while (true) {
            while (true) {
                if (i > j_) return n;
                if (cons(i)) break;
                ++i;
            }
            ++i;
            ++n;
            while (true) {
                if (i > j_) return n;
                if (!cons(i)) break;
                ++i;
            }
            ++i;
        }
    }

    bool vowel_in_stem() const {
        for (int i = 0; i <= j_; ++i) {
            if (!cons(i)) return true;
        }
        return false;
    }

    bool doublec(int j) const {
        if (j < 1) return false;
        if (b_[static_cast<std::size_t>(j)] != b_[static_cast<std::size_t>(j - 1)]) return false;
        return cons(j);
    }

    bool cvc(int i) const {
        if (i < 2 || !cons(i) || cons(i - 1) || !cons(i - 2)) return false;
        const char ch = b_[static_cast<std::size_t>(i)];
        return !(ch == 'w' || ch == 'x' || ch == 'y');
    }

    bool ends(std::string_view s) {
        const int len = static_cast<int>(s.size());
        if (len > k_ + 1) return false;
        if (b_.compare(static_cast<std::size_t>(k_ - len + 1), s.size(), s) != 0) return false;
        j_ = k_ - len;
        return true;
    }

    void setto(std::string_view s) {
        const auto pos = static_cast<std::size_t>(j_ + 1);
        b_.replace(pos, static_cast<std::size_t>(k_ - j_), s);
        k_ = j_ + static_cast<int>(s.size());
        b_.resize(static_cast<std::size_t>(k_) + 1);
    }

    void r(std::string_view s) {
        if (m() > 0) setto(s);
    }

    void step1ab() {
        if (b_[static_cast<std::size_t>(k_)] == 's') {
            if (ends("sses")) {
                k_ -= 2;
            } else if (ends("ies")) {
                setto("i");
            } else if (b_[static_cast<std::size_t>(k_ - 1)] != 's') {
                --k_;
            }
            b_.resize(static_cast<std::size_t>(k_) + 1);
        }
        if (ends("eed")) {
            if (m() > 0) {
                --k_;
                b_.resize(static_cast<std::size_t>(k_) + 1);
            }
        } else if ((ends("ed") || ends("ing")) && vowel_in_stem()) {
            k_ = j_;
            b_.resize(static_cast<std::size_t>(k_) + 1);
            if (ends("at")) {
                setto("ate");
            } else if (ends("bl")) {
                setto("ble");
            } else if (ends("iz")) {
                setto("ize");
            } else if (doublec(k_)) {
                --k_;
                const char ch = b_[static_cast<std::size_t>(k_)];
                if (ch == 'l' || ch == 's' || ch == 'z') ++k_;
                b_.resize(static_cast<std::size_t>(k_) + 1);
            } else if (m_at_k() == 1 && cvc(k_)) {
                j_ = k_;
                setto("e");
            }
        }
    }

    int m_at_k() {
        j_ = k_;
        return m();
    }

    void step1c() {
        if (ends("y") && vowel_in_stem()) b_[static_cast<std::size_t>(k_)] = 'i';
    }

    void step2() {
        if (k_ < 1) return;
        switch (b_[static_cast<std::size_t>(k_ - 1)]) {
            case 'a':
                if (ends("ational")) { r("ate"); break; }
                if (ends("tional")) { r("tion"); break; }
                break;
            case 'c':
                if (ends("enci")) { r("ence"); break; }
                if (ends("anci")) { r("ance"); break; }
                break;
            case 'e':
                if (ends("izer")) { r("ize"); break; }
                break;
            case 'l':
                if (ends("bli")) { r("ble"); break; }
                if (ends("alli")) { r("al"); break; }
                if (ends("entli")) { r("ent"); break; }
                if (ends("eli")) { r("e"); break; }
                if (ends("ousli")) { r("ous"); break; }
                break;
            case 'o':
                if (ends("ization")) { r("ize"); break; }
                if (ends("ation")) { r("ate"); break; }
                if (ends("ator")) { r("ate"); break; }
                break;
            case 's':
                if (ends("alism")) { r("al"); break; }
                if (ends("iveness")) { r("ive"); break; }
                if (ends("fulness")) { r("ful"); break; }
                if (ends("ousness")) { r("ous"); break; }
                break;
            case 't':
                if (ends("aliti")) { r("al"); break; }
                if (ends("iviti")) { r("ive"); break; }
                if (ends("biliti")) { r("ble"); break; }
                break;
            case 'g':
                if (ends("logi")) { r("log"); break; }
                break;
            default:
                break;
        }
    }

    void step3() {
        switch (b_[static_cast<std::size_t>(k_)]) {
            case 'e':
                if (ends("icate")) { r("ic"); break; }
                if (ends("ative")) { r(""); break; }
                if (ends("alize")) { r("al"); break; }
                break;
            case 'i':
                if (ends("iciti")) { r("ic"); break; }
                break;
            case 'l':
                if (ends("ical")) { r("ic"); break; }
                if (ends("ful")) { r(""); break; }
                break;
            case 's':
                if (ends("ness")) { r(""); break; }
                break;
            default:
                break;
        }
    }

    void step4() {
        if (k_ < 1) return;
        switch (b_[static_cast<std::size_t>(k_ - 1)]) {
            case 'a':
                if (ends("al")) break;
                return;
            case 'c':
                if (ends("ance")) break;
                if (ends("ence")) break;
                return;
            case 'e':
                if (ends("er")) break;
                return;
            case 'i':
                if (ends("ic")) break;
                return;
            case 'l':
                if (ends("able")) break;
                if (ends("ible")) break;
                return;
            case 'n':
                if (ends("ant")) break;
                if (ends("ement")) break;
                if (ends("ment")) break;
                if (ends("ent")) break;
                return;
            case 'o':
                if (ends("ion") && j_ >= 0 &&
                    (b_[static_cast<std::size_t>(j_)] == 's' || b_[static_cast<std::size_t>(j_)] == 't'))
                    break;
                if (ends("ou")) break;
                return;
            case 's':
                if (ends("ism")) break;
                return;
            case 't':
                if (ends("ate")) break;
                if (ends("iti")) break;
                return;
            case 'u':
                if (ends("ous")) break;
                return;
            case 'v':
                if (ends("ive")) break;
                return;
            case 'z':
                if (ends("ize")) break;
                return;
            default:
                return;
        }
        if (m() > 1) {
            k_ = j_;
            b_.resize(static_cast<std::size_t>(k_) + 1);
        }
    }

    void step5() {
        // The measure for both checks is taken over the stem before any
        // trailing 'e' is dropped, so the buffer is only shrunk at the end.
        j_ = k_;
        if (b_[static_cast<std::size_t>(k_)] == 'e') {
            const int a = m();
            if (a > 1 || (a == 1 && !cvc(k_ - 1))) --k_;
        }
        if (b_[static_cast<std::size_t>(k_)] == 'l' && doublec(k_) && m() > 1) --k_;
        b_.resize(static_cast<std::size_t>(k_) + 1);
    }

    std::string b_;
    int k_ = 0;
    int j_ = 0;
};

}  // namespace

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (const char ch : s) {
        if (is_space(static_cast<unsigned char>(ch))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(ch);
    }
    return out;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::vector<Token> tokenize(std::string_view s) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && !is_token_byte(static_cast<unsigned char>(s[i]))) ++i;
        const std::size_t start = i;
        while (i < s.size() && is_token_byte(static_cast<unsigned char>(s[i]))) ++i;
        if (i > start) out.push_back({to_lower(s.substr(start, i - start)), {start, i}});
    }
    return out;
}

std::vector<std::string> tokenize_words(std::string_view s) {
    std::vector<std::string> out;
    for (auto& t : tokenize(s)) out.push_back(std::move(t.text));
    return out;
}

bool is_stopword(std::string_view lowered_token) { return stopwords().count(lowered_token) > 0; }

std::string porter_stem(std::string_view word) {
    const bool ascii = std::all_of(word.begin(), word.end(), [](char c) {
        return std::islower(static_cast<unsigned char>(c)) != 0;
    });
    if (!ascii) return std::string(word);
    return PorterStemmer(std::string(word)).run();
}

std::vector<std::string> content_terms(std::string_view s) {
    std::vector<std::string> out;
    for (const auto& tok : tokenize(s)) {
        if (is_stopword(tok.text)) continue;
        out.push_back(porter_stem(tok.text));
    }
    return out;
}

std::set<std::string> content_term_set(std::string_view s) {
    const auto terms = content_terms(s);
    return {terms.begin(), terms.end()};
}

std::vector<Span> split_sentences(std::string_view s) {
    std::vector<Span> out;
    auto push = [&](std::size_t b, std::size_t e) {
        while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
        while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
        if (e > b) out.push_back({b, e});
    };
    std::size_t start = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char ch = s[i];
        if (ch == '\n' && i + 1 < s.size() && s[i + 1] == '\n') {
            push(start, i);
            start = i + 1;
            continue;
        }
        if (ch != '.' && ch != '!' && ch != '?') continue;
        // Swallow runs like "?!" or "..." before deciding.
        std::size_t j = i + 1;
        while (j < s.size() && (s[j] == '.' || s[j] == '!' || s[j] == '?')) ++j;
        if (j == s.size() || is_space(static_cast<unsigned char>(s[j]))) {
            push(start, j);
            start = j;
        }
        i = j - 1;
    }
    push(start, s.size());
    return out;
}

std::size_t utf8_floor(std::string_view s, std::size_t pos) noexcept {
    if (pos >= s.size()) return s.size();
    while (pos > 0 && (static_cast<unsigned char>(s[pos]) & 0xC0) == 0x80) --pos;
    return pos;
}

}  // namespace evsynth::text
