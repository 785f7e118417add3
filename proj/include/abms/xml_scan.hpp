#pragma once

// Position-recording XML scanner. It checks well-formedness (balanced and
// matching tags, quoted attributes, terminated comments/CDATA/PIs, valid
// entity references) and reports every element with the byte offsets of its
// tags and content, so callers can rewrite element text in place without
// re-serializing the document. Several top-level elements are accepted so
// that bare configuration fragments parse.

#include <algorithm>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "abms/errors.hpp"
#include "abms/text.hpp"

namespace abms::xml {

struct Element {
    std::string name;
    std::size_t start = 0;         ///< '<' of the start tag
    std::size_t content_begin = 0; ///< first byte after the start tag
    std::size_t content_end = 0;   ///< '<' of the end tag
    std::size_t end = 0;           ///< first byte after the end tag
    int parent = -1;
    std::vector<int> children;
};

namespace detail {

inline bool name_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c == ':' ||
           static_cast<unsigned char>(c) >= 0x80;
}
inline bool name_char(char c) { return name_start(c) || (c >= '0' && c <= '9') || c == '-' || c == '.'; }

class Scanner {
public:
    explicit Scanner(std::string_view doc) : doc_(doc) {}

    std::vector<Element> run() {
        while (pos_ < doc_.size()) {
            if (doc_[pos_] != '<') {
                text_run();
            } else if (starts("<?")) {
                skip_past("?>", "processing instruction");
            } else if (starts("<!--")) {
                skip_past("-->", "comment");
            } else if (starts("<![CDATA[")) {
                if (stack_.empty()) fail("CDATA outside any element");
                skip_past("]]>", "CDATA section");
            } else if (starts("<!")) {
                if (!stack_.empty()) fail("declaration inside element");
                declaration();
            } else if (starts("</")) {
                end_tag();
            } else {
                start_tag();
            }
        }
        if (!stack_.empty()) {
            pos_ = elements_[static_cast<std::size_t>(stack_.back())].start;
            fail("unclosed element <" + elements_[static_cast<std::size_t>(stack_.back())].name + ">");
        }
        return std::move(elements_);
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        const auto line = 1 + std::count(doc_.begin(), doc_.begin() + static_cast<std::ptrdiff_t>(pos_), '\n');
        throw ParseError("xml line " + std::to_string(line) + ": " + what);
    }

    bool starts(std::string_view s) const { return doc_.substr(pos_, s.size()) == s; }

    void skip_past(std::string_view terminator, const char* what) {
        const auto at = doc_.find(terminator, pos_);
        if (at == std::string_view::npos) fail(std::string("unterminated ") + what);
        pos_ = at + terminator.size();
    }

    void skip_ws() {
        while (pos_ < doc_.size() && text::is_space(doc_[pos_])) ++pos_;
    }

    std::string_view name() {
        const auto begin = pos_;
        if (pos_ >= doc_.size() || !name_start(doc_[pos_])) fail("expected a name");
        while (pos_ < doc_.size() && name_char(doc_[pos_])) ++pos_;
        return doc_.substr(begin, pos_ - begin);
    }

    void check_entities(std::string_view run) {
        for (auto amp = run.find('&'); amp != std::string_view::npos; amp = run.find('&', amp + 1)) {
            const auto semi = run.find(';', amp);
            if (semi == std::string_view::npos || semi == amp + 1) fail("bad entity reference");
            std::string_view ref = run.substr(amp + 1, semi - amp - 1);
            if (ref.front() == '#') {
                ref.remove_prefix(1);
                const bool hex = !ref.empty() && ref.front() == 'x';
                if (hex) ref.remove_prefix(1);
                if (ref.empty()) fail("bad character reference");
                for (char c : ref) {
                    const bool ok = (c >= '0' && c <= '9') || (hex && ((c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F')));
                    if (!ok) fail("bad character reference");
                }
            } else if (!name_start(ref.front()) || !std::all_of(ref.begin(), ref.end(), name_char)) {
                fail("bad entity reference");
            }
        }
    }

    void text_run() {
        const auto lt = doc_.find('<', pos_);
        const auto stop = lt == std::string_view::npos ? doc_.size() : lt;
        const std::string_view run = doc_.substr(pos_, stop - pos_);
        if (stack_.empty() && !text::trim(run).empty()) fail("text outside any element");
        check_entities(run);
        pos_ = stop;
    }

    void declaration() {
        int bracket = 0;
        for (++pos_; pos_ < doc_.size(); ++pos_) {
            const char c = doc_[pos_];
            if (c == '[') ++bracket;
            else if (c == ']') --bracket;
            else if (c == '>' && bracket == 0) {
                ++pos_;
                return;
            }
        }
        fail("unterminated declaration");
    }

    void start_tag() {
        Element el;
        el.start = pos_;
        ++pos_;
        el.name = name();
        bool self_closing = false;
        for (;;) {
            const auto before = pos_;
            skip_ws();
            if (pos_ >= doc_.size()) fail("unterminated start tag <" + el.name + ">");
            if (doc_[pos_] == '>') {
                ++pos_;
                break;
            }
            if (starts("/>")) {
                pos_ += 2;
                self_closing = true;
                break;
            }
            if (pos_ == before) fail("expected whitespace before attribute");
            name();
            skip_ws();
            if (pos_ >= doc_.size() || doc_[pos_] != '=') fail("expected '=' after attribute name");
            ++pos_;
            skip_ws();
            if (pos_ >= doc_.size() || (doc_[pos_] != '"' && doc_[pos_] != '\'')) fail("unquoted attribute value");
            const char quote = doc_[pos_++];
            const auto close = doc_.find(quote, pos_);
            if (close == std::string_view::npos) fail("unterminated attribute value");
            const std::string_view value = doc_.substr(pos_, close - pos_);
            if (value.find('<') != std::string_view::npos) fail("'<' in attribute value");
            check_entities(value);
            pos_ = close + 1;
        }
        el.content_begin = pos_;
        el.parent = stack_.empty() ? -1 : stack_.back();
        const int id = static_cast<int>(elements_.size());
        if (el.parent >= 0) elements_[static_cast<std::size_t>(el.parent)].children.push_back(id);
        if (self_closing) {
            el.content_end = pos_;
            el.end = pos_;
        }
        elements_.push_back(std::move(el));
        if (!self_closing) stack_.push_back(id);
    }

    void end_tag() {
        const auto tag_start = pos_;
        pos_ += 2;
        const std::string_view n = name();
        skip_ws();
        if (pos_ >= doc_.size() || doc_[pos_] != '>') fail("unterminated end tag");
        ++pos_;
        if (stack_.empty()) fail("unexpected </" + std::string(n) + ">");
        Element& open = elements_[static_cast<std::size_t>(stack_.back())];
        if (open.name != n) fail("</" + std::string(n) + "> closes <" + open.name + ">");
        open.content_end = tag_start;
        open.end = pos_;
        stack_.pop_back();
    }

    std::string_view doc_;
    std::size_t pos_ = 0;
    std::vector<Element> elements_;
    std::vector<int> stack_;
};

} // namespace detail

/// Elements in document (start-tag) order. Throws ParseError when the input
/// is not well-formed.
inline std::vector<Element> scan(std::string_view doc) { return detail::Scanner(doc).run(); }

/// Character data of an element's content: CDATA sections verbatim, other
/// text with the predefined and numeric entities decoded. Child markup is
/// skipped.
inline std::string text_content(std::string_view content) {
    std::string out;
    std::size_t i = 0;
    while (i < content.size()) {
        if (content.substr(i, 9) == "<![CDATA[") {
            const auto close = content.find("]]>", i + 9);
            out.append(content.substr(i + 9, close - i - 9));
            i = close + 3;
        } else if (content.substr(i, 4) == "<!--") {
            i = content.find("-->", i + 4) + 3;
        } else if (content[i] == '<') {
            i = content.find('>', i) + 1;
        } else if (content[i] == '&') {
            const auto semi = content.find(';', i);
            const std::string_view ref = content.substr(i + 1, semi - i - 1);
            if (ref == "lt") out += '<';
            else if (ref == "gt") out += '>';
            else if (ref == "amp") out += '&';
            else if (ref == "quot") out += '"';
            else if (ref == "apos") out += '\'';
            else if (!ref.empty() && ref.front() == '#') {
                const bool hex = ref.size() > 1 && ref[1] == 'x';
                const unsigned long cp = std::stoul(std::string(ref.substr(hex ? 2 : 1)), nullptr, hex ? 16 : 10);
                if (cp < 0x80) out += static_cast<char>(cp);
                else out.append(content.substr(i, semi - i + 1));
            } else {
                out.append(content.substr(i, semi - i + 1));
            }
            i = semi + 1;
        } else {
            out += content[i++];
        }
    }
    return out;
}

} // namespace abms::xml
