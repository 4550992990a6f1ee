#include "epss/lexicon.hpp"

#include <algorithm>
#include <cctype>

#include "epss/io_util.hpp"

namespace epss {

std::vector<std::string> tokenize_lower(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            current += static_cast<char>(std::tolower(c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

Lexicon Lexicon::bundled() {
    Lexicon lex;
    lex.add("remote attacker", {"remote attackers"});
    lex.add("web", {});
    lex.add("code execution", {"execute arbitrary code", "arbitrary code execution"});
    lex.add("denial of service", {"dos"});
    lex.add("authenticated", {});
    return lex;
}

Lexicon Lexicon::from_config(const std::string& content) {
    Lexicon lex;
    for (const std::string& raw : split_lines(content)) {
        std::string line = raw;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back())))
            line.pop_back();
        if (line.empty()) continue;
        std::string tag = line;
        std::vector<std::string> aliases;
        if (auto colon = line.find(':'); colon != std::string::npos) {
            tag = line.substr(0, colon);
            std::string rest = line.substr(colon + 1);
            std::size_t pos = 0;
            while (pos <= rest.size()) {
                std::size_t bar = rest.find('|', pos);
                std::string alias =
                    bar == std::string::npos ? rest.substr(pos) : rest.substr(pos, bar - pos);
                if (!tokenize_lower(alias).empty()) aliases.push_back(alias);
                if (bar == std::string::npos) break;
                pos = bar + 1;
            }
        }
        while (!tag.empty() && std::isspace(static_cast<unsigned char>(tag.back()))) tag.pop_back();
        while (!tag.empty() && std::isspace(static_cast<unsigned char>(tag.front())))
            tag.erase(tag.begin());
        if (!tag.empty()) lex.add(tag, aliases);
    }
    return lex;
}

void Lexicon::add(const std::string& tag, const std::vector<std::string>& aliases) {
    Entry entry;
    entry.tag = tag;
    entry.alias_tokens.push_back(tokenize_lower(tag));
    for (const std::string& alias : aliases) entry.alias_tokens.push_back(tokenize_lower(alias));
    entries_.push_back(std::move(entry));
}

std::vector<std::string> Lexicon::extract(const std::string& description) const {
    std::vector<std::string> tokens = tokenize_lower(description);
    std::vector<std::string> found;
    for (const Entry& entry : entries_) {
        bool matched = false;
        for (const auto& alias : entry.alias_tokens) {
            if (alias.empty() || alias.size() > tokens.size()) continue;
            for (std::size_t i = 0; i + alias.size() <= tokens.size() && !matched; ++i) {
                matched = std::equal(alias.begin(), alias.end(), tokens.begin() + i);
            }
            if (matched) break;
        }
        if (matched) found.push_back(entry.tag);
    }
    std::sort(found.begin(), found.end());
    found.erase(std::unique(found.begin(), found.end()), found.end());
    return found;
}

std::vector<std::string> Lexicon::tags() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const Entry& e : entries_) out.push_back(e.tag);
    return out;
}

}  // namespace epss
