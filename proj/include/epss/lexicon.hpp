#pragma once

#include <string>
#include <vector>

namespace epss {

/// Lexicon of normalized multiword expressions matched against vulnerability
/// descriptions. Matching is case-insensitive on token sequences: an alias
/// matches when its tokens appear consecutively in the tokenized description,
/// so "web" does not match inside "website".
class Lexicon {
public:
    /// Bundled default: the published example tags.
    static Lexicon bundled();

    /// Config format: one tag per line, "tag" or "tag: alias1|alias2".
    /// Lines starting with '#' and blank lines are ignored.
    static Lexicon from_config(const std::string& content);

    void add(const std::string& tag, const std::vector<std::string>& aliases);

    /// Tags whose tag text or any alias matches the description. Sorted, unique.
    std::vector<std::string> extract(const std::string& description) const;

    std::size_t size() const { return entries_.size(); }
    std::vector<std::string> tags() const;

private:
    struct Entry {
        std::string tag;
        std::vector<std::vector<std::string>> alias_tokens;  // includes the tag itself
    };
    std::vector<Entry> entries_;
};

/// Lowercased alphanumeric tokens of a text.
std::vector<std::string> tokenize_lower(const std::string& text);

}  // namespace epss
