#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace cot2::tasks {

/// Ordered token names with dense indices [0, size()).
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> names);

  /// Appends a token; throws VocabularyError on duplicates.
  std::size_t add(const std::string& name);

  std::size_t index(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::string& name(std::size_t index) const;
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.names_ == b.names_;
  }

 private:
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> lookup_;
};

}  // namespace cot2::tasks
