#include "cot2/tasks/vocabulary.hpp"

#include "cot2/common/error.hpp"

namespace cot2::tasks {

Vocabulary::Vocabulary(std::vector<std::string> names) {
  for (const auto& n : names) {
    add(n);
  }
}

std::size_t Vocabulary::add(const std::string& name) {
  if (lookup_.contains(name)) {
    throw VocabularyError("vocabulary: duplicate token '" + name + "'");
  }
  lookup_.emplace(name, names_.size());
  names_.push_back(name);
  return names_.size() - 1;
}

std::size_t Vocabulary::index(const std::string& name) const {
  const auto it = lookup_.find(name);
  if (it == lookup_.end()) {
    throw VocabularyError("vocabulary: unknown token '" + name + "'");
  }
  return it->second;
}

bool Vocabulary::contains(const std::string& name) const {
  return lookup_.contains(name);
}

const std::string& Vocabulary::name(std::size_t index) const {
  if (index >= names_.size()) {
    throw VocabularyError("vocabulary: index " + std::to_string(index) +
                          " outside [0, " + std::to_string(names_.size()) + ")");
  }
  return names_[index];
}

}  // namespace cot2::tasks
